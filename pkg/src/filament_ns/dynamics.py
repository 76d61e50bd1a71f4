"""Time evolution: linear semigroup, mild-solution stepper, per-filament parts.

The vorticity obeys, in conservative form,

    d_t omega + d_r(u^r omega) + d_z(u^z omega) = L omega,
    L = d_rr + d_zz + (1/r) d_r - 1/r^2,       omega(r=0) = 0,

which is the advection + stretching combination written as a pure flux
divergence (the axisymmetric incompressibility d_r u^r + u^r/r + d_z u^z = 0
absorbs the stretching term -u^r omega / r into div(u omega)).  Each filament
part omega_i is advanced by the same equation with the SHARED velocity
u = BS[sum omega_j], so the parts sum to a solution of the full equation by
linearity.

Advection is MUSCL-limited (monotonized-central slopes) with upwind fluxes,
advanced by SSP-RK2; diffusion is either folded into the explicit stages
(CFL-limited) or applied as Strang-split Crank-Nicolson ADI half-steps.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import solve_banded

from .biot_savart import solve_velocity
from .errors import InvalidParameter, StepRejected
from .fields import (FilamentConfig, Grid, ScalarField, VectorField,
                     auto_grid, gaussian_vortex, lp_norm)
from .ledger import RunLedger

DIFFUSION_MODES = ("explicit", "implicit-splitting")

# state invariant tolerances, checked after every accepted step
POSITIVITY_TOL = 1e-12          # min omega >= -tol * max |omega|
MASS_BOUND_TOL = 1e-3           # ||omega||_1 <= sum alpha * (1 + tol)
PART_SUM_TOL = 1e-8             # relative L1 gap between sum of parts and total
MAX_DT_RETRIES = 5


@dataclass(frozen=True)
class SolverParams:
    """Time-integration controls.

    dt_growth caps dt at dt_growth * t in implicit-splitting mode, where no
    stability limit binds; it is an accuracy control for the self-similar
    dynamics (relative per-step truncation ~ (dt/t)^2).
    """

    t_start: float
    t_end: float
    cfl_safety: float = 0.4
    diffusion_mode: str = "explicit"
    bs_tol: float = 1e-10
    dt_growth: float = 0.05

    def __post_init__(self):
        if not 0.0 < self.t_start < self.t_end:
            raise InvalidParameter(f"need 0 < t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if not 0.0 < self.cfl_safety < 1.0:
            raise InvalidParameter(f"cfl_safety must lie in (0,1), got {self.cfl_safety}")
        if self.diffusion_mode not in DIFFUSION_MODES:
            raise InvalidParameter(f"unknown diffusion mode {self.diffusion_mode!r}")
        if not 0.0 < self.bs_tol <= 1e-4:
            raise InvalidParameter(f"bs_tol must lie in (0, 1e-4], got {self.bs_tol}")
        if not 0.0 < self.dt_growth <= 0.5:
            raise InvalidParameter(f"dt_growth must lie in (0, 0.5], got {self.dt_growth}")


# ---------------------------------------------------------------------------
# diffusion operator


class DiffusionOperator:
    """L = d_rr + d_zz + (1/r) d_r - 1/r^2 with omega = 0 on all faces.

    The axis ghost coefficient 1/h^2 - 1/(2 r_0 h) vanishes identically for
    r_0 = h/2, so the axis condition costs nothing; outer faces use odd
    reflection.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        h_r, h_z = grid.h_r, grid.h_z
        rc = grid.r_centers()
        self.sub = 1.0 / h_r**2 - 1.0 / (2.0 * rc * h_r)   # coeff of f_{i-1}
        self.sup = 1.0 / h_r**2 + 1.0 / (2.0 * rc * h_r)   # coeff of f_{i+1}
        diag = -2.0 / h_r**2 - 1.0 / rc**2
        diag[0] -= self.sub[0]
        diag[-1] -= self.sup[-1]
        self.diag_r = diag

    def apply_radial(self, f: np.ndarray) -> np.ndarray:
        out = self.diag_r[:, None] * f
        out[1:] += self.sub[1:, None] * f[:-1]
        out[:-1] += self.sup[:-1, None] * f[1:]
        return out

    def apply_axial(self, f: np.ndarray) -> np.ndarray:
        h2 = self.grid.h_z**2
        out = -2.0 * f / h2
        out[:, 1:] += f[:, :-1] / h2
        out[:, :-1] += f[:, 1:] / h2
        out[:, 0] -= f[:, 0] / h2
        out[:, -1] -= f[:, -1] / h2
        return out

    def apply(self, f: np.ndarray) -> np.ndarray:
        return self.apply_radial(f) + self.apply_axial(f)

    def explicit_limit(self, cfl_safety: float) -> float:
        h2 = min(self.grid.h_r, self.grid.h_z) ** 2
        return cfl_safety * h2 / 4.0

    def crank_nicolson_adi(self, f: np.ndarray, dt: float) -> np.ndarray:
        """Peaceman-Rachford split: radial implicit, then axial implicit."""
        g = self.grid
        th = 0.5 * dt
        rhs = f + th * self.apply_axial(f)
        ab = np.zeros((3, g.n_r))
        ab[0, 1:] = -th * self.sup[:-1]
        ab[1, :] = 1.0 - th * self.diag_r
        ab[2, :-1] = -th * self.sub[1:]
        f_star = solve_banded((1, 1), ab, rhs)
        rhs = f_star + th * self.apply_radial(f_star)
        h2 = g.h_z**2
        abz = np.zeros((3, g.n_z))
        abz[0, 1:] = -th / h2
        abz[1, :] = 1.0 + 2.0 * th / h2
        abz[1, 0] += th / h2
        abz[1, -1] += th / h2
        abz[2, :-1] = -th / h2
        return solve_banded((1, 1), abz, rhs.T).T


_diffusion_cache: dict = {}


def _get_diffusion(grid: Grid) -> DiffusionOperator:
    if grid not in _diffusion_cache:
        _diffusion_cache.clear()
        _diffusion_cache[grid] = DiffusionOperator(grid)
    return _diffusion_cache[grid]


def linear_step(f: ScalarField, dt: float, mode: str = "explicit",
                cfl_safety: float = 0.4) -> ScalarField:
    """One step of the linearized evolution d_t f = L f, f(r=0) = 0."""
    if dt <= 0.0:
        raise InvalidParameter(f"need dt > 0, got {dt}")
    if mode not in DIFFUSION_MODES:
        raise InvalidParameter(f"unknown diffusion mode {mode!r}")
    op = _get_diffusion(f.grid)
    if mode == "explicit":
        limit = op.explicit_limit(cfl_safety)
        if dt > limit * (1.0 + 1e-12):
            raise InvalidParameter(
                f"explicit diffusion needs dt <= {limit:.3e}, got {dt:.3e}")
        v = f.values
        k1 = v + dt * op.apply(v)
        out = 0.5 * (v + k1 + dt * op.apply(k1))
    else:
        out = op.crank_nicolson_adi(f.values, dt)
    return ScalarField(f.grid, out)


# ---------------------------------------------------------------------------
# advection (conservative MUSCL)


def _mc_slopes(f: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Monotonized-central limited slopes; zero at the boundary cells."""
    d = np.diff(f, axis=axis) / h
    out = np.zeros_like(f)
    if axis == 0:
        a, b = d[:-1, :], d[1:, :]
    else:
        a, b = d[:, :-1], d[:, 1:]
    s = np.where(a * b > 0.0,
                 np.sign(a) * np.minimum(np.minimum(2.0 * np.abs(a), 2.0 * np.abs(b)),
                                         0.5 * np.abs(a + b)),
                 0.0)
    if axis == 0:
        out[1:-1, :] = s
    else:
        out[:, 1:-1] = s
    return out


def advection_rhs(f: np.ndarray, u: VectorField) -> np.ndarray:
    """-d_r(u^r f) - d_z(u^z f) with MUSCL-upwind face fluxes.

    Face velocities average the adjacent cell centers; the axis face carries
    exactly zero flux (u^r(0, z) = 0), outer faces are open with zero-valued
    exterior states.
    """
    g = u.grid
    h_r, h_z = g.h_r, g.h_z
    ur, uz = u.u_r.values, u.u_z.values
    n_r, n_z = f.shape

    sl = _mc_slopes(f, 0, h_r)
    f_lo = f - 0.5 * h_r * sl     # state at the lower face of each cell
    f_hi = f + 0.5 * h_r * sl     # state at the upper face of each cell
    uf = 0.5 * (ur[:-1, :] + ur[1:, :])
    flux = np.where(uf >= 0.0, uf * f_hi[:-1, :], uf * f_lo[1:, :])
    rhs = np.zeros_like(f)
    rhs[:-1, :] -= flux / h_r
    rhs[1:, :] += flux / h_r
    # outer r face: outflow only
    uf_out = ur[-1, :]
    rhs[-1, :] -= np.where(uf_out >= 0.0, uf_out * f_hi[-1, :], 0.0) / h_r

    sl = _mc_slopes(f, 1, h_z)
    f_lo = f - 0.5 * h_z * sl
    f_hi = f + 0.5 * h_z * sl
    vf = 0.5 * (uz[:, :-1] + uz[:, 1:])
    flux = np.where(vf >= 0.0, vf * f_hi[:, :-1], vf * f_lo[:, 1:])
    rhs[:, :-1] -= flux / h_z
    rhs[:, 1:] += flux / h_z
    vf_lo = uz[:, 0]
    vf_hi = uz[:, -1]
    rhs[:, 0] += np.where(vf_lo <= 0.0, vf_lo * f_lo[:, 0], 0.0) / h_z
    rhs[:, -1] -= np.where(vf_hi >= 0.0, vf_hi * f_hi[:, -1], 0.0) / h_z
    return rhs


def advection_cfl_limit(u: VectorField, cfl_safety: float) -> float:
    g = u.grid
    umax = max(float(np.abs(u.u_r.values).max()), 1e-300)
    vmax = max(float(np.abs(u.u_z.values).max()), 1e-300)
    return cfl_safety * min(g.h_r / umax, g.h_z / vmax)


def advect_diffuse_mild(f: ScalarField, u: VectorField, dt: float,
                        mode: str = "explicit", cfl_safety: float = 0.4,
                        diffusion: bool = True) -> ScalarField:
    """One step of d_t f + div(u f) = L f at frozen velocity u.

    explicit: SSP-RK2 with diffusion folded into both stages.
    implicit-splitting: Strang arrangement D(dt/2) A(dt) D(dt/2) with
    Crank-Nicolson ADI diffusion and SSP-RK2 advection.

    diffusion=False drops L entirely (test hook for pure-advection checks).
    """
    if dt <= 0.0:
        raise InvalidParameter(f"need dt > 0, got {dt}")
    if mode not in DIFFUSION_MODES:
        raise InvalidParameter(f"unknown diffusion mode {mode!r}")
    if f.grid != u.grid:
        raise InvalidParameter("field and velocity grids differ")
    op = _get_diffusion(f.grid)
    adv_limit = advection_cfl_limit(u, cfl_safety)
    if dt > adv_limit * (1.0 + 1e-12):
        raise InvalidParameter(
            f"advection CFL needs dt <= {adv_limit:.3e}, got {dt:.3e}")

    if mode == "explicit":
        if diffusion and dt > op.explicit_limit(cfl_safety) * (1.0 + 1e-12):
            raise InvalidParameter(
                f"explicit diffusion needs dt <= {op.explicit_limit(cfl_safety):.3e}, "
                f"got {dt:.3e}")
        def rhs(v):
            out = advection_rhs(v, u)
            if diffusion:
                out += op.apply(v)
            return out
        v = f.values
        k1 = v + dt * rhs(v)
        out = 0.5 * (v + k1 + dt * rhs(k1))
        return ScalarField(f.grid, out)

    v = f.values
    if diffusion:
        v = op.crank_nicolson_adi(v, 0.5 * dt)
    k1 = v + dt * advection_rhs(v, u)
    v = 0.5 * (v + k1 + dt * advection_rhs(k1, u))
    if diffusion:
        v = op.crank_nicolson_adi(v, 0.5 * dt)
    return ScalarField(f.grid, v)


# ---------------------------------------------------------------------------
# simulation state


@dataclass
class SimulationState:
    """Fields of one run at time t; omega_total is always the sum of parts."""

    t: float
    omega_total: ScalarField
    omega_parts: list
    velocity: VectorField
    params: SolverParams
    config: FilamentConfig
    ledger: RunLedger
    bs_iters: int = 0
    div_max: float = 0.0

    @property
    def grid(self) -> Grid:
        return self.omega_total.grid


def initialize_filaments(config: FilamentConfig, t0: float,
                         params: SolverParams | None = None,
                         grid: Grid | None = None,
                         ledger: RunLedger | None = None) -> SimulationState:
    """Gaussian parts alpha_i/(4 pi t0) exp(-|x-x_i|^2/4t0) at start time t0.

    Starting from the sharp Gaussian instead of the exact short-time solution
    introduces an O(sqrt(t0)/r_i) discrepancy, below the sqrt(t)|ln t|
    resolution of the diagnostics; recorded in the ledger.
    """
    if params is None:
        params = SolverParams(t_start=t0, t_end=400.0 * t0,
                              diffusion_mode="implicit-splitting")
    d = config.d
    if np.sqrt(t0) > d / 8.0:
        raise InvalidParameter(
            f"need sqrt(t0) <= d/8 = {d / 8.0:.4g}, got sqrt(t0) = {np.sqrt(t0):.4g}")
    if grid is None:
        grid = auto_grid(config, params.t_end, t0)
    h = max(grid.h_r, grid.h_z)
    if np.sqrt(4.0 * t0) < 4.0 * h * (1.0 - 1e-12):
        raise InvalidParameter(
            f"t0 = {t0:.4g} unresolvable: need max cell size <= sqrt(4 t0)/4 = "
            f"{np.sqrt(4.0 * t0) / 4.0:.4g}, got {h:.4g}")
    parts = [gaussian_vortex(grid, f.alpha, f.r_center, f.z_center, t0)
             for f in config.filaments]
    total = ScalarField(grid, sum(p.values for p in parts))
    velocity, report = solve_velocity(total, params.bs_tol)
    if ledger is None:
        ledger = RunLedger()
    ledger.solver = {
        "t_start": params.t_start, "t_end": params.t_end,
        "cfl_safety": params.cfl_safety, "diffusion_mode": params.diffusion_mode,
        "bs_tol": params.bs_tol, "dt_growth": params.dt_growth,
        "grid": {"r_min": grid.r_min, "r_max": grid.r_max, "z_min": grid.z_min,
                 "z_max": grid.z_max, "n_r": grid.n_r, "n_z": grid.n_z},
        "t0": t0,
        "init": "gaussian-profile-at-t0",
    }
    state = SimulationState(t=t0, omega_total=total, omega_parts=parts,
                            velocity=velocity, params=params, config=config,
                            ledger=ledger, bs_iters=report.iterations,
                            div_max=report.divergence_max)
    _append_step_diagnostics(state, dt=0.0)
    return state


def stable_dt(state: SimulationState) -> float:
    """Largest admissible dt at the current state (before checkpoint clipping)."""
    p = state.params
    dt = advection_cfl_limit(state.velocity, p.cfl_safety)
    if p.diffusion_mode == "explicit":
        dt = min(dt, _get_diffusion(state.grid).explicit_limit(p.cfl_safety))
    else:
        dt = min(dt, p.dt_growth * state.t)
    return dt


def _append_step_diagnostics(state: SimulationState, dt: float) -> None:
    total = state.omega_total
    row = {
        "t": state.t,
        "l1_total": lp_norm(total, 1),
        "linf_total": lp_norm(total, np.inf),
        "pos_min": float(total.values.min()),
        "div_max": state.div_max,
        "dt": dt,
        "bs_iters": state.bs_iters,
    }
    for i, part in enumerate(state.omega_parts):
        row[f"l1_part_{i}"] = lp_norm(part, 1)
    state.ledger.append_diagnostics(row)


def _invariant_breach(state_t, parts, total, config) -> str | None:
    v = total.values
    linf = float(np.abs(v).max())
    if float(v.min()) < -POSITIVITY_TOL * linf:
        return (f"positivity: min omega = {v.min():.3e} < "
                f"-{POSITIVITY_TOL:.0e} * {linf:.3e}")
    l1 = float(np.abs(v).sum()) * total.grid.cell_area
    budget = config.total_strength * (1.0 + MASS_BOUND_TOL)
    if l1 > budget:
        return f"L1 bound: ||omega||_1 = {l1:.6e} > {budget:.6e}"
    gap = np.abs(sum(p.values for p in parts) - v).sum() * total.grid.cell_area
    if l1 > 0.0 and gap / l1 > PART_SUM_TOL:
        return f"part-sum identity: relative gap {gap / l1:.3e}"
    return None


def _attempt_step(state: SimulationState, dt: float):
    """One Strang / SSP-RK2 step of every part with shared per-stage velocity."""
    p = state.params
    op = _get_diffusion(state.grid)
    explicit = p.diffusion_mode == "explicit"
    parts = [part.values for part in state.omega_parts]

    if explicit:
        u1 = state.velocity
        def rhs(v, u):
            return advection_rhs(v, u) + op.apply(v)
        stage1 = [v + dt * rhs(v, u1) for v in parts]
        total1 = ScalarField(state.grid, sum(stage1))
        u2, rep2 = solve_velocity(total1, p.bs_tol)
        new_parts = [0.5 * (v + s + dt * rhs(s, u2))
                     for v, s in zip(parts, stage1)]
        bs_iters = rep2.iterations
    else:
        half = [op.crank_nicolson_adi(v, 0.5 * dt) for v in parts]
        u1, rep1 = solve_velocity(ScalarField(state.grid, sum(half)), p.bs_tol)
        stage1 = [v + dt * advection_rhs(v, u1) for v in half]
        u2, rep2 = solve_velocity(ScalarField(state.grid, sum(stage1)), p.bs_tol)
        advected = [0.5 * (v + s + dt * advection_rhs(s, u2))
                    for v, s in zip(half, stage1)]
        new_parts = [op.crank_nicolson_adi(v, 0.5 * dt) for v in advected]
        bs_iters = rep1.iterations + rep2.iterations

    new_fields = [ScalarField(state.grid, v) for v in new_parts]
    total = ScalarField(state.grid, sum(v for v in new_parts))
    breach = _invariant_breach(state.t + dt, new_fields, total, state.config)
    return new_fields, total, breach, bs_iters


def step(state: SimulationState, dt: float) -> SimulationState:
    """Advance one step; on invariant breach, halve dt and retry (up to 5).

    Returns a new state at t + dt_used (dt_used <= dt after retries); the
    stored velocity is re-solved on the accepted total so that
    state.velocity == BS[state.omega_total] always holds.
    """
    if dt <= 0.0:
        raise InvalidParameter(f"need dt > 0, got {dt}")
    limit = stable_dt(state)
    if dt > limit * (1.0 + 1e-9):
        raise InvalidParameter(f"dt = {dt:.3e} exceeds stability limit {limit:.3e}")

    attempt_dt = dt
    for attempt in range(MAX_DT_RETRIES + 1):
        new_parts, total, breach, bs_iters = _attempt_step(state, attempt_dt)
        if breach is None:
            velocity, report = solve_velocity(total, state.params.bs_tol)
            new_state = replace(
                state, t=state.t + attempt_dt, omega_total=total,
                omega_parts=new_parts, velocity=velocity,
                bs_iters=bs_iters + report.iterations,
                div_max=report.divergence_max)
            _append_step_diagnostics(new_state, dt=attempt_dt)
            if attempt:
                state.ledger.flag(
                    f"step at t={state.t:.6e} accepted after {attempt} dt halvings")
            return new_state
        attempt_dt *= 0.5
    raise StepRejected(
        f"invariant breach persisted through {MAX_DT_RETRIES} dt halvings at "
        f"t = {state.t:.6e}: {breach}",
        diagnostics={"t": state.t, "dt": dt, "breach": breach})


def evolve_to(state: SimulationState, times, on_checkpoint=None) -> SimulationState:
    """March the state through the sorted checkpoint times.

    on_checkpoint(state) fires exactly at each requested time (dt is clipped
    to land on them).  Returns the state at the final time.
    """
    targets = sorted(float(t) for t in times)
    if targets and targets[0] < state.t - 1e-15:
        raise InvalidParameter(f"checkpoint {targets[0]} lies before t = {state.t}")
    for target in targets:
        while state.t < target * (1.0 - 1e-14):
            dt = min(stable_dt(state), target - state.t)
            state = step(state, dt)
        if on_checkpoint is not None:
            on_checkpoint(state)
    return state
