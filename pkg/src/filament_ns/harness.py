"""Experiment drivers: the short-time asymptotics sweep, the two-filament
interaction sweep, the two-solution contraction probe, and reporting.

Every driver returns a populated RunLedger (plus its headline numbers); the
ledger serializes to report.json and reloads bit-exactly.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .biot_savart import solve_velocity
from .config import RunConfig
from .dynamics import (SimulationState, initialize_filaments, stable_dt, step)
from .errors import InvalidParameter, ProbeRegimeBreach
from .fields import FrameGrid, ScalarField, lp_norm, oseen_profile
from .ledger import RunLedger
from .selfsim import (RescaledFrame, background_f0, difference_energies,
                      energies, l1_bridge_bound, oseen_distance, rescale)

# smallest frame extent still worth an L1 diagnostic (Gaussian tail e^{-ext^2/4})
MIN_DIAGNOSTIC_EXTENT = 4.0

# calibration headroom for the per-filament Gaussian envelope constant
ENVELOPE_HEADROOM = 1.2

# part values below this fraction of the part maximum are numerical noise and
# excluded from the envelope ratio (the weight e^{|x|^2/8t} would amplify them)
ENVELOPE_MASK = 1e-12

# E^(2) above this triggers the nonlinear-regime diagnostic in the probe
PROBE_ENERGY_CAP = 0.5 / (8.0 * np.pi)


def loglog_fit(x, y):
    """Least-squares slope of log y vs log x; returns (slope, r_squared)."""
    lx = np.log(np.asarray(x, dtype=float))
    ly = np.log(np.asarray(y, dtype=float))
    if len(lx) < 2:
        raise InvalidParameter("need at least two points for a log-log fit")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0.0 else 1.0
    return float(slope), r2


def _diagnostic_extent(state: SimulationState, i: int, extent_cfg: float) -> float:
    fil = state.config.filaments[i]
    dist = state.grid.boundary_distance(fil.r_center, fil.z_center)
    return min(extent_cfg, 0.5 * dist / np.sqrt(state.t) * (1.0 - 1e-9))


def _envelope_constant(state: SimulationState, i: int) -> float:
    """Max over live cells of omega_i * t * exp(|x-x_i|^2 / 8t) (eta = 1/2).

    Live means above ENVELOPE_MASK of the part peak and within 12 sqrt(t) of
    the center; farther cells sit below the scheme's noise floor where the
    exponential weight would only amplify roundoff.
    """
    fil = state.config.filaments[i]
    part = state.omega_parts[i].values
    R, Z = state.grid.meshgrid()
    dist2 = (R - fil.r_center) ** 2 + (Z - fil.z_center) ** 2
    peak = part.max()
    live = (part > ENVELOPE_MASK * peak) & (dist2 <= 144.0 * state.t)
    log_ratio = np.log(part[live] * state.t) + dist2[live] / (8.0 * state.t)
    return float(np.exp(log_ratio.max()))


# ---------------------------------------------------------------------------
# asymptotics sweep


def run_asymptotics(config: RunConfig, t_list=None) -> RunLedger:
    """Evolve from t0 = min(t)/4 and record per-filament Oseen diagnostics.

    Checkpoints with sqrt(t) > d/8 are recorded but flagged and excluded from
    the envelope-ratio and rate fits, as are any whose frame would not fit in
    the grid with a usable extent.
    """
    times = sorted(t_list if t_list is not None else config.times)
    if not times:
        raise InvalidParameter("asymptotics sweep needs checkpoint times")
    d = config.filaments.d
    if np.sqrt(max(times)) > d / 2.0:
        raise InvalidParameter(
            f"checkpoint window violates sqrt(t) <= d/2 = {d / 2.0:.4g}")
    t0 = min(times) / 4.0
    ledger = RunLedger(config=config.document(), input_hash=config.input_hash())
    state = initialize_filaments(config.filaments, t0, config.solver,
                                 grid=config.resolved_grid(t0), ledger=ledger)

    env0 = [_envelope_constant(state, i) for i in range(len(config.filaments))]
    ledger.calibration["envelope_c0"] = env0
    ledger.calibration["envelope_headroom"] = ENVELOPE_HEADROOM

    def checkpoint(state: SimulationState) -> None:
        t = state.t
        strict = np.sqrt(t) <= d / 8.0
        entry = {"t": t, "per_filament": [], "strict_window": bool(strict)}
        if not strict:
            ledger.flag(f"checkpoint t={t:.6e} outside strict window sqrt(t) <= d/8")
        for i in range(len(config.filaments)):
            ext = _diagnostic_extent(state, i, config.frames.extent)
            if ext < MIN_DIAGNOSTIC_EXTENT:
                ledger.flag(f"checkpoint t={t:.6e} filament {i}: frame extent "
                            f"{ext:.2f} too small, diagnostics skipped")
                entry["per_filament"].append(None)
                continue
            frame = rescale(state, i, ext, config.frames.resolution)
            fgrid = frame.f.grid
            f0 = background_f0(t, d, fgrid)
            E_i, calE_i = energies(frame, f0, config.frames.cutoff_radius)
            dist = oseen_distance(frame)
            f0_gap = float(np.abs(f0.values - oseen_profile(ext, fgrid.resolution).values).sum()
                           * fgrid.cell_area)
            bridge = l1_bridge_bound(E_i, f0_gap)
            if dist > bridge * 1.05 + 1e-12:
                ledger.flag(f"t={t:.6e} filament {i}: L1 distance {dist:.3e} "
                            f"exceeds Cauchy-Schwarz bridge {bridge:.3e}")
            rate_ratio = dist / (np.sqrt(t) * abs(np.log(t)))
            env = _envelope_constant(state, i)
            entry["per_filament"].append({
                "E": E_i, "calE": calE_i, "l1_dist": dist, "eps": frame.epsilon,
                "extent": ext, "rate_ratio": rate_ratio,
                "envelope_c": env, "envelope_margin": env / env0[i],
            })
        ledger.append_checkpoint(entry)

    # march through checkpoints (dt clipped to land exactly on each)
    for target in times:
        while state.t < target * (1.0 - 1e-14):
            dt = min(stable_dt(state), target - state.t)
            state = step(state, dt)
        checkpoint(state)

    # fits over strict-window checkpoints with usable frames
    ts, dists, ratios, margins = [], [], [], []
    for entry in ledger.checkpoints:
        if not entry["strict_window"]:
            continue
        for rec in entry["per_filament"]:
            if rec is None:
                continue
            ts.append(entry["t"])
            dists.append(rec["l1_dist"])
            ratios.append(rec["rate_ratio"])
            margins.append(rec["envelope_margin"])
    if len(set(ts)) >= 2:
        slope, r2 = loglog_fit(ts, dists)
        ledger.calibration.update({
            "rate_slope": slope, "rate_r2": r2,
            "envelope_ratio_max": max(ratios), "envelope_ratio_min": min(ratios),
            "envelope_margin_max": max(margins),
        })
    return ledger


# ---------------------------------------------------------------------------
# interaction sweep


def run_interaction_sweep(config: RunConfig, t_list=None):
    """Fit the t-scaling of the cross-induced speed near each filament.

    At each checkpoint, the velocity of the OTHER filament's part alone is
    solved and its speed maximized over the near region |x - x_i| <= d/4,
    then rescaled by sqrt(t)/alpha_other; returns (exponent, r2, ledger).
    """
    if len(config.filaments) != 2:
        raise InvalidParameter("interaction sweep is defined for exactly two filaments")
    times = sorted(t_list if t_list is not None else config.times)
    if len(times) < 2:
        raise InvalidParameter("interaction sweep needs at least two checkpoint times")
    d = config.filaments.d
    t0 = min(times) / 4.0
    ledger = RunLedger(config=config.document(), input_hash=config.input_hash())
    state = initialize_filaments(config.filaments, t0, config.solver,
                                 grid=config.resolved_grid(t0), ledger=ledger)
    R, Z = state.grid.meshgrid()
    series = []

    def checkpoint(state: SimulationState) -> None:
        t = state.t
        m_t = 0.0
        per = []
        for i, fil in enumerate(config.filaments.filaments):
            j = 1 - i
            other = config.filaments.filaments[j]
            u_other, _ = solve_velocity(state.omega_parts[j], state.params.bs_tol)
            near = (R - fil.r_center) ** 2 + (Z - fil.z_center) ** 2 <= (d / 4.0) ** 2
            speed = np.sqrt(u_other.u_r.values[near] ** 2 + u_other.u_z.values[near] ** 2)
            m_i = float(speed.max()) * np.sqrt(t) / other.alpha
            per.append(m_i)
            m_t = max(m_t, m_i)
        series.append((t, m_t))
        ledger.append_checkpoint({"t": t, "cross_speed": m_t, "per_filament": per})

    for target in times:
        while state.t < target * (1.0 - 1e-14):
            dt = min(stable_dt(state), target - state.t)
            state = step(state, dt)
        checkpoint(state)

    ts = [s[0] for s in series]
    ms = [s[1] for s in series]
    exponent, r2 = loglog_fit(ts, ms)
    ledger.calibration.update({"interaction_exponent": exponent, "interaction_r2": r2})
    return exponent, r2, ledger


# ---------------------------------------------------------------------------
# two-solution probe


@dataclass(frozen=True)
class ProbeResult:
    times: tuple
    E_delta: tuple
    E1: tuple
    E2: tuple
    gronwall_exponent: float
    monotone_after: float
    r_squared: float

    def __post_init__(self):
        n = len(self.times)
        if not (len(self.E_delta) == len(self.E1) == len(self.E2) == n):
            raise InvalidParameter("probe series lengths disagree")
        if any(e < 0.0 for e in self.E_delta):
            raise InvalidParameter("difference energy must be nonnegative")


# the probe perturbation: c * R * exp(-|X|^2/2), odd in R hence mean-zero.
# ||R exp(-|X|^2/2)||_{L2(w)}^2 = int R^2 exp(-3|X|^2/4) dX = 8 pi / 9 and
# ||G||_{L2(w)}^2 = 1/(4 pi), so relative size ps needs amplitude
# c = ps * sqrt((1/4pi) / (8pi/9)) = 3 ps / (4 pi sqrt(2)).
_BUMP_NORM2 = 8.0 * np.pi / 9.0
_G_NORM2 = 1.0 / (4.0 * np.pi)


def probe_perturbation_amplitude(perturbation_size: float) -> float:
    return perturbation_size * np.sqrt(_G_NORM2 / _BUMP_NORM2)


def _perturb_parts(state: SimulationState, amplitude: float) -> None:
    """Add (alpha_i/t) c R exp(-|X|^2/2) around each filament, in place."""
    R, Z = state.grid.meshgrid()
    t = state.t
    for i, fil in enumerate(state.config.filaments.filaments):
        XR = (R - fil.r_center) / np.sqrt(t)
        XZ = (Z - fil.z_center) / np.sqrt(t)
        bump = amplitude * XR * np.exp(-(XR**2 + XZ**2) / 2.0)
        state.omega_parts[i] = ScalarField(
            state.grid, state.omega_parts[i].values + (fil.alpha / t) * bump)
    total = ScalarField(state.grid, sum(p.values for p in state.omega_parts))
    state.omega_total = total
    state.velocity, report = solve_velocity(total, state.params.bs_tol)
    state.bs_iters = report.iterations
    state.div_max = report.divergence_max


def run_uniqueness_probe(config: RunConfig, perturbation_size: float,
                         t_list=None):
    """Two co-evolved runs differing by a small perturbation at t0.

    Returns (ProbeResult, ledger).  perturbation_size = 0 runs the identical
    control; both runs always share the same dt sequence so the comparison is
    deterministic.
    """
    if not 0.0 <= perturbation_size <= 1e-2:
        raise InvalidParameter(
            f"perturbation size must lie in [0, 1e-2], got {perturbation_size}")
    times = sorted(t_list if t_list is not None else config.times)
    if len(times) < 2:
        raise InvalidParameter("probe needs at least two checkpoint times")
    d = config.filaments.d
    t0 = min(times) / 4.0
    ledger = RunLedger(config=config.document(), input_hash=config.input_hash())
    ledger.calibration["perturbation_size"] = perturbation_size
    ledger.calibration["perturbation_shape"] = "c * R * exp(-|X|^2/2) per filament"

    grid = config.resolved_grid(t0)
    state1 = initialize_filaments(config.filaments, t0, config.solver,
                                  grid=grid, ledger=ledger)
    state2 = initialize_filaments(config.filaments, t0, config.solver,
                                  grid=grid, ledger=RunLedger())
    _perturb_parts(state2, probe_perturbation_amplitude(perturbation_size))

    n = len(config.filaments)
    series = {"t": [], "E_delta": [], "E1": [], "E2": []}

    def checkpoint(s1: SimulationState, s2: SimulationState) -> None:
        t = s1.t
        E1 = E2 = ED = 0.0
        for i in range(n):
            ext = _diagnostic_extent(s1, i, config.frames.extent)
            if ext < MIN_DIAGNOSTIC_EXTENT:
                ledger.flag(f"probe checkpoint t={t:.6e} filament {i}: "
                            f"extent {ext:.2f} too small")
                continue
            fr1 = rescale(s1, i, ext, config.frames.resolution)
            fr2 = rescale(s2, i, ext, config.frames.resolution)
            f0 = background_f0(t, d, fr1.f.grid)
            e1, _ = energies(fr1, f0, config.frames.cutoff_radius)
            e2, _ = energies(fr2, f0, config.frames.cutoff_radius)
            ed, _ = difference_energies(fr1, fr2, f0, config.frames.cutoff_radius)
            E1 += e1
            E2 += e2
            ED += ed
        if ED > 2.0 * (E1 + E2) * (1.0 + 1e-9) + 1e-300:
            ledger.flag(f"probe t={t:.6e}: E_delta exceeds 2(E1+E2)")
        if E2 > PROBE_ENERGY_CAP:
            raise ProbeRegimeBreach(
                f"perturbed run left the near-linear regime at t={t:.6e}: "
                f"E = {E2:.4e} > {PROBE_ENERGY_CAP:.4e}",
                diagnostics={"t": t, "E2": E2})
        series["t"].append(t)
        series["E_delta"].append(ED)
        series["E1"].append(E1)
        series["E2"].append(E2)
        ledger.append_checkpoint({"t": t, "E_delta": ED, "E1": E1, "E2": E2})

    for target in times:
        while state1.t < target * (1.0 - 1e-14):
            dt = min(stable_dt(state1), stable_dt(state2), target - state1.t)
            state1 = step(state1, dt)
            state2 = step(state2, dt)
            if abs(state1.t - state2.t) > 1e-15 * state1.t:
                # a retry halved dt in one run only; re-sync by stepping the other
                while state2.t < state1.t * (1.0 - 1e-14):
                    state2 = step(state2, min(stable_dt(state2), state1.t - state2.t))
        checkpoint(state1, state2)

    ts = np.array(series["t"])
    ed = np.array(series["E_delta"])
    if perturbation_size == 0.0 or np.all(ed <= 0.0):
        kappa, r2 = 0.0, 1.0
        monotone_after = float(ts[0])
    else:
        slope, r2 = loglog_fit(ts, np.maximum(ed, 1e-300))
        kappa = -slope
        monotone_after = float(ts[-1])
        for k in range(len(ts)):
            if np.all(np.diff(ed[k:]) < 0.0):
                monotone_after = float(ts[k])
                break
    ledger.calibration.update({
        "gronwall_exponent": kappa, "gronwall_r2": r2,
        "monotone_after": monotone_after,
    })
    result = ProbeResult(times=tuple(series["t"]), E_delta=tuple(series["E_delta"]),
                         E1=tuple(series["E1"]), E2=tuple(series["E2"]),
                         gronwall_exponent=kappa, monotone_after=monotone_after,
                         r_squared=r2)
    return result, ledger


# ---------------------------------------------------------------------------
# reporting


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def summary_rows(ledger: RunLedger) -> list:
    """One flat numeric row per checkpoint (deterministic for a given ledger)."""
    rows = []
    for entry in ledger.checkpoints:
        row = {"t": entry["t"]}
        for key, val in entry.items():
            if key in ("t", "per_filament"):
                continue
            if isinstance(val, (int, float, bool)):
                row[key] = val
        for i, rec in enumerate(entry.get("per_filament", []) or []):
            if rec is None:
                row[f"skipped_{i}"] = 1
            elif isinstance(rec, dict):
                for key, val in rec.items():
                    row[f"{key}_{i}"] = val
            else:
                row[f"value_{i}"] = rec
        rows.append(row)
    return rows


def _verdicts(ledger: RunLedger) -> list:
    """(name, ok, detail) triples for everything this ledger can attest."""
    out = []
    diag = ledger.diagnostics
    if diag:
        worst_pos = min(row["pos_min"] / max(row["linf_total"], 1e-300) for row in diag)
        out.append(("positivity", worst_pos >= -1e-12,
                    f"min omega / max |omega| = {worst_pos:.3e} (tol -1e-12)"))
        alpha = sum(f["alpha"] for f in ledger.config.get("filaments", [])) or None
        if alpha:
            worst_l1 = max(row["l1_total"] for row in diag)
            out.append(("l1_bound", worst_l1 <= alpha * 1.001,
                        f"max ||omega||_1 = {worst_l1:.6e} vs budget {alpha * 1.001:.6e}"))
    cal = ledger.calibration
    if "envelope_ratio_max" in cal:
        ratio = cal["envelope_ratio_max"] / cal["envelope_ratio_min"]
        out.append(("oseen_rate_envelope", ratio <= 3.0,
                    f"rate-ratio spread {ratio:.3f} (limit 3)"))
        out.append(("oseen_rate_slope", 0.4 <= cal["rate_slope"] <= 0.7,
                    f"log-log slope {cal['rate_slope']:.3f} in [0.4, 0.7], "
                    f"R^2 = {cal['rate_r2']:.4f}"))
    if "envelope_margin_max" in cal:
        out.append(("gaussian_envelope", cal["envelope_margin_max"] <= ENVELOPE_HEADROOM,
                    f"max envelope growth {cal['envelope_margin_max']:.3f} "
                    f"(headroom {ENVELOPE_HEADROOM})"))
    if "interaction_exponent" in cal:
        out.append(("interaction_smallness",
                    cal["interaction_exponent"] >= 0.45 and cal["interaction_r2"] >= 0.95,
                    f"exponent {cal['interaction_exponent']:.3f} (>= 0.45), "
                    f"R^2 = {cal['interaction_r2']:.4f} (>= 0.95)"))
    if "gronwall_exponent" in cal and cal.get("perturbation_size", 0.0) > 0.0:
        out.append(("uniqueness_contraction",
                    cal["gronwall_exponent"] > 0.0 and cal["gronwall_r2"] >= 0.9,
                    f"kappa {cal['gronwall_exponent']:.3f} (> 0), "
                    f"R^2 = {cal['gronwall_r2']:.4f} (>= 0.9)"))
    return out


def emit_report(ledger: RunLedger, out_dir) -> dict:
    """Write report.json, summary.csv, summary.txt; returns the paths."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "report": os.path.join(out_dir, "report.json"),
        "summary_csv": os.path.join(out_dir, "summary.csv"),
        "summary_txt": os.path.join(out_dir, "summary.txt"),
    }
    try:
        with open(paths["report"], "w") as fh:
            fh.write(ledger.to_json())
        rows = summary_rows(ledger)
        with open(paths["summary_csv"], "w", newline="") as fh:
            if rows:
                cols = sorted(set().union(*(r.keys() for r in rows)) - {"t"})
                writer = csv.writer(fh)
                writer.writerow(["t"] + cols)
                for row in rows:
                    writer.writerow([_fmt(row.get("t", ""))]
                                    + [_fmt(row.get(c, "")) for c in cols])
            else:
                fh.write("t\n")
        with open(paths["summary_txt"], "w") as fh:
            fh.write(f"input hash: {ledger.input_hash}\n")
            fh.write(f"checkpoints: {len(ledger.checkpoints)}, "
                     f"steps: {max(len(ledger.diagnostics) - 1, 0)}\n")
            for key, val in sorted(ledger.calibration.items()):
                fh.write(f"calibration {key}: {val}\n")
            for name, ok, detail in _verdicts(ledger):
                fh.write(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}\n")
            for fl in ledger.flags:
                fh.write(f"flag: {fl}\n")
    except OSError as exc:
        raise OSError(f"writing report into {out_dir!r} failed: {exc}") from exc
    return paths


def diagnostics_csv(ledger: RunLedger) -> str:
    """The per-step diagnostics table in its documented column order."""
    out = io.StringIO()
    n_parts = len(ledger.config.get("filaments", [])) or (
        max((sum(1 for k in row if k.startswith("l1_part_")) for row in ledger.diagnostics),
            default=0))
    cols = (["t", "l1_total", "linf_total"]
            + [f"l1_part_{i}" for i in range(n_parts)]
            + ["pos_min", "div_max", "dt", "bs_iters"])
    writer = csv.writer(out)
    writer.writerow(cols)
    for row in ledger.diagnostics:
        writer.writerow([_fmt(row.get(c, "")) for c in cols])
    return out.getvalue()
