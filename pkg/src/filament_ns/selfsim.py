"""Self-similar frames around each filament and the weighted Gaussian energies.

Around filament i the similarity variables are X = (x - x_i)/sqrt(t) with
scale parameter epsilon = sqrt(t)/r_i; the part omega_i becomes the O(1)
profile f(t, X) = (t/alpha_i) omega_i(t, x_i + sqrt(t) X), defined on
{1 + epsilon R > 0}.  The diagnostics measure f against the Gaussian vortex
profile and against the cutoff background f0 = G * chi(sqrt(t)|X|/d) through
the weighted quadratic energies

    E    = 1/2 int fpert^2 w dX,
    calE = 1/2 int (|grad fpert|^2 + (1 + |X|^2) fpert^2) w dX,

with w = exp(|X|^2/4) and fpert = f - f0, truncated at a cutoff radius where
the integrand is exponentially negligible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidParameter
from .fields import (FrameField, FrameGrid, ScalarField, lp_norm,
                     oseen_profile, weight_function)

DEFAULT_EXTENT = 10.0
DEFAULT_RESOLUTION = 256
DEFAULT_CUTOFF = 8.0

# largest tolerated mass-correction factor in the conservative resampling
RESAMPLE_MASS_SLACK = 5e-3

# sqrt(int exp(-|X|^2/4) dX) over the plane; bridges L1 to the weighted L2
WEIGHT_L2_NORM = float(np.sqrt(4.0 * np.pi))


@dataclass(frozen=True)
class RescaledFrame:
    """One filament's field in similarity coordinates at one time."""

    filament_index: int
    t: float
    epsilon: float
    f: FrameField

    @property
    def extent(self) -> float:
        return self.f.grid.extent

    @property
    def resolution(self) -> int:
        return self.f.grid.resolution

    def domain_mask(self) -> np.ndarray:
        """Cells of the frame inside the physical half-plane {1 + eps R > 0}."""
        XR, _ = self.f.grid.meshgrid()
        return 1.0 + self.epsilon * XR > 0.0


@dataclass(frozen=True)
class EnergyReport:
    """Weighted energies and Gaussian distances of one state at one time."""

    t: float
    per_filament: tuple      # (E_i, calE_i, l1_dist_to_G) triples
    totals: tuple            # (E, calE)
    delta: tuple | None = None   # (E_delta, calE_delta) for two-run probes

    def __post_init__(self):
        for (E_i, calE_i, dist) in self.per_filament:
            if E_i < 0.0 or calE_i < 0.0 or dist < 0.0:
                raise InvalidParameter("energies and distances must be nonnegative")
            if E_i > calE_i * (1.0 + 1e-12):
                raise InvalidParameter(f"E_i = {E_i} exceeds calE_i = {calE_i}")
        if self.delta is not None and (self.delta[0] < 0.0 or self.delta[1] < 0.0):
            raise InvalidParameter("difference energies must be nonnegative")

    def to_dict(self) -> dict:
        doc = {
            "t": self.t,
            "per_filament": [list(p) for p in self.per_filament],
            "totals": list(self.totals),
        }
        if self.delta is not None:
            doc["delta"] = list(self.delta)
        return doc


# ---------------------------------------------------------------------------
# rescaling


def rescale(state, i: int, extent: float = DEFAULT_EXTENT,
            resolution: int = DEFAULT_RESOLUTION) -> RescaledFrame:
    """Sample part i onto the similarity frame, conservatively.

    Bilinear sampling at frame cell centers, then one multiplicative mass
    correction so the frame integral equals ||omega_i||_1 / alpha_i exactly;
    the correction factor stays within RESAMPLE_MASS_SLACK of 1 whenever the
    frame actually contains the part.
    """
    fil = state.config.filaments[i]
    t = state.t
    grid = state.grid
    root_t = np.sqrt(t)
    dist = grid.boundary_distance(fil.r_center, fil.z_center)
    if root_t * extent > 0.5 * dist * (1.0 + 1e-12):
        raise InvalidParameter(
            f"frame escapes the grid: sqrt(t) * extent = {root_t * extent:.4g} "
            f"exceeds half the boundary distance {0.5 * dist:.4g}")
    fgrid = FrameGrid(extent, resolution)
    XR, XZ = fgrid.meshgrid()
    rr = fil.r_center + root_t * XR
    zz = fil.z_center + root_t * XZ
    part = state.omega_parts[i].values

    ii = np.clip(rr / grid.h_r - 0.5, 0.0, grid.n_r - 1.001)
    jj = np.clip((zz - grid.z_min) / grid.h_z - 0.5, 0.0, grid.n_z - 1.001)
    i0 = ii.astype(int)
    j0 = jj.astype(int)
    fi, fj = ii - i0, jj - j0
    sampled = ((1 - fi) * (1 - fj) * part[i0, j0] + fi * (1 - fj) * part[i0 + 1, j0]
               + (1 - fi) * fj * part[i0, j0 + 1] + fi * fj * part[i0 + 1, j0 + 1])
    values = (t / fil.alpha) * sampled

    target = lp_norm(state.omega_parts[i], 1) / fil.alpha
    actual = float(values.sum()) * fgrid.cell_area
    if target > 0.0:
        if actual <= 0.0:
            raise InvalidParameter("frame does not capture the filament mass")
        gamma = target / actual
        if abs(gamma - 1.0) > RESAMPLE_MASS_SLACK:
            raise InvalidParameter(
                f"resampling mass correction {gamma:.6f} is out of tolerance; "
                f"the frame misses too much of the part")
        values = values * gamma

    eps = root_t / fil.r_center
    return RescaledFrame(filament_index=i, t=t, epsilon=eps,
                         f=FrameField(fgrid, values))


# ---------------------------------------------------------------------------
# cutoff background


def cutoff_profile(s) -> np.ndarray:
    """C^2 monotone cutoff: 1 on [0, 1/8], 0 beyond 1/4, quintic in between."""
    s = np.asarray(s, dtype=float)
    x = np.clip((s - 0.125) * 8.0, 0.0, 1.0)
    return 1.0 - x**3 * (10.0 - 15.0 * x + 6.0 * x**2)


def background_f0(t: float, d: float, frame: FrameGrid) -> FrameField:
    """f0(t, X) = G(X) chi(sqrt(t) |X| / d) on the frame."""
    if t <= 0.0 or d <= 0.0:
        raise InvalidParameter("need t > 0 and d > 0")
    r2 = frame.radius2()
    chi = cutoff_profile(np.sqrt(t * r2) / d)
    return FrameField(frame, np.exp(-r2 / 4.0) / (4.0 * np.pi) * chi)


# ---------------------------------------------------------------------------
# energies


def _quadratic_energies(values: np.ndarray, grid: FrameGrid,
                        cutoff_radius: float) -> tuple:
    r2 = grid.radius2()
    mask = r2 <= cutoff_radius**2
    w = weight_function(r2)
    dA = grid.cell_area
    E = 0.5 * float(np.sum(values[mask] ** 2 * w[mask])) * dA
    gR, gZ = np.gradient(values, grid.h, edge_order=2)
    dens = gR**2 + gZ**2 + (1.0 + r2) * values**2
    calE = 0.5 * float(np.sum(dens[mask] * w[mask])) * dA
    return E, calE


def energies(frame: RescaledFrame, f0: FrameField,
             cutoff_radius: float = DEFAULT_CUTOFF) -> tuple:
    """(E_i, calE_i) of the perturbation f - f0 on the frame."""
    if f0.grid != frame.f.grid:
        raise InvalidParameter("background and frame geometries differ")
    cut = min(cutoff_radius, frame.extent)
    pert = frame.f.values - f0.values
    return _quadratic_energies(pert, frame.f.grid, cut)


def difference_energies(frame1: RescaledFrame, frame2: RescaledFrame,
                        f0: FrameField, cutoff_radius: float = DEFAULT_CUTOFF) -> tuple:
    """(E_delta, calE_delta) of the two-run gap f^(1) - f^(2); f0 cancels and
    is accepted only to pin the shared geometry."""
    if frame1.f.grid != frame2.f.grid or f0.grid != frame1.f.grid:
        raise InvalidParameter("difference energies need identical frame geometry")
    if frame1.filament_index != frame2.filament_index:
        raise InvalidParameter("difference energies pair frames of the same filament")
    cut = min(cutoff_radius, frame1.extent)
    gap = frame1.f.values - frame2.f.values
    return _quadratic_energies(gap, frame1.f.grid, cut)


def oseen_distance(frame: RescaledFrame) -> float:
    """||f - G||_L1 over the frame intersected with the physical domain."""
    G = oseen_profile(frame.extent, frame.resolution)
    diff = np.abs(frame.f.values - G.values)
    mask = frame.domain_mask()
    return float(np.sum(diff[mask])) * frame.f.grid.cell_area


def l1_bridge_bound(E_i: float, f0_gap_l1: float) -> float:
    """Cauchy-Schwarz bridge: ||f - G||_1 <= sqrt(4 pi) sqrt(2 E) + ||f0 - G||_1."""
    return WEIGHT_L2_NORM * np.sqrt(2.0 * E_i) + f0_gap_l1
