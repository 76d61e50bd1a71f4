"""Half-plane grids, scalar/vector fields, and the norms built on them.

The physical domain is the half-plane {(r, z): r > 0} with the plain dr dz
measure.  Grids are uniform and cell-centered: the axis r = 0 and the outer
box faces are cell faces, never cell centers, so 1/r factors are always
evaluated at r >= h_r/2.  Dirichlet data on the faces is imposed by odd
ghost-cell reflection.

Rescaled (self-similar) frames live on their own centered square geometry,
`FrameGrid`, because they extend to negative coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidParameter


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on [r_min, r_max] x [z_min, z_max].

    Cell centers sit at r_min + (i + 1/2) h_r, i = 0..n_r-1 (same in z), so
    they are reproducible bit-exactly from the indices.
    """

    r_min: float
    r_max: float
    z_min: float
    z_max: float
    n_r: int
    n_z: int

    def __post_init__(self):
        if not (self.r_max > self.r_min >= 0.0):
            raise InvalidParameter(f"need r_max > r_min >= 0, got [{self.r_min}, {self.r_max}]")
        if not self.z_max > self.z_min:
            raise InvalidParameter(f"need z_max > z_min, got [{self.z_min}, {self.z_max}]")
        if self.n_r < 8 or self.n_z < 8:
            raise InvalidParameter(f"need n_r, n_z >= 8, got {self.n_r} x {self.n_z}")

    @property
    def h_r(self) -> float:
        return (self.r_max - self.r_min) / self.n_r

    @property
    def h_z(self) -> float:
        return (self.z_max - self.z_min) / self.n_z

    @property
    def cell_area(self) -> float:
        return self.h_r * self.h_z

    def r_centers(self) -> np.ndarray:
        return self.r_min + (np.arange(self.n_r) + 0.5) * self.h_r

    def z_centers(self) -> np.ndarray:
        return self.z_min + (np.arange(self.n_z) + 0.5) * self.h_z

    def meshgrid(self):
        """(R, Z) arrays of shape (n_r, n_z)."""
        return np.meshgrid(self.r_centers(), self.z_centers(), indexing="ij")

    def boundary_distance(self, r: float, z: float) -> float:
        """Distance from (r, z) to the nearest grid face."""
        return min(r - self.r_min, self.r_max - r, z - self.z_min, self.z_max - z)


@dataclass(frozen=True)
class FrameGrid:
    """Centered square [-extent, extent]^2 for self-similar coordinates.

    resolution counts cells per side; centers at -extent + (k + 1/2) h with
    h = 2 extent / resolution, symmetric about 0 for even resolution.
    """

    extent: float
    resolution: int

    def __post_init__(self):
        if self.extent <= 0.0:
            raise InvalidParameter(f"frame extent must be positive, got {self.extent}")
        if self.resolution < 8:
            raise InvalidParameter(f"frame resolution must be >= 8, got {self.resolution}")

    @property
    def h(self) -> float:
        return 2.0 * self.extent / self.resolution

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    def centers(self) -> np.ndarray:
        return -self.extent + (np.arange(self.resolution) + 0.5) * self.h

    def meshgrid(self):
        c = self.centers()
        return np.meshgrid(c, c, indexing="ij")

    def radius2(self) -> np.ndarray:
        XR, XZ = self.meshgrid()
        return XR * XR + XZ * XZ


# ---------------------------------------------------------------------------
# fields


def _check_values(values: np.ndarray, shape: tuple) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.shape != shape:
        raise InvalidParameter(f"field shape {values.shape} does not match grid {shape}")
    if not np.all(np.isfinite(values)):
        raise InvalidParameter("field contains NaN or Inf")
    return values


@dataclass
class ScalarField:
    """Cell values indexed as values[i_r, i_z] on a physical Grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.values, (self.grid.n_r, self.grid.n_z))

    @classmethod
    def zeros(cls, grid: Grid) -> "ScalarField":
        return cls(grid, np.zeros((grid.n_r, grid.n_z)))

    @classmethod
    def from_function(cls, grid: Grid, fn) -> "ScalarField":
        R, Z = grid.meshgrid()
        return cls(grid, fn(R, Z))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())


@dataclass
class FrameField:
    """Cell values indexed as values[i_R, i_Z] on a rescaled FrameGrid."""

    grid: FrameGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.values, (self.grid.resolution, self.grid.resolution))

    @classmethod
    def zeros(cls, grid: FrameGrid) -> "FrameField":
        return cls(grid, np.zeros((grid.resolution, grid.resolution)))

    def copy(self) -> "FrameField":
        return FrameField(self.grid, self.values.copy())


@dataclass
class VectorField:
    """Velocity (u^r, u^z) sampled at cell centers."""

    u_r: ScalarField
    u_z: ScalarField

    def __post_init__(self):
        if self.u_r.grid != self.u_z.grid:
            raise InvalidParameter("velocity components live on different grids")

    @property
    def grid(self) -> Grid:
        return self.u_r.grid

    def max_speed(self) -> float:
        return float(np.sqrt(self.u_r.values**2 + self.u_z.values**2).max())


def axisymmetric_divergence(u: VectorField) -> np.ndarray:
    """Discrete d_r u^r + u^r/r + d_z u^z, centered inside, one-sided at edges."""
    g = u.grid
    ur, uz = u.u_r.values, u.u_z.values
    dur = np.gradient(ur, g.h_r, axis=0, edge_order=2)
    duz = np.gradient(uz, g.h_z, axis=1, edge_order=2)
    return dur + ur / g.r_centers()[:, None] + duz


# ---------------------------------------------------------------------------
# filament configuration


@dataclass(frozen=True)
class Filament:
    """One circular vortex filament: circulation alpha at (r_center, z_center)."""

    alpha: float
    r_center: float
    z_center: float

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise InvalidParameter(f"filament strength must be positive, got {self.alpha}")
        if self.r_center <= 0.0:
            raise InvalidParameter(f"filament radius must be positive, got {self.r_center}")


@dataclass(frozen=True)
class FilamentConfig:
    """The initial measure: a positive combination of point circulations."""

    filaments: tuple

    def __post_init__(self):
        fil = tuple(self.filaments)
        object.__setattr__(self, "filaments", fil)
        if not fil:
            raise InvalidParameter("need at least one filament")
        centers = [(f.r_center, f.z_center) for f in fil]
        if len(set(centers)) != len(centers):
            raise InvalidParameter("filament centers must be pairwise distinct")

    def __len__(self) -> int:
        return len(self.filaments)

    @property
    def d(self) -> float:
        """min over pairwise center distances and over the radii r_i; recomputed."""
        fil = self.filaments
        d = min(f.r_center for f in fil)
        for i in range(len(fil)):
            for j in range(i + 1, len(fil)):
                sep = np.hypot(fil[i].r_center - fil[j].r_center,
                               fil[i].z_center - fil[j].z_center)
                d = min(d, sep)
        return float(d)

    @property
    def total_strength(self) -> float:
        return float(sum(f.alpha for f in self.filaments))


# ---------------------------------------------------------------------------
# norms and profiles


def lp_norm(f, p) -> float:
    """Midpoint-rule L^p norm over the field's own domain; p = inf gives max |f|.

    Works for both ScalarField (dr dz measure) and FrameField (dR dZ measure).
    """
    if not (p == np.inf or p >= 1):
        raise InvalidParameter(f"need p >= 1 or inf, got {p}")
    v = np.abs(f.values)
    if p == np.inf:
        return float(v.max())
    if p == 1:
        return float(v.sum() * f.grid.cell_area)
    return float((np.sum(v**p) * f.grid.cell_area) ** (1.0 / p))


def weight_function(radius2: np.ndarray) -> np.ndarray:
    """Gaussian weight w(X) = exp(|X|^2/4) used by all weighted integrals."""
    return np.exp(radius2 / 4.0)


def weighted_l2(f: FrameField, cutoff_radius: float) -> float:
    """(integral of f^2 w over |X| <= cutoff)^(1/2) with w = exp(|X|^2/4).

    The tail beyond cutoff_radius is omitted; with profiles decaying like
    exp(-(1-eta)|X|^2/4), eta < 1/2, the omitted integrand is exponentially
    small once cutoff >= 6.
    """
    if cutoff_radius > f.grid.extent * (1.0 + 1e-12):
        raise InvalidParameter(
            f"cutoff radius {cutoff_radius} exceeds frame extent {f.grid.extent}")
    r2 = f.grid.radius2()
    mask = r2 <= cutoff_radius**2
    total = np.sum(f.values[mask] ** 2 * weight_function(r2[mask])) * f.grid.cell_area
    return float(np.sqrt(total))


def oseen_profile(frame_extent: float, resolution: int) -> FrameField:
    """The self-similar Gaussian vortex profile (1/4pi) exp(-|X|^2/4)."""
    grid = FrameGrid(frame_extent, resolution)
    return FrameField(grid, np.exp(-grid.radius2() / 4.0) / (4.0 * np.pi))


def gaussian_vortex(grid: Grid, alpha: float, r0: float, z0: float, t: float) -> ScalarField:
    """alpha/(4 pi t) exp(-|x - x0|^2 / 4t) sampled at cell centers."""
    if t <= 0.0:
        raise InvalidParameter(f"need t > 0, got {t}")
    R, Z = grid.meshgrid()
    return ScalarField(grid, alpha / (4.0 * np.pi * t)
                       * np.exp(-((R - r0) ** 2 + (Z - z0) ** 2) / (4.0 * t)))


# ---------------------------------------------------------------------------
# default truncation policy

AUTO_MARGIN_FACTOR = 12.0


def auto_grid(config: FilamentConfig, t_end: float, t0: float,
              margin_factor: float = AUTO_MARGIN_FACTOR,
              cells_per_sigma0: float = 4.0) -> Grid:
    """Truncated half-plane sized for a run up to t_end, resolved for t0.

    The box extends margin_factor * sqrt(t_end) beyond the extreme filament
    centers (Gaussian decay makes the truncated tail exp(-c margin^2)); the
    spacing resolves the initial Gaussian width sqrt(4 t0) with
    cells_per_sigma0 cells.
    """
    if t_end <= t0 or t0 <= 0.0:
        raise InvalidParameter("need 0 < t0 < t_end")
    margin = margin_factor * np.sqrt(t_end)
    r_hi = max(f.r_center for f in config.filaments) + margin
    z_lo = min(f.z_center for f in config.filaments) - margin
    z_hi = max(f.z_center for f in config.filaments) + margin
    h = np.sqrt(4.0 * t0) / cells_per_sigma0
    n_r = int(np.ceil(r_hi / h))
    n_z = int(np.ceil((z_hi - z_lo) / h))
    return Grid(0.0, r_hi, z_lo, z_hi, n_r, n_z)


# ---------------------------------------------------------------------------
# plain-text field interchange


def dump_field(f: ScalarField, path) -> None:
    """Header `nr nz rmin rmax zmin zmax`, then row-major values, 17 digits."""
    g = f.grid
    with open(path, "w") as fh:
        fh.write(f"{g.n_r} {g.n_z} {g.r_min:.17g} {g.r_max:.17g} "
                 f"{g.z_min:.17g} {g.z_max:.17g}\n")
        for i in range(g.n_r):
            fh.write(" ".join(f"{v:.17g}" for v in f.values[i]) + "\n")


def load_field(path) -> ScalarField:
    with open(path) as fh:
        head = fh.readline().split()
        n_r, n_z = int(head[0]), int(head[1])
        r_min, r_max, z_min, z_max = map(float, head[2:6])
        values = np.loadtxt(fh).reshape(n_r, n_z)
    return ScalarField(Grid(r_min, r_max, z_min, z_max, n_r, n_z), values)
