"""Config documents: one human-readable YAML file describes a whole run.

Schema (version 1) — see docs/config.md for the full reference:

    schema_version: 1
    filaments:  [{alpha, r_center, z_center}, ...]
    grid: auto | {r_min, r_max, z_min, z_max, n_r, n_z}
    solver: {t_start, t_end, cfl_safety, diffusion_mode, bs_tol, dt_growth}
    frames: {extent, resolution, cutoff_radius}
    times: {t_min, t_max, per_decade} | {values: [...]}
    seed: 0
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import InvalidParameter
from .dynamics import SolverParams
from .fields import Filament, FilamentConfig, Grid, auto_grid
from .ledger import content_hash
from .selfsim import DEFAULT_CUTOFF, DEFAULT_EXTENT, DEFAULT_RESOLUTION

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class FrameSettings:
    extent: float = DEFAULT_EXTENT
    resolution: int = DEFAULT_RESOLUTION
    cutoff_radius: float = DEFAULT_CUTOFF


@dataclass
class RunConfig:
    filaments: FilamentConfig
    solver: SolverParams
    grid: Grid | None = None          # None = auto truncation policy
    frames: FrameSettings = field(default_factory=FrameSettings)
    times: list = field(default_factory=list)
    seed: int = 0

    def resolved_grid(self, t0: float) -> Grid:
        if self.grid is not None:
            return self.grid
        return auto_grid(self.filaments, self.solver.t_end, t0)

    def document(self) -> dict:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "filaments": [{"alpha": f.alpha, "r_center": f.r_center,
                           "z_center": f.z_center} for f in self.filaments.filaments],
            "solver": {
                "t_start": self.solver.t_start,
                "t_end": self.solver.t_end,
                "cfl_safety": self.solver.cfl_safety,
                "diffusion_mode": self.solver.diffusion_mode,
                "bs_tol": self.solver.bs_tol,
                "dt_growth": self.solver.dt_growth,
            },
            "frames": {
                "extent": self.frames.extent,
                "resolution": self.frames.resolution,
                "cutoff_radius": self.frames.cutoff_radius,
            },
            "times": list(self.times),
            "seed": self.seed,
        }
        if self.grid is None:
            doc["grid"] = "auto"
        else:
            doc["grid"] = {"r_min": self.grid.r_min, "r_max": self.grid.r_max,
                           "z_min": self.grid.z_min, "z_max": self.grid.z_max,
                           "n_r": self.grid.n_r, "n_z": self.grid.n_z}
        return doc

    def input_hash(self) -> str:
        return content_hash(self.document())


def geometric_times(t_min: float, t_max: float, per_decade: int = 9) -> list:
    """Geometric checkpoint times, per_decade points per closed decade."""
    if not 0.0 < t_min < t_max:
        raise InvalidParameter("need 0 < t_min < t_max")
    if per_decade < 2:
        raise InvalidParameter("need at least 2 points per decade")
    step = 10.0 ** (1.0 / (per_decade - 1))
    out = [t_min]
    while out[-1] * step <= t_max * (1.0 + 1e-12):
        out.append(out[-1] * step)
    if out[-1] < t_max * (1.0 - 1e-12):
        out.append(t_max)
    out[-1] = min(out[-1], t_max)
    return out


def _times_from_doc(doc) -> list:
    if doc is None:
        return []
    if isinstance(doc, (list, tuple)):
        return [float(t) for t in doc]
    if "values" in doc:
        return [float(t) for t in doc["values"]]
    return geometric_times(float(doc["t_min"]), float(doc["t_max"]),
                           int(doc.get("per_decade", 9)))


def config_from_document(doc: dict) -> RunConfig:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise InvalidParameter(
            f"unsupported schema_version {doc.get('schema_version')!r}; "
            f"this build reads version {SCHEMA_VERSION}")
    try:
        filaments = FilamentConfig(tuple(
            Filament(float(f["alpha"]), float(f["r_center"]), float(f["z_center"]))
            for f in doc["filaments"]))
        sol = doc["solver"]
        solver = SolverParams(
            t_start=float(sol["t_start"]),
            t_end=float(sol["t_end"]),
            cfl_safety=float(sol.get("cfl_safety", 0.4)),
            diffusion_mode=str(sol.get("diffusion_mode", "explicit")),
            bs_tol=float(sol.get("bs_tol", 1e-10)),
            dt_growth=float(sol.get("dt_growth", 0.05)),
        )
    except KeyError as exc:
        raise InvalidParameter(f"config document missing required key: {exc}") from exc
    grid_doc = doc.get("grid", "auto")
    grid = None
    if isinstance(grid_doc, dict):
        grid = Grid(float(grid_doc["r_min"]), float(grid_doc["r_max"]),
                    float(grid_doc["z_min"]), float(grid_doc["z_max"]),
                    int(grid_doc["n_r"]), int(grid_doc["n_z"]))
    fr = doc.get("frames", {})
    frames = FrameSettings(extent=float(fr.get("extent", DEFAULT_EXTENT)),
                           resolution=int(fr.get("resolution", DEFAULT_RESOLUTION)),
                           cutoff_radius=float(fr.get("cutoff_radius", DEFAULT_CUTOFF)))
    return RunConfig(filaments=filaments, solver=solver, grid=grid, frames=frames,
                     times=_times_from_doc(doc.get("times")), seed=int(doc.get("seed", 0)))


def load_config(path) -> RunConfig:
    with open(path) as fh:
        doc = yaml.safe_load(fh)
    if not isinstance(doc, dict):
        raise InvalidParameter(f"config file {path} does not hold a mapping")
    return config_from_document(doc)


def dump_config(config: RunConfig, path) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(config.document(), fh, sort_keys=False)
