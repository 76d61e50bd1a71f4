"""filament-ns command line: evolve | asymptotics | interaction |
uniqueness-probe | verify-bs | report.

Exit codes: 0 all asserted invariants held, 2 invariant breach or invalid
parameters, 3 elliptic solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .biot_savart import direct_quadrature_velocity, solve_velocity
from .config import geometric_times, load_config
from .dynamics import initialize_filaments, stable_dt, step
from .errors import InvalidParameter, ProbeRegimeBreach, SolverFailure, StepRejected
from .fields import dump_field
from .harness import (diagnostics_csv, emit_report, run_asymptotics,
                      run_interaction_sweep, run_uniqueness_probe)
from .ledger import RunLedger


def _parse_times(text: str):
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _checkpoint_times(cfg, args):
    if getattr(args, "times", None):
        return _parse_times(args.times)
    if cfg.times:
        return list(cfg.times)
    return geometric_times(cfg.solver.t_start * 4.0, cfg.solver.t_end)


def cmd_evolve(args) -> int:
    cfg = load_config(args.config)
    times = _checkpoint_times(cfg, args)
    t0 = cfg.solver.t_start
    state = initialize_filaments(cfg.filaments, t0, cfg.solver,
                                 grid=cfg.resolved_grid(t0))
    state.ledger.config = cfg.document()
    state.ledger.input_hash = cfg.input_hash()
    os.makedirs(args.out, exist_ok=True)
    k = 0
    for target in sorted(times):
        while state.t < target * (1.0 - 1e-14):
            dt = min(stable_dt(state), target - state.t)
            state = step(state, dt)
        dump_field(state.omega_total, os.path.join(args.out, f"omega_total_{k:03d}.txt"))
        for i, part in enumerate(state.omega_parts):
            dump_field(part, os.path.join(args.out, f"omega_part{i}_{k:03d}.txt"))
        k += 1
    with open(os.path.join(args.out, "diagnostics.csv"), "w") as fh:
        fh.write(diagnostics_csv(state.ledger))
    emit_report(state.ledger, args.out)
    return 0


def cmd_asymptotics(args) -> int:
    cfg = load_config(args.config)
    ledger = run_asymptotics(cfg, _checkpoint_times(cfg, args))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "energies.csv"), "w") as fh:
        fh.write("t,i,eps,E_i,calE_i,l1_dist,rate_ratio\n")
        for entry in ledger.checkpoints:
            for i, rec in enumerate(entry["per_filament"]):
                if rec is None:
                    continue
                fh.write(f"{entry['t']!r},{i},{rec['eps']!r},{rec['E']!r},"
                         f"{rec['calE']!r},{rec['l1_dist']!r},{rec['rate_ratio']!r}\n")
    with open(os.path.join(args.out, "diagnostics.csv"), "w") as fh:
        fh.write(diagnostics_csv(ledger))
    emit_report(ledger, args.out)
    return 0


def cmd_interaction(args) -> int:
    cfg = load_config(args.config)
    exponent, r2, ledger = run_interaction_sweep(cfg, _checkpoint_times(cfg, args))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "interaction.csv"), "w") as fh:
        fh.write("t,cross_speed\n")
        for entry in ledger.checkpoints:
            fh.write(f"{entry['t']!r},{entry['cross_speed']!r}\n")
    emit_report(ledger, args.out)
    print(f"cross-speed exponent {exponent:.4f} (R^2 = {r2:.4f})")
    return 0


def cmd_uniqueness_probe(args) -> int:
    cfg = load_config(args.config)
    result, ledger = run_uniqueness_probe(cfg, args.perturbation,
                                          _checkpoint_times(cfg, args))
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "probe.csv"), "w") as fh:
        fh.write("t,E_delta,E1,E2\n")
        for row in zip(result.times, result.E_delta, result.E1, result.E2):
            fh.write(",".join(repr(v) for v in row) + "\n")
    emit_report(ledger, args.out)
    print(f"gronwall exponent {result.gronwall_exponent:.4f} "
          f"(R^2 = {result.r_squared:.4f}), monotone after t = "
          f"{result.monotone_after:.4e}")
    return 0


def cmd_verify_bs(args) -> int:
    cfg = load_config(args.config)
    t0 = cfg.solver.t_start
    state = initialize_filaments(cfg.filaments, t0, cfg.solver,
                                 grid=cfg.resolved_grid(t0))
    rng = np.random.default_rng(args.seed if args.seed is not None else cfg.seed)
    sigma = np.sqrt(4.0 * t0)
    fils = cfg.filaments.filaments
    points = []
    for k in range(args.points):
        fil = fils[k % len(fils)]
        rad = rng.uniform(1.0, 6.0) * sigma / 2.0
        ang = rng.uniform(0.0, 2.0 * np.pi)
        points.append((fil.r_center + rad * np.cos(ang),
                       fil.z_center + rad * np.sin(ang)))
    u, _ = solve_velocity(state.omega_total, cfg.solver.bs_tol)
    oracle = direct_quadrature_velocity(state.omega_total, points)
    g = state.grid
    lines = ["point_r,point_z,ur_solve,uz_solve,ur_quad,uz_quad,rel_err"]
    worst = 0.0
    for (r, z), (ur_q, uz_q) in zip(points, oracle):
        i = min(max((r - g.r_min) / g.h_r - 0.5, 0.0), g.n_r - 1.001)
        j = min(max((z - g.z_min) / g.h_z - 0.5, 0.0), g.n_z - 1.001)
        i0, j0 = int(i), int(j)
        fi, fj = i - i0, j - j0

        def bil(F):
            return ((1 - fi) * (1 - fj) * F[i0, j0] + fi * (1 - fj) * F[i0 + 1, j0]
                    + (1 - fi) * fj * F[i0, j0 + 1] + fi * fj * F[i0 + 1, j0 + 1])

        ur_s, uz_s = bil(u.u_r.values), bil(u.u_z.values)
        err = np.hypot(ur_s - ur_q, uz_s - uz_q) / max(np.hypot(ur_q, uz_q), 1e-300)
        worst = max(worst, err)
        lines.append(",".join(repr(v) for v in (r, z, ur_s, uz_s, ur_q, uz_q, err)))
    text = "\n".join(lines) + "\n"
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify_bs.csv"), "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"worst relative error over {args.points} points: {worst:.4%}",
          file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    with open(args.ledger) as fh:
        ledger = RunLedger.from_json(fh.read())
    emit_report(ledger, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="filament-ns",
        description="Axisymmetric vortex-filament Navier-Stokes laboratory")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            sp.add_argument("--config", required=True, help="YAML run configuration")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--threads", type=int, default=1,
                        help="worker threads for transforms (deterministic)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the config seed")

    sp = sub.add_parser("evolve", help="run the solver, dump fields + diagnostics")
    common(sp)
    sp.add_argument("--times", help="comma-separated checkpoint times")
    sp.set_defaults(fn=cmd_evolve)

    sp = sub.add_parser("asymptotics", help="per-filament Oseen-convergence sweep")
    common(sp)
    sp.add_argument("--times", help="comma-separated checkpoint times")
    sp.set_defaults(fn=cmd_asymptotics)

    sp = sub.add_parser("interaction", help="two-filament cross-velocity sweep")
    common(sp)
    sp.add_argument("--times", help="comma-separated checkpoint times")
    sp.set_defaults(fn=cmd_interaction)

    sp = sub.add_parser("uniqueness-probe", help="two-solution contraction probe")
    common(sp)
    sp.add_argument("--times", help="comma-separated checkpoint times")
    sp.add_argument("--perturbation", type=float, default=1e-3,
                    help="relative weighted-L2 perturbation size")
    sp.set_defaults(fn=cmd_uniqueness_probe)

    sp = sub.add_parser("verify-bs", help="elliptic solve vs quadrature oracle")
    common(sp)
    sp.add_argument("--points", type=int, default=10)
    sp.set_defaults(fn=cmd_verify_bs)

    sp = sub.add_parser("report", help="re-emit reports from a saved ledger")
    sp.add_argument("--ledger", required=True, help="path to report.json")
    sp.add_argument("--out", default="out")
    sp.set_defaults(fn=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) and args.threads > 1:
        os.environ.setdefault("OMP_NUM_THREADS", str(args.threads))
    try:
        return args.fn(args)
    except InvalidParameter as exc:
        print(f"invalid parameter: {exc}", file=sys.stderr)
        return 2
    except (StepRejected, ProbeRegimeBreach) as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc} (residuals: {exc.residual_history})",
              file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
