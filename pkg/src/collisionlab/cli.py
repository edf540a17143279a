"""Command-line front end: ``collisionlab <command> --config scenario.toml``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure,
3 numerics could not decide.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import (IntegrationOptions, detect_crossings, integrate, summary,
                       surface_range, write_events_csv, write_trajectory_csv)
from .errors import (CollisionLabError, DomainError, InconclusiveError, InputError, PreconditionError)
from .graf import classify
from .measure import (collision_fraction_scan, cylinder_area_exact, poincare_decay, surface_decay)
from .partitions import SetPartition, enumerate_partitions, maximal_chains
from .potentials import (LITUUS_T, certify_admissible, lituus_antiderivative, lituus_t_of_s, lituus_trajectory)
from .scenario import ConfigError, Scenario, load_scenario

log = logging.getLogger("collisionlab")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME, EXIT_INCONCLUSIVE = 0, 1, 2, 3


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_rows(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, str) else _fmt(v) for v in row])


def _emit(obj) -> None:
    print(json.dumps(obj, sort_keys=True))


def _need_config(args) -> Scenario:
    if not args.config:
        raise ConfigError("--config", f"command {args.command!r} needs a scenario file")
    sc = load_scenario(args.config)
    return sc


def _seed(args, sc: Scenario | None) -> int:
    if args.seed is not None:
        return args.seed
    return sc.run.seed if sc is not None else 0


def cmd_simulate(args) -> int:
    sc = _need_config(args)
    if sc.initial is None:
        raise ConfigError("initial", "simulate needs initial q and p")
    ps = sc.potential_set()
    opts = IntegrationOptions(rtol=sc.run.rtol, atol=sc.run.atol, eps_stop=sc.run.eps_stop)
    traj = integrate(sc.system, ps, sc.initial, sc.run.horizon, opts)
    events = detect_crossings(traj, sc.surface, sc.graf.delta, surface_range(sc.run.eps_stop))
    write_trajectory_csv(traj, args.out / "trajectory.csv")
    write_events_csv(events, args.out / "events.csv")
    _emit(summary(traj, events))
    if traj.status == "singular":
        # the stop was reached but the limit partition could not be resolved
        print(f"inconclusive: {traj.message}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    return EXIT_OK


def cmd_classify(args) -> int:
    sc = _need_config(args)
    if sc.initial is None:
        raise ConfigError("initial.q", "classify needs a configuration")
    rep = classify(sc.system, sc.graf, sc.initial.q)
    out = rep.to_dict()
    (args.out / "classify.json").write_text(json.dumps(out, sort_keys=True, indent=2))
    _emit(out)
    return EXIT_OK


def cmd_admissibility(args) -> int:
    sc = _need_config(args)
    ps = sc.potential_set()
    reports = []
    for (i, j), spec in ps.specs.items():
        rep = certify_admissible(spec, d=max(sc.system.d, 2))
        reports.append({"pair": [i + 1, j + 1], "spec": spec.to_dict(), **rep.to_dict()})
    order = {"admissible-1": 0, "admissible-2": 1, "fail": 2}
    verdict = max((r["verdict"] for r in reports), key=order.get, default="admissible-1")
    out = {"verdict": verdict, "pairs": reports}
    (args.out / "admissibility.json").write_text(json.dumps(out, sort_keys=True, indent=2))
    _emit({"verdict": verdict, "pairs": len(reports)})
    return EXIT_OK


def cmd_surface_decay(args) -> int:
    sc = _need_config(args)
    ms = list(range(sc.surface_m[0], sc.surface_m[1] + 1))
    fit, ests = surface_decay(sc.system, sc.graf.delta, args.radius, ms, sc.run.samples, _seed(args, sc), args.threads)
    parts = [c for c in enumerate_partitions(sc.system.n) if not c.is_finest]
    rows = []
    for m, e in zip(ms, ests):
        bound = sum(cylinder_area_exact(sc.system, c, 4.0 ** (-m), sc.graf.delta, args.radius) for c in parts)
        rows.append((str(m), e.value, e.std_error, bound, fit.predicted_exponent))
    _write_rows(args.out / "surface_decay.csv", ["m", "estimate", "std_error", "closed_form", "predicted_exponent"], rows)
    _emit({"fitted_exponent": fit.fitted_exponent, "predicted_exponent": fit.predicted_exponent,
           "slope_in_k": -fit.fitted_exponent / 2, "residual": fit.residual})
    return EXIT_OK


def _binary_partition(n: int) -> SetPartition:
    return SetPartition.from_blocks([(0, 1)] + [(i,) for i in range(2, n)], n)


def cmd_poincare_decay(args) -> int:
    sc = _need_config(args)
    c = sc.partition or _binary_partition(sc.system.n)
    chain = maximal_chains(c)[0]
    ms = list(range(sc.surface_m[0], sc.surface_m[1] + 1))
    fit, ests, bounds = poincare_decay(sc.system, sc.potential_set(), c, chain, sc.surface, ms, sc.run.samples,
                                       _seed(args, sc), threads=args.threads)
    rows = [(str(m), e.value, e.std_error, b, fit.predicted_exponent) for m, e, b in zip(ms, ests, bounds)]
    _write_rows(args.out / "poincare_decay.csv", ["m", "estimate", "std_error", "closed_form", "predicted_exponent"], rows)
    _emit({"partition": json.loads(c.to_json()), "fitted_exponent": fit.fitted_exponent,
           "predicted_exponent": fit.predicted_exponent, "residual": fit.residual})
    return EXIT_OK


def cmd_lituus(args) -> int:
    sc = load_scenario(args.config) if args.config else None
    if sc is not None and sc.run.t_grid:
        t = np.array(sc.run.t_grid)
    else:
        t = lituus_t_of_s(np.logspace(0, 4, args.points))
        t[0] = 0.0
    samples = lituus_trajectory(t)
    anti = lituus_antiderivative(samples.s) - lituus_antiderivative(1.0)
    rows = [(a, b, x, y, k, g, kt) for a, b, (x, y), k, g, kt in
            zip(samples.t, samples.s, samples.positions, samples.kinetic_integral, anti, samples.kinetic_time_integral)]
    _write_rows(args.out / "lituus.csv", ["t", "s", "x", "y", "kinetic_integral", "antiderivative", "time_integral_K"], rows)
    _emit({"collision_time": LITUUS_T, "points": len(rows), "kinetic_integral_last": float(samples.kinetic_integral[-1])})
    return EXIT_OK


def cmd_partitions(args) -> int:
    n = args.n
    if n is None:
        n = load_scenario(args.config).run.n if args.config else 4
    parts = enumerate_partitions(n)
    out = {"n": n, "count": len(parts),
           "partitions": [{"blocks": json.loads(c.to_json()), "rank": c.rank, "chains": len(maximal_chains(c))}
                          for c in parts]}
    (args.out / "partitions.json").write_text(json.dumps(out, indent=2))
    _emit({"n": n, "count": len(parts)})
    return EXIT_OK


def cmd_collision_scan(args) -> int:
    sc = _need_config(args)
    if sc.run.energy is None:
        raise ConfigError("run.energy", "collision-scan needs the shell energy")
    if not sc.run.eps_grid:
        raise ConfigError("run.eps_grid", "collision-scan needs a non-empty eps grid")
    rows = collision_fraction_scan(sc.system, sc.potential_set(), sc.run.energy, sc.run.samples, sc.run.eps_grid,
                                   sc.run.horizon, _seed(args, sc), box=sc.run.box, threads=args.threads)
    _write_rows(args.out / "collision_scan.csv", ["eps", "fraction", "std_error", "hits", "samples"],
                [(r.eps, r.fraction, r.std_error, str(r.hits), str(r.samples)) for r in rows])
    _emit({"rows": len(rows), "fractions": [r.fraction for r in rows]})
    return EXIT_OK


COMMANDS = {
    "simulate": (cmd_simulate, "integrate the initial data, write trajectory and crossing events"),
    "classify": (cmd_classify, "Graf cells containing the initial configuration"),
    "admissibility": (cmd_admissibility, "certify each pair potential on a radial grid"),
    "surface-decay": (cmd_surface_decay, "boundary area of the collision neighbourhood versus k"),
    "poincare-decay": (cmd_poincare_decay, "Poincare surface volume bound versus m"),
    "lituus": (cmd_lituus, "samples of the lituus spiral and its kinetic integral"),
    "partitions": (cmd_partitions, "enumerate set partitions with maximal chain counts"),
    "collision-scan": (cmd_collision_scan, "fraction of sampled orbits approaching collision"),
}


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario file (.toml or .json)")
    common.add_argument("--seed", type=_u64, default=None, help="override run.seed")
    common.add_argument("--threads", type=_positive_int, default=1, help="worker cap for sampling")
    common.add_argument("--out", type=Path, default=Path("."), help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="collisionlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text)
        if name == "partitions":
            p.add_argument("--n", type=_positive_int, default=None)
        if name == "lituus":
            p.add_argument("--points", type=_positive_int, default=50)
        if name == "surface-decay":
            p.add_argument("--radius", type=float, default=1.0)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command][0](args)
    except (ConfigError, InputError, PreconditionError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except InconclusiveError as exc:
        print(f"inconclusive: {exc}", file=sys.stderr)
        return EXIT_INCONCLUSIVE
    except (CollisionLabError, ArithmeticError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
