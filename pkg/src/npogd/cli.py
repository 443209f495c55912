"""Command-line entry point: ``npogd {run,sweep,verify,project}``.

Exit codes: 0 on success, 1 when a verification or run fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .algorithm import run
from .errors import ConfigError, GenerationError, NPOGDError
from .geometry import FeasibleRegion, project_region_info
from .harness import ExperimentConfig, run_experiment, verify_suite

EXIT_OK, EXIT_FAILED, EXIT_CONFIG = 0, 1, 2


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed is not None:
        changes["seeds"] = [args.seed]
    for key in ("dimension", "T_list", "workers", "start"):
        val = getattr(args, key, None)
        if val is not None:
            changes[key] = val
    gen = dict(cfg.generator)
    if getattr(args, "loss", None):
        gen["loss"] = args.loss
    if getattr(args, "constraints", None):
        gen["constraints"] = args.constraints
    if gen != cfg.generator:
        changes["generator"] = gen
    sched = dict(cfg.schedule)
    if getattr(args, "schedule", None):
        sched = {"kind": args.schedule}
    if getattr(args, "mu", None) is not None:
        sched["mu"] = args.mu
    if getattr(args, "eta", None) is not None:
        sched["eta"] = args.eta
    if sched != cfg.schedule:
        changes["schedule"] = sched
    return cfg.replace(**changes) if changes else cfg


def _write(text: str, path: str | None) -> None:
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_run(args) -> int:
    cfg = _load_config(args)
    from .problem import gen_instance

    T = args.T if args.T is not None else cfg.T_list[-1]
    inst = gen_instance(cfg.generator_spec(T, cfg.seeds[0]))
    trace = run(inst, cfg.make_schedule(inst.D, inst.G), cfg.start, cfg.projection_tol,
                cfg.max_sweeps)
    _write(trace.to_csv(), args.out)
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _load_config(args)
    result = run_experiment(cfg)
    if args.out:
        result.write(args.out + ".csv", args.out + ".json")
    elif cfg.csv_path or cfg.json_path:
        result.write()
    else:
        sys.stdout.write(result.to_csv())
    for cell in result.failed:
        print(f"cell T={cell.T} seed={cell.seed} failed: {cell.error}", file=sys.stderr)
    return EXIT_FAILED if result.failed else EXIT_OK


def cmd_verify(args) -> int:
    report = verify_suite(args.level, seed=args.seed or 0)
    _write(report.text() + "\n", args.out)
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_project(args) -> int:
    try:
        bodies = json.loads(args.bodies)
        point = json.loads(args.point)
        region = FeasibleRegion.from_list(bodies)
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise ConfigError(f"bad projection input: {err}") from err
    info = project_region_info(np.asarray(point, dtype=float), region, args.tol)
    out = {"point": info.point.tolist(), "residual": info.residual, "sweeps": info.sweeps,
           "method": info.method}
    _write(json.dumps(out) + "\n", args.out)
    return EXIT_OK


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="npogd", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, sweep: bool) -> None:
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int, help="replace the config's seeds with this one")
        sp.add_argument("--out", help="output path" + (" prefix (.csv and .json)" if sweep else ""))
        sp.add_argument("--dimension", type=int)
        sp.add_argument("--loss", help="loss family")
        sp.add_argument("--constraints", help="constraint family")
        sp.add_argument("--schedule", choices=("sqrt-decay", "strongly-convex", "constant"))
        sp.add_argument("--mu", type=float)
        sp.add_argument("--eta", type=float)
        sp.add_argument("--start", help="'corner' or 'anchor'")

    sp = sub.add_parser("run", help="run one instance and write its per-round trace CSV")
    common(sp, False)
    sp.add_argument("--T", type=int, help="horizon (default: last entry of T_list)")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("sweep", help="run a T-sweep and write the metrics CSV and JSON summary")
    common(sp, True)
    sp.add_argument("--T-list", dest="T_list", type=_int_list, help="comma-separated horizons")
    sp.add_argument("--workers", type=int)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("verify", help="run the property suite")
    sp.add_argument("--level", choices=("fast", "full"), default="fast")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_verify)

    sp = sub.add_parser("project", help="project a point onto an intersection of bodies")
    sp.add_argument("--point", required=True, help="JSON list of coordinates")
    sp.add_argument("--bodies", required=True,
                    help='JSON list of bodies, e.g. [{"type": "ball", "center": [0, 0], "radius": 1}]')
    sp.add_argument("--tol", type=float, default=1e-10)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_project)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, GenerationError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except NPOGDError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
