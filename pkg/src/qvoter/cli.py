"""Command-line entry point.

    qvoter run <config.json> [--seed N] [--threads T] [--out DIR] [--replicates R]
    qvoter reaction --k 3 --regime qlt1 --replicates 1e6 [--t-trunc 1e4]
    qvoter greens --x 10 --z 100 --rate linear [--replicates 1e5]
    qvoter duality --L 3 --t 1.0 --replicates 1e5

Exit codes: 0 success, 2 config error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys

from .experiments import ConfigError, run_experiment, validate_config


def _int_ish(s: str) -> int:
    return int(float(s))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qvoter",
                                description="q-voter model experiments")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a JSON config")
    run_p.add_argument("config", help="path to the config file")
    run_p.add_argument("--seed", type=int)
    run_p.add_argument("--threads", type=int)
    run_p.add_argument("--out")
    run_p.add_argument("--replicates", type=_int_ish)

    re_p = sub.add_parser("reaction", help="estimate fates and the reaction term")
    re_p.add_argument("--k", type=int, default=3)
    re_p.add_argument("--regime", default="qlt1", choices=["qlt1", "qgt1"])
    re_p.add_argument("--replicates", type=_int_ish, default=1_000_000)
    re_p.add_argument("--t-trunc", type=float, default=1.0e4)
    re_p.add_argument("--seed", type=int, default=0)
    re_p.add_argument("--out", default="qvoter-out")

    gr_p = sub.add_parser("greens", help="hitting-time formula and simulation")
    gr_p.add_argument("--x", type=int, default=10)
    gr_p.add_argument("--z", type=int, default=100)
    gr_p.add_argument("--rate", default="linear")
    gr_p.add_argument("--replicates", type=_int_ish, default=100_000)
    gr_p.add_argument("--no-compare", action="store_true")
    gr_p.add_argument("--seed", type=int, default=0)
    gr_p.add_argument("--out", default="qvoter-out")

    du_p = sub.add_parser("duality", help="two-sided duality identity check")
    du_p.add_argument("--L", type=int, default=3)
    du_p.add_argument("--t", type=float, action="append",
                      help="dual time (repeatable)")
    du_p.add_argument("--replicates", type=_int_ish, default=100_000)
    du_p.add_argument("--seed", type=int, default=0)
    du_p.add_argument("--out", default="qvoter-out")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            with open(args.config) as f:
                raw = json.load(f)
            for key in ("seed", "threads", "out", "replicates"):
                val = getattr(args, key, None)
                if val is not None:
                    raw[key] = val
            cfg = validate_config(raw)
        elif args.command == "reaction":
            cfg = validate_config({
                "experiment": "reaction-term", "k": args.k,
                "regime": "q<1" if args.regime == "qlt1" else "q>1",
                "replicates": args.replicates, "t_trunc": args.t_trunc,
                "offsets": "e3" if args.k == 3 else "nn6",
                "seed": args.seed, "out": args.out,
            })
        elif args.command == "greens":
            cfg = validate_config({
                "experiment": "greens", "x": args.x, "z": args.z,
                "rate": args.rate, "compare": not args.no_compare,
                "replicates": args.replicates, "seed": args.seed,
                "out": args.out,
            })
        elif args.command == "duality":
            cfg = validate_config({
                "experiment": "duality-check", "L": args.L,
                "t_values": args.t or [1.0],
                "replicates": args.replicates, "seed": args.seed,
                "out": args.out,
            })
        else:  # pragma: no cover
            return 2
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        if isinstance(e, ConfigError):
            for err in e.errors:
                print(f"config error: {err}", file=sys.stderr)
        else:
            print(f"config error: {e}", file=sys.stderr)
        return 2
    try:
        record = run_experiment(cfg)
    except Exception as e:  # runtime failure
        print(f"runtime failure: {e}", file=sys.stderr)
        return 3
    print(f"wrote {len(record.outputs)} files to {cfg.values['out']} "
          f"in {record.wall_clock:.1f}s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
