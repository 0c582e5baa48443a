"""Command-line front end.

Exit codes: 0 when every selected check passes, 1 when any fails, 2 on a
configuration error (including a subsonic profile).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import SUITES, load_config
from .errors import ConfigError, SubsonicPoint, SupershearError
from .runner import run_dump, run_single, run_sweep, run_verify

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="INI file with [params] [flow] [grid] [boundary] [run]")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int, help="seed of the boundary perturbation")
    common.add_argument("--eps", type=float, help="viscosity for run and dump")
    common.add_argument("--flow", dest="flow_kind", help="base profile: quartic, couette, sine, constant")
    common.add_argument("--n1", type=int)
    common.add_argument("--n2", type=int)
    common.add_argument("--sweep", type=float, nargs="+", help="decreasing eps values")
    common.add_argument("--amplitude-scale", dest="amplitude_scale", type=float,
                        help="multiple of the admissible perturbation amplitude (0: none)")
    common.add_argument("--workers", type=int)
    common.add_argument("--suites", nargs="+", choices=SUITES)
    common.add_argument("-v", "--verbose", action="store_true")
    ap = argparse.ArgumentParser(prog="supershear", description="Supersonic shear flow zero-viscosity checks")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="solve one eps")
    sub.add_parser("sweep", parents=[common], help="solve the eps sweep and fit slopes")
    sub.add_parser("verify", parents=[common], help="run the selected check suites")
    sub.add_parser("dump", parents=[common], help="write the fields of one eps to CSV")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = {"out": args.out, "seed": args.seed, "flow_kind": args.flow_kind, "n1": args.n1,
                 "n2": args.n2, "amplitude_scale": args.amplitude_scale, "workers": args.workers,
                 "sweep": tuple(args.sweep) if args.sweep else None,
                 "suites": tuple(args.suites) if args.suites else None}
    try:
        cfg = load_config(args.config, overrides)
        cfg.validate(need_sweep=args.command in ("sweep", "verify"))
    except (ConfigError, SubsonicPoint) as exc:
        rec = exc.to_record()
        rec["stage"] = "validate_supersonic" if isinstance(exc, SubsonicPoint) else "config"
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "run":
            _, rep = run_single(cfg, args.eps)
        elif args.command == "sweep":
            _, rep = run_sweep(cfg)
        elif args.command == "verify":
            rep = run_verify(cfg)
        else:
            path = run_dump(cfg, args.eps)
            print(path)
            return EXIT_OK
    except SupershearError as exc:
        rec = exc.to_record()
        rec["command"] = args.command
        print(json.dumps(rec, sort_keys=True), file=sys.stderr)
        return EXIT_FAIL
    print("\n".join(rep.lines()))
    return EXIT_OK if rep.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
