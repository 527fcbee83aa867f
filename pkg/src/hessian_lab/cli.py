"""Command line runner: one subcommand per experiment, JSON configs, presets.

Exit status 0 when every check passes, 1 when a check fails (or the run
aborts), 2 when the configuration does not validate.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from .errors import HessianLabError
from .experiments import EXPERIMENTS, PRESETS, Check, ExperimentConfig, run_experiment

EXIT_OK, EXIT_FAIL, EXIT_INVALID = 0, 1, 2


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hessian-lab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--out", type=Path, help="output directory (default results/<experiment>)")
        p.add_argument("--preset", choices=sorted(PRESETS))
        p.add_argument("--seed", type=_seed)
    return parser


def load_config(args) -> ExperimentConfig:
    data = {"experiment": args.experiment}
    if args.preset:
        preset = dict(PRESETS[args.preset])
        if preset["experiment"] != args.experiment:
            raise ValueError(f"preset {args.preset!r} belongs to {preset['experiment']!r}")
        data.update(preset)
    if args.config:
        with open(args.config) as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise ValueError("config must be a JSON object")
        if user.get("experiment", args.experiment) != args.experiment:
            raise ValueError("config experiment does not match the subcommand")
        data.update(user)
    if args.seed is not None:
        data["seed"] = args.seed
    return ExperimentConfig.from_dict(data)


def _dump(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        cfg = load_config(args)
    except (ValueError, TypeError, KeyError, OSError, HessianLabError) as exc:
        print(json.dumps({"error": "validation", "message": str(exc)}), file=sys.stderr)
        return EXIT_INVALID
    out = args.out or Path("results") / cfg.experiment
    out.mkdir(parents=True, exist_ok=True)
    started = datetime.now(timezone.utc).isoformat()
    clock = time.perf_counter()
    error = None
    try:
        checks = run_experiment(cfg, out)
    except HessianLabError as exc:
        error = f"{type(exc).__name__}: {exc}"
        checks = [Check("run_completed", 0.0, 1.0, ">=", "exact")]
    failed = [c.name for c in checks if not c.passed]
    files = sorted(p.name for p in out.iterdir() if p.name not in ("summary.json", "run_info.json"))
    summary = {"experiment": cfg.experiment, "preset": args.preset, "seed": cfg.seed,
               "config": cfg.to_dict(), "checks": [c.to_dict() for c in checks],
               "passed": not failed, "failed_checks": failed, "error": error, "files": files}
    _dump(out / "summary.json", summary)
    _dump(out / "run_info.json", {"started_utc": started,
                                   "finished_utc": datetime.now(timezone.utc).isoformat(),
                                   "elapsed_seconds": round(time.perf_counter() - clock, 3)})
    for name in failed:
        print(f"FAILED {name}", file=sys.stderr)
    if error:
        print(error, file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
