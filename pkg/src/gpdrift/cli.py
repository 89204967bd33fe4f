"""
Command-line harness: ``gpdrift {mc,consistency,d2c,residual,ops} --config cfg.json``.

Exit codes: 0 all checks pass, 2 configuration error, 3 numerical-solver failure,
4 statistical or tolerance check failure. The CSV body is a pure function of the
config (and ``--seed``); run metadata goes to a JSON sidecar next to it.
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from gpdrift import __version__
from gpdrift.errors import DegenerateCovarianceError, NonSolvableError, ParameterError, SolverError
from gpdrift.experiments import EXPERIMENTS, SCHEMA_VERSION, ConfigError, parse_config, run

OUT_DIR_ENV = "GPDRIFT_OUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_CHECK = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gpdrift", description=__doc__.strip().splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name, long in EXPERIMENTS.items():
        s = sub.add_parser(name, help=long)
        s.add_argument("--config", required=True, type=Path, help="JSON experiment configuration")
        s.add_argument("--out", type=Path, help=f"CSV output path (default: ${OUT_DIR_ENV}/{name}.csv or ./results/)")
        s.add_argument("--workers", type=int, default=1, help="worker processes for replications")
        s.add_argument("--seed", type=int, help="override master_seed from the config")
    return p


def output_path(args, cfg) -> Path:
    if args.out is not None:
        return args.out
    if cfg.output_path:
        return Path(cfg.output_path)
    return Path(os.environ.get(OUT_DIR_ENV, "results")) / f"{args.command}.csv"


def sidecar_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".meta.json")


def git_revision() -> str | None:
    try:
        r = subprocess.run(
            ["git", "rev-parse", "HEAD"],
            capture_output=True,
            text=True,
            check=True,
            cwd=Path(__file__).resolve().parent,
            timeout=10,
        )
    except (OSError, subprocess.SubprocessError):
        return None
    return r.stdout.strip() or None


def load_config(path: Path, command: str, seed: int | None):
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if seed is not None:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = {**doc, "master_seed": seed}
    return parse_config(doc, command)


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        if args.workers < 1:
            raise ConfigError("--workers must be >= 1")
        cfg = load_config(args.config, args.command, args.seed)
        report = run(cfg, workers=args.workers)
    except (ConfigError, ParameterError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, NonSolvableError, DegenerateCovarianceError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER

    code = report.exit_code()
    out = output_path(args, cfg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_csv())
    meta = {
        "schema_version": SCHEMA_VERSION,
        "experiment": cfg.long_name,
        "config": cfg.source,
        "master_seed": cfg.master_seed,
        "workers": args.workers,
        "git_revision": git_revision(),
        "started_utc": started,
        "wall_time_s": time.perf_counter() - t0,
        "exit_code": code,
        "versions": {"gpdrift": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
    }
    sidecar_path(out).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    failed = [r for r in report.rows if not r.passed]
    print(f"{cfg.long_name}: {len(report.rows)} rows, {len(failed)} failed -> {out}")
    for r in failed:
        print(f"  FAIL {r.check} value={r.value} bounds=[{r.lower}, {r.upper}] {r.status} {r.detail}".rstrip())
    return code


if __name__ == "__main__":
    sys.exit(main())
