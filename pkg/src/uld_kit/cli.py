"""Command-line driver.

    uld-kit run <config> [--assert] [--out DIR] [--threads N]
    uld-kit selftest

Exit status: 0 on success, 2 when ``--assert`` is given and a check fails,
1 on any error.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import os
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .config import ExperimentConfig
from .experiments import midpoint_selftest_rows, noise_selftest_rows, oracle_selftest_rows, run

THREADS_ENV = "ULD_KIT_THREADS"


def _jsonable(v):
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.ndarray):
        return _jsonable(v.tolist())
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, np.floating):
        return float(v)
    return v


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(_jsonable(v))


def render_csv(columns, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c)) for c in columns])
    return buf.getvalue()


def _write(path, text):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def resolve_threads(arg):
    if arg is not None:
        return max(1, int(arg))
    env = os.environ.get(THREADS_ENV)
    return max(1, int(env)) if env else 1


def run_experiment(config_path, out_dir=None, threads=None, assert_checks=False):
    cfg = ExperimentConfig.from_file(config_path)
    out_dir = out_dir or cfg.out or os.path.join("runs", os.path.splitext(os.path.basename(config_path))[0])
    os.makedirs(out_dir, exist_ok=True)
    n_threads = resolve_threads(threads)
    started = datetime.now(timezone.utc).isoformat()
    t0 = time.perf_counter()
    result = run(cfg, threads=n_threads)
    elapsed = time.perf_counter() - t0

    summary = {
        "experiment": cfg.experiment,
        "checks": {k: bool(v) for k, v in result.checks.items()},
        "passed": result.passed,
        "result": _jsonable(result.summary),
    }
    files = {
        "results.csv": render_csv(result.columns, result.rows),
        "summary.json": json.dumps(summary, indent=2, sort_keys=True) + "\n",
    }
    files.update(result.extra_files)
    checksums = {name: _write(os.path.join(out_dir, name), text) for name, text in files.items()}
    manifest = {
        "config_hash": cfg.config_hash(),
        "config": _jsonable(cfg.as_dict()),
        "config_path": os.path.abspath(config_path),
        "code_version": f"uld_kit {__version__}",
        "numpy_version": np.__version__,
        "threads": n_threads,
        "started": started,
        "finished": datetime.now(timezone.utc).isoformat(),
        "elapsed_seconds": elapsed,
        "chain_wall_time": result.wall_time,
        "checksums": checksums,
    }
    _write(os.path.join(out_dir, "manifest.json"), json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    print(f"{cfg.experiment}: wrote {', '.join(sorted(files))} to {out_dir}")
    for name, ok in sorted(result.checks.items()):
        print(f"  [{'PASS' if ok else 'FAIL'}] {name}")
    if assert_checks and not result.passed:
        return 2
    return 0


def selftest(seed=20240611):
    sections = [
        ("noise", noise_selftest_rows([0.1, 1.0, float(np.sqrt(32.0)), 10.0], [1e-6, 1e-3, 0.1, 1.0], 200_000, seed)),
        ("midpoint", midpoint_selftest_rows([1e-6, 0.1, 1.0, 10.0], 100_000, seed)),
        ("oracle", oracle_selftest_rows(seed)),
    ]
    ok = True
    for name, (_, checks) in sections:
        for key, passed in sorted(checks.items()):
            ok &= bool(passed)
            print(f"[{'PASS' if passed else 'FAIL'}] {name}: {key}")
    return 0 if ok else 2


def main(argv=None):
    parser = argparse.ArgumentParser(prog="uld-kit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("config")
    p_run.add_argument("--assert", dest="assert_checks", action="store_true", help="exit 2 if any check fails")
    p_run.add_argument("--out", default=None, help="output directory")
    p_run.add_argument("--threads", type=int, default=None, help=f"worker threads (fallback: ${THREADS_ENV})")
    sub.add_parser("selftest", help="noise, midpoint and oracle validation")
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return run_experiment(args.config, args.out, args.threads, args.assert_checks)
        return selftest()
    except Exception as exc:  # noqa: BLE001 - the exit-code contract needs a catch-all
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
