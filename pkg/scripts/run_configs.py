"""Run experiment configs through the CLI and report checks and wall time.

    python scripts/run_configs.py                 # every config in configs/
    python scripts/run_configs.py kl_scaling concentration --threads 4
"""

import argparse
import json
import sys
import time
from pathlib import Path

from uld_kit.cli import main as cli_main

ROOT = Path(__file__).resolve().parents[1]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("names", nargs="*", help="config stems (default: all)")
    ap.add_argument("--out", default=str(ROOT / "runs"))
    ap.add_argument("--threads", default="1")
    args = ap.parse_args()
    names = args.names or sorted(p.stem for p in (ROOT / "configs").glob("*.cfg"))
    failed = []
    for name in names:
        out = Path(args.out) / name
        t0 = time.perf_counter()
        code = cli_main(["run", str(ROOT / "configs" / f"{name}.cfg"), "--out", str(out),
                         "--threads", args.threads, "--assert"])
        elapsed = time.perf_counter() - t0
        summary = json.loads((out / "summary.json").read_text()) if (out / "summary.json").exists() else {}
        print(f"{name}: exit {code}, {elapsed:.1f}s, passed={summary.get('passed')}")
        if code:
            failed.append(name)
    if failed:
        print("failed:", ", ".join(failed))
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())
