"""Run every stage of the pipeline with the built-in defaults.

Usage::

    python3 scripts/run_pipeline.py [--out results] [--config FILE]

Writes one subdirectory per stage under ``--out`` and prints each report.
"""
import argparse
import sys
import time
from pathlib import Path

from pamjoint import cli

STAGES = [
    ("identify", []),
    ("synthesize", ["--weights", "all"]),
    ("step-sweep", []),
    ("track", []),
]


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="results")
    ap.add_argument("--config", default="paper-defaults")
    args = ap.parse_args()
    for name, extra in STAGES:
        t0 = time.perf_counter()
        code = cli.main([name, "--config", args.config, "--out", args.out, *extra])
        print(f"== {name}: exit {code} in {time.perf_counter() - t0:.1f} s")
        report = Path(args.out) / name / "report.txt"
        if report.exists():
            print(report.read_text())
        if code != cli.EXIT_OK:
            return code
    return 0


if __name__ == "__main__":
    sys.exit(main())
