#!/usr/bin/env python3
"""Run every shipped preset through the CLI and collect the outputs.

    python3 scripts/reproduce_all.py [--out results] [--workers 4]
"""

import argparse
import sys
import time
from pathlib import Path

from qnetsim.cli import main

RUNS = [
    ("simulate", "ee_fig2b"),
    ("simulate", "nn_fig3b"),
    ("simulate", "deployed_fig4c"),
    ("sweep", "mu_sweep"),
    ("sweep", "decoupling_sweep"),
    ("sweep", "fiber_sweep"),
    ("budget", "table_s1"),
    ("budget", "table_s2"),
    ("budget", "table_s3"),
    ("budget", "ext_rates"),
]


def run(out: Path, workers: int | None) -> int:
    failed = 0
    for command, preset in RUNS:
        argv = [command, "--preset", preset, "--out", str(out / preset)]
        if workers:
            argv += ["--workers", str(workers)]
        t0 = time.perf_counter()
        code = main(argv)
        print(f"{preset:18s} {command:8s} exit={code} {time.perf_counter() - t0:6.1f} s")
        failed += code != 0
    return failed


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int)
    args = ap.parse_args()
    sys.exit(1 if run(args.out, args.workers) else 0)
