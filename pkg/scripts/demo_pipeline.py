#!/usr/bin/env python3
"""End-to-end demo: synthesize contaminated data, fit the robust model and
the sample baseline, and evaluate both on the clean test split.

Usage: python3 scripts/demo_pipeline.py [workdir]
"""
import sys
from pathlib import Path

from rog.cli import main

workdir = Path(sys.argv[1] if len(sys.argv) > 1 else "demo-out")
data = workdir / "data"

steps = [
    ["synth", "--out", str(data), "--classes", "4", "--dim", "8",
     "--n-per-class", "500", "--n-val", "200", "--n-test", "2000",
     "--delta-out", "0.2", "--noise", "flip", "--rate", "0.2"],
]
for estimator in ("mcd", "sample"):
    fit_dir = workdir / f"fit-{estimator}"
    steps.append(["fit", "--out", str(fit_dir), "--estimator", estimator,
                  "--layer", str(data / "train.rogf"), "--imax", "10"])
    steps.append(["eval", "--out", str(workdir / f"eval-{estimator}"),
                  "--model", str(fit_dir / "model"),
                  "--layer", str(data / "test.rogf"),
                  "--estimator", estimator])

for argv in steps:
    print("+ rog", " ".join(argv))
    code = main(argv)
    if code != 0:
        sys.exit(code)

for estimator in ("mcd", "sample"):
    metrics = (workdir / f"eval-{estimator}" / "metrics.csv").read_text()
    print(f"--- {estimator} ---")
    print(metrics)
