#!/usr/bin/env python3
"""Run the numerical limit checks (estimator convergence, mixture limits,
breakdown sweep) and write CSV/markdown reports.

Usage: python3 scripts/run_theory_checks.py [--check ...] [--out DIR]
Forwards every flag to `rog theory`.
"""
import sys

from rog.cli import main

if __name__ == "__main__":
    sys.exit(main(["theory", *sys.argv[1:]]))
