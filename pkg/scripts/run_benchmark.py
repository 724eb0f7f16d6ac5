#!/usr/bin/env python3
"""Run the full synthetic benchmark (five methods x noise rates).

Usage: python3 scripts/run_benchmark.py [--out DIR] [--deltas ...] [--seed N]
Forwards every flag to `rog bench`.
"""
import sys

from rog.cli import main

if __name__ == "__main__":
    sys.exit(main(["bench", *sys.argv[1:]]))
