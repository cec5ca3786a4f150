#!/usr/bin/env python3
"""Produce the full set of CSV artifacts via the CLI: term weights, gradient
ratio curves, and a pair of training logs (weighted loss vs plain KL) on the
same data, ready for rendering.

Usage: python scripts/make_golden_csvs.py [OUTDIR]   (default: out/)
"""

import subprocess
import sys
from pathlib import Path


def run(args):
    print("+ ckl", " ".join(args))
    subprocess.run([sys.executable, "-m", "ckl.cli", *args], check=True)


def main() -> int:
    outdir = Path(sys.argv[1] if len(sys.argv) > 1 else "out")
    outdir.mkdir(parents=True, exist_ok=True)

    run(["weights", "--positives", "3", "--negatives", "7", "--out", str(outdir / "weights.csv")])
    run(["curves", "--gamma", "5", "--beta", "0", "--lam", "0.1", "--out", str(outdir / "curves.csv")])

    common = [
        "--queries", "48", "--eval-queries", "16", "--positives", "2", "--negatives", "8",
        "--dim", "16", "--sigma", "0.5", "--corruption", "0.2", "--data-seed", "0",
        "--lr", "1.0", "--epochs", "15", "--batch-size", "8", "--init-seed", "0", "--shuffle-seed", "0",
    ]
    run(["train", "--loss", "ckl", *common, "--out", str(outdir / "trainlog_ckl.csv"),
         "--summary-out", str(outdir / "summary_ckl.json")])
    run(["train", "--loss", "kl", *common, "--out", str(outdir / "trainlog_kl.csv"),
         "--summary-out", str(outdir / "summary_kl.json")])
    run(["compare", "--losses", "kl,ckl", "--seeds", "0,1,2", *common,
         "--out", str(outdir / "compare.csv")])
    print(f"artifacts in {outdir}/")
    return 0


if __name__ == "__main__":
    sys.exit(main())
