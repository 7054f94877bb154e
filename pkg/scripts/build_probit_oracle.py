"""Freeze high-precision normal quantiles for the probit accuracy check.

Writes tests/data/probit_oracle.csv: 1,000 log-spaced probabilities covering
[1e-9, 1 - 1e-9] (500 in each tail, mirrored) with their quantiles computed
by tests/oracles.quantile_hp at 50 significant digits.
"""
import csv
import sys
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))
from oracles import quantile_hp  # noqa: E402


def grid() -> np.ndarray:
    lower = np.logspace(-9, np.log10(0.5), 500)
    return np.concatenate([lower, 1.0 - lower[::-1]])


def main(out=ROOT / "tests" / "data" / "probit_oracle.csv"):
    ps = grid()
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("p", "z"))
        for p in ps:
            w.writerow((repr(float(p)), repr(quantile_hp(float(p)))))
    print(f"wrote {len(ps)} rows to {out}")


if __name__ == "__main__":
    main()
