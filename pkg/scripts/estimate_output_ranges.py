"""Regenerate the frozen output-range constants for Branin-Currin.

Scans the unit box with a 10,000-point Sobol sequence, takes the per-objective
min/max of the raw (negated) values, and pads by 1% of the span on each side
so the true optima stay strictly inside the normalization range. The printed
array is what src/paretonav/problems.py freezes as _BRANIN_CURRIN_RANGE.
"""

import warnings

import numpy as np
from scipy.stats import qmc

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from paretonav.problems import _branin_raw, _currin_raw  # noqa: E402


def main():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        X = qmc.Sobol(d=2, scramble=False).random(10_000)
    Y = np.stack([-_branin_raw(X), -_currin_raw(X)], axis=1)
    lo = Y.min(axis=0)
    hi = Y.max(axis=0)
    pad = 0.01 * (hi - lo)
    lo -= pad
    hi += pad
    print("_BRANIN_CURRIN_RANGE = np.array(")
    print("    [")
    for l, h in zip(lo, hi):
        print(f"        [{l!r}, {h!r}],")
    print("    ]")
    print(")")


if __name__ == "__main__":
    main()
