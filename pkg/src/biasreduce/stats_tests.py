"""Independence tests used to screen features against the binary label.

Binary features (at most two distinct values) go through a two-sided
Fisher exact test, everything else through a two-sample Kolmogorov-Smirnov
test comparing the feature's values in class 0 against class 1.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

FISHER_TIE_TOLERANCE = 1e-7
_TIE_SCALE = 10**7  # integer form of 1 + FISHER_TIE_TOLERANCE
KS_SERIES_EPS = 1e-10


class ContingencyTable2x2(NamedTuple):
    """Counts laid out as [[a, b], [c, d]] (rows: feature value, cols: label)."""

    a: int
    b: int
    c: int
    d: int

    @classmethod
    def from_nested(cls, table) -> "ContingencyTable2x2":
        (a, b), (c, d) = table
        return cls(int(a), int(b), int(c), int(d))


def fisher_exact_two_sided(t) -> float:
    """Two-sided Fisher exact p-value by point-probability summation.

    Sums the hypergeometric probability of every table with the observed
    margins that is no more likely than the observed one (relative tie
    tolerance 1e-7). Arithmetic is done on exact integers; only the final
    ratio is rounded.
    """
    if not isinstance(t, ContingencyTable2x2):
        t = ContingencyTable2x2.from_nested(t)
    if min(t) < 0:
        raise ValueError("contingency counts must be nonnegative")
    a, b, c, d = t
    n = a + b + c + d
    if n == 0:
        return 1.0
    row0, row1, col0 = a + b, c + d, a + c
    lo, hi = max(0, col0 - row1), min(row0, col0)
    # numerator of P(table with top-left = k) over the common denominator C(n, col0)
    weights = [math.comb(row0, k) * math.comb(row1, col0 - k) for k in range(lo, hi + 1)]
    observed = weights[a - lo]
    limit = observed * (_TIE_SCALE + 1)
    total = sum(wk for wk in weights if wk * _TIE_SCALE <= limit)
    p = total / math.comb(n, col0)
    return min(1.0, p)


def ks_statistic(x, y) -> float:
    """sup |ECDF_x - ECDF_y| evaluated over the pooled sample points."""
    x = np.sort(np.asarray(x, dtype=np.float64))
    y = np.sort(np.asarray(y, dtype=np.float64))
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be non-empty")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ValueError("samples must be finite")
    pts = np.concatenate([x, y])
    fx = np.searchsorted(x, pts, side="right") / x.size
    fy = np.searchsorted(y, pts, side="right") / y.size
    return float(np.max(np.abs(fx - fy)))


def kolmogorov_sf(lam: float) -> float:
    """Survival function of the Kolmogorov distribution, Q(lam)."""
    if lam <= 0.0:
        return 1.0
    total = 0.0
    k = 1
    while True:
        term = 2.0 * (-1) ** (k - 1) * math.exp(-2.0 * k * k * lam * lam)
        total += term
        if abs(term) < KS_SERIES_EPS or k > 10_000:
            break
        k += 1
    return min(1.0, max(0.0, total))


def ks_two_sample(x, y) -> tuple[float, float]:
    """Two-sample KS statistic and asymptotic two-sided p-value."""
    D = ks_statistic(x, y)
    n, m = len(x), len(y)
    ne = n * m / (n + m)
    # the series converges slowly near 0 where Q is 1 to double precision
    lam = math.sqrt(ne) * D
    p = 1.0 if lam < 0.2 else kolmogorov_sf(lam)
    return D, p


@dataclass(frozen=True)
class SelectionResult:
    retained_mask: np.ndarray
    p_values: np.ndarray
    test_used: tuple[str, ...]

    @property
    def n_retained(self) -> int:
        return int(self.retained_mask.sum())


def _binary_table(col: np.ndarray, labels: np.ndarray) -> ContingencyTable2x2:
    values = np.unique(col)
    hi = col == values[-1]
    if values.size == 1:
        # constant feature: every example sits in the "low" row
        hi = np.zeros_like(hi)
    pos = labels == 1
    return ContingencyTable2x2(
        int(np.sum(~hi & ~pos)), int(np.sum(~hi & pos)),
        int(np.sum(hi & ~pos)), int(np.sum(hi & pos)),
    )


def select_features(matrix, labels, alpha: float = 0.05) -> SelectionResult:
    """Keep features whose p-value against the label is below ``alpha``."""
    X = np.asarray(matrix, dtype=np.float64)
    y = np.asarray(labels)
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError("matrix rows must match labels")
    if not np.all(np.isfinite(X)):
        raise ValueError("matrix must be finite")
    if len(np.unique(y)) != 2:
        raise ValueError("selection needs both label classes present")
    pos = y == 1
    p_values = np.empty(X.shape[1])
    tests = []
    for j in range(X.shape[1]):
        col = X[:, j]
        if np.unique(col).size <= 2:
            p_values[j] = fisher_exact_two_sided(_binary_table(col, y))
            tests.append("fisher")
        else:
            p_values[j] = ks_two_sample(col[~pos], col[pos])[1]
            tests.append("ks")
    mask = p_values < alpha
    mask.setflags(write=False)
    p_values.setflags(write=False)
    return SelectionResult(mask, p_values, tuple(tests))


def write_selection_report(path: str | Path, names: Sequence[str], result: SelectionResult) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature_name", "test", "p_value", "retained"])
        for name, test, p, keep in zip(names, result.test_used, result.p_values, result.retained_mask):
            w.writerow([name, test, repr(float(p)), int(keep)])
