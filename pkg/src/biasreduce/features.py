"""Feature families computed from a 24-month consumption series.

Families are concatenated in a fixed order: daily average, fixed interval,
generic statistics, intra-year difference, intra-year seasonal difference.
Every statistic works row-wise on an ``(n, 24)`` matrix so one series and a
whole population share the same code path.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import N_MONTHS, LabeledDataset, MonthlyTimeSeries

FAMILIES = (
    "daily_average",
    "fixed_interval",
    "generic",
    "intra_year_diff",
    "intra_year_seasonal_diff",
)


def _centered(x):
    return x - x.mean(axis=1, keepdims=True)


def _safe_ratio(num, den):
    # constant series: degenerate statistics are 0, never NaN
    out = np.zeros_like(num)
    np.divide(num, den, out=out, where=den > 0)
    return out


def _autocorr(lag: int) -> Callable[[np.ndarray], np.ndarray]:
    def f(x):
        d = _centered(x)
        return _safe_ratio(np.sum(d[:, :-lag] * d[:, lag:], axis=1), np.sum(d * d, axis=1))
    return f


def _skew(x):
    d = _centered(x)
    m2 = np.mean(d**2, axis=1)
    return _safe_ratio(np.mean(d**3, axis=1), m2**1.5)


def _kurtosis(x):
    # excess kurtosis from population moments
    d = _centered(x)
    m2 = np.mean(d**2, axis=1)
    return np.where(m2 > 0, _safe_ratio(np.mean(d**4, axis=1), m2**2) - 3.0, 0.0)


def _trend_slope(x):
    t = np.arange(x.shape[1], dtype=np.float64)
    tc = t - t.mean()
    return _centered(x) @ tc / (tc @ tc)


def _longest_run_above_mean(x):
    above = x > x.mean(axis=1, keepdims=True)
    run = np.zeros(x.shape[0])
    best = np.zeros(x.shape[0])
    for t in range(x.shape[1]):
        run = np.where(above[:, t], run + 1, 0.0)
        best = np.maximum(best, run)
    return best


GENERIC_STATISTICS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "mean": lambda x: x.mean(axis=1),
    "variance": lambda x: x.var(axis=1),
    "min": lambda x: x.min(axis=1),
    "max": lambda x: x.max(axis=1),
    "median": lambda x: np.median(x, axis=1),
    "skewness": _skew,
    "kurtosis": _kurtosis,
    **{f"autocorr_lag{k}": _autocorr(k) for k in range(1, 13)},
    "trend_slope": _trend_slope,
    "count_above_mean": lambda x: np.sum(x > x.mean(axis=1, keepdims=True), axis=1).astype(np.float64),
    "count_below_mean": lambda x: np.sum(x < x.mean(axis=1, keepdims=True), axis=1).astype(np.float64),
    "longest_run_above_mean": _longest_run_above_mean,
    "energy": lambda x: np.sum(x * x, axis=1),
    "mean_abs_change": lambda x: np.mean(np.abs(np.diff(x, axis=1)), axis=1),
}

DEFAULT_GENERIC_BANK = tuple(GENERIC_STATISTICS)
DEFAULT_WINDOWS = tuple((start, 2) for start in range(0, N_MONTHS, 2))


@dataclass(frozen=True)
class FeatureConfig:
    daily_average: bool = True
    fixed_interval: bool = True
    generic: bool = True
    intra_year_diff: bool = True
    intra_year_seasonal_diff: bool = True
    generic_bank: tuple[str, ...] = DEFAULT_GENERIC_BANK
    fixed_interval_windows: tuple[tuple[int, int], ...] = DEFAULT_WINDOWS

    def __post_init__(self):
        object.__setattr__(self, "generic_bank", tuple(self.generic_bank))
        object.__setattr__(
            self, "fixed_interval_windows", tuple(tuple(w) for w in self.fixed_interval_windows)
        )
        if not any(getattr(self, f) for f in FAMILIES):
            raise ValueError("at least one feature family must be enabled")
        for start, length in self.fixed_interval_windows:
            if start < 0 or length < 1 or start + length > N_MONTHS:
                raise ValueError(f"window ({start}, {length}) outside [0, {N_MONTHS})")
        unknown = [s for s in self.generic_bank if s not in GENERIC_STATISTICS]
        if unknown:
            raise ValueError(f"unknown generic statistic(s): {', '.join(unknown)}")
        if self.generic and not self.generic_bank:
            raise ValueError("generic family enabled with an empty statistic bank")


def _rows(series) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, MonthlyTimeSeries):
        return series.readings[None, :], series.period_days[None, :]
    readings, days = series
    return np.atleast_2d(readings).astype(np.float64), np.atleast_2d(days)


def _intra_year_difference(r):
    return r[:, 12:] - r[:, :12]


def _fixed_interval(daily, windows):
    out = []
    for start, length in windows:
        win = daily[:, start:start + length]
        out += [win.mean(axis=1), win.std(axis=1), win.max(axis=1)]
    return np.column_stack(out) if out else np.empty((daily.shape[0], 0))


def intra_year_difference(series: MonthlyTimeSeries) -> np.ndarray:
    """Year-over-year change: reading[t + 12] - reading[t] for t < 12."""
    return _intra_year_difference(_rows(series)[0])[0]


def intra_year_seasonal_difference(series: MonthlyTimeSeries) -> np.ndarray:
    return np.diff(intra_year_difference(series))


def daily_average_features(series: MonthlyTimeSeries) -> np.ndarray:
    """kWh/day for the 23 most recent months; the oldest month is dropped."""
    r, d = _rows(series)
    return (r / d)[0, 1:]


def fixed_interval_features(series: MonthlyTimeSeries, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Mean, std and max of kWh/day inside each configured (start, length) window."""
    r, d = _rows(series)
    return _fixed_interval(r / d, config.fixed_interval_windows)[0]


def generic_features(series: MonthlyTimeSeries, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    if not config.generic_bank:
        raise ValueError("empty generic statistic bank")
    x = _rows(series)[0]
    return np.array([GENERIC_STATISTICS[s](x)[0] for s in config.generic_bank])


def feature_names(config: FeatureConfig = FeatureConfig()) -> list[str]:
    names = []
    if config.daily_average:
        names += [f"daily_avg_m{t + 1:02d}" for t in range(1, N_MONTHS)]
    if config.fixed_interval:
        for start, length in config.fixed_interval_windows:
            names += [f"interval_{start:02d}_{length:02d}_{s}" for s in ("mean", "std", "max")]
    if config.generic:
        names += [f"generic_{s}" for s in config.generic_bank]
    if config.intra_year_diff:
        names += [f"yoy_diff_{t:02d}" for t in range(12)]
    if config.intra_year_seasonal_diff:
        names += [f"yoy_seasonal_diff_{t:02d}" for t in range(11)]
    return names


def feature_matrix(readings: np.ndarray, period_days: np.ndarray, config: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Extract all enabled families for every row of an ``(n, 24)`` reading matrix."""
    r = np.atleast_2d(np.asarray(readings, dtype=np.float64))
    daily = r / np.atleast_2d(period_days)
    parts = []
    if config.daily_average:
        parts.append(daily[:, 1:])
    if config.fixed_interval:
        parts.append(_fixed_interval(daily, config.fixed_interval_windows))
    if config.generic:
        parts.append(np.column_stack([GENERIC_STATISTICS[s](r) for s in config.generic_bank]))
    if config.intra_year_diff or config.intra_year_seasonal_diff:
        diff = _intra_year_difference(r)
        if config.intra_year_diff:
            parts.append(diff)
        if config.intra_year_seasonal_diff:
            parts.append(np.diff(diff, axis=1))
    return np.concatenate(parts, axis=1)


def extract_features(series: MonthlyTimeSeries, config: FeatureConfig = FeatureConfig()) -> tuple[np.ndarray, list[str]]:
    return feature_matrix(series.readings, series.period_days, config)[0], feature_names(config)


def featurize(
    series: Sequence[MonthlyTimeSeries],
    base: LabeledDataset,
    config: FeatureConfig = FeatureConfig(),
) -> LabeledDataset:
    """Swap the raw-reading matrix of ``base`` for the extracted features."""
    names = feature_names(config)
    if series:
        X = feature_matrix(
            np.array([s.readings for s in series]),
            np.array([s.period_days for s in series]),
            config,
        )
    else:
        X = np.empty((0, len(names)))
    return LabeledDataset(
        X=X,
        y=base.y,
        region=base.region,
        customer_class=base.customer_class,
        feature_names=tuple(names),
        ids=base.ids,
    )


def write_feature_matrix(path: str | Path, ds: LabeledDataset) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["customer_id", *ds.feature_names])
        for cid, row in zip(ds.ids, ds.X.tolist()):
            w.writerow([cid, *map(repr, row)])
