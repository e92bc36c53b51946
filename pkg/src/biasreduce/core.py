"""Data model and CSV ingestion for labelled customer populations."""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

N_MONTHS = 24
DEFAULT_PERIOD_DAYS = 30
MAX_PERIOD_DAYS = 62


class SchemaError(ValueError):
    """The file layout does not match the ingestion schema."""


class DataError(ValueError):
    """The data itself is unusable (empty file, too many bad rows, ...)."""


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MonthlyTimeSeries:
    """24 monthly readings of one customer, oldest first."""

    customer_id: str
    readings: np.ndarray
    period_days: np.ndarray = field(
        default_factory=lambda: np.full(N_MONTHS, DEFAULT_PERIOD_DAYS, dtype=np.int64)
    )

    def __post_init__(self):
        readings = np.array(self.readings, dtype=np.float64)
        days = np.array(self.period_days, dtype=np.int64)
        reason = series_problem(readings, days)
        if reason is not None:
            raise DataError(f"{self.customer_id}: {reason}")
        object.__setattr__(self, "readings", _frozen(readings))
        object.__setattr__(self, "period_days", _frozen(days))


def series_problem(readings: np.ndarray, days: np.ndarray) -> str | None:
    """Return the reason a series violates its invariants, or None."""
    if readings.shape != (N_MONTHS,):
        return f"expected {N_MONTHS} readings, got {readings.size}"
    if days.shape != (N_MONTHS,):
        return f"expected {N_MONTHS} period lengths, got {days.size}"
    if not np.all(np.isfinite(readings)):
        return "non-finite reading"
    if np.any(readings < 0):
        return "negative reading"
    if np.any((days < 1) | (days > MAX_PERIOD_DAYS)):
        return "period_days out of range"
    return None


@dataclass(frozen=True)
class LabeledDataset:
    """Feature matrix plus label and categorical attributes per example.

    ``y`` is None for unlabelled reference populations.
    """

    X: np.ndarray
    y: np.ndarray | None
    region: np.ndarray
    customer_class: np.ndarray
    feature_names: tuple[str, ...]
    ids: tuple[str, ...]

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, len(self.feature_names))
        n = X.shape[0]
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix width must equal len(feature_names)")
        if not np.all(np.isfinite(X)):
            raise DataError("feature matrix contains NaN or infinite values")
        if len(set(self.feature_names)) != len(self.feature_names):
            raise ValueError("feature names must be unique")
        region = np.array([str(r) for r in self.region], dtype=object)
        cclass = np.array([str(c) for c in self.customer_class], dtype=object)
        if len(region) != n or len(cclass) != n or len(self.ids) != n:
            raise ValueError("attribute lengths differ from the number of examples")
        object.__setattr__(self, "X", _frozen(X))
        object.__setattr__(self, "region", _frozen(region))
        object.__setattr__(self, "customer_class", _frozen(cclass))
        object.__setattr__(self, "feature_names", tuple(self.feature_names))
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        if self.y is not None:
            y = np.asarray(self.y)
            if y.shape != (n,) or not np.all((y == 0) | (y == 1)):
                raise ValueError("labels must be a binary vector of length n")
            object.__setattr__(self, "y", _frozen(y.astype(np.int8)))

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def has_labels(self) -> bool:
        return self.y is not None

    def attribute(self, name: str) -> np.ndarray:
        if name == "region":
            return self.region
        if name == "customer_class":
            return self.customer_class
        try:
            return self.X[:, self.feature_names.index(name)]
        except ValueError:
            raise KeyError(f"unknown attribute {name!r}") from None

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx)
        return LabeledDataset(
            X=self.X[idx],
            y=None if self.y is None else self.y[idx],
            region=self.region[idx],
            customer_class=self.customer_class[idx],
            feature_names=self.feature_names,
            ids=tuple(np.asarray(self.ids, dtype=object)[idx]),
        )

    def select_features(self, mask) -> "LabeledDataset":
        mask = np.asarray(mask, dtype=bool)
        return LabeledDataset(
            X=self.X[:, mask],
            y=self.y,
            region=self.region,
            customer_class=self.customer_class,
            feature_names=tuple(n for n, keep in zip(self.feature_names, mask) if keep),
            ids=self.ids,
        )

    def require_both_classes(self):
        if self.y is None:
            raise DataError("dataset has no labels")
        if len(np.unique(self.y)) < 2:
            raise DataError("dataset needs at least one example of each class")

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        if self.y is not None:
            h.update(self.y.tobytes())
        for col in (self.region, self.customer_class, self.feature_names, self.ids):
            h.update("\x1f".join(col).encode())
            h.update(b"\x1e")
        return h.hexdigest()


@dataclass(frozen=True)
class IngestSchema:
    id_column: str = "customer_id"
    reading_prefix: str = "m"
    days_prefix: str = "days"
    n_months: int = N_MONTHS
    label_column: str = "label"
    region_column: str = "region"
    class_column: str = "customer_class"
    require_label: bool = True
    max_reject_fraction: float = 0.10

    @property
    def reading_columns(self) -> list[str]:
        return [f"{self.reading_prefix}{t:02d}" for t in range(1, self.n_months + 1)]

    @property
    def days_columns(self) -> list[str]:
        return [f"{self.days_prefix}{t:02d}" for t in range(1, self.n_months + 1)]


class Reject(NamedTuple):
    row_number: int
    reason: str


class LoadResult(NamedTuple):
    dataset: LabeledDataset
    series: list[MonthlyTimeSeries]
    rejects: list[Reject]


def _check_header(header: Sequence[str], schema: IngestSchema) -> bool:
    """Validate the header; returns whether a label column is present."""
    if schema.n_months != N_MONTHS:
        raise SchemaError(f"schema declares {schema.n_months} months, series need {N_MONTHS}")
    cols = set(header)
    required = [schema.id_column, schema.region_column, schema.class_column, *schema.reading_columns]
    if schema.require_label:
        required.append(schema.label_column)
    missing = [c for c in required if c not in cols]
    if missing:
        raise SchemaError(f"missing column(s): {', '.join(missing)}")
    declared = set(schema.reading_columns)
    extra = [
        c for c in header
        if c.startswith(schema.reading_prefix)
        and c[len(schema.reading_prefix):].isdigit()
        and c not in declared
    ]
    if extra:
        raise SchemaError(
            f"file has reading column(s) {', '.join(extra)} beyond the "
            f"{schema.n_months} declared in the schema"
        )
    present_days = [c for c in schema.days_columns if c in cols]
    if present_days and len(present_days) != schema.n_months:
        raise SchemaError("period-day columns must be all present or all absent")
    return schema.label_column in cols


def load_dataset(path: str | Path, schema: IngestSchema | None = None) -> LoadResult:
    """Read a population CSV, collecting rows that break series invariants.

    Row numbers in the rejects report count data rows from 1 (header excluded).
    Raises :class:`DataError` if the file is empty or the reject fraction
    exceeds ``schema.max_reject_fraction``.
    """
    schema = schema or IngestSchema()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        has_label = _check_header(header, schema)
        pos = {c: i for i, c in enumerate(header)}
        has_days = schema.days_columns[0] in pos

        ids, labels, regions, classes, series, rejects = [], [], [], [], [], []
        row_number = 0
        for row in reader:
            if not row:
                continue
            row_number += 1
            if len(row) != len(header):
                rejects.append(Reject(row_number, "wrong number of fields"))
                continue
            reason, readings, days, label = None, [], [], None
            for c in schema.reading_columns:
                try:
                    readings.append(float(row[pos[c]]))
                except ValueError:
                    reason = f"non-numeric reading in {c}"
                    break
            if reason is None and has_days:
                for c in schema.days_columns:
                    try:
                        days.append(int(row[pos[c]]))
                    except ValueError:
                        reason = f"non-integer period length in {c}"
                        break
            if reason is None and not has_days:
                days = [DEFAULT_PERIOD_DAYS] * N_MONTHS
            if reason is None:
                reason = series_problem(np.array(readings), np.array(days))
            if reason is None and has_label:
                raw = row[pos[schema.label_column]].strip()
                if raw not in ("0", "1"):
                    reason = "label must be 0 or 1"
                else:
                    label = int(raw)
            if reason is not None:
                rejects.append(Reject(row_number, reason))
                continue
            cid = row[pos[schema.id_column]]
            ids.append(cid)
            labels.append(label)
            regions.append(row[pos[schema.region_column]].strip())
            classes.append(row[pos[schema.class_column]].strip())
            series.append(MonthlyTimeSeries(cid, np.array(readings), np.array(days)))

    if row_number == 0:
        raise DataError(f"{path}: no data rows")
    frac = len(rejects) / row_number
    if frac > schema.max_reject_fraction:
        raise DataError(
            f"{path}: {len(rejects)} of {row_number} rows rejected "
            f"({frac:.1%} > {schema.max_reject_fraction:.1%})"
        )
    X = np.array([s.readings for s in series]).reshape(len(series), N_MONTHS)
    ds = LabeledDataset(
        X=X,
        y=np.array(labels, dtype=np.int8) if has_label else None,
        region=regions,
        customer_class=classes,
        feature_names=tuple(schema.reading_columns),
        ids=tuple(ids),
    )
    return LoadResult(ds, series, rejects)


def save_dataset(
    path: str | Path,
    series: Sequence[MonthlyTimeSeries],
    labels: Sequence[int] | None,
    regions: Sequence[str],
    classes: Sequence[str],
) -> None:
    """Write series in the canonical ingestion layout (floats via repr, exact)."""
    schema = IngestSchema()
    header = [schema.id_column, *schema.reading_columns, *schema.days_columns]
    if labels is not None:
        header.append(schema.label_column)
    header += [schema.region_column, schema.class_column]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, s in enumerate(series):
            row = [s.customer_id, *map(repr, s.readings.tolist()), *map(str, s.period_days.tolist())]
            if labels is not None:
                row.append(str(int(labels[i])))
            row += [regions[i], classes[i]]
            w.writerow(row)


def write_rejects(path: str | Path, rejects: Sequence[Reject]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["row_number", "reason"])
        w.writerows(rejects)


@dataclass(frozen=True)
class ValidationReport:
    n_examples: int
    class_counts: dict[int, int]
    region_counts: dict[str, int]
    customer_class_counts: dict[str, int]
    nan_counts: dict[str, int]
    feature_min: dict[str, float]
    feature_max: dict[str, float]
    degenerate: bool


def _counts(values) -> dict:
    keys, counts = np.unique(np.asarray(values), return_counts=True)
    return {k: int(c) for k, c in zip(keys.tolist(), counts)}


def validate_dataset(ds: LabeledDataset) -> ValidationReport:
    n = len(ds)
    class_counts = {0: 0, 1: 0}
    if ds.y is not None:
        class_counts.update(_counts(ds.y))
    X = ds.X
    nan = np.isnan(X).sum(axis=0) if n else np.zeros(X.shape[1], dtype=int)
    fmin = X.min(axis=0) if n else np.full(X.shape[1], math.nan)
    fmax = X.max(axis=0) if n else np.full(X.shape[1], math.nan)
    names = ds.feature_names
    return ValidationReport(
        n_examples=n,
        class_counts=class_counts,
        region_counts=_counts(ds.region) if n else {},
        customer_class_counts=_counts(ds.customer_class) if n else {},
        nan_counts={k: int(v) for k, v in zip(names, nan)},
        feature_min={k: float(v) for k, v in zip(names, fmin)},
        feature_max={k: float(v) for k, v in zip(names, fmax)},
        degenerate=n == 0 or (ds.y is not None and min(class_counts.values()) == 0),
    )
