"""Per-bias correction weights and their harmonic-mean combination.

Each bias contributes one ratio column, target-distribution probability over
training-distribution probability, computed on a single attribute:

* class imbalance: ratio of class priors,
* categorical covariate shift (region, customer class): ratio of category
  frequencies,
* continuous covariate shift: ratio of two univariate kernel density
  estimates.

Columns are clipped and then combined per example with the harmonic mean,
which is dominated by the smallest column and so damps outlying ratios.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import LabeledDataset
from .density import DensityModel, KdeSearchSpec, kde_fit, kde_select

DENSITY_FLOOR = 1e-300
DEFAULT_CLIP = (0.05, 20.0)
PRIOR_TOLERANCE = 1e-9

CLASS_IMBALANCE = "class_imbalance"
SPATIAL = "spatial"
CUSTOMER_CLASS = "customer_class"
FEATURE_PREFIX = "feature:"


class BiasConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ClassPriorSpec:
    train_priors: Mapping[int, float]
    target_priors: Mapping[int, float]

    def __post_init__(self):
        for name in ("train_priors", "target_priors"):
            priors = {int(k): float(v) for k, v in getattr(self, name).items()}
            if any(v <= 0 for v in priors.values()):
                raise ValueError(f"{name}: every prior must be > 0")
            if abs(sum(priors.values()) - 1.0) > PRIOR_TOLERANCE:
                raise ValueError(f"{name}: priors must sum to 1")
            object.__setattr__(self, name, priors)

    @classmethod
    def from_labels(cls, labels, target_priors: Mapping[int, float]) -> "ClassPriorSpec":
        """Training priors from the empirical class counts of ``labels``."""
        labels = np.asarray(labels)
        classes, counts = np.unique(labels, return_counts=True)
        train = {int(k): c / labels.size for k, c in zip(classes, counts)}
        return cls(train, target_priors)


@dataclass(frozen=True)
class CategoricalModel:
    """Empirical category frequencies standing in for a density."""

    frequencies: Mapping[str, float]

    @classmethod
    def fit(cls, values) -> "CategoricalModel":
        keys, counts = np.unique(np.asarray(values, dtype=str), return_counts=True)
        n = counts.sum()
        return cls({str(k): c / n for k, c in zip(keys, counts)})

    def density(self, values) -> np.ndarray:
        f = self.frequencies
        return np.array([f.get(str(v), 0.0) for v in np.atleast_1d(values)], dtype=np.float64)


@dataclass(frozen=True)
class CovariateShiftSpec:
    attribute: str
    train_model: DensityModel | CategoricalModel
    reference_model: DensityModel | CategoricalModel
    clip: tuple[float, float] = DEFAULT_CLIP
    # affine map applied to raw values before density evaluation (continuous only)
    shift: float = 0.0
    scale: float = 1.0

    def __post_init__(self):
        lo, hi = self.clip
        if not 0 < lo <= hi:
            raise ValueError("clip range must satisfy 0 < lo <= hi")
        if type(self.train_model) is not type(self.reference_model):
            raise BiasConfigError("train and reference models must be of the same kind")


def class_imbalance_weights(labels, spec: ClassPriorSpec) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.empty(labels.size)
    for k in np.unique(labels):
        k = int(k)
        if k not in spec.train_priors or k not in spec.target_priors:
            raise ValueError(f"class {k} missing from the priors")
        out[labels == k] = spec.target_priors[k] / spec.train_priors[k]
    return out


def covariate_shift_weights(values, spec: CovariateShiftSpec) -> np.ndarray:
    values = np.asarray(values)
    if isinstance(spec.train_model, DensityModel):
        values = (np.asarray(values, dtype=np.float64) - spec.shift) / spec.scale
        if not np.all(np.isfinite(values)):
            raise ValueError("values must be finite")
    ratio = spec.reference_model.density(values) / np.maximum(spec.train_model.density(values), DENSITY_FLOOR)
    return np.clip(ratio, *spec.clip)


def combine_weights_harmonic(per_bias) -> np.ndarray:
    """Row-wise harmonic mean: n / sum_k (1 / w_k)."""
    W = np.asarray(per_bias, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    if W.ndim != 2 or W.shape[1] < 1:
        raise ValueError("expected an (examples x biases) matrix with at least one column")
    if not np.all(np.isfinite(W)) or np.any(W <= 0):
        raise ValueError("all per-bias weights must be positive and finite (clip upstream)")
    return W.shape[1] / np.sum(1.0 / W, axis=1)


@dataclass(frozen=True)
class WeightSet:
    """Per-bias columns, their harmonic mean, and the mean-1 training weights.

    ``combined`` is exactly ``combine_weights_harmonic(per_bias)``;
    ``normalized`` rescales it to mean 1 and is what training consumes.
    """

    per_bias: np.ndarray
    combined: np.ndarray
    bias_names: tuple[str, ...]
    clip: tuple[float, float] = DEFAULT_CLIP

    @property
    def n(self) -> int:
        return len(self.bias_names)

    @property
    def normalized(self) -> np.ndarray:
        return self.combined / self.combined.mean()

    def column(self, name: str) -> np.ndarray:
        return self.per_bias[:, self.bias_names.index(name)]

    def write_csv(self, path: str | Path, ids: Sequence[str]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["customer_id", *(f"w_{_column_label(b)}" for b in self.bias_names), "w_combined", "w_train"])
            for cid, row, c, t in zip(ids, self.per_bias.tolist(), self.combined.tolist(), self.normalized.tolist()):
                w.writerow([cid, *map(repr, row), repr(c), repr(t)])


def _column_label(bias: str) -> str:
    return {CLASS_IMBALANCE: "class", SPATIAL: "spatial", CUSTOMER_CLASS: "customer_class"}.get(
        bias, bias.replace(FEATURE_PREFIX, "feature_")
    )


@dataclass(frozen=True)
class WeightConfig:
    clip: tuple[float, float] = DEFAULT_CLIP
    # None: reference priors if the reference is labelled, else 50/50
    target_priors: Mapping[int, float] | None = None
    kde: KdeSearchSpec = KdeSearchSpec()


def default_target_priors(reference: LabeledDataset | None) -> dict[int, float]:
    if reference is not None and reference.has_labels and len(np.unique(reference.y)) == 2:
        return {0: float(np.mean(reference.y == 0)), 1: float(np.mean(reference.y == 1))}
    return {0: 0.5, 1: 0.5}


def _attribute_for(bias: str) -> str:
    if bias == SPATIAL:
        return "region"
    if bias == CUSTOMER_CLASS:
        return "customer_class"
    if bias.startswith(FEATURE_PREFIX):
        return bias[len(FEATURE_PREFIX):]
    raise BiasConfigError(f"unknown bias {bias!r}")


def covariate_shift_spec(
    dataset: LabeledDataset,
    reference: LabeledDataset,
    bias: str,
    config: WeightConfig = WeightConfig(),
) -> CovariateShiftSpec:
    """Fit train and reference models for one covariate bias.

    Continuous attributes are standardized with the training mean/std before
    the KDE search; the density ratio is unchanged by a shared affine map.
    """
    attr = _attribute_for(bias)
    try:
        train_vals, ref_vals = dataset.attribute(attr), reference.attribute(attr)
    except KeyError as exc:
        raise BiasConfigError(str(exc)) from None
    if attr in ("region", "customer_class"):
        return CovariateShiftSpec(attr, CategoricalModel.fit(train_vals), CategoricalModel.fit(ref_vals), config.clip)
    shift = float(np.mean(train_vals))
    scale = float(np.std(train_vals)) or 1.0
    models = []
    for vals in (train_vals, ref_vals):
        z = (vals - shift) / scale
        kernel, h, _ = kde_select(z, config.kde)
        models.append(kde_fit(z, kernel, h))
    return CovariateShiftSpec(attr, models[0], models[1], config.clip, shift, scale)


def bias_column(
    dataset: LabeledDataset,
    reference: LabeledDataset | None,
    bias: str,
    config: WeightConfig = WeightConfig(),
) -> np.ndarray:
    """One clipped per-bias weight column for the examples of ``dataset``."""
    if bias == CLASS_IMBALANCE:
        dataset.require_both_classes()
        target = config.target_priors or default_target_priors(reference)
        spec = ClassPriorSpec.from_labels(dataset.y, target)
        return np.clip(class_imbalance_weights(dataset.y, spec), *config.clip)
    attr = _attribute_for(bias)
    if reference is None or len(reference) == 0:
        raise BiasConfigError(f"bias {bias!r} needs a reference population")
    spec = covariate_shift_spec(dataset, reference, bias, config)
    return covariate_shift_weights(dataset.attribute(attr), spec)


def weight_set_from_columns(columns: Sequence[np.ndarray], biases: Sequence[str], clip=DEFAULT_CLIP) -> WeightSet:
    per_bias = np.column_stack(columns)
    per_bias.setflags(write=False)
    combined = combine_weights_harmonic(per_bias)
    combined.setflags(write=False)
    return WeightSet(per_bias, combined, tuple(biases), tuple(clip))


def check_bias_list(biases: Sequence[str]) -> tuple[str, ...]:
    biases = tuple(biases)
    if not biases:
        raise BiasConfigError("bias list must not be empty")
    if len(set(biases)) != len(biases):
        raise BiasConfigError("bias list contains duplicates")
    for b in biases:
        if b != CLASS_IMBALANCE:
            _attribute_for(b)
    return biases


def build_weight_set(
    dataset: LabeledDataset,
    reference: LabeledDataset | None,
    biases: Sequence[str],
    config: WeightConfig = WeightConfig(),
) -> WeightSet:
    """Compute, clip and combine the requested bias columns for ``dataset``.

    Known biases: ``class_imbalance``, ``spatial`` (region frequencies),
    ``customer_class``, and ``feature:<name>`` (KDE on one feature column).
    """
    biases = check_bias_list(biases)
    cols = [bias_column(dataset, reference, b, config) for b in biases]
    return weight_set_from_columns(cols, biases, config.clip)


def uniform_weight_set(n: int) -> WeightSet:
    """The 'no bias reduced' configuration."""
    per_bias = np.ones((n, 1))
    return WeightSet(per_bias, combine_weights_harmonic(per_bias), ("none",), (1.0, 1.0))

