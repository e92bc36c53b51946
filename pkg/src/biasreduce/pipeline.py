"""Shared preparation steps: ingest or synthesize, featurize, select features."""
from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

from .core import IngestSchema, LabeledDataset, Reject, load_dataset
from .features import FeatureConfig, feature_names, featurize
from .stats_tests import SelectionResult, select_features
from .synthgen import SynthConfig, generate_population, reference_population, sample_biased_training


@dataclass(frozen=True)
class Prepared:
    train: LabeledDataset  # selected features only
    reference: LabeledDataset | None  # same feature columns as train
    selection: SelectionResult | None
    all_feature_names: tuple[str, ...]
    rejects: tuple[Reject, ...] = ()


def featurize_and_select(
    train: LabeledDataset,
    train_series,
    reference: LabeledDataset | None,
    reference_series,
    features: FeatureConfig = FeatureConfig(),
    alpha: float | None = 0.05,
    rejects=(),
) -> Prepared:
    """Extract features for both sets and keep the ones selected on ``train``.

    ``alpha=None`` skips selection and keeps every feature.
    """
    tr = featurize(train_series, train, features)
    ref = None if reference is None else featurize(reference_series, reference, features)
    selection = None
    if alpha is not None:
        selection = select_features(tr.X, tr.y, alpha)
        mask = selection.retained_mask
        if not mask.any():
            mask = mask.copy()
            mask[:] = True  # nothing passes: fall back to all features rather than an empty matrix
        tr = tr.select_features(mask)
        ref = None if ref is None else ref.select_features(mask)
    return Prepared(tr, ref, selection, tuple(feature_names(features)), tuple(rejects))


def prepare_files(
    train_path: str | Path,
    reference_path: str | Path | None,
    features: FeatureConfig = FeatureConfig(),
    alpha: float | None = 0.05,
    schema: IngestSchema = IngestSchema(),
) -> Prepared:
    train = load_dataset(train_path, schema)
    train.dataset.require_both_classes()
    ref = None
    if reference_path is not None:
        ref = load_dataset(reference_path, replace(schema, require_label=False))
    return featurize_and_select(
        train.dataset, train.series,
        None if ref is None else ref.dataset, None if ref is None else ref.series,
        features, alpha, train.rejects,
    )


def prepare_synthetic(
    cfg: SynthConfig,
    features: FeatureConfig = FeatureConfig(),
    alpha: float | None = 0.05,
):
    """Generate, sample and prepare; returns (Prepared, BiasedSample)."""
    population, truth = generate_population(cfg)
    sample = sample_biased_training(population, truth, cfg)
    prepared = featurize_and_select(
        sample.training, sample.series, reference_population(population), population.series, features, alpha,
    )
    return prepared, sample
