"""Synthetic customer populations with a known inspection (selection) model.

Each customer has a region, a customer class, an NTL label and 24 monthly
readings. Inspection probability is log-linear in region, class and recent
consumption level, so the labelled (inspected) subset is biased in all three
ways at once, and 1 / selection probability is the ideal correction weight.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import N_MONTHS, LabeledDataset, MonthlyTimeSeries, save_dataset


@dataclass(frozen=True)
class SynthConfig:
    population: int = 20_000
    region_mix: tuple[float, ...] = (0.2, 0.2, 0.2, 0.2, 0.2)
    class_mix: tuple[float, ...] = (0.6, 0.3, 0.1)
    ntl_rate: float = 0.08
    # odds multipliers per region / class, rescaled so the population rate is ntl_rate
    ntl_region_odds: tuple[float, ...] = (8.0, 3.0, 1.0, 0.5, 0.25)
    ntl_class_odds: tuple[float, ...] = (4.0, 1.0, 0.3)
    class_scale: tuple[float, ...] = (200.0, 800.0, 3000.0)
    seasonal_amplitude: tuple[float, ...] = (0.10, 0.20, 0.30, 0.25, 0.15)
    seasonal_phase: tuple[float, ...] = (0.0, 2.0, 4.0, 6.0, 8.0)
    noise_scale: float = 0.15
    customer_sigma: float = 0.4
    # year-over-year level change every customer undergoes at the onset month
    change_sigma: float = 0.3
    drop_factor: float = 0.75
    onset_month: int = 12
    selection_rate: float = 0.15
    region_skew: float = 4.0
    class_skew: float = 3.0
    # log-selection slope per standard deviation of (negated) recent log consumption
    consumption_coef: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.population < 100:
            raise ValueError("population must be >= 100")
        for name in ("region_mix", "class_mix"):
            mix = np.asarray(getattr(self, name))
            if np.any(mix <= 0) or abs(mix.sum() - 1) > 1e-9:
                raise ValueError(f"{name} must be positive and sum to 1")
        nr, nc = len(self.region_mix), len(self.class_mix)
        for name, size in (("ntl_region_odds", nr), ("seasonal_amplitude", nr), ("seasonal_phase", nr),
                           ("ntl_class_odds", nc), ("class_scale", nc)):
            if len(getattr(self, name)) != size:
                raise ValueError(f"{name} needs {size} entries")
        if not 0 < self.ntl_rate < 1:
            raise ValueError("ntl_rate must lie in (0, 1)")
        if not 0 < self.selection_rate <= 1:
            raise ValueError("selection_rate must lie in (0, 1]")
        if not 0 < self.drop_factor:
            raise ValueError("drop_factor must be positive")
        if not 0 <= self.onset_month < N_MONTHS:
            raise ValueError("onset_month outside the series")
        if self.region_skew < 1 or self.class_skew < 1:
            raise ValueError("skews are ratios >= 1")

    @property
    def region_names(self) -> list[str]:
        return [f"R{i}" for i in range(len(self.region_mix))]

    @property
    def class_names(self) -> list[str]:
        return [f"C{i}" for i in range(len(self.class_mix))]


NTL_DEFAULT = SynthConfig()
PRESETS = {"ntl-default": NTL_DEFAULT}


@dataclass(frozen=True)
class SynthTruth:
    selection_probability: np.ndarray
    label: np.ndarray
    region: np.ndarray
    customer_class: np.ndarray
    ntl_probability: np.ndarray
    population_priors: dict = field(default_factory=dict)
    training_priors: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Population:
    dataset: LabeledDataset  # raw readings as features, true labels
    series: tuple[MonthlyTimeSeries, ...]


def _priors(labels, regions, classes) -> dict:
    def freq(v):
        keys, counts = np.unique(np.asarray(v), return_counts=True)
        return {str(k): float(c) / len(v) for k, c in zip(keys, counts)}
    return {"label": freq(labels), "region": freq(regions), "customer_class": freq(classes)}


def _calibrate_intercept(log_rate_wo_intercept, target, upper=1.0, logistic=False):
    """Bisection on the intercept so the mean probability equals ``target``."""
    def mean_prob(b):
        z = log_rate_wo_intercept + b
        if logistic:
            return np.mean(1.0 / (1.0 + np.exp(-z)))
        return np.mean(np.minimum(np.exp(z), upper))
    lo, hi = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mean_prob(mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _skew_factors(ratio: float, k: int) -> np.ndarray:
    # first category favoured: factors from `ratio` down to 1, geometric
    return np.geomspace(ratio, 1.0, k) if k > 1 else np.ones(1)


def selection_log_rate(cfg: SynthConfig, region_idx, class_idx, readings) -> np.ndarray:
    """Log-linear inspection score without its intercept."""
    recent = np.log(readings[:, -6:].mean(axis=1) + 1.0)
    z = (recent - recent.mean()) / (recent.std() or 1.0)
    return (
        np.log(_skew_factors(cfg.region_skew, len(cfg.region_mix)))[region_idx]
        + np.log(_skew_factors(cfg.class_skew, len(cfg.class_mix)))[class_idx]
        - cfg.consumption_coef * z
    )


def generate_population(cfg: SynthConfig = NTL_DEFAULT) -> tuple[Population, SynthTruth]:
    """Draw regions, classes, labels and readings; deterministic given cfg.seed."""
    ss = np.random.SeedSequence([cfg.seed, 0x5E7])
    rng_attr, rng_series = (np.random.default_rng(s) for s in ss.spawn(2))
    n = cfg.population
    region = rng_attr.choice(len(cfg.region_mix), size=n, p=cfg.region_mix)
    cclass = rng_attr.choice(len(cfg.class_mix), size=n, p=cfg.class_mix)
    log_odds = np.log(cfg.ntl_region_odds)[region] + np.log(cfg.ntl_class_odds)[cclass]
    b = _calibrate_intercept(log_odds, cfg.ntl_rate, logistic=True)
    ntl_p = 1.0 / (1.0 + np.exp(-(log_odds + b)))
    label = (rng_attr.random(n) < ntl_p).astype(np.int8)

    t = np.arange(N_MONTHS)
    amp = np.asarray(cfg.seasonal_amplitude)[region][:, None]
    phase = np.asarray(cfg.seasonal_phase)[region][:, None]
    seasonal = 1.0 + amp * np.sin(2 * np.pi * (t[None, :] - phase) / 12.0)
    level = np.asarray(cfg.class_scale)[cclass] * np.exp(cfg.customer_sigma * rng_series.standard_normal(n))
    change = np.exp(cfg.change_sigma * rng_series.standard_normal(n))
    after = t[None, :] >= cfg.onset_month
    factor = np.where(after, change[:, None], 1.0)
    factor = np.where(after & (label[:, None] == 1), factor * cfg.drop_factor, factor)
    noise = np.exp(cfg.noise_scale * rng_series.standard_normal((n, N_MONTHS)))
    days = rng_series.integers(28, 33, size=(n, N_MONTHS))
    readings = np.round(level[:, None] * seasonal * factor * noise * days / 30.0, 2)

    log_rate = selection_log_rate(cfg, region, cclass, readings)
    if cfg.selection_rate == 1:
        sel_p = np.ones(n)  # everyone inspected, whatever the skews
    else:
        b_sel = _calibrate_intercept(log_rate, cfg.selection_rate)
        sel_p = np.minimum(np.exp(log_rate + b_sel), 1.0)

    regions = np.array(cfg.region_names, dtype=object)[region]
    classes = np.array(cfg.class_names, dtype=object)[cclass]
    ids = tuple(f"cust{i:06d}" for i in range(n))
    series = tuple(MonthlyTimeSeries(cid, r, d) for cid, r, d in zip(ids, readings, days))
    ds = LabeledDataset(readings, label, regions, classes, tuple(f"m{k:02d}" for k in range(1, N_MONTHS + 1)), ids)
    truth = SynthTruth(sel_p, label, regions, classes, ntl_p, _priors(label, regions, classes))
    return Population(ds, series), truth


@dataclass(frozen=True)
class BiasedSample:
    training: LabeledDataset
    series: tuple[MonthlyTimeSeries, ...]
    selected: np.ndarray  # boolean mask over the population
    truth: SynthTruth


def sample_biased_training(population: Population, truth: SynthTruth, cfg: SynthConfig = NTL_DEFAULT) -> BiasedSample:
    """Keep customer i with its selection probability; only kept ones are labelled."""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x5E7, 0x5E1]))
    selected = rng.random(len(truth.selection_probability)) < truth.selection_probability
    idx = np.flatnonzero(selected)
    training = population.dataset.subset(idx)
    t = replace(truth, training_priors=_priors(training.y, training.region, training.customer_class))
    return BiasedSample(training, tuple(population.series[i] for i in idx), selected, t)


def oracle_weights(truth: SynthTruth, selected) -> np.ndarray:
    """Inverse selection probability of the selected customers, mean 1."""
    sel = np.asarray(selected)
    p = truth.selection_probability[sel] if sel.dtype == bool else truth.selection_probability[sel.astype(int)]
    w = 1.0 / p
    return w / w.mean()


def reference_population(population: Population) -> LabeledDataset:
    """The full population without labels, standing in for the test distribution."""
    ds = population.dataset
    return LabeledDataset(ds.X, None, ds.region, ds.customer_class, ds.feature_names, ds.ids)


def write_synth(out_dir: str | Path, population: Population, sample: BiasedSample, labelled_reference: bool = False) -> dict[str, Path]:
    """Write train.csv, reference.csv and truth.csv in the ingestion layout."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"train": out / "train.csv", "reference": out / "reference.csv", "truth": out / "truth.csv"}
    tr = sample.training
    save_dataset(paths["train"], sample.series, tr.y, tr.region, tr.customer_class)
    pop = population.dataset
    save_dataset(paths["reference"], population.series, pop.y if labelled_reference else None, pop.region, pop.customer_class)
    truth = sample.truth
    with open(paths["truth"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["customer_id", "label", "region", "customer_class", "ntl_probability", "selection_probability", "selected"])
        for i, cid in enumerate(pop.ids):
            w.writerow([cid, int(truth.label[i]), truth.region[i], truth.customer_class[i],
                        repr(float(truth.ntl_probability[i])), repr(float(truth.selection_probability[i])),
                        int(sample.selected[i])])
    return paths


def with_seed(cfg: SynthConfig, seed: int) -> SynthConfig:
    return replace(cfg, seed=seed)
