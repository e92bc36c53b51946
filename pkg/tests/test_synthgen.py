from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from biasreduce.core import load_dataset, IngestSchema
from biasreduce.stats_tests import ks_two_sample
from biasreduce.synthgen import (
    NTL_DEFAULT,
    PRESETS,
    SynthConfig,
    generate_population,
    oracle_weights,
    reference_population,
    sample_biased_training,
    write_synth,
)

SMALL = replace(NTL_DEFAULT, population=5000)
UNIFORM = replace(SMALL, region_skew=1.0, class_skew=1.0, consumption_coef=0.0)


def test_preset():
    assert PRESETS["ntl-default"] is NTL_DEFAULT
    assert NTL_DEFAULT.population == 20_000
    assert len(NTL_DEFAULT.region_mix) == 5 and len(NTL_DEFAULT.class_mix) == 3


def test_invalid_config():
    with pytest.raises(ValueError):
        SynthConfig(population=50)
    with pytest.raises(ValueError):
        SynthConfig(ntl_rate=1.0)
    with pytest.raises(ValueError):
        SynthConfig(region_mix=(0.5, 0.6, 0.1, 0.1, 0.1))
    with pytest.raises(ValueError):
        SynthConfig(ntl_class_odds=(1.0, 2.0))


def test_deterministic():
    a, ta = generate_population(SMALL)
    b, tb = generate_population(SMALL)
    assert a.dataset.digest() == b.dataset.digest()
    np.testing.assert_array_equal(ta.selection_probability, tb.selection_probability)
    c, _ = generate_population(replace(SMALL, seed=1))
    assert c.dataset.digest() != a.dataset.digest()


def test_ntl_rate_and_probabilities():
    pop, truth = generate_population(SMALL)
    assert truth.label.mean() == pytest.approx(SMALL.ntl_rate, abs=0.015)
    assert np.all((truth.selection_probability > 0) & (truth.selection_probability <= 1))
    assert truth.selection_probability.mean() == pytest.approx(SMALL.selection_rate, rel=1e-6)


def test_drop_factor_ratio():
    cfg = replace(SMALL, drop_factor=0.5, onset_month=12)
    pop, truth = generate_population(cfg)
    R = pop.dataset.X[truth.label == 1]
    ratio = R[:, 12:].mean() / R[:, :12].mean()
    assert ratio == pytest.approx(0.5, rel=0.10)


def test_no_drop_no_signal():
    cfg = replace(SMALL, drop_factor=1.0)
    pop, truth = generate_population(cfg)
    # NTL customers differ only through region / class mix, so compare within one stratum
    X = pop.dataset.X
    stratum = (pop.dataset.region == "R2") & (pop.dataset.customer_class == "C0")
    r = X[:, 12:].mean(axis=1) / X[:, :12].mean(axis=1)
    _, p = ks_two_sample(r[stratum & (truth.label == 1)], r[stratum & (truth.label == 0)])
    assert p > 0.01


def test_region_skew_raises_share():
    pop, truth = generate_population(SMALL)
    sample = sample_biased_training(pop, truth, SMALL)
    n = len(sample.training)
    k = int(np.sum(sample.training.region == "R0"))
    p0 = np.mean(pop.dataset.region == "R0")
    assert k / n > p0
    assert stats.binomtest(k, n, p0, alternative="greater").pvalue < 0.01


def test_uniform_selection_matches_population():
    pop, truth = generate_population(UNIFORM)
    sample = sample_biased_training(pop, truth, UNIFORM)
    np.testing.assert_allclose(truth.selection_probability, UNIFORM.selection_rate, rtol=1e-9)
    np.testing.assert_allclose(oracle_weights(sample.truth, sample.selected), 1.0, rtol=1e-12)
    n = len(sample.training)
    for key, values in (("label", sample.training.y), ("region", sample.training.region)):
        for cat, p in truth.population_priors[key].items():
            share = np.mean(np.asarray(values).astype(str) == cat)
            assert abs(share - p) <= 4 * np.sqrt(p * (1 - p) / n)


def test_select_everyone():
    cfg = replace(SMALL, selection_rate=1.0)
    pop, truth = generate_population(cfg)
    sample = sample_biased_training(pop, truth, cfg)
    assert len(sample.training) == len(pop.dataset)
    assert sample.training.digest() == pop.dataset.digest()


def test_oracle_weight_ratio_and_mean():
    pop, truth = generate_population(SMALL)
    sample = sample_biased_training(pop, truth, SMALL)
    w = oracle_weights(sample.truth, sample.selected)
    assert w.mean() == pytest.approx(1.0, abs=1e-12)
    p = truth.selection_probability[sample.selected]
    i, j = np.argmin(p), np.argmax(p)
    assert w[i] / w[j] == pytest.approx(p[j] / p[i], rel=1e-12)
    idx = np.flatnonzero(sample.selected)
    np.testing.assert_array_equal(oracle_weights(sample.truth, idx), w)


def test_oracle_weighted_marginals():
    pop, truth = generate_population(SMALL)
    sample = sample_biased_training(pop, truth, SMALL)
    w = oracle_weights(sample.truth, sample.selected)
    n_eff = w.sum() ** 2 / np.sum(w ** 2)
    tr = sample.training
    for key, values in (("label", tr.y), ("region", tr.region), ("customer_class", tr.customer_class)):
        values = np.asarray(values).astype(str)
        for cat, p in truth.population_priors[key].items():
            share = w[values == cat].sum() / w.sum()
            assert abs(share - p) <= 3 * np.sqrt(p * (1 - p) / n_eff), (key, cat)


def test_training_is_biased():
    pop, truth = generate_population(SMALL)
    sample = sample_biased_training(pop, truth, SMALL)
    assert sample.truth.training_priors["label"]["1"] > truth.population_priors["label"]["1"]


def test_write_and_reload(tmp_path):
    cfg = replace(NTL_DEFAULT, population=300)
    pop, truth = generate_population(cfg)
    sample = sample_biased_training(pop, truth, cfg)
    paths = write_synth(tmp_path, pop, sample)
    train = load_dataset(paths["train"])
    np.testing.assert_array_equal(train.dataset.X, sample.training.X)
    ref = load_dataset(paths["reference"], IngestSchema(require_label=False))
    assert ref.dataset.y is None and len(ref.dataset) == 300
    assert reference_population(pop).y is None
    header = paths["truth"].read_text().splitlines()[0]
    assert header == "customer_id,label,region,customer_class,ntl_probability,selection_probability,selected"
