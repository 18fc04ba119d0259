from __future__ import annotations

import math

import numpy as np
import pytest

from densecode.formats import load_dataset
from densecode.protocol import correlation, isotropic_protocol
from densecode.stats import (
    CountRecord,
    DatasetError,
    Estimate,
    ExperimentDataset,
    azuma_pvalue,
    estimate_success,
    per_round_estimate,
    poisson_bootstrap,
    simulate_counts,
    win_frequencies,
)


def _ideal_counts(n, per_setting):
    c = np.zeros((n, n, 2, n), dtype=np.int64)
    for x1 in range(n):
        for x2 in range(n):
            c[x1, x2, 0, x1] = per_setting
            c[x1, x2, 1, x2] = per_setting
    return c


def _analytic_sigma(ds):
    p = win_frequencies(ds)
    return math.sqrt(np.sum(p * (1 - p) / ds.totals)) / p.size


def test_all_wins_gives_one():
    ds = ExperimentDataset(3, _ideal_counts(3, 10))
    assert estimate_success(ds).value == 1.0


def test_uniform_outcomes_n8():
    ds = ExperimentDataset(8, np.full((8, 8, 2, 8), 5))
    assert estimate_success(ds).value == pytest.approx(0.125)


def test_tables_dataset_value():
    ds = load_dataset("tables_s2_s3")
    assert round(estimate_success(ds).value, 4) == 0.9729
    assert per_round_estimate(ds) == pytest.approx(estimate_success(ds).value, abs=1e-12)


def test_missing_setting_named():
    c = _ideal_counts(3, 4)
    c[1, 2, 1] = 0
    ds = ExperimentDataset(3, c)
    with pytest.raises(DatasetError, match=r"x1=1, x2=2, y=2"):
        estimate_success(ds)


def test_dataset_validation():
    with pytest.raises(DatasetError):
        ExperimentDataset(2, np.zeros((2, 2, 2, 3)))
    with pytest.raises(DatasetError):
        ExperimentDataset(2, -np.ones((2, 2, 2, 2)))
    with pytest.raises(DatasetError):
        ExperimentDataset(2, np.full((2, 2, 2, 2), 0.5))
    with pytest.raises(ValueError):
        Estimate(1.0, -0.1)


def test_records_roundtrip():
    rng = np.random.default_rng(0)
    ds = ExperimentDataset(3, rng.integers(0, 5, (3, 3, 2, 3)))
    again = ExperimentDataset.from_records(3, ds.records)
    assert np.array_equal(again.counts, ds.counts)
    with pytest.raises(DatasetError):
        ExperimentDataset.from_records(3, [CountRecord(0, 0, 3, 0, 1)])


def test_scaling_invariance():
    rng = np.random.default_rng(1)
    c = rng.integers(1, 50, (4, 4, 2, 4))
    a = estimate_success(ExperimentDataset(4, c)).value
    b = estimate_success(ExperimentDataset(4, 7 * c)).value
    assert a == pytest.approx(b, abs=1e-15)


def test_per_round_estimate_with_prior():
    n = 2
    c = _ideal_counts(n, 1)
    c[0, 0, 0] = [3, 1]  # 3 wins out of 4 for one setting
    prior = np.full((n, n, 2), 1 / 8)
    ds = ExperimentDataset(n, c, prior=prior)
    # rounds are not balanced here, so the two estimators differ
    expected = (ds.wins() / (2 * n * n * prior)).sum() / ds.total_events
    assert per_round_estimate(ds) == pytest.approx(expected)
    with pytest.raises(DatasetError):
        ExperimentDataset(n, c, prior=np.ones((n, n, 2)))


def test_bootstrap_matches_analytic_sigma():
    ds = load_dataset("tables_s2_s3")
    est = poisson_bootstrap(ds, samples=1000, seed=0)
    assert est.sample_count == 1000
    assert est.std_dev == pytest.approx(_analytic_sigma(ds), rel=0.1)


def test_bootstrap_mean_converges():
    ds = load_dataset("tables_s2_s3")
    est = poisson_bootstrap(ds, samples=500, seed=1)
    s = estimate_success(ds).value
    assert abs(est.value - s) <= 3 * est.std_dev / math.sqrt(500)


def test_bootstrap_scaling_law():
    base = load_dataset("tables_s2_s3", total_counts=2000)
    big = ExperimentDataset(8, base.counts * 4)
    ratios = []
    for seed in range(3):
        ratios.append(poisson_bootstrap(big, 400, seed).std_dev / poisson_bootstrap(base, 400, seed + 10).std_dev)
    assert np.mean(ratios) == pytest.approx(0.5, rel=0.2)


def test_bootstrap_deterministic():
    ds = load_dataset("tables_s2_s3", total_counts=1000)
    assert poisson_bootstrap(ds, 50, 4) == poisson_bootstrap(ds, 50, 4)
    assert poisson_bootstrap(ds, 50, 4) != poisson_bootstrap(ds, 50, 5)


def test_bootstrap_zero_variance():
    ds = ExperimentDataset(2, _ideal_counts(2, 10**6))
    est = poisson_bootstrap(ds, 20, 0)
    assert est.std_dev == 0.0 and est.value == 1.0


def test_bootstrap_small_counts_keep_observed():
    ds = ExperimentDataset(2, _ideal_counts(2, 1))
    est = poisson_bootstrap(ds, 200, 0)
    assert est.value == 1.0
    with pytest.raises(ValueError):
        poisson_bootstrap(ds, 1, 0)


def test_azuma_examples():
    assert azuma_pvalue(0.9, 0.95, 1000).p == 1.0
    assert azuma_pvalue(0.95, 0.95, 1000).p == 1.0
    pv = azuma_pvalue(0.6, 0.5, 100)
    assert pv.p == pytest.approx(math.exp(-2), rel=1e-12)
    assert pv.log10_p == pytest.approx(-2 / math.log(10))
    big = azuma_pvalue(0.505, 0.5, 12_800_000)
    assert big.log10_p == pytest.approx(-277.9, abs=0.05)
    assert azuma_pvalue(0.99, 0.5, 0).p == 1.0


def test_azuma_underflow_keeps_log():
    pv = azuma_pvalue(1.0, 0.5, 10**9)
    assert pv.p == 0.0
    assert pv.log10_p == pytest.approx(-2 * 10**9 * 0.25 / math.log(10))


def test_azuma_invalid_delta():
    for delta in (0.0, -1.0, 1.5):
        with pytest.raises(ValueError):
            azuma_pvalue(0.9, 0.5, 10, delta)


def test_azuma_monotonicity():
    base = azuma_pvalue(0.8, 0.7, 1000, 0.5).log10_p
    assert azuma_pvalue(0.85, 0.7, 1000, 0.5).log10_p < base
    assert azuma_pvalue(0.8, 0.7, 2000, 0.5).log10_p < base
    assert azuma_pvalue(0.8, 0.72, 1000, 0.5).log10_p > base
    assert azuma_pvalue(0.8, 0.7, 1000, 0.9).log10_p > base


@pytest.mark.parametrize("v", [0.5, 0.9])
def test_simulated_closure(v):
    n = 4
    table = correlation(isotropic_protocol(n, v))
    ds = simulate_counts(table, 20_000, np.random.default_rng(3))
    est = estimate_success(ds).value
    sigma = poisson_bootstrap(ds, 200, 0).std_dev
    assert abs(est - (v + (1 - v) / n)) <= 3 * sigma
