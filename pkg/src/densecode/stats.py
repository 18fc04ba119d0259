"""Success-rate estimation from counts, Poisson bootstrap and Azuma p-values."""

from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from .protocol import CorrelationTable


class DatasetError(ValueError):
    """Raised for datasets that violate their invariants."""


@dataclass(frozen=True)
class CountRecord:
    x1: int
    x2: int
    y: int
    b: int
    count: int


@dataclass(frozen=True)
class Estimate:
    value: float
    std_dev: float = 0.0
    sample_count: int = 0

    def __post_init__(self) -> None:
        if self.std_dev < 0:
            raise ValueError("std_dev must be >= 0")


@dataclass(frozen=True)
class PValue:
    p: float
    log10_p: float


@dataclass
class ExperimentDataset:
    """Event counts ``counts[x1, x2, y-1, b]`` for the two-setting task.

    ``prior`` is the probability of each ``(x, y)`` setting (uniform unless
    given) and is only used by the per-round estimator.
    """

    n: int
    counts: np.ndarray
    prior: np.ndarray | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.n
        counts = np.asarray(self.counts)
        if counts.shape != (n, n, 2, n):
            raise DatasetError(f"counts must have shape {(n, n, 2, n)}, got {counts.shape}")
        if np.any(counts < 0) or not np.all(np.isfinite(counts)):
            raise DatasetError("counts must be finite and non-negative")
        if not np.all(counts == np.round(counts)):
            raise DatasetError("counts must be integers")
        self.counts = counts.astype(np.int64)
        if self.prior is None:
            self.prior = np.full((n, n, 2), 1.0 / (2 * n * n))
        else:
            self.prior = np.asarray(self.prior, dtype=float)
            if self.prior.shape != (n, n, 2) or abs(self.prior.sum() - 1) > 1e-9:
                raise DatasetError("prior must be a distribution over (x1, x2, y)")

    @classmethod
    def from_records(cls, n: int, records: Iterable[CountRecord], **kwargs) -> ExperimentDataset:
        counts = np.zeros((n, n, 2, n), dtype=np.int64)
        for r in records:
            if not (0 <= r.x1 < n and 0 <= r.x2 < n and r.y in (1, 2) and 0 <= r.b < n):
                raise DatasetError(f"record out of range for n={n}: {r}")
            if r.count < 0:
                raise DatasetError(f"negative count in {r}")
            counts[r.x1, r.x2, r.y - 1, r.b] += r.count
        return cls(n, counts, **kwargs)

    @property
    def records(self) -> list[CountRecord]:
        idx = np.argwhere(self.counts > 0)
        return [CountRecord(int(a), int(b), int(y) + 1, int(o), int(self.counts[a, b, y, o])) for a, b, y, o in idx]

    @property
    def totals(self) -> np.ndarray:
        return self.counts.sum(axis=3)

    @property
    def total_events(self) -> int:
        return int(self.counts.sum())

    def wins(self) -> np.ndarray:
        n = self.n
        x1, x2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        c = self.counts
        return np.stack([c[x1, x2, 0, x1], c[x1, x2, 1, x2]], axis=-1)

    def missing_settings(self) -> list[tuple[int, int, int]]:
        return [(int(a), int(b), int(y) + 1) for a, b, y in np.argwhere(self.totals == 0)]

    def validate(self) -> None:
        missing = self.missing_settings()
        if missing:
            x1, x2, y = missing[0]
            raise DatasetError(
                f"missing setting (x1={x1}, x2={x2}, y={y})"
                + (f" and {len(missing) - 1} more" if len(missing) > 1 else "")
            )


def win_frequencies(ds: ExperimentDataset) -> np.ndarray:
    """Observed ``p(b = x_y | x, y)`` per setting, shape ``(n, n, 2)``."""
    ds.validate()
    return ds.wins() / ds.totals


def estimate_success(ds: ExperimentDataset) -> Estimate:
    """Average of the per-setting win frequencies, as in the success-rate formula."""
    return Estimate(float(win_frequencies(ds).mean()), 0.0, ds.total_events)


def per_round_estimate(ds: ExperimentDataset) -> float:
    """Mean of the per-round importance-weighted win indicators.

    Round i contributes ``[b_i = x_y] / (2 n² p(x_i, y_i))``. Under the uniform
    prior with equal counts per setting this equals :func:`estimate_success`.
    """
    ds.validate()
    n = ds.n
    weights = 1.0 / (2 * n * n * ds.prior)
    return float((ds.wins() * weights).sum() / ds.total_events)


def _sample_seeds(seed: int, samples: int) -> list[np.random.SeedSequence]:
    return np.random.SeedSequence(seed).spawn(samples)


def poisson_bootstrap(ds: ExperimentDataset, samples: int = 1000, seed: int = 0) -> Estimate:
    """Spread of the success estimate under Poisson fluctuations of every count.

    Each sample redraws every count as ``Poisson(count)`` from its own random
    stream (spawned from ``seed``) and re-evaluates the estimate. Settings
    whose redrawn total is zero keep their observed frequency.

    Returns
    -------
    Estimate
        Mean and standard deviation over the samples.
    """
    if samples < 2:
        raise ValueError("need at least 2 bootstrap samples")
    observed = win_frequencies(ds)
    wins = ds.wins()
    losses = ds.totals - wins
    values = np.empty(samples)
    for i, ss in enumerate(_sample_seeds(seed, samples)):
        rng = np.random.default_rng(ss)
        w = rng.poisson(wins)
        t = w + rng.poisson(losses)
        freq = np.where(t > 0, w / np.maximum(t, 1), observed)
        values[i] = freq.mean()
    return Estimate(float(values.mean()), float(values.std(ddof=1)), samples)


def azuma_pvalue(s_hat: float, bound: float, n_rounds: int, delta: float = 1.0) -> PValue:
    """Azuma–Hoeffding bound ``exp(-2 N μ² / Δ²)`` with ``μ = s_hat - bound``.

    The result is evaluated in log space; ``p`` underflows to 0 for large
    violations while ``log10_p`` stays finite. No violation (or no data)
    gives ``p = 1``.
    """
    if not 0 < delta <= 1:
        raise ValueError(f"delta must lie in (0, 1], got {delta}")
    if n_rounds < 0:
        raise ValueError("n_rounds must be non-negative")
    mu = s_hat - bound
    if mu <= 0 or n_rounds == 0:
        return PValue(1.0, 0.0)
    log10_p = -2.0 * n_rounds * mu * mu / (delta * delta) / math.log(10)
    return PValue(10.0**log10_p, log10_p)


def simulate_counts(
    table: CorrelationTable, total_per_setting: float, rng: np.random.Generator
) -> ExperimentDataset:
    """Poisson counts with means ``total_per_setting * p(b|x,y)``."""
    if table.settings_y != 2 or table.outcome_count != table.n:
        raise ValueError("need a two-setting table with n outcomes")
    counts = rng.poisson(total_per_setting * table.probabilities)
    return ExperimentDataset(table.n, counts)
