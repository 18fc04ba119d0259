"""Performance limits, the Schmidt-number bound and its proof chain."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import dagger, operator_norm, psd_sqrt
from .protocol import Povm

SLACK_TOL = 1e-9


def _check_n(n: int) -> None:
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")


def classical_bound(n: int) -> float:
    """Best success rate with an n-valued classical message."""
    _check_n(n)
    return 0.5 + 0.5 / n


def unassisted_quantum_bound(n: int) -> float:
    """Best success rate with an n-dimensional quantum message and no entanglement."""
    _check_n(n)
    return 0.5 + 0.5 / math.sqrt(n)


def schmidt_bound(n: int, d: int) -> float:
    """Upper bound ``(1 + sqrt(d/n)) / 2`` on the success rate at Schmidt number d."""
    _check_n(n)
    if not 1 <= d <= n:
        raise ValueError(f"Schmidt number d must lie in [1, {n}], got {d}")
    return 0.5 * (1 + math.sqrt(d / n))


def certified_schmidt_number(value: float, n: int, bound=schmidt_bound, d_max: int | None = None) -> int:
    """Smallest Schmidt number compatible with an observed score.

    Returns ``1 + max{d : value > bound(n, d)}``, or 1 when no bound is
    exceeded (nothing certified).
    """
    d_max = n if d_max is None else d_max
    exceeded = [d for d in range(1, d_max + 1) if value > bound(n, d)]
    return 1 + max(exceeded) if exceeded else 1


def critical_visibility(bound: float, n: int) -> float:
    """Isotropic visibility at which ``v + (1 - v)/n`` reaches ``bound``."""
    _check_n(n)
    if not 1 / n - 1e-12 <= bound <= 1 + 1e-12:
        raise ValueError(f"bound must lie in [1/n, 1], got {bound}")
    return (bound - 1 / n) / (1 - 1 / n)


# --- verification of the bound derivation ---------------------------------


@dataclass(frozen=True)
class ChainStep:
    name: str
    left: float
    right: float
    worst_term_slack: float

    @property
    def slack(self) -> float:
        return self.right - self.left

    @property
    def ok(self) -> bool:
        return self.slack >= -SLACK_TOL and self.worst_term_slack >= -SLACK_TOL


@dataclass(frozen=True)
class BoundChainReport:
    steps: tuple[ChainStep, ...]
    n: int
    d: int

    @property
    def passed(self) -> bool:
        return all(s.ok for s in self.steps)

    @property
    def start(self) -> float:
        return self.steps[0].left

    @property
    def end(self) -> float:
        return self.steps[-1].right


def verify_bound_chain(p: Povm, q: Povm, d: int) -> BoundChainReport:
    """Evaluate both sides of every inequality leading to the Schmidt bound.

    ``p`` and ``q`` are Bob's two n-outcome POVMs on a space of dimension
    ``n*d``. The chain starts at the relaxed optimum
    ``(1/2n²) Σ ||P_a + Q_b||`` and, in order, applies the Kittaneh
    inequality, ``max(||P_a||, ||Q_b||) <= 1``, the Schatten-norm ordering
    ``||√P√Q||_∞ <= sqrt(Tr PQ)``, and the square-root concavity inequality.
    A last step checks that ``Σ Tr(P_a Q_b) = n d``.

    Per-pair inequalities report the smallest slack over all ``(a, b)`` in
    ``worst_term_slack``; aggregate sides are normalized by ``1/(2n²)``.
    """
    p.check()
    q.check()
    n = p.outcome_count
    if q.outcome_count != n:
        raise ValueError("both POVMs need the same number of outcomes")
    if p.dim != q.dim or p.dim != n * d:
        raise ValueError(f"POVMs must act on dimension n*d = {n * d}")

    sp = [psd_sqrt(e) for e in p.effects]
    sq = [psd_sqrt(e) for e in q.effects]
    norm_p = np.array([operator_norm(e) for e in p.effects])
    norm_q = np.array([operator_norm(e) for e in q.effects])
    sum_norm = np.empty((n, n))
    kittaneh = np.empty((n, n))
    max_norm = np.empty((n, n))
    root_norm = np.empty((n, n))
    overlap = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            sum_norm[a, b] = operator_norm(p.effects[a] + q.effects[b])
            max_norm[a, b] = max(norm_p[a], norm_q[b])
            root_norm[a, b] = operator_norm(sp[a] @ sq[b])
            kittaneh[a, b] = max_norm[a, b] + root_norm[a, b]
            overlap[a, b] = max(np.trace(p.effects[a] @ q.effects[b]).real, 0.0)
    hs_norm = np.sqrt(overlap)

    w = 1 / (2 * n * n)
    steps = [
        ChainStep("kittaneh", w * sum_norm.sum(), w * kittaneh.sum(), float(np.min(kittaneh - sum_norm))),
        ChainStep(
            "effect_norm_le_one",
            w * kittaneh.sum(),
            0.5 + w * root_norm.sum(),
            float(np.min(1 - max_norm)),
        ),
        ChainStep(
            "schatten_order",
            0.5 + w * root_norm.sum(),
            0.5 + w * hs_norm.sum(),
            float(np.min(hs_norm - root_norm)),
        ),
        ChainStep(
            "sqrt_concavity",
            0.5 + w * hs_norm.sum(),
            0.5 + math.sqrt(overlap.sum()) / (2 * n),
            0.0,
        ),
    ]
    total = overlap.sum()
    exact = 0.5 + math.sqrt(n * d) / (2 * n)
    # Σ_ab Tr(P_a Q_b) = Tr(1) is an identity: both directions must hold
    steps.append(ChainStep("trace_identity", 0.5 + math.sqrt(total) / (2 * n), exact, -abs(total - n * d)))
    return BoundChainReport(tuple(steps), n, d)


def relaxed_value(p: Povm, q: Povm) -> float:
    """``(1/2n²) Σ ||P_a + Q_b||``: the relaxed score with optimal states."""
    n = p.outcome_count
    h = p.effects[:, None] + q.effects[None, :]
    top = np.linalg.eigvalsh((h + dagger(h)) / 2)[..., -1]
    return float(top.sum() / (2 * n * n))


# --- semidefinite-hierarchy reference values ---------------------------------

# Upper bounds on the MUB game value for Schmidt number d = 1..n-1, keyed by
# (n, m). Four-decimal values as published; 2/3 and 3/5 are exact.
_SDP_TABLE: dict[tuple[int, int], tuple[float, ...]] = {
    (3, 2): (0.8024, 0.9692),
    (3, 3): (0.7182, 0.9285),
    (3, 4): (2 / 3, 0.8604),
    (5, 2): (0.7553, 0.9190, 0.9761, 0.9958),
    (5, 3): (0.6618, 0.8562, 0.9491, 0.9897),
    (5, 4): (3 / 5, 0.7971, 0.9160, 0.9801),
    (5, 5): (0.5578, 0.7367, 0.8690, 0.9618),
    (5, 6): (0.5266, 0.6899, 0.8110, 0.9118),
    (7, 2): (0.7318, 0.8903, 0.9530, 0.9810, 0.9936, 0.9988),
    (7, 3): (0.6352, 0.8181, 0.9109, 0.9605, 0.9859, 0.9971),
    (7, 4): (0.5714, 0.7597, 0.8703, 0.9375, 0.9760, 0.9948),
    (7, 5): (0.5262, 0.7066, 0.8285, 0.9106, 0.9630, 0.9914),
    (7, 6): (0.4928, 0.6579, 0.7817, 0.8768, 0.9443, 0.9857),
    (7, 7): (0.4668, 0.6197, 0.7343, 0.8301, 0.9129, 0.9737),
    (7, 8): (0.4459, 0.5889, 0.6961, 0.7857, 0.8643, 0.9350),
}

# Entries flagged in the source table as beating the analytic stochastic
# bound on isotropic noise, as (n, m, d).
SDP_HIGHLIGHTED: frozenset[tuple[int, int, int]] = frozenset(
    {
        (3, 3, 1), (3, 4, 1), (3, 4, 2),
        (5, 3, 1), (5, 4, 1), (5, 4, 2),
        (5, 5, 1), (5, 5, 2), (5, 5, 3),
        (5, 6, 1), (5, 6, 2), (5, 6, 3), (5, 6, 4),
        (7, 2, 1), (7, 3, 1), (7, 4, 1), (7, 4, 2),
        (7, 5, 1), (7, 5, 2),
        (7, 6, 1), (7, 6, 2), (7, 6, 3), (7, 6, 4),
        (7, 7, 1), (7, 7, 2), (7, 7, 3), (7, 7, 4), (7, 7, 5),
        (7, 8, 1), (7, 8, 2), (7, 8, 3), (7, 8, 4), (7, 8, 5), (7, 8, 6),
    }
)


@dataclass(frozen=True)
class SdpReferenceEntry:
    n: int
    m: int
    d: int
    bound: float


def sdp_reference(n: int, m: int, d: int) -> float:
    """Published hierarchy bound on the m-basis game value at Schmidt number d."""
    column = _SDP_TABLE.get((n, m))
    if column is None or not 1 <= d <= len(column):
        raise LookupError(f"no reference value for (n={n}, m={m}, d={d})")
    return column[d - 1]


def sdp_entries() -> list[SdpReferenceEntry]:
    return [
        SdpReferenceEntry(n, m, d, b)
        for (n, m), col in sorted(_SDP_TABLE.items())
        for d, b in enumerate(col, start=1)
    ]


def has_sdp_reference(n: int, m: int) -> bool:
    return (n, m) in _SDP_TABLE
