"""See-saw lower bounds on the best success rate at a given Schmidt number.

Two scenarios are supported:

* ``relaxed``: Bob receives arbitrary states of dimension ``n*d`` for every
  ``x``; the score is ``(1/2n²) Σ_x Tr[ρ_x (P_{x1} + Q_{x2})]``.
* ``physical``: a pure state on ``C^n ⊗ C^d`` (hence Schmidt rank <= d),
  unitary encodings on Alice's share and two POVMs on the joint system.

Every iteration alternates exact or ascent best responses, so the recorded
objective never decreases. Results are feasible strategies, i.e. certified
lower bounds on the respective optima.
"""

from __future__ import annotations

from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .linalg import dagger, identity, inv_sqrt, polar_unitary, random_pure_state, random_unitary, schmidt_truncate
from .protocol import Povm, encoding_unitaries, product_measurement

LAMBDA_EPS = 1e-12


@dataclass(frozen=True)
class SeesawConfig:
    n: int
    d: int
    restarts: int = 10
    max_iterations: int = 500
    threshold: float = 1e-9
    seed: int = 0
    patience: int = 5
    inner_iterations: int = 10
    workers: int = 1

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 1 <= self.d <= self.n:
            raise ValueError(f"d must lie in [1, {self.n}]")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


@dataclass
class SeesawResult:
    best_objective: float
    best_restart: int
    iterations: list[int]
    trajectories: list[list[float]]
    converged: list[bool]
    strategy: dict[str, np.ndarray] = field(repr=False)

    @property
    def iterations_used(self) -> int:
        return sum(self.iterations)


# --- measurement best response ---------------------------------------------


def _score(sigma: np.ndarray, effects: np.ndarray) -> float:
    return float(np.einsum("bij,bji->", sigma, effects).real)


def _complete(effects: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    # push the missing weight I - Σ M_b into the outcome that profits most
    rest = identity(effects.shape[1]) - effects.sum(axis=0)
    rest = (rest + dagger(rest)) / 2
    b = int(np.argmax(np.einsum("bij,ji->b", sigma, rest).real))
    out = effects.copy()
    out[b] += rest
    return out


def _ml_map(sigma: np.ndarray, effects: np.ndarray, eps: float) -> np.ndarray:
    prod = sigma @ effects @ sigma
    r = inv_sqrt(prod.sum(axis=0), eps)
    new = r @ prod @ r
    new = (new + dagger(new)) / 2
    return _complete(new, sigma)


def _discrimination_step(sigma: np.ndarray, effects: np.ndarray, eps: float = LAMBDA_EPS) -> np.ndarray:
    before = _score(sigma, effects)
    new = _ml_map(sigma, effects, eps)
    if _score(sigma, new) >= before:
        return new
    # diluted map: σ_b -> 1 + t σ_b, which is an ascent step for small t
    scale = max(np.linalg.norm(s, 2) for s in sigma)
    one = identity(sigma.shape[1])
    t = 1.0 / scale if scale > 0 else 1.0
    for _ in range(30):
        new = _ml_map(one + t * sigma, effects, eps)
        if _score(sigma, new) >= before:
            return new
        t /= 2
    return effects


def discrimination_update(
    states: np.ndarray,
    weights: np.ndarray,
    current: Povm,
    eps: float = LAMBDA_EPS,
) -> Povm:
    """One iteration of the maximum-likelihood discrimination map.

    With ``σ_b = w_b ρ_b`` and ``λ = Σ_b σ_b M_b σ_b`` the effects become
    ``λ^(-1/2) σ_b M_b σ_b λ^(-1/2)``. ``λ`` is regularized by ``eps·1``;
    whatever identity weight the map leaves unassigned goes to the outcome
    whose state gains most from it. If the plain map would lower
    ``Σ_b Tr(σ_b M_b)``, a diluted step is taken instead, so the score never
    decreases.
    """
    states = np.asarray(states, dtype=complex)
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    if states.shape != current.effects.shape:
        raise ValueError("need one state per outcome on the POVM's space")
    sigma = weights[:, None, None] * states
    return Povm(_discrimination_step(sigma, current.effects, eps))


def discrimination_score(states: np.ndarray, weights: np.ndarray, povm: Povm) -> float:
    sigma = np.asarray(weights, dtype=float)[:, None, None] * np.asarray(states, dtype=complex)
    return _score(sigma, povm.effects)


def _improve_measurement(sigma: np.ndarray, effects: np.ndarray, steps: int) -> np.ndarray:
    score = _score(sigma, effects)
    for _ in range(steps):
        effects = _discrimination_step(sigma, effects)
        new = _score(sigma, effects)
        if new - score < 1e-13:
            break
        score = new
    return effects


# --- initial strategies ----------------------------------------------------


def _random_projective(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    u = random_unitary(dim, rng)
    rank = dim // n
    cols = [u[:, a * rank : (a + 1) * rank] for a in range(n)]
    return np.array([c @ dagger(c) for c in cols])


def _compressed_ideal(n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    # restrict Bob's register to span{|0>, ..., |d-1>}
    iso = np.kron(identity(n), identity(n)[:, :d])
    out = []
    for y in (1, 2):
        eff = product_measurement(n, y).effects
        out.append(dagger(iso) @ eff @ iso)
    return out[0], out[1]


def _truncated_max_entangled(n: int, d: int) -> np.ndarray:
    psi = np.zeros(n * d, dtype=complex)
    psi[np.arange(d) * (d + 1)] = 1 / np.sqrt(d)
    return psi


# --- relaxed scenario --------------------------------------------------------


def _relaxed_states(p: np.ndarray, q: np.ndarray) -> tuple[np.ndarray, float]:
    n = p.shape[0]
    h = p[:, None] + q[None, :]
    w, v = np.linalg.eigh((h + dagger(h)) / 2)
    return v[..., -1], float(w[..., -1].sum() / (2 * n * n))


def _relaxed_score(vecs: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    n = p.shape[0]
    h = p[:, None] + q[None, :]
    val = np.einsum("xyi,xyij,xyj->", vecs.conj(), h, vecs).real
    return float(val / (2 * n * n))


def _converged(traj: list[float], cfg: SeesawConfig) -> bool:
    if len(traj) <= cfg.patience:
        return False
    recent = np.diff(traj[-cfg.patience - 1 :])
    return bool(np.all(recent < cfg.threshold))


def _relaxed_restart(cfg: SeesawConfig, restart: int, callback: Callable | None) -> tuple:
    n, d = cfg.n, cfg.d
    dim = n * d
    rng = np.random.default_rng([cfg.seed, restart])
    if restart == 0:
        p, q = _compressed_ideal(n, d)
    else:
        p, q = _random_projective(n, dim, rng), _random_projective(n, dim, rng)
    vecs, obj = _relaxed_states(p, q)
    traj = [obj]
    converged = False
    w = 1 / (2 * n * n)
    for it in range(cfg.max_iterations):
        rho = np.einsum("xyi,xyj->xyij", vecs, vecs.conj())
        p = _improve_measurement(w * rho.sum(axis=1), p, cfg.inner_iterations)
        q = _improve_measurement(w * rho.sum(axis=0), q, cfg.inner_iterations)
        vecs, obj = _relaxed_states(p, q)
        traj.append(obj)
        if callback is not None:
            callback(restart, it, {"states": vecs, "P": p, "Q": q, "objective": obj})
        if _converged(traj, cfg):
            converged = True
            break
    return traj, converged, {"states": vecs, "P": p, "Q": q}


def seesaw_relaxed(cfg: SeesawConfig, callback: Callable | None = None) -> SeesawResult:
    """Maximize the relaxed score by alternating state and measurement updates.

    Restart 0 starts from the ideal protocol restricted to rank ``d``; the
    remaining restarts start from Haar-random projective measurements. The
    state step picks the top eigenvector of ``P_{x1} + Q_{x2}`` for every x;
    the measurement steps run :func:`discrimination_update` on ``P`` then
    ``Q``.
    """
    return _run(cfg, _relaxed_restart, callback)


# --- physical scenario -------------------------------------------------------


def _physical_parts(psi, u, m1, m2, n, d):
    big_psi = psi.reshape(n, d)
    out = np.einsum("xyab,bj->xyaj", u, big_psi).reshape(n, n, n * d)
    h = m1[:, None] + m2[None, :]
    return out, h


def _physical_score(psi, u, m1, m2) -> float:
    n = m1.shape[0]
    d = psi.size // n
    vecs, h = _physical_parts(psi, u, m1, m2, n, d)
    return _relaxed_score(vecs, m1, m2)


def _state_step(psi, u, m1, m2, n, d) -> np.ndarray:
    h = (m1[:, None] + m2[None, :]).reshape(n, n, n, d, n, d)
    w = np.einsum("xyai,xyajbl,xybk->ijkl", u.conj(), h, u, optimize=True).reshape(n * d, n * d)
    w = (w + dagger(w)) / 2
    vals, vecs = np.linalg.eigh(w)
    cand = schmidt_truncate(vecs[:, -1], d, (n, d))
    current = np.vdot(psi, w @ psi).real
    return cand if np.vdot(cand, w @ cand).real >= current else psi


def _encoding_step(psi, u, m1, m2, n, d, steps: int) -> np.ndarray:
    # each per-x score is a convex quadratic in U_x, so the polar factor of the
    # gradient never lowers it
    big_psi = psi.reshape(n, d)
    h = m1[:, None] + m2[None, :]
    for _ in range(steps):
        phi = np.einsum("xyab,bj->xyaj", u, big_psi).reshape(n, n, n * d)
        grad = np.einsum("xyij,xyj->xyi", h, phi).reshape(n, n, n, d) @ big_psi.conj().T
        new = np.array([[polar_unitary(grad[a, b]) for b in range(n)] for a in range(n)])
        before = np.einsum("xyi,xyij,xyj->xy", phi.conj(), h, phi).real
        phi_new = np.einsum("xyab,bj->xyaj", new, big_psi).reshape(n, n, n * d)
        after = np.einsum("xyi,xyij,xyj->xy", phi_new.conj(), h, phi_new).real
        keep = after >= before
        u = np.where(keep[..., None, None], new, u)
        if np.all(after - before < 1e-13):
            break
    return u


def _physical_restart(cfg: SeesawConfig, restart: int, callback: Callable | None) -> tuple:
    n, d = cfg.n, cfg.d
    dim = n * d
    rng = np.random.default_rng([cfg.seed, restart])
    if restart == 0:
        psi = _truncated_max_entangled(n, d)
        u = encoding_unitaries(n)
        m1, m2 = _compressed_ideal(n, d)
    else:
        psi = random_pure_state(dim, rng)
        u = np.array([[random_unitary(n, rng) for _ in range(n)] for _ in range(n)])
        m1, m2 = _random_projective(n, dim, rng), _random_projective(n, dim, rng)
    traj = [_physical_score(psi, u, m1, m2)]
    converged = False
    w = 1 / (2 * n * n)
    for it in range(cfg.max_iterations):
        psi = _state_step(psi, u, m1, m2, n, d)
        u = _encoding_step(psi, u, m1, m2, n, d, cfg.inner_iterations)
        vecs, _ = _physical_parts(psi, u, m1, m2, n, d)
        rho = np.einsum("xyi,xyj->xyij", vecs, vecs.conj())
        m1 = _improve_measurement(w * rho.sum(axis=1), m1, cfg.inner_iterations)
        m2 = _improve_measurement(w * rho.sum(axis=0), m2, cfg.inner_iterations)
        obj = _physical_score(psi, u, m1, m2)
        traj.append(obj)
        if callback is not None:
            callback(restart, it, {"state": psi, "encodings": u, "M1": m1, "M2": m2, "objective": obj})
        if _converged(traj, cfg):
            converged = True
            break
    return traj, converged, {"state": psi, "encodings": u, "M1": m1, "M2": m2}


def seesaw_physical(cfg: SeesawConfig, callback: Callable | None = None) -> SeesawResult:
    """Maximize the success rate over rank-d states, unitary encodings and POVMs.

    Bob's share is taken to be d-dimensional, which loses no generality for
    Schmidt rank d and makes the state step an exact top-eigenvector best
    response. Encodings are updated through the polar decomposition of the
    objective's gradient, measurements through :func:`discrimination_update`.
    """
    return _run(cfg, _physical_restart, callback)


def _run(cfg: SeesawConfig, restart_fn: Callable, callback: Callable | None) -> SeesawResult:
    def job(r: int):
        return restart_fn(cfg, r, callback)

    if cfg.workers > 1 and callback is None:
        with ThreadPoolExecutor(cfg.workers) as pool:
            runs = list(pool.map(job, range(cfg.restarts)))
    else:
        runs = [job(r) for r in range(cfg.restarts)]
    finals = [traj[-1] for traj, _, _ in runs]
    # ties go to the lowest restart index so the choice is order independent
    best = int(np.argmax(finals))
    return SeesawResult(
        best_objective=finals[best],
        best_restart=best,
        iterations=[len(traj) - 1 for traj, _, _ in runs],
        trajectories=[traj for traj, _, _ in runs],
        converged=[conv for _, conv, _ in runs],
        strategy=runs[best][2],
    )
