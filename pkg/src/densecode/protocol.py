"""States, encodings, measurements and the two game functionals.

Index conventions
-----------------
* Bipartite vectors are row-major: ``|i, j>`` sits at position ``i*N + j``.
* Correlation tables are arrays ``p[x1, x2, y, b]``. For the stochastic task
  the settings y=1,2 live at positions 0,1. For the MUB game the Fourier-type
  bases 0..m-2 come first and the computational basis is the last setting.
* All modular index arithmetic uses the representative in ``[0, n)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import dagger, hermitize, identity, is_hermitian

POVM_SUM_TOL = 1e-8
UNITARY_TOL = 1e-8


def _check_dim(n: int) -> None:
    if int(n) != n or n < 2:
        raise ValueError(f"dimension must be an integer >= 2, got {n}")


def weyl_shift(n: int) -> np.ndarray:
    """Shift operator ``X|k> = |k+1 mod n>``."""
    _check_dim(n)
    return np.roll(identity(n), 1, axis=0)


def weyl_clock(n: int) -> np.ndarray:
    """Clock operator ``Z|k> = ω^k |k>`` with ``ω = exp(2πi/n)``."""
    _check_dim(n)
    return np.diag(np.exp(2j * np.pi * np.arange(n) / n))


def fourier(n: int) -> np.ndarray:
    """Unitary discrete Fourier matrix ``F|l> = n^(-1/2) Σ_k ω^(kl) |k>``."""
    _check_dim(n)
    k = np.arange(n)
    return np.exp(2j * np.pi * np.outer(k, k) / n) / np.sqrt(n)


def max_entangled(n: int) -> np.ndarray:
    _check_dim(n)
    v = np.zeros(n * n, dtype=complex)
    v[np.arange(n) * (n + 1)] = 1 / np.sqrt(n)
    return v


def _check_index(n: int, *xs: int) -> None:
    for x in xs:
        if not 0 <= x < n:
            raise ValueError(f"index {x} out of range [0, {n})")


def encoding_unitary(n: int, x1: int, x2: int) -> np.ndarray:
    """Dense-coding unitary ``Z^x2 X^x1``."""
    _check_dim(n)
    _check_index(n, x1, x2)
    return np.linalg.matrix_power(weyl_clock(n), x2) @ np.linalg.matrix_power(weyl_shift(n), x1)


def encoding_unitaries(n: int) -> np.ndarray:
    """All ``n**2`` encodings stacked as ``U[x1, x2]``."""
    return np.array([[encoding_unitary(n, x1, x2) for x2 in range(n)] for x1 in range(n)])


def dense_encoding(n: int, x1: int, x2: int) -> np.ndarray:
    """Bell-basis vector ``(Z^x2 X^x1 ⊗ 1)|φ_n>``."""
    return np.kron(encoding_unitary(n, x1, x2), identity(n)) @ max_entangled(n)


@dataclass(frozen=True)
class Povm:
    """A finite POVM stored as an array of effects with shape ``(B, D, D)``."""

    effects: np.ndarray
    validate: bool = field(default=True, compare=False, repr=False)

    def __post_init__(self) -> None:
        eff = np.asarray(self.effects, dtype=complex)
        if eff.ndim != 3 or eff.shape[1] != eff.shape[2]:
            raise ValueError(f"effects must have shape (B, D, D), got {eff.shape}")
        object.__setattr__(self, "effects", eff)
        if self.validate:
            self.check()

    @property
    def outcome_count(self) -> int:
        return self.effects.shape[0]

    @property
    def dim(self) -> int:
        return self.effects.shape[1]

    def check(self, tol: float = 1e-9) -> None:
        for b, e in enumerate(self.effects):
            if not is_hermitian(e, tol):
                raise ValueError(f"effect {b} is not Hermitian")
            if np.linalg.eigvalsh((e + dagger(e)) / 2)[0] < -tol:
                raise ValueError(f"effect {b} is not PSD")
        dev = np.max(np.abs(self.effects.sum(axis=0) - identity(self.dim)))
        if dev > POVM_SUM_TOL:
            raise ValueError(f"effects do not sum to identity (max deviation {dev:.3e})")


def product_measurement(n: int, y: int) -> Povm:
    """Bob's wired single-particle measurement for setting ``y`` in {1, 2}.

    ``M_{b|1} = Σ_a |a+b, a><a+b, a|`` and
    ``M_{b|2} = (F ⊗ F†) M_{b|1} (F† ⊗ F)``.
    """
    _check_dim(n)
    if y not in (1, 2):
        raise ValueError(f"setting y must be 1 or 2, got {y}")
    i, j = np.divmod(np.arange(n * n), n)
    labels = (i - j) % n
    effects = np.zeros((n, n * n, n * n), dtype=complex)
    for b in range(n):
        effects[b] = np.diag((labels == b).astype(complex))
    if y == 2:
        f = fourier(n)
        w = np.kron(f, dagger(f))
        effects = w @ effects @ dagger(w)
    return Povm(effects)


def isotropic_state(n: int, v: float) -> np.ndarray:
    """``v |φ_n><φ_n| + (1 - v) 1/n²``."""
    if not 0.0 <= v <= 1.0:
        raise ValueError(f"visibility must lie in [0, 1], got {v}")
    phi = max_entangled(n)
    return v * np.outer(phi, phi.conj()) + (1 - v) * identity(n * n) / n**2


@dataclass(frozen=True)
class CorrelationTable:
    """Conditional distributions ``p[x1, x2, y, b]``."""

    probabilities: np.ndarray

    def __post_init__(self) -> None:
        p = np.asarray(self.probabilities, dtype=float)
        if p.ndim != 4 or p.shape[0] != p.shape[1]:
            raise ValueError(f"table must have shape (n, n, Y, B), got {p.shape}")
        if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
            raise ValueError("probabilities outside [0, 1]")
        dev = np.max(np.abs(p.sum(axis=3) - 1.0))
        if dev > 1e-8:
            raise ValueError(f"rows are not normalized (max deviation {dev:.3e})")
        object.__setattr__(self, "probabilities", p)

    @property
    def n(self) -> int:
        return self.probabilities.shape[0]

    @property
    def settings_y(self) -> int:
        return self.probabilities.shape[2]

    @property
    def outcome_count(self) -> int:
        return self.probabilities.shape[3]

    def win_probabilities(self) -> np.ndarray:
        """``p(b = x_y | x, y)`` for the stochastic task, shape ``(n, n, 2)``."""
        n = self.n
        x1, x2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        p = self.probabilities
        return np.stack([p[x1, x2, 0, x1], p[x1, x2, 1, x2]], axis=-1)


@dataclass(frozen=True)
class StochasticProtocol:
    """Shared state, Alice's unitary encodings and Bob's measurements.

    ``state`` acts on ``C^n ⊗ C^N`` (Alice's share first), ``encodings`` has
    shape ``(n, n, n, n)`` indexed by ``(x1, x2)``, and every POVM in
    ``measurements`` acts on ``C^n ⊗ C^N``.
    """

    n: int
    state: np.ndarray
    encodings: np.ndarray
    measurements: tuple[Povm, ...]

    def __post_init__(self) -> None:
        n = self.n
        _check_dim(n)
        rho = hermitize(np.asarray(self.state, dtype=complex))
        if rho.shape[0] % n:
            raise ValueError("state dimension is not a multiple of n")
        if abs(np.trace(rho).real - 1) > 1e-9:
            raise ValueError("state does not have unit trace")
        if np.linalg.eigvalsh(rho)[0] < -1e-9:
            raise ValueError("state is not PSD")
        enc = np.asarray(self.encodings, dtype=complex)
        if enc.shape != (n, n, n, n):
            raise ValueError(f"encodings must have shape {(n, n, n, n)}, got {enc.shape}")
        dev = np.max(np.abs(enc @ dagger(enc) - identity(n)))
        if dev > UNITARY_TOL:
            raise ValueError(f"encodings are not unitary (max deviation {dev:.3e})")
        meas = tuple(self.measurements)
        for k, m in enumerate(meas):
            if m.dim != rho.shape[0]:
                raise ValueError(
                    f"measurement {k} acts on dimension {m.dim}, state on {rho.shape[0]}"
                )
        object.__setattr__(self, "state", rho)
        object.__setattr__(self, "encodings", enc)
        object.__setattr__(self, "measurements", meas)

    @property
    def bob_dim(self) -> int:
        return self.state.shape[0] // self.n


def ideal_measurements(n: int) -> tuple[Povm, Povm]:
    return product_measurement(n, 1), product_measurement(n, 2)


def isotropic_protocol(n: int, v: float) -> StochasticProtocol:
    """Ideal encodings and measurements acting on an isotropic shared state."""
    return StochasticProtocol(n, isotropic_state(n, v), encoding_unitaries(n), ideal_measurements(n))


def ideal_protocol(n: int) -> StochasticProtocol:
    return isotropic_protocol(n, 1.0)


def encoded_states(n: int, state: np.ndarray, encodings: np.ndarray) -> np.ndarray:
    """``τ_x = (U_x ⊗ 1) ρ (U_x ⊗ 1)†`` for all x, shape ``(n, n, D, D)``."""
    dim = state.shape[0]
    big_n = dim // n
    r = state.reshape(n, big_n, n, big_n)
    tau = np.einsum("pqai,ijkl,pqbk->pqajbl", encodings, r, encodings.conj(), optimize=True)
    return tau.reshape(n, n, dim, dim)


def correlation(protocol: StochasticProtocol) -> CorrelationTable:
    """``p(b|x,y) = Tr[(U_x ⊗ 1) ρ (U_x ⊗ 1)† M_{b|y}]`` for every setting."""
    n = protocol.n
    dim = protocol.state.shape[0]
    tau = encoded_states(n, protocol.state, protocol.encodings).reshape(n, n, dim * dim)
    tables = []
    for povm in protocol.measurements:
        # Tr(τ M) = Σ τ_ij conj(M_ij) for Hermitian M
        flat = povm.effects.conj().reshape(povm.outcome_count, dim * dim)
        tables.append(np.einsum("pqk,bk->pqb", tau, flat).real)
    p = np.stack(tables, axis=2)
    p = np.clip(p, 0.0, None)
    return CorrelationTable(p)


def success_rate(table: CorrelationTable) -> float:
    """Average probability of outputting ``b = x_y`` over all settings."""
    if table.settings_y != 2 or table.outcome_count != table.n:
        raise ValueError("success rate needs two settings with n outcomes each")
    return float(table.win_probabilities().mean())


# --- mutually unbiased bases in prime dimension --------------------------------


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    k = 2
    while k * k <= n:
        if n % k == 0:
            return False
        k += 1
    return True


def _check_prime(n: int) -> None:
    if not is_prime(n):
        raise ValueError(f"n must be prime, got {n}")


def mub_basis(n: int, y: int) -> np.ndarray:
    """Basis ``y`` as columns; ``y = n`` is the computational basis.

    For ``y < n`` the vectors are ``n^(-1/2) Σ_k ω^(k(l + y k)) |k>``. The full
    set of ``n + 1`` bases is mutually unbiased for odd primes only.
    """
    _check_prime(n)
    if not 0 <= y <= n:
        raise ValueError(f"basis index must lie in [0, {n}], got {y}")
    if y == n:
        return identity(n)
    k = np.arange(n)[:, None]
    l = np.arange(n)[None, :]
    return np.exp(2j * np.pi * ((k * (l + y * k)) % n) / n) / np.sqrt(n)


def mub_vector(n: int, y: int, l: int) -> np.ndarray:
    basis = mub_basis(n, y)
    _check_index(n, l)
    return basis[:, l]


def mub_measurement(n: int, y: int) -> Povm:
    """Basis ``y`` on the first particle, its conjugate on the second, wired to ``l1 - l2``."""
    e = mub_basis(n, y)
    proj = np.einsum("il,jl->lij", e, e.conj())
    proj_conj = proj.conj()
    effects = np.zeros((n, n * n, n * n), dtype=complex)
    for l1 in range(n):
        for l2 in range(n):
            effects[(l1 - l2) % n] += np.kron(proj[l1], proj_conj[l2])
    return Povm(effects)


def mub_settings(n: int, m: int) -> list[int]:
    """Basis labels used by an ``m``-basis game: ``0..m-2`` then computational."""
    _check_prime(n)
    if not 2 <= m <= n + 1:
        raise ValueError(f"basis count m must lie in [2, {n + 1}], got {m}")
    return list(range(m - 1)) + [n]


def mub_game_correlation(n: int, m: int, state: np.ndarray | None = None) -> CorrelationTable:
    """Correlations of the MUB game protocol.

    The dense-coding encodings act on ``state`` (the maximally entangled
    state unless given) and setting ``y`` measures the corresponding basis
    pair, reporting ``l = l1 - l2 mod n``.
    """
    settings = mub_settings(n, m)
    if state is None:
        phi = max_entangled(n)
        state = np.outer(phi, phi.conj())
    meas = tuple(mub_measurement(n, y) for y in settings)
    return correlation(StochasticProtocol(n, state, encoding_unitaries(n), meas))


def mub_winning_outcomes(n: int, m: int) -> np.ndarray:
    """Winning ``l`` for each ``(x1, x2, setting position)``, shape ``(n, n, m)``."""
    settings = mub_settings(n, m)
    x1, x2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    out = np.empty((n, n, m), dtype=int)
    for pos, y in enumerate(settings):
        out[:, :, pos] = x1 % n if y == n else (x2 - 2 * y * x1) % n
    return out


def mub_game_value(table: CorrelationTable, n: int, m: int) -> float:
    """Average winning probability of the ``m``-basis game."""
    if table.n != n or table.settings_y != m or table.outcome_count != n:
        raise ValueError(f"table shape does not match an (n={n}, m={m}) MUB game")
    win = mub_winning_outcomes(n, m)
    p = np.take_along_axis(table.probabilities, win[..., None], axis=3)[..., 0]
    return float(p.sum() / (m * n * n))
