"""Dense complex linear algebra shared by the rest of the package.

Matrices are plain ``numpy.ndarray`` objects of dtype ``complex128``; state
vectors are one-dimensional arrays. Every function here is pure.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERMITIAN_TOL = 1e-9
PSD_TOL = 1e-9


def dagger(m: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(m, -1, -2))


def identity(n: int) -> np.ndarray:
    return np.eye(n, dtype=complex)


def _require_square(m: np.ndarray) -> None:
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {m.shape}")


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        return False
    return bool(np.max(np.abs(m - dagger(m)), initial=0.0) <= tol)


def hermitize(m: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Check Hermiticity within ``tol`` and return the symmetrized matrix."""
    m = np.asarray(m, dtype=complex)
    _require_square(m)
    if not is_hermitian(m, tol):
        dev = float(np.max(np.abs(m - dagger(m))))
        raise ValueError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return (m + dagger(m)) / 2


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with shape ``(ra*rb, ca*cb)``."""
    return np.kron(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))


def operator_norm(m: np.ndarray) -> float:
    """Largest singular value of a square matrix."""
    m = np.asarray(m, dtype=complex)
    _require_square(m)
    return float(np.linalg.norm(m, 2))


def _fix_phases(vecs: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    # first non-negligible component of each column made real positive
    vecs = vecs.copy()
    for j in range(vecs.shape[1]):
        col = vecs[:, j]
        idx = int(np.argmax(np.abs(col) > tol * max(1.0, np.max(np.abs(col)))))
        c = col[idx]
        if abs(c) > 0:
            vecs[:, j] = col * (abs(c) / c)
    return vecs


@dataclass(frozen=True)
class HermitianEigenDecomposition:
    """Eigenvalues in descending order with matching orthonormal columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        v = self.eigenvectors
        return (v * self.eigenvalues) @ dagger(v)


def hermitian_eig(h: np.ndarray) -> HermitianEigenDecomposition:
    """Deterministic Hermitian eigendecomposition.

    The input is symmetrized after a Hermiticity check. Eigenvalues come back
    sorted in descending order and each eigenvector has its first
    non-negligible entry made real and positive.
    """
    h = hermitize(h)
    w, v = np.linalg.eigh(h)
    order = np.argsort(-w, kind="stable")
    return HermitianEigenDecomposition(w[order], _fix_phases(v[:, order]))


def psd_sqrt(m: np.ndarray) -> np.ndarray:
    """Principal square root of a positive semidefinite matrix.

    Eigenvalues in ``[-1e-9, 0)`` are clamped to zero; anything more negative
    raises ``ValueError``.
    """
    m = hermitize(m)
    w, v = np.linalg.eigh(m)
    if w.size and w[0] < -PSD_TOL:
        raise ValueError(f"matrix is not PSD (min eigenvalue {w[0]:.3e})")
    w = np.clip(w, 0.0, None)
    r = (v * np.sqrt(w)) @ dagger(v)
    return (r + dagger(r)) / 2


def inv_sqrt(m: np.ndarray, eps: float = 0.0) -> np.ndarray:
    """``(m + eps*I)^(-1/2)`` for Hermitian positive (semi)definite ``m``."""
    m = (m + dagger(m)) / 2
    w, v = np.linalg.eigh(m)
    w = np.clip(w, 0.0, None) + eps
    if np.any(w <= 0):
        raise np.linalg.LinAlgError("singular matrix in inverse square root")
    return (v / np.sqrt(w)) @ dagger(v)


def top_eigenvector(h: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest eigenvalue of a Hermitian matrix and a unit eigenvector."""
    dec = hermitian_eig(h)
    return float(dec.eigenvalues[0]), dec.eigenvectors[:, 0]


def schmidt_coefficients(v: np.ndarray, dims: tuple[int, int] | None = None) -> np.ndarray:
    v = np.asarray(v, dtype=complex)
    a, b = _bipartite_dims(v, dims)
    return np.linalg.svd(v.reshape(a, b), compute_uv=False)


def schmidt_rank(v: np.ndarray, dims: tuple[int, int] | None = None, tol: float = 1e-10) -> int:
    return int(np.sum(schmidt_coefficients(v, dims) > tol))


def _bipartite_dims(v: np.ndarray, dims: tuple[int, int] | None) -> tuple[int, int]:
    if dims is None:
        a = int(round(np.sqrt(v.size)))
        if a * a != v.size:
            raise ValueError(f"cannot infer square bipartition of length {v.size}")
        return a, a
    a, b = dims
    if a * b != v.size:
        raise ValueError(f"dims {dims} incompatible with vector length {v.size}")
    return a, b


def schmidt_truncate(v: np.ndarray, d: int, dims: tuple[int, int] | None = None) -> np.ndarray:
    """Keep the ``d`` largest Schmidt terms of a bipartite pure state.

    Parameters
    ----------
    v : ndarray
        Unit vector on ``C^a ⊗ C^b`` (row-major: index ``i*b + j``).
    d : int
        Maximal Schmidt rank of the result.
    dims : (a, b), optional
        Local dimensions; a square split is assumed when omitted.

    Returns
    -------
    ndarray
        The renormalized truncation, which is the closest state of Schmidt
        rank at most ``d`` in fidelity.
    """
    if d < 1:
        raise ValueError("Schmidt rank bound d must be >= 1")
    v = np.asarray(v, dtype=complex)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("state vector is not normalized")
    a, b = _bipartite_dims(v, dims)
    if d >= min(a, b):
        return v.copy()
    u, s, vh = np.linalg.svd(v.reshape(a, b), full_matrices=False)
    out = (u[:, :d] * s[:d]) @ vh[:d]
    out = out.reshape(-1)
    return out / np.linalg.norm(out)


def partial_trace(rho: np.ndarray, dims: tuple[int, int], keep: int = 0) -> np.ndarray:
    """Reduced state of subsystem ``keep`` (0 or 1) of a bipartite operator."""
    a, b = dims
    t = np.asarray(rho).reshape(a, b, a, b)
    if keep == 0:
        return np.einsum("ijkj->ik", t)
    return np.einsum("ijik->jk", t)


def polar_unitary(g: np.ndarray) -> np.ndarray:
    """Unitary factor ``V W†`` of the SVD ``g = V Σ W†``."""
    v, _, wh = np.linalg.svd(g)
    return v @ wh


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary from the QR decomposition of a Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def random_pure_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return z / np.linalg.norm(z)
