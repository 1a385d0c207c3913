"""Principal component analysis by power iteration with deflation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TaskalError
from .pool import EmbeddingMatrix

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000
DEFAULT_MAX_DIMS = 32


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (r, d), orthonormal rows
    explained_variance: np.ndarray  # (r,), non-increasing

    @property
    def d(self) -> int:
        return self.components.shape[1]

    @property
    def r(self) -> int:
        return self.components.shape[0]

    def reconstruct(self, coords: np.ndarray) -> np.ndarray:
        return np.asarray(coords) @ self.components + self.mean


def default_dims(d: int) -> int:
    return min(DEFAULT_MAX_DIMS, d)


def _orthogonalize(v, basis):
    # two passes of Gram-Schmidt keep the result orthogonal to ~1e-16
    for _ in range(2):
        for b in basis:
            v = v - (b @ v) * b
    return v


def _power_iteration(M, start, basis, tol, max_iter, floor):
    """Dominant unit eigenvector of symmetric PSD ``M`` orthogonal to ``basis``.

    Returns None once the remaining eigenvalue is at or below ``floor``.
    """
    v = _orthogonalize(start, basis)
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return None
    v = v / norm
    for _ in range(max_iter):
        w = _orthogonalize(M @ v, basis)
        norm = np.linalg.norm(w)
        if norm <= floor:
            return None
        w = w / norm
        if np.linalg.norm(w - v) < tol:
            return w
        v = w
    return v


def _complete_basis(basis, d):
    """Deterministic unit vector orthogonal to ``basis`` (standard axes first)."""
    best, best_norm = None, -1.0
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        res = _orthogonalize(e, basis)
        norm = np.linalg.norm(res)
        if norm > best_norm + 1e-12:
            best, best_norm = res, norm
    return best / best_norm


def _canonical_sign(v):
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if len(nz) and v[nz[0]] < 0:
        return -v
    return v


def pca_fit(X: EmbeddingMatrix | np.ndarray, r: int, *, tol: float = POWER_TOL,
            max_iter: int = POWER_MAX_ITER) -> PcaModel:
    """Top-``r`` principal directions of the sample covariance.

    Eigenvectors are peeled off one at a time: power iteration finds the
    dominant direction, which is then deflated out of the matrix. When
    n < d the n x n Gram matrix is iterated instead of the d x d covariance
    and its eigenvectors are mapped back through the centred data.
    Directions with zero variance are filled in with a deterministic
    orthonormal completion, so the rows of ``components`` are always
    orthonormal. Each component's sign is fixed so its first nonzero
    coordinate is positive.
    """
    data = X.data if isinstance(X, EmbeddingMatrix) else np.asarray(X, dtype=np.float64)
    n, d = data.shape
    if n < 2:
        raise TaskalError(f"pca needs at least 2 rows, got {n}")
    if not 1 <= r <= min(n, d):
        raise TaskalError(f"pca dimension {r} outside [1, {min(n, d)}]")

    mean = data.mean(axis=0)
    Xc = data - mean
    gram = n < d
    M = (Xc @ Xc.T if gram else Xc.T @ Xc) / (n - 1)
    start = np.random.default_rng(0).standard_normal(M.shape[0])
    # eigenvalues this far below the total variance are deflation round-off
    floor = 1e-12 * float(np.trace(M))

    found = []  # eigenvectors in the iterated space
    components = []
    for _ in range(r):
        u = _power_iteration(M, start, found, tol, max_iter, floor) if len(found) < M.shape[0] else None
        v = None
        if u is not None:
            lam = float(u @ M @ u)
            M = M - lam * np.outer(u, u)
            found.append(u)
            v = Xc.T @ u if gram else u
            v = _orthogonalize(v, components)
            norm = np.linalg.norm(v)
            v = v / norm if norm > 1e-12 * max(1.0, np.abs(Xc).max()) else None
        if v is None:
            v = _complete_basis(components, d)
        components.append(v)

    C = np.array(components)
    var = np.maximum(np.sum((Xc @ C.T) ** 2, axis=0) / (n - 1), 0.0)
    order = np.argsort(-var, kind="stable")
    C = np.array([_canonical_sign(c) for c in C[order]])
    return PcaModel(mean=mean, components=C, explained_variance=var[order])


def pca_project(model: PcaModel, X: EmbeddingMatrix) -> EmbeddingMatrix:
    """Centred coordinates of ``X`` along the model's components."""
    if X.d != model.d:
        raise TaskalError(f"dimension mismatch: model d={model.d}, data d={X.d}")
    return EmbeddingMatrix((X.data - model.mean) @ model.components.T, X.ids)
