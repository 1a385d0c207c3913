"""Acquisition functions: random, k-center greedy coreset, PCA coreset,
best-versus-second-best uncertainty and the uncertainty/diversity hybrid.

Every sampler returns an ordered list of ids; order is the order of
selection. Ties are always resolved toward the smallest id.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import BudgetError, PoolError, TaskalError
from .pca import default_dims, pca_fit, pca_project
from .pool import EmbeddingMatrix, PoolState

KINDS = ("random", "kcenter", "pca_coreset", "uncertainty", "hybrid", "hybrid_pca")
NEEDS_SCORES = ("uncertainty", "hybrid", "hybrid_pca")


@dataclass(frozen=True)
class StrategySpec:
    """Which acquisition function to run and with what parameters.

    ``gamma`` belongs to the hybrid kinds and ``pca_dims`` to the PCA
    kinds; ``pca_dims=None`` means ``min(32, d)``.
    """

    kind: str
    budget: int
    gamma: float | None = None
    pca_dims: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise TaskalError(f"unknown strategy {self.kind!r}; expected one of {', '.join(KINDS)}")
        if self.budget < 0:
            raise BudgetError(f"budget must be non-negative, got {self.budget}")
        hybrid = self.kind in ("hybrid", "hybrid_pca")
        if hybrid:
            if self.gamma is None:
                raise TaskalError(f"strategy {self.kind} needs gamma")
            if not 0.0 <= self.gamma <= 1.0:
                raise TaskalError(f"gamma must lie in [0, 1], got {self.gamma}")
        elif self.gamma is not None:
            raise TaskalError(f"gamma is only meaningful for hybrid strategies, not {self.kind}")
        if self.pca_dims is not None:
            if self.kind not in ("pca_coreset", "hybrid_pca"):
                raise TaskalError(f"pca_dims is only meaningful for PCA strategies, not {self.kind}")
            if self.pca_dims < 1:
                raise TaskalError("pca_dims must be positive")

    @property
    def name(self) -> str:
        if self.gamma is not None:
            return f"{self.kind}@{self.gamma:g}"
        return self.kind


@dataclass(frozen=True, eq=False)
class ScoreVector:
    """Per-id margins; lower is more uncertain."""

    ids: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        values = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if ids.shape != values.shape:
            raise TaskalError(f"{len(ids)} ids for {len(values)} scores")
        if not np.all(np.isfinite(values)):
            raise TaskalError("scores must be finite")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.ids)

    def restrict(self, ids: Iterable[int]) -> "ScoreVector":
        """Scores for ``ids`` only, in that order."""
        index = {int(i): k for k, i in enumerate(self.ids)}
        ids = [int(i) for i in ids]
        missing = [i for i in ids if i not in index]
        if missing:
            raise PoolError(f"no score for id {missing[0]}")
        pos = np.array([index[i] for i in ids], dtype=np.int64)
        return ScoreVector(np.array(ids, dtype=np.int64), self.values[pos])


def _check_budget(b, available):
    if b < 0:
        raise BudgetError(f"budget must be non-negative, got {b}")
    if b > available:
        raise BudgetError(f"budget {b} exceeds {available} available candidates")


def _argmax_smallest_id(values, ids, candidates):
    """Position of the max of ``values`` over ``candidates``; ties go to the smallest id."""
    cand_vals = values[candidates]
    top = cand_vals.max()
    tied = candidates[cand_vals == top]
    return int(tied[np.argmin(ids[tied])])


def kcenter_greedy(Z: EmbeddingMatrix, s0: Iterable[int], b: int) -> list[int]:
    """Greedy k-center selection of ``b`` new ids around the seed set ``s0``.

    Each step picks the point farthest (Euclidean) from its nearest
    member of the growing set. One running nearest-center distance is kept
    per point and refreshed against the newest center only, so a step
    costs O(n d). Squared distances are compared; the order is the same.

    With an empty seed set the first pick is the point farthest from the
    centroid.
    """
    if Z.n == 0:
        raise TaskalError("kcenter_greedy on an empty embedding matrix")
    seed_pos = Z.positions(dict.fromkeys(int(i) for i in s0))
    available = Z.n - len(seed_pos)
    _check_budget(b, available)
    if b == 0:
        return []

    data = Z.data
    ids = Z.ids
    chosen = np.zeros(Z.n, dtype=bool)
    chosen[seed_pos] = True
    if len(seed_pos):
        min_sq = np.full(Z.n, np.inf)
        # blockwise keeps the seed distance matrix bounded in memory
        for start in range(0, len(seed_pos), 256):
            centers = data[seed_pos[start:start + 256]]
            sq = ((data[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
            np.minimum(min_sq, sq.min(axis=1), out=min_sq)
    else:
        min_sq = ((data - data.mean(axis=0)) ** 2).sum(axis=1)

    picked = []
    for _ in range(b):
        candidates = np.flatnonzero(~chosen)
        u = _argmax_smallest_id(min_sq, ids, candidates)
        picked.append(int(ids[u]))
        chosen[u] = True
        if not len(seed_pos) and len(picked) == 1:
            min_sq = ((data - data[u]) ** 2).sum(axis=1)
        else:
            np.minimum(min_sq, ((data - data[u]) ** 2).sum(axis=1), out=min_sq)
    return picked


def random_select(pool: PoolState, b: int, seed: int) -> list[int]:
    """``b`` unlabelled ids drawn uniformly without replacement."""
    _check_budget(b, len(pool.unlabelled))
    if b == 0:
        return []
    rng = np.random.default_rng(seed)
    picks = rng.choice(len(pool.unlabelled), size=b, replace=False)
    return [pool.unlabelled[k] for k in picks]


def _pool_embeddings(X: EmbeddingMatrix, pool: PoolState) -> EmbeddingMatrix:
    """Rows of ``X`` that belong to the pool (labelled, selected or unlabelled)."""
    members = pool.all_ids
    if all(int(i) in members for i in X.ids):
        return X
    keep = np.array([int(i) in members for i in X.ids])
    return EmbeddingMatrix(X.data[keep], X.ids[keep])


def _seed_set(pool: PoolState) -> tuple[int, ...]:
    return pool.labelled + pool.selected


def pca_coreset_select(X: EmbeddingMatrix, pool: PoolState, b: int,
                       r: int | None = None, seed: int = 0) -> list[int]:
    """k-center greedy on an unsupervised PCA projection of ``X``.

    ``seed`` is accepted for interface symmetry; the method is deterministic.
    """
    X = _pool_embeddings(X, pool)
    _check_budget(b, len(pool.unlabelled))
    if b == 0:
        return []
    r = default_dims(X.d) if r is None else r
    Zp = pca_project(pca_fit(X, r), X)
    return kcenter_greedy(Zp, _seed_set(pool), b)


def bvsb_scores(probs, ids: Sequence[int] | None = None, atol: float = 1e-6) -> ScoreVector:
    """Best-minus-second-best probability for each row of ``probs``."""
    P = np.asarray(probs, dtype=np.float64)
    if P.ndim != 2:
        raise TaskalError(f"probabilities must be 2-D, got shape {P.shape}")
    if P.shape[1] < 2:
        raise TaskalError("need at least 2 classes for a margin")
    if not np.all(np.isfinite(P)) or np.any(P < 0):
        raise TaskalError("probabilities must be finite and non-negative")
    off = np.abs(P.sum(axis=1) - 1.0)
    if np.any(off > atol):
        raise TaskalError(f"row {int(np.argmax(off > atol))} does not sum to 1")
    top2 = np.partition(P, P.shape[1] - 2, axis=1)[:, -2:]
    margin = np.clip(top2[:, 1] - top2[:, 0], 0.0, 1.0)
    if ids is None:
        ids = np.arange(len(P))
    return ScoreVector(np.asarray(ids, dtype=np.int64), margin)


def uncertainty_select(scores: ScoreVector, b: int) -> list[int]:
    """The ``b`` lowest-margin ids, ascending by (score, id)."""
    _check_budget(b, len(scores))
    order = np.lexsort((scores.ids, scores.values))
    return [int(i) for i in scores.ids[order[:b]]]


def split_budget(b: int, gamma: float) -> tuple[int, int]:
    """(uncertain, diverse) counts with uncertain = floor(gamma * b)."""
    # tolerate float products such as 0.29 * 100 = 28.999999999999996
    n_u = min(b, math.floor(gamma * b + 1e-9))
    return n_u, b - n_u


def hybrid_select(Z: EmbeddingMatrix, pool: PoolState, scores: ScoreVector,
                  b: int, gamma: float) -> list[int]:
    """Uncertain picks first, then a k-center batch seeded with them.

    ``scores`` must cover at least the unlabelled ids; extra ids are ignored.
    Seeding the diverse pass with the uncertain picks keeps the two parts
    disjoint and spreads the diverse part away from them.
    """
    if not 0.0 <= gamma <= 1.0:
        raise TaskalError(f"gamma must lie in [0, 1], got {gamma}")
    Z = _pool_embeddings(Z, pool)
    _check_budget(b, len(pool.unlabelled))
    n_u, n_d = split_budget(b, gamma)
    uncertain = uncertainty_select(scores.restrict(pool.unlabelled), n_u)
    diverse = kcenter_greedy(Z, _seed_set(pool) + tuple(uncertain), n_d) if n_d else []
    return uncertain + diverse


def select(spec: StrategySpec, pool: PoolState, Z: EmbeddingMatrix | None = None,
           scores: ScoreVector | None = None, features: EmbeddingMatrix | None = None) -> list[int]:
    """Dispatch ``spec`` against the pool.

    ``Z`` is the task-aware latent space, ``features`` the raw inputs for
    the PCA kinds (falls back to ``Z``), ``scores`` the BvSB margins.
    """
    b = spec.budget
    if spec.kind in NEEDS_SCORES and scores is None:
        raise TaskalError(f"strategy {spec.kind} needs uncertainty scores")
    if spec.kind == "random":
        return random_select(pool, b, spec.seed)
    if spec.kind == "uncertainty":
        _check_budget(b, len(pool.unlabelled))
        return uncertainty_select(scores.restrict(pool.unlabelled), b)
    if spec.kind in ("pca_coreset", "hybrid_pca"):
        src = features if features is not None else Z
        if src is None:
            raise TaskalError(f"strategy {spec.kind} needs features")
        src = _pool_embeddings(src, pool)
        if spec.kind == "pca_coreset":
            return pca_coreset_select(src, pool, b, spec.pca_dims, spec.seed)
        r = default_dims(src.d) if spec.pca_dims is None else spec.pca_dims
        return hybrid_select(pca_project(pca_fit(src, r), src), pool, scores, b, spec.gamma)
    if Z is None:
        raise TaskalError(f"strategy {spec.kind} needs embeddings")
    if spec.kind == "kcenter":
        return kcenter_greedy(_pool_embeddings(Z, pool), _seed_set(pool), b)
    return hybrid_select(Z, pool, scores, b, spec.gamma)
