"""Inference-side retrieval gains: k-reciprocal re-ranking with Jaccard
distance, alpha-weighted query expansion, and distance-matrix ensembling.

The re-ranking runs over the concatenated query+gallery set:

1. Euclidean distances between all points.
2. k-reciprocal sets R(p, k1) = {g in N(p, k1) : p in N(g, k1)}, where
   N(p, k) is the first k entries of p's distance-ranked list (the point
   itself included; ties broken by lower index).
3. Expansion: for each q' in R(p, k1), merge R(q', ceil(k1/2)) when at
   least 2/3 of it already lies in R(p, k1).
4. Row encoding V_p[g] = exp(-d(p, g)) inside the expanded set, else 0,
   L1-normalized.
5. Local query expansion: V_p becomes the mean of V over N(p, k2).
6. Jaccard distance 1 - sum(min(V_p, V_g)) / sum(max(V_p, V_g)).
7. Blend (1 - lambda) * jaccard + lambda * euclidean, query x gallery block.

Holds the full (q+g) x (q+g) matrices in memory, which is fine up to
roughly 20k samples; beyond that the computation would have to be blocked
over probe rows (not implemented).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .geometry import euclidean_distances, l2_normalize


@dataclass(frozen=True)
class RerankParams:
    k1: int = 20
    k2: int = 6
    lam: float = 0.1


@dataclass(frozen=True)
class AqeParams:
    k: int = 5
    alpha: float = 3.0


def _validate_rerank(params, n_total):
    if params.k1 < 1 or params.k2 < 1 or params.k2 > params.k1:
        raise ConfigError(f"need 1 <= k2 <= k1, got k1={params.k1}, k2={params.k2}")
    if params.k1 >= n_total:
        raise ConfigError(f"k1={params.k1} must be below the total sample count {n_total}")
    if not (0.0 <= params.lam <= 1.0):
        raise ConfigError(f"lambda must be in [0, 1], got {params.lam}")


def k_reciprocal_rerank(q: np.ndarray, g: np.ndarray, params: RerankParams = RerankParams()) -> np.ndarray:
    """Re-rank query x gallery distances with k-reciprocal Jaccard encoding.

    With lam=1 the output equals the plain Euclidean query x gallery
    distances.  Neighbor ties are broken by lower index, so the result is
    deterministic.
    """
    q = np.asarray(q)
    g = np.asarray(g)
    nq, ng = q.shape[0], g.shape[0]
    n = nq + ng
    _validate_rerank(params, n)
    feats = np.vstack([q.astype(np.float32), g.astype(np.float32)])

    dist = euclidean_distances(feats, feats).astype(np.float64)
    rank = np.argsort(dist, axis=1, kind="stable")

    k1 = params.k1
    half = math.ceil(k1 / 2)
    top_k1 = rank[:, :k1]
    top_half = rank[:, :half]

    in_top_k1 = np.zeros((n, n), dtype=bool)
    in_top_k1[np.arange(n)[:, None], top_k1] = True
    in_top_half = np.zeros((n, n), dtype=bool)
    in_top_half[np.arange(n)[:, None], top_half] = True

    # reciprocal sets at k1 and at ceil(k1/2)
    recip = [top_k1[p][in_top_k1[top_k1[p], p]] for p in range(n)]
    recip_half = [top_half[p][in_top_half[top_half[p], p]] for p in range(n)]

    V = np.zeros((n, n), dtype=np.float64)
    for p in range(n):
        base = recip[p]
        member = np.zeros(n, dtype=bool)
        member[base] = True
        expanded = member.copy()
        for cand in base:
            cset = recip_half[cand]
            if member[cset].sum() >= (2.0 / 3.0) * len(cset):
                expanded[cset] = True
        idx = np.flatnonzero(expanded)
        weights = np.exp(-dist[p, idx])
        total = weights.sum()
        if total > 0.0:
            V[p, idx] = weights / total

    # local query expansion over the k2 nearest rows
    V = V[rank[:, :params.k2]].mean(axis=1)

    row_sums = V.sum(axis=1)
    vq, vg = V[:nq], V[nq:]
    jaccard = np.empty((nq, ng), dtype=np.float64)
    for i in range(nq):
        mins = np.minimum(vq[i][None, :], vg).sum(axis=1)
        maxs = row_sums[i] + row_sums[nq:] - mins
        with np.errstate(invalid="ignore", divide="ignore"):
            row = 1.0 - mins / maxs
        jaccard[i] = np.where(maxs > 0.0, row, 1.0)

    blended = (1.0 - params.lam) * jaccard + params.lam * dist[:nq, nq:]
    return np.maximum(blended, 0.0).astype(np.float32)


def aqe_expand(q: np.ndarray, g: np.ndarray, params: AqeParams = AqeParams()) -> np.ndarray:
    """Alpha-weighted query expansion.

    Each query is replaced by the weighted mean of itself (weight 1) and
    its top-k gallery neighbors by cosine similarity, neighbor weight
    similarity**alpha; vectors are L2-normalized before averaging and the
    result is re-normalized.  Negative similarities contribute weight 0
    (fractional alpha is undefined for them).  k=0 returns the normalized
    queries unchanged.
    """
    if params.k < 0:
        raise ConfigError(f"neighbor count must be >= 0, got {params.k}")
    if params.alpha < 0:
        raise ConfigError(f"alpha must be >= 0, got {params.alpha}")
    q = np.asarray(q)
    g = np.asarray(g)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ShapeError(f"incompatible shapes {q.shape} vs {g.shape}")
    if params.k > g.shape[0]:
        raise ConfigError(f"k={params.k} exceeds gallery size {g.shape[0]}")

    qn = l2_normalize(q).astype(np.float64)
    if params.k == 0:
        return qn.astype(np.float32)
    gn = l2_normalize(g).astype(np.float64)
    sim = qn @ gn.T
    order = np.argsort(-sim, axis=1, kind="stable")[:, :params.k]

    expanded = np.empty_like(qn)
    for i in range(qn.shape[0]):
        idx = order[i]
        s = sim[i, idx]
        # sim**alpha, except non-positive similarities drop out entirely
        # (fractional alpha is undefined there, and 0**0 would weight them 1)
        w = np.where(s > 0.0, np.power(np.maximum(s, 0.0), params.alpha), 0.0)
        acc = qn[i] + w @ gn[idx]
        denom = 1.0 + w.sum()
        expanded[i] = acc / denom
    return l2_normalize(expanded)


def ensemble_distances(matrices, normalize: bool = False) -> np.ndarray:
    """Elementwise sum of identically shaped distance matrices.

    With ``normalize`` each input is min-max scaled to [0, 1] over its own
    entries first (a constant matrix maps to all zeros).
    """
    mats = [np.asarray(m) for m in matrices]
    if not mats:
        raise ConfigError("ensemble needs at least one distance matrix")
    shape = mats[0].shape
    for m in mats:
        if m.ndim != 2:
            raise ShapeError(f"distance matrices must be 2-D, got shape {m.shape}")
        if m.shape != shape:
            raise ShapeError(f"shape mismatch in ensemble: {m.shape} vs {shape}")
    total = np.zeros(shape, dtype=np.float64)
    for m in mats:
        m64 = m.astype(np.float64)
        if normalize:
            lo, hi = m64.min(), m64.max()
            m64 = (m64 - lo) / (hi - lo) if hi > lo else np.zeros(shape, dtype=np.float64)
        total += m64
    return total.astype(np.float32)
