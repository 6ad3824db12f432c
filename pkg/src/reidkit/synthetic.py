"""Deterministic synthetic embedding benchmark.

Stands in for retrieval datasets that cannot be redistributed: each
identity gets a random unit-norm center, samples scatter around it with
Gaussian spread, and a fraction of samples is relabeled to a wrong
identity to simulate occlusion-style label noise.  Everything is drawn
from one Philox stream, so a seed pins the dataset byte-for-byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .augment import make_rng
from .errors import ConfigError
from .tensorio import MetaTable, SampleMeta


@dataclass(frozen=True)
class SynthParams:
    n_ids: int = 50
    per_id: int = 20
    dims: int = 32
    cluster_spread: float = 0.3
    noise_frac: float = 0.0
    seed: int = 0


def generate_synthetic(params: SynthParams):
    """Build (features, meta) for a clustered synthetic identity dataset.

    Draw order: per identity one center then its sample block, finally the
    relabeling choices.  Camera tags alternate 0/1 within each identity so
    the same-camera exclusion path stays exercisable.  The relabel count is
    round(noise_frac * n).
    """
    if params.n_ids < 2 or params.per_id < 2:
        raise ConfigError(
            f"need n_ids >= 2 and per_id >= 2, got {params.n_ids}, {params.per_id}"
        )
    if params.dims < 1:
        raise ConfigError(f"dims must be >= 1, got {params.dims}")
    if params.cluster_spread <= 0.0:
        raise ConfigError(f"cluster_spread must be positive, got {params.cluster_spread}")
    if not (0.0 <= params.noise_frac <= 1.0):
        raise ConfigError(f"noise_frac must be in [0, 1], got {params.noise_frac}")

    rng = make_rng(params.seed)
    n = params.n_ids * params.per_id
    features = np.empty((n, params.dims), dtype=np.float64)
    labels = np.empty(n, dtype=np.int64)
    for pid in range(params.n_ids):
        center = rng.normal(0.0, 1.0, params.dims)
        center /= np.linalg.norm(center)
        block = slice(pid * params.per_id, (pid + 1) * params.per_id)
        features[block] = center + rng.normal(
            0.0, params.cluster_spread, (params.per_id, params.dims)
        )
        labels[block] = pid

    n_noise = int(round(params.noise_frac * n))
    if n_noise > 0:
        victims = rng.choice(n, size=n_noise, replace=False)
        for idx in victims:
            wrong = int(rng.integers(0, params.n_ids - 1))
            if wrong >= labels[idx]:
                wrong += 1
            labels[idx] = wrong

    entries = []
    for i in range(n):
        true_block = i // params.per_id
        j = i % params.per_id
        entries.append(
            SampleMeta(
                image_id=f"id{true_block:04d}_img{j:03d}",
                person_id=int(labels[i]),
                camera_id=j % 2,
            )
        )
    return features.astype(np.float32), MetaTable(entries)


def split_query_gallery(features, meta: MetaTable, query_per_id: int):
    """Per labeled identity, route the first ``query_per_id`` samples to the
    query side and the rest to the gallery.

    Returns (q_features, q_meta, g_features, g_meta); order inside each
    side follows the original table.
    """
    if query_per_id < 1:
        raise ConfigError(f"query_per_id must be >= 1, got {query_per_id}")
    features = np.asarray(features)
    seen = {}
    q_idx, g_idx = [], []
    for i, entry in enumerate(meta):
        k = seen.get(entry.person_id, 0)
        seen[entry.person_id] = k + 1
        (q_idx if k < query_per_id else g_idx).append(i)
    if not q_idx or not g_idx:
        raise ConfigError("split produced an empty query or gallery side")
    return (
        features[q_idx],
        meta.subset(q_idx),
        features[g_idx],
        meta.subset(g_idx),
    )
