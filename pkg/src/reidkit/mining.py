"""Loss-based hard-sample/noise partitioning and balanced-identity resampling.

The loss signal is the batch-hard triplet loss of each sample treated as an
anchor over the full set.  Samples whose loss clears the noise threshold
are marked for deletion, the band between the two thresholds is kept as
hard samples for extra augmentation, and the rest is clean.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import ConfigError, IoError
from .losses import TripletParams
from .tensorio import MetaTable

_BLOCK_ROWS = 1024  # anchors per distance block; keeps memory flat at scale


class SampleClass(Enum):
    CLEAN = "clean"
    HARD = "hard"
    NOISE = "noise"


@dataclass(frozen=True)
class MiningThresholds:
    t_hard: float
    t_noise: float


@dataclass
class MiningReport:
    losses: np.ndarray
    partition: list

    def counts(self) -> dict:
        out = {cls: 0 for cls in SampleClass}
        for c in self.partition:
            out[c] += 1
        return out


@dataclass(frozen=True)
class ResamplePlan:
    """Extra copies per sample index; samples without copies are omitted."""

    copies: list


def per_sample_losses(features, meta: MetaTable, params: TripletParams = TripletParams()):
    """Batch-hard triplet loss of every sample as an anchor over the full set.

    Samples that lack a positive (singleton identity) or a negative (single
    identity in the whole table) get loss 0 and trigger a RuntimeWarning.
    Computed in row blocks, so the full n x n matrix never materializes.
    """
    x = np.asarray(features, dtype=np.float64)
    n = x.shape[0]
    if len(meta) != n:
        raise ConfigError(f"metadata length {len(meta)} does not match {n} features")
    labels = meta.person_ids
    sq = np.sum(x * x, axis=1)

    losses = np.zeros(n, dtype=np.float64)
    degenerate = 0
    for start in range(0, n, _BLOCK_ROWS):
        stop = min(start + _BLOCK_ROWS, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        np.maximum(d2, 0.0, out=d2)
        dist = np.sqrt(d2)
        for a in range(start, stop):
            row = dist[a - start]
            same = labels == labels[a]
            same[a] = False
            diff = labels != labels[a]
            if not same.any() or not diff.any():
                degenerate += 1
                continue
            d_pos = row[same].max()
            d_neg = row[diff].min()
            losses[a] = max(d_pos - d_neg + params.margin, 0.0)
    if degenerate:
        warnings.warn(
            f"{degenerate} sample(s) lack a positive or negative pair; assigned loss 0",
            RuntimeWarning,
            stacklevel=2,
        )
    return losses


def partition_samples(losses, thresholds: MiningThresholds) -> MiningReport:
    """Split samples into clean/hard/noise by the loss thresholds.

    Noise iff loss >= t_noise, hard iff t_hard <= loss < t_noise, clean
    otherwise.
    """
    if thresholds.t_hard >= thresholds.t_noise:
        raise ConfigError(
            f"t_hard ({thresholds.t_hard}) must be strictly below t_noise ({thresholds.t_noise})"
        )
    losses = np.asarray(losses, dtype=np.float64)
    partition = []
    for v in losses:
        if v >= thresholds.t_noise:
            partition.append(SampleClass.NOISE)
        elif v >= thresholds.t_hard:
            partition.append(SampleClass.HARD)
        else:
            partition.append(SampleClass.CLEAN)
    return MiningReport(losses=losses, partition=partition)


def thresholds_from_quantiles(losses, q_hard: float = 0.7, q_noise: float = 0.97) -> MiningThresholds:
    """Derive thresholds as empirical quantiles (linear interpolation).

    Degenerate distributions may produce t_hard == t_noise, which
    :func:`partition_samples` rejects downstream.
    """
    if not (0.0 < q_hard < q_noise < 1.0):
        raise ConfigError(
            f"quantile fractions must satisfy 0 < q_hard < q_noise < 1, got {q_hard}, {q_noise}"
        )
    losses = np.asarray(losses, dtype=np.float64)
    if losses.size == 0:
        raise ConfigError("cannot take quantiles of an empty loss vector")
    t_hard, t_noise = np.quantile(losses, [q_hard, q_noise], method="linear")
    return MiningThresholds(t_hard=float(t_hard), t_noise=float(t_noise))


def balanced_resample_plan(meta: MetaTable, target: int = 20, max_copies: int = 5) -> ResamplePlan:
    """Copy plan that tops identities up to ``target`` samples.

    Copies are dealt round-robin over an identity's samples in table order,
    each sample receiving at most ``max_copies`` extras, stopping once the
    post-resample count reaches min(target, k * (1 + max_copies)).
    Identities already at or above ``target`` get nothing.
    """
    if len(meta) == 0:
        raise ConfigError("metadata table is empty")
    if target < 1 or max_copies < 1:
        raise ConfigError("target and max_copies must be >= 1")

    by_id: dict = {}
    for idx, entry in enumerate(meta):
        by_id.setdefault(entry.person_id, []).append(idx)

    copies: dict = {}
    for indices in by_id.values():
        k = len(indices)
        if k >= target:
            continue
        achievable = min(target, k * (1 + max_copies))
        need = achievable - k
        counts = [0] * k
        slot = 0
        while need > 0:
            counts[slot % k] += 1
            slot += 1
            need -= 1
        for idx, c in zip(indices, counts):
            if c > 0:
                copies[idx] = c
    return ResamplePlan(copies=sorted(copies.items()))


def save_mining_report(report: MiningReport, meta: MetaTable, path) -> None:
    """Serialize a mining report to CSV with columns image_id,loss,class."""
    if len(meta) != len(report.partition):
        raise ConfigError("metadata length does not match report length")
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "loss", "class"])
            for entry, loss, cls in zip(meta, report.losses, report.partition):
                writer.writerow([entry.image_id, repr(float(loss)), cls.value])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
