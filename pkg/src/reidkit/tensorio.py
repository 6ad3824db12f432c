"""On-disk formats and in-memory containers for features, distances and metadata.

Binary formats (all little-endian, row-major):

* ``.fvec``  -- magic ``RDF1`` | u32 n | u32 d | n*d float32 payload
* ``.dmat``  -- magic ``RDM1`` | u32 n_query | u32 n_gallery | float32 payload
* ``.csv``   -- UTF-8 metadata with header exactly ``image_id,person_id,camera_id``

Feature matrices are plain ``(n, d)`` float32 arrays and distance matrices
plain ``(n_query, n_gallery)`` float32 arrays; the loaders reject anything
non-finite (and, for distances, anything negative) so downstream code can
rely on those invariants.  Saving then loading reproduces the array
bit-for-bit, which the golden-replay tests depend on.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, FormatError, IoError

FVEC_MAGIC = b"RDF1"
DMAT_MAGIC = b"RDM1"

_HEADER = struct.Struct("<4sII")

META_HEADER = ["image_id", "person_id", "camera_id"]


@dataclass(frozen=True)
class SampleMeta:
    """Identity and camera/sequence tags for one image."""

    image_id: str
    person_id: int
    camera_id: int = 0


class MetaTable:
    """Ordered list of :class:`SampleMeta`, index-aligned with a feature matrix.

    Image ids must be unique within one table; person and camera ids must be
    non-negative integers.
    """

    def __init__(self, entries):
        entries = list(entries)
        seen = set()
        for e in entries:
            if not e.image_id:
                raise DataError("empty image_id in metadata table")
            if e.image_id in seen:
                raise DataError(f"duplicate image_id {e.image_id!r}")
            seen.add(e.image_id)
            if e.person_id < 0 or e.camera_id < 0:
                raise DataError(
                    f"negative person_id/camera_id for image {e.image_id!r}"
                )
        self.entries = entries

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def __getitem__(self, i):
        return self.entries[i]

    def __eq__(self, other):
        return isinstance(other, MetaTable) and self.entries == other.entries

    @property
    def person_ids(self) -> np.ndarray:
        return np.array([e.person_id for e in self.entries], dtype=np.int64)

    @property
    def camera_ids(self) -> np.ndarray:
        return np.array([e.camera_id for e in self.entries], dtype=np.int64)

    @property
    def image_ids(self) -> list:
        return [e.image_id for e in self.entries]

    def subset(self, indices) -> "MetaTable":
        return MetaTable([self.entries[i] for i in indices])


def _check_features(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError(f"feature matrix must be 2-D and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("feature matrix contains NaN or Inf")
    return np.ascontiguousarray(m, dtype=np.float32)


def _check_distances(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise DataError(f"distance matrix must be 2-D and non-empty, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise DataError("distance matrix contains NaN or Inf")
    if np.any(m < 0):
        raise DataError("distance matrix contains negative entries")
    return np.ascontiguousarray(m, dtype=np.float32)


def _load_binary(path, magic, kind):
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if len(blob) < _HEADER.size:
        raise FormatError(f"{path}: truncated header ({len(blob)} bytes)")
    tag, n, d = _HEADER.unpack_from(blob)
    if tag != magic:
        raise FormatError(f"{path}: bad magic {tag!r}, expected {magic!r}")
    payload = blob[_HEADER.size:]
    expected = n * d * 4
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload is {len(payload)} bytes, header declares {expected}"
        )
    if n < 1 or d < 1:
        raise DataError(f"{path}: header declares empty {kind} ({n}x{d})")
    data = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    return np.ascontiguousarray(data)


def _save_binary(m, path, magic):
    path = Path(path)
    header = _HEADER.pack(magic, m.shape[0], m.shape[1])
    payload = np.ascontiguousarray(m, dtype="<f4").tobytes()
    try:
        path.write_bytes(header + payload)
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def load_features(path) -> np.ndarray:
    """Load an ``.fvec`` file into an (n, d) float32 array."""
    m = _load_binary(path, FVEC_MAGIC, "feature matrix")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: feature payload contains NaN or Inf")
    return m


def save_features(m: np.ndarray, path) -> None:
    """Write an (n, d) float32 array as an ``.fvec`` file.

    The matrix is validated first, so nothing is written on invalid input.
    """
    m = _check_features(m)
    _save_binary(m, path, FVEC_MAGIC)


def load_distances(path) -> np.ndarray:
    """Load a ``.dmat`` file into an (n_query, n_gallery) float32 array."""
    m = _load_binary(path, DMAT_MAGIC, "distance matrix")
    if not np.all(np.isfinite(m)):
        raise DataError(f"{path}: distance payload contains NaN or Inf")
    if np.any(m < 0):
        raise DataError(f"{path}: distance payload contains negative entries")
    return m


def save_distances(m: np.ndarray, path) -> None:
    """Write an (n_query, n_gallery) float32 array as a ``.dmat`` file."""
    m = _check_distances(m)
    _save_binary(m, path, DMAT_MAGIC)


def load_meta(path) -> MetaTable:
    """Load a metadata CSV, preserving row order."""
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise FormatError(f"{path}: empty metadata file") from None
            if header != META_HEADER:
                raise FormatError(
                    f"{path}: bad header {header!r}, expected {META_HEADER!r}"
                )
            entries = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 3:
                    raise FormatError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
                image_id, pid, cam = row
                try:
                    pid = int(pid)
                    cam = int(cam)
                except ValueError:
                    raise FormatError(
                        f"{path}:{lineno}: person_id/camera_id must be integers"
                    ) from None
                entries.append(SampleMeta(image_id, pid, cam))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    return MetaTable(entries)


def save_meta(meta: MetaTable, path) -> None:
    """Write a metadata table back to CSV (inverse of :func:`load_meta`)."""
    path = Path(path)
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(META_HEADER)
            for e in meta:
                writer.writerow([e.image_id, e.person_id, e.camera_id])
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc
