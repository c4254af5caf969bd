"""Prediction-trajectory logs, label pools, and the TRJ1 on-disk format.

A trajectory log records, for every training example and every logged epoch,
the full class-probability vector predicted by a supervised run.  All
difficulty scores downstream consume only this record, so any trainer that
can emit a TRJ1 file can feed the pruning pipeline.

TRJ1 layout (little-endian throughout):

    magic          4 bytes   b"TRJ1"
    version        u32       currently 1
    n_examples     u64
    n_epochs       u32
    n_classes      u32
    tag_length     u32       followed by that many UTF-8 bytes
    epoch_ids      n_epochs * u32
    payload        n_examples * n_epochs * n_classes * f32,
                   example-major, epoch next, class innermost
    label section  per example: label i32 (-1 if absent),
                   is_ground_truth u8, ground_truth i32 (-1 if absent)

The label section is always physically present; an all-absent section means
labels ship separately.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"TRJ1"
FORMAT_VERSION = 1
PROB_SUM_TOL = 1e-6

_LABEL_DTYPE = np.dtype([("label", "<i4"), ("is_gt", "u1"), ("gt", "<i4")])


class TrajectoryError(Exception):
    """Base class for trajectory-log failures."""


class BadMagicError(TrajectoryError):
    """File does not start with the TRJ1 magic bytes."""


class VersionMismatchError(TrajectoryError):
    """File declares a format version this reader does not speak."""


class TruncatedLogError(TrajectoryError):
    """File ends before the declared payload does."""


class InvariantError(TrajectoryError):
    """Data violates a structural invariant (probability sums, ordering, ranges)."""


@dataclass(frozen=True)
class TrajectoryLog:
    """Per-example, per-epoch class probabilities from one supervised run.

    probs has shape (n_examples, n_epochs, n_classes); every probs[i, t]
    must be a probability vector (entries in [0, 1], sum within
    PROB_SUM_TOL of 1).  Held as float64 in memory; the disk format narrows
    to float32.  epoch_ids are the producing run's epoch numbers, strictly
    increasing.  Instances are immutable; the backing arrays are marked
    read-only so they can be shared across workers.
    """

    probs: np.ndarray
    epoch_ids: np.ndarray
    source_tag: str = ""

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        epoch_ids = np.asarray(self.epoch_ids, dtype=np.int64)
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "epoch_ids", epoch_ids)
        self.validate()
        probs.flags.writeable = False
        epoch_ids.flags.writeable = False

    @property
    def n_examples(self) -> int:
        return self.probs.shape[0]

    @property
    def n_epochs(self) -> int:
        return self.probs.shape[1]

    @property
    def n_classes(self) -> int:
        return self.probs.shape[2]

    def validate(self) -> None:
        if self.probs.ndim != 3:
            raise InvariantError(f"probs must be 3-d, got shape {self.probs.shape}")
        n, t, c = self.probs.shape
        if n < 1 or t < 1 or c < 2:
            raise InvariantError(f"need n_examples>=1, n_epochs>=1, n_classes>=2, got {(n, t, c)}")
        if self.epoch_ids.shape != (t,):
            raise InvariantError(f"epoch_ids length {self.epoch_ids.shape} != n_epochs {t}")
        if t > 1 and not np.all(np.diff(self.epoch_ids) > 0):
            raise InvariantError("epoch_ids must be strictly increasing")
        if np.any(self.epoch_ids < 0) or np.any(self.epoch_ids > 0xFFFFFFFF):
            raise InvariantError("epoch_ids must fit in u32")
        if not np.isfinite(self.probs).all():
            raise InvariantError("probabilities must be finite")
        if self.probs.min() < 0.0 or self.probs.max() > 1.0:
            raise InvariantError("probabilities must lie in [0, 1]")
        sums = self.probs.sum(axis=2)
        worst = float(np.abs(sums - 1.0).max())
        if worst > PROB_SUM_TOL:
            raise InvariantError(f"probability rows must sum to 1 within {PROB_SUM_TOL}, worst error {worst:.3g}")


@dataclass(frozen=True)
class LabelPool:
    """Per-example label record for a training pool.

    labels[i] is the class the pool assigns to example i (a ground-truth
    label where is_ground_truth[i], a pseudo-label otherwise).  ground_truth
    is optional and exists for evaluation only; no scoring or selection code
    reads it.
    """

    labels: np.ndarray
    is_ground_truth: np.ndarray
    n_classes: int
    ground_truth: np.ndarray | None = None

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        is_gt = np.asarray(self.is_ground_truth, dtype=bool)
        gt = None if self.ground_truth is None else np.asarray(self.ground_truth, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "is_ground_truth", is_gt)
        object.__setattr__(self, "ground_truth", gt)
        self.validate()
        labels.flags.writeable = False
        is_gt.flags.writeable = False
        if gt is not None:
            gt.flags.writeable = False

    @property
    def n_examples(self) -> int:
        return self.labels.shape[0]

    def validate(self) -> None:
        n = self.labels.shape[0]
        if self.labels.ndim != 1 or n < 1:
            raise InvariantError("labels must be a non-empty 1-d array")
        if self.is_ground_truth.shape != (n,):
            raise InvariantError("is_ground_truth length must match labels")
        if self.n_classes < 2:
            raise InvariantError("need n_classes >= 2")
        if self.labels.min() < 0 or self.labels.max() >= self.n_classes:
            raise InvariantError(f"labels must lie in [0, {self.n_classes})")
        if self.ground_truth is not None:
            if self.ground_truth.shape != (n,):
                raise InvariantError("ground_truth length must match labels")
            if self.ground_truth.min() < 0 or self.ground_truth.max() >= self.n_classes:
                raise InvariantError(f"ground_truth must lie in [0, {self.n_classes})")
            anchored = self.labels[self.is_ground_truth] == self.ground_truth[self.is_ground_truth]
            if not np.all(anchored):
                raise InvariantError("ground-truth entries must keep their true label")


def write_log(log: TrajectoryLog, path: str | Path, pool: LabelPool | None = None) -> None:
    """Write ``log`` (and optionally an aligned ``pool``) as a TRJ1 file.

    Invariants are re-checked before any bytes are written so a corrupted
    in-memory log never reaches disk.
    """
    log.validate()
    n, t, c = log.probs.shape
    if pool is not None:
        pool.validate()
        if pool.n_examples != n:
            raise InvariantError(f"pool has {pool.n_examples} examples, log has {n}")
        if pool.n_classes != c:
            raise InvariantError(f"pool has {pool.n_classes} classes, log has {c}")

    tag = log.source_tag.encode("utf-8")
    parts = [
        MAGIC,
        struct.pack("<I", FORMAT_VERSION),
        struct.pack("<Q", n),
        struct.pack("<I", t),
        struct.pack("<I", c),
        struct.pack("<I", len(tag)),
        tag,
        log.epoch_ids.astype("<u4").tobytes(),
        np.ascontiguousarray(log.probs, dtype="<f4").tobytes(),
    ]
    section = np.zeros(n, dtype=_LABEL_DTYPE)
    if pool is None:
        section["label"] = -1
        section["is_gt"] = 0
        section["gt"] = -1
    else:
        section["label"] = pool.labels
        section["is_gt"] = pool.is_ground_truth.astype(np.uint8)
        section["gt"] = -1 if pool.ground_truth is None else pool.ground_truth
    parts.append(section.tobytes())
    Path(path).write_bytes(b"".join(parts))


class _Cursor:
    """Bounds-checked reader over an in-memory byte buffer."""

    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, count: int, what: str) -> bytes:
        if self.pos + count > len(self.buf):
            raise TruncatedLogError(f"file ends inside {what} (needed {count} bytes at offset {self.pos})")
        out = self.buf[self.pos : self.pos + count]
        self.pos += count
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str) -> int:
        return struct.unpack("<Q", self.take(8, what))[0]


def read_log_with_pool(path: str | Path) -> tuple[TrajectoryLog, LabelPool | None]:
    """Parse a TRJ1 file, returning the log and its embedded pool if any."""
    cur = _Cursor(Path(path).read_bytes())
    magic = cur.take(4, "magic")
    if magic != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, got {magic!r}")
    version = cur.u32("version")
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version} not supported (reader speaks {FORMAT_VERSION})")
    n = cur.u64("n_examples")
    t = cur.u32("n_epochs")
    c = cur.u32("n_classes")
    tag_len = cur.u32("tag length")
    tag = cur.take(tag_len, "source tag").decode("utf-8")
    epoch_ids = np.frombuffer(cur.take(4 * t, "epoch ids"), dtype="<u4").astype(np.int64)
    payload = np.frombuffer(cur.take(4 * n * t * c, "payload"), dtype="<f4")
    probs = payload.reshape(n, t, c).copy()
    section = np.frombuffer(cur.take(_LABEL_DTYPE.itemsize * n, "label section"), dtype=_LABEL_DTYPE)

    log = TrajectoryLog(probs=probs, epoch_ids=epoch_ids, source_tag=tag)

    labels = section["label"].astype(np.int64)
    flags = section["is_gt"]
    gts = section["gt"].astype(np.int64)
    if np.any(flags > 1):
        raise InvariantError("is_ground_truth bytes must be 0 or 1")
    if np.all(labels == -1):
        return log, None
    if np.any(labels == -1):
        raise InvariantError("label section mixes present and absent labels")
    gt = None
    if np.all(gts == -1):
        gt = None
    elif np.any(gts == -1):
        raise InvariantError("ground-truth section mixes present and absent entries")
    else:
        gt = gts
    pool = LabelPool(labels=labels, is_ground_truth=flags.astype(bool), n_classes=c, ground_truth=gt)
    return log, pool


def read_log(path: str | Path) -> TrajectoryLog:
    """Parse a TRJ1 file, ignoring any embedded label section."""
    return read_log_with_pool(path)[0]


def slice_epochs(log: TrajectoryLog, first: int, last: int) -> TrajectoryLog:
    """Restrict a log to stored epochs [first, last], 1-based inclusive.

    Positions index the stored epochs, not the producer's epoch numbers;
    a log recorded on a subsampled schedule slices by storage order.
    """
    if not (1 <= first <= last <= log.n_epochs):
        raise ValueError(f"epoch slice [{first}, {last}] out of range for {log.n_epochs} stored epochs")
    return TrajectoryLog(
        probs=log.probs[:, first - 1 : last, :].copy(),
        epoch_ids=log.epoch_ids[first - 1 : last].copy(),
        source_tag=log.source_tag,
    )
