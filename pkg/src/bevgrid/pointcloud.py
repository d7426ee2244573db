"""Point cloud containers and the native binary point format.

On-disk point format: a little-endian header (magic ``BEVP``, u32 format
version, u64 point count) followed by fixed 28-byte records of f64 x/y/z
in meters plus u8 r/g/b/label. Label files are a bare u8 per point in
cloud order.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

CLASS_NAMES = (
    "ground",
    "vegetation",
    "building",
    "wall",
    "bridge",
    "parking",
    "rail",
    "traffic road",
    "street furniture",
    "car",
    "footpath",
    "bike",
    "water",
)
NUM_CLASSES = len(CLASS_NAMES)
UNLABELED = 255

MAGIC = b"BEVP"
FORMAT_VERSION = 1
HEADER_SIZE = 16
RECORD_DTYPE = np.dtype(
    [
        ("x", "<f8"),
        ("y", "<f8"),
        ("z", "<f8"),
        ("r", "u1"),
        ("g", "u1"),
        ("b", "u1"),
        ("label", "u1"),
    ]
)
RECORD_SIZE = RECORD_DTYPE.itemsize  # 28

DEFAULT_CHUNK_SIZE = 262_144


class FormatError(ValueError):
    """A point file does not match the on-disk format."""


def class_id(name: str) -> int:
    return CLASS_NAMES.index(name)


def valid_labels(labels: np.ndarray) -> np.ndarray:
    """Boolean mask of labels that are legal class ids or the unlabeled value."""
    return (labels < NUM_CLASSES) | (labels == UNLABELED)


@dataclass(frozen=True)
class Point:
    """One colored, labeled sample; ``index`` is its read order in the cloud."""

    x: float
    y: float
    z: float
    r: int
    g: int
    b: int
    label: int
    index: int


@dataclass
class PointCloud:
    """Column-oriented batch of points.

    ``index`` holds each point's zero-based ordinal in the source cloud and
    survives slicing, so batches can always be mapped back to file order.
    """

    xyz: np.ndarray  # (N, 3) float64
    rgb: np.ndarray  # (N, 3) uint8
    label: np.ndarray  # (N,) uint8
    index: np.ndarray  # (N,) int64

    def __post_init__(self):
        self.xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        self.rgb = np.ascontiguousarray(self.rgb, dtype=np.uint8)
        self.label = np.ascontiguousarray(self.label, dtype=np.uint8)
        self.index = np.ascontiguousarray(self.index, dtype=np.int64)
        n = len(self.xyz)
        if not (len(self.rgb) == len(self.label) == len(self.index) == n):
            raise ValueError("point cloud columns have mismatched lengths")
        if not valid_labels(self.label).all():
            bad = self.label[~valid_labels(self.label)][0]
            raise ValueError(f"label {bad} outside {{0..{NUM_CLASSES - 1}, {UNLABELED}}}")

    def __len__(self) -> int:
        return len(self.xyz)

    def __getitem__(self, rows) -> "PointCloud":
        return PointCloud(self.xyz[rows], self.rgb[rows], self.label[rows], self.index[rows])

    def point(self, row: int) -> Point:
        x, y, z = self.xyz[row]
        r, g, b = self.rgb[row]
        return Point(x, y, z, int(r), int(g), int(b), int(self.label[row]), int(self.index[row]))

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(
            np.empty((0, 3), np.float64),
            np.empty((0, 3), np.uint8),
            np.empty(0, np.uint8),
            np.empty(0, np.int64),
        )

    @classmethod
    def concat(cls, parts: Iterable["PointCloud"]) -> "PointCloud":
        parts = list(parts)
        if not parts:
            return cls.empty()
        return cls(
            np.concatenate([p.xyz for p in parts]),
            np.concatenate([p.rgb for p in parts]),
            np.concatenate([p.label for p in parts]),
            np.concatenate([p.index for p in parts]),
        )

    def to_records(self) -> np.ndarray:
        rec = np.empty(len(self), RECORD_DTYPE)
        rec["x"], rec["y"], rec["z"] = self.xyz[:, 0], self.xyz[:, 1], self.xyz[:, 2]
        rec["r"], rec["g"], rec["b"] = self.rgb[:, 0], self.rgb[:, 1], self.rgb[:, 2]
        rec["label"] = self.label
        return rec

    @classmethod
    def from_records(cls, rec: np.ndarray, start_index: int = 0) -> "PointCloud":
        n = len(rec)
        xyz = np.stack([rec["x"], rec["y"], rec["z"]], axis=1)
        rgb = np.stack([rec["r"], rec["g"], rec["b"]], axis=1)
        return cls(xyz, rgb, rec["label"], np.arange(start_index, start_index + n, dtype=np.int64))


def write_points(path: str | Path, cloud: PointCloud) -> None:
    """Write a cloud in the native binary format (header + 28-byte records)."""
    path = Path(path)
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(np.uint32(FORMAT_VERSION).tobytes())
        f.write(np.uint64(len(cloud)).tobytes())
        cloud.to_records().tofile(f)


def _validate_point_file(path: Path) -> int:
    """Check header and size consistency; return the declared point count."""
    if not path.exists():
        raise FileNotFoundError(f"point file not found: {path}")
    size = os.stat(path).st_size
    if size < HEADER_SIZE:
        raise FormatError(f"{path}: malformed header, file is only {size} bytes")
    with open(path, "rb") as f:
        magic = f.read(4)
        version = int(np.frombuffer(f.read(4), "<u4")[0])
        count = int(np.frombuffer(f.read(8), "<u8")[0])
    if magic != MAGIC:
        raise FormatError(f"{path}: malformed header, bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: malformed header, unsupported version {version}")
    payload = size - HEADER_SIZE
    if payload % RECORD_SIZE != 0:
        offset = HEADER_SIZE + (payload // RECORD_SIZE) * RECORD_SIZE
        raise FormatError(f"{path}: truncated record at byte offset {offset}")
    records = payload // RECORD_SIZE
    if records != count:
        raise FormatError(f"{path}: header declares {count} points but file holds {records} records")
    return count


def read_point_stream(
    path: str | Path, chunk_size: int = DEFAULT_CHUNK_SIZE
) -> Iterator[PointCloud]:
    """Stream a point file as batches of at most ``chunk_size`` points.

    Batches carry consecutive ``index`` values matching file order; the header
    and record layout are validated up front so a bad file fails before any
    batch is yielded.
    """
    if chunk_size <= 0:
        raise ValueError(f"chunk_size must be positive, got {chunk_size}")
    path = Path(path)
    count = _validate_point_file(path)

    def batches() -> Iterator[PointCloud]:
        done = 0
        with open(path, "rb") as f:
            f.seek(HEADER_SIZE)
            while done < count:
                n = min(chunk_size, count - done)
                rec = np.fromfile(f, RECORD_DTYPE, count=n)
                if len(rec) != n:  # size was checked, so this means a racing writer
                    raise FormatError(f"{path}: short read at record {done + len(rec)}")
                yield PointCloud.from_records(rec, start_index=done)
                done += n

    return batches()


def read_points(path: str | Path) -> PointCloud:
    """Read a whole point file into memory."""
    return PointCloud.concat(read_point_stream(path))


def write_labels(
    path: str | Path, labels: np.ndarray, expected_count: int | None = None
) -> None:
    """Write one u8 label per point, in input order.

    ``expected_count`` is the source cloud's point count; a mismatch raises
    before anything is written.
    """
    labels = np.asarray(labels)
    if expected_count is not None and len(labels) != expected_count:
        raise ValueError(
            f"label vector has {len(labels)} entries but the cloud holds {expected_count} points"
        )
    if labels.size and (labels.min() < 0 or labels.max() > 255):
        raise ValueError("labels must fit in a u8")
    labels = labels.astype(np.uint8)
    if not valid_labels(labels).all():
        bad = labels[~valid_labels(labels)][0]
        raise ValueError(f"label {bad} outside {{0..{NUM_CLASSES - 1}, {UNLABELED}}}")
    with open(path, "wb") as f:
        labels.tofile(f)


def read_labels(path: str | Path, expected_count: int | None = None) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"label file not found: {path}")
    labels = np.fromfile(path, np.uint8)
    if expected_count is not None and len(labels) != expected_count:
        raise ValueError(
            f"label file holds {len(labels)} entries, expected {expected_count}"
        )
    return labels
