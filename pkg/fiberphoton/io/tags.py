"""Time-tag streams and their on-disk formats.

Two layouts are supported:

* CSV with header ``channel,timestamp_ps`` and one tag per line, channel 0
  (A) or 1 (B), timestamps ascending.
* TTG1 binary: the 4-byte magic ``TTG1``, one version byte (1), then 9-byte
  records made of a uint8 channel and a little-endian uint64 timestamp in
  picoseconds.

Both parse back to identical streams. Readers work chunk by chunk so a file
never has to fit in memory at once.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np

from fiberphoton.errors import TagFormatError

CSV_HEADER = "channel,timestamp_ps"
TTG1_MAGIC = b"TTG1"
TTG1_VERSION = 1
TTG1_RECORD = np.dtype([("channel", "u1"), ("timestamp", "<u8")])
CHANNEL_A = 0
CHANNEL_B = 1
DEFAULT_CHUNK_TAGS = 1 << 20


@dataclass(frozen=True, eq=False)
class TagStream:
    """Sorted photon detections from a two-channel time tagger.

    Attributes:
        timestamps: Detection times in integer picoseconds, non-decreasing.
        channels: Channel label per tag (0 = A, 1 = B).
    """

    timestamps: np.ndarray
    channels: np.ndarray

    def __post_init__(self) -> None:
        timestamps = np.ascontiguousarray(self.timestamps, dtype=np.int64)
        channels = np.ascontiguousarray(self.channels, dtype=np.uint8)
        if timestamps.ndim != 1 or timestamps.shape != channels.shape:
            raise TagFormatError("timestamps and channels must be 1-D arrays of equal length")
        if timestamps.size:
            if timestamps[0] < 0:
                raise TagFormatError("timestamps must be >= 0")
            if np.any(np.diff(timestamps) < 0):
                raise TagFormatError("timestamps must be sorted")
            if np.any(channels > CHANNEL_B):
                raise TagFormatError("channel labels must be 0 or 1")
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "channels", channels)

    __hash__ = None  # type: ignore[assignment]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TagStream):
            return NotImplemented
        return np.array_equal(self.timestamps, other.timestamps) and np.array_equal(self.channels, other.channels)

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @classmethod
    def empty(cls) -> "TagStream":
        return cls(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.uint8))

    @classmethod
    def from_channels(cls, stream_a: np.ndarray, stream_b: np.ndarray) -> "TagStream":
        """Merge two per-channel timestamp arrays into one sorted stream."""
        timestamps = np.concatenate([np.asarray(stream_a, dtype=np.int64), np.asarray(stream_b, dtype=np.int64)])
        channels = np.concatenate(
            [np.full(len(stream_a), CHANNEL_A, dtype=np.uint8), np.full(len(stream_b), CHANNEL_B, dtype=np.uint8)]
        )
        order = np.lexsort((channels, timestamps))
        return cls(timestamps[order], channels[order])

    def channel(self, label: int) -> np.ndarray:
        """Timestamps of one channel, still sorted."""
        return self.timestamps[self.channels == label]

    def span_ps(self) -> int:
        """Time between the first and the last tag (ps)."""
        if self.timestamps.size < 2:
            return 0
        return int(self.timestamps[-1] - self.timestamps[0])


def _format_for(path: Path, fmt: Optional[str]) -> str:
    if fmt is not None:
        if fmt not in {"csv", "ttg1"}:
            raise TagFormatError(f"unknown tag format {fmt!r}")
        return fmt
    return "csv" if path.suffix.lower() == ".csv" else "ttg1"


def save_tags(path: Path, stream: TagStream, *, fmt: Optional[str] = None, overwrite: bool = True) -> Path:
    """Write a tag stream as CSV or TTG1.

    Args:
        path: Destination file; ``.csv`` selects CSV when ``fmt`` is None,
            any other suffix selects TTG1.
        stream: Tags to write.
        fmt: Explicit format, "csv" or "ttg1".
        overwrite: Whether to overwrite an existing file.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists() and not overwrite:
        raise FileExistsError(f"Tag file already exists: {path}")

    if _format_for(path, fmt) == "csv":
        table = np.column_stack([stream.channels.astype(np.int64), stream.timestamps])
        with path.open("w", encoding="utf-8", newline="\n") as fh:
            fh.write(CSV_HEADER + "\n")
            np.savetxt(fh, table, fmt="%d", delimiter=",")
    else:
        records = np.empty(len(stream), dtype=TTG1_RECORD)
        records["channel"] = stream.channels
        records["timestamp"] = stream.timestamps.astype(np.uint64)
        with path.open("wb") as fh:
            fh.write(TTG1_MAGIC + bytes([TTG1_VERSION]))
            fh.write(records.tobytes())
    return path


def _parse_csv_rows(path: Path, rows: List[str]) -> TagStream:
    rows = [row for row in rows if row.strip()]
    if not rows:
        return TagStream.empty()
    try:
        table = np.loadtxt(rows, delimiter=",", dtype=np.int64, ndmin=2)
    except ValueError as exc:
        raise TagFormatError(f"{path}: {exc}") from exc
    if table.shape[1] != 2:
        raise TagFormatError(f"{path}: expected two columns")
    if np.any((table[:, 0] < 0) | (table[:, 0] > CHANNEL_B)):
        raise TagFormatError(f"{path}: channel labels must be 0 or 1")
    return TagStream(timestamps=table[:, 1], channels=table[:, 0])


def _csv_chunks(path: Path, chunk_tags: int) -> Iterator[TagStream]:
    with path.open("r", encoding="utf-8") as fh:
        if fh.readline().strip() != CSV_HEADER:
            raise TagFormatError(f"{path}: expected header '{CSV_HEADER}'")
        while True:
            rows = list(itertools.islice(fh, chunk_tags))
            if not rows:
                return
            chunk = _parse_csv_rows(path, rows)
            if len(chunk):
                yield chunk


def _ttg1_chunks(path: Path, chunk_tags: int) -> Iterator[TagStream]:
    header = len(TTG1_MAGIC) + 1
    with path.open("rb") as fh:
        head = fh.read(header)
    if len(head) < header or head[:4] != TTG1_MAGIC:
        raise TagFormatError(f"{path}: missing TTG1 magic")
    if head[4] != TTG1_VERSION:
        raise TagFormatError(f"{path}: unsupported TTG1 version {head[4]}")
    body = path.stat().st_size - header
    if body % TTG1_RECORD.itemsize:
        raise TagFormatError(f"{path}: truncated TTG1 record")
    n_records = body // TTG1_RECORD.itemsize
    for start in range(0, n_records, chunk_tags):
        count = min(chunk_tags, n_records - start)
        records = np.fromfile(path, dtype=TTG1_RECORD, count=count, offset=header + start * TTG1_RECORD.itemsize)
        if np.any(records["timestamp"] > np.iinfo(np.int64).max):
            raise TagFormatError(f"{path}: timestamp out of range")
        yield TagStream(timestamps=records["timestamp"].astype(np.int64), channels=records["channel"])


def iter_tag_chunks(path: Path, chunk_tags: int = DEFAULT_CHUNK_TAGS) -> Iterator[TagStream]:
    """Read a tag file as consecutive streams of at most ``chunk_tags`` tags.

    Only one chunk is held in memory at a time. TTG1 is detected by its
    magic bytes, anything else is parsed as CSV.

    Raises:
        TagFormatError: For malformed files or tags out of order across
            chunk boundaries.
    """
    if chunk_tags < 1:
        raise TagFormatError("chunk size must be at least one tag")
    path = Path(path)
    with path.open("rb") as fh:
        head = fh.read(len(TTG1_MAGIC))
    chunks = _ttg1_chunks(path, chunk_tags) if head == TTG1_MAGIC else _csv_chunks(path, chunk_tags)
    last = -1
    for chunk in chunks:
        if chunk.timestamps[0] < last:
            raise TagFormatError(f"{path}: timestamps must be sorted")
        last = int(chunk.timestamps[-1])
        yield chunk


def load_tags(path: Path) -> TagStream:
    """Read a whole tag file into one stream."""
    chunks = list(iter_tag_chunks(path))
    if not chunks:
        return TagStream.empty()
    return TagStream(
        timestamps=np.concatenate([chunk.timestamps for chunk in chunks]),
        channels=np.concatenate([chunk.channels for chunk in chunks]),
    )
