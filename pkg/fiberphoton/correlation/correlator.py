"""Two-channel time-tag cross-correlation into normalized g2 histograms.

Delays are ``tau = t_b - t_a`` (channel B relative to channel A). Bins are
half-open, ``[-T + k w, -T + (k + 1) w)``, so a delay of exactly ``+T`` is
never counted and a delay on an inner edge goes to the upper bin.

The sequential pass is a sorted merge with a sliding window over channel B.
The parallel pass partitions channel A by index; each partition sees the
slice of channel B within ``T`` of its own tags, owns every pair whose A tag
it holds, and the partial histograms are summed. Integer addition makes the
result identical to the sequential pass.

Files are correlated piece by piece: channel A tags are counted once every
channel B tag within ``T`` of them has been read, and only the last ``2T`` of
channel B is carried from one piece to the next.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Optional

import numba
import numpy as np

from fiberphoton.errors import CorrelatorError
from fiberphoton.io.tags import CHANNEL_A, CHANNEL_B, TagStream

logger = logging.getLogger(__name__)

THREADS_ENV = "FIBERPHOTON_THREADS"
_BRUTE_FORCE_BLOCK = 256
_EXHAUSTED = np.iinfo(np.int64).max


@dataclass(frozen=True, eq=False)
class G2Histogram:
    """Coincidence histogram with optional normalization.

    Attributes:
        bin_width_ps: Bin width ``w`` (ps).
        range_ps: Half range ``T`` (ps); bins cover ``[-T, T)``.
        counts: Raw coincidences per bin.
        n_a: Tags on channel A.
        n_b: Tags on channel B.
        t_total_ps: Acquisition span used for normalization (ps).
        g2: Normalized values, None until :func:`normalize` runs.
        g2_err: Standard error of ``g2``.
    """

    bin_width_ps: int
    range_ps: int
    counts: np.ndarray
    n_a: int
    n_b: int
    t_total_ps: int
    g2: Optional[np.ndarray] = None
    g2_err: Optional[np.ndarray] = None

    @property
    def n_bins(self) -> int:
        return int(self.counts.size)

    @property
    def tau_ps(self) -> np.ndarray:
        """Left bin edges (ps)."""
        return -self.range_ps + self.bin_width_ps * np.arange(self.n_bins, dtype=np.int64)

    @property
    def tau_center_ps(self) -> np.ndarray:
        return self.tau_ps + 0.5 * self.bin_width_ps


def resolve_workers(workers: Optional[int] = None) -> int:
    """Worker count from the argument or ``FIBERPHOTON_THREADS`` (0 = all cores)."""
    if workers is None:
        raw = os.environ.get(THREADS_ENV, "0").strip() or "0"
        try:
            workers = int(raw)
        except ValueError as exc:
            raise CorrelatorError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if workers < 0:
        raise CorrelatorError("worker count must be >= 0")
    return workers or (os.cpu_count() or 1)


def _check_geometry(bin_width_ps: int, range_ps: int) -> int:
    if int(bin_width_ps) != bin_width_ps or int(range_ps) != range_ps:
        raise CorrelatorError("bin width and range must be integer picoseconds")
    if bin_width_ps <= 0 or range_ps <= 0:
        raise CorrelatorError("bin width and range must be > 0")
    if (2 * range_ps) % bin_width_ps:
        raise CorrelatorError(f"bin width {bin_width_ps} ps does not divide 2T = {2 * range_ps} ps")
    return (2 * range_ps) // bin_width_ps


def _as_sorted(timestamps: np.ndarray, name: str) -> np.ndarray:
    array = np.ascontiguousarray(timestamps, dtype=np.int64)
    if array.ndim != 1:
        raise CorrelatorError(f"{name} must be one-dimensional")
    if array.size > 1 and np.any(array[1:] < array[:-1]):
        raise CorrelatorError(f"{name} is not sorted")
    return array


@numba.njit(nogil=True)
def _window_counts(stream_a, stream_b, bin_width, half_range, counts):
    lo = 0
    n_b = stream_b.size
    for i in range(stream_a.size):
        t_a = stream_a[i]
        while lo < n_b and stream_b[lo] < t_a - half_range:
            lo += 1
        j = lo
        while j < n_b and stream_b[j] < t_a + half_range:
            counts[(stream_b[j] - t_a + half_range) // bin_width] += 1
            j += 1


def _span(stream_a: np.ndarray, stream_b: np.ndarray) -> int:
    firsts = [s[0] for s in (stream_a, stream_b) if s.size]
    lasts = [s[-1] for s in (stream_a, stream_b) if s.size]
    if not firsts:
        return 0
    return int(max(lasts) - min(firsts))


def cross_correlate(
    stream_a: np.ndarray,
    stream_b: np.ndarray,
    bin_width_ps: int,
    range_ps: int,
    *,
    t_total_ps: Optional[int] = None,
) -> G2Histogram:
    """Count coincidences between two sorted channels.

    Args:
        stream_a: Channel A timestamps (ps), sorted.
        stream_b: Channel B timestamps (ps), sorted.
        bin_width_ps: Bin width ``w``; must divide ``2 * range_ps``.
        range_ps: Half range ``T``.
        t_total_ps: Acquisition span for normalization; defaults to the
            span covered by both channels.

    Returns:
        Histogram with raw counts; ``g2`` is left empty.

    Raises:
        CorrelatorError: For unsorted input or incompatible geometry.
    """
    n_bins = _check_geometry(bin_width_ps, range_ps)
    a = _as_sorted(stream_a, "stream A")
    b = _as_sorted(stream_b, "stream B")
    counts = np.zeros(n_bins, dtype=np.int64)
    _window_counts(a, b, np.int64(bin_width_ps), np.int64(range_ps), counts)
    return G2Histogram(
        bin_width_ps=int(bin_width_ps),
        range_ps=int(range_ps),
        counts=counts,
        n_a=int(a.size),
        n_b=int(b.size),
        t_total_ps=_span(a, b) if t_total_ps is None else int(t_total_ps),
    )


def _partitioned_counts(
    a: np.ndarray, b: np.ndarray, bin_width_ps: int, range_ps: int, workers: Optional[int]
) -> np.ndarray:
    n_bins = (2 * range_ps) // bin_width_ps
    n_workers = min(resolve_workers(workers), max(a.size, 1))
    partitions = [p for p in np.array_split(np.arange(a.size), n_workers) if p.size]

    def run(indices: np.ndarray) -> np.ndarray:
        part_a = a[indices[0] : indices[-1] + 1]
        lo = np.searchsorted(b, part_a[0] - range_ps, side="left")
        hi = np.searchsorted(b, part_a[-1] + range_ps, side="left")
        partial = np.zeros(n_bins, dtype=np.int64)
        _window_counts(part_a, b[lo:hi], np.int64(bin_width_ps), np.int64(range_ps), partial)
        return partial

    counts = np.zeros(n_bins, dtype=np.int64)
    if len(partitions) == 1:
        counts += run(partitions[0])
    elif partitions:
        with ThreadPoolExecutor(max_workers=len(partitions)) as pool:
            for partial in pool.map(run, partitions):
                counts += partial
    logger.debug("correlated %d x %d tags on %d partitions", a.size, b.size, len(partitions))
    return counts


def correlate_parallel(
    stream_a: np.ndarray,
    stream_b: np.ndarray,
    bin_width_ps: int,
    range_ps: int,
    *,
    workers: Optional[int] = None,
    t_total_ps: Optional[int] = None,
) -> G2Histogram:
    """Same result as :func:`cross_correlate`, computed on worker threads."""
    _check_geometry(bin_width_ps, range_ps)
    a = _as_sorted(stream_a, "stream A")
    b = _as_sorted(stream_b, "stream B")
    return G2Histogram(
        bin_width_ps=int(bin_width_ps),
        range_ps=int(range_ps),
        counts=_partitioned_counts(a, b, int(bin_width_ps), int(range_ps), workers),
        n_a=int(a.size),
        n_b=int(b.size),
        t_total_ps=_span(a, b) if t_total_ps is None else int(t_total_ps),
    )


class StreamingCorrelator:
    """Coincidence counter fed with time-ordered pieces of both channels.

    Channel A tags wait until every channel B tag that can pair with them
    has arrived, are then counted and dropped. Channel B keeps only the last
    ``2 T`` before the point up to which both channels are known, so memory
    is bounded by the chunk size plus the tags inside that window. Counts
    equal those of :func:`cross_correlate` on the concatenated channels.

    Args:
        bin_width_ps: Bin width ``w``; must divide ``2 * range_ps``.
        range_ps: Half range ``T``.
        workers: Threads used per flush; see :func:`resolve_workers`.
    """

    def __init__(self, bin_width_ps: int, range_ps: int, *, workers: Optional[int] = None) -> None:
        self.n_bins = _check_geometry(bin_width_ps, range_ps)
        self.bin_width_ps = int(bin_width_ps)
        self.range_ps = int(range_ps)
        self.workers = workers
        self.counts = np.zeros(self.n_bins, dtype=np.int64)
        self.n_a = 0
        self.n_b = 0
        self._pending_a = np.zeros(0, dtype=np.int64)
        self._window_b = np.zeros(0, dtype=np.int64)
        self._last = {CHANNEL_A: -1, CHANNEL_B: -1}
        self._first: Optional[int] = None
        self._latest = -1

    def _append(self, label: int, timestamps: np.ndarray, held: np.ndarray) -> np.ndarray:
        name = "stream A" if label == CHANNEL_A else "stream B"
        chunk = _as_sorted(timestamps, name)
        if not chunk.size:
            return held
        if chunk[0] < self._last[label]:
            raise CorrelatorError(f"{name} chunks are out of order")
        self._last[label] = int(chunk[-1])
        self._first = int(chunk[0]) if self._first is None else min(self._first, int(chunk[0]))
        self._latest = max(self._latest, int(chunk[-1]))
        return np.concatenate([held, chunk])

    @property
    def buffered(self) -> int:
        """Tags currently held back for later pairs."""
        return int(self._pending_a.size + self._window_b.size)

    def add_a(self, timestamps: np.ndarray) -> None:
        before = self._pending_a.size
        self._pending_a = self._append(CHANNEL_A, timestamps, self._pending_a)
        self.n_a += self._pending_a.size - before

    def add_b(self, timestamps: np.ndarray) -> None:
        before = self._window_b.size
        self._window_b = self._append(CHANNEL_B, timestamps, self._window_b)
        self.n_b += self._window_b.size - before

    def flush(self, complete_until: int) -> None:
        """Count what is final once both channels are known below ``complete_until``."""
        horizon = complete_until - self.range_ps
        ready = int(np.searchsorted(self._pending_a, horizon, side="right"))
        if ready:
            self.counts += _partitioned_counts(
                self._pending_a[:ready], self._window_b, self.bin_width_ps, self.range_ps, self.workers
            )
            self._pending_a = self._pending_a[ready:]
        stale = int(np.searchsorted(self._window_b, complete_until - 2 * self.range_ps, side="left"))
        if stale:
            self._window_b = self._window_b[stale:]

    def finish(self, *, t_total_ps: Optional[int] = None) -> G2Histogram:
        """Count the remaining tags and return the raw histogram."""
        self.flush(self._latest + self.range_ps)
        span = 0 if self._first is None else self._latest - self._first
        return G2Histogram(
            bin_width_ps=self.bin_width_ps,
            range_ps=self.range_ps,
            counts=self.counts.copy(),
            n_a=self.n_a,
            n_b=self.n_b,
            t_total_ps=span if t_total_ps is None else int(t_total_ps),
        )


def correlate_chunks(
    chunks: Iterable[TagStream],
    bin_width_ps: int,
    range_ps: int,
    *,
    workers: Optional[int] = None,
) -> G2Histogram:
    """Correlate B against A over consecutive pieces of one tag stream and normalize."""
    correlator = StreamingCorrelator(bin_width_ps, range_ps, workers=workers)
    for chunk in chunks:
        if not len(chunk):
            continue
        correlator.add_a(chunk.channel(CHANNEL_A))
        correlator.add_b(chunk.channel(CHANNEL_B))
        # a later chunk may still repeat the last timestamp
        correlator.flush(int(chunk.timestamps[-1]))
    return normalize(_logged(correlator.finish()))


def correlate_sources(
    chunks_a: Iterable[np.ndarray],
    chunks_b: Iterable[np.ndarray],
    bin_width_ps: int,
    range_ps: int,
    *,
    workers: Optional[int] = None,
) -> G2Histogram:
    """Correlate two separately stored channels read piece by piece and normalize.

    The source that lags in time is read next, so both stay within about one
    chunk of each other.
    """
    correlator = StreamingCorrelator(bin_width_ps, range_ps, workers=workers)
    sources = {CHANNEL_A: iter(chunks_a), CHANNEL_B: iter(chunks_b)}
    adders = {CHANNEL_A: correlator.add_a, CHANNEL_B: correlator.add_b}
    known = {CHANNEL_A: -1, CHANNEL_B: -1}
    open_sources = {CHANNEL_A, CHANNEL_B}
    while open_sources:
        label = min(open_sources, key=lambda channel: known[channel])
        chunk = next(sources[label], None)
        if chunk is None:
            open_sources.discard(label)
            known[label] = _EXHAUSTED
        elif len(chunk):
            adders[label](chunk)
            known[label] = int(chunk[-1])
        if open_sources:
            correlator.flush(min(known.values()))
    return normalize(_logged(correlator.finish()))


def normalize(histogram: G2Histogram) -> G2Histogram:
    """Fill ``g2 = count * t_total / (n_a * n_b * w)`` and its Poisson error."""
    if histogram.t_total_ps <= 0:
        raise CorrelatorError("zero-length acquisition cannot be normalized")
    if histogram.n_a == 0 or histogram.n_b == 0:
        raise CorrelatorError("both channels need at least one tag for normalization")
    scale = histogram.t_total_ps / (histogram.n_a * histogram.n_b * histogram.bin_width_ps)
    counts = histogram.counts.astype(float)
    return replace(histogram, g2=counts * scale, g2_err=np.sqrt(counts) * scale)


def brute_force_counts(stream_a: np.ndarray, stream_b: np.ndarray, bin_width_ps: int, range_ps: int) -> np.ndarray:
    """Exhaustive pair enumeration; quadratic, for validation only."""
    n_bins = _check_geometry(bin_width_ps, range_ps)
    a = np.asarray(stream_a, dtype=np.int64)
    b = np.asarray(stream_b, dtype=np.int64)
    counts = np.zeros(n_bins, dtype=np.int64)
    for start in range(0, a.size, _BRUTE_FORCE_BLOCK):
        delays = np.subtract.outer(b, a[start : start + _BRUTE_FORCE_BLOCK]).ravel()
        delays = delays[(delays >= -range_ps) & (delays < range_ps)]
        counts += np.bincount((delays + range_ps) // bin_width_ps, minlength=n_bins)
    return counts


def correlate_channels(
    stream: TagStream,
    bin_width_ps: int,
    range_ps: int,
    *,
    workers: Optional[int] = None,
) -> G2Histogram:
    """Correlate channel B against channel A of one stream and normalize."""
    a = stream.channel(CHANNEL_A)
    b = stream.channel(CHANNEL_B)
    if workers == 1:
        histogram = cross_correlate(a, b, bin_width_ps, range_ps)
    else:
        histogram = correlate_parallel(a, b, bin_width_ps, range_ps, workers=workers)
    return normalize(_logged(histogram))


def _logged(histogram: G2Histogram) -> G2Histogram:
    logger.info(
        "histogram with %d bins, %d coincidences, span %.3g s",
        histogram.n_bins,
        int(histogram.counts.sum()),
        histogram.t_total_ps * 1e-12,
    )
    return histogram


def zero_delay_bin(histogram: G2Histogram) -> int:
    """Index of the bin containing ``tau = 0``."""
    return histogram.range_ps // histogram.bin_width_ps
