import os
import unittest
from pathlib import Path
from unittest import mock

import numpy as np

from fiberphoton.correlation.correlator import (
    THREADS_ENV,
    StreamingCorrelator,
    brute_force_counts,
    correlate_channels,
    correlate_chunks,
    correlate_parallel,
    correlate_sources,
    cross_correlate,
    normalize,
    resolve_workers,
    zero_delay_bin,
)
from fiberphoton.errors import CorrelatorError
from fiberphoton.io.tables import read_histogram_csv
from fiberphoton.io.tags import TagStream, iter_tag_chunks, load_tags

DATA = Path(__file__).resolve().parents[1] / "data"
SLOW = os.environ.get("FIBERPHOTON_SLOW_TESTS") == "1"


def random_stream(rng: np.random.Generator, n: int, span_ps: int) -> np.ndarray:
    return np.sort(rng.integers(0, span_ps, n)).astype(np.int64)


def pieces(stream: TagStream, size: int) -> list:
    return [
        TagStream(stream.timestamps[i : i + size], stream.channels[i : i + size]) for i in range(0, len(stream), size)
    ]


class CorrelatorTests(unittest.TestCase):
    def test_single_pair_lands_in_its_bin(self) -> None:
        histogram = cross_correlate(np.array([10_000]), np.array([12_500]), 1000, 5000)
        self.assertEqual(histogram.n_bins, 10)
        self.assertEqual(int(histogram.counts.sum()), 1)
        self.assertEqual(int(np.argmax(histogram.counts)), (2_500 + 5000) // 1000)

    def test_half_open_edges(self) -> None:
        a = np.array([100_000])
        b = np.array([100_000 - 5000, 100_000, 100_000 + 5000])
        counts = cross_correlate(a, b, 1000, 5000).counts
        self.assertEqual(counts[0], 1)
        self.assertEqual(counts[5], 1)
        self.assertEqual(int(counts.sum()), 2)

    def test_zero_delay_bin(self) -> None:
        histogram = cross_correlate(np.array([0]), np.array([0]), 500, 3000)
        self.assertEqual(zero_delay_bin(histogram), 6)
        self.assertEqual(int(histogram.counts[6]), 1)
        self.assertEqual(int(histogram.tau_ps[6]), 0)

    def test_matches_brute_force_on_random_streams(self) -> None:
        rng = np.random.default_rng(1234)
        for trial in range(100 if SLOW else 20):
            n_a = int(rng.integers(0, 2000))
            n_b = int(rng.integers(0, 2000))
            span = int(rng.integers(1_000_000, 50_000_000))
            a = random_stream(rng, n_a, span)
            b = random_stream(rng, n_b, span)
            expected = brute_force_counts(a, b, 250, 20_000)
            with self.subTest(trial=trial):
                np.testing.assert_array_equal(cross_correlate(a, b, 250, 20_000).counts, expected)

    def test_parallel_equals_sequential(self) -> None:
        rng = np.random.default_rng(99)
        a = random_stream(rng, 20_000, 200_000_000)
        b = random_stream(rng, 20_000, 200_000_000)
        sequential = cross_correlate(a, b, 100, 50_000)
        for workers in (1, 2, 3, 8):
            parallel = correlate_parallel(a, b, 100, 50_000, workers=workers)
            np.testing.assert_array_equal(parallel.counts, sequential.counts)
            self.assertEqual(parallel.t_total_ps, sequential.t_total_ps)

    def test_repeated_timestamps(self) -> None:
        a = np.array([1000, 1000, 1000])
        b = np.array([1000, 1000])
        np.testing.assert_array_equal(cross_correlate(a, b, 100, 1000).counts, brute_force_counts(a, b, 100, 1000))
        self.assertEqual(int(cross_correlate(a, b, 100, 1000).counts[10]), 6)

    def test_mirror_symmetry(self) -> None:
        a = np.array([1_000, 50_000, 90_000])
        b = np.array([1_350, 48_200, 97_700])
        forward = cross_correlate(a, b, 1000, 10_000).counts
        backward = cross_correlate(b, a, 1000, 10_000).counts
        np.testing.assert_array_equal(forward, backward[::-1])

    def test_uncorrelated_streams_normalize_to_one(self) -> None:
        rng = np.random.default_rng(7)
        span = 10**12
        a = random_stream(rng, 100_000, span)
        b = random_stream(rng, 100_000, span)
        histogram = normalize(cross_correlate(a, b, 10_000, 500_000, t_total_ps=span))
        self.assertAlmostEqual(float(histogram.g2.mean()), 1.0, delta=0.03)
        scale = span / (a.size * b.size * 10_000)
        np.testing.assert_allclose(histogram.g2_err, np.sqrt(histogram.counts) * scale, rtol=1e-12)

    def test_empty_streams(self) -> None:
        histogram = cross_correlate(np.zeros(0), np.zeros(0), 100, 1000)
        self.assertEqual(int(histogram.counts.sum()), 0)
        with self.assertRaises(CorrelatorError):
            normalize(histogram)

    def test_rejects_bad_input(self) -> None:
        with self.assertRaises(CorrelatorError):
            cross_correlate(np.array([5, 1]), np.array([1]), 100, 1000)
        with self.assertRaises(CorrelatorError):
            cross_correlate(np.array([1]), np.array([1]), 300, 1000)
        with self.assertRaises(CorrelatorError):
            cross_correlate(np.array([1]), np.array([1]), 0, 1000)


class StreamingTests(unittest.TestCase):
    def test_chunked_equals_in_memory(self) -> None:
        rng = np.random.default_rng(55)
        for trial in range(10):
            a = random_stream(rng, int(rng.integers(50, 3000)), 20_000_000)
            b = random_stream(rng, int(rng.integers(50, 3000)), 20_000_000)
            stream = TagStream.from_channels(a, b)
            whole = cross_correlate(a, b, 250, 20_000)
            for size in (3, 64, 10_000):
                with self.subTest(trial=trial, size=size):
                    histogram = correlate_chunks(pieces(stream, size), 250, 20_000, workers=1)
                    np.testing.assert_array_equal(histogram.counts, whole.counts)
                    self.assertEqual(histogram.n_a, whole.n_a)
                    self.assertEqual(histogram.n_b, whole.n_b)
                    self.assertEqual(histogram.t_total_ps, whole.t_total_ps)

    def test_repeated_timestamps_across_chunk_edges(self) -> None:
        a = np.array([1000] * 5 + [3000] * 4)
        b = np.array([1000] * 3 + [2500] * 2 + [3000])
        stream = TagStream.from_channels(a, b)
        expected = brute_force_counts(a, b, 100, 1000)
        for size in (1, 2, 5):
            with self.subTest(size=size):
                np.testing.assert_array_equal(correlate_chunks(pieces(stream, size), 100, 1000).counts, expected)

    def test_separate_sources_read_at_different_paces(self) -> None:
        rng = np.random.default_rng(56)
        a = random_stream(rng, 4000, 50_000_000)
        b = random_stream(rng, 1500, 50_000_000)
        whole = cross_correlate(a, b, 500, 30_000)
        chunks_a = [a[i : i + 5] for i in range(0, a.size, 5)]
        chunks_b = [b[i : i + 300] for i in range(0, b.size, 300)]
        for workers in (1, 3):
            histogram = correlate_sources(chunks_a, chunks_b, 500, 30_000, workers=workers)
            np.testing.assert_array_equal(histogram.counts, whole.counts)
            self.assertEqual(histogram.t_total_ps, whole.t_total_ps)

    def test_memory_stays_bounded(self) -> None:
        rng = np.random.default_rng(57)
        a = random_stream(rng, 50_000, 5_000_000_000)
        b = random_stream(rng, 50_000, 5_000_000_000)
        correlator = StreamingCorrelator(1000, 20_000, workers=1)
        held = []
        for chunk in pieces(TagStream.from_channels(a, b), 1000):
            correlator.add_a(chunk.channel(0))
            correlator.add_b(chunk.channel(1))
            correlator.flush(int(chunk.timestamps[-1]))
            held.append(correlator.buffered)
        self.assertLess(max(held), 1000)
        np.testing.assert_array_equal(correlator.finish().counts, cross_correlate(a, b, 1000, 20_000).counts)

    def test_rejects_out_of_order_chunks(self) -> None:
        correlator = StreamingCorrelator(100, 1000)
        correlator.add_a(np.array([5, 9]))
        with self.assertRaises(CorrelatorError):
            correlator.add_a(np.array([3]))
        with self.assertRaises(CorrelatorError):
            StreamingCorrelator(300, 1000)


class WorkerTests(unittest.TestCase):
    def test_environment_controls_workers(self) -> None:
        with mock.patch.dict(os.environ, {THREADS_ENV: "3"}):
            self.assertEqual(resolve_workers(), 3)
        with mock.patch.dict(os.environ, {THREADS_ENV: "0"}):
            self.assertEqual(resolve_workers(), os.cpu_count() or 1)
        with mock.patch.dict(os.environ, {THREADS_ENV: "many"}):
            with self.assertRaises(CorrelatorError):
                resolve_workers()

    def test_explicit_argument_wins(self) -> None:
        with mock.patch.dict(os.environ, {THREADS_ENV: "3"}):
            self.assertEqual(resolve_workers(2), 2)


class GoldenHistogramTests(unittest.TestCase):
    def test_golden_file(self) -> None:
        stream = load_tags(DATA / "golden_tags.csv")
        self.assertEqual(len(stream), 100)
        histogram = correlate_channels(stream, 1000, 50_000)
        golden = read_histogram_csv(DATA / "golden_tags_hist.csv")
        np.testing.assert_array_equal(histogram.tau_ps, golden["tau_ps"].astype(np.int64))
        np.testing.assert_array_equal(histogram.counts, golden["count"].astype(np.int64))
        np.testing.assert_allclose(histogram.g2, golden["g2"], rtol=1e-9)
        np.testing.assert_allclose(histogram.g2_err, golden["g2_err"], rtol=1e-9)

    def test_golden_file_against_brute_force(self) -> None:
        stream = load_tags(DATA / "golden_tags.csv")
        a, b = stream.channel(0), stream.channel(1)
        np.testing.assert_array_equal(cross_correlate(a, b, 1000, 50_000).counts, brute_force_counts(a, b, 1000, 50_000))

    def test_golden_file_read_in_small_pieces(self) -> None:
        golden = read_histogram_csv(DATA / "golden_tags_hist.csv")
        histogram = correlate_chunks(iter_tag_chunks(DATA / "golden_tags.csv", 7), 1000, 50_000)
        np.testing.assert_array_equal(histogram.counts, golden["count"].astype(np.int64))
        np.testing.assert_allclose(histogram.g2, golden["g2"], rtol=1e-9)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
