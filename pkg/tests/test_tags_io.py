import io
import json
import tempfile
import unittest
from pathlib import Path

import numpy as np

from fiberphoton.errors import ConfigError, TagFormatError
from fiberphoton.io.tables import (
    SCHEMA_VERSION,
    TableFormatError,
    read_columns,
    read_json,
    read_spectrum_csv,
    save_table,
    write_json,
    write_spectrum_csv,
)
from fiberphoton.io.tags import CHANNEL_A, CHANNEL_B, TTG1_MAGIC, TagStream, iter_tag_chunks, load_tags, save_tags
from fiberphoton.spectra.filters import SpectrumTrace


def sample_stream() -> TagStream:
    return TagStream.from_channels(np.array([5, 100, 2**40]), np.array([5, 7, 99, 2**41]))


class TagStreamTests(unittest.TestCase):
    def test_merge_orders_by_time_then_channel(self) -> None:
        stream = sample_stream()
        np.testing.assert_array_equal(stream.timestamps, [5, 5, 7, 99, 100, 2**40, 2**41])
        np.testing.assert_array_equal(stream.channels, [0, 1, 1, 1, 0, 0, 1])
        np.testing.assert_array_equal(stream.channel(CHANNEL_A), [5, 100, 2**40])
        self.assertEqual(stream.span_ps(), 2**41 - 5)

    def test_validation(self) -> None:
        with self.assertRaises(TagFormatError):
            TagStream(np.array([3, 1]), np.array([0, 0]))
        with self.assertRaises(TagFormatError):
            TagStream(np.array([1, 2]), np.array([0, 2]))
        with self.assertRaises(TagFormatError):
            TagStream(np.array([-1]), np.array([0]))

    def test_csv_and_binary_round_trip(self) -> None:
        stream = sample_stream()
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("tags.csv", "tags.ttg"):
                path = save_tags(Path(tmp) / name, stream)
                self.assertEqual(load_tags(path), stream)
            self.assertEqual((Path(tmp) / "tags.ttg").read_bytes()[:4], TTG1_MAGIC)
            self.assertEqual((Path(tmp) / "tags.ttg").stat().st_size, 5 + 9 * len(stream))
            self.assertTrue((Path(tmp) / "tags.csv").read_text().startswith("channel,timestamp_ps\n0,5\n1,5\n"))

    def test_empty_stream_round_trip(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("empty.csv", "empty.ttg"):
                path = save_tags(Path(tmp) / name, TagStream.empty())
                self.assertEqual(len(load_tags(path)), 0)

    def test_overwrite_guard(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = save_tags(Path(tmp) / "tags.csv", sample_stream())
            with self.assertRaises(FileExistsError):
                save_tags(path, sample_stream(), overwrite=False)

    def test_malformed_files(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            bad_header = Path(tmp) / "a.csv"
            bad_header.write_text("time,channel\n1,0\n")
            truncated = Path(tmp) / "b.ttg"
            truncated.write_bytes(TTG1_MAGIC + bytes([1]) + b"\x00\x01")
            bad_version = Path(tmp) / "c.ttg"
            bad_version.write_bytes(TTG1_MAGIC + bytes([2]))
            bad_channel = Path(tmp) / "d.csv"
            bad_channel.write_text("channel,timestamp_ps\n3,10\n")
            for path in (bad_header, truncated, bad_version, bad_channel):
                with self.subTest(path=path.name):
                    with self.assertRaises(TagFormatError):
                        load_tags(path)

    def test_reading_in_pieces(self) -> None:
        stream = sample_stream()
        with tempfile.TemporaryDirectory() as tmp:
            for name in ("tags.csv", "tags.ttg"):
                path = save_tags(Path(tmp) / name, stream)
                chunks = list(iter_tag_chunks(path, 2))
                with self.subTest(name=name):
                    self.assertEqual([len(chunk) for chunk in chunks], [2, 2, 2, 1])
                    np.testing.assert_array_equal(np.concatenate([c.timestamps for c in chunks]), stream.timestamps)
                    np.testing.assert_array_equal(np.concatenate([c.channels for c in chunks]), stream.channels)
            with self.assertRaises(TagFormatError):
                list(iter_tag_chunks(Path(tmp) / "tags.ttg", 0))

    def test_order_is_checked_across_pieces(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "unsorted.csv"
            path.write_text("channel,timestamp_ps\n0,5\n1,9\n0,3\n")
            chunks = iter_tag_chunks(path, 2)
            self.assertEqual(len(next(chunks)), 2)
            with self.assertRaises(TagFormatError):
                next(chunks)


class TableTests(unittest.TestCase):
    def test_spectrum_round_trip(self) -> None:
        trace = SpectrumTrace(np.array([600.0, 600.5, 601.0]), np.array([1.0, 2.5, 0.125]), label="x")
        with tempfile.TemporaryDirectory() as tmp:
            path = save_table(Path(tmp) / "s.csv", write_spectrum_csv, trace)
            loaded = read_spectrum_csv(path)
        np.testing.assert_array_equal(loaded.wavelength_nm, trace.wavelength_nm)
        np.testing.assert_array_equal(loaded.counts, trace.counts)

    def test_writer_on_text_stream(self) -> None:
        out = io.StringIO()
        write_spectrum_csv(out, SpectrumTrace(np.array([1.0, 2.0]), np.array([0.1, 1e-12])))
        self.assertEqual(out.getvalue(), "wavelength_nm,counts\n1,0.1\n2,1e-12\n")

    def test_missing_columns(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "t.csv"
            path.write_text("a,b\n1,2\n")
            with self.assertRaises(TableFormatError):
                read_columns(path, ["a", "c"])
            self.assertEqual(read_columns(path, ["a"])["b"].tolist(), [2.0])

    def test_json_documents(self) -> None:
        with tempfile.TemporaryDirectory() as tmp:
            path = write_json(Path(tmp) / "r.json", "raman", {"factor": 3.07})
            doc = json.loads(path.read_text())
            self.assertEqual(doc["schema_version"], SCHEMA_VERSION)
            self.assertEqual(doc["kind"], "raman")
            broken = Path(tmp) / "broken.json"
            broken.write_text("{not json")
            with self.assertRaises(ConfigError):
                read_json(broken)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
