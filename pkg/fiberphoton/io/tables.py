"""CSV tables and JSON documents written and read by the command-line tools.

Floats are written with ten significant digits so repeated runs produce
byte-identical files. Every JSON document carries ``schema_version`` and a
``kind`` naming the producing command.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, Iterable, Sequence, TextIO

import numpy as np

from fiberphoton.correlation.correlator import G2Histogram
from fiberphoton.errors import ConfigError, FiberPhotonError
from fiberphoton.optics.interface import AngularPattern, SweepRow
from fiberphoton.spectra.filters import SpectrumTrace

SCHEMA_VERSION = 1
SWEEP_HEADER = ("distance_um", "eta_parallel", "eta_orthogonal", "eta_spherical")
HISTOGRAM_HEADER = ("tau_ps", "count", "g2", "g2_err")
PATTERN_HEADER = ("theta_rad", "hemisphere", "density")
SPECTRUM_HEADER = ("wavelength_nm", "counts")
SCAN_HEADER = ("frequency_mhz", "counts")


class TableFormatError(FiberPhotonError):
    """Raised when a CSV table lacks required columns or holds bad values."""

    module = "tables"


def fmt(value: float) -> str:
    return format(float(value), ".10g")


def _write_rows(out: TextIO, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    out.write(",".join(header) + "\n")
    for row in rows:
        out.write(",".join(row) + "\n")


def _open_for_write(path: Path, overwrite: bool) -> TextIO:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.exists() and not overwrite:
        raise FileExistsError(f"Output already exists: {path}")
    return path.open("w", encoding="utf-8", newline="\n")


def write_sweep_csv(out: TextIO, rows: Sequence[SweepRow]) -> None:
    _write_rows(
        out,
        SWEEP_HEADER,
        ((fmt(r.distance_um), fmt(r.eta_parallel), fmt(r.eta_orthogonal), fmt(r.eta_spherical)) for r in rows),
    )


def write_pattern_csv(out: TextIO, patterns: Sequence[AngularPattern], stride: int = 1) -> None:
    rows = []
    for pattern in patterns:
        for theta, density in zip(pattern.theta[::stride], pattern.density[::stride]):
            rows.append((fmt(theta), pattern.hemisphere.value, fmt(density)))
    _write_rows(out, PATTERN_HEADER, rows)


def write_histogram_csv(out: TextIO, histogram: G2Histogram) -> None:
    if histogram.g2 is None or histogram.g2_err is None:
        raise TableFormatError("histogram must be normalized before writing")
    _write_rows(
        out,
        HISTOGRAM_HEADER,
        (
            (str(int(tau)), str(int(count)), fmt(g2), fmt(err))
            for tau, count, g2, err in zip(histogram.tau_ps, histogram.counts, histogram.g2, histogram.g2_err)
        ),
    )


def write_spectrum_csv(out: TextIO, spectrum: SpectrumTrace) -> None:
    _write_rows(out, SPECTRUM_HEADER, ((fmt(w), fmt(c)) for w, c in zip(spectrum.wavelength_nm, spectrum.counts)))


def write_scan_csv(out: TextIO, frequency_mhz: np.ndarray, counts: np.ndarray) -> None:
    _write_rows(out, SCAN_HEADER, ((fmt(f), fmt(c)) for f, c in zip(frequency_mhz, counts)))


def save_table(path: Path, writer, *args, overwrite: bool = True) -> Path:
    """Run one of the ``write_*`` functions against a file."""
    with _open_for_write(path, overwrite) as fh:
        writer(fh, *args)
    return Path(path)


def read_columns(path: Path, required: Sequence[str] = ()) -> Dict[str, np.ndarray]:
    """Read a numeric CSV with a header row into named float columns."""
    path = Path(path)
    lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    if not lines:
        raise TableFormatError(f"{path}: empty file")
    header = [name.strip() for name in lines[0].split(",")]
    missing = [name for name in required if name not in header]
    if missing:
        raise TableFormatError(f"{path}: missing columns {', '.join(missing)}")
    if len(lines) == 1:
        return {name: np.zeros(0) for name in header}
    try:
        table = np.loadtxt(lines[1:], delimiter=",", dtype=float, ndmin=2)
    except ValueError as exc:
        raise TableFormatError(f"{path}: {exc}") from exc
    if table.shape[1] != len(header):
        raise TableFormatError(f"{path}: expected {len(header)} columns")
    return {name: table[:, i] for i, name in enumerate(header)}


def read_spectrum_csv(path: Path, label: str = "") -> SpectrumTrace:
    columns = read_columns(path, SPECTRUM_HEADER)
    return SpectrumTrace(columns["wavelength_nm"], columns["counts"], label=label or Path(path).stem)


def read_histogram_csv(path: Path) -> Dict[str, np.ndarray]:
    return read_columns(path, HISTOGRAM_HEADER)


def document(kind: str, payload: dict) -> dict:
    """Wrap a payload with the schema header."""
    return {"schema_version": SCHEMA_VERSION, "kind": kind, **payload}


def dump_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def write_json(path: Path, kind: str, payload: dict, *, overwrite: bool = True) -> Path:
    with _open_for_write(path, overwrite) as fh:
        fh.write(dump_json(document(kind, payload)))
    return Path(path)


def read_json(path: Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
