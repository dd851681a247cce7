"""Spectral bookkeeping under ideal step filters.

Spectra are treated as piecewise-linear in wavelength between grid points,
so every band integral is exact for that interpolant and integrals over
adjacent windows add up.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from fiberphoton.errors import SpectraError

logger = logging.getLogger(__name__)

OBJECTIVE_SB = "sb"
OBJECTIVE_SNR = "snr"
_MAX_CANDIDATES = 20_000_000
_TIE_RTOL = 1e-12


@dataclass(frozen=True, eq=False)
class SpectrumTrace:
    """Counts sampled on a strictly increasing wavelength grid.

    Attributes:
        wavelength_nm: Grid in nanometers.
        counts: Non-negative counts per grid point.
        label: Free text used in reports.
        unit: Unit of the grid; traces with different units do not mix.
    """

    wavelength_nm: np.ndarray
    counts: np.ndarray
    label: str = ""
    unit: str = "nm"

    def __post_init__(self) -> None:
        grid = np.asarray(self.wavelength_nm, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if grid.ndim != 1 or grid.shape != counts.shape or grid.size < 2:
            raise SpectraError("a spectrum needs matching 1-D grid and counts with at least 2 points")
        if not np.all(np.isfinite(grid)) or np.any(np.diff(grid) <= 0):
            raise SpectraError("wavelength grid must be finite and strictly increasing")
        if not np.all(np.isfinite(counts)) or np.any(counts < 0):
            raise SpectraError("counts must be finite and non-negative")
        object.__setattr__(self, "wavelength_nm", grid)
        object.__setattr__(self, "counts", counts)

    @property
    def bounds(self) -> tuple[float, float]:
        return float(self.wavelength_nm[0]), float(self.wavelength_nm[-1])

    def cumulative(self, points: np.ndarray) -> np.ndarray:
        """Integral from the first grid point to each of ``points`` (clipped to the grid)."""
        grid, counts = self.wavelength_nm, self.counts
        nodes = cumulative_trapezoid(counts, grid, initial=0.0)
        t = np.clip(np.asarray(points, dtype=float), grid[0], grid[-1])
        idx = np.clip(np.searchsorted(grid, t, side="right") - 1, 0, grid.size - 2)
        left = grid[idx]
        value_left = counts[idx]
        slope = (counts[idx + 1] - value_left) / (grid[idx + 1] - left)
        value_t = value_left + slope * (t - left)
        return nodes[idx] + 0.5 * (value_left + value_t) * (t - left)

    def integral(self, start: float = -math.inf, stop: float = math.inf) -> float:
        a, b = self.cumulative(np.array([start, stop]))
        return float(b - a)

    def resample(self, grid: np.ndarray) -> "SpectrumTrace":
        """Linear interpolation onto ``grid`` (zero outside the original range)."""
        counts = np.interp(grid, self.wavelength_nm, self.counts, left=0.0, right=0.0)
        return SpectrumTrace(grid, counts, self.label, self.unit)


@dataclass(frozen=True)
class FilterWindow:
    """Ideal pass band ``[cut_on, cut_off]`` in nanometers."""

    cut_on: float
    cut_off: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.cut_on) and math.isfinite(self.cut_off)) or not self.cut_on < self.cut_off:
            raise SpectraError(f"filter window needs cut_on < cut_off, got [{self.cut_on}, {self.cut_off}]")

    @property
    def width(self) -> float:
        return self.cut_off - self.cut_on

    def contains(self, other: "FilterWindow") -> bool:
        return self.cut_on <= other.cut_on and other.cut_off <= self.cut_off


@dataclass(frozen=True)
class BandFraction:
    fraction: float
    empty_overlap: bool = False

    def __float__(self) -> float:
        return self.fraction


@dataclass(frozen=True)
class WindowSNR:
    """Band-integrated signal and background under one window."""

    signal: float
    background: float
    ratio: float
    zero_background: bool = False


@dataclass(frozen=True)
class WindowChoice:
    window: FilterWindow
    score: float
    objective: str
    snr: WindowSNR


def in_band_fraction(spectrum: SpectrumTrace, window: FilterWindow) -> BandFraction:
    """Share of the integrated counts passing an ideal window."""
    lo, hi = spectrum.bounds
    total = spectrum.integral()
    if window.cut_off <= lo or window.cut_on >= hi or total <= 0:
        logger.warning("window [%g, %g] nm has no overlap with %s", window.cut_on, window.cut_off, spectrum.label or "spectrum")
        return BandFraction(0.0, empty_overlap=True)
    inside = spectrum.integral(window.cut_on, window.cut_off)
    return BandFraction(min(max(inside / total, 0.0), 1.0))


def _common_grid(signal: SpectrumTrace, background: SpectrumTrace) -> tuple[SpectrumTrace, SpectrumTrace]:
    if signal.unit != background.unit:
        raise SpectraError(f"incompatible units: {signal.unit!r} vs {background.unit!r}")
    if np.array_equal(signal.wavelength_nm, background.wavelength_nm):
        return signal, background
    lo = max(signal.bounds[0], background.bounds[0])
    hi = min(signal.bounds[1], background.bounds[1])
    if not lo < hi:
        raise SpectraError("signal and background grids do not overlap")
    step = min(float(np.min(np.diff(signal.wavelength_nm))), float(np.min(np.diff(background.wavelength_nm))))
    n_points = int(math.floor((hi - lo) / step + 1e-9)) + 1
    grid = lo + step * np.arange(n_points)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    return signal.resample(grid), background.resample(grid)


def _ratio(signal: float, background: float) -> tuple[float, bool]:
    if background <= 0:
        return signal / np.finfo(float).eps, True
    return signal / background, False


def window_snr(signal: SpectrumTrace, background: SpectrumTrace, window: FilterWindow) -> WindowSNR:
    """Integrate signal and background under ``window`` on a common grid."""
    signal, background = _common_grid(signal, background)
    s = signal.integral(window.cut_on, window.cut_off)
    b = background.integral(window.cut_on, window.cut_off)
    ratio, zero = _ratio(s, b)
    if zero:
        logger.warning("background integrates to zero inside [%g, %g] nm", window.cut_on, window.cut_off)
    return WindowSNR(signal=s, background=b, ratio=ratio, zero_background=zero)


def _score(s: np.ndarray, b: np.ndarray, objective: str) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        if objective == OBJECTIVE_SB:
            return s / np.maximum(b, np.finfo(float).eps)
        total = s + b
        return np.where(total > 0, s / np.sqrt(np.where(total > 0, total, 1.0)), 0.0)


def optimize_window(
    signal: SpectrumTrace,
    background: SpectrumTrace,
    objective: str = OBJECTIVE_SB,
    step_nm: float = 1.0,
    *,
    bounds: Optional[tuple[float, float]] = None,
) -> WindowChoice:
    """Exhaustive search over grid-aligned windows.

    Args:
        signal: Wanted emission.
        background: Unwanted light.
        objective: "sb" for S/B or "snr" for S/sqrt(S+B).
        step_nm: Spacing of candidate edges.
        bounds: Optional search range; defaults to the grid overlap.

    Returns:
        The best window; ties (within 1e-12 relative) go to the widest
        window, then to the smallest cut-on.
    """
    if objective not in {OBJECTIVE_SB, OBJECTIVE_SNR}:
        raise SpectraError(f"unknown objective {objective!r}")
    if not step_nm > 0:
        raise SpectraError("step must be > 0")
    signal, background = _common_grid(signal, background)
    lo, hi = bounds if bounds is not None else signal.bounds
    lo = max(lo, signal.bounds[0])
    hi = min(hi, signal.bounds[1])
    n_edges = int(math.floor((hi - lo) / step_nm + 1e-9)) + 1
    if n_edges < 2:
        raise SpectraError("search range holds fewer than two candidate edges")
    if n_edges * (n_edges - 1) // 2 > _MAX_CANDIDATES:
        raise SpectraError("too many candidate windows; increase the step")
    edges = lo + step_nm * np.arange(n_edges)
    cum_s = signal.cumulative(edges)
    cum_b = background.cumulative(edges)
    i, j = np.triu_indices(n_edges, k=1)
    scores = _score(cum_s[j] - cum_s[i], cum_b[j] - cum_b[i], objective)
    best = float(np.max(scores))
    tied = np.flatnonzero(scores >= best - _TIE_RTOL * abs(best))
    widths = j[tied] - i[tied]
    widest = tied[widths == widths.max()]
    pick = int(widest[np.argmin(i[widest])])
    window = FilterWindow(float(edges[i[pick]]), float(edges[j[pick]]))
    logger.info("best %s window [%g, %g] nm, score %.4g", objective, window.cut_on, window.cut_off, best)
    return WindowChoice(window=window, score=float(scores[pick]), objective=objective, snr=window_snr(signal, background, window))


def raman_reduction_factor(lambda_from: float, lambda_to: float) -> float:
    """Factor by which a lambda^-4 background drops from ``lambda_from`` to ``lambda_to``."""
    if not lambda_from > 0 or not lambda_to > 0:
        raise SpectraError("wavelengths must be > 0")
    return (lambda_to / lambda_from) ** 4
