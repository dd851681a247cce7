"""Synthetic spectra: excitation scans of several molecules and illustrative emission traces."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.signal import find_peaks

from fiberphoton.config import (
    SETUP_CORE_RADIUS_UM,
    SETUP_GAMMA0_MHZ,
    SETUP_I_SAT_NW,
    SETUP_N_LOWER,
    SETUP_N_UPPER,
    SETUP_NA,
    SETUP_R_INF_CPS,
    SETUP_WAVELENGTH_NM,
)
from fiberphoton.errors import SpectraError
from fiberphoton.optics.interface import (
    DipoleEmitter,
    DipoleOrientation,
    FiberSpec,
    OpticalInterface,
    collection_efficiency,
)
from fiberphoton.photophysics.emitter import (
    SaturationModel,
    broadened_linewidth,
    lorentzian_line,
    saturation_rate,
)
from fiberphoton.spectra.filters import SpectrumTrace

logger = logging.getLogger(__name__)

VIBRONIC_SHIFT_CM = 241.0
_MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class MoleculeLine:
    """One molecule in a synthetic scan."""

    center_mhz: float
    fwhm_mhz: float
    amplitude_cps: float
    distance_um: float
    tilt_rad: float


@dataclass(frozen=True, eq=False)
class ExcitationScan:
    frequency_mhz: np.ndarray
    counts: np.ndarray
    molecules: Tuple[MoleculeLine, ...]


def _place_centers(
    rng: np.random.Generator, n: int, f_min: float, f_max: float, min_gap: float
) -> np.ndarray:
    if min_gap <= 0 or n < 2:
        return np.sort(rng.uniform(f_min, f_max, n))
    for _ in range(_MAX_PLACEMENT_ATTEMPTS):
        centers = np.sort(rng.uniform(f_min, f_max, n))
        if np.min(np.diff(centers)) >= min_gap:
            return centers
    raise SpectraError(f"cannot place {n} lines {min_gap:g} MHz apart in [{f_min:g}, {f_max:g}] MHz")


def synth_excitation_scan(
    n_molecules: int,
    f_min_mhz: float,
    f_max_mhz: float,
    power_nw: float,
    background_cps: float,
    seed: int,
    *,
    n_points: int = 2001,
    max_distance_um: float = 3.0,
    random_orientation: bool = True,
    noise: bool = True,
    min_separation_fwhm: float = 0.0,
    saturation: Optional[SaturationModel] = None,
    interface: Optional[OpticalInterface] = None,
    fiber: Optional[FiberSpec] = None,
    wavelength_nm: float = SETUP_WAVELENGTH_NM,
) -> ExcitationScan:
    """Excitation spectrum of molecules coupled through the fiber.

    Every molecule contributes a power-broadened Lorentzian whose peak is the
    saturated rate at ``power_nw`` scaled by its collection efficiency
    relative to a parallel dipole on the facet. Distances are uniform in
    ``[0, max_distance_um]``; orientations are isotropic when
    ``random_orientation`` is set, parallel otherwise.

    Args:
        n_molecules: Number of lines, >= 0.
        f_min_mhz: Lower end of the scan (MHz detuning).
        f_max_mhz: Upper end of the scan.
        power_nw: Excitation power (nW).
        background_cps: Constant background rate.
        seed: Seed of the numpy generator.
        n_points: Scan samples.
        max_distance_um: Largest molecule-facet distance.
        random_orientation: Draw tilt angles isotropically.
        noise: Apply Poisson noise to the summed rate.
        min_separation_fwhm: Minimum spacing of line centers in linewidths.
    """
    if n_molecules < 0:
        raise SpectraError("n_molecules must be >= 0")
    if not f_min_mhz < f_max_mhz or n_points < 2:
        raise SpectraError("scan range must be increasing with at least 2 points")
    if power_nw < 0 or background_cps < 0 or max_distance_um < 0:
        raise SpectraError("power, background and distance must be >= 0")
    saturation = saturation or SaturationModel(SETUP_R_INF_CPS, SETUP_I_SAT_NW, SETUP_GAMMA0_MHZ)
    interface = interface or OpticalInterface(SETUP_N_UPPER, SETUP_N_LOWER)
    fiber = fiber or FiberSpec(SETUP_NA, SETUP_CORE_RADIUS_UM, SETUP_N_LOWER)

    rng = np.random.default_rng(seed)
    frequency = np.linspace(f_min_mhz, f_max_mhz, n_points)
    fwhm = float(broadened_linewidth(power_nw / saturation.i_sat, saturation.gamma0))
    peak_rate = float(saturation_rate(power_nw, saturation))
    reference = collection_efficiency(DipoleEmitter(DipoleOrientation.PARALLEL, 0.0, wavelength_nm), interface, fiber)

    centers = _place_centers(rng, n_molecules, f_min_mhz, f_max_mhz, min_separation_fwhm * fwhm)
    distances = rng.uniform(0.0, max_distance_um, n_molecules)
    if random_orientation:
        tilts = np.arccos(rng.uniform(0.0, 1.0, n_molecules))
    else:
        tilts = np.full(n_molecules, math.pi / 2)

    rate = np.full(n_points, float(background_cps))
    molecules = []
    for center, distance, tilt in zip(centers, distances, tilts):
        dipole = DipoleEmitter.tilted(float(tilt), float(distance), wavelength_nm)
        amplitude = peak_rate * collection_efficiency(dipole, interface, fiber) / reference
        rate += lorentzian_line(frequency, float(center), fwhm, amplitude)
        molecules.append(MoleculeLine(float(center), fwhm, amplitude, float(distance), float(tilt)))
    counts = rng.poisson(rate).astype(float) if noise else rate
    logger.info("synthesized %d lines of %.1f MHz width over %d points", n_molecules, fwhm, n_points)
    return ExcitationScan(frequency_mhz=frequency, counts=counts, molecules=tuple(molecules))


def count_lines(counts: np.ndarray, prominence: Optional[float] = None) -> int:
    """Number of peaks in an excitation scan.

    The default prominence is five times the Poisson noise of the median
    level.
    """
    counts = np.asarray(counts, dtype=float)
    if prominence is None:
        prominence = 5.0 * math.sqrt(max(float(np.median(counts)), 1.0))
    peaks, _ = find_peaks(counts, prominence=prominence)
    return int(peaks.size)


def _gaussian(x: np.ndarray, center: float, sigma: float) -> np.ndarray:
    return np.exp(-0.5 * ((x - center) / sigma) ** 2)


def _shifted_nm(zpl_nm: float, shift_cm: float) -> float:
    return 1e7 / (1e7 / zpl_nm - shift_cm)


def dbatt_like_spectrum(grid_nm: np.ndarray, zpl_nm: float = SETUP_WAVELENGTH_NM) -> SpectrumTrace:
    """Illustrative emission spectrum: narrow ZPL, 241 cm^-1 band, broad red sidebands.

    Shapes and weights are made up to resemble a polyaromatic dye in an
    alkane host; only the line positions carry meaning.
    """
    grid = np.asarray(grid_nm, dtype=float)
    wavenumber_shift = 1e7 / zpl_nm - 1e7 / grid
    counts = (
        1.0 * _gaussian(grid, zpl_nm, 0.3)
        + 0.35 * _gaussian(grid, _shifted_nm(zpl_nm, VIBRONIC_SHIFT_CM), 0.6)
        + 0.25 * _gaussian(wavenumber_shift, 750.0, 120.0)
        + 0.45 * _gaussian(wavenumber_shift, 1350.0, 220.0)
        + 0.35 * _gaussian(wavenumber_shift, 1650.0, 260.0)
        + 0.20 * _gaussian(wavenumber_shift, 2900.0, 450.0)
    )
    return SpectrumTrace(grid, counts, label="dbatt-like emission")


def fiber_background_spectrum(grid_nm: np.ndarray, laser_nm: float = SETUP_WAVELENGTH_NM) -> SpectrumTrace:
    """Illustrative fiber background: Raman band close to the laser plus a red fluorescence tail."""
    grid = np.asarray(grid_nm, dtype=float)
    shift = 1e7 / laser_nm - 1e7 / grid
    raman = np.where(shift > 0, np.exp(-np.clip(shift, 0.0, None) / 450.0), 0.0)
    tail = 0.4 / (1.0 + np.exp(-(grid - 700.0) / 6.0))
    return SpectrumTrace(grid, raman + tail, label="fiber background")
