import math
import os
import unittest
from pathlib import Path

import numpy as np

from fiberphoton.errors import SpectraError
from fiberphoton.io.tables import read_spectrum_csv
from fiberphoton.spectra.filters import (
    OBJECTIVE_SB,
    OBJECTIVE_SNR,
    FilterWindow,
    SpectrumTrace,
    in_band_fraction,
    optimize_window,
    raman_reduction_factor,
    window_snr,
)
from fiberphoton.spectra.synth import (
    count_lines,
    dbatt_like_spectrum,
    fiber_background_spectrum,
    synth_excitation_scan,
)

DATA = Path(__file__).resolve().parents[1] / "data"
EMISSION_TRACE = os.environ.get("FIBERPHOTON_EMISSION_TRACE")


def flat(lo: float, hi: float, step: float = 1.0, level: float = 1.0) -> SpectrumTrace:
    grid = np.arange(lo, hi + 0.5 * step, step)
    return SpectrumTrace(grid, np.full(grid.size, level))


def triangle() -> SpectrumTrace:
    grid = np.arange(0.0, 11.0)
    return SpectrumTrace(grid, np.maximum(0.0, 1.0 - np.abs(grid - 5.0) / 2.0))


class InBandFractionTests(unittest.TestCase):
    def test_uniform_spectrum(self) -> None:
        spectrum = read_spectrum_csv(DATA / "uniform_spectrum.csv")
        self.assertAlmostEqual(float(in_band_fraction(spectrum, FilterWindow(626.0, 678.0))), 0.52, places=12)

    def test_window_inclusion_is_monotone(self) -> None:
        spectrum = dbatt_like_spectrum(np.linspace(580.0, 800.0, 2201))
        inner = FilterWindow(600.0, 650.0)
        outer = FilterWindow(590.0, 700.0)
        self.assertTrue(outer.contains(inner))
        self.assertLessEqual(in_band_fraction(spectrum, inner).fraction, in_band_fraction(spectrum, outer).fraction)
        self.assertAlmostEqual(in_band_fraction(spectrum, FilterWindow(500.0, 900.0)).fraction, 1.0, places=12)

    def test_adjacent_windows_add_up(self) -> None:
        spectrum = read_spectrum_csv(DATA / "dbatt_like_spectrum.csv")
        left = in_band_fraction(spectrum, FilterWindow(600.0, 633.3)).fraction
        right = in_band_fraction(spectrum, FilterWindow(633.3, 700.0)).fraction
        both = in_band_fraction(spectrum, FilterWindow(600.0, 700.0)).fraction
        self.assertAlmostEqual(left + right, both, places=12)

    def test_empty_overlap(self) -> None:
        with self.assertLogs("fiberphoton.spectra", level="WARNING"):
            result = in_band_fraction(flat(600.0, 700.0), FilterWindow(800.0, 900.0))
        self.assertEqual(result.fraction, 0.0)
        self.assertTrue(result.empty_overlap)

    def test_validation(self) -> None:
        with self.assertRaises(SpectraError):
            FilterWindow(678.0, 626.0)
        with self.assertRaises(SpectraError):
            SpectrumTrace(np.array([1.0, 1.0]), np.array([1.0, 2.0]))
        with self.assertRaises(SpectraError):
            SpectrumTrace(np.array([1.0, 2.0]), np.array([1.0, -2.0]))


class WindowSearchTests(unittest.TestCase):
    def test_ties_go_to_the_widest_window(self) -> None:
        choice = optimize_window(triangle(), flat(0.0, 10.0), OBJECTIVE_SB, 1.0)
        self.assertEqual(choice.window, FilterWindow(4.0, 6.0))
        self.assertAlmostEqual(choice.score, 0.75, places=12)

    def test_flat_ratio_picks_full_range(self) -> None:
        choice = optimize_window(flat(0.0, 10.0), flat(0.0, 10.0, level=2.0), OBJECTIVE_SB, 1.0, bounds=(2.0, 8.0))
        self.assertEqual(choice.window, FilterWindow(2.0, 8.0))
        self.assertAlmostEqual(choice.snr.ratio, 0.5, places=12)

    def test_snr_without_background(self) -> None:
        signal = flat(0.0, 10.0)
        dark = flat(0.0, 10.0, level=0.0)
        choice = optimize_window(signal, dark, OBJECTIVE_SNR, 1.0)
        self.assertEqual(choice.window, FilterWindow(0.0, 10.0))
        self.assertAlmostEqual(choice.score, math.sqrt(10.0), places=12)
        self.assertTrue(choice.snr.zero_background)
        self.assertTrue(math.isfinite(choice.snr.ratio))

    def test_mismatched_grids_are_resampled(self) -> None:
        snr = window_snr(flat(0.0, 10.0, step=0.5), flat(2.0, 12.0), FilterWindow(3.0, 7.0))
        self.assertAlmostEqual(snr.signal, 4.0, places=12)
        self.assertAlmostEqual(snr.background, 4.0, places=12)
        with self.assertRaises(SpectraError):
            window_snr(flat(0.0, 10.0), flat(20.0, 30.0), FilterWindow(3.0, 7.0))

    def test_default_background_prefers_the_zpl_region(self) -> None:
        grid = np.linspace(580.0, 800.0, 441)
        choice = optimize_window(dbatt_like_spectrum(grid), fiber_background_spectrum(grid), OBJECTIVE_SNR, 2.0)
        self.assertGreater(choice.score, 0.0)
        self.assertLess(choice.window.cut_on, choice.window.cut_off)

    def test_rejects_bad_arguments(self) -> None:
        with self.assertRaises(SpectraError):
            optimize_window(triangle(), flat(0.0, 10.0), "contrast")
        with self.assertRaises(SpectraError):
            optimize_window(triangle(), flat(0.0, 10.0), step_nm=0.0)
        with self.assertRaises(SpectraError):
            optimize_window(triangle(), flat(0.0, 10.0), step_nm=20.0)


class RamanTests(unittest.TestCase):
    def test_reduction_factor(self) -> None:
        self.assertAlmostEqual(raman_reduction_factor(589.0, 780.0), 3.07, delta=0.01)
        self.assertEqual(raman_reduction_factor(589.0, 589.0), 1.0)
        with self.assertRaises(SpectraError):
            raman_reduction_factor(0.0, 780.0)


class SynthScanTests(unittest.TestCase):
    def test_aligned_molecules_on_the_facet(self) -> None:
        scan = synth_excitation_scan(
            5,
            -2000.0,
            2000.0,
            power_nw=10.0,
            background_cps=100.0,
            seed=3,
            max_distance_um=0.0,
            random_orientation=False,
            noise=False,
            min_separation_fwhm=5.0,
        )
        self.assertEqual(len(scan.molecules), 5)
        self.assertEqual(count_lines(scan.counts), 5)
        amplitudes = {round(line.amplitude_cps, 6) for line in scan.molecules}
        self.assertEqual(len(amplitudes), 1)
        self.assertGreaterEqual(float(scan.counts.min()), 100.0)

    def test_seeded_and_noisy(self) -> None:
        first = synth_excitation_scan(4, -1000.0, 1000.0, 30.0, 500.0, seed=9)
        second = synth_excitation_scan(4, -1000.0, 1000.0, 30.0, 500.0, seed=9)
        np.testing.assert_array_equal(first.counts, second.counts)
        self.assertTrue(np.all(first.counts == np.round(first.counts)))

    def test_no_molecules_is_background(self) -> None:
        scan = synth_excitation_scan(0, 0.0, 100.0, 10.0, 250.0, seed=1, noise=False, n_points=11)
        np.testing.assert_array_equal(scan.counts, np.full(11, 250.0))
        self.assertEqual(count_lines(scan.counts), 0)

    def test_impossible_spacing(self) -> None:
        with self.assertRaises(SpectraError):
            synth_excitation_scan(10, 0.0, 100.0, 10.0, 0.0, seed=1, min_separation_fwhm=10.0)
        with self.assertRaises(SpectraError):
            synth_excitation_scan(-1, 0.0, 100.0, 10.0, 0.0, seed=1)


class BundledSpectrumTests(unittest.TestCase):
    def test_bundled_copy_matches_generator(self) -> None:
        bundled = read_spectrum_csv(DATA / "dbatt_like_spectrum.csv")
        generated = dbatt_like_spectrum(bundled.wavelength_nm)
        np.testing.assert_allclose(bundled.counts, generated.counts, rtol=1e-8, atol=1e-12)
        self.assertEqual(int(np.argmax(bundled.counts)), int(np.searchsorted(bundled.wavelength_nm, 589.0)))


@unittest.skipUnless(EMISSION_TRACE, "set FIBERPHOTON_EMISSION_TRACE to a digitized wavelength_nm,counts emission trace")
class DigitizedTraceTests(unittest.TestCase):
    def test_in_band_fraction_of_digitized_trace(self) -> None:
        spectrum = read_spectrum_csv(Path(EMISSION_TRACE))
        self.assertAlmostEqual(in_band_fraction(spectrum, FilterWindow(626.0, 678.0)).fraction, 0.30, delta=0.05)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
