import math
import os
import unittest
from pathlib import Path

import numpy as np

from fiberphoton.errors import FitError
from fiberphoton.fitting.fitkit import (
    WEIGHT_GIVEN,
    WEIGHT_POISSON,
    WEIGHT_UNIFORM,
    auto_init,
    corrected_g2_zero,
    fit_curve,
    linewidth_vs_power,
    measured_g2_zero,
    mixed_g2_zero,
)
from fiberphoton.fitting.models import (
    LORENTZIAN,
    MODELS,
    NONNEGATIVE,
    POWER_BROADENING,
    RABI_G2,
    SATURATION,
    SATURATION_LINEAR_BACKGROUND,
    get_model,
    rabi_g2_model,
    to_internal,
    to_natural,
)
from fiberphoton.io.tables import read_columns

DATA = Path(__file__).resolve().parents[1] / "data"
SLOW = os.environ.get("FIBERPHOTON_SLOW_TESTS") == "1"

NOISELESS_COLUMNS = ["frequency_mhz", "counts"]
LINE = {"center": 12.5, "fwhm": 28.5, "amplitude": 1200.0, "offset": 150.0}


def lorentzian_counts(frequency: np.ndarray, fwhm: float, amplitude: float, offset: float) -> np.ndarray:
    params = LORENTZIAN.params_from_dict({"center": 0.0, "fwhm": fwhm, "amplitude": amplitude, "offset": offset})
    return LORENTZIAN.evaluate(frequency, params)


class NoiselessFitTests(unittest.TestCase):
    def test_lorentzian_golden_file(self) -> None:
        table = read_columns(DATA / "lorentzian_noiseless.csv", NOISELESS_COLUMNS)
        result = fit_curve("lorentzian", table["frequency_mhz"], table["counts"])
        self.assertTrue(result.converged)
        self.assertEqual(result.weighting, WEIGHT_POISSON)
        for name, expected in LINE.items():
            self.assertAlmostEqual(result.parameters[name] / expected, 1.0, places=6, msg=name)

    def test_cost_never_increases(self) -> None:
        table = read_columns(DATA / "lorentzian_noiseless.csv", NOISELESS_COLUMNS)
        history = fit_curve(LORENTZIAN, table["frequency_mhz"], table["counts"]).cost_history
        self.assertGreater(len(history), 1)
        self.assertTrue(all(later <= earlier for earlier, later in zip(history, history[1:])))

    def test_fixed_parameter_stays_put(self) -> None:
        table = read_columns(DATA / "lorentzian_noiseless.csv", NOISELESS_COLUMNS)
        result = fit_curve(LORENTZIAN, table["frequency_mhz"], table["counts"], fixed={"offset": 150.0})
        self.assertEqual(result.parameters["offset"], 150.0)
        self.assertEqual(result.errors["offset"], 0.0)
        self.assertAlmostEqual(result.parameters["fwhm"], 28.5, places=5)

    def test_rabi_g2_on_analytic_curve(self) -> None:
        tau_ns = np.linspace(-100.0, 100.0, 401)
        truth = np.array([42.0, 17.0, 0.8])
        result = fit_curve(RABI_G2, tau_ns, RABI_G2.evaluate(tau_ns, truth))
        self.assertTrue(result.converged)
        self.assertEqual(result.weighting, WEIGHT_UNIFORM)
        for name, expected in zip(RABI_G2.param_names, truth):
            self.assertAlmostEqual(result.parameters[name] / expected, 1.0, places=4, msg=name)
        mixed, _ = mixed_g2_zero(result)
        self.assertAlmostEqual(mixed, 0.36, places=4)
        measured = measured_g2_zero(tau_ns, RABI_G2.evaluate(tau_ns, truth))
        self.assertAlmostEqual(measured, 0.36, places=12)
        self.assertAlmostEqual(corrected_g2_zero(result, measured).value, 0.0, places=3)
        # A zero-delay dip deeper than the background allows corrects below zero.
        low = corrected_g2_zero(result, 0.2)
        self.assertTrue(low.below_zero)
        self.assertAlmostEqual(low.value, -0.25, places=3)

    def test_dephased_model_variant(self) -> None:
        model = rabi_g2_model(0.75)
        tau_ns = np.linspace(-80.0, 80.0, 321)
        truth = np.array([30.0, 20.0, 0.9])
        result = fit_curve(model, tau_ns, model.evaluate(tau_ns, truth))
        self.assertAlmostEqual(result.parameters["rabi_mhz"] / 30.0, 1.0, places=4)
        with self.assertRaises(FitError):
            rabi_g2_model(0.4)


class NoisyRefitTests(unittest.TestCase):
    def assert_within(self, result, truth: dict, n_sigma: float = 5.0) -> None:
        for name, expected in truth.items():
            error = result.errors[name]
            self.assertGreater(error, 0.0, msg=name)
            self.assertLess(abs(result.parameters[name] - expected), n_sigma * error, msg=name)

    def test_generated_data_recovers_parameters(self) -> None:
        rng = np.random.default_rng(20)
        frequency = np.linspace(-200.0, 200.0, 201)
        power = np.linspace(5.0, 600.0, 30)
        broadening_power = np.linspace(0.0, 480.0, 12)
        for trial in range(200 if SLOW else 5):
            with self.subTest(trial=trial):
                counts = rng.poisson(LORENTZIAN.evaluate(frequency, LORENTZIAN.params_from_dict(LINE)))
                self.assert_within(fit_curve(LORENTZIAN, frequency, counts), LINE)

                rate = rng.poisson(SATURATION.evaluate(power, np.array([5e4, 60.0])))
                self.assert_within(fit_curve(SATURATION, power, rate), {"r_inf": 5e4, "i_sat": 60.0})

                truth = np.array([5e4, 60.0, 20.0])
                rate = rng.poisson(SATURATION_LINEAR_BACKGROUND.evaluate(power, truth))
                result = fit_curve(SATURATION_LINEAR_BACKGROUND, power, rate)
                self.assert_within(result, dict(zip(SATURATION_LINEAR_BACKGROUND.param_names, truth)))

                widths = POWER_BROADENING.evaluate(broadening_power, np.array([28.5, 60.0]))
                sigma = np.full(widths.shape, 0.5)
                noisy = widths + rng.normal(0.0, 0.5, widths.shape)
                result = fit_curve(POWER_BROADENING, broadening_power, noisy, sigma)
                self.assertEqual(result.weighting, WEIGHT_GIVEN)
                self.assert_within(result, {"gamma0": 28.5, "i_sat": 60.0})

    def test_three_sigma_coverage(self) -> None:
        rng = np.random.default_rng(31)
        frequency = np.linspace(-200.0, 200.0, 201)
        expected = LORENTZIAN.evaluate(frequency, LORENTZIAN.params_from_dict(LINE))
        trials = 200 if SLOW else 40
        covered = dict.fromkeys(LINE, 0)
        for _ in range(trials):
            result = fit_curve(LORENTZIAN, frequency, rng.poisson(expected), np.sqrt(expected))
            for name, value in LINE.items():
                covered[name] += abs(result.parameters[name] - value) < 3.0 * result.errors[name]
        for name, hits in covered.items():
            self.assertGreaterEqual(hits, 0.95 * trials, msg=name)

    def test_rabi_g2_from_noisy_histogram(self) -> None:
        rng = np.random.default_rng(8)
        tau_ns = np.linspace(-100.0, 100.0, 401)
        truth = dict(zip(RABI_G2.param_names, (42.0, 17.0, 0.8)))
        clean = RABI_G2.evaluate(tau_ns, RABI_G2.params_from_dict(truth))
        noisy = clean + rng.normal(0.0, 0.03, tau_ns.shape)
        start = {"rabi_mhz": 38.0, "gamma_par_mhz": 19.0, "rho": 0.75}
        result = fit_curve(RABI_G2, tau_ns, noisy, np.full(tau_ns.shape, 0.03), start)
        self.assertEqual(result.weighting, WEIGHT_GIVEN)
        self.assert_within(result, truth)

    def test_refit_from_the_solution_stays_put(self) -> None:
        rng = np.random.default_rng(12)
        frequency = np.linspace(-200.0, 200.0, 201)
        counts = rng.poisson(LORENTZIAN.evaluate(frequency, LORENTZIAN.params_from_dict(LINE)))
        first = fit_curve(LORENTZIAN, frequency, counts)
        second = fit_curve(LORENTZIAN, frequency, counts, init=first.parameters)
        for name, value in first.parameters.items():
            self.assertLess(abs(second.parameters[name] - value), 1e-10 * max(abs(value), 1.0), msg=name)

    def test_errors_shrink_as_inverse_root_of_points(self) -> None:
        rng = np.random.default_rng(13)
        scaled = []
        for n_points in (100, 400, 1600):
            frequency = np.linspace(-200.0, 200.0, n_points)
            expected = LORENTZIAN.evaluate(frequency, LORENTZIAN.params_from_dict(LINE))
            result = fit_curve(LORENTZIAN, frequency, rng.poisson(expected), np.sqrt(expected))
            # divide out the reduced chi-square of this draw
            scaled.append(result.errors["fwhm"] / math.sqrt(result.rss / (n_points - 4)))
        self.assertAlmostEqual(scaled[0] / scaled[1], 2.0, delta=0.1)
        self.assertAlmostEqual(scaled[0] / scaled[2], 4.0, delta=0.2)


class JacobianTests(unittest.TestCase):
    CASES = (
        (LORENTZIAN, np.linspace(-100.0, 100.0, 41), (12.5, 28.5, 1200.0, 150.0)),
        (SATURATION, np.linspace(0.0, 600.0, 31), (5e4, 60.0)),
        (SATURATION_LINEAR_BACKGROUND, np.linspace(0.0, 600.0, 31), (5e4, 60.0, 20.0)),
        (POWER_BROADENING, np.linspace(0.0, 480.0, 25), (28.5, 60.0)),
    )

    def test_analytic_matches_central_differences(self) -> None:
        for model, x, values in self.CASES:
            params = np.array(values)
            analytic = model.jacobian(x, params)
            numeric = np.empty_like(analytic)
            for i in range(params.size):
                step = 1e-6 * abs(params[i])
                up = params.copy()
                down = params.copy()
                up[i] += step
                down[i] -= step
                numeric[:, i] = (model.evaluate(x, up) - model.evaluate(x, down)) / (2.0 * step)
            with self.subTest(model=model.name):
                np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-6 * float(np.abs(analytic).max()))

    def test_nonnegative_transform_clamps_at_zero(self) -> None:
        self.assertEqual(to_internal(np.array([-3.0]), (NONNEGATIVE,))[0], 0.0)
        values, slopes = to_natural(np.array([-0.5]), (NONNEGATIVE,))
        self.assertEqual(values[0], 0.0)
        self.assertEqual(slopes[0], 1.0)

    def test_linear_background_slope_stays_nonnegative(self) -> None:
        power = np.linspace(5.0, 600.0, 30)
        falling = SATURATION.evaluate(power, np.array([5e4, 60.0])) - 10.0 * power
        result = fit_curve(SATURATION_LINEAR_BACKGROUND, power, falling)
        self.assertGreaterEqual(result.parameters["slope"], 0.0)
        self.assertLess(result.parameters["slope"], 1e-3)


class FitValidationTests(unittest.TestCase):
    def test_too_few_points(self) -> None:
        with self.assertRaises(FitError):
            fit_curve(LORENTZIAN, np.arange(7.0), np.ones(7))

    def test_degenerate_x(self) -> None:
        with self.assertRaises(FitError):
            fit_curve(SATURATION, np.ones(10), np.arange(10.0))

    def test_bad_sigma_and_names(self) -> None:
        x = np.linspace(1.0, 100.0, 10)
        y = 10.0 * x / (20.0 + x)
        with self.assertRaises(FitError):
            fit_curve(SATURATION, x, y, sigma=np.zeros(10))
        with self.assertRaises(FitError):
            fit_curve(SATURATION, x, y, init={"gamma": 1.0})
        with self.assertRaises(FitError):
            fit_curve(SATURATION, x, y, fixed={"r_inf": 10.0, "i_sat": 20.0})

    def test_flat_data_uses_fallback_start(self) -> None:
        x = np.linspace(-50.0, 50.0, 41)
        y = np.full(41, 5.0)
        _, diagnostics = auto_init(LORENTZIAN, x, y)
        self.assertTrue(any("flat data" in message for message in diagnostics))
        with self.assertLogs("fiberphoton.fitting", level="WARNING"):
            result = fit_curve(LORENTZIAN, x, y, max_iter=50)
        self.assertTrue(any("flat data" in message for message in result.diagnostics))

    def test_registry(self) -> None:
        self.assertEqual(
            sorted(MODELS), ["lorentzian", "power_broadening", "rabi_g2", "saturation", "saturation_linear_background"]
        )
        self.assertIs(get_model("lorentzian"), LORENTZIAN)
        with self.assertRaises(FitError):
            get_model("gaussian")

    def test_measured_g2_zero_averages_flanking_bins(self) -> None:
        self.assertAlmostEqual(measured_g2_zero([-0.75, -0.25, 0.25, 0.75], [1.0, 0.3, 0.5, 1.0]), 0.4)
        self.assertEqual(measured_g2_zero([-1.0, 0.0, 1.0], [0.9, 0.1, 0.8]), 0.1)
        with self.assertRaises(FitError):
            measured_g2_zero([], [])

    def test_g2_helpers_need_rabi_fit(self) -> None:
        table = read_columns(DATA / "lorentzian_noiseless.csv", NOISELESS_COLUMNS)
        result = fit_curve(LORENTZIAN, table["frequency_mhz"], table["counts"])
        with self.assertRaises(FitError):
            mixed_g2_zero(result)
        with self.assertRaises(FitError):
            corrected_g2_zero(result, 0.3)


class LinewidthSeriesTests(unittest.TestCase):
    def test_power_broadening_from_scans(self) -> None:
        rng = np.random.default_rng(5)
        frequency = np.linspace(-400.0, 400.0, 401)
        scans = []
        for power in (0.0, 10.0, 30.0, 60.0, 120.0, 240.0, 480.0):
            fwhm = 28.5 * np.sqrt(1.0 + power / 60.0)
            scans.append((power, frequency, rng.poisson(lorentzian_counts(frequency, fwhm, 1000.0, 50.0))))
        series = linewidth_vs_power(scans)
        self.assertTrue(all(row.ok for row in series.rows))
        self.assertIsNotNone(series.fit)
        self.assertAlmostEqual(series.gamma0 / 28.5, 1.0, delta=0.05)
        self.assertAlmostEqual(series.fit.parameters["i_sat"] / 60.0, 1.0, delta=0.25)

        held = linewidth_vs_power(scans, fixed_i_sat=60.0)
        self.assertEqual(held.fit.parameters["i_sat"], 60.0)

    def test_fixed_saturation_power_needs_fewer_scans(self) -> None:
        rng = np.random.default_rng(6)
        frequency = np.linspace(-400.0, 400.0, 401)
        scans = []
        for power in (0.0, 60.0, 240.0):
            fwhm = 28.5 * np.sqrt(1.0 + power / 60.0)
            scans.append((power, frequency, rng.poisson(lorentzian_counts(frequency, fwhm, 1000.0, 50.0))))
        self.assertIsNone(linewidth_vs_power(scans).fit)
        held = linewidth_vs_power(scans, fixed_i_sat=60.0)
        self.assertIsNotNone(held.fit)
        self.assertFalse(held.diagnostics)
        self.assertAlmostEqual(held.gamma0 / 28.5, 1.0, delta=0.05)

    def test_needs_three_powers(self) -> None:
        frequency = np.linspace(-100.0, 100.0, 101)
        scan = (1.0, frequency, lorentzian_counts(frequency, 20.0, 100.0, 5.0))
        with self.assertRaises(FitError):
            linewidth_vs_power([scan, scan])

    def test_broadening_fit_skipped_without_enough_good_scans(self) -> None:
        frequency = np.linspace(-100.0, 100.0, 101)
        good = (1.0, frequency, lorentzian_counts(frequency, 20.0, 100.0, 5.0))
        short = (2.0, frequency[:5], np.ones(5))
        series = linewidth_vs_power([good, short, short])
        self.assertIsNone(series.fit)
        self.assertIsNone(series.gamma0)
        self.assertFalse(series.rows[1].ok)
        self.assertTrue(series.diagnostics)


if __name__ == "__main__":  # pragma: no cover
    unittest.main()
