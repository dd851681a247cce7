"""Command-line front end: optics tables, simulation, correlation, fits and spectra.

Artifacts go to ``--out`` or stdout; diagnostics go to stderr. Exit codes are
0 on success, 1 on runtime or numeric failures and 2 on usage errors
(including invalid configuration documents).
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Dict, List, Optional, Sequence, TextIO

import numpy as np

from fiberphoton import __version__
from fiberphoton.config import (
    SETUP_CORE_RADIUS_UM,
    SETUP_LONG_PASS_NM,
    SETUP_N_LOWER,
    SETUP_N_UPPER,
    SETUP_NA,
    SETUP_RHO,
    SETUP_SHORT_PASS_NM,
    SETUP_WAVELENGTH_NM,
    DriveField,
    SimConfig,
    TwoLevelEmitter,
    angular_to_mhz,
    max_stable_dt,
    mhz_to_angular,
)
from fiberphoton.correlation.correlator import G2Histogram, correlate_channels, correlate_chunks, correlate_sources
from fiberphoton.errors import ConfigError, FiberPhotonError
from fiberphoton.fitting.fitkit import (
    FitResult,
    corrected_g2_zero,
    fit_curve,
    linewidth_vs_power,
    measured_g2_zero,
    mixed_g2_zero,
)
from fiberphoton.fitting.models import MODELS, SATURATION_LINEAR_BACKGROUND, FitModel, get_model, rabi_g2_model
from fiberphoton.io.tables import (
    dump_json,
    document,
    read_columns,
    read_spectrum_csv,
    read_json,
    save_table,
    write_histogram_csv,
    write_json,
    write_pattern_csv,
    write_scan_csv,
    write_sweep_csv,
)
from fiberphoton.io.tags import DEFAULT_CHUNK_TAGS, iter_tag_chunks, save_tags
from fiberphoton.optics.interface import (
    collection_efficiency,
    cutoff_distance,
    efficiency_sweep,
    hemisphere_fraction,
    orientation_averaged_efficiency,
    radiated_pattern,
    spherical_collection_efficiency,
)
from fiberphoton.photophysics.emitter import SignalBackground, steady_state_population
from fiberphoton.schemas import RunConfig, parse_run_config
from fiberphoton.simulation.streams import simulate_tags
from fiberphoton.spectra.filters import (
    FilterWindow,
    SpectrumTrace,
    in_band_fraction,
    optimize_window,
    raman_reduction_factor,
    window_snr,
)
from fiberphoton.spectra.synth import count_lines, dbatt_like_spectrum, fiber_background_spectrum, synth_excitation_scan

logger = logging.getLogger("fiberphoton.cli")

USAGE_ERROR = 2
RUNTIME_ERROR = 1

DEFAULT_COLUMNS: Dict[str, tuple[str, str]] = {
    "lorentzian": ("frequency_mhz", "counts"),
    "saturation": ("power_nw", "rate_cps"),
    "saturation_linear_background": ("power_nw", "rate_cps"),
    "power_broadening": ("power_nw", "fwhm_mhz"),
    "rabi_g2": ("tau_ps", "g2"),
}

_OPTICS_DEFAULTS = {
    "interface": {"n_upper": SETUP_N_UPPER, "n_lower": SETUP_N_LOWER},
    "fiber": {"numerical_aperture": SETUP_NA, "core_radius_um": SETUP_CORE_RADIUS_UM, "n_core": SETUP_N_LOWER},
    "dipole": {"orientation": "parallel", "height_um": 0.0, "wavelength_nm": SETUP_WAVELENGTH_NM},
}


def eprint(*args: object) -> None:
    print(*args, file=sys.stderr)


# Configuration plumbing


def _run_config(
    args: argparse.Namespace,
    overrides: Dict[str, Dict[str, object]],
    defaults: Optional[Dict[str, Dict[str, object]]] = None,
) -> RunConfig:
    """Merge defaults, the ``--config`` document and explicit flags, then validate."""
    data = read_json(Path(args.config)) if getattr(args, "config", None) else {}
    if not isinstance(data, dict):
        raise ConfigError("run configuration must be a JSON object")
    for name, section in (defaults or {}).items():
        current = data.get(name, {})
        if not isinstance(current, dict):
            raise ConfigError(f"{name}: section must be an object")
        data[name] = {**section, **current}
    for name, values in overrides.items():
        chosen = {key: value for key, value in values.items() if value is not None}
        if chosen:
            data[name] = {**data.get(name, {}), **chosen}
    return parse_run_config(data)


def _optics_overrides(args: argparse.Namespace) -> Dict[str, Dict[str, object]]:
    core_radius = None if args.core_um is None else args.core_um / 2.0
    return {
        "interface": {"n_upper": args.n_upper, "n_lower": args.n_lower},
        "fiber": {"numerical_aperture": args.na, "core_radius_um": core_radius, "n_core": args.n_lower},
        "dipole": {
            "orientation": getattr(args, "orientation", None),
            "height_um": getattr(args, "d_um", None),
            "wavelength_nm": args.wavelength_nm,
            "tilt_deg": getattr(args, "tilt_deg", None),
        },
    }


def _pairs(items: Optional[Sequence[str]], flag: str) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for item in items or ():
        name, sep, value = item.partition("=")
        if not sep or not name:
            raise ConfigError(f"{flag} expects NAME=VALUE, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise ConfigError(f"{flag} {name}: {value!r} is not a number") from None
    return out


# Output helpers


def _emit_table(out: Optional[str], writer, *args, overwrite: bool = True) -> None:
    if out is None:
        writer(sys.stdout, *args)
    else:
        save_table(Path(out), writer, *args, overwrite=overwrite)


def _emit_json(out: Optional[str], kind: str, payload: dict, *, overwrite: bool = True) -> None:
    if out is None:
        sys.stdout.write(dump_json(document(kind, payload)))
    else:
        write_json(Path(out), kind, payload, overwrite=overwrite)


def _finite(value: float) -> Optional[float]:
    return float(value) if math.isfinite(value) else None


# Subcommands


def cmd_collect_eff(args: argparse.Namespace) -> int:
    run = _run_config(args, _optics_overrides(args), _OPTICS_DEFAULTS)
    interface = run.interface_or_default()
    fiber = run.fiber_or_default()
    dipole = run.dipole.build()
    logger.info("geometric cutoff at %.4g um", cutoff_distance(fiber))

    if args.d_um is not None:
        if args.spherical:
            model, eta = "spherical", spherical_collection_efficiency(fiber, args.d_um)
        elif args.average:
            model = "orientation_average"
            eta = orientation_averaged_efficiency(
                interface, fiber, args.d_um, dipole.wavelength_nm, min_points=args.theta_points
            )
        else:
            model = dipole.orientation.value
            eta = collection_efficiency(dipole, interface, fiber, min_points=args.theta_points)
        payload = {
            "model": model,
            "distance_um": args.d_um,
            "eta": eta,
            "numerical_aperture": fiber.numerical_aperture,
            "core_radius_um": fiber.core_radius_um,
            "cutoff_distance_um": cutoff_distance(fiber),
        }
        _emit_json(args.out, "collection", payload, overwrite=not args.no_overwrite)
        return 0

    rows = efficiency_sweep(
        dipole, interface, fiber, args.d_min_um, args.d_max_um, args.points, min_points=args.theta_points
    )
    _emit_table(args.out, write_sweep_csv, rows, overwrite=not args.no_overwrite)
    return 0


def cmd_dipole_pattern(args: argparse.Namespace) -> int:
    run = _run_config(args, _optics_overrides(args), _OPTICS_DEFAULTS)
    dipole = run.dipole.build()
    upper, lower = radiated_pattern(dipole, run.interface_or_default(), n_theta=args.theta_points)
    logger.info(
        "%s dipole at %.3g um: %.4f of the power in the fiber hemisphere",
        dipole.orientation.value,
        dipole.height_um,
        hemisphere_fraction(lower),
    )
    _emit_table(args.out, write_pattern_csv, [upper, lower], args.stride, overwrite=not args.no_overwrite)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    run = _run_config(
        args,
        {
            "emitter": {"gamma_par_mhz": args.gamma_par_mhz, "gamma_perp_mhz": args.gamma_perp_mhz},
            "drive": {"rabi_mhz": args.rabi_mhz, "detuning_mhz": args.detuning_mhz},
            "sim": {
                "duration_s": args.duration_s,
                "seed": args.seed,
                "dt_ps": args.dt_ps,
                "eta_det": args.eta_det,
                "split_ratio": args.split_ratio,
                "bg_rate_a_cps": args.bg_a_cps,
                "bg_rate_b_cps": args.bg_b_cps,
                "dead_time_ns": args.dead_time_ns,
                "resolution_ps": args.resolution_ps,
            },
        },
    )
    config = run.sim_config()
    logger.info("simulating %d steps (run %s)", config.n_steps, config.cache_key())
    stream = simulate_tags(config)
    save_tags(Path(args.out), stream, fmt=args.format, overwrite=not args.no_overwrite)
    logger.info("wrote %d tags to %s", len(stream), args.out)
    return 0


def cmd_correlate(args: argparse.Namespace) -> int:
    run = _run_config(
        args,
        {"correlate": {"bin_width_ps": args.bin_ps, "range_ps": args.range_ps}},
        {"correlate": {"bin_width_ps": 1000, "range_ps": 100_000}},
    )
    bin_width, half_range = run.correlate.bin_width_ps, run.correlate.range_ps
    chunks = iter_tag_chunks(Path(args.tags), args.chunk_tags)
    if args.tags_b is None:
        histogram = correlate_chunks(chunks, bin_width, half_range, workers=args.workers)
    else:
        histogram = correlate_sources(
            (chunk.timestamps for chunk in chunks),
            (chunk.timestamps for chunk in iter_tag_chunks(Path(args.tags_b), args.chunk_tags)),
            bin_width,
            half_range,
            workers=args.workers,
        )
    _emit_table(args.out, write_histogram_csv, histogram, overwrite=not args.no_overwrite)
    return 0


def _histogram_sigma(counts: np.ndarray, g2: np.ndarray) -> np.ndarray:
    """Poisson errors of a normalized histogram, one count for empty bins."""
    filled = counts > 0
    if not filled.any():
        raise ConfigError("histogram holds no coincidences")
    scale = float(np.median(g2[filled] / counts[filled]))
    return scale * np.sqrt(np.maximum(counts, 1.0))


def _g2_extras(result: FitResult, tau, g2) -> dict:
    mixed, mixed_err = mixed_g2_zero(result)
    measured = measured_g2_zero(tau, g2)
    corrected = corrected_g2_zero(result, measured)
    return {
        "g2_zero_mixed": mixed,
        "g2_zero_mixed_err": mixed_err,
        "g2_zero_measured": measured,
        "g2_zero_corrected": corrected.value,
        "corrected_below_zero": corrected.below_zero,
    }


def _select_model(name: str, args: argparse.Namespace, gamma_ratio: float) -> FitModel:
    if args.linear_background:
        if name != "saturation":
            raise ConfigError("--linear-background applies to the saturation model only")
        return SATURATION_LINEAR_BACKGROUND
    if name == "rabi_g2" and gamma_ratio != 0.5:
        return rabi_g2_model(gamma_ratio)
    return get_model(name)


def cmd_fit(args: argparse.Namespace) -> int:
    run = _run_config(args, {"fit": {"model": args.model, "gamma_ratio": args.gamma_ratio}})
    run.require("fit")
    section = run.fit
    model = _select_model(section.model, args, section.gamma_ratio)
    x_col, y_col = DEFAULT_COLUMNS.get(section.model, ("x", "y"))
    x_col = args.x_col or x_col
    y_col = args.y_col or y_col
    required = [x_col, y_col] + ([args.sigma_col] if args.sigma_col else [])
    columns = read_columns(Path(args.data), required)
    x, y = columns[x_col], columns[y_col]
    sigma = columns[args.sigma_col] if args.sigma_col else None

    if args.subtract_slope is not None:
        if section.model != "saturation" or args.linear_background:
            raise ConfigError("--subtract-slope applies to the plain saturation model only")
        y = y - args.subtract_slope * x
    if model.name == "rabi_g2":
        if x_col.endswith("_ps"):
            step = float(np.min(np.diff(x))) if x.size > 1 else 0.0
            x = (x + 0.5 * step) * 1e-3
        if sigma is None and "count" in columns:
            sigma = _histogram_sigma(columns["count"], y)

    init = {**section.init, **_pairs(args.init, "--init")}
    fixed = {**section.fixed, **_pairs(args.fix, "--fix")}
    result = fit_curve(model, x, y, sigma, init or None, fixed=fixed or None, max_iter=args.max_iter)
    payload = result.to_dict()
    if model.name == "rabi_g2":
        payload.update(_g2_extras(result, x, y))
    _emit_json(args.out, "fit", payload, overwrite=not args.no_overwrite)
    return 0 if result.converged else RUNTIME_ERROR


def cmd_linewidth(args: argparse.Namespace) -> int:
    scans = []
    for power, path in args.scan:
        try:
            power_nw = float(power)
        except ValueError:
            raise ConfigError(f"--scan power {power!r} is not a number") from None
        columns = read_columns(Path(path), DEFAULT_COLUMNS["lorentzian"])
        scans.append((power_nw, columns["frequency_mhz"], columns["counts"]))
    series = linewidth_vs_power(scans, fixed_i_sat=args.fix_i_sat_nw)
    payload = {
        "rows": [
            {
                "power_nw": row.power_nw,
                "fwhm_mhz": _finite(row.fwhm),
                "fwhm_err_mhz": _finite(row.fwhm_err),
                "ok": row.ok,
                "message": row.message,
            }
            for row in series.rows
        ],
        "fit": None if series.fit is None else series.fit.to_dict(),
        "gamma0_mhz": series.gamma0,
        "diagnostics": list(series.diagnostics),
    }
    _emit_json(args.out, "linewidth", payload, overwrite=not args.no_overwrite)
    return 0


def demo_config(rabi_mhz: float, gamma_par_mhz: float, rho: float, duration_s: float, seed: int) -> SimConfig:
    """Lifetime-limited emitter with equal background on both detectors.

    Each channel carries half of the steady-state emission; its background
    is set so the signal fraction equals ``rho``. No dead time is applied.
    """
    emitter = TwoLevelEmitter.fourier_limited(mhz_to_angular(gamma_par_mhz))
    drive = DriveField(rabi=mhz_to_angular(rabi_mhz))
    signal = 0.5 * steady_state_population(drive, emitter) * emitter.gamma_par
    background = SignalBackground.from_rho(signal, rho).background_rate
    return SimConfig(
        duration=duration_s,
        dt=max_stable_dt(drive, emitter),
        seed=seed,
        drive=drive,
        emitter=emitter,
        bg_rate_a=background,
        bg_rate_b=background,
        dead_time=0.0,
    )


def run_demo(config: SimConfig, bin_width_ps: int, range_ps: int, workers: Optional[int] = None) -> dict:
    """Simulate, correlate and fit; returns the ``demo-g2`` payload."""
    stream = simulate_tags(config)
    histogram: G2Histogram = correlate_channels(stream, bin_width_ps, range_ps, workers=workers)
    x = histogram.tau_center_ps * 1e-3
    sigma = _histogram_sigma(histogram.counts.astype(float), histogram.g2)
    result = fit_curve("rabi_g2", x, histogram.g2, sigma)
    rabi_true = angular_to_mhz(config.drive.rabi)
    payload = {
        "n_tags": len(stream),
        "run": config.cache_key(),
        "rabi_mhz_true": rabi_true,
        "rabi_mhz_fit": result.parameters["rabi_mhz"],
        "rabi_mhz_err": result.errors["rabi_mhz"],
        "rabi_relative_error": abs(result.parameters["rabi_mhz"] - rabi_true) / rabi_true,
        "fit": result.to_dict(),
    }
    payload.update(_g2_extras(result, x, histogram.g2))
    return payload


def cmd_demo_g2(args: argparse.Namespace) -> int:
    config = demo_config(args.rabi_mhz, args.gamma_par_mhz, args.rho, args.duration_s, args.seed)
    payload = run_demo(config, args.bin_ps, args.range_ps, args.workers)
    payload["rho_true"] = args.rho
    payload["g2_zero_expected"] = 1.0 - args.rho**2
    eprint(
        f"fitted rabi {payload['rabi_mhz_fit']:.2f} +/- {payload['rabi_mhz_err']:.2f} MHz, "
        f"g2(0) {payload['g2_zero_mixed']:.3f} +/- {payload['g2_zero_mixed_err']:.3f}, "
        f"corrected {payload['g2_zero_corrected']:.3f}"
    )
    _emit_json(args.out, "demo-g2", payload, overwrite=not args.no_overwrite)
    return 0 if payload["fit"]["converged"] else RUNTIME_ERROR


def cmd_scan_synth(args: argparse.Namespace) -> int:
    scan = synth_excitation_scan(
        args.molecules,
        args.f_min_mhz,
        args.f_max_mhz,
        args.power_nw,
        args.background_cps,
        args.seed,
        n_points=args.points,
        max_distance_um=args.max_distance_um,
        random_orientation=not args.aligned,
        noise=not args.no_noise,
        min_separation_fwhm=args.min_separation_fwhm,
    )
    logger.info("%d lines found in the synthesized scan", count_lines(scan.counts))
    _emit_table(args.out, write_scan_csv, scan.frequency_mhz, scan.counts, overwrite=not args.no_overwrite)
    return 0


def _signal_trace(path: Optional[str]) -> SpectrumTrace:
    if path is not None:
        return read_spectrum_csv(Path(path))
    return dbatt_like_spectrum(np.linspace(580.0, 800.0, 2201))


def cmd_filter(args: argparse.Namespace) -> int:
    cut_on, cut_off = args.window if args.window else (None, None)
    run = _run_config(
        args,
        {"spectra": {"cut_on_nm": cut_on, "cut_off_nm": cut_off, "objective": args.objective, "step_nm": args.step_nm}},
        {"spectra": {"cut_on_nm": SETUP_LONG_PASS_NM, "cut_off_nm": SETUP_SHORT_PASS_NM}},
    )
    section = run.spectra
    signal = _signal_trace(args.signal)
    background = read_spectrum_csv(Path(args.background)) if args.background else None

    if args.optimize:
        if background is None:
            logger.info("no background trace given; using the illustrative fiber background")
            background = fiber_background_spectrum(signal.wavelength_nm)
        choice = optimize_window(signal, background, section.objective, section.step_nm)
        payload = {
            "window_nm": [choice.window.cut_on, choice.window.cut_off],
            "objective": choice.objective,
            "score": choice.score,
            "signal": choice.snr.signal,
            "background": choice.snr.background,
            "ratio": choice.snr.ratio,
            "zero_background": choice.snr.zero_background,
        }
        _emit_json(args.out, "window", payload, overwrite=not args.no_overwrite)
        return 0

    window = FilterWindow(section.cut_on_nm, section.cut_off_nm)
    band = in_band_fraction(signal, window)
    payload = {
        "window_nm": [window.cut_on, window.cut_off],
        "in_band_fraction": band.fraction,
        "empty_overlap": band.empty_overlap,
    }
    if background is not None:
        snr = window_snr(signal, background, window)
        payload.update(
            {"signal": snr.signal, "background": snr.background, "ratio": snr.ratio, "zero_background": snr.zero_background}
        )
    _emit_json(args.out, "filter", payload, overwrite=not args.no_overwrite)
    return 0


def cmd_raman(args: argparse.Namespace) -> int:
    factor = raman_reduction_factor(args.lambda_from_nm, args.lambda_to_nm)
    payload = {"lambda_from_nm": args.lambda_from_nm, "lambda_to_nm": args.lambda_to_nm, "factor": factor}
    _emit_json(args.out, "raman", payload, overwrite=not args.no_overwrite)
    return 0


# Parser


def _add_output(parser: argparse.ArgumentParser, *, required: bool = False, what: str = "output") -> None:
    parser.add_argument("--out", required=required, help=f"{what} file; stdout when omitted [path]")
    parser.add_argument("--no-overwrite", action="store_true", help="fail if the output exists [flag]")


def _add_config(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration; explicit flags take precedence [path]")


def _add_optics(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-upper", type=float, help=f"index of the emitter medium (default {SETUP_N_UPPER}) [-]")
    parser.add_argument("--n-lower", type=float, help=f"index of the fiber core (default {SETUP_N_LOWER}) [-]")
    parser.add_argument("--na", type=float, help=f"fiber numerical aperture (default {SETUP_NA}) [-]")
    parser.add_argument(
        "--core-um", type=float, help=f"core diameter (default {2 * SETUP_CORE_RADIUS_UM:g}) [um]"
    )
    parser.add_argument(
        "--wavelength-nm", type=float, help=f"emission wavelength (default {SETUP_WAVELENGTH_NM:g}) [nm]"
    )
    parser.add_argument("--orientation", choices=["parallel", "orthogonal", "tilted"], help="dipole orientation [-]")
    parser.add_argument("--tilt-deg", type=float, help="tilt from the interface normal for tilted dipoles [deg]")
    parser.add_argument(
        "--theta-points", type=int, default=4096, help="minimum polar samples per hemisphere [count]"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fiberphoton",
        description="Fiber-coupled single-emitter toolkit: collection optics, photon streams, g2 and fits.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}", help="show version [flag]")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr [flag]")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("collect-eff", help="collection efficiency versus molecule-facet distance")
    _add_config(p)
    _add_optics(p)
    p.add_argument("--d-um", type=float, help="single distance instead of a sweep [um]")
    p.add_argument("--d-min-um", type=float, default=0.0, help="sweep start [um]")
    p.add_argument("--d-max-um", type=float, default=6.0, help="sweep end [um]")
    p.add_argument("--points", type=int, default=61, help="sweep samples [count]")
    p.add_argument("--spherical", action="store_true", help="isotropic emitter model with --d-um [flag]")
    p.add_argument("--average", action="store_true", help="orientation-averaged dipole with --d-um [flag]")
    _add_output(p, what="CSV sweep or JSON")
    p.set_defaults(func=cmd_collect_eff)

    p = sub.add_parser("dipole-pattern", help="far-field angular density in both hemispheres")
    _add_config(p)
    _add_optics(p)
    p.add_argument("--d-um", type=float, help="dipole height above the facet (default 0) [um]")
    p.add_argument("--stride", type=int, default=16, help="write every n-th polar sample [count]")
    _add_output(p, what="CSV")
    p.set_defaults(func=cmd_dipole_pattern)

    p = sub.add_parser("simulate", help="quantum-jump photon stream through two detectors")
    _add_config(p)
    p.add_argument("--rabi-mhz", type=float, help="Rabi frequency / 2pi [MHz]")
    p.add_argument("--detuning-mhz", type=float, help="laser detuning / 2pi [MHz]")
    p.add_argument("--gamma-par-mhz", type=float, help="population decay rate / 2pi [MHz]")
    p.add_argument("--gamma-perp-mhz", type=float, help="coherence decay rate / 2pi; lifetime limit if omitted [MHz]")
    p.add_argument("--duration-s", type=float, help="simulated time [s]")
    p.add_argument("--seed", type=int, help="64-bit unsigned seed [-]")
    p.add_argument("--dt-ps", type=float, help="time step; largest stable step if omitted [ps]")
    p.add_argument("--eta-det", type=float, help="detection efficiency [-]")
    p.add_argument("--split-ratio", type=float, help="probability of channel A [-]")
    p.add_argument("--bg-a-cps", type=float, help="background on channel A [counts/s]")
    p.add_argument("--bg-b-cps", type=float, help="background on channel B [counts/s]")
    p.add_argument("--dead-time-ns", type=float, help="dead time per channel [ns]")
    p.add_argument("--resolution-ps", type=int, help="timestamp quantum [ps]")
    p.add_argument("--format", choices=["csv", "ttg1"], help="tag file format; from the suffix if omitted [-]")
    _add_output(p, required=True, what="tag")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("correlate", help="g2 histogram from time tags")
    _add_config(p)
    p.add_argument("tags", help="tag file; both channels unless --tags-b is given [path]")
    p.add_argument("--tags-b", help="second tag file used as channel B [path]")
    p.add_argument("--bin-ps", type=int, help="bin width (default 1000) [ps]")
    p.add_argument("--range-ps", type=int, help="half range of the delay axis (default 100000) [ps]")
    p.add_argument("--workers", type=int, help="worker threads; FIBERPHOTON_THREADS if omitted [count]")
    p.add_argument(
        "--chunk-tags",
        type=int,
        default=DEFAULT_CHUNK_TAGS,
        help="tags read per piece of the input (default 2^20) [count]",
    )
    _add_output(p, what="CSV")
    p.set_defaults(func=cmd_correlate)

    p = sub.add_parser("fit", help="least-squares fit of a registered model to CSV data")
    _add_config(p)
    p.add_argument("model", nargs="?", choices=sorted(MODELS), help="model name [-]")
    p.add_argument("data", help="CSV with a header row [path]")
    p.add_argument("--x-col", help="x column; model default if omitted [name]")
    p.add_argument("--y-col", help="y column; model default if omitted [name]")
    p.add_argument("--sigma-col", help="standard deviation column [name]")
    p.add_argument("--init", action="append", metavar="NAME=VALUE", help="starting value, repeatable [model units]")
    p.add_argument("--fix", action="append", metavar="NAME=VALUE", help="hold a parameter, repeatable [model units]")
    p.add_argument(
        "--gamma-ratio", type=float, help="gamma_perp / gamma_par of rabi_g2 (default 0.5, lifetime limit) [-]"
    )
    p.add_argument(
        "--linear-background", action="store_true", help="saturation with a joint linear background term [flag]"
    )
    p.add_argument("--subtract-slope", type=float, help="known linear background removed before fitting [cps/nW]")
    p.add_argument("--max-iter", type=int, default=500, help="solver iteration cap [count]")
    _add_output(p, what="JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("linewidth", help="Lorentzian widths per power and the power-broadening fit")
    p.add_argument(
        "--scan",
        nargs=2,
        action="append",
        required=True,
        metavar=("POWER_NW", "PATH"),
        help="excitation power and its frequency_mhz,counts scan, repeatable [nW, path]",
    )
    p.add_argument("--fix-i-sat-nw", type=float, help="hold the saturation power [nW]")
    _add_output(p, what="JSON")
    p.set_defaults(func=cmd_linewidth)

    p = sub.add_parser("demo-g2", help="simulate, correlate and fit a background-mixed g2")
    p.add_argument("--rabi-mhz", type=float, default=42.0, help="Rabi frequency / 2pi [MHz]")
    p.add_argument("--gamma-par-mhz", type=float, default=17.0, help="population decay rate / 2pi [MHz]")
    p.add_argument("--rho", type=float, default=SETUP_RHO, help="signal fraction per detector [-]")
    p.add_argument("--duration-s", type=float, default=0.0203, help="simulated time [s]")
    p.add_argument("--seed", type=int, default=7, help="64-bit unsigned seed [-]")
    p.add_argument("--bin-ps", type=int, default=500, help="histogram bin width [ps]")
    p.add_argument("--range-ps", type=int, default=100_000, help="histogram half range [ps]")
    p.add_argument("--workers", type=int, help="correlator threads [count]")
    _add_output(p, what="JSON")
    p.set_defaults(func=cmd_demo_g2)

    p = sub.add_parser("scan-synth", help="synthetic excitation scan of several molecules")
    p.add_argument("--molecules", type=int, default=10, help="number of molecules [count]")
    p.add_argument("--f-min-mhz", type=float, default=-2000.0, help="scan start detuning [MHz]")
    p.add_argument("--f-max-mhz", type=float, default=2000.0, help="scan end detuning [MHz]")
    p.add_argument("--power-nw", type=float, default=20.0, help="excitation power [nW]")
    p.add_argument("--background-cps", type=float, default=500.0, help="constant background [counts/s]")
    p.add_argument("--seed", type=int, default=0, help="numpy generator seed [-]")
    p.add_argument("--points", type=int, default=2001, help="scan samples [count]")
    p.add_argument("--max-distance-um", type=float, default=3.0, help="largest molecule-facet distance [um]")
    p.add_argument("--min-separation-fwhm", type=float, default=0.0, help="minimum line spacing [linewidths]")
    p.add_argument("--aligned", action="store_true", help="all dipoles parallel to the facet [flag]")
    p.add_argument("--no-noise", action="store_true", help="skip Poisson noise [flag]")
    _add_output(p, what="CSV")
    p.set_defaults(func=cmd_scan_synth)

    p = sub.add_parser("filter", help="in-band fraction, window S/B and window search")
    _add_config(p)
    p.add_argument("--signal", help="wavelength_nm,counts emission trace; illustrative trace if omitted [path]")
    p.add_argument("--background", help="wavelength_nm,counts background trace [path]")
    p.add_argument(
        "--window",
        type=float,
        nargs=2,
        metavar=("CUT_ON", "CUT_OFF"),
        help=f"pass band (default {SETUP_LONG_PASS_NM:g} {SETUP_SHORT_PASS_NM:g}) [nm]",
    )
    p.add_argument("--optimize", action="store_true", help="search the best window instead [flag]")
    p.add_argument("--objective", choices=["sb", "snr"], help="window objective: S/B or S/sqrt(S+B) [-]")
    p.add_argument("--step-nm", type=float, help="candidate edge spacing (default 1) [nm]")
    _add_output(p, what="JSON")
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("raman", help="lambda^-4 reduction of the fiber Raman background")
    p.add_argument("lambda_from_nm", type=float, help="current excitation wavelength [nm]")
    p.add_argument("lambda_to_nm", type=float, help="longer excitation wavelength [nm]")
    _add_output(p, what="JSON")
    p.set_defaults(func=cmd_raman)
    return parser


def subcommand_parsers(parser: argparse.ArgumentParser) -> Dict[str, argparse.ArgumentParser]:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return dict(action.choices)
    return {}


def _configure_logging(verbose: bool, stream: TextIO = sys.stderr) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=stream,
        force=True,
    )


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except ConfigError as ex:
        eprint(f"Error: {ex.qualified()}")
        return USAGE_ERROR
    except FiberPhotonError as ex:
        eprint(f"Error: {ex.qualified()}")
        return RUNTIME_ERROR
    except OSError as ex:
        eprint(f"Error: {ex}")
        return RUNTIME_ERROR


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
