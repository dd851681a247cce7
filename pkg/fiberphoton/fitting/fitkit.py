"""Curve fitting entry points: single fits, start values and linewidth series."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from fiberphoton.errors import FitError
from fiberphoton.fitting.models import LORENTZIAN, POWER_BROADENING, FitModel, get_model
from fiberphoton.fitting.solver import LevenbergMarquardt
from fiberphoton.photophysics.emitter import CorrectedG2, correct_g2_background

logger = logging.getLogger(__name__)

WEIGHT_GIVEN = "sigma"
WEIGHT_POISSON = "poisson"
WEIGHT_UNIFORM = "uniform"


@dataclass(frozen=True)
class FitResult:
    """Converged (or best-so-far) parameters of one fit.

    Attributes:
        model: Registry name of the fitted model.
        parameters: Estimates by parameter name.
        errors: Standard errors by parameter name (0 for fixed parameters).
        rss: Weighted residual sum of squares.
        iterations: Solver iterations used.
        converged: Whether a convergence criterion was met.
        condition_number: Condition number of ``J^T J`` at the solution.
        weighting: "sigma", "poisson" or "uniform".
        gradient_norm: Gradient norm at the last iteration.
        diagnostics: Free-form notes (fallback start, conditioning).
        cost_history: Residual sum of squares after every accepted step.
        covariance: Parameter covariance in natural units.
    """

    model: str
    parameters: Dict[str, float]
    errors: Dict[str, float]
    rss: float
    iterations: int
    converged: bool
    condition_number: float
    weighting: str
    gradient_norm: float = 0.0
    diagnostics: Tuple[str, ...] = ()
    cost_history: Tuple[float, ...] = field(default=(), repr=False)
    covariance: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        """JSON-ready fields of the fit document."""
        return {
            "model": self.model,
            "parameters": dict(self.parameters),
            "errors": dict(self.errors),
            "rss": self.rss,
            "iterations": self.iterations,
            "converged": self.converged,
            "condition_number": self.condition_number if math.isfinite(self.condition_number) else None,
            "weighting": self.weighting,
            "diagnostics": list(self.diagnostics),
        }


@dataclass(frozen=True)
class LinewidthRow:
    power_nw: float
    fwhm: float
    fwhm_err: float
    ok: bool
    message: str = ""


@dataclass(frozen=True)
class LinewidthSeries:
    """Per-power Lorentzian widths and the power-broadening fit over them."""

    rows: Tuple[LinewidthRow, ...]
    fit: Optional[FitResult]
    diagnostics: Tuple[str, ...] = ()

    @property
    def gamma0(self) -> Optional[float]:
        return None if self.fit is None else self.fit.parameters["gamma0"]


def _resolve(model: Union[str, FitModel]) -> FitModel:
    return get_model(model) if isinstance(model, str) else model


def _prepare(
    model: FitModel, x, y, sigma, n_free: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray, str]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise FitError("x and y must have the same length")
    if not np.all(np.isfinite(x)) or not np.all(np.isfinite(y)):
        raise FitError("x and y must be finite")
    if x.size < 2 * n_free:
        raise FitError(f"{model.name} needs at least {2 * n_free} points, got {x.size}")
    if np.ptp(x) == 0:
        raise FitError("degenerate data: all x values are equal")
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float).ravel()
        if sigma.shape != y.shape:
            raise FitError("sigma must match y")
        if not np.all(sigma > 0):
            raise FitError("sigma must be > 0 everywhere")
        return x, y, sigma, WEIGHT_GIVEN
    if model.count_data:
        return x, y, np.sqrt(np.maximum(y, 1.0)), WEIGHT_POISSON
    return x, y, np.ones_like(y), WEIGHT_UNIFORM


def auto_init(model: Union[str, FitModel], x, y) -> tuple[Dict[str, float], List[str]]:
    """Guess starting parameters from the data.

    Returns:
        ``(parameters, diagnostics)``; diagnostics name any fallback used.
    """
    model = _resolve(model)
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    params, diagnostics = model.initializer(x, y)
    for message in diagnostics:
        logger.warning("%s start values: %s", model.name, message)
    return model.params_to_dict(params), list(diagnostics)


def fit_curve(
    model: Union[str, FitModel],
    x,
    y,
    sigma=None,
    init: Optional[Mapping[str, float]] = None,
    *,
    fixed: Optional[Mapping[str, float]] = None,
    max_iter: int = 500,
) -> FitResult:
    """Fit ``model`` to ``(x, y)``.

    Args:
        model: Model instance or registry name.
        x: Sample positions.
        y: Observations.
        sigma: Optional standard deviations; Poisson or uniform weights are
            chosen from the model otherwise.
        init: Starting parameters; :func:`auto_init` is used when omitted.
            A partial mapping overrides the automatic guesses.
        fixed: Parameters held at the given values.
        max_iter: Iteration cap.

    Returns:
        The fit result; non-convergence is reported through ``converged``.

    Raises:
        FitError: Too few points, degenerate x, non-positive sigma or
            unknown parameter names.
    """
    model = _resolve(model)
    n_free = sum(name not in (fixed or {}) for name in model.param_names)
    x, y, weights, weighting = _prepare(model, x, y, sigma, n_free)
    start, diagnostics = auto_init(model, x, y)
    for source in (init or {}, fixed or {}):
        unknown = sorted(set(source) - set(model.param_names))
        if unknown:
            raise FitError(f"{model.name}: unknown parameters {', '.join(unknown)}")
        start.update({k: float(v) for k, v in source.items()})
    free = np.array([name not in (fixed or {}) for name in model.param_names])
    if not free.any():
        raise FitError("at least one parameter must be free")

    solver = LevenbergMarquardt(model, x, y, weights, free=free)
    state = solver.run(model.params_from_dict(start), max_iter=max_iter)
    errors = np.sqrt(np.clip(np.diag(state.covariance), 0.0, None))
    logger.info(
        "%s fit: converged=%s after %d iterations, rss=%.4g", model.name, state.converged, state.iterations, state.rss
    )
    return FitResult(
        model=model.name,
        parameters=model.params_to_dict(state.params),
        errors=model.params_to_dict(errors),
        rss=state.rss,
        iterations=state.iterations,
        converged=state.converged,
        condition_number=state.condition_number,
        weighting=weighting,
        gradient_norm=state.gradient_norm,
        diagnostics=tuple(diagnostics + state.diagnostics),
        cost_history=tuple(state.cost_history),
        covariance=state.covariance,
    )


def linewidth_vs_power(
    scans: Sequence[Tuple[float, np.ndarray, np.ndarray]],
    *,
    fixed_i_sat: Optional[float] = None,
) -> LinewidthSeries:
    """Fit a Lorentzian to every scan, then power broadening over the widths.

    Args:
        scans: ``(power_nw, frequency, counts)`` per excitation power.
        fixed_i_sat: Hold the saturation power of the broadening fit.

    Raises:
        FitError: With fewer than three powers.
    """
    if len(scans) < 3:
        raise FitError(f"linewidth series needs at least 3 powers, got {len(scans)}")
    rows: List[LinewidthRow] = []
    for power, frequency, counts in scans:
        try:
            result = fit_curve(LORENTZIAN, frequency, counts)
        except FitError as exc:
            rows.append(LinewidthRow(float(power), math.nan, math.nan, False, str(exc)))
            continue
        message = "" if result.converged else "lorentzian fit did not converge"
        rows.append(
            LinewidthRow(
                power_nw=float(power),
                fwhm=result.parameters["fwhm"],
                fwhm_err=result.errors["fwhm"],
                ok=result.converged,
                message=message,
            )
        )
    usable = [row for row in rows if row.ok]
    fixed = None if fixed_i_sat is None else {"i_sat": fixed_i_sat}
    needed = 2 * (POWER_BROADENING.n_params - len(fixed or {}))
    if len(usable) < needed:
        note = f"power-broadening fit skipped: {len(usable)} usable scans, need {needed}"
        logger.warning(note)
        return LinewidthSeries(rows=tuple(rows), fit=None, diagnostics=(note,))
    sigma = np.array([row.fwhm_err for row in usable])
    sigma = sigma if np.all(sigma > 0) else None
    fit = fit_curve(
        POWER_BROADENING,
        [row.power_nw for row in usable],
        [row.fwhm for row in usable],
        sigma,
        fixed=fixed,
    )
    return LinewidthSeries(rows=tuple(rows), fit=fit)


def mixed_g2_zero(result: FitResult) -> tuple[float, float]:
    """Fitted g2(0) of the background-mixed model and its standard error."""
    if result.model != "rabi_g2":
        raise FitError("g2(0) is only defined for rabi_g2 fits")
    rho = result.parameters["rho"]
    return 1.0 - rho**2, 2.0 * rho * result.errors["rho"]


def measured_g2_zero(tau, g2) -> float:
    """Measured g2 at the delay closest to zero.

    Points tied for the smallest ``|tau|`` (the two bins flanking zero in a
    histogram) are averaged.
    """
    tau = np.abs(np.asarray(tau, dtype=float).ravel())
    g2 = np.asarray(g2, dtype=float).ravel()
    if tau.size == 0 or tau.shape != g2.shape:
        raise FitError("measured g2 needs matching, non-empty tau and g2 arrays")
    nearest = tau <= tau.min() * (1.0 + 1e-9) + 1e-12
    return float(g2[nearest].mean())


def corrected_g2_zero(result: FitResult, measured: float) -> CorrectedG2:
    """Correct a measured g2(0) with the signal fraction of a rabi_g2 fit."""
    if result.model != "rabi_g2":
        raise FitError("background correction needs a rabi_g2 fit")
    return correct_g2_background(measured, result.parameters["rho"])
