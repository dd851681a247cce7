"""Fit model registry.

Each model maps an x grid and a parameter vector to predictions, declares
how every parameter is kept inside its bounds (identity, log, logit or
nonnegative transform) and knows how to guess starting values from data.

Units follow the data: line scans use the scan's frequency unit for the
center and width, saturation curves use nW, and g2 models take delays in
nanoseconds with rates reported as ordinary frequencies in MHz.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from fiberphoton.config import DriveField, TwoLevelEmitter, mhz_to_angular
from fiberphoton.errors import FitError
from fiberphoton.photophysics.emitter import analytic_g2, background_mix_g2

logger = logging.getLogger(__name__)

IDENTITY = "identity"
LOG = "log"
LOGIT = "logit"
NONNEGATIVE = "nonnegative"

Evaluator = Callable[[np.ndarray, np.ndarray], np.ndarray]
Initializer = Callable[[np.ndarray, np.ndarray], Tuple[np.ndarray, List[str]]]


@dataclass(frozen=True)
class FitModel:
    """A named model with bounded parameters.

    Attributes:
        name: Registry key.
        param_names: Parameter order used by ``evaluate`` and ``jacobian``.
        transforms: Bound-keeping transform per parameter.
        evaluate: ``f(x, params) -> y``.
        initializer: ``(x, y) -> (params, diagnostics)``.
        jacobian: Optional analytic ``df/dparams`` with shape (len(x), n_params).
        count_data: Whether y is a photon count (selects Poisson weights).
    """

    name: str
    param_names: Tuple[str, ...]
    transforms: Tuple[str, ...]
    evaluate: Evaluator
    initializer: Initializer
    jacobian: Optional[Evaluator] = None
    count_data: bool = False
    description: str = field(default="", compare=False)

    @property
    def n_params(self) -> int:
        return len(self.param_names)

    def params_from_dict(self, values: Dict[str, float]) -> np.ndarray:
        missing = [name for name in self.param_names if name not in values]
        if missing:
            raise FitError(f"{self.name}: missing parameters {', '.join(missing)}")
        unknown = sorted(set(values) - set(self.param_names))
        if unknown:
            raise FitError(f"{self.name}: unknown parameters {', '.join(unknown)}")
        return np.array([float(values[name]) for name in self.param_names])

    def params_to_dict(self, params: np.ndarray) -> Dict[str, float]:
        return {name: float(value) for name, value in zip(self.param_names, params)}


def to_internal(values: np.ndarray, transforms: Tuple[str, ...]) -> np.ndarray:
    """Map natural parameters to the unconstrained space."""
    out = np.empty(len(values))
    for i, (value, kind) in enumerate(zip(values, transforms)):
        if kind == LOG:
            if not value > 0:
                raise FitError(f"parameter {i} must be > 0 for a log transform, got {value!r}")
            out[i] = math.log(value)
        elif kind == LOGIT:
            clipped = min(max(value, 1e-9), 1.0 - 1e-9)
            out[i] = math.log(clipped / (1.0 - clipped))
        elif kind == NONNEGATIVE:
            out[i] = max(value, 0.0)
        else:
            out[i] = value
    return out


def to_natural(internal: np.ndarray, transforms: Tuple[str, ...]) -> tuple[np.ndarray, np.ndarray]:
    """Return natural parameters and the derivative ``d natural / d internal``."""
    values = np.empty(len(internal))
    slopes = np.empty(len(internal))
    for i, (u, kind) in enumerate(zip(internal, transforms)):
        if kind == LOG:
            values[i] = math.exp(min(u, 700.0))
            slopes[i] = values[i]
        elif kind == LOGIT:
            values[i] = 1.0 / (1.0 + math.exp(-min(max(u, -700.0), 700.0)))
            slopes[i] = values[i] * (1.0 - values[i])
        elif kind == NONNEGATIVE:
            # clamped at the bound; the unit slope lets the solver step back inside
            values[i] = max(u, 0.0)
            slopes[i] = 1.0
        else:
            values[i] = u
            slopes[i] = 1.0
    return values, slopes


def _is_flat(y: np.ndarray) -> bool:
    return bool(np.ptp(y) <= 1e-12 * max(float(np.max(np.abs(y))), 1.0))


def _positive_median(x: np.ndarray) -> float:
    positive = x[x > 0]
    return float(np.median(positive)) if positive.size else 1.0


# Lorentzian line


def _lorentzian(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    center, fwhm, amplitude, offset = p
    half = 0.5 * fwhm
    return offset + amplitude * half**2 / ((x - center) ** 2 + half**2)


def _lorentzian_jac(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    center, fwhm, amplitude, _ = p
    half = 0.5 * fwhm
    d = x - center
    denom = d**2 + half**2
    return np.column_stack(
        [
            amplitude * half**2 * 2.0 * d / denom**2,
            amplitude * half * d**2 / denom**2,
            half**2 / denom,
            np.ones_like(x),
        ]
    )


def _lorentzian_init(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, List[str]]:
    span = float(x.max() - x.min())
    if _is_flat(y):
        return np.array([float(x.mean()), span / 10.0, 1.0, float(y.mean())]), ["flat data: fallback initial parameters"]
    peak = int(np.argmax(y))
    offset = float(y.min())
    amplitude = float(y[peak]) - offset
    half_level = offset + 0.5 * amplitude
    left = peak
    while left > 0 and y[left - 1] >= half_level:
        left -= 1
    right = peak
    while right < len(y) - 1 and y[right + 1] >= half_level:
        right += 1
    x_left = _crossing(x, y, left - 1, left, half_level) if left > 0 else x[left]
    x_right = _crossing(x, y, right, right + 1, half_level) if right < len(y) - 1 else x[right]
    width = float(x_right - x_left)
    if not width > 0:
        width = 2.0 * span / max(len(x) - 1, 1)
    return np.array([float(x[peak]), width, amplitude, offset]), []


def _crossing(x: np.ndarray, y: np.ndarray, i: int, j: int, level: float) -> float:
    if y[j] == y[i]:
        return float(x[i])
    return float(x[i] + (level - y[i]) * (x[j] - x[i]) / (y[j] - y[i]))


# Saturation of the detected rate


def _saturation(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    r_inf, i_sat = p
    return r_inf * x / (i_sat + x)


def _saturation_jac(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    r_inf, i_sat = p
    return np.column_stack([x / (i_sat + x), -r_inf * x / (i_sat + x) ** 2])


def _saturation_init(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, List[str]]:
    if _is_flat(y) or y.max() <= 0:
        return np.array([max(float(np.abs(y).max()), 1.0), _positive_median(x)]), [
            "flat data: fallback initial parameters"
        ]
    r_inf = 1.2 * float(y.max())
    i_sat = float(x[int(np.argmin(np.abs(y - 0.5 * y.max())))])
    if not i_sat > 0:
        i_sat = _positive_median(x)
    return np.array([r_inf, i_sat]), []


def _saturation_linear(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    return _saturation(x, p[:2]) + p[2] * x


def _saturation_linear_jac(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.column_stack([_saturation_jac(x, p[:2]), x])


def _saturation_linear_init(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, List[str]]:
    base, diagnostics = _saturation_init(x, y)
    return np.append(base, 0.0), diagnostics


# Power broadening


def _power_broadening(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    gamma0, i_sat = p
    return gamma0 * np.sqrt(1.0 + x / i_sat)


def _power_broadening_jac(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    gamma0, i_sat = p
    root = np.sqrt(1.0 + x / i_sat)
    return np.column_stack([root, -gamma0 * x / (2.0 * root * i_sat**2)])


def _power_broadening_init(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, List[str]]:
    if _is_flat(y) or y.min() <= 0:
        return np.array([max(float(np.abs(y).mean()), 1e-3), _positive_median(x)]), [
            "flat data: fallback initial parameters"
        ]
    gamma0 = float(y.min())
    target = math.sqrt(2.0) * gamma0
    i_sat = float(x[int(np.argmin(np.abs(y - target)))])
    if not i_sat > 0:
        i_sat = _positive_median(x)
    return np.array([gamma0, i_sat]), []


# Resonant g2 with Rabi oscillations, mixed with Poissonian background


def rabi_g2_model(dephasing_ratio: float = 0.5) -> FitModel:
    """Mixed g2 model with ``gamma_perp = dephasing_ratio * gamma_par`` held fixed.

    The resonant g2 depends on the three rates only through the damping
    ``(g_par + g_perp) / 2`` and the oscillation frequency, so the ratio is
    pinned to keep the fit identifiable; 0.5 is the lifetime limit.
    """
    if dephasing_ratio < 0.5:
        raise FitError("dephasing ratio gamma_perp / gamma_par must be >= 0.5")

    def evaluate(x: np.ndarray, p: np.ndarray) -> np.ndarray:
        rabi_mhz, gamma_par_mhz, rho = p
        gamma_par = mhz_to_angular(gamma_par_mhz)
        emitter = TwoLevelEmitter(gamma_par=gamma_par, gamma_perp=dephasing_ratio * gamma_par)
        pure = analytic_g2(x * 1e-9, DriveField(rabi=mhz_to_angular(rabi_mhz)), emitter)
        return background_mix_g2(pure, min(max(rho, 0.0), 1.0))

    def initializer(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, List[str]]:
        fallback = np.array([40.0, 16.0, 0.8])
        if _is_flat(y):
            return fallback, ["flat data: fallback initial parameters"]
        diagnostics: List[str] = []
        near_zero = int(np.argmin(np.abs(x)))
        rho = math.sqrt(min(max(1.0 - float(y[near_zero]), 0.05**2), 0.99**2))
        positive = x > 0
        if np.count_nonzero(positive) < 3:
            return np.array([fallback[0], fallback[1], rho]), ["no positive delays: fallback rates"]
        order = np.argsort(x[positive])
        tau = x[positive][order]
        values = np.convolve(y[positive][order], np.ones(3) / 3.0, mode="same")
        tau_max = float(tau[int(np.argmax(values))])
        if not tau_max > 0:
            diagnostics.append("no oscillation maximum found: fallback rates")
            return np.array([fallback[0], fallback[1], rho]), diagnostics
        rabi_mhz = 500.0 / tau_max  # pi / tau in rad/ns expressed in MHz
        return np.array([rabi_mhz, rabi_mhz / 2.5, rho]), diagnostics

    return FitModel(
        name="rabi_g2",
        param_names=("rabi_mhz", "gamma_par_mhz", "rho"),
        transforms=(LOG, LOG, LOGIT),
        evaluate=evaluate,
        initializer=initializer,
        count_data=False,
        description=f"background-mixed resonant g2, gamma_perp = {dephasing_ratio:g} gamma_par",
    )


LORENTZIAN = FitModel(
    name="lorentzian",
    param_names=("center", "fwhm", "amplitude", "offset"),
    transforms=(IDENTITY, LOG, LOG, IDENTITY),
    evaluate=_lorentzian,
    initializer=_lorentzian_init,
    jacobian=_lorentzian_jac,
    count_data=True,
    description="peak-normalized Lorentzian line on a constant offset",
)

SATURATION = FitModel(
    name="saturation",
    param_names=("r_inf", "i_sat"),
    transforms=(LOG, LOG),
    evaluate=_saturation,
    initializer=_saturation_init,
    jacobian=_saturation_jac,
    count_data=True,
    description="R_inf * I / (I_sat + I)",
)

SATURATION_LINEAR_BACKGROUND = FitModel(
    name="saturation_linear_background",
    param_names=("r_inf", "i_sat", "slope"),
    transforms=(LOG, LOG, NONNEGATIVE),
    evaluate=_saturation_linear,
    initializer=_saturation_linear_init,
    jacobian=_saturation_linear_jac,
    count_data=True,
    description="R_inf * I / (I_sat + I) + slope * I",
)

POWER_BROADENING = FitModel(
    name="power_broadening",
    param_names=("gamma0", "i_sat"),
    transforms=(LOG, LOG),
    evaluate=_power_broadening,
    initializer=_power_broadening_init,
    jacobian=_power_broadening_jac,
    count_data=False,
    description="gamma0 * sqrt(1 + I / I_sat)",
)

RABI_G2 = rabi_g2_model()

MODELS: Dict[str, FitModel] = {
    model.name: model
    for model in (LORENTZIAN, SATURATION, SATURATION_LINEAR_BACKGROUND, POWER_BROADENING, RABI_G2)
}


def get_model(name: str) -> FitModel:
    try:
        return MODELS[name]
    except KeyError:
        raise FitError(f"unknown model {name!r}; choose from {', '.join(sorted(MODELS))}") from None
