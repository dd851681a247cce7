"""Closed-form photophysics of a driven two-level molecule.

Covers the excitation line shape, saturation of the detected rate, power
broadening, the steady-state excited population, the resonant intensity
correlation with Rabi oscillations and the Poissonian background mixing
used to correct measured antibunching.

All functions accept scalars or numpy arrays for their sampled argument.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from fiberphoton.config import DriveField, TwoLevelEmitter
from fiberphoton.errors import EmitterModelError

logger = logging.getLogger(__name__)

ArrayLike = float | np.ndarray


@dataclass(frozen=True)
class SaturationModel:
    """Detected-rate saturation and power-broadening parameters.

    Attributes:
        r_inf: Asymptotic detected rate (counts/s).
        i_sat: Saturation input power (nW).
        gamma0: Zero-power FWHM, expressed in ``gamma0_unit``.
        gamma0_unit: Unit label of ``gamma0`` ("MHz" or "rad/s").
    """

    r_inf: float
    i_sat: float
    gamma0: float
    gamma0_unit: str = "MHz"

    def __post_init__(self) -> None:
        for name in ("r_inf", "i_sat", "gamma0"):
            if not getattr(self, name) > 0:
                raise EmitterModelError(f"{name} must be > 0")
        if self.gamma0_unit not in {"MHz", "rad/s"}:
            raise EmitterModelError(f"unknown linewidth unit {self.gamma0_unit!r}")


@dataclass(frozen=True)
class SignalBackground:
    """Signal and uncorrelated background rates of one detection channel."""

    signal_rate: float
    background_rate: float

    def __post_init__(self) -> None:
        if self.signal_rate < 0 or self.background_rate < 0:
            raise EmitterModelError("rates must be >= 0")
        if self.signal_rate + self.background_rate <= 0:
            raise EmitterModelError("signal and background cannot both be zero")

    @property
    def rho(self) -> float:
        """Signal fraction ``S / (S + B)``."""
        return self.signal_rate / (self.signal_rate + self.background_rate)

    @classmethod
    def from_rho(cls, signal_rate: float, rho: float) -> "SignalBackground":
        """Background rate that yields signal fraction ``rho``."""
        if not 0.0 < rho <= 1.0:
            raise EmitterModelError("rho must lie in (0, 1]")
        return cls(signal_rate=signal_rate, background_rate=signal_rate * (1.0 - rho) / rho)


@dataclass(frozen=True)
class CorrectedG2:
    """Background-corrected g2 value.

    ``value`` is never clamped; ``below_zero`` reports the statistically
    possible but unphysical negative case.
    """

    value: float
    below_zero: bool

    @property
    def clamped(self) -> float:
        return max(self.value, 0.0)


def lorentzian_line(
    omega: ArrayLike,
    omega0: float,
    fwhm: float,
    amplitude: float,
    offset: float = 0.0,
) -> ArrayLike:
    """Peak-normalized Lorentzian: ``offset + amplitude`` at ``omega0``."""
    if not fwhm > 0:
        raise EmitterModelError("fwhm must be > 0")
    if amplitude < 0:
        raise EmitterModelError("amplitude must be >= 0")
    half = 0.5 * fwhm
    detuning = np.asarray(omega, dtype=float) - omega0
    return offset + amplitude * half**2 / (detuning**2 + half**2)


def saturation_parameter(drive: DriveField, emitter: TwoLevelEmitter) -> float:
    return drive.saturation(emitter)


def drive_from_power(
    power_nw: float,
    i_sat_nw: float,
    emitter: TwoLevelEmitter,
    detuning: float = 0.0,
) -> DriveField:
    """Drive whose saturation parameter equals ``power_nw / i_sat_nw``."""
    if power_nw < 0 or not i_sat_nw > 0:
        raise EmitterModelError("power must be >= 0 and i_sat > 0")
    s = power_nw / i_sat_nw
    return DriveField(rabi=math.sqrt(s * emitter.gamma_par * emitter.gamma_perp), detuning=detuning)


def steady_state_population(drive: DriveField, emitter: TwoLevelEmitter) -> float:
    """Excited-state population of the driven emitter in steady state."""
    s = drive.saturation(emitter)
    g_perp = emitter.gamma_perp
    return 0.5 * s * g_perp**2 / (drive.detuning**2 + g_perp**2 * (1.0 + s))


def saturation_rate(i_in: ArrayLike, model: SaturationModel) -> ArrayLike:
    """Detected rate ``R_inf * I / (I_sat + I)`` for input power ``i_in`` (nW)."""
    i_in = np.asarray(i_in, dtype=float)
    if np.any(i_in < 0):
        raise EmitterModelError("input power must be >= 0")
    return model.r_inf * i_in / (model.i_sat + i_in)


def broadened_linewidth(s: ArrayLike, gamma0: float) -> ArrayLike:
    """Power-broadened FWHM ``gamma0 * sqrt(1 + s)``; ``s`` in saturation units."""
    s = np.asarray(s, dtype=float)
    if np.any(s < 0):
        raise EmitterModelError("saturation parameter must be >= 0")
    return gamma0 * np.sqrt(1.0 + s)


def analytic_g2(tau: ArrayLike, drive: DriveField, emitter: TwoLevelEmitter) -> ArrayLike:
    """Resonant intensity correlation of a single driven emitter.

    ``1 - [cos(W t) + (a / W) sin(W t)] exp(-a t)`` with ``a = (g_par + g_perp)/2``
    and ``W = sqrt(rabi^2 - ((g_par - g_perp)/2)^2)``. Below the oscillation
    threshold the hyperbolic continuation is used, and exactly at threshold
    the critically damped limit ``1 - (1 + a t) exp(-a t)``.

    Args:
        tau: Delay(s) in seconds; only ``|tau|`` matters.
        drive: Resonant drive (detuning must be zero).
        emitter: Emitter rates.

    Raises:
        EmitterModelError: For detuned drives or NaN delays.
    """
    if drive.detuning != 0.0:
        raise EmitterModelError("analytic g2 requires a resonant drive; use bloch_g2 for detuned drives")
    t = np.abs(np.asarray(tau, dtype=float))
    if np.any(np.isnan(t)):
        raise EmitterModelError("tau must not be NaN")
    a = 0.5 * (emitter.gamma_par + emitter.gamma_perp)
    w_sq = drive.rabi**2 - (0.5 * (emitter.gamma_par - emitter.gamma_perp)) ** 2
    if abs(w_sq) <= 1e-12 * a**2:
        envelope = (1.0 + a * t) * np.exp(-a * t)
    elif w_sq > 0:
        w = math.sqrt(w_sq)
        envelope = (np.cos(w * t) + (a / w) * np.sin(w * t)) * np.exp(-a * t)
    else:
        kappa = math.sqrt(-w_sq)
        # kappa < a, both exponentials decay
        envelope = 0.5 * (1.0 + a / kappa) * np.exp((kappa - a) * t) + 0.5 * (1.0 - a / kappa) * np.exp(
            -(kappa + a) * t
        )
    return 1.0 - envelope


def background_mix_g2(g2_pure: ArrayLike, rho: float) -> ArrayLike:
    """Measured g2 for a signal fraction ``rho`` on a Poissonian background."""
    if not 0.0 <= rho <= 1.0:
        raise EmitterModelError(f"rho must lie in [0, 1], got {rho!r}")
    return 1.0 - rho**2 + rho**2 * np.asarray(g2_pure, dtype=float)


def correct_g2_background(g2_meas: float, rho: float) -> CorrectedG2:
    """Invert :func:`background_mix_g2` for a measured value."""
    if not 0.0 < rho <= 1.0:
        raise EmitterModelError(f"rho must lie in (0, 1] for a correction, got {rho!r}")
    value = (float(g2_meas) - (1.0 - rho**2)) / rho**2
    if value < 0:
        logger.warning("background-corrected g2 is negative (%.4f)", value)
    return CorrectedG2(value=value, below_zero=value < 0)
