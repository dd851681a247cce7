"""Shared configuration and data models used across the toolkit.

Rates are angular frequencies (rad/s) and times are seconds unless a field
name carries another unit. Defaults of the reference setup are collected at the bottom
so that the CLI, the simulator and the tests agree on them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from fiberphoton.errors import EmitterModelError, SimulationError

TWO_PI = 2.0 * math.pi


def mhz_to_angular(value_mhz: float) -> float:
    """Convert an ordinary frequency in MHz to an angular frequency in rad/s."""
    return TWO_PI * value_mhz * 1e6


def angular_to_mhz(value: float) -> float:
    """Convert an angular frequency in rad/s to an ordinary frequency in MHz."""
    return value / (TWO_PI * 1e6)


@dataclass(frozen=True)
class TwoLevelEmitter:
    """Photophysical rates of a two-level molecule.

    Attributes:
        gamma_par: Population decay rate (rad/s), strictly positive.
        gamma_perp: Coherence decay rate (rad/s); at least ``gamma_par / 2``.
            Equality is the Fourier-limited case.
        omega0: Transition angular frequency (rad/s); only used for line
            positions, all dynamics run in the rotating frame.
    """

    gamma_par: float
    gamma_perp: float
    omega0: float = 0.0

    def __post_init__(self) -> None:
        if not self.gamma_par > 0:
            raise EmitterModelError("gamma_par must be > 0")
        # small slack so gamma_par / 2 computed elsewhere is accepted
        if self.gamma_perp < 0.5 * self.gamma_par * (1.0 - 1e-12):
            raise EmitterModelError("gamma_perp must be >= gamma_par / 2")

    @classmethod
    def fourier_limited(cls, gamma_par: float, omega0: float = 0.0) -> "TwoLevelEmitter":
        """Build an emitter without pure dephasing (gamma_perp = gamma_par / 2)."""
        return cls(gamma_par=gamma_par, gamma_perp=0.5 * gamma_par, omega0=omega0)

    @property
    def pure_dephasing(self) -> float:
        """Extra coherence decay on top of the lifetime limit (rad/s)."""
        return max(self.gamma_perp - 0.5 * self.gamma_par, 0.0)

    @property
    def zero_power_fwhm(self) -> float:
        """Low-power absorption FWHM (rad/s), ``2 * gamma_perp``."""
        return 2.0 * self.gamma_perp


@dataclass(frozen=True)
class DriveField:
    """Coherent resonant drive.

    Attributes:
        rabi: Rabi angular frequency (rad/s), >= 0.
        detuning: Laser minus transition angular frequency (rad/s).
    """

    rabi: float
    detuning: float = 0.0

    def __post_init__(self) -> None:
        if not self.rabi >= 0 or math.isinf(self.rabi):
            raise EmitterModelError("rabi must be a finite value >= 0")
        if not math.isfinite(self.detuning):
            raise EmitterModelError("detuning must be finite")

    def saturation(self, emitter: TwoLevelEmitter) -> float:
        """Saturation parameter ``s = rabi**2 / (gamma_par * gamma_perp)``."""
        return self.rabi**2 / (emitter.gamma_par * emitter.gamma_perp)


@dataclass(frozen=True)
class SimConfig:
    """Monte-Carlo run definition for the photon-stream simulator.

    Attributes:
        duration: Simulated time (s), > 0.
        dt: Integration step (s); must satisfy the stability bound
            ``dt <= 0.01 / max(rabi, gamma_par, gamma_perp, |detuning|)``.
        seed: 64-bit unsigned seed; the full output depends only on
            (seed, dt, duration) and the physical parameters.
        drive: Coherent drive.
        emitter: Emitter rates.
        eta_det: Total detection efficiency in [0, 1].
        split_ratio: Probability that a detected photon goes to channel A.
        bg_rate_a: Poissonian background on channel A (counts/s).
        bg_rate_b: Poissonian background on channel B (counts/s).
        dead_time: Per-channel detector dead time (s).
        resolution: Timestamp quantum (integer picoseconds, >= 1).
    """

    duration: float
    dt: float
    seed: int
    drive: DriveField
    emitter: TwoLevelEmitter
    eta_det: float = 1.0
    split_ratio: float = 0.5
    bg_rate_a: float = 0.0
    bg_rate_b: float = 0.0
    dead_time: float = 50e-9
    resolution: int = 1
    chunk_steps: int = field(default=1 << 20, compare=False)

    def __post_init__(self) -> None:
        if not self.duration > 0:
            raise SimulationError("duration must be > 0")
        if not self.dt > 0:
            raise SimulationError("dt must be > 0")
        if self.dt > max_stable_dt(self.drive, self.emitter) * (1.0 + 1e-12):
            raise SimulationError(
                f"dt={self.dt:.3e} s violates the stability bound "
                f"{max_stable_dt(self.drive, self.emitter):.3e} s"
            )
        if not 0 <= self.seed < 2**64:
            raise SimulationError("seed must be a 64-bit unsigned integer")
        for name in ("eta_det", "split_ratio"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise SimulationError(f"{name} must be in [0, 1]")
        for name in ("bg_rate_a", "bg_rate_b", "dead_time"):
            if getattr(self, name) < 0:
                raise SimulationError(f"{name} must be >= 0")
        if int(self.resolution) != self.resolution or self.resolution < 1:
            raise SimulationError("resolution must be an integer number of picoseconds >= 1")

    @property
    def n_steps(self) -> int:
        """Number of integration steps covering ``duration``."""
        return int(round(self.duration / self.dt))

    @property
    def duration_ps(self) -> int:
        return int(round(self.duration * 1e12))

    def cache_key(self) -> str:
        """Return a short string usable in output file naming."""
        return (
            f"seed{self.seed}"
            f"-dur{self.duration:.3g}"
            f"-rabi{angular_to_mhz(self.drive.rabi):.1f}"
            f"-eta{self.eta_det:.2f}"
        )


def max_stable_dt(drive: DriveField, emitter: TwoLevelEmitter) -> float:
    """Largest integration step allowed for a drive/emitter pair (s)."""
    fastest = max(drive.rabi, emitter.gamma_par, emitter.gamma_perp, abs(drive.detuning))
    return 0.01 / fastest


# Defaults of the reference fiber setup
SETUP_N_UPPER = 1.53
SETUP_N_LOWER = 1.501
SETUP_WAVELENGTH_NM = 589.0
SETUP_NA = 0.41
SETUP_CORE_RADIUS_UM = 1.2
STANDARD_FIBER_NA = 0.13
SETUP_RABI = mhz_to_angular(42.0)
SETUP_GAMMA_PAR = mhz_to_angular(17.0)
SETUP_RHO = 0.8
SETUP_GAMMA0_MHZ = 28.5
SETUP_I_SAT_NW = 60.0
SETUP_R_INF_CPS = 50e3
SETUP_LONG_PASS_NM = 626.0
SETUP_SHORT_PASS_NM = 678.0
