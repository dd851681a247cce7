"""Run configuration documents validated with Pydantic.

Every physical quantity carries its unit in the key name. Frequencies in MHz
are ordinary frequencies and become angular frequencies when converted to
the domain models. Unknown keys are rejected and validation failures are
reported with the full dotted key path.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator

from fiberphoton.config import (
    SETUP_CORE_RADIUS_UM,
    SETUP_N_LOWER,
    SETUP_N_UPPER,
    SETUP_NA,
    SETUP_WAVELENGTH_NM,
    DriveField,
    SimConfig,
    TwoLevelEmitter,
    max_stable_dt,
    mhz_to_angular,
)
from fiberphoton.errors import ConfigError
from fiberphoton.io.tables import read_json
from fiberphoton.optics.interface import DipoleEmitter, DipoleOrientation, FiberSpec, OpticalInterface


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class InterfaceSection(_Section):
    n_upper: float = Field(..., ge=1.0, description="Index of the emitter medium.")
    n_lower: float = Field(..., ge=1.0, description="Index of the fiber medium.")

    def build(self) -> OpticalInterface:
        return OpticalInterface(self.n_upper, self.n_lower)


class DipoleSection(_Section):
    orientation: DipoleOrientation = Field(..., description="parallel, orthogonal or tilted.")
    height_um: float = Field(..., ge=0.0, description="Distance above the interface (um).")
    wavelength_nm: float = Field(SETUP_WAVELENGTH_NM, gt=0.0, description="Vacuum wavelength (nm).")
    tilt_deg: Optional[float] = Field(None, ge=0.0, le=90.0, description="Tilt from the normal (deg).")

    @model_validator(mode="after")
    def tilt_needed_for_tilted(self) -> "DipoleSection":
        if self.tilt_deg is None and self.orientation is DipoleOrientation.TILTED:
            raise ValueError("tilted dipoles need tilt_deg")
        return self

    def build(self) -> DipoleEmitter:
        tilt = None if self.tilt_deg is None else math.radians(self.tilt_deg)
        return DipoleEmitter(self.orientation, self.height_um, self.wavelength_nm, tilt)


class FiberSection(_Section):
    numerical_aperture: float = Field(..., gt=0.0, le=1.0, description="Fiber NA.")
    core_radius_um: float = Field(..., gt=0.0, description="Core radius (um).")
    n_core: float = Field(SETUP_N_LOWER, ge=1.0, description="Core index.")

    def build(self) -> FiberSpec:
        return FiberSpec(self.numerical_aperture, self.core_radius_um, self.n_core)


class EmitterSection(_Section):
    gamma_par_mhz: float = Field(..., gt=0.0, description="Population decay rate / 2pi (MHz).")
    gamma_perp_mhz: Optional[float] = Field(
        None, gt=0.0, description="Coherence decay rate / 2pi (MHz); lifetime limit when omitted."
    )

    @field_validator("gamma_perp_mhz")
    def dephasing_bound(cls, v: Optional[float], info: ValidationInfo) -> Optional[float]:
        gamma_par = info.data.get("gamma_par_mhz")
        if v is not None and gamma_par is not None and v < 0.5 * gamma_par * (1.0 - 1e-12):
            raise ValueError("gamma_perp_mhz must be >= gamma_par_mhz / 2")
        return v

    def build(self) -> TwoLevelEmitter:
        gamma_par = mhz_to_angular(self.gamma_par_mhz)
        if self.gamma_perp_mhz is None:
            return TwoLevelEmitter.fourier_limited(gamma_par)
        return TwoLevelEmitter(gamma_par, mhz_to_angular(self.gamma_perp_mhz))


class DriveSection(_Section):
    rabi_mhz: float = Field(..., ge=0.0, description="Rabi frequency / 2pi (MHz).")
    detuning_mhz: float = Field(0.0, description="Laser minus transition frequency (MHz).")

    def build(self) -> DriveField:
        return DriveField(mhz_to_angular(self.rabi_mhz), mhz_to_angular(self.detuning_mhz))


class SimSection(_Section):
    duration_s: float = Field(..., gt=0.0, description="Simulated time (s).")
    seed: int = Field(..., ge=0, lt=2**64, description="64-bit unsigned seed.")
    dt_ps: Optional[float] = Field(None, gt=0.0, description="Step (ps); largest stable step when omitted.")
    eta_det: float = Field(1.0, ge=0.0, le=1.0, description="Detection efficiency.")
    split_ratio: float = Field(0.5, ge=0.0, le=1.0, description="Probability of channel A.")
    bg_rate_a_cps: float = Field(0.0, ge=0.0, description="Background on channel A (counts/s).")
    bg_rate_b_cps: float = Field(0.0, ge=0.0, description="Background on channel B (counts/s).")
    dead_time_ns: float = Field(50.0, ge=0.0, description="Dead time per channel (ns).")
    resolution_ps: int = Field(1, ge=1, description="Timestamp quantum (ps).")


class CorrelateSection(_Section):
    bin_width_ps: int = Field(..., gt=0, description="Histogram bin width (ps).")
    range_ps: int = Field(..., gt=0, description="Half range of the histogram (ps).")

    @field_validator("range_ps")
    def width_divides_range(cls, v: int, info: ValidationInfo) -> int:
        width = info.data.get("bin_width_ps")
        if width is not None and (2 * v) % width:
            raise ValueError("bin_width_ps must divide 2 * range_ps")
        return v


class FitSection(_Section):
    model: str = Field(..., description="Registry name of the model.")
    init: Dict[str, float] = Field(default_factory=dict, description="Starting values by parameter name.")
    fixed: Dict[str, float] = Field(default_factory=dict, description="Held parameters by name.")
    gamma_ratio: float = Field(0.5, ge=0.5, description="gamma_perp / gamma_par for rabi_g2.")


class SpectraSection(_Section):
    cut_on_nm: float = Field(..., gt=0.0, description="Window cut-on (nm).")
    cut_off_nm: float = Field(..., gt=0.0, description="Window cut-off (nm).")
    objective: str = Field("sb", description="Window objective: sb or snr.")
    step_nm: float = Field(1.0, gt=0.0, description="Candidate edge spacing (nm).")

    @field_validator("cut_off_nm")
    def ordered(cls, v: float, info: ValidationInfo) -> float:
        cut_on = info.data.get("cut_on_nm")
        if cut_on is not None and v <= cut_on:
            raise ValueError("cut_off_nm must exceed cut_on_nm")
        return v

    @field_validator("objective")
    def known_objective(cls, v: str) -> str:
        if v not in {"sb", "snr"}:
            raise ValueError("objective must be 'sb' or 'snr'")
        return v


class RunConfig(_Section):
    """Top-level run document; every section is optional."""

    interface: Optional[InterfaceSection] = None
    dipole: Optional[DipoleSection] = None
    fiber: Optional[FiberSection] = None
    emitter: Optional[EmitterSection] = None
    drive: Optional[DriveSection] = None
    sim: Optional[SimSection] = None
    correlate: Optional[CorrelateSection] = None
    fit: Optional[FitSection] = None
    spectra: Optional[SpectraSection] = None

    def require(self, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"missing required section(s): {', '.join(missing)}")

    def interface_or_default(self) -> OpticalInterface:
        return self.interface.build() if self.interface else OpticalInterface(SETUP_N_UPPER, SETUP_N_LOWER)

    def fiber_or_default(self) -> FiberSpec:
        return self.fiber.build() if self.fiber else FiberSpec(SETUP_NA, SETUP_CORE_RADIUS_UM, SETUP_N_LOWER)

    def sim_config(self) -> SimConfig:
        """Build the simulator configuration from the emitter, drive and sim sections."""
        self.require("emitter", "drive", "sim")
        emitter = self.emitter.build()
        drive = self.drive.build()
        sim = self.sim
        dt = max_stable_dt(drive, emitter) if sim.dt_ps is None else sim.dt_ps * 1e-12
        return SimConfig(
            duration=sim.duration_s,
            dt=dt,
            seed=sim.seed,
            drive=drive,
            emitter=emitter,
            eta_det=sim.eta_det,
            split_ratio=sim.split_ratio,
            bg_rate_a=sim.bg_rate_a_cps,
            bg_rate_b=sim.bg_rate_b_cps,
            dead_time=sim.dead_time_ns * 1e-9,
            resolution=sim.resolution_ps,
        )


def format_validation_error(exc: ValidationError) -> str:
    """One line per failure, prefixed with the dotted key path."""
    lines = []
    for error in exc.errors():
        path = ".".join(str(part) for part in error["loc"]) or "<root>"
        lines.append(f"{path}: {error['msg']}")
    return "; ".join(lines)


def parse_run_config(data: dict) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(format_validation_error(exc)) from None


def load_run_config(path: Path) -> RunConfig:
    """Read and validate a JSON run document."""
    return parse_run_config(read_json(path))
