"""Far-field dipole emission at a planar dielectric interface and fiber collection.

The emitter sits in the upper medium at height ``d`` above the interface; the
fiber core fills the lower medium. Far-field densities are obtained by
reciprocity: a plane wave arriving from the observation direction is
reflected (upper hemisphere) or transmitted (lower hemisphere) by the
interface and projected on the dipole. Densities are normalized so that a
dipole in a homogeneous medium of index ``n_upper`` radiates a total power of
exactly 1; hemisphere fractions divide by the far-field power summed over
both hemispheres.

Collection efficiencies divide by the incoherent power of the propagating
waves instead: the direct and reflected waves are added without their
interference term and the near-field coupled band of the fiber side is left
out. That reference does not depend on the height.

Polar angles are measured from the hemisphere axis: ``theta = 0`` points away
from the interface in the upper hemisphere and into the fiber in the lower one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from fiberphoton.errors import InterfaceOpticsError

logger = logging.getLogger(__name__)

# Normalization of the free dipole density: integral over the sphere equals 1.
_K = 3.0 / (8.0 * math.pi)
DEFAULT_MIN_POINTS = 4096
_MAX_POINTS = 1 << 17
_REFINE_RTOL = 1e-7


class DipoleOrientation(str, Enum):
    PARALLEL = "parallel"
    ORTHOGONAL = "orthogonal"
    TILTED = "tilted"


class Hemisphere(str, Enum):
    UPPER = "upper"
    LOWER = "lower"


@dataclass(frozen=True)
class OpticalInterface:
    """Planar boundary between the emitter medium and the fiber medium.

    Attributes:
        n_upper: Refractive index on the emitter side.
        n_lower: Refractive index on the fiber side.
    """

    n_upper: float
    n_lower: float

    def __post_init__(self) -> None:
        for name in ("n_upper", "n_lower"):
            value = getattr(self, name)
            if isinstance(value, complex) or not math.isfinite(value) or value < 1.0:
                raise InterfaceOpticsError(f"{name} must be a real index >= 1, got {value!r}")


@dataclass(frozen=True)
class DipoleEmitter:
    """Point dipole on the fiber axis.

    Attributes:
        orientation: Parallel, orthogonal or tilted with respect to the
            interface plane.
        height_um: Distance above the interface in micrometers.
        wavelength_nm: Vacuum emission wavelength in nanometers.
        tilt_rad: Angle from the interface normal for tilted dipoles; ignored
            (and derived) for the two principal orientations.
    """

    orientation: DipoleOrientation = DipoleOrientation.PARALLEL
    height_um: float = 0.0
    wavelength_nm: float = 589.0
    tilt_rad: Optional[float] = None

    def __post_init__(self) -> None:
        try:
            orientation = DipoleOrientation(self.orientation)
        except ValueError as exc:
            raise InterfaceOpticsError(f"unknown orientation {self.orientation!r}") from exc
        object.__setattr__(self, "orientation", orientation)
        if not self.height_um >= 0 or math.isinf(self.height_um):
            raise InterfaceOpticsError("height must be a finite value >= 0")
        if not self.wavelength_nm > 0 or math.isinf(self.wavelength_nm):
            raise InterfaceOpticsError("wavelength must be > 0")
        if orientation is DipoleOrientation.TILTED:
            if self.tilt_rad is None:
                raise InterfaceOpticsError("tilted dipoles need tilt_rad")
            if not 0.0 <= self.tilt_rad <= math.pi / 2:
                raise InterfaceOpticsError(f"tilt angle must lie in [0, pi/2], got {self.tilt_rad!r}")

    @classmethod
    def tilted(cls, alpha: float, height_um: float = 0.0, wavelength_nm: float = 589.0) -> "DipoleEmitter":
        return cls(DipoleOrientation.TILTED, height_um, wavelength_nm, alpha)

    @property
    def alpha(self) -> float:
        """Angle between the dipole and the interface normal (radians)."""
        if self.orientation is DipoleOrientation.PARALLEL:
            return math.pi / 2
        if self.orientation is DipoleOrientation.ORTHOGONAL:
            return 0.0
        return float(self.tilt_rad)

    @property
    def weights(self) -> tuple[float, float]:
        """Power weights ``(parallel, orthogonal)`` = ``(sin^2 a, cos^2 a)``."""
        if self.orientation is DipoleOrientation.PARALLEL:
            return (1.0, 0.0)
        if self.orientation is DipoleOrientation.ORTHOGONAL:
            return (0.0, 1.0)
        return (math.sin(self.alpha) ** 2, math.cos(self.alpha) ** 2)

    def at_height(self, height_um: float) -> "DipoleEmitter":
        return replace(self, height_um=height_um)

    def phase_depth(self) -> float:
        """Vacuum wavenumber times height (dimensionless)."""
        return 2.0 * math.pi / (self.wavelength_nm * 1e-3) * self.height_um


@dataclass(frozen=True)
class FiberSpec:
    """Step-index fiber facet treated as a sharp disk.

    Attributes:
        numerical_aperture: NA in (0, 1].
        core_radius_um: Core radius in micrometers.
        n_core: Core refractive index.
    """

    numerical_aperture: float
    core_radius_um: float
    n_core: float

    def __post_init__(self) -> None:
        if not 0.0 < self.numerical_aperture <= 1.0:
            raise InterfaceOpticsError("numerical aperture must lie in (0, 1]")
        if not self.core_radius_um > 0:
            raise InterfaceOpticsError("core radius must be > 0")
        if self.numerical_aperture > self.n_core:
            raise InterfaceOpticsError("numerical aperture cannot exceed the core index")


@dataclass(frozen=True, eq=False)
class AngularPattern:
    """Far-field power density per unit solid angle over one hemisphere.

    The azimuth dependence is ``density + anisotropy * cos(2 phi)``, with
    ``phi`` measured from the in-plane dipole projection.

    Attributes:
        hemisphere: Which half-space the pattern describes.
        theta: Polar grid on [0, pi/2] (radians).
        density: Azimuth-averaged density on ``theta``.
        anisotropy: ``cos(2 phi)`` coefficient on ``theta``.
        total_power: Far-field power summed over both hemispheres.
    """

    hemisphere: Hemisphere
    theta: np.ndarray
    density: np.ndarray
    anisotropy: np.ndarray
    total_power: float

    @property
    def power(self) -> float:
        """Power radiated into this hemisphere."""
        return float(2.0 * math.pi * trapezoid(self.density * np.sin(self.theta), self.theta))

    def density_at(self, theta: float | np.ndarray, phi: float | np.ndarray | None = None) -> np.ndarray:
        """Interpolate the density; azimuth-averaged when ``phi`` is None."""
        avg = np.interp(theta, self.theta, self.density)
        if phi is None:
            return avg
        return avg + np.interp(theta, self.theta, self.anisotropy) * np.cos(2.0 * np.asarray(phi))

    def cone_power(self, half_angle: float) -> float:
        """Power inside a cone of the given half-angle around the axis."""
        half_angle = min(max(half_angle, 0.0), float(self.theta[-1]))
        inside = self.theta < half_angle
        theta = np.append(self.theta[inside], half_angle)
        density = np.append(self.density[inside], np.interp(half_angle, self.theta, self.density))
        if theta.size < 2:
            return 0.0
        return float(2.0 * math.pi * trapezoid(density * np.sin(theta), theta))


@dataclass(frozen=True)
class SweepRow:
    """One distance of an efficiency sweep."""

    distance_um: float
    eta_parallel: float
    eta_orthogonal: float
    eta_spherical: float


def _principal_sqrt(arg: np.ndarray) -> np.ndarray:
    root = np.sqrt(np.asarray(arg, dtype=complex))
    return np.where(root.imag < 0, -root, root)


def _upper_components(theta: np.ndarray, n1: float, n2: float, k0d: float, coherent: bool = True) -> np.ndarray:
    """Rows: parallel average, parallel cos(2 phi) term, orthogonal."""
    c = np.cos(theta)
    s = np.sin(theta)
    kz1 = n1 * c
    kz2 = _principal_sqrt(n2**2 - (n1 * s) ** 2)
    r_s = (kz1 - kz2) / (kz1 + kz2)
    r_p = (n2**2 * kz1 - n1**2 * kz2) / (n2**2 * kz1 + n1**2 * kz2)
    if coherent:
        phase = np.exp(2j * k0d * n1 * c)
        p_part = c**2 * np.abs(1.0 - r_p * phase) ** 2
        s_part = np.abs(1.0 + r_s * phase) ** 2
        orth = s**2 * np.abs(1.0 + r_p * phase) ** 2
    else:
        p_part = c**2 * (1.0 + np.abs(r_p) ** 2)
        s_part = 1.0 + np.abs(r_s) ** 2
        orth = s**2 * (1.0 + np.abs(r_p) ** 2)
    return _K * np.vstack([(p_part + s_part) / 2.0, (p_part - s_part) / 2.0, orth])


def _lower_components(theta: np.ndarray, n1: float, n2: float, k0d: float) -> np.ndarray:
    c2 = np.cos(theta)
    s1 = n2 * np.sin(theta) / n1
    c1 = _principal_sqrt(1.0 - s1**2)
    kz1 = n1 * c1
    kz2 = n2 * c2
    t_s = 2.0 * kz2 / (kz2 + kz1)
    t_p = 2.0 * n1 * n2 * kz2 / (n1**2 * kz2 + n2**2 * kz1)
    decay = np.exp(-2.0 * k0d * kz1.imag)
    scale = _K * (n2 / n1) * decay
    p_part = np.abs(c1 * t_p) ** 2
    s_part = np.abs(t_s) ** 2
    orth = np.abs(s1 * t_p) ** 2
    return scale * np.vstack([(p_part + s_part) / 2.0, (p_part - s_part) / 2.0, orth])


def _kink_angle(hemisphere: Hemisphere, n1: float, n2: float) -> Optional[float]:
    if hemisphere is Hemisphere.UPPER and n2 < n1:
        return math.asin(n2 / n1)
    if hemisphere is Hemisphere.LOWER and n1 < n2:
        return math.asin(n1 / n2)
    return None


def _theta_grid(start: float, stop: float, kink: Optional[float], n_points: int) -> np.ndarray:
    edges = [start]
    if kink is not None and start < kink < stop:
        edges.append(kink)
    edges.append(stop)
    span = stop - start
    pieces = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        count = max(int(math.ceil(n_points * (hi - lo) / span)), 2)
        pieces.append(np.linspace(lo, hi, count))
    return np.concatenate([pieces[0]] + [p[1:] for p in pieces[1:]])


def _components(
    hemisphere: Hemisphere, theta: np.ndarray, interface: OpticalInterface, k0d: float, coherent: bool = True
) -> np.ndarray:
    if hemisphere is Hemisphere.UPPER:
        return _upper_components(theta, interface.n_upper, interface.n_lower, k0d, coherent)
    return _lower_components(theta, interface.n_upper, interface.n_lower, k0d)


def _integrate(
    hemisphere: Hemisphere,
    stop: float,
    interface: OpticalInterface,
    k0d: float,
    min_points: int,
    coherent: bool = True,
) -> np.ndarray:
    """Refined trapezoid power ``(parallel, orthogonal)`` over ``[0, stop]``."""
    if stop <= 0.0:
        return np.zeros(2)
    kink = _kink_angle(hemisphere, interface.n_upper, interface.n_lower)

    def evaluate(n_points: int) -> np.ndarray:
        theta = _theta_grid(0.0, stop, kink, n_points)
        comps = _components(hemisphere, theta, interface, k0d, coherent)[[0, 2]]
        return 2.0 * math.pi * trapezoid(comps * np.sin(theta), theta, axis=1)

    n_points = min_points
    previous = evaluate(n_points)
    while n_points < _MAX_POINTS:
        n_points *= 2
        current = evaluate(n_points)
        scale = np.maximum(np.abs(current), 1e-300)
        if np.max(np.abs(current - previous) / scale) < _REFINE_RTOL:
            return current
        previous = current
    logger.debug("quadrature stopped at %d points on %s hemisphere", n_points, hemisphere.value)
    return previous


@lru_cache(maxsize=64)
def _reference_power(interface: OpticalInterface, min_points: int) -> np.ndarray:
    """Incoherent propagating power ``(parallel, orthogonal)``; height-independent."""
    upper = _integrate(Hemisphere.UPPER, math.pi / 2, interface, 0.0, min_points, coherent=False)
    lower_stop = math.pi / 2
    if interface.n_upper < interface.n_lower:
        lower_stop = math.asin(interface.n_upper / interface.n_lower)
    lower = _integrate(Hemisphere.LOWER, lower_stop, interface, 0.0, min_points)
    reference = upper + lower
    reference.setflags(write=False)
    return reference


def critical_angle(interface: OpticalInterface) -> Optional[float]:
    """Total-internal-reflection angle on the emitter side, None without TIR."""
    if interface.n_lower >= interface.n_upper:
        return None
    return math.asin(interface.n_lower / interface.n_upper)


def radiated_pattern(
    dipole: DipoleEmitter,
    interface: OpticalInterface,
    *,
    n_theta: int = DEFAULT_MIN_POINTS,
) -> tuple[AngularPattern, AngularPattern]:
    """Compute the upper and lower far-field patterns of a dipole.

    Args:
        dipole: Emitter orientation, height and wavelength.
        interface: Indices of the emitter and fiber media.
        n_theta: Minimum number of polar samples per hemisphere; the grid is
            doubled until the summed hemisphere powers settle.

    Returns:
        ``(upper, lower)`` patterns sharing the same ``total_power``.
    """
    if n_theta < 16:
        raise InterfaceOpticsError("n_theta must be >= 16")
    k0d = dipole.phase_depth()
    w_par, w_orth = dipole.weights
    weights = np.array([w_par, w_par, w_orth])

    def build(n_points: int) -> list[tuple[Hemisphere, np.ndarray, np.ndarray, np.ndarray]]:
        out = []
        for hemisphere in (Hemisphere.UPPER, Hemisphere.LOWER):
            kink = _kink_angle(hemisphere, interface.n_upper, interface.n_lower)
            theta = _theta_grid(0.0, math.pi / 2, kink, n_points)
            comps = _components(hemisphere, theta, interface, k0d)
            density = weights[0] * comps[0] + weights[2] * comps[2]
            out.append((hemisphere, theta, density, weights[1] * comps[1]))
        return out

    def powers(parts) -> np.ndarray:
        return np.array([2.0 * math.pi * trapezoid(d * np.sin(t), t) for _, t, d, _ in parts])

    n_points = n_theta
    parts = build(n_points)
    previous = powers(parts)
    while n_points < _MAX_POINTS:
        candidate = build(n_points * 2)
        current = powers(candidate)
        n_points *= 2
        parts = candidate
        if abs(current.sum() - previous.sum()) < _REFINE_RTOL * current.sum():
            break
        previous = current
    total = float(powers(parts).sum())
    logger.debug("pattern for %s dipole at %.3f um on %d points", dipole.orientation.value, dipole.height_um, n_points)
    upper, lower = (
        AngularPattern(hemisphere=h, theta=t, density=d, anisotropy=a, total_power=total) for h, t, d, a in parts
    )
    return upper, lower


def hemisphere_fraction(pattern: AngularPattern) -> float:
    """Share of the total far-field power carried by ``pattern``."""
    if not pattern.total_power > 0:
        raise InterfaceOpticsError("pattern is not normalized (total_power <= 0)")
    return min(max(pattern.power / pattern.total_power, 0.0), 1.0)


def acceptance_half_angle(fiber: FiberSpec, distance_um: float) -> float:
    """Half-angle of the cone the fiber core collects from an on-axis point.

    The NA limits the cone close to the facet and the core's solid angle
    limits it beyond ``cutoff_distance(fiber)``.
    """
    if not distance_um >= 0:
        raise InterfaceOpticsError("distance must be >= 0")
    na_angle = math.asin(fiber.numerical_aperture)
    if distance_um == 0:
        return na_angle
    return min(na_angle, math.atan(fiber.core_radius_um / distance_um))


def cutoff_distance(fiber: FiberSpec) -> float:
    """Distance (um) beyond which the core size, not the NA, limits collection."""
    return fiber.core_radius_um / math.tan(math.asin(fiber.numerical_aperture))


def spherical_collection_efficiency(fiber: FiberSpec, distance_um: float) -> float:
    """Collected fraction for an isotropic emitter: ``(1 - cos a) / 2``."""
    return (1.0 - math.cos(acceptance_half_angle(fiber, distance_um))) / 2.0


def _cone_power(dipole: DipoleEmitter, interface: OpticalInterface, fiber: FiberSpec, min_points: int) -> np.ndarray:
    """``(parallel, orthogonal)`` power inside the acceptance cone at the dipole's height."""
    acceptance = acceptance_half_angle(fiber, dipole.height_um)
    return _integrate(Hemisphere.LOWER, acceptance, interface, dipole.phase_depth(), min_points)


def collection_efficiency(
    dipole: DipoleEmitter,
    interface: OpticalInterface,
    fiber: FiberSpec,
    *,
    min_points: int = DEFAULT_MIN_POINTS,
) -> float:
    """Fraction of the emitted power entering the fiber core.

    The lower-hemisphere density is integrated over the acceptance cone at
    the dipole's height and divided by the incoherent propagating power (see
    the module notes), so the result never grows with the height.
    """
    cone = _cone_power(dipole, interface, fiber, min_points)
    weights = np.array(dipole.weights)
    reference = _reference_power(interface, min_points)
    return float(np.clip(weights @ cone / (weights @ reference), 0.0, 1.0))


def orientation_averaged_efficiency(
    interface: OpticalInterface,
    fiber: FiberSpec,
    height_um: float,
    wavelength_nm: float = 589.0,
    *,
    min_points: int = DEFAULT_MIN_POINTS,
) -> float:
    """Collection efficiency of an isotropically oriented dipole."""
    magic = math.acos(1.0 / math.sqrt(3.0))
    dipole = DipoleEmitter.tilted(magic, height_um, wavelength_nm)
    return collection_efficiency(dipole, interface, fiber, min_points=min_points)


def check_monotone_efficiency(rows: Sequence[SweepRow], *, rtol: float = 1e-9) -> None:
    """Raise if any efficiency column grows with distance anywhere in ``rows``."""
    for previous, current in zip(rows[:-1], rows[1:]):
        for name in ("eta_parallel", "eta_orthogonal", "eta_spherical"):
            before = getattr(previous, name)
            after = getattr(current, name)
            if after > before * (1.0 + rtol) + 1e-15:
                raise InterfaceOpticsError(
                    f"{name} increases between {previous.distance_um:.4g} um and {current.distance_um:.4g} um"
                )


def efficiency_sweep(
    template: DipoleEmitter,
    interface: OpticalInterface,
    fiber: FiberSpec,
    d_min: float,
    d_max: float,
    n_points: int,
    *,
    min_points: int = DEFAULT_MIN_POINTS,
) -> List[SweepRow]:
    """Tabulate parallel, orthogonal and spherical efficiencies versus distance.

    Only the wavelength of ``template`` is used; both principal orientations
    are evaluated at every distance.
    """
    if n_points < 2:
        raise InterfaceOpticsError("n_points must be >= 2")
    if not 0 <= d_min < d_max or math.isinf(d_max):
        raise InterfaceOpticsError("distance range must satisfy 0 <= d_min < d_max")
    logger.info("sweeping %d distances from %.3f to %.3f um", n_points, d_min, d_max)
    reference = _reference_power(interface, min_points)
    rows = []
    for distance in np.linspace(d_min, d_max, n_points):
        dipole = template.at_height(float(distance))
        eta = np.clip(_cone_power(dipole, interface, fiber, min_points) / reference, 0.0, 1.0)
        rows.append(
            SweepRow(
                distance_um=float(distance),
                eta_parallel=float(eta[0]),
                eta_orthogonal=float(eta[1]),
                eta_spherical=spherical_collection_efficiency(fiber, float(distance)),
            )
        )
    check_monotone_efficiency(rows)
    return rows
