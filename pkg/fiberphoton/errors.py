"""Error types shared across the toolkit.

Every module raises its own subclass so the CLI can report failures with a
module-qualified message (``interface_optics: height must be >= 0``).
"""

from __future__ import annotations


class FiberPhotonError(ValueError):
    """Base class for precondition and numeric failures raised by the toolkit."""

    module = "fiberphoton"

    def qualified(self) -> str:
        """Return the message prefixed with the owning module name."""
        return f"{self.module}: {self}"


class InterfaceOpticsError(FiberPhotonError):
    """Raised for invalid optical geometry (indices, orientation, distances)."""

    module = "interface_optics"


class EmitterModelError(FiberPhotonError):
    """Raised for invalid photophysical parameters."""

    module = "emitter_model"


class SimulationError(FiberPhotonError):
    """Raised when a simulation configuration violates its invariants."""

    module = "stream_sim"


class CorrelatorError(FiberPhotonError):
    """Raised for unsorted streams or incompatible histogram geometry."""

    module = "correlator"


class FitError(FiberPhotonError):
    """Raised for data that cannot be fitted (too few points, degenerate x)."""

    module = "fitkit"


class SpectraError(FiberPhotonError):
    """Raised for malformed spectra or filter windows."""

    module = "spectra"


class TagFormatError(FiberPhotonError):
    """Raised when a tag file is malformed or has an unknown layout."""

    module = "tags"


class ConfigError(FiberPhotonError):
    """Raised when a run configuration document fails validation."""

    module = "config"
