"""fiberphoton: modeling and analysis toolkit for fiber-coupled single-molecule photon sources.

The package covers dipole-to-fiber collection efficiency at a dielectric
interface, driven two-level photophysics, Monte-Carlo photon streams, time-tag
correlation into g2 histograms, curve fitting and spectral filter bookkeeping.
"""

__all__ = [
    "cli",
    "config",
    "errors",
]

__version__ = "0.1.0"
