"""Optical Bloch equations of a driven two-level emitter in the rotating frame.

State vector ``(rho_ee, x, y)`` with ``rho_eg = x + i y``::

    d rho_ee / dt = -rabi * y - g_par * rho_ee
    d x / dt      = -g_perp * x - detuning * y
    d y / dt      = detuning * x - g_perp * y - (rabi / 2) * (1 - 2 rho_ee)

The intensity correlation follows from the quantum regression theorem: after
a detection the emitter is in the ground state, so ``g2(tau)`` is the
population regrowth ``rho_ee(|tau|) / rho_ee(inf)`` from ``(0, 0, 0)``.
"""

from __future__ import annotations

import logging

import numpy as np
from scipy import linalg

from fiberphoton.config import DriveField, TwoLevelEmitter
from fiberphoton.errors import EmitterModelError

logger = logging.getLogger(__name__)

_MAX_EIGEN_CONDITION = 1e8


def bloch_matrix(drive: DriveField, emitter: TwoLevelEmitter) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(M, b)`` with ``dv/dt = M v + b``."""
    rabi, delta = drive.rabi, drive.detuning
    g_par, g_perp = emitter.gamma_par, emitter.gamma_perp
    matrix = np.array(
        [
            [-g_par, 0.0, -rabi],
            [0.0, -g_perp, -delta],
            [rabi, delta, -g_perp],
        ]
    )
    source = np.array([0.0, 0.0, -0.5 * rabi])
    return matrix, source


def steady_state_vector(drive: DriveField, emitter: TwoLevelEmitter) -> np.ndarray:
    matrix, source = bloch_matrix(drive, emitter)
    return linalg.solve(matrix, -source)


def steady_state_bloch(drive: DriveField, emitter: TwoLevelEmitter) -> float:
    """Steady-state excited population solved from the Bloch matrix."""
    return float(steady_state_vector(drive, emitter)[0])


def bloch_g2(tau: float | np.ndarray, drive: DriveField, emitter: TwoLevelEmitter) -> np.ndarray:
    """Exact g2 for any detuning and dephasing.

    Raises:
        EmitterModelError: Without drive (the steady population vanishes) or
            for NaN delays.
    """
    if drive.rabi == 0:
        raise EmitterModelError("g2 is undefined without drive")
    t = np.abs(np.asarray(tau, dtype=float))
    if np.any(np.isnan(t)):
        raise EmitterModelError("tau must not be NaN")
    matrix, _ = bloch_matrix(drive, emitter)
    v_ss = steady_state_vector(drive, emitter)
    eigvals, eigvecs = linalg.eig(matrix)
    if np.linalg.cond(eigvecs) < _MAX_EIGEN_CONDITION:
        coeffs = linalg.solve(eigvecs, -v_ss.astype(complex))
        modes = np.exp(np.multiply.outer(t, eigvals))
        deviation = (modes * (eigvecs[0] * coeffs)).sum(axis=-1).real
    else:
        # degenerate eigenvectors near the oscillation threshold
        logger.debug("falling back to matrix exponentials for g2")
        flat = t.ravel()
        deviation = np.array([-(linalg.expm(matrix * x) @ v_ss)[0] for x in flat]).reshape(t.shape)
    return (v_ss[0] + deviation) / v_ss[0]
