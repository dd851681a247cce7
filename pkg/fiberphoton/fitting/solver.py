"""Damped least-squares (Levenberg-Marquardt) solver on transformed parameters.

The solver works in the unconstrained space produced by the model's
parameter transforms. A trial step solves ``(J^T J + lam * D) delta = -J^T r``
with ``D`` the diagonal of ``J^T J``; it is accepted only if the weighted
residual sum of squares decreases, after which the damping shrinks tenfold,
otherwise it grows tenfold. Parameters with a nonnegative transform are
projected back onto zero after every trial step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
from scipy import linalg

from fiberphoton.errors import FitError
from fiberphoton.fitting.models import NONNEGATIVE, FitModel, to_internal, to_natural

logger = logging.getLogger(__name__)

DAMPING_START = 1e-3
MAX_ITERATIONS = 500
STEP_TOL = 1e-8
GRADIENT_TOL = 1e-10
_POLISH_TOL = 1e-13
_DAMPING_MAX = 1e20


@dataclass
class SolverState:
    """Outcome of one solver run, still in the model's natural units."""

    params: np.ndarray
    covariance: np.ndarray
    rss: float
    iterations: int
    converged: bool
    gradient_norm: float
    condition_number: float
    cost_history: List[float] = field(default_factory=list)
    diagnostics: List[str] = field(default_factory=list)


class LevenbergMarquardt:
    """Weighted least-squares fit of one model to one data series.

    Args:
        model: Model to fit.
        x: Sample positions.
        y: Observations.
        sigma: Standard deviation per observation (all > 0).
        free: Mask of parameters to optimize; others stay at their start.
    """

    def __init__(
        self,
        model: FitModel,
        x: np.ndarray,
        y: np.ndarray,
        sigma: np.ndarray,
        free: Optional[np.ndarray] = None,
    ) -> None:
        self.model = model
        self.x = x
        self.y = y
        self.sigma = sigma
        self.free = np.ones(model.n_params, dtype=bool) if free is None else free
        self.clamped = np.array([kind == NONNEGATIVE for kind in model.transforms])

    def residuals(self, natural: np.ndarray) -> np.ndarray:
        with np.errstate(all="ignore"):
            return (self.model.evaluate(self.x, natural) - self.y) / self.sigma

    def _rss(self, natural: np.ndarray) -> float:
        try:
            r = self.residuals(natural)
        except (FitError, ValueError, ArithmeticError):
            return np.inf
        value = float(r @ r)
        return value if np.isfinite(value) else np.inf

    def jacobian(self, internal: np.ndarray) -> np.ndarray:
        """Residual Jacobian with respect to the free internal parameters."""
        natural, slopes = to_natural(internal, self.model.transforms)
        if self.model.jacobian is not None:
            jac = self.model.jacobian(self.x, natural) * slopes / self.sigma[:, None]
            return jac[:, self.free]
        columns = []
        for i in np.flatnonzero(self.free):
            step = 1e-6 * max(abs(internal[i]), 1.0)
            up = internal.copy()
            down = internal.copy()
            up[i] += step
            down[i] -= step
            r_up = self.residuals(to_natural(up, self.model.transforms)[0])
            r_down = self.residuals(to_natural(down, self.model.transforms)[0])
            columns.append((r_up - r_down) / (2.0 * step))
        return np.column_stack(columns)

    def run(self, start: np.ndarray, *, max_iter: int = MAX_ITERATIONS) -> SolverState:
        internal = to_internal(start, self.model.transforms)
        natural = to_natural(internal, self.model.transforms)[0]
        rss = self._rss(natural)
        if not np.isfinite(rss):
            raise FitError(f"{self.model.name}: model is not finite at the initial parameters")
        history = [rss]
        damping = DAMPING_START
        converged = False
        gradient_norm = np.inf
        iterations = 0
        jac = self.jacobian(internal)
        resid = self.residuals(natural)
        while iterations < max_iter:
            iterations += 1
            gradient = jac.T @ resid
            gradient_norm = float(np.linalg.norm(gradient))
            if gradient_norm < GRADIENT_TOL:
                converged = True
                break
            normal = jac.T @ jac
            scale = np.maximum(np.diag(normal), 1e-12 * max(float(np.max(np.diag(normal))), 1e-300))
            try:
                step = linalg.solve(normal + damping * np.diag(scale), -gradient, assume_a="sym")
            except linalg.LinAlgError:
                damping *= 10.0
                if damping > _DAMPING_MAX:
                    break
                continue
            trial = internal.copy()
            trial[self.free] += step
            trial[self.clamped] = np.maximum(trial[self.clamped], 0.0)
            moved = trial[self.free] - internal[self.free]
            relative = float(np.linalg.norm(moved) / (np.linalg.norm(internal[self.free]) + STEP_TOL))
            if relative < STEP_TOL:
                converged = True
            if relative < _POLISH_TOL:
                break
            trial_natural = to_natural(trial, self.model.transforms)[0]
            trial_rss = self._rss(trial_natural)
            if trial_rss < rss:
                internal, natural, rss = trial, trial_natural, trial_rss
                history.append(rss)
                damping = max(damping / 10.0, 1e-15)
                jac = self.jacobian(internal)
                resid = self.residuals(natural)
            else:
                damping *= 10.0
                if damping > _DAMPING_MAX:
                    break
        if not converged:
            logger.warning("%s fit stopped after %d iterations without converging", self.model.name, iterations)
        return self._finish(internal, natural, rss, iterations, converged, gradient_norm, history)

    def _finish(
        self,
        internal: np.ndarray,
        natural: np.ndarray,
        rss: float,
        iterations: int,
        converged: bool,
        gradient_norm: float,
        history: List[float],
    ) -> SolverState:
        diagnostics: List[str] = []
        jac = self.jacobian(internal)
        normal = jac.T @ jac
        n_free = int(self.free.sum())
        dof = max(self.y.size - n_free, 1)
        condition = float(np.linalg.cond(normal)) if n_free else 1.0
        if not np.isfinite(condition) or condition > 1e14:
            diagnostics.append(f"ill-conditioned covariance (condition number {condition:.3g})")
            inverse = np.linalg.pinv(normal)
        else:
            inverse = linalg.inv(normal)
        _, slopes = to_natural(internal, self.model.transforms)
        free_slopes = slopes[self.free]
        covariance = np.zeros((self.model.n_params, self.model.n_params))
        block = inverse * (rss / dof) * np.outer(free_slopes, free_slopes)
        covariance[np.ix_(self.free, self.free)] = block
        return SolverState(
            params=natural,
            covariance=covariance,
            rss=rss,
            iterations=iterations,
            converged=converged,
            gradient_norm=gradient_norm,
            condition_number=condition,
            cost_history=history,
            diagnostics=diagnostics,
        )
