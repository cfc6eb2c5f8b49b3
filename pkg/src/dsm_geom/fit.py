"""The model map: minimise theta -> D(x || m_theta) over the chart."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DataSet, ModelDefinition, as_coords, evaluate_divergence
from .core import divergence_gradient, divergence_hessian
from .errors import NoConvergence

GRAD_TOL = 1e-9
MAX_ITER = 200
ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
DOMAIN_MARGIN = 1e-9


@dataclass(frozen=True)
class FitResult:
    theta_star: np.ndarray
    divergence_value: float
    gradient_norm: float
    iterations: int
    converged: bool


def _descent_direction(grad, hess):
    """Newton step when the Hessian is PD, else steepest descent."""
    try:
        chol = np.linalg.cholesky(hess)
        step = np.linalg.solve(chol.T, np.linalg.solve(chol, -grad))
        return step, True
    except np.linalg.LinAlgError:
        norm = np.linalg.norm(grad)
        return -grad / max(norm, 1.0), False


def fit(
    model: ModelDefinition,
    x: DataSet,
    theta0,
    grad_tol: float = GRAD_TOL,
    max_iter: int = MAX_ITER,
) -> FitResult:
    """Damped Newton with Armijo backtracking, projected into the chart."""
    chart = model.chart
    theta = chart.require(theta0).copy()
    value = evaluate_divergence(model, x, theta)
    for iteration in range(max_iter):
        grad = divergence_gradient(model, x, theta)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= grad_tol:
            hess = divergence_hessian(model, x, theta)
            try:
                np.linalg.cholesky(hess)
            except np.linalg.LinAlgError:
                raise NoConvergence(
                    f"stationary point of {model.name} at {theta.tolist()} is "
                    "not a local minimum",
                    reason="SaddleOrMax",
                    result=FitResult(theta, value, gnorm, iteration, False),
                )
            return FitResult(theta, value, gnorm, iteration, True)
        hess = divergence_hessian(model, x, theta)
        direction, newton = _descent_direction(grad, hess)
        slope = float(grad @ direction)
        if slope >= 0:  # fall back if curvature information misleads
            direction = -grad / max(np.linalg.norm(grad), 1.0)
            slope = float(grad @ direction)
        step = 1.0
        for _ in range(60):
            candidate = chart.clip_inside(theta + step * direction, DOMAIN_MARGIN)
            new_value = evaluate_divergence(model, x, candidate)
            if new_value <= value + ARMIJO_C * step * slope:
                break
            step *= ARMIJO_SHRINK
        else:
            raise NoConvergence(
                f"line search stalled for {model.name} at {theta.tolist()}",
                reason="stalled",
                result=FitResult(theta, value, gnorm, iteration, False),
            )
        theta, value = candidate, new_value
    grad = divergence_gradient(model, x, theta)
    gnorm = float(np.max(np.abs(grad)))
    if gnorm <= grad_tol:
        return FitResult(theta, value, gnorm, max_iter, True)
    raise NoConvergence(
        f"fit of {model.name} did not converge in {max_iter} iterations",
        reason="max_iter",
        result=FitResult(theta, value, gnorm, max_iter, False),
    )


def closed_form_fit(model: ModelDefinition, x: DataSet) -> np.ndarray:
    """Exact model map from the worked-example formulas, when available."""
    return model.closed_form_fit(x)


def fit_from_closed_form(model: ModelDefinition, x: DataSet, **kwargs) -> FitResult:
    """Run the iterative fit seeded at the closed-form solution."""
    start = model.closed_form_fit(x)
    return fit(model, x, as_coords(start), **kwargs)
