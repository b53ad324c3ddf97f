"""Central finite differences for log-likelihood gradients and Hessians."""

from typing import Callable, Optional

import numpy as np

Objective = Callable[[np.ndarray], float]


def _steps(x: np.ndarray, rel_step: float) -> np.ndarray:
    return rel_step * np.maximum(1.0, np.abs(x))


def central_gradient(func: Objective, x: np.ndarray, rel_step: float = 1e-5) -> np.ndarray:
    """
    Central-difference gradient.

    Args:
        func: Scalar function of a parameter vector.
        x: Evaluation point.
        rel_step: Step relative to max(1, |x_j|).

    Returns:
        Gradient vector with the shape of x.
    """
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel_step)
    grad = np.empty_like(x)
    for j in range(x.shape[0]):
        e = np.zeros_like(x)
        e[j] = h[j]
        grad[j] = (func(x + e) - func(x - e)) / (2.0 * h[j])
    return grad


def central_hessian(
    func: Objective, x: np.ndarray, rel_step: float = 1e-3, f0: Optional[float] = None
) -> np.ndarray:
    """
    Hessian by central second differences.

    Diagonal entries use (f(x+h) - 2f(x) + f(x-h)) / h^2; off-diagonal entries
    the four-point cross difference. The result is symmetric by construction.

    Args:
        func: Scalar function of a parameter vector.
        x: Evaluation point.
        rel_step: Step relative to max(1, |x_j|).
        f0: func(x) if already known.

    Returns:
        Symmetric matrix of second derivatives.
    """
    x = np.asarray(x, dtype=float)
    n = x.shape[0]
    h = _steps(x, rel_step)
    fx = func(x) if f0 is None else f0
    hess = np.empty((n, n))
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = h[i]
        hess[i, i] = (func(x + ei) - 2.0 * fx + func(x - ei)) / h[i] ** 2
        for j in range(i):
            ej = np.zeros(n)
            ej[j] = h[j]
            value = (
                func(x + ei + ej) - func(x + ei - ej) - func(x - ei + ej) + func(x - ei - ej)
            ) / (4.0 * h[i] * h[j])
            hess[i, j] = hess[j, i] = value
    return hess
