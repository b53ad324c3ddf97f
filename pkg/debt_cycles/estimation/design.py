"""Design-matrix conditioning checks shared by the estimators."""

from typing import List, Sequence

import numpy as np

from debt_cycles.errors import CollinearityError

MAX_CONDITION = 1e8


def offending_columns(X: np.ndarray, names: Sequence[str], tol: float = 0.1) -> List[str]:
    """Columns loading on the right singular vector of the smallest singular value."""
    _, _, vt = np.linalg.svd(X, full_matrices=False)
    weakest = np.abs(vt[-1])
    return [names[j] for j in np.flatnonzero(weakest > tol * weakest.max())]


def check_conditioning(
    X: np.ndarray, names: Sequence[str], max_condition: float = MAX_CONDITION
) -> float:
    """
    Reject rank-deficient or near-collinear designs.

    Columns are scaled to unit norm first, so the condition number does not
    depend on units.

    Args:
        X: Design matrix, one row per observation.
        names: One name per column.
        max_condition: Largest accepted condition number.

    Returns:
        The condition number of the column-scaled design.

    Raises:
        CollinearityError: If a column is identically zero, there are fewer rows
            than columns, or the condition number exceeds max_condition.
    """
    X = np.asarray(X, dtype=float)
    if X.shape[1] == 0:
        return 1.0
    norms = np.linalg.norm(X, axis=0)
    zero = [names[j] for j in np.flatnonzero(norms == 0.0)]
    if zero:
        raise CollinearityError("all-zero design column(s)", zero)
    if X.shape[0] < X.shape[1]:
        raise CollinearityError(
            f"{X.shape[0]} observations for {X.shape[1]} columns", list(names)
        )
    scaled = X / norms
    singular = np.linalg.svd(scaled, compute_uv=False)
    condition = float(singular[0] / singular[-1]) if singular[-1] > 0 else float("inf")
    if condition > max_condition:
        raise CollinearityError(
            f"design condition number {condition:.3g} exceeds {max_condition:.0e}",
            offending_columns(scaled, names),
        )
    return condition
