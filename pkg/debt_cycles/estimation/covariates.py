"""Event-window covariates, principal components and orthogonalized dummies."""

import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from debt_cycles.errors import (
    CollinearityError,
    CovariateUnavailableError,
    DebtCyclesError,
    ZeroDenominatorError,
)
from debt_cycles.parsers.quarters import format_quarter
from debt_cycles.schemas import (
    Panel,
    PcaResult,
    Phase,
    QuarterIndex,
    QuarterlySeries,
    WindowSpec,
)

logger = logging.getLogger(__name__)

# Window lengths follow the variable-definition table: growth before the debt
# turning point, except inflation (after) and the account balance (levels).
CORE_WINDOWS: Tuple[WindowSpec, ...] = (
    WindowSpec(name="credit_growth", variable="credit", n_quarters=2),
    WindowSpec(name="house_growth", variable="house", n_quarters=2),
)
MACRO_WINDOWS: Tuple[WindowSpec, ...] = (
    WindowSpec(name="gdp_growth", variable="gdp", n_quarters=1),
    WindowSpec(name="money_growth", variable="money", n_quarters=2),
    WindowSpec(name="inflation", variable="cpi", n_quarters=2, direction="after"),
    WindowSpec(name="reer_growth", variable="reer", n_quarters=2),
    WindowSpec(name="account_balance", variable="balance", n_quarters=2, statistic="level"),
    WindowSpec(name="oil_growth", variable="oil", n_quarters=3),
)
CORE_COVARIATES = tuple(spec.name for spec in CORE_WINDOWS)
MACRO_COVARIATES = tuple(spec.name for spec in MACRO_WINDOWS)


def default_window_specs() -> List[WindowSpec]:
    return [*CORE_WINDOWS, *MACRO_WINDOWS]


def event_window_average(series: QuarterlySeries, t: QuarterIndex, spec: WindowSpec) -> float:
    """
    Average of percentage changes (or levels) in a window around quarter t.

    "before" covers the n changes into t-n+1..t; "after" covers the n changes
    into t+1..t+n. Level statistics average the values at those quarters.

    Args:
        series: Level series of the covariate.
        t: Event quarter (the debt turning point).
        spec: Window definition.

    Returns:
        The window average.

    Raises:
        CovariateUnavailableError: If the window leaves the series.
        ZeroDenominatorError: If a percentage change divides by zero.
    """
    n = spec.n_quarters
    offset = series.offset_of(t)
    if spec.direction == "before":
        targets = range(offset - n + 1, offset + 1)
    else:
        targets = range(offset + 1, offset + n + 1)
    lowest = targets[0] - (1 if spec.statistic == "growth" else 0)
    if lowest < 0 or targets[-1] >= len(series):
        raise CovariateUnavailableError(
            f"{spec.name}: {spec.direction} window of {n} at {format_quarter(t)} leaves "
            f"{series.country}/{series.variable} ({format_quarter(series.start)}"
            f"..{format_quarter(series.end)})"
        )
    values = series.as_array()
    idx = np.asarray(list(targets))
    if spec.statistic == "level":
        return float(np.mean(values[idx]))
    lagged = values[idx - 1]
    if np.any(lagged == 0.0):
        raise ZeroDenominatorError(f"{spec.name}: zero level inside the window at {t}")
    return float(np.mean(100.0 * (values[idx] - lagged) / lagged))


class PanelCovariateProvider:
    """Computes a spell's window covariates from the panel."""

    def __init__(self, panel: Panel, specs: Sequence[WindowSpec]) -> None:
        self.panel = panel
        self.specs = list(specs)

    @property
    def names(self) -> List[str]:
        return [spec.name for spec in self.specs]

    def __call__(self, country: str, phase: Phase) -> Dict[str, float]:
        t = phase.start.time
        covariates: Dict[str, float] = {}
        for spec in self.specs:
            series = self.panel.get(country, spec.variable)
            if series is None:
                raise CovariateUnavailableError(f"{spec.name}: no {spec.variable} series")
            covariates[spec.name] = event_window_average(series, t, spec)
        return covariates


def pca(matrix: np.ndarray, names: Optional[Sequence[str]] = None) -> PcaResult:
    """
    Principal components of the correlation matrix.

    Columns are standardized (sample sd) before the eigendecomposition, so the
    scores' sample covariance is diagonal with the eigenvalues on it.

    Args:
        matrix: Observations x variables.
        names: Column names used in error messages.

    Returns:
        PcaResult with components in descending eigenvalue order.

    Raises:
        DebtCyclesError: On fewer than 2 observations or a constant column.
    """
    data = np.asarray(matrix, dtype=float)
    if data.ndim != 2 or data.shape[0] < 2:
        raise DebtCyclesError("pca needs a 2-D matrix with at least 2 observations")
    n, m = data.shape
    labels = tuple(names) if names is not None else tuple(f"x{j + 1}" for j in range(m))
    sd = data.std(axis=0, ddof=1)
    constant = [labels[j] for j in np.flatnonzero(sd == 0.0)]
    if constant:
        raise DebtCyclesError(f"zero variance in column(s): {', '.join(constant)}")

    z = (data - data.mean(axis=0)) / sd
    corr = z.T @ z / (n - 1)
    eigenvalues, vectors = np.linalg.eigh(corr)
    order = np.argsort(eigenvalues)[::-1]
    eigenvalues = np.clip(eigenvalues[order], 0.0, None)
    vectors = vectors[:, order]
    # Sign convention: the largest-magnitude loading of each component is positive.
    pivots = np.argmax(np.abs(vectors), axis=0)
    vectors = vectors * np.sign(vectors[pivots, np.arange(m)])

    return PcaResult(
        names=labels,
        loadings=vectors,
        scores=z @ vectors,
        eigenvalues=eigenvalues,
        explained=eigenvalues / float(m),
    )


def orthogonalize(target: np.ndarray, regressors: np.ndarray) -> np.ndarray:
    """
    Residual of the OLS regression of target on an intercept and regressors.

    Args:
        target: Vector to orthogonalize (e.g. a bust dummy).
        regressors: Matrix n x k (k may be 0); the intercept is added here.

    Returns:
        The residual vector.

    Raises:
        CollinearityError: If [1, regressors] is rank deficient.
    """
    y = np.asarray(target, dtype=float)
    extra = np.asarray(regressors, dtype=float)
    if extra.ndim == 1:
        extra = extra[:, None]
    design = np.column_stack([np.ones_like(y), extra])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        raise CollinearityError(
            "rank-deficient regressors",
            ["intercept", *[f"regressor {j + 1}" for j in range(extra.shape[1])]],
        )
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    return y - design @ coef
