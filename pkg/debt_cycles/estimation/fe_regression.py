"""Within-estimator OLS with country fixed effects for amplitude regressions."""

import logging
import math
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import statsmodels.api as sm

from debt_cycles.errors import CollinearityError, DebtCyclesError
from debt_cycles.estimation.design import check_conditioning
from debt_cycles.estimation.survival import CONSTANT
from debt_cycles.schemas import FeFit

logger = logging.getLogger(__name__)


def gaussian_loglik(residuals: np.ndarray, n: Optional[int] = None) -> float:
    """
    Gaussian log-likelihood at the MLE variance RSS/n.

    Returns math.inf (with a warning) when the residuals are all zero.
    """
    e = np.asarray(residuals, dtype=float)
    n = e.shape[0] if n is None else n
    if n < 1:
        raise DebtCyclesError("gaussian_loglik needs n >= 1")
    rss = float(e @ e)
    if rss == 0.0:
        logger.warning("zero residual sum of squares; log-likelihood is infinite")
        return math.inf
    return -n / 2.0 * (math.log(2.0 * math.pi) + math.log(rss / n) + 1.0)


def _demean(frame: pd.DataFrame, groups: np.ndarray) -> pd.DataFrame:
    return frame - frame.groupby(groups).transform("mean")


def fit_fixed_effects(
    y: np.ndarray,
    X: np.ndarray,
    groups: Sequence[str],
    names: Optional[Sequence[str]] = None,
    label: str = "",
) -> FeFit:
    """
    Fixed-effects OLS by demeaning within groups.

    The demeaned data go through statsmodels OLS; its covariance is rescaled
    to the residual variance on n - k - G degrees of freedom, which counts the
    G group means swept out by demeaning. An all-ones column named
    ``Constant`` is taken as the intercept and dropped, since the group
    effects absorb it. The reported constant is the mean of the estimated
    group effects.

    Args:
        y: Dependent variable, shape (n,).
        X: Regressors, shape (n, k).
        groups: Group id per row.
        names: Column names; defaults to x1..xk.
        label: Model label stored on the fit.

    Returns:
        FeFit with homoskedastic OLS standard errors on n - k - G degrees of freedom.

    Raises:
        CollinearityError: If any other column is constant over the sample or
            within every group, or the demeaned design is rank deficient.
        DebtCyclesError: If no residual degrees of freedom remain.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    groups = np.asarray(groups).astype(str)
    labels = list(names) if names is not None else [f"x{j + 1}" for j in range(X.shape[1])]
    if len(labels) != X.shape[1]:
        raise DebtCyclesError("one name per regressor column required")

    intercepts = [
        j for j, name in enumerate(labels) if name == CONSTANT and np.all(X[:, j] == 1.0)
    ]
    if intercepts:
        logger.debug("%s: intercept column absorbed by the group effects", label or "FE")
    keep = [j for j in range(X.shape[1]) if j not in intercepts]
    X = X[:, keep]
    labels = [labels[j] for j in keep]
    constant = [name for j, name in enumerate(labels) if np.ptp(X[:, j]) == 0.0]
    if constant:
        raise CollinearityError("constant over the whole sample", constant)

    frame = pd.DataFrame(X, columns=labels)
    frame["__y"] = y
    within = _demean(frame, groups)
    Xd = within[labels]
    yd = within["__y"]

    absorbed = [
        name
        for name in labels
        if Xd[name].abs().max() <= 1e-12 * max(1.0, float(np.max(np.abs(frame[name]))))
    ]
    if absorbed:
        raise CollinearityError(
            "constant within every group, absorbed by the fixed effects", absorbed
        )
    if labels:
        check_conditioning(Xd.to_numpy(), labels)

    sizes = pd.Series(groups).value_counts().sort_index()
    singletons = sizes[sizes == 1].index.tolist()
    if singletons:
        logger.warning(
            "%s: %d singleton group(s) do not identify slopes: %s",
            label or "FE",
            len(singletons),
            ", ".join(singletons),
        )

    n, k, n_groups = y.shape[0], len(labels), sizes.shape[0]
    df_resid = n - k - n_groups
    if df_resid <= 0:
        raise DebtCyclesError(
            f"{label or 'FE'}: {n} observations leave no residual degrees of freedom"
        )

    if k:
        result = sm.OLS(yd, Xd).fit()
        beta, residuals = result.params.to_numpy(), result.resid.to_numpy()
        sigma2 = float(residuals @ residuals) / df_resid
        vcov = result.cov_params(scale=sigma2).to_numpy()
    else:
        beta, residuals, vcov = np.zeros(0), yd.to_numpy(), np.zeros((0, 0))
        sigma2 = float(residuals @ residuals) / df_resid

    means = frame.groupby(groups).mean().sort_index()
    x_bar = means[labels].to_numpy()
    effects = means["__y"].to_numpy() - x_bar @ beta
    m = x_bar.mean(axis=0)
    const_var = sigma2 * float(np.mean(1.0 / sizes.to_numpy())) / n_groups + float(m @ vcov @ m)

    return FeFit(
        label=label,
        names=labels,
        coefficients=beta.tolist(),
        standard_errors=np.sqrt(np.diag(vcov)).tolist(),
        constant=float(effects.mean()),
        constant_se=math.sqrt(const_var),
        group_effects=dict(zip(means.index.tolist(), effects.tolist())),
        residual_variance=sigma2,
        log_likelihood=gaussian_loglik(residuals, n),
        n_obs=n,
        n_groups=n_groups,
        df_resid=df_resid,
    )
