"""Weibull AFT duration model with shared inverse-Gaussian frailty."""

import logging
import math
from typing import Iterable, List, Optional, Sequence

import numpy as np
from scipy import optimize, special, stats

from debt_cycles.errors import DebtCyclesError, NonFiniteLikelihoodError, NotNestedError
from debt_cycles.estimation.design import check_conditioning
from debt_cycles.estimation.numdiff import central_gradient, central_hessian
from debt_cycles.schemas import (
    FINANCIAL_KINDS,
    FrailtyFit,
    LrTestResult,
    ModelSpec,
    SpellDataset,
    SurvivalData,
)

logger = logging.getLogger(__name__)

CONSTANT = "Constant"
POOLED = "C1"
EULER_GAMMA = 0.5772156649015329
LN_THETA_BOUNDS = (-20.0, 10.0)
LN_P_BOUNDS = (-5.0, 5.0)
LN_THETA_START = -1.0
RESTART_SCALE = 0.1
GRADIENT_TOL = 1e-6
# Returned to the optimizer instead of raising, so the line search backtracks.
NON_FINITE_PENALTY = 1e20


def ig_laplace_transform(s: np.ndarray, theta: float) -> np.ndarray:
    """
    Laplace transform of the inverse-Gaussian law with mean 1 and variance theta.

    L(s) = exp[(1 - sqrt(1 + 2 theta s)) / theta], written as
    exp[-2s / (1 + sqrt(1 + 2 theta s))] so theta -> 0 is stable; theta == 0
    gives exp(-s).
    """
    s = np.asarray(s, dtype=float)
    return np.exp(-2.0 * s / (1.0 + np.sqrt(1.0 + 2.0 * theta * s)))


def ig_laplace_log_derivatives(s: np.ndarray, theta: float, order: int) -> np.ndarray:
    """
    log[(-1)^n L^(n)(s)] for n = 0..order.

    With psi_k = (-1)^k d^k/ds^k of log L, which is (2k-3)!! theta^(k-1)
    (1 + 2 theta s)^(-(2k-1)/2) > 0, the ratios a_n = (-1)^n L^(n) / L satisfy
    a_0 = 1 and a_n = sum_k C(n-1, k) psi_(k+1) a_(n-1-k). Every term is
    positive, so the recurrence runs in the log domain.

    Args:
        s: Evaluation points, shape (G,).
        theta: Frailty variance, >= 0.
        order: Highest derivative order.

    Returns:
        Array of shape (G, order + 1).
    """
    s = np.atleast_1d(np.asarray(s, dtype=float))
    u = 1.0 + 2.0 * theta * s
    log_l = -2.0 * s / (1.0 + np.sqrt(u))

    out = np.empty((s.shape[0], order + 1))
    out[:, 0] = 0.0
    if order > 0:
        k = np.arange(1, order + 1, dtype=float)
        log_dfact = special.gammaln(2 * k - 1) - (k - 1) * math.log(2.0) - special.gammaln(k)
        if theta > 0:
            theta_power = (k - 1) * math.log(theta)
        else:
            theta_power = np.where(k == 1, 0.0, -np.inf)
        # log psi_k per point, shape (G, order)
        log_psi = log_dfact + theta_power - np.outer(np.log(u), (2 * k - 1) / 2.0)
        for n in range(1, order + 1):
            j = np.arange(n)
            log_binom = (
                special.gammaln(n) - special.gammaln(j + 1) - special.gammaln(n - j)
            )
            terms = log_binom + log_psi[:, j] + out[:, n - 1 - j]
            out[:, n] = special.logsumexp(terms, axis=1)
    return out + log_l[:, None]


def _unpack(params: np.ndarray, k: int) -> tuple:
    params = np.asarray(params, dtype=float)
    if params.shape != (k + 2,):
        raise DebtCyclesError(f"expected {k + 2} parameters, got {params.shape[0]}")
    return params[:k], params[k], params[k + 1]


def marginal_loglik(params: np.ndarray, data: SurvivalData) -> float:
    """
    Log-likelihood with the group frailty integrated out.

    Every spell is an observed event. For group i with d_i spells and
    cumulative hazard H_i the contribution is log[(-1)^d_i L^(d_i)(H_i)] plus
    the log baseline hazards log(p t^(p-1) exp(X b)), where b = -p * beta_aft.

    Args:
        params: (beta_aft..., ln_p, ln_theta).
        data: Spell data.

    Returns:
        The log-likelihood.

    Raises:
        NonFiniteLikelihoodError: If any intermediate overflows.
    """
    beta_aft, ln_p, ln_theta = _unpack(params, data.X.shape[1])
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        p = math.exp(ln_p)
        theta = math.exp(ln_theta)
        eta = -p * (data.X @ beta_aft)
        log_t = np.log(data.durations)
        log_h0 = ln_p + (p - 1.0) * log_t + eta
        cum_hazard = np.exp(p * log_t + eta)

        codes = data.group_codes
        group_h = np.bincount(codes, weights=cum_hazard)
        counts = np.bincount(codes)
        table = ig_laplace_log_derivatives(group_h, theta, int(counts.max()))
        value = float(np.sum(log_h0) + np.sum(table[np.arange(counts.shape[0]), counts]))

    if not math.isfinite(value):
        raise NonFiniteLikelihoodError(
            f"log-likelihood not finite at ln_p={ln_p:.4g}, ln_theta={ln_theta:.4g}"
        )
    return value


def loglik_gradient(params: np.ndarray, data: SurvivalData) -> np.ndarray:
    return central_gradient(lambda x: marginal_loglik(x, data), params)


def survival_data_from_spells(dataset: SpellDataset, spec: ModelSpec) -> SurvivalData:
    """
    Design matrix for one model: intercept plus the model's covariate columns.

    Raises:
        KeyError: If a covariate does not resolve in the dataset.
        DebtCyclesError: If the dataset has no spells.
    """
    if not dataset.records:
        raise DebtCyclesError(f"{spec.label}: no {dataset.horizon} {dataset.kind} spells")
    columns = [np.ones(len(dataset.records))]
    columns += [dataset.column(name) for name in spec.covariates]
    return SurvivalData(
        groups=[r.country for r in dataset.records],
        durations=[r.duration for r in dataset.records],
        X=np.column_stack(columns),
        names=(CONSTANT, *spec.covariates),
    )


def start_values(data: SurvivalData) -> np.ndarray:
    """OLS of log duration with the exponential location shift, ln p = 0, ln theta = -1."""
    beta, *_ = np.linalg.lstsq(data.X, np.log(data.durations), rcond=None)
    beta[0] += EULER_GAMMA
    return np.concatenate([beta, [0.0, LN_THETA_START]])


class _Objective:
    """Negative log-likelihood over the free parameters."""

    def __init__(self, data: SurvivalData, pinned_ln_theta: Optional[float]) -> None:
        self.data = data
        self.pinned = pinned_ln_theta

    def full(self, free: np.ndarray) -> np.ndarray:
        if self.pinned is None:
            return np.asarray(free, dtype=float)
        return np.append(free, self.pinned)

    def loglik(self, free: np.ndarray) -> float:
        return marginal_loglik(self.full(free), self.data)

    def __call__(self, free: np.ndarray) -> float:
        try:
            return -self.loglik(free)
        except NonFiniteLikelihoodError:
            return NON_FINITE_PENALTY

    def gradient(self, free: np.ndarray) -> np.ndarray:
        return central_gradient(self, free)


def projected_gradient_norm(
    x: np.ndarray, gradient: np.ndarray, lower: np.ndarray, upper: np.ndarray
) -> float:
    """Sup norm of the gradient with components pushing out of an active bound dropped."""
    g = np.array(gradient, dtype=float)
    g[(x <= lower) & (g > 0)] = 0.0
    g[(x >= upper) & (g < 0)] = 0.0
    return float(np.max(np.abs(g))) if g.size else 0.0


def _minimize(
    objective: _Objective,
    start: np.ndarray,
    bounds: list,
    max_iter: int,
    *,
    gtol: float,
    ftol: float,
) -> optimize.OptimizeResult:
    return optimize.minimize(
        objective,
        start,
        jac=objective.gradient,
        method="L-BFGS-B",
        bounds=bounds,
        options={"maxiter": max_iter, "gtol": gtol, "ftol": ftol},
    )


def _standard_errors(
    objective: _Objective, free: np.ndarray, label: str
) -> tuple:
    """Covariance and SEs of all parameters from the negative inverse Hessian."""
    try:
        hessian = central_hessian(objective.loglik, free)
        info = -hessian
        np.linalg.cholesky(info)
        cov_free = np.linalg.inv(info)
    except (np.linalg.LinAlgError, NonFiniteLikelihoodError) as e:
        logger.warning(
            "%s: Hessian not invertible at the optimum (%s); no standard errors", label, e
        )
        return None, None
    cov_free = (cov_free + cov_free.T) / 2.0
    if objective.pinned is None:
        cov = cov_free
    else:
        # pinned ln theta carries zero variance
        cov = np.zeros((free.shape[0] + 1, free.shape[0] + 1))
        cov[:-1, :-1] = cov_free
    return cov.tolist(), np.sqrt(np.diag(cov)).tolist()


def fit_frailty_model(
    data: SurvivalData,
    spec: ModelSpec,
    *,
    restarts: int = 5,
    max_iter: int = 500,
    seed: int = 0,
) -> FrailtyFit:
    """
    Maximum-likelihood fit of the shared-frailty Weibull AFT model.

    L-BFGS-B runs on the negative log-likelihood with central-difference
    gradients from the OLS start and from ``restarts`` starts perturbed by
    N(0, 0.1^2); the best converged optimum is kept. An optimum whose projected
    gradient is not yet below 1e-6 gets one more run with tighter tolerances.
    With fewer than two groups ln theta is pinned at its lower bound.

    Args:
        data: Spell data whose columns are the intercept and spec.covariates.
        spec: Model label and covariates.
        restarts: Perturbed restarts after the first run.
        max_iter: Iteration cap per run.
        seed: Seed of the restart perturbations.

    Returns:
        FrailtyFit; ``converged`` requires optimizer success and a projected
        gradient sup norm below 1e-6, and
        ``standard_errors`` is None if the Hessian is singular.

    Raises:
        DebtCyclesError: If the data columns do not match the model's covariates.
        CollinearityError: If the design is rank deficient or near collinear.
    """
    if tuple(data.names[1:]) != tuple(spec.covariates):
        raise DebtCyclesError(
            f"{spec.label}: data columns {list(data.names[1:])} do not match "
            f"{list(spec.covariates)}"
        )
    check_conditioning(data.X, data.names)

    k = data.X.shape[1]
    pinned = None
    if data.n_groups < 2:
        pinned = LN_THETA_BOUNDS[0]
        logger.warning(
            "%s: single group, frailty variance not identified; ln theta pinned at %.1f",
            spec.label,
            pinned,
        )
    objective = _Objective(data, pinned)
    bounds = [(None, None)] * k + [LN_P_BOUNDS]
    x0 = start_values(data)
    if pinned is None:
        bounds.append(LN_THETA_BOUNDS)
    else:
        x0 = x0[:-1]
    lower = np.array([-np.inf if b[0] is None else b[0] for b in bounds])
    upper = np.array([np.inf if b[1] is None else b[1] for b in bounds])

    rng = np.random.default_rng(seed)
    starts = [x0] + [
        np.clip(x0 + rng.normal(0.0, RESTART_SCALE, size=x0.shape), lower, upper)
        for _ in range(restarts)
    ]
    best = None
    n_converged = 0
    for start in starts:
        result = _minimize(objective, start, bounds, max_iter, gtol=GRADIENT_TOL, ftol=1e-10)
        if result.fun >= NON_FINITE_PENALTY:
            continue
        n_converged += int(result.success)
        if best is None or (result.success, -result.fun) > (best.success, -best.fun):
            best = result
    if best is None:
        raise NonFiniteLikelihoodError(f"{spec.label}: likelihood not finite from any start")

    gradient_norm = projected_gradient_norm(best.x, best.jac, lower, upper)
    if gradient_norm >= GRADIENT_TOL:
        # stopped on the relative reduction test; polish from the optimum
        polished = _minimize(objective, best.x, bounds, max_iter, gtol=1e-10, ftol=1e-15)
        if polished.fun <= best.fun:
            best = polished
            gradient_norm = projected_gradient_norm(best.x, best.jac, lower, upper)
    converged = bool(best.success) and gradient_norm < GRADIENT_TOL
    if not converged:
        logger.warning(
            "%s: not converged after %d iterations, projected gradient %.2e (%s)",
            spec.label,
            max_iter,
            gradient_norm,
            best.message,
        )

    covariance, standard_errors = _standard_errors(objective, best.x, spec.label)
    params = objective.full(best.x)
    logger.debug(
        "%s: LL %.4f after %d iterations, %d/%d runs converged",
        spec.label,
        -best.fun,
        best.nit,
        n_converged,
        len(starts),
    )
    return FrailtyFit(
        label=spec.label,
        names=list(data.names),
        beta_aft=params[:k].tolist(),
        ln_p=float(params[k]),
        ln_theta=float(params[k + 1]),
        covariance=covariance,
        standard_errors=standard_errors,
        log_likelihood=float(-best.fun),
        converged=converged,
        iterations=int(best.nit),
        n_obs=data.n_obs,
        n_groups=data.n_groups,
        theta_pinned=pinned is not None,
        gradient_norm=gradient_norm,
        restarts=n_converged,
        data_signature=data.signature,
    )


def lr_test(full: FrailtyFit, null: FrailtyFit) -> LrTestResult:
    """
    Likelihood-ratio test of a nested model against a fuller one.

    Args:
        full: Fit with the larger covariate set.
        null: Fit whose covariates are a subset of full's, on the same data.

    Returns:
        Statistic 2(LL_full - LL_null), df and the chi-squared p-value
        (1.0 when df is 0).

    Raises:
        NotNestedError: If null is not nested in full or the data differ.
    """
    if not set(null.names) <= set(full.names):
        extra = sorted(set(null.names) - set(full.names))
        raise NotNestedError(f"{null.label} is not nested in {full.label}: {', '.join(extra)}")
    if full.data_signature and null.data_signature and full.data_signature != null.data_signature:
        raise NotNestedError(f"{null.label} and {full.label} were fitted on different data")
    df = full.n_params - null.n_params
    if df < 0:
        raise NotNestedError(f"{null.label} has more free parameters than {full.label}")
    statistic = 2.0 * (full.log_likelihood - null.log_likelihood)
    p_value = 1.0 if df == 0 else float(stats.chi2.sf(statistic, df))
    return LrTestResult(statistic=statistic, df=df, p_value=p_value)


def time_ratio(coefficient: float) -> float:
    return math.exp(coefficient)


FLAG_COVARIATES = FINANCIAL_KINDS


def default_model_ladder() -> List[ModelSpec]:
    """M1..M8: benchmark, each dummy alone, all dummies, then core growth controls."""
    flags = FLAG_COVARIATES
    return [
        ModelSpec(label="M1"),
        ModelSpec(label="M2", covariates=("credit",)),
        ModelSpec(label="M3", covariates=("house",)),
        ModelSpec(label="M4", covariates=("equity",)),
        ModelSpec(label="M5", covariates=flags),
        ModelSpec(label="M6", covariates=(*flags, "credit_growth")),
        ModelSpec(label="M7", covariates=(*flags, "house_growth")),
        ModelSpec(label="M8", covariates=(*flags, "credit_growth", "house_growth")),
    ]


def select_models(ladder: Sequence[ModelSpec], labels: Optional[Iterable[str]]) -> List[ModelSpec]:
    """Restrict a ladder to the given labels, keeping ladder order."""
    if labels is None:
        return list(ladder)
    wanted = list(labels)
    known = {spec.label for spec in ladder}
    unknown = [label for label in wanted if label not in known]
    if unknown:
        raise DebtCyclesError(f"unknown model label(s): {', '.join(unknown)}")
    return [spec for spec in ladder if spec.label in wanted]


def interaction_model(group_label: str) -> ModelSpec:
    """Pooled model: all dummies, the group dummy and flag x group interactions."""
    return ModelSpec(
        label=POOLED,
        covariates=(
            *FLAG_COVARIATES,
            group_label,
            *(f"{flag}_x_{group_label}" for flag in FLAG_COVARIATES),
        ),
    )


def robustness_models(
    macro_controls: Sequence[str], component_names: Sequence[str]
) -> List[ModelSpec]:
    """M8 variants: one macro control each, then the principal components."""
    base = default_model_ladder()[-1].covariates
    models = [ModelSpec(label=f"D-{name}", covariates=(*base, name)) for name in macro_controls]
    if component_names:
        models.append(ModelSpec(label="PCA", covariates=(*base, *component_names)))
    return models


def orthogonal_ladder(orthogonal_flags: Sequence[str]) -> List[ModelSpec]:
    """
    O1..O(m+2) on dummies purged of the core growth controls.

    O1 is the benchmark, then each orthogonalized dummy alone, then all of
    them together.
    """
    flags = tuple(orthogonal_flags)
    models = [ModelSpec(label="O1")]
    models += [ModelSpec(label=f"O{j + 2}", covariates=(flag,)) for j, flag in enumerate(flags)]
    if flags:
        models.append(ModelSpec(label=f"O{len(flags) + 2}", covariates=flags))
    return models

