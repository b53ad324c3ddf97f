"""Tests for the shared inverse-Gaussian frailty Weibull AFT model."""

import logging
import math
from typing import List

import numpy as np
import pytest
from scipy import integrate, optimize, stats

from debt_cycles.errors import (
    CollinearityError,
    DebtCyclesError,
    NonFiniteLikelihoodError,
    NotNestedError,
)
from debt_cycles.estimation.survival import (
    CONSTANT,
    GRADIENT_TOL,
    LN_THETA_BOUNDS,
    POOLED,
    default_model_ladder,
    fit_frailty_model,
    ig_laplace_log_derivatives,
    ig_laplace_transform,
    interaction_model,
    loglik_gradient,
    lr_test,
    marginal_loglik,
    orthogonal_ladder,
    projected_gradient_norm,
    robustness_models,
    select_models,
    survival_data_from_spells,
    time_ratio,
)
from debt_cycles.schemas import (
    AssociationFlags,
    CovariateLaw,
    FrailtyFit,
    ModelSpec,
    QuarterIndex,
    SimConfig,
    SpellDataset,
    SpellRecord,
    SurvivalData,
)
from debt_cycles.simulate import simulate_frailty_durations


def _fit(label: str, names: List[str], log_likelihood: float, **extra: object) -> FrailtyFit:
    """Hand-made fit carrying only what the LR test reads."""
    return FrailtyFit(
        label=label,
        names=names,
        beta_aft=[0.0] * len(names),
        ln_p=0.0,
        ln_theta=-1.0,
        log_likelihood=log_likelihood,
        converged=True,
        iterations=10,
        n_obs=120,
        n_groups=33,
        **extra,
    )


def _random_data(seed: int, n_groups: int, max_spells: int, k: int = 1) -> SurvivalData:
    rng = np.random.default_rng(seed)
    groups: List[str] = []
    for g in range(n_groups):
        groups += [f"G{g}"] * int(rng.integers(1, max_spells + 1))
    n = len(groups)
    X = np.column_stack([np.ones(n), rng.normal(size=(n, k))])
    return SurvivalData(
        groups=groups,
        durations=rng.uniform(0.3, 4.0, size=n),
        X=X,
        names=(CONSTANT, *(f"x{j}" for j in range(k))),
    )


def _quadrature_loglik(params: np.ndarray, data: SurvivalData) -> float:
    """Marginal log-likelihood by integrating the frailty numerically."""
    k = data.X.shape[1]
    beta, p, theta = params[:k], math.exp(params[k]), math.exp(params[k + 1])
    eta = -p * (data.X @ beta)
    log_h0 = math.log(p) + (p - 1.0) * np.log(data.durations) + eta
    cum = data.durations**p * np.exp(eta)
    frailty = stats.invgauss(mu=theta, scale=1.0 / theta)
    total = 0.0
    for g in np.unique(data.groups):
        mask = data.groups == g
        d, H = int(mask.sum()), float(cum[mask].sum())

        def integrand(a: float) -> float:
            return a**d * math.exp(-a * H) * frailty.pdf(a)

        head, _ = integrate.quad(integrand, 0.0, 1.0, epsabs=0.0, epsrel=1e-10, limit=200)
        tail, _ = integrate.quad(integrand, 1.0, np.inf, epsabs=0.0, epsrel=1e-10, limit=200)
        total += float(log_h0[mask].sum()) + math.log(head + tail)
    return total


def _weibull_loglik(params: np.ndarray, X: np.ndarray, t: np.ndarray) -> float:
    """Independent no-frailty Weibull AFT log-likelihood."""
    k = X.shape[1]
    p = math.exp(params[k])
    eta = -p * (X @ params[:k])
    return float(np.sum(params[k] + (p - 1.0) * np.log(t) + eta - t**p * np.exp(eta)))


def test_single_exponential_spell() -> None:
    """Test one spell at t = 1 with unit hazard has log-likelihood -1."""
    data = SurvivalData(groups=["A"], durations=[1.0], X=[[1.0]], names=(CONSTANT,))
    value = marginal_loglik(np.array([0.0, 0.0, math.log(1e-12)]), data)
    assert value == pytest.approx(-1.0, abs=1e-9)


def test_laplace_transform_identities() -> None:
    """Test L(0) = 1 and L(s) -> exp(-s) as theta -> 0."""
    s = np.linspace(0.0, 20.0, 201)
    assert ig_laplace_transform(np.array([0.0]), 0.7)[0] == 1.0
    np.testing.assert_allclose(ig_laplace_transform(s, 1e-12), np.exp(-s), atol=1e-8)
    np.testing.assert_array_equal(ig_laplace_transform(s, 0.0), np.exp(-s))


def test_laplace_log_derivatives_closed_forms() -> None:
    """Test the first two derivatives against their closed forms."""
    s = np.array([0.0, 0.4, 3.0, 25.0])
    theta = 0.8
    u = 1.0 + 2.0 * theta * s
    log_l = np.log(ig_laplace_transform(s, theta))
    table = ig_laplace_log_derivatives(s, theta, 2)
    np.testing.assert_allclose(table[:, 0], log_l, rtol=1e-10, atol=1e-12)
    np.testing.assert_allclose(table[:, 1], log_l - 0.5 * np.log(u), rtol=1e-10, atol=1e-12)
    second = log_l + np.log(1.0 / u + theta * u**-1.5)
    np.testing.assert_allclose(table[:, 2], second, rtol=1e-10, atol=1e-12)


def test_laplace_log_derivatives_without_frailty() -> None:
    """Test every derivative of exp(-s) has magnitude exp(-s)."""
    s = np.array([0.5, 2.0, 7.0])
    table = ig_laplace_log_derivatives(s, 0.0, 6)
    np.testing.assert_allclose(table, np.repeat(-s[:, None], 7, axis=1), atol=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_marginal_loglik_matches_quadrature(seed: int) -> None:
    """Test the closed form against numerical integration over the frailty."""
    rng = np.random.default_rng(1000 + seed)
    data = _random_data(seed, n_groups=int(rng.integers(1, 4)), max_spells=4)
    params = np.array(
        [
            rng.uniform(-0.5, 0.5),
            rng.uniform(-0.5, 0.5),
            math.log(rng.uniform(0.6, 1.8)),
            math.log(rng.uniform(0.2, 1.5)),
        ]
    )
    assert marginal_loglik(params, data) == pytest.approx(
        _quadrature_loglik(params, data), abs=1e-8
    )


@pytest.mark.parametrize("seed", range(5))
def test_one_spell_groups_reduce_to_weibull(seed: int) -> None:
    """Test one spell per group with negligible theta is the plain Weibull fit."""
    data = _random_data(seed, n_groups=30, max_spells=1, k=2)
    rng = np.random.default_rng(seed)
    beta = rng.uniform(-0.5, 0.5, size=3)
    ln_p = math.log(rng.uniform(0.7, 2.0))
    params = np.array([*beta, ln_p, math.log(1e-12)])
    expected = _weibull_loglik(params[:-1], data.X, data.durations)
    assert marginal_loglik(params, data) == pytest.approx(expected, abs=1e-6)


@pytest.mark.parametrize("seed", range(3))
def test_gradient_matches_forward_differences(seed: int) -> None:
    """Test the central-difference gradient at random parameter points."""
    data = _random_data(seed, n_groups=6, max_spells=4)
    rng = np.random.default_rng(seed)
    for _ in range(3):
        params = np.array(
            [*rng.uniform(-0.5, 0.5, 2), math.log(rng.uniform(0.7, 1.5)), rng.uniform(-2, 0.5)]
        )
        central = loglik_gradient(params, data)
        forward = optimize.approx_fprime(params, lambda x: marginal_loglik(x, data), 1e-7)
        error = np.linalg.norm(central - forward) / max(np.linalg.norm(forward), 1.0)
        assert error < 1e-4


def test_overflow_is_signalled() -> None:
    """Test an overflowing likelihood raises a distinct error."""
    data = SurvivalData(
        groups=["A", "A"], durations=[2.0, 3.0], X=[[1.0], [1.0]], names=(CONSTANT,)
    )
    with pytest.raises(NonFiniteLikelihoodError):
        marginal_loglik(np.array([0.0, 50.0, 0.0]), data)


def test_lr_statistics() -> None:
    """Test LR statistics from reported log-likelihoods."""
    benchmark = _fit("M1", [CONSTANT], -96.0608)
    house = _fit("M3", [CONSTANT, "house"], -92.6078)
    equity = _fit("M4", [CONSTANT, "equity"], -91.5446)

    first = lr_test(house, benchmark)
    assert first.statistic == pytest.approx(6.9059, abs=1e-3)
    assert first.df == 1
    assert first.stars == "***"
    assert lr_test(equity, benchmark).statistic == pytest.approx(9.0324, abs=1e-3)


def test_lr_identical_fits() -> None:
    """Test identical fits give a zero statistic and p-value 1."""
    fit = _fit("M5", [CONSTANT, "credit"], -90.0)
    result = lr_test(fit, fit)
    assert result.statistic == 0.0
    assert result.df == 0
    assert result.p_value == 1.0


def test_lr_rejects_non_nested() -> None:
    """Test non-nested covariates and different data raise."""
    house = _fit("M3", [CONSTANT, "house"], -92.6)
    equity = _fit("M4", [CONSTANT, "equity"], -91.5)
    with pytest.raises(NotNestedError, match="house"):
        lr_test(equity, house)
    full = _fit("M5", [CONSTANT, "house", "equity"], -90.0, data_signature="aaaa")
    null = _fit("M3", [CONSTANT, "house"], -92.6, data_signature="bbbb")
    with pytest.raises(NotNestedError, match="different data"):
        lr_test(full, null)


def test_time_ratio() -> None:
    """Test exp of reported coefficients."""
    assert time_ratio(0.6155) == pytest.approx(1.8506, abs=1e-4)
    assert time_ratio(0.6267) == pytest.approx(1.8714, abs=1e-4)
    assert time_ratio(0.0) == 1.0


def test_fit_recovers_simulated_parameters() -> None:
    """Test recovery on 200 groups of 8 spells."""
    cfg = SimConfig(
        seed=11,
        groups=200,
        spells_per_group=(8, 8),
        beta_aft=[1.0, 0.5, -0.3],
        p=1.5,
        theta=0.5,
        covariates=[
            CovariateLaw(name="x", law="normal"),
            CovariateLaw(name="d", law="bernoulli", rate=0.4),
        ],
    )
    sim = simulate_frailty_durations(cfg)
    fit = fit_frailty_model(sim.data, ModelSpec(label="sim", covariates=("x", "d")), restarts=1)

    assert fit.converged
    assert fit.standard_errors is not None
    se = fit.standard_errors
    for j, true in enumerate(cfg.beta_aft):
        assert abs(fit.beta_aft[j] - true) <= max(0.10, 3 * se[j])
    assert abs(fit.ln_p - math.log(1.5)) <= max(0.05, 3 * se[3])
    theta = math.exp(fit.ln_theta)
    assert abs(theta - 0.5) <= max(0.15, 3 * theta * se[4])
    assert fit.ln_p > 0
    assert fit.n_obs == 1600
    assert fit.n_groups == 200


def test_projected_gradient_norm_ignores_active_bounds() -> None:
    """Test components pushing out of an active bound do not count."""
    lower = np.array([-np.inf, -5.0, -20.0])
    upper = np.array([np.inf, 5.0, 10.0])
    x = np.array([0.3, 0.1, -20.0])
    assert projected_gradient_norm(x, np.array([1e-8, -2e-7, 3.0]), lower, upper) == 2e-7
    assert projected_gradient_norm(x, np.array([0.0, 0.0, -3.0]), lower, upper) == 3.0


def test_converged_fit_has_small_gradient() -> None:
    """Test a converged fit reports a projected gradient below 1e-6."""
    sim = simulate_frailty_durations(
        SimConfig(
            seed=21,
            groups=40,
            spells_per_group=(2, 5),
            beta_aft=[0.8, 0.4],
            p=1.2,
            theta=0.3,
            covariates=[CovariateLaw(name="x", law="normal")],
        )
    )
    fit = fit_frailty_model(sim.data, ModelSpec(label="M2", covariates=("x",)), restarts=0)
    assert fit.converged
    assert fit.gradient_norm < GRADIENT_TOL


def test_iteration_cap_is_not_converged(caplog: pytest.LogCaptureFixture) -> None:
    """Test a fit stopped by the iteration cap is flagged and logged."""
    data = _random_data(4, n_groups=15, max_spells=4)
    with caplog.at_level(logging.WARNING, logger="debt_cycles.estimation.survival"):
        fit = fit_frailty_model(data, ModelSpec(label="M2", covariates=("x0",)), max_iter=1)
    assert not fit.converged
    assert fit.gradient_norm >= GRADIENT_TOL
    assert "M2: not converged" in caplog.text


def test_fit_recovers_boundary_frailty_variance() -> None:
    """Test simulated durations without frailty give a near-zero theta estimate."""
    cfg = SimConfig(
        seed=17,
        groups=150,
        spells_per_group=(4, 4),
        beta_aft=[0.6, 0.3],
        p=1.4,
        theta=0.0,
        covariates=[CovariateLaw(name="x", law="normal")],
    )
    sim = simulate_frailty_durations(cfg)
    fit = fit_frailty_model(sim.data, ModelSpec(label="M2", covariates=("x",)), restarts=1)
    assert math.exp(fit.ln_theta) < 0.2
    np.testing.assert_allclose(fit.beta_aft, cfg.beta_aft, atol=0.1)
    assert fit.ln_p == pytest.approx(math.log(1.4), abs=0.1)
    assert not fit.theta_pinned


@pytest.mark.slow
def test_wald_interval_coverage() -> None:
    """Test 95% Wald intervals of the slope cover the truth in about 95% of 100 samples."""
    base = SimConfig(
        seed=0,
        groups=60,
        spells_per_group=(3, 6),
        beta_aft=[1.0, 0.5],
        p=1.3,
        theta=0.4,
        covariates=[CovariateLaw(name="x", law="normal")],
    )
    spec = ModelSpec(label="M2", covariates=("x",))
    z = stats.norm.ppf(0.975)
    covered = 0
    fitted = 0
    for replication in range(100):
        sim = simulate_frailty_durations(base.model_copy(update={"seed": 500 + replication}))
        fit = fit_frailty_model(sim.data, spec, restarts=0)
        if fit.standard_errors is None:
            continue
        fitted += 1
        covered += abs(fit.beta_aft[1] - 0.5) <= z * fit.standard_errors[1]
    assert fitted >= 95
    assert 0.87 <= covered / fitted <= 1.0


def test_fit_without_heterogeneity_degenerates() -> None:
    """Test identical groups drive ln theta down and match the plain Weibull fit."""
    quantiles = (-np.log(1.0 - (np.arange(8) + 0.5) / 8.0)) ** (1.0 / 1.4)
    x = np.tile([-1.0, 1.0], 4)
    durations = np.exp(0.3 + 0.2 * x) * quantiles
    n_groups = 40
    data = SurvivalData(
        groups=np.repeat([f"G{g:02d}" for g in range(n_groups)], 8),
        durations=np.tile(durations, n_groups),
        X=np.column_stack([np.ones(8 * n_groups), np.tile(x, n_groups)]),
        names=(CONSTANT, "x"),
    )
    fit = fit_frailty_model(data, ModelSpec(label="M", covariates=("x",)), restarts=0)
    assert fit.ln_theta < -8
    assert fit.standard_errors is None or fit.standard_errors[-1] > 10

    reference = optimize.minimize(
        lambda v: -_weibull_loglik(v, data.X, data.durations),
        np.zeros(3),
        method="Nelder-Mead",
        options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 20000, "maxfev": 20000},
    )
    np.testing.assert_allclose(fit.beta_aft, reference.x[:2], atol=1e-3)
    assert fit.ln_p == pytest.approx(reference.x[2], abs=1e-3)


def test_exponential_durations_give_unit_shape() -> None:
    """Test exponential quantiles, one spell per group, give ln p ~ 0."""
    n = 400
    durations = -np.log(1.0 - (np.arange(n) + 0.5) / n)
    data = SurvivalData(
        groups=[f"G{i:03d}" for i in range(n)],
        durations=durations,
        X=np.ones((n, 1)),
        names=(CONSTANT,),
    )
    fit = fit_frailty_model(data, ModelSpec(label="M1"), restarts=0)
    assert fit.ln_p == pytest.approx(0.0, abs=0.05)
    assert fit.beta_aft[0] == pytest.approx(math.log(durations.mean()), abs=0.05)


def test_single_group_pins_theta() -> None:
    """Test one group pins ln theta at its lower bound with zero variance."""
    rng = np.random.default_rng(3)
    data = SurvivalData(
        groups=["A"] * 30,
        durations=rng.weibull(1.3, 30),
        X=np.column_stack([np.ones(30), rng.normal(size=30)]),
        names=(CONSTANT, "x0"),
    )
    fit = fit_frailty_model(data, ModelSpec(label="M2", covariates=("x0",)), restarts=0)
    assert fit.theta_pinned
    assert fit.ln_theta == LN_THETA_BOUNDS[0]
    assert fit.n_params == 3
    if fit.standard_errors is not None:
        assert fit.standard_errors[-1] == 0.0


def test_fit_is_deterministic() -> None:
    """Test repeated fits with the same seed agree exactly."""
    data = _random_data(8, n_groups=12, max_spells=4)
    spec = ModelSpec(label="M2", covariates=("x0",))
    first = fit_frailty_model(data, spec, restarts=2, seed=5)
    second = fit_frailty_model(data, spec, restarts=2, seed=5)
    assert first == second


def test_fit_rejects_collinear_design() -> None:
    """Test duplicated columns are named in the error."""
    rng = np.random.default_rng(2)
    a = rng.normal(size=20)
    data = SurvivalData(
        groups=[f"G{i % 4}" for i in range(20)],
        durations=rng.uniform(1, 5, 20),
        X=np.column_stack([np.ones(20), a, 2.0 * a]),
        names=(CONSTANT, "credit_growth", "credit_copy"),
    )
    spec = ModelSpec(label="M", covariates=("credit_growth", "credit_copy"))
    with pytest.raises(CollinearityError) as excinfo:
        fit_frailty_model(data, spec)
    assert {"credit_growth", "credit_copy"} <= set(excinfo.value.columns)


def test_fit_rejects_mismatched_columns() -> None:
    """Test data columns must match the model's covariates."""
    data = _random_data(1, n_groups=3, max_spells=3)
    with pytest.raises(DebtCyclesError, match="do not match"):
        fit_frailty_model(data, ModelSpec(label="M2", covariates=("credit",)))


def test_survival_data_from_spells() -> None:
    """Test spells become an intercept plus the requested columns."""
    records = [
        SpellRecord(
            country=country,
            group="AE",
            kind="expansion",
            horizon="short",
            start=QuarterIndex(year=2000, quarter=1),
            duration=duration,
            amplitude=5.0,
            flags=AssociationFlags(credit=credit),
            covariates={"credit_growth": growth},
        )
        for country, duration, credit, growth in [("AUS", 4, 1, 0.5), ("CAN", 7, 0, -1.0)]
    ]
    dataset = SpellDataset(
        kind="expansion", horizon="short", records=records, covariate_names=["credit_growth"]
    )
    data = survival_data_from_spells(
        dataset, ModelSpec(label="M6", covariates=("credit", "credit_growth"))
    )
    assert data.names == (CONSTANT, "credit", "credit_growth")
    np.testing.assert_array_equal(data.X, [[1.0, 1.0, 0.5], [1.0, 0.0, -1.0]])
    np.testing.assert_array_equal(data.durations, [4.0, 7.0])
    assert data.n_groups == 2

    with pytest.raises(DebtCyclesError):
        survival_data_from_spells(
            SpellDataset(kind="expansion", horizon="short"), ModelSpec(label="M1")
        )


def test_model_ladder() -> None:
    """Test the default ladder and its restriction by label."""
    ladder = default_model_ladder()
    assert [m.label for m in ladder] == [f"M{i}" for i in range(1, 9)]
    assert ladder[0].covariates == ()
    assert ladder[4].covariates == ("credit", "house", "equity")
    assert ladder[7].covariates == ("credit", "house", "equity", "credit_growth", "house_growth")
    assert [m.label for m in select_models(ladder, ["M5", "M1"])] == ["M1", "M5"]
    with pytest.raises(DebtCyclesError, match="M9"):
        select_models(ladder, ["M1", "M9"])


def test_interaction_and_robustness_models() -> None:
    """Test the pooled interaction model and the robustness variants."""
    pooled = interaction_model("EM")
    assert pooled.label == POOLED
    assert pooled.covariates[3] == "EM"
    assert "equity_x_EM" in pooled.covariates

    models = robustness_models(["gdp_growth"], ["pc1", "pc2"])
    assert [m.label for m in models] == ["D-gdp_growth", "PCA"]
    assert models[0].covariates[-1] == "gdp_growth"
    assert models[1].covariates[-2:] == ("pc1", "pc2")

    orthogonal = orthogonal_ladder(["credit_orth", "house_orth", "equity_orth"])
    assert [m.label for m in orthogonal] == ["O1", "O2", "O3", "O4", "O5"]
    assert orthogonal[0].covariates == ()
    assert orthogonal[2].covariates == ("house_orth",)
    assert orthogonal[4].covariates == ("credit_orth", "house_orth", "equity_orth")
