"""Synthetic spells, turning-point series and panels with known ground truth."""

import hashlib
import logging
from typing import Dict, List, Optional, Tuple

import numpy as np

from debt_cycles.errors import DebtCyclesError
from debt_cycles.estimation.survival import CONSTANT
from debt_cycles.schemas import (
    FINANCIAL_KINDS,
    CensoringRules,
    Panel,
    PanelSimConfig,
    Phase,
    QuarterlySeries,
    SimConfig,
    SimulatedDurations,
    SurvivalData,
    TurningPoint,
    TurningSchedule,
)

logger = logging.getLogger(__name__)

RNG_ALGORITHM = "PCG64"
MACRO_VARIABLES = ("gdp", "money", "cpi", "reer", "balance", "oil")


def subseed(seed: int, index: int) -> int:
    """Derived seed of stream ``index``: blake2b of the (seed, index) byte pair, first 8 bytes."""
    mask = 0xFFFFFFFFFFFFFFFF
    key = (seed & mask).to_bytes(8, "little") + (index & mask).to_bytes(8, "little")
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(subseed(seed, index)))


def simulate_frailty_durations(cfg: SimConfig) -> SimulatedDurations:
    """
    Draw spells from the shared-frailty Weibull model.

    Group i gets alpha_i from the inverse Gaussian with mean 1 and variance
    theta (numpy's ``wald``, an exact transformation sampler; theta = 0 gives
    alpha_i = 1). Each spell sets t = [E / (alpha_i exp(X b))]^(1/p) with
    E ~ Exp(1) and b = -p * beta_aft. Every group draws from its own sub-seeded
    stream.

    Args:
        cfg: Simulation settings.

    Returns:
        The spells, the true parameters and the frailty draws.
    """
    low, high = cfg.spells_per_group
    beta = np.asarray(cfg.beta_aft, dtype=float)
    groups: List[str] = []
    durations: List[np.ndarray] = []
    rows: List[np.ndarray] = []
    frailties = np.ones(cfg.groups)
    width = len(str(cfg.groups))

    for g in range(cfg.groups):
        rng = _rng(cfg.seed, g)
        n = int(rng.integers(low, high + 1))
        if cfg.theta > 0:
            frailties[g] = rng.wald(1.0, 1.0 / cfg.theta)
        columns = [np.ones(n)]
        for law in cfg.covariates:
            if law.law == "normal":
                columns.append(rng.standard_normal(n))
            else:
                columns.append((rng.random(n) < law.rate).astype(float))
        X = np.column_stack(columns)
        eta = -cfg.p * (X @ beta)
        e = rng.standard_exponential(n)
        durations.append((e / (frailties[g] * np.exp(eta))) ** (1.0 / cfg.p))
        rows.append(X)
        groups.extend([f"G{g:0{width}d}"] * n)

    data = SurvivalData(
        groups=groups,
        durations=np.concatenate(durations),
        X=np.vstack(rows),
        names=(CONSTANT, *(law.name for law in cfg.covariates)),
    )
    logger.debug("Simulated %d spells in %d groups", data.n_obs, cfg.groups)
    return SimulatedDurations(
        data=data,
        beta_aft=list(cfg.beta_aft),
        p=cfg.p,
        theta=cfg.theta,
        frailties=frailties,
        rng=RNG_ALGORITHM,
    )


def simulate_turning_series(
    sched: TurningSchedule, seed: int, rules: Optional[CensoringRules] = None
) -> Tuple[QuarterlySeries, List[Phase]]:
    """
    Piecewise-linear series through the knots plus Gaussian noise.

    ``padding`` quarters mirrored around each end knot are prepended and
    appended, so the end knots are interior extrema of the series.

    Args:
        sched: Knots, noise and padding.
        seed: Noise seed.
        rules: Rules the knot spacing must satisfy; short-horizon rules by default.

    Returns:
        The series and the true phases between consecutive knots. Endpoint
        values are the knot targets, which the noiseless series passes through.

    Raises:
        DebtCyclesError: If knots are closer than min_phase, alternate knots
            closer than min_cycle, or padding exceeds an end leg.
    """
    rules = rules or CensoringRules.for_horizon("short")
    times = [q for q, _ in sched.knots]
    ordinals = np.array([q.ordinal for q in times])
    legs = np.diff(ordinals)
    if np.any(legs < rules.min_phase):
        raise DebtCyclesError(f"knots closer than min_phase={rules.min_phase} quarters")
    if np.any(ordinals[2:] - ordinals[:-2] < rules.min_cycle):
        raise DebtCyclesError(f"alternate knots closer than min_cycle={rules.min_cycle} quarters")
    if sched.padding > min(legs[0], legs[-1]):
        raise DebtCyclesError("padding longer than the first or last leg")

    values = np.array([v for _, v in sched.knots], dtype=float)
    inner = np.interp(np.arange(ordinals[0], ordinals[-1] + 1), ordinals, values)
    k = sched.padding
    path = np.concatenate([inner[k:0:-1], inner, inner[-2 : -k - 2 : -1]])
    noise = np.random.Generator(np.random.PCG64(seed)).normal(0.0, sched.noise_sd, path.shape[0])
    path = path + noise

    start = times[0].shift(-k)
    series = QuarterlySeries(
        country=sched.country,
        variable=sched.variable,
        start=start,
        values=tuple(float(v) for v in path),
    )
    # a knot is a trough when its neighbour lies above it
    neighbours = np.append(values[1:], values[-2])
    points = [
        TurningPoint(kind="trough" if nb > v else "peak", time=q, value=float(v))
        for q, v, nb in zip(times, values, neighbours)
    ]
    phases = [
        Phase(kind="expansion" if a.kind == "trough" else "contraction", start=a, end=b)
        for a, b in zip(points, points[1:])
    ]
    return series, phases


def _leg_knots(
    rng: np.random.Generator, n: int, phase_range: Tuple[int, int], first_up: bool
) -> Tuple[np.ndarray, np.ndarray]:
    """Alternating log-level knots covering offsets before 0 to past n-1."""
    low, high = phase_range
    offsets = [-int(rng.integers(0, high))]
    up = first_up
    logs = [0.0]
    while offsets[-1] < n + high:
        offsets.append(offsets[-1] + int(rng.integers(low, high + 1)))
        step = rng.uniform(0.05, 0.25)
        logs.append(logs[-1] + (step if up else -step))
        up = not up
    return np.array(offsets, dtype=float), np.array(logs)


def _cycle_path(
    rng: np.random.Generator, cfg: PanelSimConfig, base: float, knots: Tuple[np.ndarray, np.ndarray]
) -> np.ndarray:
    offsets, logs = knots
    level = base * np.exp(np.interp(np.arange(cfg.n_quarters), offsets, logs))
    return level * (1.0 + cfg.noise_sd / 100.0 * rng.standard_normal(cfg.n_quarters))


def _trend_path(
    rng: np.random.Generator, n: int, base: float, drift: float, vol: float
) -> np.ndarray:
    return base * np.exp(np.cumsum(drift + vol * rng.standard_normal(n)))


def simulate_panel(cfg: PanelSimConfig) -> Panel:
    """
    Synthetic panel with debt, financial and macro series for every country.

    Each financial cycle draws its own knots, so whether a debt phase starts
    near a financial peak or trough varies within a country. Oil prices are
    shared by all countries.

    Args:
        cfg: Panel settings.

    Returns:
        Panel with variables debt, credit, house, equity and the macro set.
    """
    n = cfg.n_quarters
    oil = _trend_path(_rng(cfg.seed, 0), n, 40.0, 0.004, 0.06)
    series: Dict[str, Dict[str, QuarterlySeries]] = {}
    groups: Dict[str, str] = {}
    index = 0
    for label in sorted(cfg.countries_per_group):
        for c in range(cfg.countries_per_group[label]):
            index += 1
            country = f"{label}{c + 1:02d}"
            rng = _rng(cfg.seed, index)
            knots = _leg_knots(rng, n, cfg.phase_range, first_up=bool(rng.integers(0, 2)))
            paths = {"debt": _cycle_path(rng, cfg, rng.uniform(30.0, 90.0), knots)}
            for kind in FINANCIAL_KINDS:
                legs = _leg_knots(rng, n, cfg.phase_range, first_up=bool(rng.integers(0, 2)))
                paths[kind] = _cycle_path(rng, cfg, rng.uniform(50.0, 150.0), legs)
            paths["gdp"] = _trend_path(rng, n, 100.0, 0.006, 0.008)
            paths["money"] = _trend_path(rng, n, 100.0, 0.012, 0.015)
            paths["cpi"] = _trend_path(rng, n, 100.0, 0.007, 0.004)
            paths["reer"] = _trend_path(rng, n, 100.0, 0.0, 0.02)
            paths["balance"] = np.cumsum(0.3 * rng.standard_normal(n))
            paths["oil"] = oil
            series[country] = {
                variable: QuarterlySeries(
                    country=country,
                    variable=variable,
                    start=cfg.start,
                    values=tuple(float(v) for v in values),
                )
                for variable, values in paths.items()
            }
            groups[country] = label
    logger.info("Simulated panel: %d countries, %d quarters", len(series), n)
    return Panel(series=series, groups=groups)
