"""Pydantic schemas for cycle dating, spell datasets and model fits."""

import hashlib
import math
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    computed_field,
    field_validator,
    model_validator,
)
from scipy import stats

Horizon = Literal["short", "medium"]
TurningKind = Literal["peak", "trough"]
PhaseKind = Literal["expansion", "contraction"]
FinancialKind = Literal["credit", "house", "equity"]

FINANCIAL_KINDS: Tuple[str, ...] = ("credit", "house", "equity")


class QuarterIndex(BaseModel):
    """A calendar quarter on the panel's time axis."""

    model_config = ConfigDict(frozen=True)

    year: int = Field(..., description="Calendar year")
    quarter: int = Field(..., ge=1, le=4, description="Quarter of the year (1-4)")

    @property
    def ordinal(self) -> int:
        return self.year * 4 + self.quarter - 1

    @classmethod
    def from_ordinal(cls, ordinal: int) -> "QuarterIndex":
        year, index = divmod(ordinal, 4)
        return cls(year=year, quarter=index + 1)

    def shift(self, quarters: int) -> "QuarterIndex":
        """Return the quarter ``quarters`` steps later (earlier when negative)."""
        return QuarterIndex.from_ordinal(self.ordinal + quarters)

    def __sub__(self, other: "QuarterIndex") -> int:
        return self.ordinal - other.ordinal

    def __lt__(self, other: "QuarterIndex") -> bool:
        return self.ordinal < other.ordinal

    def __le__(self, other: "QuarterIndex") -> bool:
        return self.ordinal <= other.ordinal

    def __gt__(self, other: "QuarterIndex") -> bool:
        return self.ordinal > other.ordinal

    def __ge__(self, other: "QuarterIndex") -> bool:
        return self.ordinal >= other.ordinal

    def __str__(self) -> str:
        return f"{self.year}Q{self.quarter}"


class QuarterlySeries(BaseModel):
    """One country's contiguous quarterly observations of one variable."""

    model_config = ConfigDict(frozen=True)

    country: str = Field(..., description="Country identifier")
    variable: str = Field(..., description="Variable name, e.g. debt or credit")
    start: QuarterIndex = Field(..., description="Quarter of the first observation")
    values: Tuple[float, ...] = Field(
        ..., min_length=1, description="Observations in time order without gaps"
    )

    @field_validator("values")
    @classmethod
    def _finite(cls, values: Tuple[float, ...]) -> Tuple[float, ...]:
        if not all(math.isfinite(v) for v in values):
            raise ValueError("series values must be finite")
        return values

    def __len__(self) -> int:
        return len(self.values)

    @property
    def end(self) -> QuarterIndex:
        return self.start.shift(len(self.values) - 1)

    def quarter_at(self, offset: int) -> QuarterIndex:
        return self.start.shift(offset)

    def offset_of(self, quarter: QuarterIndex) -> int:
        return quarter - self.start

    def contains(self, quarter: QuarterIndex) -> bool:
        return 0 <= self.offset_of(quarter) < len(self.values)

    def value_at(self, quarter: QuarterIndex) -> float:
        """
        Get the observation at a quarter.

        Raises:
            KeyError: If the quarter lies outside the series.
        """
        if not self.contains(quarter):
            raise KeyError(f"{quarter} outside {self.country}/{self.variable} series")
        return self.values[self.offset_of(quarter)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


class Panel(BaseModel):
    """Quarterly series keyed by country then variable, with economy groups."""

    model_config = ConfigDict(frozen=True)

    series: Dict[str, Dict[str, QuarterlySeries]] = Field(
        default_factory=dict, description="country -> variable -> series"
    )
    groups: Dict[str, str] = Field(
        default_factory=dict, description="country -> economy group label (e.g. AE, EM)"
    )

    @model_validator(mode="after")
    def _consistent(self) -> "Panel":
        for country, by_variable in self.series.items():
            if country not in self.groups:
                raise ValueError(f"country {country!r} has no group label")
            for variable, s in by_variable.items():
                if s.country != country or s.variable != variable:
                    raise ValueError(
                        f"series keyed {country}/{variable} is {s.country}/{s.variable}"
                    )
        return self

    def countries(self) -> List[str]:
        return sorted(self.series)

    def variables(self, country: str) -> List[str]:
        return sorted(self.series.get(country, {}))

    def get(self, country: str, variable: str) -> Optional[QuarterlySeries]:
        return self.series.get(country, {}).get(variable)

    def group_labels(self) -> List[str]:
        return sorted(set(self.groups.values()))


class CensoringRules(BaseModel):
    """Window and minimum-length rules for turning-point dating."""

    model_config = ConfigDict(frozen=True)

    window: int = Field(2, ge=1, description="Quarters compared on each side of an extremum")
    min_phase: int = Field(2, ge=1, description="Minimum expansion/contraction length")
    min_cycle: int = Field(5, ge=2, description="Minimum peak-to-peak/trough-to-trough length")
    all_offsets: bool = Field(
        True, description="Compare every offset 1..window (False: only offset == window)"
    )

    @model_validator(mode="after")
    def _cycle_covers_phases(self) -> "CensoringRules":
        if self.min_cycle < 2 * self.min_phase + 1:
            raise ValueError(
                f"min_cycle ({self.min_cycle}) must be at least 2*min_phase+1 "
                f"({2 * self.min_phase + 1})"
            )
        return self

    @classmethod
    def for_horizon(cls, horizon: Horizon) -> "CensoringRules":
        if horizon == "medium":
            return cls(window=2, min_phase=4, min_cycle=9)
        return cls(window=2, min_phase=2, min_cycle=5)


class TurningPoint(BaseModel):
    """A dated peak or trough."""

    model_config = ConfigDict(frozen=True)

    kind: TurningKind
    time: QuarterIndex
    value: float


class Phase(BaseModel):
    """An expansion (trough to peak) or contraction (peak to trough)."""

    model_config = ConfigDict(frozen=True)

    kind: PhaseKind
    start: TurningPoint
    end: TurningPoint

    @model_validator(mode="after")
    def _direction(self) -> "Phase":
        if self.end.time <= self.start.time:
            raise ValueError("phase must end after it starts")
        if self.kind == "expansion":
            ok = self.start.kind == "trough" and self.end.kind == "peak"
            ok = ok and self.end.value > self.start.value
        else:
            ok = self.start.kind == "peak" and self.end.kind == "trough"
            ok = ok and self.end.value < self.start.value
        if not ok:
            raise ValueError(
                f"turning points {self.start} -> {self.end} do not bound a {self.kind}"
            )
        return self

    @computed_field  # type: ignore[prop-decorator]
    @property
    def duration(self) -> int:
        return self.end.time - self.start.time


class DatingResult(BaseModel):
    """Turning points and completed phases of one series."""

    country: str
    variable: str
    turning_points: List[TurningPoint] = Field(default_factory=list)
    phases: List[Phase] = Field(default_factory=list)
    incomplete_segments: List[Tuple[QuarterIndex, QuarterIndex]] = Field(
        default_factory=list,
        description="Leading/trailing stretches outside the first/last turning point",
    )


class PhaseMetrics(BaseModel):
    """Duration, amplitude and slope of one phase."""

    duration: int = Field(..., ge=1, description="Quarters")
    amplitude: float = Field(..., description="Percent change across the phase")
    slope: float = Field(..., description="Amplitude per quarter")


class MomentSummary(BaseModel):
    """Mean with sample standard deviation and standard error; None when undefined."""

    mean: Optional[float] = None
    sd: Optional[float] = None
    se: Optional[float] = None


class AssociationFlags(BaseModel):
    """Bust flags for expansions, boom flags for contractions."""

    model_config = ConfigDict(frozen=True)

    credit: int = Field(0, ge=0, le=1)
    house: int = Field(0, ge=0, le=1)
    equity: int = Field(0, ge=0, le=1)

    def as_dict(self) -> Dict[str, int]:
        return {"credit": self.credit, "house": self.house, "equity": self.equity}

    def none(self) -> bool:
        return not (self.credit or self.house or self.equity)


class TaggedPhase(BaseModel):
    """A dated debt phase carrying its country, group, horizon and metrics."""

    country: str
    group: str
    horizon: Horizon
    phase: Phase
    metrics: PhaseMetrics
    flags: Optional[AssociationFlags] = None

    @property
    def kind(self) -> PhaseKind:
        return self.phase.kind


class GroupSummary(BaseModel):
    """Moments of duration, amplitude and slope for one group and phase kind."""

    group: str
    kind: PhaseKind
    horizon: Horizon
    n_events: int = Field(..., ge=0)
    duration: MomentSummary
    amplitude: MomentSummary
    slope: MomentSummary
    associations: Dict[str, int] = Field(
        default_factory=dict, description="Flagged phases per financial-cycle type"
    )


class ConditionalDurationRow(BaseModel):
    """Mean duration of the spells showing one association pattern."""

    group: str
    kind: PhaseKind
    horizon: Horizon
    pattern: str = Field(..., description="'none' or a financial-cycle type")
    n_spells: int
    mean_duration: float


class AssociationWindow(BaseModel):
    """Half-width in quarters of the association interval [t-w, t+w]."""

    model_config = ConfigDict(frozen=True)

    w: int = Field(1, ge=1)

    @classmethod
    def for_horizon(cls, horizon: Horizon) -> "AssociationWindow":
        return cls(w=2 if horizon == "medium" else 1)


class SpellRecord(BaseModel):
    """One public-debt phase flattened to a regression row."""

    country: str
    group: str
    kind: PhaseKind
    horizon: Horizon
    start: QuarterIndex = Field(..., description="Date of the turning point opening the phase")
    duration: int = Field(..., ge=1, description="Quarters")
    amplitude: float = Field(..., description="Percent change of the debt ratio")
    flags: AssociationFlags
    covariates: Dict[str, float] = Field(default_factory=dict)


class DroppedSpell(BaseModel):
    """A completed phase left out of a spell dataset, with the reason."""

    country: str
    kind: PhaseKind
    start: QuarterIndex
    reason: str


class SpellDataset(BaseModel):
    """Spell records of one kind and horizon plus the drop report."""

    kind: PhaseKind
    horizon: Horizon
    records: List[SpellRecord] = Field(default_factory=list)
    dropped: List[DroppedSpell] = Field(default_factory=list)
    covariate_names: List[str] = Field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        """
        Get one regression column by name.

        Flags resolve under their financial-cycle type (credit, house, equity);
        everything else is looked up among the covariates.

        Raises:
            KeyError: If no spell carries the column.
        """
        if name in FINANCIAL_KINDS:
            return np.array([getattr(r.flags, name) for r in self.records], dtype=float)
        if name not in self.covariate_names:
            raise KeyError(f"unknown covariate {name!r}")
        return np.array([r.covariates[name] for r in self.records], dtype=float)

    def with_columns(self, columns: Dict[str, np.ndarray]) -> "SpellDataset":
        """Return a copy with extra covariate columns appended to every record."""
        records = []
        for i, record in enumerate(self.records):
            extra = {name: float(values[i]) for name, values in columns.items()}
            records.append(record.model_copy(update={"covariates": {**record.covariates, **extra}}))
        names = [*self.covariate_names, *[c for c in columns if c not in self.covariate_names]]
        return self.model_copy(update={"records": records, "covariate_names": names})

    def subset(self, keep: np.ndarray) -> "SpellDataset":
        return self.model_copy(
            update={"records": [r for r, k in zip(self.records, keep) if k]}
        )


class WindowSpec(BaseModel):
    """Event-window covariate definition."""

    model_config = ConfigDict(frozen=True)

    name: str = Field(..., description="Output covariate column")
    variable: str = Field(..., description="Panel variable the window reads")
    n_quarters: int = Field(..., ge=1)
    direction: Literal["before", "after"] = "before"
    statistic: Literal["growth", "level"] = "growth"


class PcaResult(BaseModel):
    """Correlation-matrix principal components."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    names: Tuple[str, ...]
    loadings: np.ndarray = Field(..., description="Columns are orthonormal components")
    scores: np.ndarray = Field(..., description="Standardized data times loadings")
    eigenvalues: np.ndarray
    explained: np.ndarray = Field(..., description="Variance fractions, non-increasing")

    def cumulative(self, k: int) -> float:
        return float(np.sum(self.explained[:k]))


class SurvivalData(BaseModel):
    """Spells as (group, duration, covariate row with leading intercept)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    groups: np.ndarray
    durations: np.ndarray
    X: np.ndarray
    names: Tuple[str, ...] = Field(..., description="Column names, 'Constant' first")

    @field_validator("durations", "X", mode="before")
    @classmethod
    def _as_float(cls, value: object) -> np.ndarray:
        return np.asarray(value, dtype=float)

    @field_validator("groups", mode="before")
    @classmethod
    def _as_str(cls, value: object) -> np.ndarray:
        return np.asarray(value).astype(str)

    @model_validator(mode="after")
    def _shapes(self) -> "SurvivalData":
        n = self.durations.shape[0]
        if self.X.ndim != 2 or self.X.shape[0] != n or self.groups.shape[0] != n:
            raise ValueError("groups, durations and X must have one row per spell")
        if self.X.shape[1] != len(self.names):
            raise ValueError("one name per design column required")
        if n == 0:
            raise ValueError("survival data needs at least one spell")
        if not np.all(self.durations > 0):
            raise ValueError("durations must be strictly positive")
        return self

    @property
    def n_obs(self) -> int:
        return int(self.durations.shape[0])

    @property
    def group_codes(self) -> np.ndarray:
        return np.unique(self.groups, return_inverse=True)[1]

    @property
    def n_groups(self) -> int:
        return int(np.unique(self.groups).shape[0])

    @property
    def signature(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.ascontiguousarray(self.durations).tobytes())
        digest.update("\x1f".join(self.groups.tolist()).encode())
        return digest.hexdigest()[:16]


class ModelSpec(BaseModel):
    """A labelled covariate subset, e.g. M5 = the three association dummies."""

    model_config = ConfigDict(frozen=True)

    label: str
    covariates: Tuple[str, ...] = ()


def _stars(p_value: float) -> str:
    if p_value < 0.01:
        return "***"
    if p_value < 0.05:
        return "**"
    if p_value < 0.10:
        return "*"
    return ""


class CoefficientRow(BaseModel):
    """One estimated parameter with its Wald z-test."""

    name: str
    estimate: float
    std_error: Optional[float] = None
    p_value: Optional[float] = None

    @property
    def stars(self) -> str:
        return "" if self.p_value is None else _stars(self.p_value)


def _wald_rows(
    names: List[str], estimates: List[float], ses: Optional[List[float]]
) -> List[CoefficientRow]:
    rows: List[CoefficientRow] = []
    for i, (name, est) in enumerate(zip(names, estimates)):
        se = None if ses is None else ses[i]
        p = None
        if se is not None and se > 0 and math.isfinite(se):
            p = float(2.0 * stats.norm.sf(abs(est / se)))
        rows.append(CoefficientRow(name=name, estimate=est, std_error=se, p_value=p))
    return rows


class FrailtyFit(BaseModel):
    """Weibull AFT shared inverse-Gaussian frailty fit."""

    label: str
    names: List[str] = Field(..., description="Coefficient names, 'Constant' first")
    beta_aft: List[float] = Field(..., description="Coefficients on the log-duration scale")
    ln_p: float = Field(..., description="Log Weibull shape")
    ln_theta: float = Field(..., description="Log frailty variance")
    covariance: Optional[List[List[float]]] = None
    standard_errors: Optional[List[float]] = Field(
        None, description="Order: beta_aft..., ln_p, ln_theta; None if the Hessian is singular"
    )
    log_likelihood: float
    converged: bool
    iterations: int
    n_obs: int
    n_groups: int
    theta_pinned: bool = False
    gradient_norm: float = 0.0
    restarts: int = 0
    data_signature: str = ""

    @property
    def param_names(self) -> List[str]:
        return [*self.names, "ln_p", "ln_theta"]

    @property
    def params(self) -> np.ndarray:
        return np.array([*self.beta_aft, self.ln_p, self.ln_theta])

    @property
    def n_params(self) -> int:
        return len(self.beta_aft) + (1 if self.theta_pinned else 2)

    def coefficients(self) -> List[CoefficientRow]:
        return _wald_rows(self.param_names, self.params.tolist(), self.standard_errors)

    def time_ratios(self) -> Dict[str, float]:
        return {name: math.exp(b) for name, b in zip(self.names, self.beta_aft)}


class LrTestResult(BaseModel):
    """Likelihood-ratio statistic, degrees of freedom and chi-squared p-value."""

    statistic: float
    df: int
    p_value: float

    @property
    def stars(self) -> str:
        return _stars(self.p_value)


class FeFit(BaseModel):
    """Within-estimator fixed-effects OLS fit."""

    label: str = ""
    names: List[str] = Field(..., description="Slope names")
    coefficients: List[float]
    standard_errors: List[float]
    constant: float = Field(..., description="Grand mean of the estimated group effects")
    constant_se: float
    group_effects: Dict[str, float]
    residual_variance: float
    log_likelihood: float
    n_obs: int
    n_groups: int
    df_resid: int

    def coefficient_rows(self) -> List[CoefficientRow]:
        return _wald_rows(
            [*self.names, "Constant"],
            [*self.coefficients, self.constant],
            [*self.standard_errors, self.constant_se],
        )


class CovariateLaw(BaseModel):
    """Distribution of one simulated covariate."""

    name: str
    law: Literal["normal", "bernoulli"] = "normal"
    rate: float = Field(0.5, ge=0.0, le=1.0, description="Bernoulli success rate")


class SimConfig(BaseModel):
    """Settings for simulated frailty durations."""

    seed: int = 0
    groups: int = Field(200, ge=1)
    spells_per_group: Tuple[int, int] = Field((8, 8), description="Inclusive range")
    beta_aft: List[float] = Field(..., description="Intercept first, then one per covariate")
    p: float = Field(1.0, gt=0.0)
    theta: float = Field(0.0, ge=0.0)
    covariates: List[CovariateLaw] = Field(default_factory=list)

    @model_validator(mode="after")
    def _shapes(self) -> "SimConfig":
        if len(self.beta_aft) != len(self.covariates) + 1:
            raise ValueError("beta_aft needs an intercept plus one entry per covariate")
        low, high = self.spells_per_group
        if not 1 <= low <= high:
            raise ValueError("spells_per_group must be a range with 1 <= low <= high")
        return self


class SimulatedDurations(BaseModel):
    """Simulated spells with the parameters and frailties that produced them."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    data: SurvivalData
    beta_aft: List[float]
    p: float
    theta: float
    frailties: np.ndarray
    rng: str = "PCG64"


class TurningSchedule(BaseModel):
    """Knots of a piecewise-linear series with alternating extrema."""

    country: str = "SIM"
    variable: str = "debt"
    knots: List[Tuple[QuarterIndex, float]] = Field(..., min_length=2)
    noise_sd: float = Field(0.0, ge=0.0)
    padding: int = Field(2, ge=1, description="Mirrored quarters beyond the end knots")

    @model_validator(mode="after")
    def _alternate(self) -> "TurningSchedule":
        times = [t for t, _ in self.knots]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("knots must be strictly increasing in time")
        values = [v for _, v in self.knots]
        steps = [b - a for a, b in zip(values, values[1:])]
        if any(s == 0 for s in steps) or any(a * b > 0 for a, b in zip(steps, steps[1:])):
            raise ValueError("knot values must alternate above/below their neighbours")
        return self


class PanelSimConfig(BaseModel):
    """Settings for a synthetic country panel."""

    seed: int = 0
    countries_per_group: Dict[str, int] = Field(default_factory=lambda: {"AE": 6, "EM": 6})
    start: QuarterIndex = Field(default_factory=lambda: QuarterIndex(year=1990, quarter=1))
    n_quarters: int = Field(132, ge=24)
    phase_range: Tuple[int, int] = Field((3, 14), description="Leg length range in quarters")
    noise_sd: float = Field(0.15, ge=0.0)


class RunConfig(BaseModel):
    """Merged run configuration (defaults < config file < CLI flags)."""

    panel: Optional[str] = None
    groups_path: Optional[str] = None
    horizon: Horizon = "short"
    group: str = "all"
    association_window: Optional[int] = Field(None, ge=1)
    extrema_window: Optional[int] = Field(None, ge=1)
    min_phase: Optional[int] = Field(None, ge=1)
    min_cycle: Optional[int] = Field(None, ge=2)
    models: Optional[List[str]] = None
    covariate_windows: List[WindowSpec] = Field(default_factory=list)
    out_dir: str = "out"
    output_format: Literal["csv", "md", "json"] = "md"
    seed: int = 0
    restarts: int = Field(5, ge=0)
    max_iter: int = Field(500, ge=1)
    interaction_group: str = "EM"
    pca_components: int = Field(3, ge=1)
    allowed_groups: Tuple[str, ...] = ("AE", "EM")
    progress: bool = False

    @model_validator(mode="after")
    def _rules_consistent(self) -> "RunConfig":
        self.censoring_rules()
        return self

    def censoring_rules(self) -> CensoringRules:
        base = CensoringRules.for_horizon(self.horizon)
        overrides = {
            "window": self.extrema_window,
            "min_phase": self.min_phase,
            "min_cycle": self.min_cycle,
        }
        return CensoringRules(
            **{**base.model_dump(), **{k: v for k, v in overrides.items() if v is not None}}
        )

    def window(self) -> AssociationWindow:
        if self.association_window is not None:
            return AssociationWindow(w=self.association_window)
        return AssociationWindow.for_horizon(self.horizon)
