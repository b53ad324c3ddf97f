"""Stage bodies of the debt-cycle pipeline."""

import logging
from typing import Any, Dict, Iterable, List, Optional, TypedDict, TypeVar

import numpy as np
import pandas as pd
from tqdm import tqdm

from debt_cycles.cycles.association import associate_phase, build_spell_dataset, spells_to_frame
from debt_cycles.cycles.dating import date_series
from debt_cycles.cycles.stats import conditional_duration_means, phase_metrics, summarize
from debt_cycles.errors import DebtCyclesError, SeriesTooShortError
from debt_cycles.estimation.covariates import (
    CORE_COVARIATES,
    MACRO_COVARIATES,
    PanelCovariateProvider,
    orthogonalize,
    pca,
)
from debt_cycles.estimation.fe_regression import fit_fixed_effects
from debt_cycles.estimation.survival import (
    POOLED,
    default_model_ladder,
    fit_frailty_model,
    interaction_model,
    lr_test,
    orthogonal_ladder,
    robustness_models,
    select_models,
    survival_data_from_spells,
)
from debt_cycles.parsers.panel_csv import load_panel
from debt_cycles.pipeline import report
from debt_cycles.schemas import (
    FINANCIAL_KINDS,
    AssociationFlags,
    DatingResult,
    FeFit,
    FrailtyFit,
    LrTestResult,
    ModelSpec,
    Panel,
    RunConfig,
    SpellDataset,
    TaggedPhase,
    TurningPoint,
)

logger = logging.getLogger(__name__)

DEBT = "debt"
PHASE_KINDS: tuple = ("expansion", "contraction")
BENCHMARK = "M1"

T = TypeVar("T")


class PipelineState(TypedDict, total=False):
    """State passed between pipeline stages."""

    config: RunConfig
    panel: Panel
    dating: Dict[str, Dict[str, DatingResult]]
    spells: Dict[str, SpellDataset]
    survival: Dict[str, List[FrailtyFit]]
    benchmarks: Dict[str, FrailtyFit]
    lr: Dict[str, Dict[str, LrTestResult]]
    amplitude: Dict[str, List[FeFit]]
    robustness: Dict[str, List[FrailtyFit]]
    orthogonal: Dict[str, List[FrailtyFit]]
    amplitude_robustness: Dict[str, Dict[str, List[FeFit]]]
    tables: Dict[str, Any]
    results: Dict[str, Any]


def _progress(items: Iterable[T], config: RunConfig, desc: str) -> Iterable[T]:
    return tqdm(list(items), desc=desc, disable=not config.progress)


def _require(state: PipelineState, key: str) -> Any:
    if key not in state:
        raise DebtCyclesError(f"stage input {key!r} missing; run the earlier stages first")
    return state[key]  # type: ignore[literal-required]


def load_stage(state: PipelineState) -> PipelineState:
    """Load the panel and keep the requested economy group."""
    config = state["config"]
    if not config.panel or not config.groups_path:
        raise DebtCyclesError("both a panel file and a group-map file are required")
    panel = load_panel(config.panel, config.groups_path, config.allowed_groups)
    if config.group != "all":
        keep = {c: g for c, g in panel.groups.items() if g == config.group}
        if not keep:
            raise DebtCyclesError(f"no countries in group {config.group!r}")
        panel = Panel(
            series={c: s for c, s in panel.series.items() if c in keep},
            groups=keep,
        )
    if DEBT not in {v for c in panel.countries() for v in panel.variables(c)}:
        raise DebtCyclesError("panel has no debt series")
    state["panel"] = panel
    state["tables"] = {}
    state["results"] = {}
    return state


def date_stage(state: PipelineState) -> PipelineState:
    """Date the debt series and the financial series of every country."""
    config = state["config"]
    panel: Panel = _require(state, "panel")
    rules = config.censoring_rules()
    dating: Dict[str, Dict[str, DatingResult]] = {}
    for country in _progress(panel.countries(), config, "dating"):
        for variable in (DEBT, *FINANCIAL_KINDS):
            series = panel.get(country, variable)
            if series is None:
                continue
            try:
                result = date_series(series, rules)
            except SeriesTooShortError:
                if variable == DEBT:
                    raise
                logger.warning("%s/%s too short to date; treated as acyclical", country, variable)
                continue
            dating.setdefault(variable, {})[country] = result
    state["dating"] = dating
    results = [r for variable in sorted(dating) for _, r in sorted(dating[variable].items())]
    state["tables"].update(report.dating_tables(results))
    return state


def _interaction_group(state: PipelineState) -> Optional[str]:
    config = state["config"]
    labels = set(state["panel"].groups.values())
    if config.group == "all" and config.interaction_group in labels and len(labels) > 1:
        return config.interaction_group
    return None


def associate_stage(state: PipelineState) -> PipelineState:
    """Build one spell dataset per debt phase kind."""
    config = state["config"]
    panel: Panel = state["panel"]
    dating = _require(state, "dating")
    debt_phases = {c: r.phases for c, r in dating[DEBT].items()}
    financial = {
        kind: {c: r.turning_points for c, r in dating.get(kind, {}).items()}
        for kind in FINANCIAL_KINDS
    }
    provider = PanelCovariateProvider(panel, config.covariate_windows)
    spells: Dict[str, SpellDataset] = {}
    for kind in PHASE_KINDS:
        spells[kind] = build_spell_dataset(
            debt_phases,
            financial,
            provider,
            config.window(),
            kind=kind,
            horizon=config.horizon,
            groups=panel.groups,
            interaction_group=_interaction_group(state),
        )
        state["tables"][f"spells_{kind}"] = spells_to_frame(spells[kind])
    state["tables"]["dropped_spells"] = pd.DataFrame(
        [
            {**d.model_dump(mode="json"), "start": str(d.start)}
            for kind in PHASE_KINDS
            for d in spells[kind].dropped
        ],
        columns=["country", "kind", "start", "reason"],
    )
    state["spells"] = spells
    return state


def _points(
    dating: Dict[str, Dict[str, DatingResult]], variable: str, country: str
) -> List[TurningPoint]:
    result = dating.get(variable, {}).get(country)
    return [] if result is None else result.turning_points


def stats_stage(state: PipelineState) -> PipelineState:
    """
    Summary moments of all dated debt phases.

    Mean durations conditional on the association flags need the spell
    datasets and are added only when the associate stage ran.
    """
    config = state["config"]
    panel: Panel = state["panel"]
    dating = _require(state, "dating")
    window = config.window()
    tagged: List[TaggedPhase] = []
    for country, result in sorted(dating[DEBT].items()):
        series = panel.series[country][DEBT]
        for phase in result.phases:
            flags = AssociationFlags(
                **{
                    kind: associate_phase(phase, _points(dating, kind, country), window)
                    for kind in FINANCIAL_KINDS
                }
            )
            try:
                metrics = phase_metrics(series, phase)
            except DebtCyclesError as e:
                logger.info("Skipped %s phase at %s in summary: %s", country, phase.start.time, e)
                continue
            tagged.append(
                TaggedPhase(
                    country=country,
                    group=panel.groups[country],
                    horizon=config.horizon,
                    phase=phase,
                    metrics=metrics,
                    flags=flags,
                )
            )
    state["tables"]["summary"] = report.summary_table(summarize(tagged, panel.groups))
    spells: Optional[Dict[str, SpellDataset]] = state.get("spells")
    if spells is not None:
        records = [r for kind in PHASE_KINDS for r in spells[kind].records]
        state["tables"]["conditional_durations"] = report.conditional_table(
            conditional_duration_means(records)
        )
    return state


def _ladder(state: PipelineState) -> List[ModelSpec]:
    ladder = default_model_ladder()
    group = _interaction_group(state)
    if group is not None:
        ladder.append(interaction_model(group))
    return select_models(ladder, state["config"].models)


def _fit(dataset: SpellDataset, spec: ModelSpec, config: RunConfig) -> FrailtyFit:
    data = survival_data_from_spells(dataset, spec)
    return fit_frailty_model(
        data, spec, restarts=config.restarts, max_iter=config.max_iter, seed=config.seed
    )


def _benchmark(state: PipelineState, kind: str) -> FrailtyFit:
    benchmarks = state.setdefault("benchmarks", {})
    if kind not in benchmarks:
        benchmarks[kind] = _fit(state["spells"][kind], ModelSpec(label=BENCHMARK), state["config"])
    return benchmarks[kind]


def survival_stage(state: PipelineState) -> PipelineState:
    """Fit the model ladder per phase kind with LR tests against the benchmark."""
    config = state["config"]
    spells: Dict[str, SpellDataset] = _require(state, "spells")
    ladder = _ladder(state)
    survival: Dict[str, List[FrailtyFit]] = {}
    lr: Dict[str, Dict[str, LrTestResult]] = {}
    for kind in PHASE_KINDS:
        fits = [
            _fit(spells[kind], spec, config)
            for spec in _progress(ladder, config, f"survival {kind}")
        ]
        for fit in fits:
            if fit.label == BENCHMARK:
                state.setdefault("benchmarks", {})[kind] = fit
        benchmark = _benchmark(state, kind)
        lr[kind] = {fit.label: lr_test(fit, benchmark) for fit in fits}
        survival[kind] = fits
        state["tables"][f"survival_{kind}"] = report.survival_table(fits, lr[kind])
        state["tables"][f"time_ratios_{kind}"] = report.time_ratio_table(fits)
        state["results"][f"survival_{kind}"] = [f.model_dump() for f in fits]
        state["results"][f"lr_{kind}"] = {k: v.model_dump() for k, v in lr[kind].items()}
    state["survival"] = survival
    state["lr"] = lr
    return state


def _fe_fits(
    dataset: SpellDataset, specs: List[ModelSpec], config: RunConfig, desc: str
) -> List[FeFit]:
    if not dataset.records:
        raise DebtCyclesError(f"no {dataset.horizon} {dataset.kind} spells")
    y = np.array([r.amplitude for r in dataset.records])
    groups = [r.country for r in dataset.records]
    fits = []
    for spec in _progress(specs, config, desc):
        X = np.empty((len(y), 0))
        if spec.covariates:
            X = np.column_stack([dataset.column(c) for c in spec.covariates])
        fits.append(fit_fixed_effects(y, X, groups, list(spec.covariates), label=spec.label))
    return fits


def amplitude_stage(state: PipelineState) -> PipelineState:
    """Fixed-effects regressions of phase amplitude on the ladder covariates."""
    config = state["config"]
    spells: Dict[str, SpellDataset] = _require(state, "spells")
    # the pooled group dummy is constant within countries, so C1 has no FE counterpart
    ladder = [spec for spec in _ladder(state) if spec.label != POOLED]
    amplitude: Dict[str, List[FeFit]] = {}
    for kind in PHASE_KINDS:
        fits = _fe_fits(spells[kind], ladder, config, f"amplitude {kind}")
        amplitude[kind] = fits
        state["tables"][f"amplitude_{kind}"] = report.fe_table(fits)
        state["results"][f"amplitude_{kind}"] = [f.model_dump() for f in fits]
    state["amplitude"] = amplitude
    return state


def _robustness_dataset(dataset: SpellDataset, config: RunConfig) -> tuple:
    """Add principal components of the macro controls and orthogonalized dummies."""
    macro = [name for name in MACRO_COVARIATES if name in dataset.covariate_names]
    columns: Dict[str, np.ndarray] = {}
    components: List[str] = []
    pca_result = None
    if macro:
        pca_result = pca(np.column_stack([dataset.column(m) for m in macro]), macro)
        n_components = min(config.pca_components, len(macro))
        components = [f"pc{j + 1}" for j in range(n_components)]
        for j, name in enumerate(components):
            columns[name] = pca_result.scores[:, j]
    core = np.column_stack([dataset.column(c) for c in CORE_COVARIATES])
    orthogonal = []
    for kind in FINANCIAL_KINDS:
        name = f"{kind}_orth"
        columns[name] = orthogonalize(dataset.column(kind), core)
        orthogonal.append(name)
    return dataset.with_columns(columns), macro, components, orthogonal, pca_result


def robustness_stage(state: PipelineState) -> PipelineState:
    """
    Robustness variants of the duration and amplitude models.

    Per phase kind: M8 plus one macro control at a time and M8 plus the
    principal components (``robustness_*``), then the ladder on orthogonalized
    dummies (``orthogonal_*``). Both sets are fitted as frailty duration
    models and as fixed-effects amplitude regressions (``amplitude_robustness_*``
    and ``amplitude_orthogonal_*``).
    """
    config = state["config"]
    spells: Dict[str, SpellDataset] = _require(state, "spells")
    robustness: Dict[str, List[FrailtyFit]] = {}
    orthogonal_fits: Dict[str, List[FrailtyFit]] = {}
    amplitude: Dict[str, Dict[str, List[FeFit]]] = {}
    fitted = {"robustness": robustness, "orthogonal": orthogonal_fits}
    for kind in PHASE_KINDS:
        dataset, macro, components, orthogonal, pca_result = _robustness_dataset(
            spells[kind], config
        )
        benchmark = _benchmark(state, kind)
        variants = {
            "robustness": robustness_models(macro, components),
            "orthogonal": orthogonal_ladder(orthogonal),
        }
        amplitude[kind] = {}
        for name, models in variants.items():
            fits = [
                _fit(dataset, spec, config)
                for spec in _progress(models, config, f"{name} {kind}")
            ]
            lr = {fit.label: lr_test(fit, benchmark) for fit in fits}
            state["tables"][f"{name}_{kind}"] = report.survival_table(fits, lr)
            state["results"][f"{name}_{kind}"] = [f.model_dump() for f in fits]
            fitted[name][kind] = fits

            fe_fits = _fe_fits(dataset, models, config, f"amplitude {name} {kind}")
            amplitude[kind][name] = fe_fits
            state["tables"][f"amplitude_{name}_{kind}"] = report.fe_table(fe_fits)
            state["results"][f"amplitude_{name}_{kind}"] = [f.model_dump() for f in fe_fits]

        if pca_result is not None:
            state["tables"][f"pca_{kind}"] = report.pca_table(pca_result)
            share = pca_result.cumulative(len(components))
            state["results"][f"pca_share_{kind}"] = share
            logger.info(
                "%s: first %d components explain %.1f%%", kind, len(components), 100 * share
            )
    state["robustness"] = robustness
    state["orthogonal"] = orthogonal_fits
    state["amplitude_robustness"] = amplitude
    return state


STAGES = {
    "load": load_stage,
    "date": date_stage,
    "associate": associate_stage,
    "stats": stats_stage,
    "survival": survival_stage,
    "amplitude": amplitude_stage,
    "robustness": robustness_stage,
}
