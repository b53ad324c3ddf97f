"""Boom/bust association dummies and spell-level regression datasets."""

import logging
from typing import Callable, Dict, List, Mapping, Optional, Sequence

import pandas as pd

from debt_cycles.cycles.stats import metrics_from_endpoints
from debt_cycles.errors import DebtCyclesError
from debt_cycles.schemas import (
    FINANCIAL_KINDS,
    AssociationFlags,
    AssociationWindow,
    DroppedSpell,
    Horizon,
    Phase,
    PhaseKind,
    SpellDataset,
    SpellRecord,
    TurningPoint,
)

logger = logging.getLogger(__name__)

CovariateProvider = Callable[[str, Phase], Dict[str, float]]
FinancialPoints = Mapping[str, Mapping[str, Sequence[TurningPoint]]]


def associate_phase(
    debt_phase: Phase, fin_points: Sequence[TurningPoint], win: AssociationWindow
) -> int:
    """
    Association dummy of one debt phase with one financial cycle.

    An expansion is associated with a bust when a financial peak lies within
    w quarters of the debt trough opening it; a contraction with a boom when a
    financial trough lies within w quarters of the debt peak opening it.

    Args:
        debt_phase: Public-debt phase.
        fin_points: Turning points of one financial series of the same country.
        win: Association window.

    Returns:
        1 if any qualifying financial turning point is in [t-w, t+w], else 0.
    """
    t = debt_phase.start.time
    required = "peak" if debt_phase.kind == "expansion" else "trough"
    return int(any(p.kind == required and abs(p.time - t) <= win.w for p in fin_points))


def interaction_name(kind: str, group_label: str) -> str:
    return f"{kind}_x_{group_label}"


def build_spell_dataset(
    debt_phases: Mapping[str, Sequence[Phase]],
    financial_points: FinancialPoints,
    covariate_provider: Optional[CovariateProvider],
    win: AssociationWindow,
    *,
    kind: PhaseKind,
    horizon: Horizon,
    groups: Mapping[str, str],
    interaction_group: Optional[str] = None,
) -> SpellDataset:
    """
    Flatten completed debt phases of one kind into regression rows.

    Args:
        debt_phases: country -> dated debt phases.
        financial_points: financial type (credit/house/equity) -> country -> turning points.
        covariate_provider: Callable (country, phase) -> covariates; raising a
            DebtCyclesError drops the spell.
        win: Association window.
        kind: Phase kind kept ("expansion" or "contraction").
        horizon: Horizon label stored on each record.
        groups: country -> economy group label.
        interaction_group: If given, add a membership dummy for this group and
            flag x membership interaction columns.

    Returns:
        SpellDataset whose row count equals completed phases minus drops.
    """
    records: List[SpellRecord] = []
    dropped: List[DroppedSpell] = []
    covariate_names: List[str] = []

    for country in sorted(debt_phases):
        group = groups[country]
        for phase in debt_phases[country]:
            if phase.kind != kind:
                continue
            flags = AssociationFlags(
                **{
                    fin: associate_phase(phase, financial_points.get(fin, {}).get(country, ()), win)
                    for fin in FINANCIAL_KINDS
                }
            )
            try:
                metrics = metrics_from_endpoints(
                    phase.start.value, phase.end.value, phase.duration
                )
                covariates = covariate_provider(country, phase) if covariate_provider else {}
            except DebtCyclesError as e:
                logger.info("Dropped %s %s at %s: %s", country, kind, phase.start.time, e)
                dropped.append(
                    DroppedSpell(country=country, kind=kind, start=phase.start.time, reason=str(e))
                )
                continue

            if interaction_group is not None:
                member = 1.0 if group == interaction_group else 0.0
                covariates[interaction_group] = member
                for fin, flag in flags.as_dict().items():
                    covariates[interaction_name(fin, interaction_group)] = flag * member

            if not covariate_names:
                covariate_names = list(covariates)
            records.append(
                SpellRecord(
                    country=country,
                    group=group,
                    kind=kind,
                    horizon=horizon,
                    start=phase.start.time,
                    duration=phase.duration,
                    amplitude=metrics.amplitude,
                    flags=flags,
                    covariates=covariates,
                )
            )

    if dropped:
        logger.info("%s %s spells: kept %d, dropped %d", horizon, kind, len(records), len(dropped))
    return SpellDataset(
        kind=kind,
        horizon=horizon,
        records=records,
        dropped=dropped,
        covariate_names=covariate_names,
    )


def spells_to_frame(dataset: SpellDataset) -> pd.DataFrame:
    """Spell rows in the stable export column order."""
    rows = []
    for r in dataset.records:
        row = {
            "country": r.country,
            "group": r.group,
            "kind": r.kind,
            "horizon": r.horizon,
            "start": str(r.start),
            "duration": r.duration,
            "amplitude": r.amplitude,
            **r.flags.as_dict(),
        }
        row.update({name: r.covariates[name] for name in dataset.covariate_names})
        rows.append(row)
    columns = [
        "country",
        "group",
        "kind",
        "horizon",
        "start",
        "duration",
        "amplitude",
        *FINANCIAL_KINDS,
        *dataset.covariate_names,
    ]
    return pd.DataFrame(rows, columns=columns)
