"""Phase metrics, group summaries and conditional duration means."""

import math
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from debt_cycles.errors import ZeroDenominatorError
from debt_cycles.schemas import (
    FINANCIAL_KINDS,
    ConditionalDurationRow,
    GroupSummary,
    Horizon,
    MomentSummary,
    Phase,
    PhaseKind,
    PhaseMetrics,
    QuarterlySeries,
    SpellRecord,
    TaggedPhase,
)

TOTAL_GROUP = "Total"


def metrics_from_endpoints(start_value: float, end_value: float, duration: int) -> PhaseMetrics:
    if start_value == 0.0:
        raise ZeroDenominatorError("phase starts at a zero value; amplitude undefined")
    amplitude = 100.0 * (end_value - start_value) / start_value
    return PhaseMetrics(duration=duration, amplitude=amplitude, slope=amplitude / duration)


def phase_metrics(series: QuarterlySeries, phase: Phase) -> PhaseMetrics:
    """
    Duration, amplitude and slope of one phase.

    Amplitude is 100*(end - start)/start on the series values; slope is
    amplitude/duration.

    Args:
        series: Series the phase was dated on.
        phase: Phase whose endpoints lie within the series.

    Returns:
        PhaseMetrics for the phase.

    Raises:
        KeyError: If an endpoint lies outside the series.
        ZeroDenominatorError: If the starting value is zero.
    """
    start_value = series.value_at(phase.start.time)
    end_value = series.value_at(phase.end.time)
    return metrics_from_endpoints(start_value, end_value, phase.duration)


def _moments(values: Sequence[float]) -> MomentSummary:
    n = len(values)
    if n == 0:
        return MomentSummary()
    mean = float(np.mean(values))
    if n < 2:
        return MomentSummary(mean=mean)
    sd = float(np.std(values, ddof=1))
    return MomentSummary(mean=mean, sd=sd, se=sd / math.sqrt(n))


def _summary(
    group: str, kind: PhaseKind, horizon: Horizon, phases: Sequence[TaggedPhase]
) -> GroupSummary:
    associations = {name: 0 for name in FINANCIAL_KINDS}
    for tagged in phases:
        if tagged.flags is not None:
            for name, flag in tagged.flags.as_dict().items():
                associations[name] += flag
    return GroupSummary(
        group=group,
        kind=kind,
        horizon=horizon,
        n_events=len(phases),
        duration=_moments([t.metrics.duration for t in phases]),
        amplitude=_moments([t.metrics.amplitude for t in phases]),
        slope=_moments([t.metrics.slope for t in phases]),
        associations=associations,
    )


def summarize(
    phases: Iterable[TaggedPhase],
    grouping: Dict[str, str],
    include_total: bool = True,
) -> List[GroupSummary]:
    """
    Summarize tagged phases per (group, kind, horizon).

    Slope means are means of per-phase slopes. Groups without phases are
    reported with n_events 0 and absent moments.

    Args:
        phases: Phases tagged with country, kind and horizon.
        grouping: Mapping country -> group label.
        include_total: Append a pooled "Total" row per kind and horizon.

    Returns:
        GroupSummary rows ordered by horizon, kind, group.
    """
    tagged = list(phases)
    labels = sorted(set(grouping.values()))
    horizons = sorted({t.horizon for t in tagged})
    rows: List[GroupSummary] = []
    for horizon in horizons:
        for kind in ("expansion", "contraction"):
            in_kind = [t for t in tagged if t.horizon == horizon and t.kind == kind]
            for label in labels:
                members = [t for t in in_kind if grouping.get(t.country) == label]
                rows.append(_summary(label, kind, horizon, members))  # type: ignore[arg-type]
            if include_total:
                rows.append(_summary(TOTAL_GROUP, kind, horizon, in_kind))  # type: ignore[arg-type]
    return rows


def conditional_duration_means(spells: Iterable[SpellRecord]) -> List[ConditionalDurationRow]:
    """
    Mean duration per association pattern.

    For every (group, kind, horizon) the baseline row covers spells with no
    flag set and one row per financial-cycle type covers spells with that
    flag set. A spell flagged for two types counts in both rows.

    Args:
        spells: Spell records carrying association flags.

    Returns:
        Rows for patterns with at least one spell.
    """
    by_cell: Dict[tuple, List[SpellRecord]] = {}
    for spell in spells:
        by_cell.setdefault((spell.group, spell.kind, spell.horizon), []).append(spell)

    rows: List[ConditionalDurationRow] = []
    for (group, kind, horizon), members in sorted(by_cell.items()):
        patterns: List[tuple] = [("none", [s for s in members if s.flags.none()])]
        for name in FINANCIAL_KINDS:
            patterns.append((name, [s for s in members if getattr(s.flags, name) == 1]))
        for pattern, chosen in patterns:
            mean = _mean_duration(chosen)
            if mean is None:
                continue
            rows.append(
                ConditionalDurationRow(
                    group=group,
                    kind=kind,
                    horizon=horizon,
                    pattern=pattern,
                    n_spells=len(chosen),
                    mean_duration=mean,
                )
            )
    return rows


def _mean_duration(spells: Sequence[SpellRecord]) -> Optional[float]:
    if not spells:
        return None
    return float(np.mean([s.duration for s in spells]))
