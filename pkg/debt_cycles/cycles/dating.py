"""Peak/trough dating with alternation, ordering and minimum-length censoring."""

import logging
from typing import List, Optional, Sequence

import numpy as np

from debt_cycles.errors import SeriesTooShortError
from debt_cycles.schemas import (
    CensoringRules,
    DatingResult,
    Phase,
    QuarterlySeries,
    TurningPoint,
)

logger = logging.getLogger(__name__)


def find_candidate_extrema(series: QuarterlySeries, rules: CensoringRules) -> List[TurningPoint]:
    """
    Find local maxima/minima within ``rules.window`` quarters on each side.

    A peak at t requires Y_t - Y_{t+-k} > 0 for every compared offset k, a trough
    requires < 0. Inequalities are strict, so plateaus give no candidate.

    Args:
        series: Quarterly series.
        rules: Censoring rules; ``window`` and ``all_offsets`` are used here.

    Returns:
        Candidate turning points in time order.

    Raises:
        SeriesTooShortError: If the series is shorter than 2*window+1.
    """
    y = series.as_array()
    n, k = y.shape[0], rules.window
    if n < 2 * k + 1:
        raise SeriesTooShortError(
            f"{series.country}/{series.variable}: {n} quarters, need {2 * k + 1} for window {k}"
        )
    offsets = range(1, k + 1) if rules.all_offsets else (k,)
    centre = y[k : n - k]
    diffs = np.stack(
        [centre - y[k - o : n - k - o] for o in offsets]
        + [centre - y[k + o : n - k + o] for o in offsets]
    )
    peaks = np.all(diffs > 0, axis=0)
    troughs = np.all(diffs < 0, axis=0)

    points: List[TurningPoint] = []
    for i in np.flatnonzero(peaks | troughs):
        offset = int(i) + k
        points.append(
            TurningPoint(
                kind="peak" if peaks[i] else "trough",
                time=series.quarter_at(offset),
                value=float(y[offset]),
            )
        )
    return points


def _more_extreme(candidate: TurningPoint, incumbent: TurningPoint) -> bool:
    if candidate.kind == "peak":
        return candidate.value > incumbent.value
    return candidate.value < incumbent.value


def _alternate(points: Sequence[TurningPoint]) -> List[TurningPoint]:
    # Same-kind runs keep their most extreme member; ties keep the earliest.
    out: List[TurningPoint] = []
    for point in points:
        if out and out[-1].kind == point.kind:
            if _more_extreme(point, out[-1]):
                out[-1] = point
        else:
            out.append(point)
    return out


def _ordering_violation(points: Sequence[TurningPoint]) -> Optional[int]:
    for i in range(len(points) - 1):
        a, b = points[i], points[i + 1]
        if a.kind == "trough":
            bad = b.value <= a.value
        else:
            bad = b.value >= a.value
        if not bad:
            continue
        prominence_a = abs(a.value - points[i - 1].value) if i > 0 else 0.0
        prominence_b = abs(b.value - points[i + 2].value) if i + 2 < len(points) else 0.0
        return i if prominence_a < prominence_b else i + 1
    return None


def _excursion_loss(values: Sequence[float], i: int) -> float:
    """Drop in sum |v_{j+1} - v_j| when point i is removed."""
    loss = 0.0
    has_left, has_right = i > 0, i < len(values) - 1
    if has_left:
        loss += abs(values[i] - values[i - 1])
    if has_right:
        loss += abs(values[i + 1] - values[i])
    if has_left and has_right:
        loss -= abs(values[i + 1] - values[i - 1])
    return loss


def _short_phase_deletion(points: Sequence[TurningPoint], min_phase: int) -> Optional[int]:
    bounding = set()
    for i in range(len(points) - 1):
        if points[i + 1].time - points[i].time < min_phase:
            bounding.update((i, i + 1))
    if not bounding:
        return None
    values = [p.value for p in points]
    return min(sorted(bounding), key=lambda i: (_excursion_loss(values, i), i))


def _short_cycle(points: Sequence[TurningPoint], min_cycle: int) -> Optional[int]:
    for i in range(len(points) - 2):
        if points[i + 2].time - points[i].time < min_cycle:
            return i + 1
    return None


def censor_turning_points(
    candidates: Sequence[TurningPoint], series: QuarterlySeries, rules: CensoringRules
) -> List[TurningPoint]:
    """
    Apply the censoring rules until none of them removes a point.

    Order of repair on each pass: alternation, then the leftmost ordering
    violation, then the short phase whose deletion costs least excursion, then
    the leftmost short cycle (its middle point is deleted).

    Args:
        candidates: Candidate extrema sorted by time.
        series: Series the candidates were found on.
        rules: Censoring rules.

    Returns:
        Surviving turning points; may be empty.
    """
    points = list(candidates)
    if any(b.time <= a.time for a, b in zip(points, points[1:])):
        raise ValueError("candidates must be sorted by time")
    passes = 0
    while True:
        passes += 1
        points = _alternate(points)
        for finder in (
            _ordering_violation,
            lambda pts: _short_phase_deletion(pts, rules.min_phase),
            lambda pts: _short_cycle(pts, rules.min_cycle),
        ):
            index = finder(points)
            if index is not None:
                del points[index]
                break
        else:
            break
    logger.debug(
        "%s/%s: %d of %d candidates survive after %d passes",
        series.country,
        series.variable,
        len(points),
        len(candidates),
        passes,
    )
    return points


def extract_phases(points: Sequence[TurningPoint], rules: CensoringRules) -> List[Phase]:
    """
    Turn adjacent turning-point pairs into expansions and contractions.

    Segments before the first and after the last point are incomplete and
    are not returned.

    Args:
        points: Censored turning points.
        rules: Rules the points satisfy.

    Returns:
        One Phase per adjacent pair; empty for fewer than two points.

    Raises:
        ValueError: If the points do not alternate or a phase is shorter than min_phase.
    """
    phases: List[Phase] = []
    for a, b in zip(points, points[1:]):
        phase = Phase(kind="expansion" if a.kind == "trough" else "contraction", start=a, end=b)
        if phase.duration < rules.min_phase:
            raise ValueError(f"phase {a.time}->{b.time} shorter than {rules.min_phase} quarters")
        phases.append(phase)
    return phases


def date_series(series: QuarterlySeries, rules: CensoringRules) -> DatingResult:
    """
    Date turning points and completed phases of one series.

    Args:
        series: Quarterly series.
        rules: Censoring rules.

    Returns:
        DatingResult including the incomplete leading/trailing segments.
    """
    candidates = find_candidate_extrema(series, rules)
    points = censor_turning_points(candidates, series, rules)
    phases = extract_phases(points, rules)
    if points:
        segments = []
        if points[0].time > series.start:
            segments.append((series.start, points[0].time))
        if points[-1].time < series.end:
            segments.append((points[-1].time, series.end))
    else:
        segments = [(series.start, series.end)]
    logger.info(
        "Dated %s/%s: %d turning points, %d phases",
        series.country,
        series.variable,
        len(points),
        len(phases),
    )
    return DatingResult(
        country=series.country,
        variable=series.variable,
        turning_points=points,
        phases=phases,
        incomplete_segments=segments,
    )
