"""Long-format panel CSV ingestion and emission."""

import logging
from pathlib import Path
from typing import Dict, Iterable, List, Tuple, Union

import numpy as np
import pandas as pd

from debt_cycles.errors import IngestionError, QuarterParseError
from debt_cycles.parsers.quarters import format_quarter, parse_quarter
from debt_cycles.schemas import Panel, QuarterIndex, QuarterlySeries

logger = logging.getLogger(__name__)

PANEL_COLUMNS = ("country", "quarter", "variable", "value")
GROUP_COLUMNS = ("country", "group")

PathLike = Union[str, Path]


def _read_csv(path: PathLike, columns: Tuple[str, ...]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        return pd.DataFrame(columns=list(columns))
    except pd.errors.ParserError as e:
        raise IngestionError(f"malformed CSV: {e}", path=str(path)) from e
    frame.columns = [c.strip() for c in frame.columns]
    if tuple(frame.columns) != columns:
        raise IngestionError(
            f"expected header {','.join(columns)}, found {','.join(frame.columns)}",
            path=str(path),
            line=1,
        )
    # short rows leave NaN even with keep_default_na=False
    short = frame.isna().any(axis=1)
    if short.any():
        index = int(short.idxmax())
        missing = [c for c in columns if pd.isna(frame.at[index, c])]
        raise IngestionError(
            f"row is missing field(s) {', '.join(missing)}", path=str(path), line=index + 2
        )
    return frame


def load_groups(
    groups_path: PathLike, allowed_groups: Iterable[str] = ("AE", "EM")
) -> Dict[str, str]:
    """
    Load the ``country,group`` mapping file.

    Args:
        groups_path: Path of the mapping CSV.
        allowed_groups: Economy group labels accepted.

    Returns:
        Mapping country -> group label.

    Raises:
        IngestionError: On unknown labels or conflicting duplicate rows.
    """
    allowed = set(allowed_groups)
    frame = _read_csv(groups_path, GROUP_COLUMNS)
    groups: Dict[str, str] = {}
    for index, row in frame.iterrows():
        line = int(index) + 2  # type: ignore[call-overload]
        country, label = row["country"].strip(), row["group"].strip()
        if label not in allowed:
            raise IngestionError(
                f"unknown group label {label!r} for {country} (allowed: {sorted(allowed)})",
                path=str(groups_path),
                line=line,
            )
        if groups.get(country, label) != label:
            raise IngestionError(
                f"conflicting group labels for {country}", path=str(groups_path), line=line
            )
        groups[country] = label
    return groups


def _build_series(
    country: str, variable: str, rows: List[Tuple[QuarterIndex, float, int]], path: str
) -> Union[QuarterlySeries, None]:
    rows.sort(key=lambda r: r[0].ordinal)
    for (q_prev, _, _), (q, _, line) in zip(rows, rows[1:]):
        if q == q_prev:
            raise IngestionError(f"duplicate row for {country}/{variable} at {q}", path, line)

    values = np.array([v for _, v, _ in rows], dtype=float)
    observed = np.flatnonzero(~np.isnan(values))
    if observed.size == 0:
        logger.info("Skipping %s/%s: no observed values", country, variable)
        return None
    first, last = int(observed[0]), int(observed[-1])
    kept = rows[first : last + 1]
    for (q_prev, _, _), (q, value, line) in zip(kept, kept[1:]):
        if q - q_prev > 1:
            missing = format_quarter(q_prev.shift(1))
            raise IngestionError(f"gap at {missing} in {country}/{variable}", path, line)
        if np.isnan(value):
            raise IngestionError(f"gap at {format_quarter(q)} in {country}/{variable}", path, line)
    trimmed = len(rows) - len(kept)
    if trimmed:
        logger.debug("Trimmed %d missing edge values from %s/%s", trimmed, country, variable)
    return QuarterlySeries(
        country=country,
        variable=variable,
        start=kept[0][0],
        values=tuple(float(v) for _, v, _ in kept),
    )


def load_panel(
    panel_path: PathLike,
    groups_path: PathLike,
    allowed_groups: Iterable[str] = ("AE", "EM"),
) -> Panel:
    """
    Load a long-format quarterly panel plus its group map.

    Rows may come in any order. Leading and trailing missing values shorten a
    series; interior missing quarters are errors.

    Args:
        panel_path: CSV with header ``country,quarter,variable,value``.
        groups_path: CSV with header ``country,group``.
        allowed_groups: Economy group labels accepted in the map.

    Returns:
        Panel with one QuarterlySeries per (country, variable).

    Raises:
        IngestionError: On malformed rows, gaps, duplicates or missing group labels.
    """
    groups = load_groups(groups_path, allowed_groups)
    frame = _read_csv(panel_path, PANEL_COLUMNS)
    path = str(panel_path)

    buckets: Dict[Tuple[str, str], List[Tuple[QuarterIndex, float, int]]] = {}
    for index, row in frame.iterrows():
        line = int(index) + 2  # type: ignore[call-overload]
        try:
            quarter = parse_quarter(row["quarter"])
        except QuarterParseError as e:
            raise IngestionError(str(e), path, line) from e
        raw = row["value"].strip()
        try:
            value = float(raw) if raw and raw.upper() not in ("NA", "NAN") else float("nan")
        except ValueError as e:
            raise IngestionError(f"non-numeric value {raw!r}", path, line) from e
        key = (row["country"].strip(), row["variable"].strip())
        buckets.setdefault(key, []).append((quarter, value, line))

    series: Dict[str, Dict[str, QuarterlySeries]] = {}
    for country, variable in sorted(buckets):
        if country not in groups:
            raise IngestionError(f"no group label for country {country!r}", str(groups_path))
        built = _build_series(country, variable, buckets[(country, variable)], path)
        if built is not None:
            series.setdefault(country, {})[variable] = built

    logger.info(
        "Loaded %d series for %d countries from %s",
        sum(len(v) for v in series.values()),
        len(series),
        path,
    )
    return Panel(series=series, groups=dict(sorted(groups.items())))


def write_panel_csv(panel: Panel, panel_path: PathLike, groups_path: PathLike) -> None:
    """
    Write a Panel in the long format load_panel consumes.

    Args:
        panel: Panel to write.
        panel_path: Destination of the ``country,quarter,variable,value`` file.
        groups_path: Destination of the ``country,group`` file.
    """
    rows = []
    for country in panel.countries():
        for variable in panel.variables(country):
            s = panel.series[country][variable]
            for offset, value in enumerate(s.values):
                rows.append((country, format_quarter(s.quarter_at(offset)), variable, repr(value)))
    pd.DataFrame(rows, columns=list(PANEL_COLUMNS)).to_csv(panel_path, index=False)
    pd.DataFrame(sorted(panel.groups.items()), columns=list(GROUP_COLUMNS)).to_csv(
        groups_path, index=False
    )
