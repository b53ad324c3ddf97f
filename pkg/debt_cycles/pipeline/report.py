"""Result tables and the atomic, hashed output bundle."""

import hashlib
import json
import logging
import math
import re
import shutil
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import pandas as pd

from debt_cycles import __version__
from debt_cycles.cycles.stats import TOTAL_GROUP
from debt_cycles.schemas import (
    FINANCIAL_KINDS,
    CoefficientRow,
    ConditionalDurationRow,
    DatingResult,
    FeFit,
    FrailtyFit,
    GroupSummary,
    LrTestResult,
    PcaResult,
)
from debt_cycles.simulate import RNG_ALGORITHM

logger = logging.getLogger(__name__)

DECIMALS = 4
EXTENSIONS = {"csv": "csv", "md": "md", "json": "json"}
MANIFEST = "manifest.json"
RESULTS = "results.json"


def _num(value: Optional[float]) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return f"{value:.{DECIMALS}f}"


def format_cell(row: CoefficientRow) -> str:
    """Render a coefficient as ``0.6155*** (0.1234)``; SE omitted when unavailable."""
    cell = f"{_num(row.estimate)}{row.stars}"
    if row.std_error is not None:
        cell += f" ({_num(row.std_error)})"
    return cell


def survival_table(fits: Sequence[FrailtyFit], lr: Mapping[str, LrTestResult]) -> pd.DataFrame:
    """
    Coefficient rows x model columns, then the shape, frailty and fit rows.

    Args:
        fits: Fits in column order.
        lr: Model label -> LR test against the benchmark.

    Returns:
        Frame whose first column holds the row labels.
    """
    names: List[str] = []
    for fit in fits:
        names += [n for n in fit.names if n not in names]
    columns: Dict[str, List[str]] = {}
    for fit in fits:
        cells = {row.name: format_cell(row) for row in fit.coefficients()}
        column = [cells.get(name, "") for name in names]
        column.append(cells["ln_p"])
        column.append(cells["ln_theta"])
        column.append(_num(fit.log_likelihood))
        test = lr.get(fit.label)
        column.append("" if test is None or test.df == 0 else f"{_num(test.statistic)}{test.stars}")
        column.append(str(fit.n_obs))
        column.append(str(fit.n_groups))
        column.append("yes" if fit.converged else "no")
        columns[fit.label] = column
    labels = names + [
        "Weibull shape parameter (ln p)",
        "Frailty parameter (ln theta)",
        "Log likelihood",
        "LR Chi-squared",
        "Observations",
        "Countries",
        "Converged",
    ]
    return pd.DataFrame({"": labels, **columns})


def time_ratio_table(fits: Sequence[FrailtyFit]) -> pd.DataFrame:
    rows = [
        {"model": fit.label, "covariate": name, "coefficient": b, "time_ratio": ratio}
        for fit in fits
        for (name, ratio), b in zip(fit.time_ratios().items(), fit.beta_aft)
        if name != "Constant"
    ]
    return pd.DataFrame(rows, columns=["model", "covariate", "coefficient", "time_ratio"])


def fe_table(fits: Sequence[FeFit]) -> pd.DataFrame:
    names: List[str] = []
    for fit in fits:
        names += [n for n in fit.names if n not in names]
    names.append("Constant")
    columns: Dict[str, List[str]] = {}
    for fit in fits:
        cells = {row.name: format_cell(row) for row in fit.coefficient_rows()}
        column = [cells.get(name, "") for name in names]
        column += [_num(fit.log_likelihood), str(fit.n_obs), str(fit.n_groups)]
        columns[fit.label] = column
    return pd.DataFrame({"": names + ["Log likelihood", "Observations", "Countries"], **columns})


def summary_table(rows: Sequence[GroupSummary]) -> pd.DataFrame:
    """Duration, amplitude and slope moments per horizon, phase kind and group."""
    records = []
    for r in rows:
        record: Dict[str, Any] = {
            "horizon": r.horizon,
            "kind": r.kind,
            "group": r.group,
            "events": r.n_events,
        }
        for measure in ("duration", "amplitude", "slope"):
            moments = getattr(r, measure)
            record[f"{measure}_mean"] = moments.mean
            record[f"{measure}_sd"] = moments.sd
            record[f"{measure}_se"] = moments.se
        for kind in FINANCIAL_KINDS:
            record[f"{kind}_associated"] = r.associations.get(kind, 0)
        records.append(record)
    frame = pd.DataFrame(records)
    if not frame.empty:
        frame["_total"] = frame["group"] == TOTAL_GROUP
        frame = frame.sort_values(["horizon", "kind", "_total", "group"], kind="stable").drop(
            columns="_total"
        )
    return frame.reset_index(drop=True)


def conditional_table(rows: Sequence[ConditionalDurationRow]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in rows])


def series_table_name(country: str, variable: str) -> str:
    """File stem of one series' phase table, e.g. ``phases_AUS_debt``."""
    return "phases_" + "_".join(re.sub(r"[^A-Za-z0-9-]+", "-", s) for s in (country, variable))


def dating_tables(results: Sequence[DatingResult]) -> Dict[str, pd.DataFrame]:
    """
    Turning points, phases and incomplete segments of every dated series.

    Besides the combined tables there is one phase table per (country,
    variable), named by ``series_table_name``.
    """
    points, phases, segments = [], [], []
    per_series: Dict[str, pd.DataFrame] = {}
    for res in results:
        key = {"country": res.country, "variable": res.variable}
        for p in res.turning_points:
            points.append({**key, "kind": p.kind, "quarter": str(p.time), "value": p.value})
        rows = [
            {
                "kind": ph.kind,
                "start": str(ph.start.time),
                "end": str(ph.end.time),
                "duration": ph.duration,
            }
            for ph in res.phases
        ]
        phases += [{**key, **row} for row in rows]
        per_series[series_table_name(res.country, res.variable)] = pd.DataFrame(
            rows, columns=["kind", "start", "end", "duration"]
        )
        for start, end in res.incomplete_segments:
            segments.append({**key, "start": str(start), "end": str(end)})
    return {
        "turning_points": pd.DataFrame(
            points, columns=["country", "variable", "kind", "quarter", "value"]
        ),
        "phases": pd.DataFrame(
            phases, columns=["country", "variable", "kind", "start", "end", "duration"]
        ),
        "incomplete_segments": pd.DataFrame(
            segments, columns=["country", "variable", "start", "end"]
        ),
        **per_series,
    }


def pca_table(result: PcaResult) -> pd.DataFrame:
    frame = pd.DataFrame(result.loadings, index=list(result.names))
    frame.columns = [f"pc{j + 1}" for j in range(frame.shape[1])]
    frame.loc["explained"] = result.explained
    frame.loc["cumulative"] = result.explained.cumsum()
    return frame.reset_index(names="")


def render(frame: pd.DataFrame, fmt: str) -> str:
    """Render a table as CSV, markdown or JSON records with 4-decimal floats."""
    if fmt == "csv":
        return frame.to_csv(index=False, float_format=f"%.{DECIMALS}f", lineterminator="\n")
    if fmt == "md":
        if frame.empty:
            return "| " + " | ".join(map(str, frame.columns)) + " |\n"
        return frame.to_markdown(index=False, floatfmt=f".{DECIMALS}f") + "\n"
    if fmt == "json":
        return frame.round(DECIMALS).to_json(orient="records", indent=2) + "\n"
    raise ValueError(f"unknown output format {fmt!r}")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _dump(payload: Any) -> str:
    return json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n"


def write_bundle(
    tables: Mapping[str, pd.DataFrame],
    results: Mapping[str, Any],
    out_dir: Union[str, Path],
    fmt: str,
    run_config: Mapping[str, Any],
    seed: int,
) -> Path:
    """
    Write tables, raw results and a manifest, replacing out_dir atomically.

    Files go to a sibling staging directory that is renamed to out_dir on
    success and removed on failure. The manifest carries no timestamps.

    Args:
        tables: Table name -> frame.
        results: JSON-serializable raw results.
        out_dir: Destination directory.
        fmt: csv, md or json.
        run_config: Configuration recorded in the manifest.
        seed: Run seed.

    Returns:
        The output directory.
    """
    out = Path(out_dir)
    staging = out.with_name(out.name + ".partial")
    if staging.exists():
        shutil.rmtree(staging)
    staging.mkdir(parents=True)
    try:
        for name in sorted(tables):
            (staging / f"{name}.{EXTENSIONS[fmt]}").write_text(render(tables[name], fmt))
        (staging / RESULTS).write_text(_dump(results))
        manifest = {
            "version": __version__,
            "seed": seed,
            "rng": RNG_ALGORITHM,
            "format": fmt,
            "config": dict(run_config),
            "files": {p.name: _sha256(p) for p in sorted(staging.iterdir())},
        }
        (staging / MANIFEST).write_text(_dump(manifest))
        if out.exists():
            shutil.rmtree(out)
        staging.rename(out)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    logger.info("Wrote %d tables to %s", len(tables), out)
    return out
