"""Tests for quarter parsing, panel ingestion and percentage changes."""

import random
from pathlib import Path
from typing import List

import numpy as np
import pytest

from debt_cycles.errors import IngestionError, QuarterParseError, ZeroDenominatorError
from debt_cycles.parsers.panel_csv import load_groups, load_panel, write_panel_csv
from debt_cycles.parsers.quarters import format_quarter, parse_quarter
from debt_cycles.schemas import QuarterIndex, QuarterlySeries
from debt_cycles.transforms import pct_change

HEADER = "country,quarter,variable,value\n"


def _write(path: Path, lines: List[str], header: str = HEADER) -> Path:
    path.write_text(header + "".join(line + "\n" for line in lines))
    return path


@pytest.fixture
def groups_file(tmp_path: Path) -> Path:
    """Group map with one advanced and one emerging economy."""
    return _write(tmp_path / "groups.csv", ["AUS,AE", "BRA,EM"], header="country,group\n")


def _q(ordinal: int) -> str:
    return format_quarter(QuarterIndex.from_ordinal(ordinal))


def _series(values: List[float]) -> QuarterlySeries:
    return QuarterlySeries(
        country="AUS", variable="debt", start=QuarterIndex(year=2000, quarter=1), values=values
    )


def test_parse_quarter_examples() -> None:
    """Test typical start and end quarters."""
    assert parse_quarter("1988Q2") == QuarterIndex(year=1988, quarter=2)
    assert parse_quarter("2022Q4") == QuarterIndex(year=2022, quarter=4)


@pytest.mark.parametrize("token", ["2022Q5", "2022Q0", "22Q1", "2022-Q1", ""])
def test_parse_quarter_rejects_malformed(token: str) -> None:
    """Test that malformed literals raise and name the token."""
    with pytest.raises(QuarterParseError) as excinfo:
        parse_quarter(token)
    assert repr(token) in str(excinfo.value)


def test_format_quarter_inverts_parse() -> None:
    """Test parse(format(q)) == q across a range of quarters."""
    for ordinal in range(1950 * 4, 2030 * 4, 7):
        q = QuarterIndex.from_ordinal(ordinal)
        assert parse_quarter(format_quarter(q)) == q


def test_quarter_arithmetic() -> None:
    """Test shifting across year boundaries and quarter differences."""
    q = QuarterIndex(year=1998, quarter=4)
    assert q.shift(1) == QuarterIndex(year=1999, quarter=1)
    assert q.shift(-4) == QuarterIndex(year=1997, quarter=4)
    assert QuarterIndex(year=2000, quarter=4) - q == 8


def test_load_panel_builds_series(tmp_path: Path, groups_file: Path) -> None:
    """Test three rows become one series of length 3 starting 1998Q4."""
    panel_file = _write(
        tmp_path / "panel.csv",
        ["AUS,1998Q4,debt,40", "AUS,1999Q1,debt,41", "AUS,1999Q2,debt,42.5"],
    )
    panel = load_panel(panel_file, groups_file)
    series = panel.get("AUS", "debt")
    assert series is not None
    assert len(series) == 3
    assert series.start == QuarterIndex(year=1998, quarter=4)
    assert series.values == (40.0, 41.0, 42.5)
    assert panel.groups["AUS"] == "AE"


def test_load_panel_reports_gap(tmp_path: Path, groups_file: Path) -> None:
    """Test a missing interior quarter is an error naming the quarter and line."""
    panel_file = _write(tmp_path / "panel.csv", ["AUS,1998Q4,debt,40", "AUS,1999Q2,debt,42"])
    with pytest.raises(IngestionError, match="gap at 1999Q1") as excinfo:
        load_panel(panel_file, groups_file)
    assert excinfo.value.line == 3


def test_load_panel_interior_missing_value_is_gap(tmp_path: Path, groups_file: Path) -> None:
    """Test an explicit NA inside the series is a gap."""
    panel_file = _write(
        tmp_path / "panel.csv",
        ["AUS,1998Q4,debt,40", "AUS,1999Q1,debt,NA", "AUS,1999Q2,debt,42"],
    )
    with pytest.raises(IngestionError, match="gap at 1999Q1"):
        load_panel(panel_file, groups_file)


def test_load_panel_trims_edge_missing_values(tmp_path: Path, groups_file: Path) -> None:
    """Test leading and trailing missing values shorten the series."""
    panel_file = _write(
        tmp_path / "panel.csv",
        [
            "AUS,1998Q3,debt,",
            "AUS,1998Q4,debt,40",
            "AUS,1999Q1,debt,41",
            "AUS,1999Q2,debt,NA",
        ],
    )
    series = load_panel(panel_file, groups_file).get("AUS", "debt")
    assert series is not None
    assert series.start == QuarterIndex(year=1998, quarter=4)
    assert series.values == (40.0, 41.0)


def test_load_panel_rejects_duplicates(tmp_path: Path, groups_file: Path) -> None:
    """Test a repeated (country, quarter, variable) row is an error."""
    panel_file = _write(tmp_path / "panel.csv", ["AUS,1998Q4,debt,40", "AUS,1998Q4,debt,41"])
    with pytest.raises(IngestionError, match="duplicate"):
        load_panel(panel_file, groups_file)


def test_load_panel_requires_group(tmp_path: Path, groups_file: Path) -> None:
    """Test a country absent from the group map is an error."""
    panel_file = _write(tmp_path / "panel.csv", ["CHN,1998Q4,debt,40"])
    with pytest.raises(IngestionError, match="CHN"):
        load_panel(panel_file, groups_file)


def test_load_panel_rejects_short_row(tmp_path: Path, groups_file: Path) -> None:
    """Test a row without its value field is an ingestion error on that line."""
    panel_file = _write(tmp_path / "panel.csv", ["AUS,1998Q4,debt,40", "AUS,1999Q1,debt"])
    with pytest.raises(IngestionError, match="missing field") as excinfo:
        load_panel(panel_file, groups_file)
    assert excinfo.value.line == 3
    assert "value" in str(excinfo.value)


def test_load_groups_rejects_short_row(tmp_path: Path) -> None:
    """Test a group-map row without a label is an ingestion error."""
    path = _write(tmp_path / "groups.csv", ["AUS,AE", "BRA"], header="country,group\n")
    with pytest.raises(IngestionError, match="missing field") as excinfo:
        load_groups(path)
    assert excinfo.value.line == 3


def test_load_panel_rejects_long_row(tmp_path: Path, groups_file: Path) -> None:
    """Test a row with extra fields is an ingestion error."""
    panel_file = _write(tmp_path / "panel.csv", ["AUS,1998Q4,debt,40", "AUS,1999Q1,debt,41,9"])
    with pytest.raises(IngestionError, match="malformed CSV"):
        load_panel(panel_file, groups_file)


def test_load_groups_rejects_unknown_label(tmp_path: Path) -> None:
    """Test labels outside the allowed set are rejected."""
    path = _write(tmp_path / "groups.csv", ["AUS,XX"], header="country,group\n")
    with pytest.raises(IngestionError, match="XX"):
        load_groups(path)


def test_load_panel_empty_file(tmp_path: Path) -> None:
    """Test empty inputs give an empty panel."""
    panel_file = tmp_path / "panel.csv"
    panel_file.write_text("")
    groups = tmp_path / "groups.csv"
    groups.write_text("")
    panel = load_panel(panel_file, groups)
    assert panel.countries() == []


def test_load_panel_is_order_insensitive(tmp_path: Path, groups_file: Path) -> None:
    """Test shuffled rows give an identical panel."""
    lines = [f"AUS,{_q(8000 + i)},debt,{i + 1}" for i in range(12)]
    lines += [f"BRA,{_q(8002 + i)},credit,{2 * i + 1}" for i in range(9)]
    first = load_panel(_write(tmp_path / "a.csv", lines), groups_file)
    shuffled = list(lines)
    random.Random(7).shuffle(shuffled)
    second = load_panel(_write(tmp_path / "b.csv", shuffled), groups_file)
    assert first == second


def test_write_panel_round_trips(tmp_path: Path, groups_file: Path) -> None:
    """Test the written CSV loads back to the same panel."""
    lines = [f"AUS,{_q(8000 + i)},debt,{0.1 * i + 3}" for i in range(6)]
    panel = load_panel(_write(tmp_path / "panel.csv", lines), groups_file)
    write_panel_csv(panel, tmp_path / "out.csv", tmp_path / "out_groups.csv")
    again = load_panel(tmp_path / "out.csv", tmp_path / "out_groups.csv")
    assert again.series == panel.series


def test_pct_change_examples() -> None:
    """Test percentage changes on small series."""
    assert pct_change(_series([100, 110])).values == pytest.approx((10.0,))
    assert pct_change(_series([50, 100, 50])).values == pytest.approx((100.0, -50.0))
    assert pct_change(_series([7, 7, 7, 7])).values == (0.0, 0.0, 0.0)


def test_pct_change_starts_one_quarter_later() -> None:
    """Test the output series is aligned to the later quarter."""
    out = pct_change(_series([1, 2, 3]))
    assert out.start == QuarterIndex(year=2000, quarter=2)
    assert out.variable == "debt_pct"


def test_pct_change_geometric_series_is_constant() -> None:
    """Test a geometric series gives 100(r - 1) everywhere."""
    values = 50.0 * 1.03 ** np.arange(40)
    out = np.array(pct_change(_series(values.tolist())).values)
    np.testing.assert_allclose(out, 3.0, rtol=1e-12)


def test_pct_change_zero_denominator() -> None:
    """Test a zero lagged value raises and names the quarter."""
    with pytest.raises(ZeroDenominatorError, match="2000Q2"):
        pct_change(_series([1, 0, 2]))
