"""Elementary series transforms."""

import numpy as np

from debt_cycles.errors import SeriesTooShortError, ZeroDenominatorError
from debt_cycles.parsers.quarters import format_quarter
from debt_cycles.schemas import QuarterlySeries


def pct_change(series: QuarterlySeries) -> QuarterlySeries:
    """
    Quarter-on-quarter percentage change, 100*(s_t - s_{t-1})/s_{t-1}.

    Args:
        series: Input series of length >= 2.

    Returns:
        Series of changes starting one quarter after the input.

    Raises:
        SeriesTooShortError: If the series has fewer than two values.
        ZeroDenominatorError: If a lagged value is zero; names the quarter.
    """
    if len(series) < 2:
        raise SeriesTooShortError(
            f"pct_change needs at least 2 values, {series.country}/{series.variable} has 1"
        )
    values = series.as_array()
    lagged = values[:-1]
    zeros = np.flatnonzero(lagged == 0.0)
    if zeros.size:
        quarter = series.quarter_at(int(zeros[0]))
        raise ZeroDenominatorError(
            f"zero value at {format_quarter(quarter)} in {series.country}/{series.variable}"
        )
    changes = 100.0 * (values[1:] - lagged) / lagged
    return QuarterlySeries(
        country=series.country,
        variable=f"{series.variable}_pct",
        start=series.start.shift(1),
        values=tuple(float(v) for v in changes),
    )
