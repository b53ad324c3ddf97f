"""Quarter literal parsing (``YYYYQn``)."""

import re

from debt_cycles.errors import QuarterParseError
from debt_cycles.schemas import QuarterIndex

_QUARTER_RE = re.compile(r"^(\d{4})Q([1-4])$")


def parse_quarter(text: str) -> QuarterIndex:
    """
    Parse a quarter literal such as ``1988Q2``.

    Args:
        text: Literal in the form YYYYQn with n in 1..4.

    Returns:
        The corresponding QuarterIndex.

    Raises:
        QuarterParseError: If the text is malformed; the message names the token.
    """
    token = str(text).strip()
    match = _QUARTER_RE.match(token)
    if match is None:
        raise QuarterParseError(token)
    return QuarterIndex(year=int(match.group(1)), quarter=int(match.group(2)))


def format_quarter(quarter: QuarterIndex) -> str:
    return f"{quarter.year:04d}Q{quarter.quarter}"
