"""RFC 3339 timestamp parsing and canonical rendering.

Canonical form is UTC with exactly six fractional digits and a ``Z`` suffix,
e.g. ``2022-06-20T00:00:00.000000Z``. Inputs with fewer fractional digits are
zero-padded; extra digits beyond microseconds are truncated.
"""

from __future__ import annotations

import re
from datetime import date, datetime, timedelta, timezone

_TIMESTAMP_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})"
    r"(?:[Tt ](\d{2}):(\d{2}):(\d{2})(?:\.(\d{1,9}))?"
    r"(Z|z|[+-]\d{2}:\d{2})?)?$"
)


def parse_timestamp(value: str | datetime | date) -> datetime:
    """Parse an RFC 3339 timestamp or date into an aware UTC datetime.

    Date-only inputs expand to midnight UTC. Naive timestamps are taken as
    UTC; offset timestamps are converted. Raises ``ValueError`` otherwise.
    """
    if isinstance(value, datetime):
        if value.tzinfo is None:
            return value.replace(tzinfo=timezone.utc)
        return value.astimezone(timezone.utc)
    if isinstance(value, date):
        return datetime(value.year, value.month, value.day, tzinfo=timezone.utc)
    if not isinstance(value, str):
        raise ValueError(f"not a timestamp: {value!r}")

    match = _TIMESTAMP_RE.match(value.strip())
    if not match:
        raise ValueError(f"not an RFC 3339 timestamp: {value!r}")
    year, month, day = int(match[1]), int(match[2]), int(match[3])
    if match[4] is None:
        return datetime(year, month, day, tzinfo=timezone.utc)

    fraction = match[7] or ""
    microsecond = int(fraction.ljust(6, "0")[:6]) if fraction else 0
    parsed = datetime(
        year, month, day, int(match[4]), int(match[5]), int(match[6]),
        microsecond, tzinfo=timezone.utc,
    )
    offset = match[8]
    if offset and offset not in ("Z", "z"):
        sign = 1 if offset[0] == "+" else -1
        delta = timedelta(hours=int(offset[1:3]), minutes=int(offset[4:6]))
        parsed -= sign * delta
    return parsed


def format_timestamp(value: datetime) -> str:
    """Render an aware datetime in canonical RFC 3339 UTC form."""
    utc = parse_timestamp(value)
    return utc.strftime("%Y-%m-%dT%H:%M:%S.%f") + "Z"


def canonicalize_timestamp(text: str) -> str:
    """Re-render a timestamp string in canonical form (parse then format)."""
    return format_timestamp(parse_timestamp(text))
