import re

import pytest

from disinfox import ActorRef, CountryRef, SourceRef, load_default_taxonomy, new_incident
from disinfox.stix import load_default_catalog
from disinfox.store import Store

# the ten techniques of the howitzer-resale reference incident
URFH_TECHNIQUES = [
    "T0002",
    "T0019.001",
    "T0040",
    "T0043",
    "T0104",
    "T0111",
    "T0045",
    "T0115.003",
    "T0119",
    "T0117",
]
URFH_NAME = "Ukraine re-sold French howitzers for profit"
URFH_DESCRIPTION = (
    "Claims that Ukraine had sold CAESAR howitzers, donated by France to support "
    "its defence against Russia, to third parties for profit."
)


@pytest.fixture(scope="session")
def taxonomy():
    return load_default_taxonomy()


@pytest.fixture(scope="session")
def catalog():
    return load_default_catalog()


@pytest.fixture(scope="session")
def urfh_record(taxonomy):
    return new_incident(
        name=URFH_NAME,
        description=URFH_DESCRIPTION,
        first_seen="2022-06-20T00:00:00Z",
        actor=ActorRef("Russia", "nation-state"),
        countries=[CountryRef("France")],
        techniques=URFH_TECHNIQUES,
        sources=[SourceRef("https://example.org/howitzer-analysis", "Analysis report")],
        taxonomy=taxonomy,
        strict=True,
    )


@pytest.fixture(scope="session")
def fixed_clock():
    from datetime import datetime, timezone

    return lambda: datetime(2024, 12, 25, 23, 35, 11, 862880, tzinfo=timezone.utc)


@pytest.fixture()
def store(tmp_path):
    return Store(str(tmp_path / "store"))


def pytest_terminal_summary(terminalreporter):
    """One pass/fail line per acceptance criterion at the end of the run."""
    results: dict[int, bool] = {}
    for status in ("passed", "failed", "error"):
        for report in terminalreporter.stats.get(status, []):
            nodeid = getattr(report, "nodeid", "")
            if "test_acceptance" not in nodeid:
                continue
            if status == "passed" and getattr(report, "when", "call") != "call":
                continue
            match = re.search(r"criterion_(\d+)", nodeid)
            if match:
                number = int(match.group(1))
                results[number] = results.get(number, True) and status == "passed"
    if results:
        terminalreporter.write_sep("-", "acceptance criteria")
        for number in sorted(results):
            verdict = "PASS" if results[number] else "FAIL"
            terminalreporter.write_line(f"criterion {number}: {verdict}")
