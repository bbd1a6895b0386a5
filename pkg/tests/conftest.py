from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from town import make_town_osm  # noqa: E402

from mobisynth.identity import build_identity, two_state_config, weekday_config  # noqa: E402
from mobisynth.osm import parse_extract  # noqa: E402
from mobisynth.traffic import OfflineProvider  # noqa: E402


@pytest.fixture(scope="session")
def town_xml() -> bytes:
    return make_town_osm()


@pytest.fixture(scope="session")
def town(town_xml):
    return parse_extract(town_xml)


@pytest.fixture(scope="session")
def pois(town):
    return town[0]


@pytest.fixture(scope="session")
def graph(town):
    return town[1]


@pytest.fixture(scope="session")
def provider(graph):
    return OfflineProvider(graph)


@pytest.fixture(scope="session")
def weekday_identity(pois):
    return build_identity(pois, weekday_config(), 7)


@pytest.fixture(scope="session")
def two_state_identity(pois):
    return build_identity(pois, two_state_config(), 3)


def four_state_config():
    from mobisynth.identity import IdentityConfig, StateTemplate, hms
    from mobisynth.osm import PoiKind
    return IdentityConfig((
        StateTemplate("Home", PoiKind.RESIDENTIAL, significant=True),
        StateTemplate("Work", PoiKind.WORK, significant=True, arrival_window=(hms(8), hms(9, 30)),
                      t_min_s=hms(8)),
        StateTemplate("School", PoiKind.SCHOOL, origin="Home", destination="Work",
                      arrival_window=(hms(7), hms(8, 30)), t_min_s=300, frequency_bounds=(2, 5)),
        StateTemplate("Gas Station", PoiKind.GAS_STATION, origin="Home", destination="Work", t_min_s=300),
    ))


@pytest.fixture(scope="session")
def four_state_identity(pois):
    return build_identity(pois, four_state_config(), 5)


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(n: int, ok: bool, detail: str) -> None:
    line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
