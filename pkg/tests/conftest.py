from __future__ import annotations

from datetime import datetime

import pytest

from aircongest import ingest, series, synth
from aircongest.ingest import FlightRecord

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def dep(ts_sched: str, ts_actual: str | None, airport: str = "CAN", other: str = "PEK", fid: str = "F1",
        delay_s: int | None = None) -> FlightRecord:
    sched = datetime.fromisoformat(ts_sched)
    actual = datetime.fromisoformat(ts_actual) if ts_actual else None
    arr_s = sched.replace(hour=(sched.hour + 2) % 24)
    return FlightRecord(fid, airport, other, sched, actual, arr_s, arr_s if actual else None, delay_s)


def arr(ts_sched: str, ts_actual: str | None, airport: str = "CAN", other: str = "PEK",
        fid: str = "F2") -> FlightRecord:
    sched = datetime.fromisoformat(ts_sched)
    actual = datetime.fromisoformat(ts_actual) if ts_actual else None
    dep_s = sched.replace(hour=(sched.hour - 2) % 24)
    return FlightRecord(fid, other, airport, dep_s, dep_s if actual else None, sched, actual)


@pytest.fixture(scope="session")
def synthetic_year():
    """(records, planted labels) of the default four-regime year, seed 11."""
    return synth.simulate_year(seed=11)


@pytest.fixture(scope="session")
def synthetic_movements(synthetic_year):
    records, _ = synthetic_year
    data = ingest.clean(records, "SYN")
    return data, series.movements(data)


@pytest.fixture(scope="session")
def synthetic_csv(tmp_path_factory, synthetic_year):
    path = tmp_path_factory.mktemp("synth") / "flights.csv"
    synth.write_records_csv(synthetic_year[0], path)
    return path
