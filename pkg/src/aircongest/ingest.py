"""Parsing, validation and cleaning of raw flight-movement records."""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import BinaryIO, Iterable, Mapping

logger = logging.getLogger(__name__)

# Minute-of-day bounds of the operational window [05:00, 25:00).
WINDOW_START_MIN = 5 * 60
WINDOW_END_MIN = 25 * 60
DELAY_TOLERANCE_S = 60

CANONICAL_FIELDS: tuple[str, ...] = (
    "flight_id",
    "origin",
    "destination",
    "sched_dep",
    "actual_dep",
    "sched_arr",
    "actual_arr",
    "dep_delay_s",
)
MANDATORY_FIELDS: tuple[str, ...] = (
    "flight_id",
    "origin",
    "destination",
    "sched_dep",
    "actual_dep",
    "sched_arr",
    "actual_arr",
)
DEFAULT_COLUMNS: dict[str, str] = {name: name for name in CANONICAL_FIELDS}


class IngestError(Exception):
    """Fatal input problem: unreadable stream or missing mandatory column."""


@dataclass(frozen=True, slots=True)
class FlightRecord:
    flight_id: str
    origin: str
    destination: str
    sched_dep: datetime
    actual_dep: datetime | None
    sched_arr: datetime
    actual_arr: datetime | None
    dep_delay_s: int | None = None

    def departure_delay_s(self) -> float | None:
        """Departure delay in seconds; the carried column wins over recomputation."""
        if self.dep_delay_s is not None:
            return float(self.dep_delay_s)
        if self.actual_dep is None:
            return None
        return (self.actual_dep - self.sched_dep).total_seconds()

    def arrival_delay_s(self) -> float | None:
        if self.actual_arr is None:
            return None
        return (self.actual_arr - self.sched_arr).total_seconds()


@dataclass(frozen=True)
class Reject:
    line: int
    row: tuple[str, ...]
    reason: str


@dataclass
class ParseResult:
    records: list[FlightRecord]
    rejects: list[Reject]
    header: tuple[str, ...] = ()

    @property
    def rows_read(self) -> int:
        return len(self.records) + len(self.rejects)


@dataclass
class CleanDataset:
    records: list[FlightRecord]
    airport: str
    dropped_missing: int = 0
    dropped_airport: int = 0
    dropped_window: int = 0

    @property
    def input_count(self) -> int:
        return len(self.records) + self.dropped_missing + self.dropped_airport + self.dropped_window


def minute_of_day(ts: datetime) -> int:
    return ts.hour * 60 + ts.minute


def in_window(ts: datetime, start: int = WINDOW_START_MIN, end: int = WINDOW_END_MIN) -> bool:
    """True when ``ts`` falls in the operational window [start, end) minutes.

    ``end`` may exceed 1440 to reach into the next calendar day; with the
    defaults only 01:00-04:59 is outside.
    """
    m = minute_of_day(ts)
    if start <= m < min(end, 1440):
        return True
    return m + 1440 < end


def _parse_ts(text: str) -> datetime:
    ts = datetime.fromisoformat(text.strip())
    if ts.tzinfo is not None:
        raise ValueError("timezone-aware timestamp")
    return ts


def _parse_optional_ts(text: str) -> datetime | None:
    return _parse_ts(text) if text.strip() else None


def _parse_row(values: Mapping[str, str]) -> FlightRecord:
    """Build one record; raises ValueError with a reason code on bad input."""
    origin = values["origin"].strip().upper()
    destination = values["destination"].strip().upper()
    for code in (origin, destination):
        if len(code) != 3 or not code.isalnum():
            raise ValueError("bad_iata")
    if origin == destination:
        raise ValueError("origin_equals_destination")
    try:
        sched_dep = _parse_ts(values["sched_dep"])
        sched_arr = _parse_ts(values["sched_arr"])
        actual_dep = _parse_optional_ts(values["actual_dep"])
        actual_arr = _parse_optional_ts(values["actual_arr"])
    except ValueError:
        raise ValueError("bad_timestamp") from None
    raw_delay = values.get("dep_delay_s", "").strip()
    dep_delay_s: int | None = None
    if raw_delay:
        try:
            dep_delay_s = int(round(float(raw_delay)))
        except ValueError:
            raise ValueError("bad_delay") from None
        if actual_dep is not None:
            expected = (actual_dep - sched_dep).total_seconds()
            if abs(dep_delay_s - expected) > DELAY_TOLERANCE_S:
                raise ValueError("delay_mismatch")
    return FlightRecord(
        flight_id=values["flight_id"].strip(),
        origin=origin,
        destination=destination,
        sched_dep=sched_dep,
        actual_dep=actual_dep,
        sched_arr=sched_arr,
        actual_arr=actual_arr,
        dep_delay_s=dep_delay_s,
    )


def parse_records(source: BinaryIO, columns: Mapping[str, str] | None = None) -> ParseResult:
    """Parse a UTF-8 CSV byte stream into flight records.

    ``columns`` maps canonical field names to the header names used in the
    file; unmapped fields default to their canonical name. ``dep_delay_s`` is
    optional. Malformed rows end up in ``rejects`` with a reason code.
    """
    mapping = dict(DEFAULT_COLUMNS)
    if columns:
        unknown = set(columns) - set(CANONICAL_FIELDS)
        if unknown:
            raise IngestError(f"unknown canonical field(s) in column mapping: {sorted(unknown)}")
        mapping.update(columns)
    try:
        text = io.TextIOWrapper(source, encoding="utf-8-sig", newline="")
        reader = csv.reader(text)
        header = next(reader, None)
    except (OSError, UnicodeDecodeError, ValueError) as exc:
        raise IngestError(f"unreadable input: {exc}") from exc
    if header is None:
        raise IngestError("empty input: header row missing")
    header = tuple(h.strip() for h in header)
    position = {name: i for i, name in enumerate(header)}
    for canonical in MANDATORY_FIELDS:
        if mapping[canonical] not in position:
            raise IngestError(f"missing mandatory column: {mapping[canonical]!r}")
    index = {c: position[mapping[c]] for c in CANONICAL_FIELDS if mapping[c] in position}

    records: list[FlightRecord] = []
    rejects: list[Reject] = []
    try:
        for line, row in enumerate(reader, start=2):
            if not row:
                rejects.append(Reject(line, (), "empty_row"))
                continue
            if len(row) != len(header):
                rejects.append(Reject(line, tuple(row), "field_count"))
                continue
            values = {c: row[i] for c, i in index.items()}
            try:
                records.append(_parse_row(values))
            except ValueError as exc:
                rejects.append(Reject(line, tuple(row), str(exc)))
    except (csv.Error, UnicodeDecodeError) as exc:
        raise IngestError(f"unreadable input: {exc}") from exc
    finally:
        text.detach()
    if rejects:
        logger.warning("%d malformed row(s) rejected", len(rejects))
    return ParseResult(records, rejects, header)


def read_records(path: str | Path, columns: Mapping[str, str] | None = None) -> ParseResult:
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise IngestError(f"cannot open {path}: {exc}") from exc
    with fh:
        return parse_records(fh, columns)


def write_rejects(rejects: Iterable[Reject], header: tuple[str, ...], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("line", *header, "reason"))
        for rej in rejects:
            writer.writerow((rej.line, *rej.row, rej.reason))


def event_time(record: FlightRecord, airport: str) -> datetime | None:
    """Actual time of the event that happens at ``airport``."""
    if record.origin == airport:
        return record.actual_dep
    if record.destination == airport:
        return record.actual_arr
    return None


def clean(
    records: Iterable[FlightRecord],
    airport: str,
    window: tuple[int, int] = (WINDOW_START_MIN, WINDOW_END_MIN),
) -> CleanDataset:
    """Drop incomplete, off-airport and out-of-window records.

    Filters run in that order so ``dropped_missing`` is counted over the
    whole input, the way a network-wide dataset is audited.
    """
    airport = airport.upper()
    kept: list[FlightRecord] = []
    missing = other = dead = 0
    for rec in records:
        if rec.actual_dep is None or rec.actual_arr is None:
            missing += 1
            continue
        ts = event_time(rec, airport)
        if ts is None:
            other += 1
            continue
        if not in_window(ts, *window):
            dead += 1
            continue
        kept.append(rec)
    if not kept:
        logger.warning("no records left for airport %s after cleaning", airport)
    return CleanDataset(kept, airport, missing, other, dead)
