"""Per-day four-channel congestion series.

Channels, in order: summed positive departure-delay minutes, summed
positive arrival-delay minutes, departure count, arrival count, each
sampled on ``n_ts`` bins of ``dt`` minutes across the operational day.
"""

from __future__ import annotations

import calendar
import csv
import logging
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from .ingest import WINDOW_END_MIN, WINDOW_START_MIN, CleanDataset

logger = logging.getLogger(__name__)

CHANNELS = ("dep_delay", "arr_delay", "dep_count", "arr_count")
DEPARTURE, ARRIVAL = 0, 1


@dataclass(frozen=True)
class SeriesConfig:
    t_start: int = WINDOW_START_MIN
    t_end: int = WINDOW_END_MIN
    dt: int = 15

    def __post_init__(self) -> None:
        span = self.t_end - self.t_start
        if self.dt <= 0 or span <= 0 or span > 24 * 60 or span % self.dt:
            raise ValueError(f"invalid series window {self.t_start}-{self.t_end} step {self.dt}")

    @property
    def n_ts(self) -> int:
        return (self.t_end - self.t_start) // self.dt

    @property
    def window(self) -> tuple[int, int]:
        return (self.t_start, self.t_end)


@dataclass(frozen=True)
class DailySeries:
    day: date
    day_index: int
    channels: np.ndarray  # shape (4, n_ts)

    @property
    def n_movements(self) -> int:
        return int(self.channels[2].sum() + self.channels[3].sum())


def window_offset(event_time: datetime, cfg: SeriesConfig = SeriesConfig()) -> tuple[date, int] | None:
    """Operational day and minutes elapsed since its window start, or None."""
    m = event_time.hour * 60 + event_time.minute
    span = cfg.t_end - cfg.t_start
    if m >= cfg.t_start and m - cfg.t_start < span:
        return event_time.date(), m - cfg.t_start
    if m + 1440 - cfg.t_start < span:
        return event_time.date() - timedelta(days=1), m + 1440 - cfg.t_start
    return None


def assign_day(event_time: datetime, cfg: SeriesConfig = SeriesConfig()) -> tuple[date, int] | None:
    """Map an event to ``(operational day, bin)``; None in the dead window.

    Events between midnight and the window end belong to the previous
    calendar day's operational day.
    """
    hit = window_offset(event_time, cfg)
    if hit is None:
        return None
    return hit[0], hit[1] // cfg.dt


@dataclass(frozen=True)
class Movements:
    """Columnar view of the movements at one airport.

    ``op_day`` holds ``date.toordinal()`` of the operational day of the
    actual event time; ``offset`` its minutes into the window. The
    ``sched_*`` pair does the same for the scheduled time (-1 when the
    scheduled time falls in the dead window).
    """

    role: np.ndarray
    op_day: np.ndarray
    offset: np.ndarray
    sched_op_day: np.ndarray
    sched_offset: np.ndarray
    delay_min: np.ndarray
    out_of_window: int = 0

    def __len__(self) -> int:
        return len(self.role)


def movements(data: CleanDataset, cfg: SeriesConfig = SeriesConfig()) -> Movements:
    airport = data.airport
    rows = []
    skipped = 0
    for rec in data.records:
        if rec.origin == airport:
            role, actual, sched, delay_s = DEPARTURE, rec.actual_dep, rec.sched_dep, rec.departure_delay_s()
        elif rec.destination == airport:
            role, actual, sched, delay_s = ARRIVAL, rec.actual_arr, rec.sched_arr, rec.arrival_delay_s()
        else:
            skipped += 1
            continue
        if actual is None or delay_s is None:
            skipped += 1
            continue
        hit = window_offset(actual, cfg)
        if hit is None:
            skipped += 1
            continue
        sched_hit = window_offset(sched, cfg)
        sday, soff = (sched_hit[0].toordinal(), sched_hit[1]) if sched_hit else (-1, -1)
        rows.append((role, hit[0].toordinal(), hit[1], sday, soff, delay_s / 60.0))
    if rows:
        cols = list(zip(*rows))
    else:
        cols = [()] * 6
    return Movements(
        role=np.asarray(cols[0], dtype=np.int8),
        op_day=np.asarray(cols[1], dtype=np.int64),
        offset=np.asarray(cols[2], dtype=np.int64),
        sched_op_day=np.asarray(cols[3], dtype=np.int64),
        sched_offset=np.asarray(cols[4], dtype=np.int64),
        delay_min=np.asarray(cols[5], dtype=np.float64),
        out_of_window=skipped,
    )


def infer_year(mv: Movements) -> int:
    """Calendar year holding the most operational-day movements (earliest on ties)."""
    if len(mv) == 0:
        raise ValueError("cannot infer the year of an empty movement set")
    ordinals, counts = np.unique(mv.op_day, return_counts=True)
    per_year: dict[int, int] = {}
    for o, c in zip(ordinals, counts):
        y = date.fromordinal(int(o)).year
        per_year[y] = per_year.get(y, 0) + int(c)
    return max(sorted(per_year), key=per_year.__getitem__)


def year_days(year: int) -> list[date]:
    n = 366 if calendar.isleap(year) else 365
    first = date(year, 1, 1)
    return [first + timedelta(days=i) for i in range(n)]


def build_daily_series(
    data: CleanDataset | Movements,
    cfg: SeriesConfig = SeriesConfig(),
    year: int | None = None,
) -> list[DailySeries]:
    """One :class:`DailySeries` per calendar day of ``year``.

    Days without flights get all-zero channels. Movements whose operational
    day lies outside ``year`` are ignored (see :func:`binning_counts`).
    ``year`` defaults to the most common operational year in the data.
    """
    mv = data if isinstance(data, Movements) else movements(data, cfg)
    if len(mv) == 0:
        logger.warning("no movements to build series from")
        return []
    if year is None:
        year = infer_year(mv)
    days = year_days(year)
    first = days[0].toordinal()
    n_days = len(days)

    idx = mv.op_day - first
    inside = (idx >= 0) & (idx < n_days)
    if not inside.any():
        logger.warning("no movements fall inside year %d", year)
        return []
    day_i = idx[inside]
    bin_i = mv.offset[inside] // cfg.dt
    role = mv.role[inside]
    delay = np.clip(mv.delay_min[inside], 0.0, None)
    # fixed summation order keeps float sums independent of input order
    order = np.lexsort((delay, role, bin_i, day_i))
    day_i, bin_i, role, delay = day_i[order], bin_i[order], role[order], delay[order]

    grid = np.zeros((n_days, 4, cfg.n_ts))
    dep = role == DEPARTURE
    arr = ~dep
    np.add.at(grid, (day_i[dep], 0, bin_i[dep]), delay[dep])
    np.add.at(grid, (day_i[arr], 1, bin_i[arr]), delay[arr])
    np.add.at(grid, (day_i[dep], 2, bin_i[dep]), 1.0)
    np.add.at(grid, (day_i[arr], 3, bin_i[arr]), 1.0)
    return [DailySeries(d, i + 1, grid[i]) for i, d in enumerate(days)]


def binning_counts(mv: Movements, year: int) -> dict[str, int]:
    """Movement counters for the manifest: binned into ``year`` vs. not."""
    first = date(year, 1, 1).toordinal()
    n_days = len(year_days(year))
    idx = mv.op_day - first
    binned = int(((idx >= 0) & (idx < n_days)).sum())
    return {"movements": len(mv), "binned": binned, "outside_year": len(mv) - binned}


def write_series_csv(series: Sequence[DailySeries], path: str | Path) -> None:
    """Long-format dump: one row per (day, bin) with the four channels."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("date", "bin", *CHANNELS))
        for ds in series:
            for t in range(ds.channels.shape[1]):
                writer.writerow((ds.day.isoformat(), t, *(repr(float(v)) for v in ds.channels[:, t])))
