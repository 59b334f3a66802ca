"""Congestion indicators per hour, per day and per cluster.

Q and V are hourly actual and scheduled movement counts; omega and theta
their hour-to-hour relative change; gamma the share of movements delayed
by at most 15 minutes; tau the mean positive delay per movement.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from datetime import date
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .series import Movements, SeriesConfig

ON_TIME_LIMIT_MIN = 15.0
METRICS = ("q_bar", "v_bar", "omega", "theta", "gamma", "tau")
REPORT_HEADER = ("C_k", "Q", "V", "omega", "theta", "gamma", "tau", "Days")


@dataclass(frozen=True)
class HourlyCounts:
    hour: int
    q: int
    v: int


@dataclass
class DailyMetrics:
    day: date
    q_bar: float
    v_bar: float
    omega: float
    theta: float
    gamma: float
    tau: float
    n_movements: int = 0
    omega_skipped: int = 0
    theta_skipped: int = 0
    flags: list[str] = field(default_factory=list)


def _n_hours(cfg: SeriesConfig) -> int:
    if cfg.t_start % 60 or cfg.t_end % 60:
        raise ValueError("hourly metrics need an operational window aligned to clock hours")
    return (cfg.t_end - cfg.t_start) // 60


def hourly_counts(mv: Movements, day: date, cfg: SeriesConfig = SeriesConfig()) -> list[HourlyCounts]:
    """Actual (q) and scheduled (v) movements per clock hour of the operational day."""
    n = _n_hours(cfg)
    o = day.toordinal()
    q = np.bincount(mv.offset[mv.op_day == o] // 60, minlength=n)
    sched = mv.sched_op_day == o
    v = np.bincount(mv.sched_offset[sched] // 60, minlength=n)
    first = cfg.t_start // 60
    return [HourlyCounts((first + h) % 24, int(q[h]), int(v[h])) for h in range(n)]


def change_rates(values: Sequence[float]) -> tuple[list[float], int]:
    """``|x[h] - x[h-1]| / x[h-1]`` for consecutive hours.

    Pairs with a zero predecessor are skipped; the second item is how many.
    """
    x = [float(v) for v in values]
    if len(x) < 2:
        raise ValueError("change rates need at least 2 hours")
    rates = []
    skipped = 0
    for prev, cur in zip(x, x[1:]):
        if prev == 0:
            skipped += 1
            continue
        rates.append(abs(cur - prev) / prev)
    return rates, skipped


def punctuality(delays_min: Sequence[float]) -> tuple[float, float]:
    """(gamma, tau) over one day's movement delays; an empty day gives (1.0, 0.0)."""
    d = np.asarray(delays_min, dtype=float)
    if len(d) == 0:
        return 1.0, 0.0
    gamma = float(np.count_nonzero(d <= ON_TIME_LIMIT_MIN)) / len(d)
    tau = float(np.clip(d, 0.0, None).sum()) / len(d)
    return gamma, tau


def daily_metrics(mv: Movements, day: date, cfg: SeriesConfig = SeriesConfig()) -> DailyMetrics:
    hours = hourly_counts(mv, day, cfg)
    q = [h.q for h in hours]
    v = [h.v for h in hours]
    flags = []
    omega_rates, omega_skip = change_rates(q)
    theta_rates, theta_skip = change_rates(v)
    if not omega_rates:
        flags.append("omega_undefined")
    if not theta_rates:
        flags.append("theta_undefined")
    delays = mv.delay_min[mv.op_day == day.toordinal()]
    if len(delays) == 0:
        flags.append("empty_day")
    gamma, tau = punctuality(delays)
    return DailyMetrics(
        day=day,
        q_bar=float(np.mean(q)),
        v_bar=float(np.mean(v)),
        omega=float(np.mean(omega_rates)) if omega_rates else 0.0,
        theta=float(np.mean(theta_rates)) if theta_rates else 0.0,
        gamma=gamma,
        tau=tau,
        n_movements=len(delays),
        omega_skipped=omega_skip,
        theta_skipped=theta_skip,
        flags=flags,
    )


@dataclass
class ClusterRow:
    label: int
    q_bar: float
    v_bar: float
    omega: float
    theta: float
    gamma: float
    tau: float
    days: int

    def values(self) -> tuple[float, ...]:
        return tuple(getattr(self, m) for m in METRICS)


@dataclass
class ClusterEvaluation:
    rows: list[ClusterRow]
    members: dict[int, list[DailyMetrics]]

    @property
    def total_days(self) -> int:
        return sum(r.days for r in self.rows)


def evaluate_clusters(
    daily: Sequence[DailyMetrics],
    labels: Mapping[date, int],
    k: int | None = None,
) -> ClusterEvaluation:
    """Mean of every daily indicator over each cluster's member days.

    Rows are ordered by descending mean Q; a cluster without evaluated days
    yields a NaN row placed last.
    """
    if k is None:
        k = max(labels.values(), default=0)
    members: dict[int, list[DailyMetrics]] = {c: [] for c in range(1, k + 1)}
    for dm in daily:
        label = labels.get(dm.day)
        if label is not None:
            members.setdefault(label, []).append(dm)
    rows = []
    for label, days in sorted(members.items()):
        if days:
            means = [math.fsum(getattr(d, m) for d in days) / len(days) for m in METRICS]
        else:
            means = [math.nan] * len(METRICS)
        rows.append(ClusterRow(label, *means, len(days)))
    rows.sort(key=lambda r: (math.isnan(r.q_bar), -r.q_bar if not math.isnan(r.q_bar) else 0.0, r.label))
    return ClusterEvaluation(rows, members)


def _fmt(v: float) -> str:
    return "NaN" if math.isnan(v) else repr(float(v))


def write_evaluation_csv(ev: ClusterEvaluation, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in ev.rows:
            writer.writerow((f"C{r.label}", *(_fmt(v) for v in r.values()), r.days))


def write_evaluation_json(ev: ClusterEvaluation, path: str | Path) -> None:
    def clean(v):
        return None if isinstance(v, float) and math.isnan(v) else v

    payload = {
        "columns": list(REPORT_HEADER),
        "clusters": [{k: clean(v) for k, v in asdict(r).items()} for r in ev.rows],
        "total_days": ev.total_days,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_boxplot_csv(ev: ClusterEvaluation, path: str | Path) -> None:
    """Long format (cluster, metric, date, value) for per-cluster boxplots."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("cluster", "metric", "date", "value"))
        for label in sorted(ev.members):
            for metric in METRICS:
                for d in sorted(ev.members[label], key=lambda dm: dm.day):
                    writer.writerow((f"C{label}", metric, d.day.isoformat(), repr(float(getattr(d, metric)))))
