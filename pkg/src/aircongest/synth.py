"""Synthetic ground truth: fractional Gaussian noise and a multi-regime flight year."""

from __future__ import annotations

import csv
import functools
import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .ingest import FlightRecord

N_HOURS = 20
FIRST_HOUR = 5
OTHER_AIRPORTS = ("PEK", "PVG", "CTU", "SZX", "KMG", "XIY", "HGH", "CKG")


@dataclass(frozen=True)
class FgnSpec:
    h_target: float
    n: int
    seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.h_target < 1.0:
            raise ValueError(f"Hurst parameter must lie in (0, 1), got {self.h_target}")
        if self.n < 1:
            raise ValueError("fGn length must be positive")


def fgn_autocovariance(h: float, n: int) -> np.ndarray:
    """Unit-variance fGn autocovariance at lags 0..n-1."""
    k = np.arange(n, dtype=float)
    two_h = 2.0 * h
    return 0.5 * (np.abs(k + 1) ** two_h - 2.0 * np.abs(k) ** two_h + np.abs(k - 1) ** two_h)


@functools.lru_cache(maxsize=16)
def _cholesky_factor(h: float, n: int) -> np.ndarray:
    gamma = fgn_autocovariance(h, n)
    idx = np.arange(n)
    cov = gamma[np.abs(idx[:, None] - idx[None, :])]
    try:
        factor = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(
            f"fGn covariance not positive definite for H={h}, n={n} (cond ~ {np.linalg.cond(cov):.3g})"
        ) from exc
    factor.setflags(write=False)
    return factor


def fgn_generate(spec: FgnSpec) -> np.ndarray:
    """Exact fGn sample via Cholesky factorization of the Toeplitz covariance."""
    z = np.random.default_rng(spec.seed).standard_normal(spec.n)
    if spec.h_target == 0.5:
        return z
    return _cholesky_factor(float(spec.h_target), int(spec.n)) @ z


@dataclass(frozen=True)
class RegimeSpec:
    """One operational mode of the simulated airport.

    ``mean_hourly_q`` is the scheduled movements per clock hour from 05:00
    to 00:00; ``volatility`` is the relative hour-to-hour jitter of that
    profile. Delays are in minutes.
    """

    regime_id: int
    mean_hourly_q: tuple[float, ...]
    delay_mean: float
    delay_dispersion: float
    volatility: float
    days: int

    def __post_init__(self) -> None:
        if len(self.mean_hourly_q) != N_HOURS:
            raise ValueError(f"hourly profile must have {N_HOURS} entries")
        values = (*self.mean_hourly_q, self.delay_mean, self.delay_dispersion, self.volatility, self.days)
        if min(values) < 0:
            raise ValueError(f"regime {self.regime_id}: parameters must be non-negative")


def _profile(peak: float) -> tuple[float, ...]:
    # Morning and evening banks over a flatter midday, tailing off after 22:00.
    shape = (0.35, 0.75, 1.0, 0.95, 0.9, 0.85, 0.85, 0.9, 0.9, 0.95,
             1.0, 1.0, 0.95, 0.95, 1.0, 0.95, 0.85, 0.7, 0.5, 0.3)
    return tuple(round(peak * s, 3) for s in shape)


def default_regimes() -> list[RegimeSpec]:
    """Four well separated modes summing to 365 days."""
    return [
        RegimeSpec(1, _profile(64.0), delay_mean=6.0, delay_dispersion=8.0, volatility=0.05, days=150),
        RegimeSpec(2, _profile(60.0), delay_mean=18.0, delay_dispersion=20.0, volatility=0.10, days=120),
        RegimeSpec(3, _profile(52.0), delay_mean=45.0, delay_dispersion=40.0, volatility=0.20, days=60),
        RegimeSpec(4, _profile(40.0), delay_mean=4.0, delay_dispersion=6.0, volatility=0.25, days=35),
    ]


# Early movements: raw delay = lognormal - EARLY_SHIFT_MIN, so some flights run ahead of schedule.
EARLY_SHIFT_MIN = 5.0
BLOCK_TIME_MIN = (90, 240)


def _delays(rng: np.random.Generator, n: int, mean: float, dispersion: float) -> np.ndarray:
    """Shifted log-normal delay minutes with the requested mean."""
    if mean <= 0.0:
        return np.zeros(n)
    m = mean + EARLY_SHIFT_MIN
    s = max(dispersion, 1e-9)
    sigma2 = math.log1p((s / m) ** 2)
    mu = math.log(m) - sigma2 / 2.0
    return rng.lognormal(mu, math.sqrt(sigma2), size=n) - EARLY_SHIFT_MIN


def _simulate_day(
    day: date,
    regime: RegimeSpec,
    rng: np.random.Generator,
    airport: str,
    serial: Iterable[int],
) -> list[FlightRecord]:
    profile = np.asarray(regime.mean_hourly_q)
    jitter = 1.0 + regime.volatility * rng.standard_normal(N_HOURS)
    counts = np.maximum(0, np.rint(profile * jitter)).astype(int)
    window_open = datetime(day.year, day.month, day.day, FIRST_HOUR)
    window_close = window_open + timedelta(hours=N_HOURS) - timedelta(minutes=1)
    records = []
    for hour, count in enumerate(counts):
        if count == 0:
            continue
        minutes = rng.integers(0, 60, size=count)
        departs = rng.random(count) < 0.5
        delays = _delays(rng, count, regime.delay_mean, regime.delay_dispersion)
        others = rng.integers(0, len(OTHER_AIRPORTS), size=count)
        blocks = rng.integers(*BLOCK_TIME_MIN, size=count)
        for minute, is_dep, delay, other, block in zip(minutes, departs, delays, others, blocks):
            sched = window_open + timedelta(hours=hour, minutes=int(minute))
            actual = sched + timedelta(minutes=int(round(delay)))
            actual = min(max(actual, window_open), window_close)
            flight_id = f"SY{next(serial):07d}"
            block_td = timedelta(minutes=int(block))
            if is_dep:
                records.append(
                    FlightRecord(flight_id, airport, OTHER_AIRPORTS[other], sched, actual,
                                 sched + block_td, actual + block_td,
                                 int((actual - sched).total_seconds()))
                )
            else:
                records.append(
                    FlightRecord(flight_id, OTHER_AIRPORTS[other], airport, sched - block_td,
                                 actual - block_td, sched, actual, int((actual - sched).total_seconds()))
                )
    return records


def simulate_year(
    regimes: Sequence[RegimeSpec] | None = None,
    seed: int = 0,
    year: int = 2023,
    airport: str = "SYN",
) -> tuple[list[FlightRecord], list[int]]:
    """Simulate a year of movements at ``airport``.

    Returns the flight records and the planted regime id of each calendar
    day. Days are dealt to regimes by a seeded shuffle; every day draws
    from its own child seed, so the output is fixed by ``seed``.
    """
    regimes = list(regimes) if regimes is not None else default_regimes()
    n_days = 366 if (year % 4 == 0 and year % 100 != 0) or year % 400 == 0 else 365
    if sum(r.days for r in regimes) != n_days:
        raise ValueError(f"regime days must sum to {n_days}")
    if airport in OTHER_AIRPORTS:
        raise ValueError(f"{airport} collides with a simulated partner airport")
    root = np.random.SeedSequence(seed)
    label_seed, *day_seeds = root.spawn(n_days + 1)
    labels = np.concatenate([np.full(r.days, i) for i, r in enumerate(regimes)])
    np.random.default_rng(label_seed).shuffle(labels)

    serial = iter(range(1, 10**8))
    first = date(year, 1, 1)
    records: list[FlightRecord] = []
    for i, (label, child) in enumerate(zip(labels, day_seeds)):
        regime = regimes[int(label)]
        records.extend(_simulate_day(first + timedelta(days=i), regime, np.random.default_rng(child), airport, serial))
    return records, [regimes[int(label)].regime_id for label in labels]


def _ts(value: datetime | None) -> str:
    return value.strftime("%Y-%m-%dT%H:%M") if value is not None else ""


def write_records_csv(records: Iterable[FlightRecord], path: str | Path) -> None:
    """Write records in the default ingest schema."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("flight_id", "origin", "destination", "sched_dep", "actual_dep",
                         "sched_arr", "actual_arr", "dep_delay_s"))
        for r in records:
            writer.writerow((r.flight_id, r.origin, r.destination, _ts(r.sched_dep), _ts(r.actual_dep),
                             _ts(r.sched_arr), _ts(r.actual_arr),
                             "" if r.dep_delay_s is None else r.dep_delay_s))


def write_labels_csv(labels: Sequence[int], year: int, path: str | Path) -> None:
    first = date(year, 1, 1)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("date", "regime"))
        for i, label in enumerate(labels):
            writer.writerow(((first + timedelta(days=i)).isoformat(), label))
