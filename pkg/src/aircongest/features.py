"""Per-day feature extraction: R/S Hurst exponents and normalized cumulants.

Each day contributes a 20-dimensional row: four Hurst exponents (one per
channel) followed by sixteen normalized cumulants ordered channel-major,
orders 1 to 4 within each channel.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

from .series import CHANNELS, DailySeries

logger = logging.getLogger(__name__)

MIN_SCALE_LEN = 16
NEUTRAL_HURST = 0.5
N_FEATURES = 20
FEATURE_NAMES: tuple[str, ...] = tuple(f"hurst_{c}" for c in CHANNELS) + tuple(
    f"cum{order}_{c}" for c in CHANNELS for order in range(1, 5)
)


class InsufficientScales(ValueError):
    """Fewer than two non-degenerate R/S levels were available for the fit."""


@dataclass(frozen=True)
class HurstFit:
    h: float
    log_c: float
    points: tuple[tuple[float, float], ...]
    r_squared: float


def halve(series: Sequence[float] | np.ndarray) -> np.ndarray:
    """Average consecutive disjoint pairs; an odd trailing element is carried as is."""
    x = np.asarray(series, dtype=float)
    n = len(x)
    if n == 0:
        raise ValueError("cannot halve an empty series")
    paired = (x[0 : n - 1 : 2] + x[1:n:2]) / 2.0
    if n % 2:
        return np.append(paired, x[-1])
    return paired


def rs_statistic(sample: Sequence[float] | np.ndarray) -> float | None:
    """Rescaled range R/S of one sample; None when its standard deviation is zero."""
    x = np.asarray(sample, dtype=float)
    n = len(x)
    if n < 2:
        raise ValueError(f"R/S needs at least 2 samples, got {n}")
    if x.max() == x.min():
        return None
    dev = x - x.mean()
    z = np.cumsum(dev)
    r = z.max() - z.min()
    s = math.sqrt(float(np.dot(dev, dev)) / (n - 1))
    if s == 0.0:  # spread lost to underflow
        return None
    return float(r / s)


def scales(series: Sequence[float] | np.ndarray, min_len: int = MIN_SCALE_LEN) -> list[np.ndarray]:
    """The halving pyramid I_0, I_1, ... down to the last level of length >= min_len."""
    level = np.asarray(series, dtype=float)
    levels = []
    while len(level) >= min_len:
        levels.append(level)
        if len(level) == 1:
            break
        level = halve(level)
    return levels


def hurst(series: Sequence[float] | np.ndarray, min_len: int = MIN_SCALE_LEN) -> HurstFit:
    """Estimate the Hurst exponent from the R/S values of the halving pyramid.

    Ordinary least squares of log10(RS) on log10(N) over all levels with a
    non-zero standard deviation. Raises :class:`InsufficientScales` when
    fewer than two such levels exist.
    """
    if min_len < 2:
        raise ValueError("min_len must be at least 2")
    points = []
    for level in scales(series, min_len):
        rs = rs_statistic(level)
        if rs is not None and rs > 0.0:
            points.append((math.log10(len(level)), math.log10(rs)))
    if len(points) < 2:
        raise InsufficientScales(f"insufficient scales: {len(points)} usable R/S level(s)")
    xs = np.array([p[0] for p in points])
    ys = np.array([p[1] for p in points])
    xc = xs - xs.mean()
    slope = float(np.dot(xc, ys - ys.mean()) / np.dot(xc, xc))
    intercept = float(ys.mean() - slope * xs.mean())
    resid = ys - (intercept + slope * xs)
    ss_tot = float(np.dot(ys - ys.mean(), ys - ys.mean()))
    r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
    return HurstFit(slope, intercept, tuple(points), r2)


def hurst_or_neutral(series: Sequence[float] | np.ndarray, min_len: int = MIN_SCALE_LEN) -> tuple[float, bool]:
    """Hurst exponent with the neutral 0.5 fallback; the flag is True on fallback."""
    try:
        return hurst(series, min_len).h, False
    except InsufficientScales:
        return NEUTRAL_HURST, True


def cumulants(series: Sequence[float] | np.ndarray) -> np.ndarray:
    """Cumulants of orders 1-4 with population (1/N) moments."""
    x = np.asarray(series, dtype=float)
    if len(x) == 0:
        raise ValueError("cumulants of an empty series")
    mean = x.mean()
    dev = x - mean
    m2 = np.mean(dev**2)
    m3 = np.mean(dev**3)
    m4 = np.mean(dev**4)
    return np.array([mean, m2, m3, m4 - 3.0 * m2**2])


def _degenerate(col: np.ndarray) -> bool:
    spread = float(col.max() - col.min())
    return not spread > 1e-12 * max(1.0, float(np.abs(col).max()))


def zscore_cumulants(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Column-wise Z-scores across days (unbiased std) and the degenerate-column mask.

    ``raw`` has shape (days, channels, orders). Degenerate columns are left
    at zero in the returned scores.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 3 or raw.shape[0] < 2:
        raise ValueError(f"need a (days>=2, channels, orders) tensor, got shape {raw.shape}")
    mu = raw.mean(axis=0)
    sigma = raw.std(axis=0, ddof=1)
    degenerate = np.zeros(raw.shape[1:], dtype=bool)
    for j, l in np.ndindex(*raw.shape[1:]):
        degenerate[j, l] = _degenerate(raw[:, j, l]) or not sigma[j, l] > 0
    safe_sigma = np.where(degenerate, 1.0, sigma)
    z = np.where(degenerate, 0.0, (raw - mu) / safe_sigma)
    return z, degenerate


def normalize_cumulants(raw: np.ndarray) -> np.ndarray:
    """Z-score then min-max each (channel, order) column across days into [0, 1].

    A column with no spread across days maps to 0.5 everywhere.
    """
    z, degenerate = zscore_cumulants(raw)
    lo = z.min(axis=0)
    span = z.max(axis=0) - lo
    out = np.where(degenerate, 0.5, (z - lo) / np.where(degenerate, 1.0, span))
    for j, l in zip(*np.nonzero(degenerate)):
        logger.warning("degenerate cumulant column %s order %d set to 0.5", CHANNELS[j], l + 1)
    return np.clip(out, 0.0, 1.0)


@dataclass
class FeatureMatrix:
    """Days as rows, 20 features as columns (transpose of the column-per-day layout)."""

    f_rows: np.ndarray
    day_ids: list[date]
    hurst_fallback: np.ndarray = field(default=None)  # (days, 4) bool
    degenerate_columns: np.ndarray = field(default=None)  # (4, 4) bool

    def __post_init__(self) -> None:
        n = len(self.day_ids)
        if self.hurst_fallback is None:
            self.hurst_fallback = np.zeros((n, 4), dtype=bool)
        if self.degenerate_columns is None:
            self.degenerate_columns = np.zeros((4, 4), dtype=bool)

    def __len__(self) -> int:
        return len(self.day_ids)


def assemble(
    hursts: np.ndarray | Sequence[Sequence[float]],
    cumulants_norm: np.ndarray,
    day_ids: Sequence[date] | None = None,
) -> FeatureMatrix:
    """Stack ``[h ; a_hat]`` per day into a (days, 20) matrix."""
    h = np.asarray(hursts, dtype=float).reshape(-1, 4)
    a = np.asarray(cumulants_norm, dtype=float)
    if a.ndim != 3 or a.shape[1:] != (4, 4):
        raise ValueError(f"cumulant tensor must be (days, 4, 4), got {a.shape}")
    if len(h) != len(a):
        raise ValueError(f"day count mismatch: {len(h)} Hurst vectors vs {len(a)} cumulant blocks")
    if day_ids is None:
        day_ids = [date.fromordinal(1 + i) for i in range(len(h))]
    elif len(day_ids) != len(h):
        raise ValueError("day_ids length does not match the feature rows")
    rows = np.hstack([h, a.reshape(len(a), 16)])
    return FeatureMatrix(rows, list(day_ids))


def extract_features(series: Sequence[DailySeries], min_len: int = MIN_SCALE_LEN) -> FeatureMatrix:
    """Full per-day extraction over the days that carry at least one movement."""
    days = [ds for ds in series if ds.n_movements > 0]
    if len(days) < 2:
        raise ValueError(f"need at least 2 days with data, got {len(days)}")
    h = np.empty((len(days), 4))
    fallback = np.zeros((len(days), 4), dtype=bool)
    raw = np.empty((len(days), 4, 4))
    for i, ds in enumerate(days):
        for j in range(4):
            h[i, j], fallback[i, j] = hurst_or_neutral(ds.channels[j], min_len)
            raw[i, j] = cumulants(ds.channels[j])
    if fallback.any():
        logger.info("Hurst fallback to %.1f on %d day-channel(s)", NEUTRAL_HURST, int(fallback.sum()))
    _, degenerate = zscore_cumulants(raw)
    fm = assemble(h, normalize_cumulants(raw), [ds.day for ds in days])
    fm.hurst_fallback = fallback
    fm.degenerate_columns = degenerate
    return fm


def write_features_csv(fm: FeatureMatrix, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("date", *FEATURE_NAMES, *(f"fallback_{c}" for c in CHANNELS)))
        for day, row, flags in zip(fm.day_ids, fm.f_rows, fm.hurst_fallback):
            writer.writerow((day.isoformat(), *(repr(float(v)) for v in row), *(int(b) for b in flags)))


def read_features_csv(path: str | Path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[1 : 1 + N_FEATURES]) != FEATURE_NAMES:
            raise ValueError(f"{path}: not a features file (unexpected header)")
        days, rows, flags = [], [], []
        for row in reader:
            days.append(date.fromisoformat(row[0]))
            rows.append([float(v) for v in row[1 : 1 + N_FEATURES]])
            flags.append([bool(int(v)) for v in row[1 + N_FEATURES : 5 + N_FEATURES]] or [False] * 4)
    return FeatureMatrix(np.array(rows, dtype=float).reshape(-1, N_FEATURES), days, np.array(flags, dtype=bool).reshape(-1, 4))
