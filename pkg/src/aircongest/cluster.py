"""K-means over daily feature vectors, centroid separation and PCA projection."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Sequence

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 4
    max_iter: int = 300
    tol: float = 1e-8
    seed: int = 0
    n_init: int = 10
    init: str = "k-means++"  # or "random": k distinct samples drawn uniformly

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.n_init < 1 or self.max_iter < 1:
            raise ValueError("n_init and max_iter must be positive")
        if self.init not in ("k-means++", "random"):
            raise ValueError(f"unknown init {self.init!r}")


@dataclass
class Clustering:
    """Best of the restarts. ``assignments`` are labels 1..k."""

    assignments: np.ndarray
    centroids: np.ndarray
    loss: float
    loss_trace: list[float]
    cluster_sizes: np.ndarray
    n_iter: int
    converged: bool

    @property
    def k(self) -> int:
        return len(self.centroids)

    @property
    def labels0(self) -> np.ndarray:
        return self.assignments - 1


def sq_distances(x: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = x[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def _init_centroids(x: np.ndarray, k: int, rng: np.random.Generator, method: str) -> np.ndarray:
    n = len(x)
    if method == "random":
        return x[rng.choice(n, size=k, replace=False)].copy()
    centroids = [x[rng.integers(n)]]
    closest = sq_distances(x, centroids[0][None, :])[:, 0]
    for _ in range(1, k):
        total = closest.sum()
        if total > 0:
            idx = int(rng.choice(n, p=closest / total))
        else:
            idx = int(rng.integers(n))
        centroids.append(x[idx])
        closest = np.minimum(closest, sq_distances(x, x[idx][None, :])[:, 0])
    return np.array(centroids)


def _assign(x: np.ndarray, centroids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Nearest centroid per point (lowest index on ties) and the full distance table."""
    d2 = sq_distances(x, centroids)
    return np.argmin(d2, axis=1), d2


def _repair_empty(labels: np.ndarray, d2: np.ndarray, centroids: np.ndarray, x: np.ndarray) -> None:
    """Reseed each empty cluster with the point farthest from its own centroid."""
    k = len(centroids)
    for c in range(k):
        sizes = np.bincount(labels, minlength=k)
        if sizes[c]:
            continue
        own = d2[np.arange(len(x)), labels].copy()
        own[sizes[labels] < 2] = -1.0  # never empty another cluster
        i = int(np.argmax(own))
        labels[i] = c
        centroids[c] = x[i]
        d2[:, c] = sq_distances(x, x[i][None, :])[:, 0]


def _means(x: np.ndarray, labels: np.ndarray, k: int, previous: np.ndarray) -> np.ndarray:
    centroids = previous.copy()
    for c in range(k):
        members = x[labels == c]
        if len(members):
            centroids[c] = members.mean(axis=0)
    return centroids


def _sse(x: np.ndarray, labels: np.ndarray, centroids: np.ndarray) -> float:
    diff = x - centroids[labels]
    return float(np.einsum("nd,nd->", diff, diff))


def lloyd(x: np.ndarray, centroids: np.ndarray, max_iter: int = 300, tol: float = 1e-8):
    """Lloyd iterations from given centroids.

    Returns ``(labels, centroids, loss_trace, n_iter, converged)``. The
    trace holds the loss after each centroid update and never increases;
    ``converged`` means the assignment reached a fixed point.
    """
    k = len(centroids)
    centroids = np.array(centroids, dtype=float)
    labels, d2 = _assign(x, centroids)
    _repair_empty(labels, d2, centroids, x)
    trace: list[float] = []
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        centroids = _means(x, labels, k, centroids)
        trace.append(_sse(x, labels, centroids))
        new_labels, d2 = _assign(x, centroids)
        _repair_empty(new_labels, d2, centroids.copy(), x)
        if np.array_equal(new_labels, labels):
            converged = True
            break
        if len(trace) > 1 and trace[-2] - trace[-1] < tol:
            break
        labels = new_labels
    return labels, centroids, trace, n_iter, converged


def kmeans(features: np.ndarray, cfg: KMeansConfig = KMeansConfig()) -> Clustering:
    """Best-of-``n_init`` K-means on the rows of ``features``."""
    x = np.asarray(getattr(features, "f_rows", features), dtype=float)
    if x.ndim != 2 or len(x) == 0:
        raise ValueError("feature matrix must be a non-empty 2-D array")
    if not np.isfinite(x).all():
        raise ValueError("feature matrix contains non-finite values")
    if cfg.k > len(x):
        raise ValueError(f"k={cfg.k} exceeds the number of samples ({len(x)})")
    best = None
    for child in np.random.SeedSequence(cfg.seed).spawn(cfg.n_init):
        rng = np.random.default_rng(child)
        start = _init_centroids(x, cfg.k, rng, cfg.init)
        run = lloyd(x, start, cfg.max_iter, cfg.tol)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    labels, centroids, trace, n_iter, converged = best
    sizes = np.bincount(labels, minlength=cfg.k)
    if (sizes == 0).any():
        logger.warning("best K-means run has empty clusters (fewer distinct points than k)")
    return Clustering(labels + 1, centroids, trace[-1], trace, sizes, n_iter, converged)


def centroid_distance_matrix(clustering: Clustering | np.ndarray) -> np.ndarray:
    """Pairwise (unsquared) Euclidean distances between centroids."""
    c = np.asarray(getattr(clustering, "centroids", clustering), dtype=float)
    d = np.sqrt(sq_distances(c, c))
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    return d


@dataclass
class PcaProjection:
    components: np.ndarray  # (n_features, p), orthonormal columns
    explained_variance: np.ndarray  # (p,), descending
    coords: np.ndarray  # (n_samples, p)
    mean: np.ndarray
    rank_deficient: bool = False


def pca_project(features: np.ndarray, p: int = 2) -> PcaProjection:
    """Project onto the top-``p`` eigenvectors of the sample covariance (ddof=1).

    Each component is signed so that its largest-magnitude entry is positive.
    """
    x = np.asarray(getattr(features, "f_rows", features), dtype=float)
    if x.ndim != 2 or len(x) < 2:
        raise ValueError("PCA needs at least 2 samples")
    if not 1 <= p <= x.shape[1]:
        raise ValueError(f"p must be in [1, {x.shape[1]}]")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / (len(x) - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals, kind="stable")[::-1][:p]
    evals = evals[order]
    evecs = evecs[:, order]
    for j in range(p):
        if evecs[np.argmax(np.abs(evecs[:, j])), j] < 0:
            evecs[:, j] = -evecs[:, j]
    scale = max(float(evals[0]) if len(evals) else 0.0, 1.0)
    rank_deficient = bool((evals <= 1e-12 * scale).any())
    if rank_deficient:
        logger.warning("PCA: fewer than %d non-null directions; trailing components carry ~0 variance", p)
    return PcaProjection(evecs, evals, xc @ evecs, mean, rank_deficient)


def _write_rows(path: str | Path, header: Sequence[str], rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_assignments_csv(days: Sequence[date], clustering: Clustering, path: str | Path) -> None:
    _write_rows(path, ("date", "label"), ((d.isoformat(), int(l)) for d, l in zip(days, clustering.assignments)))


def read_assignments_csv(path: str | Path) -> dict[date, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"date", "label"} <= set(reader.fieldnames):
            raise ValueError(f"{path}: expected columns date,label")
        return {date.fromisoformat(r["date"]): int(r["label"]) for r in reader}


def write_centroids_csv(clustering: Clustering, feature_names: Sequence[str], path: str | Path) -> None:
    _write_rows(
        path,
        ("label", "size", *feature_names),
        ((c + 1, int(clustering.cluster_sizes[c]), *map(_fmt, row)) for c, row in enumerate(clustering.centroids)),
    )


def write_distance_csv(d: np.ndarray, path: str | Path) -> None:
    labels = [f"C{c + 1}" for c in range(len(d))]
    _write_rows(path, ("", *labels), ((labels[i], *map(_fmt, row)) for i, row in enumerate(d)))


def write_pca_csv(days: Sequence[date], clustering: Clustering, proj: PcaProjection, path: str | Path) -> None:
    p = proj.coords.shape[1]
    _write_rows(
        path,
        ("date", "label", *(f"pc{j + 1}" for j in range(p))),
        ((d.isoformat(), int(l), *map(_fmt, row)) for d, l, row in zip(days, clustering.assignments, proj.coords)),
    )
