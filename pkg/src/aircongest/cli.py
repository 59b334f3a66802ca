"""Command line front end.

Settings resolve in this order, later ones winning: built-in defaults, the
TOML file given by ``--config``, ``AIRCONGEST_*`` environment variables,
then explicit flags. Recognised variables: ``AIRCONGEST_INPUT``,
``AIRCONGEST_AIRPORT``, ``AIRCONGEST_YEAR``, ``AIRCONGEST_K``,
``AIRCONGEST_SEED``, ``AIRCONGEST_OUT_DIR`` and ``AIRCONGEST_CONFIG``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from . import cluster as cl
from . import features as ft
from . import ingest, metrics, series, synth

logger = logging.getLogger("aircongest")

ENV_PREFIX = "AIRCONGEST_"
SCHEMA_VERSIONS = {
    "features.csv": 1,
    "assignments.csv": 1,
    "centroids.csv": 1,
    "centroid_distances.csv": 1,
    "pca_coords.csv": 1,
    "cluster_evaluation.csv": 1,
    "cluster_evaluation.json": 1,
    "boxplot_long.csv": 1,
    "rejects.csv": 1,
    "series.csv": 1,
}
MANIFEST = "run_manifest.json"


@dataclass
class PipelineConfig:
    input: str | None = None
    airport: str | None = None
    year: int | None = None
    out_dir: str = "out"
    seed: int = 0
    columns: dict[str, str] = field(default_factory=dict)
    series: series.SeriesConfig = field(default_factory=series.SeriesConfig)
    kmeans: cl.KMeansConfig = field(default_factory=cl.KMeansConfig)
    min_len: int = ft.MIN_SCALE_LEN
    pca_dims: int = 2
    dump_series: bool = False

    def validate(self, need_input: bool = True) -> None:
        if need_input:
            if not self.input:
                raise ValueError("no input file given (--input)")
            if not Path(self.input).is_file():
                raise ValueError(f"input file not found: {self.input}")
        if not self.airport or len(self.airport) != 3 or not self.airport.isalnum():
            raise ValueError(f"airport must be a 3-letter IATA code, got {self.airport!r}")
        if self.pca_dims not in (2, 3):
            raise ValueError("pca dimensions must be 2 or 3")

    def echo(self) -> dict[str, Any]:
        """Config as recorded in the manifest (output location excluded)."""
        out = asdict(self)
        out.pop("out_dir")
        return out


def load_config(args: argparse.Namespace, environ: dict[str, str] | None = None) -> PipelineConfig:
    env = os.environ if environ is None else environ
    cfg = PipelineConfig()
    config_path = getattr(args, "config", None) or env.get(ENV_PREFIX + "CONFIG")
    kmeans_kw: dict[str, Any] = {}
    if config_path:
        with open(config_path, "rb") as fh:
            doc = tomllib.load(fh)
        inp = doc.get("input", {})
        cfg.input = inp.get("path", cfg.input)
        cfg.columns = dict(inp.get("columns", {}))
        run = doc.get("run", {})
        for key in ("airport", "year", "out_dir", "seed", "pca_dims", "dump_series"):
            if key in run:
                setattr(cfg, key, run[key])
        if "series" in doc:
            cfg.series = series.SeriesConfig(**doc["series"])
        if "min_len" in doc.get("features", {}):
            cfg.min_len = int(doc["features"]["min_len"])
        kmeans_kw.update(doc.get("kmeans", {}))
        if "seed" in kmeans_kw:
            cfg.seed = int(kmeans_kw.pop("seed"))

    for key, cast in (("input", str), ("airport", str), ("year", int), ("seed", int), ("out_dir", str)):
        if ENV_PREFIX + key.upper() in env:
            setattr(cfg, key, cast(env[ENV_PREFIX + key.upper()]))
    if ENV_PREFIX + "K" in env:
        kmeans_kw["k"] = int(env[ENV_PREFIX + "K"])

    for key in ("input", "airport", "year", "seed", "out_dir", "pca_dims"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value)
    if getattr(args, "dump_series", False):
        cfg.dump_series = True
    for key in ("k", "n_init"):
        value = getattr(args, key, None)
        if value is not None:
            kmeans_kw[key] = value
    if cfg.airport:
        cfg.airport = cfg.airport.upper()
    cfg.kmeans = replace(cfg.kmeans, **kmeans_kw, seed=cfg.seed)
    return cfg


@dataclass
class Loaded:
    parsed: ingest.ParseResult
    data: ingest.CleanDataset
    mv: series.Movements
    year: int
    counters: dict[str, int]


def load_data(cfg: PipelineConfig) -> Loaded:
    parsed = ingest.read_records(cfg.input, cfg.columns)
    data = ingest.clean(parsed.records, cfg.airport, cfg.series.window)
    mv = series.movements(data, cfg.series)
    year = cfg.year if cfg.year is not None else series.infer_year(mv)
    counters = {
        "rows_read": parsed.rows_read,
        "rejected": len(parsed.rejects),
        "parsed": len(parsed.records),
        "dropped_missing": data.dropped_missing,
        "dropped_airport": data.dropped_airport,
        "dropped_window": data.dropped_window,
        "kept": len(data.records),
        "unplaced_movements": mv.out_of_window,
        **series.binning_counts(mv, year),
    }
    return Loaded(parsed, data, mv, year, counters)


def conservation(c: dict[str, int]) -> dict[str, bool]:
    return {
        "rows_read = rejected + parsed": c["rows_read"] == c["rejected"] + c["parsed"],
        "parsed = dropped_missing + dropped_airport + dropped_window + kept": c["parsed"]
        == c["dropped_missing"] + c["dropped_airport"] + c["dropped_window"] + c["kept"],
        "kept = movements + unplaced_movements": c["kept"] == c["movements"] + c["unplaced_movements"],
        "movements = binned + outside_year": c["movements"] == c["binned"] + c["outside_year"],
    }


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def write_features_stage(
    cfg: PipelineConfig, loaded: Loaded, out: Path, written: list[Path] | None = None
) -> tuple[ft.FeatureMatrix, list[Path]]:
    # ``written`` collects paths as they appear so a failing caller can clean up
    written = [] if written is None else written
    written.append(out / "rejects.csv")
    ingest.write_rejects(loaded.parsed.rejects, loaded.parsed.header, out / "rejects.csv")
    daily = series.build_daily_series(loaded.mv, cfg.series, loaded.year)
    if cfg.dump_series:
        written.append(out / "series.csv")
        series.write_series_csv(daily, out / "series.csv")
    fm = ft.extract_features(daily, cfg.min_len)
    written.append(out / "features.csv")
    ft.write_features_csv(fm, out / "features.csv")
    return fm, written


def write_cluster_stage(
    cfg: PipelineConfig, fm: ft.FeatureMatrix, out: Path, written: list[Path] | None = None
) -> tuple[cl.Clustering, list[Path]]:
    written = [] if written is None else written
    clustering = cl.kmeans(fm.f_rows, cfg.kmeans)
    projection = cl.pca_project(fm.f_rows, cfg.pca_dims)
    writers = (
        ("assignments.csv", lambda p: cl.write_assignments_csv(fm.day_ids, clustering, p)),
        ("centroids.csv", lambda p: cl.write_centroids_csv(clustering, ft.FEATURE_NAMES, p)),
        ("centroid_distances.csv", lambda p: cl.write_distance_csv(cl.centroid_distance_matrix(clustering), p)),
        ("pca_coords.csv", lambda p: cl.write_pca_csv(fm.day_ids, clustering, projection, p)),
    )
    for name, write in writers:
        written.append(out / name)
        write(out / name)
    return clustering, written


def write_evaluate_stage(
    cfg: PipelineConfig, loaded: Loaded, labels: dict, k: int, out: Path, written: list[Path] | None = None
) -> tuple[metrics.ClusterEvaluation, list[Path]]:
    written = [] if written is None else written
    daily = [metrics.daily_metrics(loaded.mv, day, cfg.series) for day in sorted(labels)]
    ev = metrics.evaluate_clusters(daily, labels, k)
    writers = (
        ("cluster_evaluation.csv", metrics.write_evaluation_csv),
        ("cluster_evaluation.json", metrics.write_evaluation_json),
        ("boxplot_long.csv", metrics.write_boxplot_csv),
    )
    for name, write in writers:
        written.append(out / name)
        write(ev, out / name)
    return ev, written


def run_pipeline(cfg: PipelineConfig) -> tuple[int, dict[str, Any]]:
    """Run every stage and write the report bundle into ``cfg.out_dir``.

    Returns the exit status and the manifest. On failure, files written so
    far are removed and the manifest records the error.
    """
    out = Path(cfg.out_dir)
    written: list[Path] = []
    manifest: dict[str, Any] = {
        "tool": "aircongest",
        "version": __version__,
        "numpy_version": np.__version__,
        "config": cfg.echo(),
        "seed": cfg.seed,
        "kmeans_restarts": cfg.kmeans.n_init,
    }
    try:
        cfg.validate()
        out.mkdir(parents=True, exist_ok=True)
        loaded = load_data(cfg)
        manifest["year"] = loaded.year
        fm, _ = write_features_stage(cfg, loaded, out, written)
        clustering, _ = write_cluster_stage(cfg, fm, out, written)
        labels = dict(zip(fm.day_ids, (int(v) for v in clustering.assignments)))
        ev, _ = write_evaluate_stage(cfg, loaded, labels, clustering.k, out, written)
    except (ingest.IngestError, ValueError, OSError, np.linalg.LinAlgError) as exc:
        for path in written:
            path.unlink(missing_ok=True)
        manifest.update(status="failed", error=f"{type(exc).__name__}: {exc}", outputs={})
        if out.is_dir():
            _write_json(out / MANIFEST, manifest)
        logger.error("%s", exc)
        return 1, manifest

    counters = loaded.counters
    manifest.update(
        status="ok",
        counters=counters,
        conservation=conservation(counters),
        days={
            "calendar": len(series.year_days(loaded.year)),
            "with_data": len(fm),
            "evaluated": ev.total_days,
            "hurst_fallbacks": int(fm.hurst_fallback.sum()),
            "degenerate_cumulant_columns": int(fm.degenerate_columns.sum()),
        },
        kmeans={
            "loss": clustering.loss,
            "iterations": clustering.n_iter,
            "converged": clustering.converged,
            "cluster_sizes": [int(s) for s in clustering.cluster_sizes],
        },
        outputs={
            p.name: {"schema_version": SCHEMA_VERSIONS[p.name], "sha256": _sha256(p)} for p in sorted(written)
        },
    )
    _write_json(out / MANIFEST, manifest)
    if not all(manifest["conservation"].values()):
        logger.error("row conservation does not balance: %s", manifest["conservation"])
        return 1, manifest
    return 0, manifest


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    status, manifest = run_pipeline(cfg)
    if status == 0:
        print(f"wrote {len(manifest['outputs'])} files + {MANIFEST} to {cfg.out_dir}")
    else:
        print(f"error: {manifest.get('error')}", file=sys.stderr)
    return status


def _cmd_ingest_check(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.validate()
    loaded = load_data(cfg)
    c = loaded.counters
    total = max(c["parsed"], 1)
    print(f"rows read            {c['rows_read']}")
    print(f"malformed (rejected) {c['rejected']}")
    print(f"missing actual time  {c['dropped_missing']} (fraction {c['dropped_missing'] / total:.6f})")
    print(f"other airports       {c['dropped_airport']}")
    print(f"outside 05:00-01:00  {c['dropped_window']}")
    print(f"valid at {cfg.airport}         {c['kept']}")
    print(f"binned into {loaded.year}     {c['binned']} (outside year: {c['outside_year']})")
    if args.rejects:
        ingest.write_rejects(loaded.parsed.rejects, loaded.parsed.header, args.rejects)
    balanced = conservation(c)
    for rule, ok in balanced.items():
        print(f"{'ok ' if ok else 'BAD'} {rule}")
    return 0 if all(balanced.values()) else 1


def _cmd_features(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm, _ = write_features_stage(cfg, load_data(cfg), out)
    print(f"{len(fm)} day(s) -> {out / 'features.csv'}")
    return 0


def _cmd_cluster(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fm = ft.read_features_csv(args.features)
    clustering, _ = write_cluster_stage(cfg, fm, out)
    print(f"k={clustering.k} loss={clustering.loss:.6g} sizes={clustering.cluster_sizes.tolist()}")
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    cfg = load_config(args)
    cfg.validate()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    labels = cl.read_assignments_csv(args.assignments)
    k = cfg.kmeans.k if args.k is not None else max(labels.values(), default=0)
    ev, _ = write_evaluate_stage(cfg, load_data(cfg), labels, k, out)
    print(",".join(metrics.REPORT_HEADER))
    for r in ev.rows:
        print(",".join([f"C{r.label}", *(f"{v:.4f}" for v in r.values()), str(r.days)]))
    return 0


def _cmd_synth(args: argparse.Namespace) -> int:
    out = Path(args.out_dir or "synth")
    out.mkdir(parents=True, exist_ok=True)
    airport = (args.airport or "SYN").upper()
    year = args.year or 2023
    records, labels = synth.simulate_year(seed=args.seed or 0, year=year, airport=airport)
    synth.write_records_csv(records, out / "flights.csv")
    synth.write_labels_csv(labels, year, out / "labels.csv")
    print(f"{len(records)} flights over {len(labels)} days -> {out / 'flights.csv'}")
    return 0


def calibration_table(
    grid: Sequence[float], n: int, n_seeds: int, min_len: int = ft.MIN_SCALE_LEN
) -> list[dict[str, float]]:
    rows = []
    for h in grid:
        est = np.array([ft.hurst(synth.fgn_generate(synth.FgnSpec(h, n, s)), min_len).h for s in range(n_seeds)])
        rows.append({
            "h": h,
            "n": n,
            "mean": float(est.mean()),
            "bias": float(est.mean() - h),
            "mae": float(np.abs(est - h).mean()),
            "sd": float(est.std(ddof=1)) if n_seeds > 1 else 0.0,
        })
    return rows


def _cmd_calibrate(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    rows = calibration_table(args.grid, args.n, args.seeds, args.min_len)
    print(f"{'H':>5} {'n':>6} {'mean':>8} {'bias':>8} {'MAE':>8} {'sd':>8}")
    for r in rows:
        print(f"{r['h']:5.2f} {r['n']:6d} {r['mean']:8.4f} {r['bias']:+8.4f} {r['mae']:8.4f} {r['sd']:8.4f}")
    logger.info("calibration took %.2fs", time.perf_counter() - start)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aircongest", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def data_args(p: argparse.ArgumentParser, out: bool = True) -> None:
        p.add_argument("--input", help="flight CSV")
        p.add_argument("--airport", help="IATA code of the study airport")
        p.add_argument("--year", type=int, help="calendar year (default: inferred)")
        p.add_argument("--config", help="TOML config file")
        if out:
            p.add_argument("--out-dir", dest="out_dir")

    def kmeans_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--k", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--n-init", dest="n_init", type=int)
        p.add_argument("--pca-dims", dest="pca_dims", type=int, choices=(2, 3))

    p = sub.add_parser("run", help="full pipeline")
    data_args(p)
    kmeans_args(p)
    p.add_argument("--dump-series", action="store_true", help="also write series.csv")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("ingest-check", help="validation and drop statistics only")
    data_args(p, out=False)
    p.add_argument("--rejects", help="write malformed rows to this CSV")
    p.set_defaults(func=_cmd_ingest_check)

    p = sub.add_parser("features", help="stop after the feature matrix")
    data_args(p)
    p.add_argument("--dump-series", action="store_true")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("cluster", help="cluster an existing features.csv")
    p.add_argument("--features", required=True)
    p.add_argument("--config")
    p.add_argument("--out-dir", dest="out_dir")
    kmeans_args(p)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("evaluate", help="congestion metrics for existing assignments")
    data_args(p)
    p.add_argument("--assignments", required=True)
    p.add_argument("--k", type=int)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth", help="simulate a labelled four-regime year")
    p.add_argument("--out-dir", dest="out_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--year", type=int)
    p.add_argument("--airport")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("calibrate-hurst", help="R/S bias table on exact fGn")
    p.add_argument("--n", type=int, default=1024)
    p.add_argument("--seeds", type=int, default=100)
    p.add_argument("--grid", type=float, nargs="+", default=[0.3, 0.5, 0.7, 0.9])
    p.add_argument("--min-len", dest="min_len", type=int, default=ft.MIN_SCALE_LEN)
    p.set_defaults(func=_cmd_calibrate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ingest.IngestError, ValueError, OSError, tomllib.TOMLDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
