import argparse
import csv
import json

import pytest

from aircongest import cli

EXPECTED_FILES = {
    "rejects.csv", "features.csv", "assignments.csv", "centroids.csv", "centroid_distances.csv",
    "pca_coords.csv", "cluster_evaluation.csv", "cluster_evaluation.json", "boxplot_long.csv",
}


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for key in list(cli.os.environ):
        if key.startswith(cli.ENV_PREFIX):
            monkeypatch.delenv(key)


@pytest.fixture(scope="module")
def run_dirs(tmp_path_factory, synthetic_csv):
    dirs = []
    for name in ("a", "b"):
        out = tmp_path_factory.mktemp(name)
        status = cli.main(["run", "--input", str(synthetic_csv), "--airport", "SYN", "--out-dir", str(out)])
        assert status == 0
        dirs.append(out)
    return dirs


def test_run_writes_bundle_and_manifest(run_dirs):
    out = run_dirs[0]
    names = {p.name for p in out.iterdir()}
    assert names == EXPECTED_FILES | {cli.MANIFEST}
    manifest = json.loads((out / cli.MANIFEST).read_text())
    assert manifest["status"] == "ok"
    assert set(manifest["outputs"]) == EXPECTED_FILES
    assert all(manifest["conservation"].values())
    assert manifest["days"]["calendar"] == 365 and manifest["year"] == 2023
    assert manifest["seed"] == 0 and manifest["kmeans_restarts"] == 10


def test_run_is_byte_deterministic(run_dirs):
    a, b = run_dirs
    for name in EXPECTED_FILES | {cli.MANIFEST}:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_report_has_k_rows(run_dirs):
    with open(run_dirs[0] / "cluster_evaluation.csv", newline="") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(cli.metrics.REPORT_HEADER)
    assert len(rows) == 5
    assert sum(int(r[-1]) for r in rows[1:]) == 365


def test_stages_compose(run_dirs, synthetic_csv, tmp_path, capsys):
    base = run_dirs[0]
    assert cli.main(["cluster", "--features", str(base / "features.csv"), "--out-dir", str(tmp_path)]) == 0
    assert (tmp_path / "assignments.csv").read_bytes() == (base / "assignments.csv").read_bytes()
    status = cli.main(["evaluate", "--input", str(synthetic_csv), "--airport", "SYN",
                       "--assignments", str(tmp_path / "assignments.csv"), "--out-dir", str(tmp_path)])
    assert status == 0
    assert (tmp_path / "cluster_evaluation.csv").read_bytes() == (base / "cluster_evaluation.csv").read_bytes()
    assert capsys.readouterr().out.splitlines()[1].startswith("C")


def test_features_subcommand(synthetic_csv, tmp_path, run_dirs):
    argv = ["features", "--input", str(synthetic_csv), "--airport", "SYN", "--out-dir", str(tmp_path), "--dump-series"]
    assert cli.main(argv) == 0
    assert (tmp_path / "features.csv").read_bytes() == (run_dirs[0] / "features.csv").read_bytes()
    assert len((tmp_path / "series.csv").read_text().splitlines()) == 1 + 365 * 80


def test_ingest_check(tmp_path, capsys):
    src = tmp_path / "f.csv"
    src.write_text(
        "flight_id,origin,destination,sched_dep,actual_dep,sched_arr,actual_arr,dep_delay_s\n"
        "A,CAN,PEK,2023-03-01T08:00,2023-03-01T08:10,2023-03-01T11:00,2023-03-01T11:00,600\n"
        "B,CAN,PEK,2023-03-01T09:00,,2023-03-01T12:00,,\n"
        "C,CAN\n"
    )
    status = cli.main(["ingest-check", "--input", str(src), "--airport", "can", "--rejects", str(tmp_path / "r.csv")])
    out = capsys.readouterr().out
    assert status == 0
    assert "rows read            3" in out and "missing actual time  1" in out
    assert "BAD" not in out
    assert (tmp_path / "r.csv").read_text().splitlines()[1].endswith("field_count")


def test_calibrate_prints_default_grid(capsys):
    assert cli.main(["calibrate-hurst", "--n", "256", "--seeds", "3"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert len(lines) == 5
    assert [float(line.split()[0]) for line in lines[1:]] == [0.3, 0.5, 0.7, 0.9]


def test_unknown_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_input_is_an_error(tmp_path, capsys):
    assert cli.main(["run", "--input", str(tmp_path / "nope.csv"), "--airport", "CAN",
                     "--out-dir", str(tmp_path / "o")]) == 1
    assert "not found" in capsys.readouterr().err


def _args(**kw):
    return argparse.Namespace(**kw)


def test_config_precedence(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text(
        '[input]\npath = "from_toml.csv"\n[input.columns]\nflight_id = "id"\n'
        '[run]\nairport = "AAA"\nyear = 2020\n[kmeans]\nk = 3\nseed = 9\nn_init = 2\n'
        "[features]\nmin_len = 8\n"
    )
    cfg = cli.load_config(_args(config=str(toml)), {})
    assert (cfg.input, cfg.airport, cfg.year, cfg.seed, cfg.kmeans.k, cfg.kmeans.seed) == (
        "from_toml.csv", "AAA", 2020, 9, 3, 9)
    assert cfg.columns == {"flight_id": "id"} and cfg.min_len == 8 and cfg.kmeans.n_init == 2

    env = {"AIRCONGEST_AIRPORT": "bbb", "AIRCONGEST_K": "5", "AIRCONGEST_SEED": "4"}
    cfg = cli.load_config(_args(config=str(toml)), env)
    assert (cfg.airport, cfg.kmeans.k, cfg.seed, cfg.kmeans.seed) == ("BBB", 5, 4, 4)

    cfg = cli.load_config(_args(config=str(toml), airport="ccc", k=2, seed=1), env)
    assert (cfg.airport, cfg.kmeans.k, cfg.kmeans.seed, cfg.year) == ("CCC", 2, 1, 2020)


def test_config_file_from_environment(tmp_path):
    toml = tmp_path / "c.toml"
    toml.write_text('[run]\nairport = "XYZ"\n')
    assert cli.load_config(_args(), {"AIRCONGEST_CONFIG": str(toml)}).airport == "XYZ"


def test_failed_run_leaves_no_partial_outputs(tmp_path):
    src = tmp_path / "f.csv"
    # one usable day only: feature extraction needs two
    src.write_text(
        "flight_id,origin,destination,sched_dep,actual_dep,sched_arr,actual_arr,dep_delay_s\n"
        "A,CAN,PEK,2023-03-01T08:00,2023-03-01T08:10,2023-03-01T11:00,2023-03-01T11:00,600\n"
    )
    out = tmp_path / "o"
    status, manifest = cli.run_pipeline(cli.load_config(_args(input=str(src), airport="CAN", out_dir=str(out)), {}))
    assert status == 1 and manifest["status"] == "failed"
    assert {p.name for p in out.iterdir()} == {cli.MANIFEST}
    assert json.loads((out / cli.MANIFEST).read_text())["error"]
