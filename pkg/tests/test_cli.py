import json
import os
from pathlib import Path

import pytest

from hazmob import synth
from hazmob.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, load_config_file, main
from hazmob.cli import ConfigError

REPORT_FILES = [
    "mei.csv", "clusters.csv", "cluster_summary.csv", "disparity.csv",
    "correlations.csv", "scatter.csv", "curves.csv",
]


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("world")
    world = synth.gen_world(
        synth.WorldConfig(seed=555, grid_n=6, hazard_autocorr=1, decay_alpha=2.5,
                          users=108, stops_per_user=40, demo_hazard_gain=0.4)
    )
    synth.write_world(world, out)
    return out


def run_args(fixture: Path, out: Path, *extra: str) -> list[str]:
    return [
        "run",
        "--stops", str(fixture / "stops.csv"),
        "--tracts", str(fixture / "tracts.geojson"),
        "--hazard-air", str(fixture / "hazard_air_pollution.csv"),
        "--hazard-toxic", str(fixture / "hazard_toxic.csv"),
        "--hazard-heat", str(fixture / "hazard_heat.csv"),
        "--out", str(out),
        "--cell-size", "0.5",
        *extra,
    ]


def test_synth_command_deterministic(tmp_path, capsys):
    args = ["synth", "--seed", "7", "--grid", "4", "--users", "10",
            "--stops-per-user", "5", "--out", str(tmp_path / "w1")]
    assert main(args) == EXIT_OK
    args[-1] = str(tmp_path / "w2")
    assert main(args) == EXIT_OK
    for name in ("stops.csv", "tracts.geojson", "hazard_heat.csv", "world_meta.json"):
        a = (tmp_path / "w1" / name).read_bytes()
        b = (tmp_path / "w2" / name).read_bytes()
        assert a == b, name


def test_synth_creates_missing_output_dir(tmp_path):
    target = tmp_path / "deep" / "nested" / "dir"
    assert main(["synth", "--seed", "1", "--grid", "2", "--users", "4",
                 "--stops-per-user", "3", "--out", str(target)]) == EXIT_OK
    assert (target / "stops.csv").exists()


def test_synth_bad_config_exits_2(tmp_path):
    assert main(["synth", "--seed", "1", "--grid", "0", "--out", str(tmp_path)]) == EXIT_CONFIG


def test_run_writes_all_reports(fixture_dir, tmp_path):
    out = tmp_path / "reports"
    assert main(run_args(fixture_dir, out)) == EXIT_OK
    for name in REPORT_FILES:
        assert (out / name).exists(), name
        assert (out / f"{name}.meta.json").exists(), name
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["counts"]["tracts"] == 36
    assert meta["counts"]["stops_rejected"] == 0
    assert meta["counts"]["users_assigned"] == 108
    assert meta["config_hash"]
    sidecar = json.loads((out / "mei.csv.meta.json").read_text())
    assert sidecar["config_hash"] == meta["config_hash"]
    mei_lines = (out / "mei.csv").read_text().splitlines()
    assert len(mei_lines) - 1 == meta["counts"]["tracts_with_mei"]


def test_run_threads_byte_identical(fixture_dir, tmp_path):
    out1 = tmp_path / "t1"
    out8 = tmp_path / "t8"
    assert main(run_args(fixture_dir, out1, "--threads", "1")) == EXIT_OK
    assert main(run_args(fixture_dir, out8, "--threads", "8")) == EXIT_OK
    for name in REPORT_FILES:
        assert (out1 / name).read_bytes() == (out8 / name).read_bytes(), name


def test_run_corrupt_stops_names_ingest_stage(fixture_dir, tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("totally,not,the,right,header\n")
    args = run_args(fixture_dir, tmp_path / "out")
    args[args.index("--stops") + 1] = str(bad)
    assert main(args) == EXIT_RUNTIME
    err = capsys.readouterr().err
    assert "ingest" in err
    # partial outputs are removed
    assert not list((tmp_path / "out").glob("*.csv"))


def test_run_missing_input_exits_2(fixture_dir, tmp_path, capsys):
    args = run_args(fixture_dir, tmp_path / "out")
    args[args.index("--stops") + 1] = str(tmp_path / "nope.csv")
    assert main(args) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_config_file_with_flag_overrides(fixture_dir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "\n".join(
            [
                "# pipeline configuration",
                f"stops = {fixture_dir / 'stops.csv'}",
                f"tracts = {fixture_dir / 'tracts.geojson'}",
                f"hazard_air = {fixture_dir / 'hazard_air_pollution.csv'}",
                f"hazard_toxic = {fixture_dir / 'hazard_toxic.csv'}",
                f"hazard_heat = {fixture_dir / 'hazard_heat.csv'}",
                "cell_size_deg = 0.5",
                "eps = 0.2  # flag should beat this",
                "curve_thresholds = 0.05,0.1,0.2",
            ]
        )
        + "\n"
    )
    out = tmp_path / "cfg_out"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--eps", "0.15"]) == EXIT_OK
    meta = json.loads((out / "run_metadata.json").read_text())
    assert meta["config"]["eps"] == 0.15
    assert meta["config"]["curve_thresholds"] == [0.05, 0.1, 0.2]


def test_config_file_unknown_key_rejected(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("frobnicate = 1\n")
    with pytest.raises(ConfigError):
        load_config_file(str(cfg))


def test_threads_env_default(fixture_dir, tmp_path, monkeypatch):
    out = tmp_path / "env_out"
    monkeypatch.setenv("HAZMOB_THREADS", "3")
    assert main(run_args(fixture_dir, out)) == EXIT_OK
    monkeypatch.setenv("HAZMOB_THREADS", "zero")
    assert main(run_args(fixture_dir, tmp_path / "env_bad")) == EXIT_CONFIG


def test_report_summary_consistent_with_mei_csv(fixture_dir, tmp_path, capsys):
    out = tmp_path / "for_report"
    assert main(run_args(fixture_dir, out)) == EXIT_OK
    capsys.readouterr()
    assert main([
        "report", "--mei", str(out / "mei.csv"), "--tracts", str(fixture_dir / "tracts.geojson"),
        "--curve-thresholds", "0.05,0.1",
    ]) == EXIT_OK
    text = capsys.readouterr().out
    lines = text.splitlines()
    assert lines[0].startswith("tracts with defined MEI:")
    # recompute the direct-class mean for air from the CSV itself
    import csv as csv_mod

    with open(out / "mei.csv") as fh:
        rows = list(csv_mod.DictReader(fh))
    direct = [float(r["mei_air"]) for r in rows if r["class_air"] == "direct" and r["mei_air"]]
    expect = sum(direct) / len(direct)
    air_line = next(l for l in lines if l.startswith("air_pollution "))
    segments = air_line[len("air_pollution "):].split(" | ")
    direct_part = next(p for p in segments if p.startswith("direct"))
    assert f"{len(direct)} tracts" in direct_part
    assert f"mean_mei={expect:.6f}" in direct_part
    # population lines match a direct filter-and-sum over the CSV + tracts
    from hazmob import ingest
    from hazmob.exposure import population_curve

    table = ingest.read_mei(out / "mei.csv")
    tracts = ingest.parse_tracts(fixture_dir / "tracts.geojson")
    curve = population_curve(table, tracts, "toxic", [0.05, 0.1])
    for threshold, population in curve.points:
        assert f"latent_population toxic above {threshold:.6f}: {population}" in text


def test_report_empty_latent_class(tmp_path, capsys):
    from hazmob import ingest
    from hazmob.model import HAZARD_TYPES, MeiRow, MeiTable

    rows = {
        "48001000001": MeiRow(
            geoid="48001000001",
            mei=dict.fromkeys(HAZARD_TYPES, 0.9),
            nonhome_share=dict.fromkeys(HAZARD_TYPES, 0.1),
            nonhome_conditional=dict.fromkeys(HAZARD_TYPES, None),
            region_class=dict.fromkeys(HAZARD_TYPES, "direct"),
        )
    }
    ingest.write_report(MeiTable(rows=rows), tmp_path / "mei.csv")
    tract_doc = {
        "type": "FeatureCollection",
        "features": [{
            "type": "Feature",
            "properties": {"GEOID": "48001000001", "POP": 10, "PCT_MINORITY": 0.5, "PCT_POV200": 0.5},
            "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]]},
        }],
    }
    (tmp_path / "tracts.geojson").write_text(json.dumps(tract_doc))
    assert main(["report", "--mei", str(tmp_path / "mei.csv"),
                 "--tracts", str(tmp_path / "tracts.geojson")]) == EXIT_OK
    out = capsys.readouterr().out
    assert "latent: 0 tracts" in out


def test_validate_dry_run(fixture_dir, tmp_path, capsys):
    assert main([
        "validate",
        "--stops", str(fixture_dir / "stops.csv"),
        "--tracts", str(fixture_dir / "tracts.geojson"),
        "--hazard-air", str(fixture_dir / "hazard_air_pollution.csv"),
    ]) == EXIT_OK
    out = capsys.readouterr().out
    assert "stops: read=" in out
    assert "tracts: 36 features" in out
    bad = tmp_path / "bad_stops.csv"
    bad.write_text("user_id,lon,lat,start_ts,dwell_s\nu1,999,0,2019-04-01T00:00:00Z,5\n")
    assert main(["validate", "--stops", str(bad)]) == EXIT_OK
    out = capsys.readouterr().out
    assert "rejected=1" in out


def test_no_heat_quartile_toggle(fixture_dir, tmp_path):
    out = tmp_path / "no_heat"
    assert main(run_args(fixture_dir, out, "--no-heat-quartile")) == EXIT_OK
    import csv as csv_mod

    with open(out / "mei.csv") as fh:
        rows = list(csv_mod.DictReader(fh))
    assert all(r["class_heat"] != "direct" for r in rows)
    assert all(not r["mei_heat"] or float(r["mei_heat"]) == 0.0 for r in rows)
