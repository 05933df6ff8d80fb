import json

import jsonschema
import numpy as np
import pytest

from esmgauntlet.cli import main
from esmgauntlet.dataio import read_dataset, write_dataset
from esmgauntlet.fixtures import synthetic_climate
from esmgauntlet.grid import GridSpec
from esmgauntlet.report import load_schema


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    g = GridSpec.regular(16, 32)
    write_dataset(synthetic_climate(g, 40, model_id="A"), d / "a.etc")
    write_dataset(synthetic_climate(g, 40, model_id="B", noise=0.01, seed=2), d / "b.etc")
    write_dataset(synthetic_climate(g, 40, model_id="ref"), d / "ref.etc")
    return d


def _json(path):
    doc = json.loads(path.read_text())
    jsonschema.validate(doc, load_schema())
    return doc


def test_sanity_pass(files, tmp_path):
    assert main(["sanity", str(files / "a.etc"), "--out", str(tmp_path)]) == 0
    doc = _json(tmp_path / "report.json")
    assert set(doc["check_ids"]) == {"mass_conservation", "nonnegative_tracers", "precip_column_budget",
                                     "supersaturation"}
    assert (tmp_path / "manifest.json").exists()


def test_leaky_trajectory_fails_sanity(tmp_path):
    run = tmp_path / "run"
    args = ["idealized", "advection", "--builtin", "leaky", "--nlat", "16", "--nlon", "32", "--steps", "10"]
    assert main(args + ["--out", str(run)]) == 1
    traj = read_dataset(run / "trajectory.etc")
    assert traj.ntime == 11
    out = tmp_path / "sanity"
    assert main(["sanity", str(run / "trajectory.etc"), "--out", str(out)]) == 1
    doc = _json(out / "report.json")
    mass = doc["checks"]["toy-leaky"]["mass_conservation"]
    assert not mass["passed"]
    assert mass["statistic"] == pytest.approx(1 - (1 - 1e-3) ** 10, abs=1e-9)


def test_usage_errors(capsys):
    assert main(["sanity", "--no-such-flag", "x.etc"]) == 2
    assert "usage" in capsys.readouterr().err
    assert main([]) == 2
    assert main(["causality"]) == 2  # neither --adapter nor --builtin


def test_io_errors(tmp_path, capsys):
    assert main(["sanity", str(tmp_path / "missing.etc")]) == 3
    bad = tmp_path / "bad.etc"
    bad.write_bytes(b"not an etc file")
    assert main(["sanity", str(bad)]) == 3
    assert main(["causality", "--adapter", "/nonexistent/binary", "--nlat", "8", "--nlon", "16"]) == 3


def test_stdout_is_deterministic(files, capsysbinary):
    argv = ["metrics", str(files / "b.etc"), str(files / "ref.etc"), "--timestamp", "2024-01-01T00:00:00Z"]
    assert main(argv) == 0
    first = capsysbinary.readouterr().out
    assert main(argv) == 0
    assert capsysbinary.readouterr().out == first
    assert json.loads(first)["manifest"]["timestamp"] == "2024-01-01T00:00:00Z"


def test_compare_and_rerender(files, tmp_path):
    for name in ("a", "b"):
        assert main(["metrics", str(files / f"{name}.etc"), str(files / "ref.etc"), "--out", str(tmp_path / name)]) == 0
    cmp_dir = tmp_path / "cmp"
    assert main(["compare", str(tmp_path / "a" / "report.json"), str(tmp_path / "b" / "report.json"),
                 "--out", str(cmp_dir)]) == 0
    doc = _json(cmp_dir / "report.json")
    assert doc["models"] == ["A", "B"] and doc["pairwise"]
    assert doc["portrait"]["values"]
    md = tmp_path / "md"
    assert main(["report", str(cmp_dir / "report.json"), "--formats", "markdown,csv", "--out", str(md)]) == 0
    assert (md / "report.md").read_text().startswith("# Evaluation report")
    rows = (md / "report.csv").read_text().splitlines()
    assert len(rows) - 1 == len(doc["metrics"])


def test_constraints_spectra_features(files, tmp_path):
    assert main(["constraints", str(files / "a.etc"), "--out", str(tmp_path / "c")]) == 0
    assert main(["constraints", str(files / "a.etc"), "--wv-band", "1:2", "--out", str(tmp_path / "c2")]) == 1
    assert main(["spectra", str(files / "b.etc"), str(files / "ref.etc"), "--out", str(tmp_path / "s")]) == 0
    assert main(["features", str(files / "a.etc"), "--radius", "3e6", "--out", str(tmp_path / "f")]) == 0
    rows = (tmp_path / "f" / "features.csv").read_text().splitlines()
    assert rows[0] == "time,lat,lon,value,depth,closed" and len(rows) > 1


def test_validate_flags_missing_units(tmp_path, files):
    ds = read_dataset(files / "a.etc")
    write_dataset(ds.with_variables(ds["tas"].replace(units="")), tmp_path / "x.etc")
    assert main(["validate", str(files / "a.etc")]) == 0
    assert main(["validate", str(tmp_path / "x.etc")]) == 1


def test_causality_controls(tmp_path):
    common = ["causality", "--nlat", "16", "--nlon", "32", "--steps", "3"]
    assert main(common + ["--builtin", "upwind", "--out", str(tmp_path / "u")]) == 0
    assert main(common + ["--builtin", "teleport", "--out", str(tmp_path / "t")]) == 1
    rep = json.loads((tmp_path / "t" / "causality.json").read_text())
    assert rep["first_violation_step"] == 1


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# toy run\nbuiltin = upwind\nnlat = 16\nnlon = 32\nsteps = 2\n")
    assert main(["causality", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 0
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    run_cfg = manifest["config"]["toy-upwind"]["causality"]
    assert run_cfg["options"]["nlat"] == 16 and run_cfg["options"]["steps"] == 2
    cfg.write_text("bogus = 1\n")
    assert main(["causality", "--builtin", "upwind", "--config", str(cfg)]) == 2
