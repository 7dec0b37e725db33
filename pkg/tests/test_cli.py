import csv
import json
import math

import pytest
import yaml

from boundcount.cli import EXIT_CONFIG, EXIT_MODULE, SCHEMA_VERSION, main


def write(tmp_path, data, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(json.dumps(data) if name.endswith(".json") else yaml.safe_dump(data))
    return str(p)


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0] == f"# schema_version={SCHEMA_VERSION}"
    return list(csv.DictReader(lines[1:]))


BOX3 = {"type": "box", "d": 3, "L": 12, "n": 32}


def test_classify(tmp_path):
    cfg = write(tmp_path, {"command": "classify", "symbol": {"kind": "Power", "d": 3, "gamma": 2}})
    assert main(["classify", "--config", cfg, "--out", str(tmp_path / "o")]) == 0
    rows = read_csv(tmp_path / "o" / "classify.csv")
    assert rows[0]["regime"] == "Quantitative"
    manifest = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert manifest["config"]["symbol"]["gamma"] == 2 and "wall_time_s" in manifest and manifest["exit_code"] == 0


def test_bound_with_repulsive_potential(tmp_path):
    cfg = write(
        tmp_path,
        {
            "command": "bound",
            "symbol": {"kind": "Power", "d": 3, "gamma": 2},
            "potential": {"family": "Gaussian", "domain": BOX3, "depth": -1.0, "width": 1.0},
        },
    )
    assert main(["bound", "--config", cfg, "--out", str(tmp_path / "o"), "--format", "json"]) == 0
    body = json.loads((tmp_path / "o" / "bound.json").read_text())
    row = body["rows"][0]
    assert row["bound"] == 0 and row["zero_guarantee"] is True
    assert set(row) == {"symbol_kind", "d", "params_hash", "alpha", "bound", "g_path", "zero_guarantee"}


def test_gfun_json_config(tmp_path):
    cfg = write(tmp_path, {"command": "gfun", "symbol": {"kind": "Power", "d": 3, "gamma": 2}, "settings": {"u": [1.0], "path": "numeric"}}, "cfg.json")
    assert main(["gfun", "--config", cfg, "--out", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "gfun.csv")[0]
    assert float(row["G"]) == pytest.approx(1 / (2 * math.pi**2), rel=5e-3)


def test_oracle_lattice(tmp_path):
    cfg = write(tmp_path, {"command": "oracle", "potential": {"family": "SingleSite", "domain": {"type": "lattice", "d": 1, "radius": 400}, "depth": 1.0}})
    assert main(["oracle", "--config", cfg, "--out", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "oracle.csv")[0]
    assert int(row["count"]) == 1
    assert float(row["lowest_eig"]) == pytest.approx(2 - math.sqrt(5), abs=1e-9)


def test_existence_rows(tmp_path):
    cfg = write(
        tmp_path,
        {
            "command": "existence",
            "symbol": {"kind": "Power", "d": 1, "gamma": 2},
            "potential": {"family": "Gaussian", "domain": {"type": "box", "d": 1, "L": 1024, "n": 2048}, "depth": 1.0, "width": 1.0},
            "settings": {"n": [4, 16]},
        },
    )
    assert main(["existence", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "existence.csv")
    assert [r["n"] for r in rows] == ["4", "16"]
    assert all(r["certified"] == "True" for r in rows)


def test_bcs_without_bracket(tmp_path):
    cfg = write(
        tmp_path,
        {
            "command": "bcs",
            "potential": {"family": "Gaussian", "domain": {"type": "box", "d": 3, "L": 6.283185307179586, "n": 16}, "depth": 0.0, "width": 1.0},
            "settings": {"mu": 1.0, "bracket": {"beta_hi_max": 4.0}},
        },
    )
    assert main(["bcs", "--config", cfg, "--out", str(tmp_path)]) == 0
    row = read_csv(tmp_path / "bcs.csv")[0]
    assert row["beta_cr"] == "inf"


def test_validate_empty(tmp_path):
    cfg = write(tmp_path, {"command": "validate", "settings": {"N": 0}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path)]) == 0
    text = (tmp_path / "validate.csv").read_text().splitlines()
    assert text[1] == "instance_id,bound_min_over_alpha,oracle_count,violated" and len(text) == 2


def test_validate_weak_coupling_lattice(tmp_path):
    cfg = write(tmp_path, {"command": "validate", "settings": {"N": 3, "d": 1, "window": 24}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "validate.csv")
    assert all(r["bound_min_over_alpha"] == "inf" and r["violated"] == "False" for r in rows)
    assert all(int(r["oracle_count"]) >= 1 for r in rows)


def test_validate_reproducible_and_parallel(tmp_path):
    cfg = write(tmp_path, {"command": "validate", "seed": 3, "settings": {"N": 4, "d": 3, "window": 10, "alpha_points": 20}})
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "a")]) == 0
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "b"), "--workers", "2"]) == 0
    assert (tmp_path / "a" / "validate.csv").read_bytes() == (tmp_path / "b" / "validate.csv").read_bytes()
    assert main(["validate", "--config", cfg, "--out", str(tmp_path / "c"), "--seed", "4"]) == 0
    assert (tmp_path / "a" / "validate.csv").read_bytes() != (tmp_path / "c" / "validate.csv").read_bytes()
    summary = json.loads((tmp_path / "a" / "manifest.json").read_text())["summary"]
    assert summary["violations"] == 0 and summary["instances"] == 4


def test_sweep(tmp_path):
    cfg = write(
        tmp_path,
        {
            "command": "sweep",
            "symbol": {"kind": "Power", "d": 3, "gamma": 2},
            "potential": {"family": "Gaussian", "domain": BOX3, "depth": 1.0, "width": 1.0},
            "settings": {"base": "bound", "alpha": 0.1, "grid": {"potential.depth": [0.5, 1.0]}},
        },
    )
    assert main(["sweep", "--config", cfg, "--out", str(tmp_path)]) == 0
    rows = read_csv(tmp_path / "sweep.csv")
    assert [r["potential.depth"] for r in rows] == ["0.5", "1.0"]
    assert float(rows[0]["bound"]) < float(rows[1]["bound"])


@pytest.mark.parametrize(
    "data",
    [
        {"command": "bound", "symbol": {"kind": "Power", "d": 3, "gamma": -2}, "potential": {"family": "Gaussian", "domain": BOX3}},
        {"command": "bound", "symbol": {"kind": "Nope", "d": 3}},
        {"command": "bound", "symbol": {"kind": "Power", "d": 3, "gamma": 2}},
        {"command": "bound", "symbol": {"kind": "Power", "d": 3, "gamma": 2}, "potential": {"family": "Gaussian", "domain": {"type": "box", "d": 3, "L": 40, "n": 16}}},
        {"command": "classify", "symbol": {"kind": "Power", "d": 3, "gamma": 2, "extra": 1}},
        {"command": "classify", "bogus": {}},
        {"command": "sweep", "settings": {"base": "sweep", "grid": {"a": [1]}}},
        {"command": "bcs", "potential": {"family": "Gaussian", "domain": BOX3}, "settings": {"bracket": {"nope": 1}}},
    ],
)
def test_invalid_config_fails_fast(tmp_path, capsys, data):
    cfg = write(tmp_path, data)
    out = tmp_path / "out"
    assert main([data["command"], "--config", cfg, "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert record["exit_code"] == EXIT_CONFIG and record["origin"] == "cli"


def test_unparseable_config(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("{oops")
    assert main(["classify", "--config", str(p), "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_module_error_exit_code(tmp_path, capsys):
    cfg = write(
        tmp_path,
        {
            "command": "bound",
            "symbol": {"kind": "Power", "d": 3, "gamma": 2},
            "potential": {"family": "Gaussian", "domain": BOX3, "depth": 1.0, "width": 1.0},
            "settings": {"alpha": 0.3},
        },
    )
    assert main(["bound", "--config", cfg, "--out", str(tmp_path / "o")]) == EXIT_MODULE
    record = json.loads(capsys.readouterr().err.strip())
    assert record["origin"] == "bounds"
    assert not (tmp_path / "o" / "bound.csv").exists()


def test_log_level_env(tmp_path, monkeypatch):
    monkeypatch.setenv("BOUNDCOUNT_LOG", "debug")
    cfg = write(tmp_path, {"command": "classify", "symbol": {"kind": "DiscreteLaplacian", "d": 3}})
    assert main(["classify", "--config", cfg, "--out", str(tmp_path)]) == 0
