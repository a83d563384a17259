import csv
import json

import numpy as np
import pytest

from ddsensor.cli import load_scenario, main, parse_horizons, parse_scenario
from ddsensor.errors import ConfigError
from ddsensor.lti_core import LtiSystem, load_plant, save_plant, spectral_radius


def write_scenario(path, **over):
    doc = {"schema_version": 1,
           "plant": {"generator": "random-stable", "n": 5, "m": 2, "p": 7, "seed": 3},
           "seed_sensors": [1, 2], "p_prime": 4, "metric": {"kind": "trace", "discount": 0.9},
           "N": 3, "output_dir": "out"}
    doc.update(over)
    path.write_text(json.dumps(doc))
    return path


def test_generate_is_deterministic_and_stable(tmp_path):
    sc = write_scenario(tmp_path / "sc.json")
    assert main(["generate", str(sc), "--out", str(tmp_path / "a.json")]) == 0
    assert main(["generate", str(sc), "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert spectral_radius(load_plant(tmp_path / "a.json")) <= 0.95 + 1e-12


def test_generate_degenerate_single_state(tmp_path):
    sc = write_scenario(tmp_path / "sc.json", plant={"generator": "random-stable", "n": 1, "m": 1, "p": 1})
    assert main(["generate", str(sc)]) == 0
    plant = load_plant(tmp_path / "out" / "plant.json")
    assert plant.n == 1


def test_generate_rejects_large_radius(tmp_path):
    sc = write_scenario(tmp_path / "sc.json", plant={"generator": "random-stable", "n": 3, "m": 1, "p": 2, "rho": 0.99})
    assert main(["generate", str(sc)]) == 2


def test_select_writes_outputs_and_matches_oracle(tmp_path):
    sc = write_scenario(tmp_path / "sc.json")
    assert main(["select", str(sc), "--oracle"]) == 0
    out = tmp_path / "out"
    res = json.loads((out / "result.json").read_text())
    assert res["chosen"] == res["oracle"]["chosen"]
    assert res["oracle"]["max_rel_error"] < 1e-6
    timing = json.loads((out / "timing.json").read_text())
    assert {"pinv", "scoring", "total"} <= set(timing)
    rows = list(csv.reader((out / "scores.csv").open()))
    assert rows[0] == ["sensor", "score", "rank", "chosen"] and len(rows) == 8
    for name in ("scores.png", "errors.png", "errors.csv"):
        assert (out / name).exists()


def test_select_is_byte_identical_across_runs(tmp_path):
    sc = write_scenario(tmp_path / "sc.json", metric={"kind": "logdet", "horizon": 3})
    main(["select", str(sc), "--no-plots", "--out-dir", str(tmp_path / "r1")])
    main(["select", str(sc), "--no-plots", "--out-dir", str(tmp_path / "r2"), "--threads", "3"])
    for name in ("result.json", "scores.csv"):
        assert (tmp_path / "r1" / name).read_bytes() == (tmp_path / "r2" / name).read_bytes()


def test_sweep_writes_one_row_per_sensor_per_horizon(tmp_path):
    sc = write_scenario(tmp_path / "sc.json")
    assert main(["sweep", str(sc), "--horizons", "1..8", "--oracle"]) == 0
    out = tmp_path / "out"
    rows = list(csv.DictReader((out / "errors.csv").open()))
    assert len(rows) == 8 * 7
    for j in range(1, 8):
        assert sorted(int(r["horizon"]) for r in rows if r["sensor"] == str(j)) == list(range(1, 9))
    res = json.loads((out / "result.json").read_text())
    assert set(res["chosen_by_horizon"]) == {str(t) for t in range(1, 9)}
    assert all(res["oracle"]["matches_by_horizon"].values())
    assert (out / "selection.png").exists()


def test_verify_zero_sensor_and_threshold(tmp_path):
    plant = LtiSystem(np.diag([0.5, 0.3, -0.2]), np.ones((3, 1)),
                      np.vstack([np.eye(3), np.zeros(3)]))
    save_plant(plant, tmp_path / "plant.json")
    sc = write_scenario(tmp_path / "sc.json", plant={"file": "plant.json"}, seed_sensors=[1, 2, 3])
    assert main(["verify", str(sc), "--sensors", "4", "--rank-rtol", "1e-8"]) == 0
    doc = json.loads((tmp_path / "out" / "verify.json").read_text())
    assert doc["verdict"] == "verified-unobservable"
    assert doc["rank_rtol"] == 1e-8
    assert "min_singular_value_Z_tilde" in doc


def test_oracle_command(tmp_path):
    sc = write_scenario(tmp_path / "sc.json")
    assert main(["oracle", str(sc)]) == 0
    doc = json.loads((tmp_path / "out" / "oracle.json").read_text())
    assert len(doc["brute_force"]) == 4 and doc["observable_seed"]


def test_collect_writes_trajectory(tmp_path):
    sc = write_scenario(tmp_path / "sc.json")
    assert main(["collect", str(sc)]) == 0
    meta = json.loads((tmp_path / "out" / "trajectory.json").read_text())
    lines = (tmp_path / "out" / "trajectory.csv").read_text().splitlines()
    assert len(lines) == meta["length"] + 1
    assert lines[0].startswith("t,u_1,u_2,yhat_1,yhat_2,ytilde_1")


def test_env_output_dir(tmp_path, monkeypatch):
    sc = write_scenario(tmp_path / "sc.json", output_dir=None)
    monkeypatch.setenv("DDSENSOR_OUTPUT_DIR", str(tmp_path / "envout"))
    assert main(["oracle", str(sc)]) == 0
    assert (tmp_path / "envout" / "oracle.json").exists()


def test_exit_codes(tmp_path, capsys):
    assert main(["select", str(tmp_path / "missing.json")]) == 2
    sc = write_scenario(tmp_path / "sc.json", plant={"file": "nope.json"})
    assert main(["select", str(sc)]) == 2
    bad = write_scenario(tmp_path / "bad.json", metric={"kind": "trace", "discount": 1.0})
    assert main(["select", str(bad)]) == 2
    sc_ok = write_scenario(tmp_path / "short.json", samples=5)
    assert main(["select", str(sc_ok), "--no-plots"]) == 0  # rank deficit is a warning
    assert "warning" in capsys.readouterr().err
    mismatch = {"A": [[0.5]], "B": [[1.0]], "C": [[1.0, 2.0]]}
    (tmp_path / "mm.json").write_text(json.dumps(mismatch))
    mm = write_scenario(tmp_path / "mm_sc.json", plant={"file": "mm.json"}, seed_sensors=[1], p_prime=1)
    assert main(["select", str(mm)]) == 4


def test_data_errors_exit_three(tmp_path, monkeypatch):
    import ddsensor.cli as cli
    from ddsensor.errors import InsufficientSamplesError

    def fail(*args, **kwargs):
        raise InsufficientSamplesError("not enough columns")

    monkeypatch.setattr(cli, "run_selection", fail)
    assert main(["select", str(write_scenario(tmp_path / "sc.json"))]) == 3


def test_scenario_validation(tmp_path):
    base = {"schema_version": 1, "plant": {"generator": "random-stable", "n": 2, "m": 1, "p": 2},
            "seed_sensors": [1], "p_prime": 1, "metric": {"kind": "trace", "horizon": 0}, "N": 2}
    with pytest.raises(ConfigError):
        parse_scenario(base)
    with pytest.raises(ConfigError):
        parse_scenario({**base, "metric": {"kind": "trace", "horizon": 2}, "seed_sensors": []})
    with pytest.raises(ConfigError):
        parse_scenario({**base, "metric": {"kind": "trace", "horizon": 2}, "schema_version": 2})
    with pytest.raises(ConfigError):
        parse_scenario({**base, "metric": {"kind": "trace", "horizon": 2}, "extra": 1})
    sc = parse_scenario({**base, "metric": {"kind": "trace", "horizon": 2}})
    assert sc.metric.horizon == 2


def test_parse_horizons():
    assert parse_horizons("1-3") == [1, 2, 3]
    assert parse_horizons("1..3,7") == [1, 2, 3, 7]
    with pytest.raises(ConfigError):
        parse_horizons("0")


def test_scenario_paths_relative_to_file(tmp_path):
    (tmp_path / "sub").mkdir()
    sc = write_scenario(tmp_path / "sub" / "sc.json", output_dir="o")
    assert load_scenario(sc).base_dir == tmp_path / "sub"
    main(["oracle", str(sc)])
    assert (tmp_path / "sub" / "o" / "oracle.json").exists()
