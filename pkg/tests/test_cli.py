import json

import numpy as np

from satmmf.cli import main

TINY = {
    "feeds": 2,
    "gateways": 1,
    "users_per_group": 1,
    "per_feed_power_w": 20.0,
    "saa_samples": 3,
}


def test_solve_verb(tmp_path, capsys):
    scen_path = tmp_path / "scenario.json"
    scen_path.write_text(json.dumps(TINY))
    rc = main(["solve", "--scenario", str(scen_path), "--seed", "3", "--samples", "3",
               "--trace"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "realized MMF rate" in out
    assert "SAA objective" in out
    assert "iter   1" in out


def test_solve_trace_export(tmp_path, capsys):
    scen_path = tmp_path / "scenario.json"
    scen_path.write_text(json.dumps(TINY))
    trace_path = tmp_path / "trace.csv"
    rc = main(["solve", "--scenario", str(scen_path), "--seed", "3", "--samples", "3",
               "--trace-out", str(trace_path)])
    capsys.readouterr()
    assert rc == 0
    lines = trace_path.read_text().strip().splitlines()
    assert lines[0] == "iteration,objective"
    assert len(lines) >= 3


def test_solve_verb_nors_obp(tmp_path, capsys):
    scen_path = tmp_path / "scenario.json"
    scen_path.write_text(json.dumps(TINY))
    rc = main(["solve", "--scenario", str(scen_path), "--scheme", "nors", "--obp",
               "--seed", "3", "--samples", "3"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "NoRS+OBP" in out
    assert "first stage" in out


def test_sweep_verb(tmp_path, capsys):
    spec_path = tmp_path / "spec.json"
    spec_path.write_text(json.dumps({
        "scenario": TINY,
        "schemes": ["NoRS"],
        "sweep_var": "delta",
        "sweep_values": [0.0, 0.5],
        "trials": 1,
        "samples": 2,
        "seed": 4,
    }))
    out_path = tmp_path / "out.csv"
    rc = main(["sweep", str(spec_path), "--out", str(out_path)])
    assert rc == 0
    assert out_path.exists()
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 3  # header + 2 rows


def test_dump_channels_verb(tmp_path):
    scen_path = tmp_path / "scenario.json"
    scen_path.write_text(json.dumps(TINY))
    out_path = tmp_path / "chan.npz"
    rc = main(["dump-channels", "--scenario", str(scen_path), "--out", str(out_path),
               "--seed", "9", "--samples", "4"])
    assert rc == 0
    data = np.load(out_path)
    assert "h_true_l0" in data
    assert "f_hat_i0_l0" in data
    assert data["h_real_l0"].shape[0] == 4
    assert float(data["sigma_e2"]) > 0


def test_validate_verb(capsys):
    rc = main(["validate", "--seed", "0"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "PASS" in out
    assert "FAIL" not in out


def test_reproduce_verb(tmp_path):
    out_path = tmp_path / "fig4.csv"
    rc = main(["reproduce", "fig4", "--trials", "1", "--samples", "2",
               "--schemes", "NoRS", "--out", str(out_path), "--seed", "1"])
    assert rc == 0
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 4  # header + 3 delta values
