import csv
import json
import math
from pathlib import Path

import numpy as np
import pytest

from ostop.cli import run
from ostop.config import decode_float, encode_float, parse_config

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


def brownian(alpha, reward):
    return {"schema": "ostop/1", "diffusion": {"family": "brownian", "alpha": alpha}, "reward": reward}


def test_infinity_encoding_round_trip():
    for x in (-math.inf, math.inf, 1.5):
        assert decode_float(encode_float(x)) == x


def test_solve_quintic(tmp_path):
    out = tmp_path / "sol.json"
    assert run(["solve", "--config", str(CONFIGS / "quintic_alpha2.json"), "--out", str(out), "--quiet"]) == 0
    doc = json.loads(out.read_text())
    assert doc["status"] == "ok" and doc["solver"]["merges_performed"] == 0
    ends = [(c["lo"], c["hi"]) for c in doc["continuation"]]
    assert len(ends) == 3 and ends[2][1] == "inf"
    for (lo, hi), (plo, phi) in zip(ends, [(-3.23, -0.50), (-0.36, 1.43), (1.78, None)]):
        assert abs(lo - plo) < 0.02 and (phi is None or abs(hi - phi) < 0.02)
    assert doc["verification"]["smooth_fit_max"] < 1e-3


def test_stop_everywhere(tmp_path, capsys):
    cfg = write(tmp_path, brownian(100.0, {"kind": "polynomial", "coefficients": [1, 0, 1]}))
    assert run(["solve", "--config", str(cfg)]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["stop_everywhere"] and doc["continuation"] == [] and "note" in doc


def test_kinked_reward_coefficient(tmp_path):
    out = tmp_path / "sol.json"
    assert run(["solve", "--config", str(CONFIGS / "nondiff_alpha1.json"), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert doc["continuation"][0]["lo"] == "-inf"
    assert doc["continuation"][0]["k2"] == pytest.approx(0.26, abs=0.005)


def test_represented_config_agrees_with_piecewise(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    run(["solve", "--config", str(CONFIGS / "nondiff_alpha1.json"), "--out", str(a)])
    run(["solve", "--config", str(CONFIGS / "represented_alpha1.json"), "--out", str(b)])
    ca = json.loads(a.read_text())["continuation"]
    cb = json.loads(b.read_text())["continuation"]
    for x, y in zip(ca, cb):
        for key in ("lo", "hi"):
            if isinstance(x[key], str):
                assert x[key] == y[key]
            else:
                assert x[key] == pytest.approx(y[key], abs=1e-9)


def test_verify_round_trip(tmp_path):
    sol, ver = tmp_path / "sol.json", tmp_path / "ver.json"
    cfg = str(CONFIGS / "quintic_alpha1_5.json")
    assert run(["solve", "--config", cfg, "--out", str(sol)]) == 0
    assert run(["verify", "--config", cfg, "--solution", str(sol), "--out", str(ver)]) == 0
    a = json.loads(sol.read_text())["continuation"]
    b = json.loads(ver.read_text())
    assert b["endpoints_identical"]
    assert [(c["lo"], c["hi"]) for c in a] == [(c["lo"], c["hi"]) for c in b["continuation"]]


def test_sample_csv(tmp_path):
    path = tmp_path / "v.csv"
    assert run(["sample", "--config", str(CONFIGS / "quintic_alpha2.json"), "--samples", str(path),
                "--window", "-4", "4", "--out", str(tmp_path / "s.json")]) == 0
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["x", "g", "V", "region"]
    x = np.array([float(r[0]) for r in rows[1:]])
    v = np.array([float(r[2]) for r in rows[1:]])
    assert x[0] == -4 and x[-1] == 4
    assert {r[3] for r in rows[1:]} == {"stop", "cont-1", "cont-2", "cont-3"}
    for r in rows[1:]:
        assert all(f == f"{float(f):.17g}" for f in r[:3])
    # continuity: adjacent jumps bounded by spacing times a local slope bound
    dx = np.diff(x)
    slope = np.abs(np.gradient(v, x))
    bound = np.maximum(slope[:-1], slope[1:]) + 1.0
    assert np.all(np.abs(np.diff(v)) < 10 * dx * bound)


def test_oracle_command(tmp_path):
    cfg = json.loads((CONFIGS / "quintic_alpha2.json").read_text())
    cfg["oracle"] = {"templates": [2], "step": 0.1, "window": [-5, 5], "eval_points": [-1, 0, 2],
                     "monte_carlo": {"points": [0], "n_paths": 2000, "dt": 0.01, "seed": 1}}
    out = tmp_path / "o.json"
    assert run(["oracle", "--config", str(write(tmp_path, cfg)), "--out", str(out), "--seed", "9"]) == 0
    doc = json.loads(out.read_text())
    assert doc["brute_force"]["max_excess"] <= 1e-4
    assert doc["monte_carlo"]["seed"] == 9 and len(doc["monte_carlo"]["points"]) == 1


@pytest.mark.parametrize("doc, code", [
    ({"schema": "ostop/0"}, 4),
    (brownian(1.0, {"kind": "polynomial", "coefficients": [1, "x"]}), 4),
    (brownian(1.0, {"kind": "piecewise_linear", "knots": [[1, 0], [0, 1]]}), 4),
    (brownian(-1.0, {"kind": "polynomial", "coefficients": [1]}), 4),
    ({**brownian(1.0, {"kind": "polynomial", "coefficients": [1]}), "extra": 1}, 4),
    (brownian(1.0, {"kind": "polynomial", "coefficients": [-1]}), 2),
    ({**brownian(2.0, {"kind": "polynomial", "coefficients": [0, -4, 0, 5, 0, -1]}),
      "solver": {"max_enlarge_iters": 1, "enlarge_tol": 1e-15}}, 3),
])
def test_exit_codes(tmp_path, doc, code):
    out = tmp_path / "err.json"
    assert run(["solve", "--config", str(write(tmp_path, doc)), "--out", str(out), "--quiet"]) == code
    err = json.loads(out.read_text())
    assert err["status"] == "error" and err["error"]["exit_code"] == code


def test_missing_file(tmp_path):
    assert run(["solve", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path / "e.json")]) == 4


def test_custom_diffusion_handle():
    cfg = parse_config({
        "schema": "ostop/1",
        "diffusion": {"family": "custom", "handles": "geometric_brownian", "alpha": 0.05,
                      "params": {"drift": 0.05, "volatility": 0.3}},
        "reward": {"kind": "piecewise_linear", "knots": [[0.5, 0.5], [1, 0], [2, 0]]},
        "solver": {"work_window": [0.001, 10]},
    })
    assert cfg.model.family == "geometric_brownian"
    assert cfg.solver.work_window.lo == 0.001


def test_custom_handle_by_module_path():
    cfg = parse_config({
        "schema": "ostop/1",
        "diffusion": {"family": "custom", "handles": "ostop.diffusion:make_brownian", "alpha": 1.0},
        "reward": {"kind": "polynomial", "coefficients": [1]},
    })
    assert cfg.model.family == "brownian"
