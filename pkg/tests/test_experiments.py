import copy
import json
import math

import numpy as np
import pytest

from sharplab import experiments as ex
from sharplab.domain_geometry import InvalidSpecError

LAMELLA = {
    "experiment": "stability_ac",
    "domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [41, 41]},
    "interface": {"kind": "segment", "x": 0.5},
    "eps": [0.1, 0.05],
    "spectrum": {"symmetry": "odd_across_interface"},
}

CIRCLE = {
    "experiment": "equipartition",
    "domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [65, 65]},
    "interface": {"kind": "circle", "center": [0.5, 0.5], "r": 0.25},
    "eps": [0.08, 0.04],
    "grid": {"eps_over_h": 4},
    "profile": "level_set",
}


def with_(base, **changes):
    raw = copy.deepcopy(base)
    raw.update(changes)
    return raw


@pytest.mark.parametrize("changes,field", [
    ({"eps": [-0.02]}, "eps"),
    ({"eps": [0.02, 0.04]}, "eps"),
    ({"eps": []}, "eps"),
    ({"experiment": "nope"}, "experiment"),
    ({"gamma": -1}, "gamma"),
    ({"m": 1.5}, "m"),
    ({"seed": -3}, "seed"),
    ({"profile": "wiggly"}, "profile"),
    ({"colour": "red"}, "colour"),
    ({"tolerances": {"tv_rel": -1}}, "tolerances.tv_rel"),
    ({"domain": {"shape": "rectangle", "n": [4, 4]}}, "domain.n"),
    ({"interface": {"kind": "circle", "r": 0.9}}, "circle"),
])
def test_config_errors_name_the_field(changes, field):
    with pytest.raises(InvalidSpecError, match=field):
        ex.ExperimentConfig.from_dict(with_(CIRCLE, **changes))


def test_ohta_kawasaki_experiments_need_gamma():
    raw = with_(LAMELLA, experiment="stability_ok")
    with pytest.raises(InvalidSpecError, match="gamma"):
        ex.ExperimentConfig.from_dict(raw)


def test_config_round_trip_and_hash():
    cfg = ex.ExperimentConfig.from_dict(CIRCLE)
    again = ex.ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg and again.hash == cfg.hash
    assert ex.ExperimentConfig.from_dict(with_(CIRCLE, seed=1)).hash != cfg.hash
    assert cfg.tolerances == ex.DEFAULT_TOLERANCES["equipartition"]


def test_scaled_tolerances():
    cfg = ex.ExperimentConfig.from_dict(with_(CIRCLE, experiment="reshetnyak"))
    s = cfg.scaled(2.0)
    assert s.tolerances["matrix_rel"] == pytest.approx(0.1)
    assert s.tolerances["order"] == pytest.approx(0.45)
    with pytest.raises(InvalidSpecError):
        cfg.scaled(0.0)


def test_grid_for_refines_with_eps():
    cfg = ex.ExperimentConfig.from_dict(CIRCLE)
    assert ex.grid_for(cfg, 0.08)["n"] == [65, 65]
    assert ex.grid_for(cfg, 0.01)["n"] == [401, 401]


def test_log2_orders():
    assert ex.log2_orders([4.0, 1.0, 0.25]) == [2.0, 2.0]
    assert math.isnan(ex.log2_orders([1.0, 0.0])[0])


@pytest.mark.parametrize("spec,values", [
    ({"kind": "cos", "k": 1}, lambda s: np.cos(np.pi * s)),
    ({"kind": "const", "value": 2.0}, lambda s: 2 + 0 * s),
    ({"kind": "poly", "coeffs": [1, 0, 3]}, lambda s: 1 + 3 * s * s),
])
def test_xi_function_on_segment(spec, values):
    cfg = ex.ExperimentConfig.from_dict(LAMELLA)
    dom, curve = ex._setup(cfg, 0.1)
    assert np.allclose(ex.xi_function(curve, spec)(curve.s), values(curve.s))
    with pytest.raises(InvalidSpecError):
        ex.xi_function(curve, {"kind": "square"})


def test_equipartition_sweep_report(tmp_path):
    cfg = ex.ExperimentConfig.from_dict(CIRCLE)
    rep = ex.run(cfg)
    assert [r["eps"] for r in rep.rows] == [0.08, 0.04]
    assert rep.verdicts["discrepancy_decreasing"]
    text = rep.to_csv(tmp_path / "r.csv")
    header = text.splitlines()[0].split(",")
    assert header[:4] == ["eps", "n", "h", "energy"]
    assert "0.080000000000000002" in text
    doc = json.loads(rep.to_json(tmp_path / "r.json"))
    assert doc["schema"] == ex.SCHEMA and doc["config_hash"] == cfg.hash
    orders, verdicts = ex.judge(ex.ExperimentConfig.from_dict(doc["config"]), doc["rows"])
    assert verdicts == rep.verdicts


def test_sweep_is_deterministic():
    cfg = ex.ExperimentConfig.from_dict(with_(CIRCLE, eps=[0.08]))
    assert ex.run(cfg).to_csv() == ex.run(cfg).to_csv()


def test_error_rows_fail_the_verdicts():
    cfg = ex.ExperimentConfig.from_dict(CIRCLE)
    rows = [{"eps": 0.08, "error": "ConvergenceError: boom"}]
    _, verdicts = ex.judge(cfg, rows)
    assert verdicts["no_errors"] is False and not all(verdicts.values())


def test_stability_of_lamella():
    rep = ex.run(ex.ExperimentConfig.from_dict(LAMELLA))
    assert rep.passed
    # default probes cos(kπs): the Dirichlet term (kπ)²/2 is all that remains on a flat strip
    assert min(r["sharp_second"] for r in rep.rows) == pytest.approx(np.pi**2 / 2, rel=1e-6)


def test_unstable_family_is_a_config_error():
    raw = {
        "experiment": "stability_ac",
        "domain": {"shape": "disk", "R": 1.0, "n": [41, 128]},
        "interface": {"kind": "diameter"},
        "eps": [0.1],
        "spectrum": {"symmetry": "odd_across_interface"},
    }
    with pytest.raises(ex.ExperimentConfigError, match="unstable"):
        ex.run(ex.ExperimentConfig.from_dict(raw))


def test_criticality_of_segment():
    raw = {
        "experiment": "criticality",
        "domain": {"shape": "rectangle", "L": [1.0, 1.0], "n": [41, 41]},
        "interface": {"kind": "segment", "x": 0.5},
        "eps": [0.1, 0.05],
        "grid": {"eps_over_h": 4},
    }
    rep = ex.run(ex.ExperimentConfig.from_dict(raw))
    assert rep.passed, rep.verdicts
    assert all(r["multiplier"] is None for r in rep.rows)


def test_identity_probes_small():
    reports = []
    rep = ex.run_identity_probes(n=32, probes=3, seed=7, reports=reports)
    assert rep.passed and len(rep.rows) == 6 and len(reports) == 6
    again = ex.run_identity_probes(n=32, probes=3, seed=7)
    assert [r["second_inner"] for r in again.rows] == [r["second_inner"] for r in rep.rows]


def test_random_probe_rejects_disk():
    from sharplab.domain_geometry import build_domain

    with pytest.raises(InvalidSpecError):
        ex.random_probe(build_domain({"shape": "disk", "n": [17, 32]}), np.random.default_rng(0))
