import numpy as np
import pytest

import twinfringe as tf

SMALL = {
    "source": {"grid": {"points": 64, "span": "30 nm"}},
    "scan": {"lo": "-0.3 mm", "hi": "0.3 mm", "step": "10 um"},
}


def test_scenarios_listed():
    names = tf.scenario_names()
    assert "noon" in names and "pmi_nondegenerate" in names
    assert tf.scenario_description("hom_dip")


def test_default_config_round_trip():
    cfg = tf.default_config("mzi_tssa_tssb")
    assert cfg["scenario"] == "mzi_tssa_tssb"
    assert cfg["scan"]["delta_x1"] == pytest.approx(2e-3)


def test_hom_dip_reaches_zero():
    r = tf.run_scenario("hom_dip", dict(SMALL, simulate_counts=False))
    p = r["probability"]
    assert r["counts"] is None
    assert p.shape == r["delta_x2"].shape
    assert p[len(p) // 2] == pytest.approx(0.0, abs=1e-9)
    assert r["two_photon_coherence_length"] == pytest.approx(1.17e-3, rel=0.01)


def test_seeded_runs_are_identical():
    a = tf.run_scenario("hom_dip", SMALL, threads=1)
    b = tf.run_scenario("hom_dip", SMALL, threads=2)
    assert a["csv"] == b["csv"]
    assert np.array_equal(a["counts"], b["counts"])


def test_evaluator_limits():
    r = tf.run_scenario("noon", dict(SMALL, simulate_counts=False))
    ev = tf.Evaluator(r["config"])
    assert ev.noon(0.0) == pytest.approx(1.0)
    assert ev.full(0.0, 0.0) == pytest.approx(1.0)
    assert ev.carrier_wavelength == pytest.approx(775e-9)


def test_fit_recovers_sinusoid():
    x = np.linspace(0.0, 10e-6, 400)
    y = 100.0 + 40.0 * np.cos(2 * np.pi * x / 1.55e-6 + 0.3)
    res = tf.fit("sinusoid", x, y)
    assert res["params"]["visibility"] == pytest.approx(0.4, rel=1e-6)
    assert res["params"]["period"] == pytest.approx(1.55e-6, rel=1e-6)


def test_car_model():
    c = tf.expected_counts(0.5)
    assert c["car"] == pytest.approx(1.0 + 0.5 / 0.24)


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        tf.default_config("nope")
    with pytest.raises(ValueError):
        tf.run_scenario("noon", {"source": {"pump": {"colour": 1}}})
