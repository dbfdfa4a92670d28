import json

import numpy as np
import pytest

from mtt.models import in_clutter_region
from mtt.scenario import generate_scan, generate_truth, load_scenario, simulate


def test_default_scenario_values(scen):
    assert scen.duration == 90
    assert [t.appear for t in scen.targets] == [1, 5, 11, 15, 21]
    assert [t.disappear for t in scen.targets] == [70, 74, 80, 84, 90]
    np.testing.assert_array_equal(scen.targets[0].state, [505, -5, 490, -5, 0])
    m = scen.models
    assert m.sensor.p_D == 0.95 and m.sensor.clutter_rate == 10
    assert m.sensor.sigma_theta == pytest.approx(np.deg2rad(0.5))
    assert m.motion.p_S == 0.99 and m.motion.sigma_w == pytest.approx(np.deg2rad(1.0))
    assert m.birth.mass == 0.05
    np.testing.assert_array_equal(np.diag(m.birth.cov), [225, 25, 225, 25, 0.01])


def test_true_count(scen):
    counts = [scen.true_count(k) for k in range(1, 91)]
    assert counts[0] == 1 and counts[4] == 2 and counts[20] == 5 and counts[89] == 0
    assert max(counts) == 5


def test_deterministic_truth(scen):
    truth = generate_truth(scen, "deterministic")
    np.testing.assert_allclose(truth.at(2)[0], [500, -5, 485, -5, 0])
    np.testing.assert_array_equal(truth.counts(), [scen.true_count(k) for k in range(1, 91)])
    assert list(truth.ids[20]) == [1, 2, 3, 4, 5]


def test_stochastic_truth_needs_rng(scen):
    with pytest.raises(ValueError):
        generate_truth(scen, "stochastic")
    with pytest.raises(ValueError):
        generate_truth(scen, "bogus")


def test_simulate_reproducible(scen):
    a = simulate(scen, np.random.default_rng(5))
    b = simulate(scen, np.random.default_rng(5))
    for x, y in zip(a[1], b[1]):
        np.testing.assert_array_equal(x, y)
    assert len(a[1]) == 90


def test_scan_statistics(scen, rng):
    sensor = scen.models.sensor
    X = np.array([[500.0, 0, 500.0, 0, 0]] * 3)
    n = [len(generate_scan(X, sensor, rng)) for _ in range(3000)]
    assert np.mean(n) == pytest.approx(3 * 0.95 + 10, abs=0.2)


def test_scan_detection_noise(scen, rng):
    sensor = scen.with_clutter(0.0).models.sensor
    x = np.array([[300.0, 0, 400.0, 0, 0]])
    Z = np.concatenate([generate_scan(x, sensor, rng) for _ in range(5000)])
    assert abs(Z[:, 0].mean() - 500.0) < 5 / np.sqrt(len(Z))
    assert Z[:, 0].std() == pytest.approx(1.0, rel=0.05)
    assert np.all(in_clutter_region(Z, sensor))


def test_with_clutter(scen):
    s = scen.with_clutter(50)
    assert s.models.sensor.clutter_rate == 50 and scen.models.sensor.clutter_rate == 10


def test_load_custom_scenario(tmp_path):
    d = {
        "duration": 10,
        "targets": [{"state": [100, 1, 100, 1, 0], "appear": 2, "disappear": 6}],
        "sensor": {"sigma_r": 2.0, "sigma_theta_deg": 1.0, "p_D": 0.9, "lambda": 5},
        "motion": {"T": 1.0, "sigma_eps": 0.2, "sigma_w_deg": 2.0},
        "birth": {"mass": 0.1, "mean": [100, 0, 100, 0, 0], "cov_diag": [1, 1, 1, 1, 1]},
    }
    p = tmp_path / "s.json"
    p.write_text(json.dumps(d))
    s = load_scenario(p)
    assert s.duration == 10 and s.true_count(6) == 0 and s.models.motion.p_S == 0.99
    d["targets"][0]["disappear"] = 11
    p.write_text(json.dumps(d))
    with pytest.raises(ValueError):
        load_scenario(p)
