import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mtt.cardinality import mean_cardinality, poisson_pmf
from mtt.models import filter_clutter_density, likelihood, measure
from mtt.smc import (
    SmcCphdFilter,
    SmcPhdFilter,
    WeightedParticleSet,
    extract_count,
    kmeans_extract,
    resample,
    smc_cphd_update,
    smc_phd_update,
    smc_predict,
)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.0, 10.0), min_size=1, max_size=30), st.integers(1, 200), st.integers(0, 10**6))
def test_systematic_resampling_counts(w, n, seed):
    w = np.array(w)
    if w.sum() <= 0:
        with pytest.raises(ValueError):
            resample(w, n, np.random.default_rng(seed))
        return
    idx = resample(w, n, np.random.default_rng(seed))
    counts = np.bincount(idx, minlength=len(w))
    expect = n * w / w.sum()
    # systematic resampling copies each particle floor or ceil of n w_i times
    assert np.all(counts >= np.floor(expect - 1e-9)) and np.all(counts <= np.ceil(expect + 1e-9))
    assert np.all(counts[w == 0] == 0)


def random_set(rng, n=40):
    states = np.column_stack([rng.uniform(400, 600, n), rng.normal(0, 2, n), rng.uniform(400, 600, n),
                              rng.normal(0, 2, n), rng.normal(0, 0.01, n)])
    return WeightedParticleSet(states, rng.uniform(0.01, 0.1, n))


def scan_near(pset, rng, models, k=3, clutter=2):
    Z = measure(pset.states[:k]) + rng.normal(size=(k, 2)) * [1.0, 0.005]
    C = np.column_stack([rng.uniform(0, 1000, clutter), rng.uniform(0, np.pi / 2, clutter)])
    return np.concatenate([Z, C])


def test_phd_update_matches_direct_formula(rng, models):
    pset = random_set(rng)
    Z = scan_near(pset, rng, models)
    got = smc_phd_update(pset, Z, models).weights
    s = models.sensor
    want = np.empty(len(pset))
    for i, (x, w) in enumerate(zip(pset.states, pset.weights)):
        tot = s.q_D
        for z in Z:
            den = s.clutter_rate * filter_clutter_density(z, s)[0] + sum(
                s.p_D * likelihood(z, xj, s) * wj for xj, wj in zip(pset.states, pset.weights))
            tot += s.p_D * likelihood(z, x, s) / den
        want[i] = tot * w
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_phd_update_without_measurements(rng, models):
    pset = random_set(rng)
    out = smc_phd_update(pset, np.zeros((0, 2)), models)
    np.testing.assert_allclose(out.weights, 0.05 * pset.weights)


def test_cphd_with_poisson_prior_equals_phd(rng, models):
    # Poisson predicted cardinality and Poisson clutter: the CPHD corrector
    # reduces to the PHD corrector
    pset = random_set(rng)
    Z = scan_near(pset, rng, models, k=4, clutter=3)
    card = poisson_pmf(pset.expected_count, 100)
    card /= card.sum()
    cphd, post = smc_cphd_update(pset, card, Z, models)
    phd = smc_phd_update(pset, Z, models)
    np.testing.assert_allclose(cphd.weights, phd.weights, rtol=1e-9)
    assert abs(post.sum() - 1) < 1e-12


def test_cphd_weight_mass_equals_cardinality_mean(rng, models):
    pset = random_set(rng)
    Z = scan_near(pset, rng, models, k=5, clutter=6)
    card = np.zeros(101)
    card[1:6] = [0.1, 0.2, 0.3, 0.3, 0.1]
    out, post = smc_cphd_update(pset, card, Z, models)
    assert out.expected_count == pytest.approx(mean_cardinality(post), rel=1e-9)


def test_predict_mass_and_budget(rng, models):
    pset = random_set(rng)
    pred = smc_predict(pset, 100, 300, models, rng)
    assert len(pred) == 400
    assert pred.expected_count == pytest.approx(0.99 * pset.expected_count + 0.05)
    empty = smc_predict(WeightedParticleSet(), 50, 300, models, rng)
    assert len(empty) == 50 and empty.expected_count == pytest.approx(0.05)
    with pytest.raises(ValueError):
        smc_predict(pset, 0, 10, models, rng)


def test_kmeans_finds_separated_clusters(rng):
    centers = np.array([[100.0, 100.0], [300.0, 120.0], [200.0, 400.0]])
    pts = np.concatenate([c + rng.normal(size=(200, 2)) for c in centers])
    states = np.column_stack([pts[:, 0], np.zeros(600), pts[:, 1], np.zeros(600), np.zeros(600)])
    pset = WeightedParticleSet(states, np.full(600, 3 / 600))
    assert extract_count(pset) == 3
    est = kmeans_extract(pset, 3, 5, rng)
    found = est[np.argsort(est[:, 0])][:, [0, 2]]
    np.testing.assert_allclose(found, centers[np.argsort(centers[:, 0])], atol=0.5)


def test_kmeans_edge_cases(rng):
    assert kmeans_extract(WeightedParticleSet(), 2, rng=rng).shape == (0, 5)
    pset = WeightedParticleSet(np.ones((2, 5)), np.array([0.5, 0.5]))
    assert kmeans_extract(pset, 0, rng=rng).shape == (0, 5)
    assert kmeans_extract(pset, 5, rng=rng).shape[0] <= 2


@pytest.mark.parametrize("cls", [SmcPhdFilter, SmcCphdFilter])
def test_filter_steps_stay_finite(cls, scen, rng):
    from mtt.scenario import simulate
    s = scen.with_clutter(5.0)
    truth, scans = simulate(s, np.random.default_rng(3), "deterministic")
    f = cls(s.models, n_survive=1000, n_birth=500)
    state = f.initial_state()
    for k in range(8):
        state, est = f.step(state, scans[k], rng)
        if cls is SmcCphdFilter:
            assert abs(state.card.sum() - 1) < 1e-9 and state.card.min() >= 0
    assert np.isfinite(state.particles.weights).all()
    assert est.shape[1] == 5
