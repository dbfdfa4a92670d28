import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import chisquare

from mtt.auxiliary import (
    AuxFilterState,
    ProposalError,
    UAcphdFilter,
    UAphdFilter,
    _log_summands,
    aux_step,
    bootstrap_proposal,
    build_detected_proposal,
    compute_potentials,
    detected_weights,
    log_transition,
    natural_cluster_extract,
    predicted_linear_functionals,
    sample_detected,
    undetected_weights,
    updated_linear_functionals,
)
from mtt.cardinality import mean_cardinality, poisson_pmf, predict_cardinality
from mtt.models import ct_predict, likelihood, measure
from mtt.unscented import predict_particles, predict_source


def make_state(rng, n=30):
    x = np.array([500.0, -5.0, 490.0, -5.0, 0.0])
    states = x + rng.normal(size=(n, 5)) * [2.0, 0.5, 2.0, 0.5, 0.005]
    covs = np.tile(np.diag([4.0, 1.0, 4.0, 1.0, 1e-4]), (n, 1, 1))
    card = np.zeros(101)
    card[1] = 1.0
    return AuxFilterState(states, np.full(n, 1.0 / n), covs, card)


def setup(rng, models, n=30):
    state = make_state(rng, n)
    pred = predict_particles(state.states, state.covs, models.motion, models.sensor)
    source = predict_source(models.birth, models.sensor, models.motion)
    target = ct_predict(np.array([500.0, -5.0, 490.0, -5.0, 0.0]))
    Z = np.array([measure(target) + [0.5, 0.001], [700.0, 0.3], measure(models.birth.mean + [10, 0, -10, 0, 0])])
    V1, V2 = compute_potentials(pred, source, Z, models)
    lin = predicted_linear_functionals(V1, state.weights, models.birth.mass)
    card_pred = predict_cardinality(state.card, models.motion.p_S, poisson_pmf(models.birth.mass, 100))
    N_pred = 0.99 + models.birth.mass
    return state, pred, source, Z, V1, V2, lin, card_pred, N_pred


def test_potentials_shape_and_missed(rng, models):
    state, pred, source, Z, V1, V2, *_ = setup(rng, models)
    assert V1.shape == (31, 3)
    np.testing.assert_allclose(V2[:-1], 0.05 * 0.99)
    assert V2[-1] == pytest.approx(0.05)
    # clutter far from every particle has zero potential
    assert np.all(V1[:-1, 1] == 0.0)
    with pytest.raises(ValueError):
        compute_potentials(pred, source, Z, models, source_potential="nope")


@pytest.mark.parametrize("cardinalized", [True, False])
def test_proposal_is_normalized(rng, models, cardinalized):
    state, pred, source, Z, V1, V2, lin, card_pred, N_pred = setup(rng, models)
    prop = build_detected_proposal(lin, V1, state.weights, models.birth.mass, Z, card_pred, N_pred,
                                   models, cardinalized)
    assert prop.meas_probs.sum() == pytest.approx(1.0, abs=1e-12)
    col = prop.parent_probs.sum(axis=0)
    np.testing.assert_allclose(col[lin > 0], 1.0, atol=1e-12)
    assert prop.joint.sum() == pytest.approx(1.0, abs=1e-12)
    # the target-originated measurement dominates
    assert prop.meas_probs[0] > 0.5


def test_proposal_error_when_nothing_explains(rng, models):
    state, pred, source, Z, V1, *_ = setup(rng, models)
    lin = np.zeros(3)
    with pytest.raises(ProposalError):
        build_detected_proposal(lin, np.zeros_like(V1), state.weights, 0.05, Z, None, 1.0, models, False)


def test_bootstrap_proposal(models):
    prop = bootstrap_proposal(np.array([0.2, 0.3]), 0.05, 4, 0.99)
    np.testing.assert_allclose(prop.meas_probs, 0.25)
    np.testing.assert_allclose(prop.parent_probs.sum(axis=0), 1.0)


def test_sampling_frequencies_chi_square(rng, models):
    state, pred, source, Z, V1, V2, lin, card_pred, N_pred = setup(rng, models, n=5)
    prop = build_detected_proposal(lin, V1, state.weights, models.birth.mass, Z, card_pred, N_pred, models)
    n = 40_000
    tup = sample_detected(n, prop, state, pred, source, Z, models, rng)
    joint = prop.joint.T.ravel()
    obs = np.bincount(tup.meas * 6 + tup.parent, minlength=joint.size)
    keep = joint * n > 5
    exp = joint[keep] * n
    res = chisquare(obs[keep], exp * obs[keep].sum() / exp.sum())
    assert res.pvalue > 1e-3
    assert obs[~keep].sum() <= max(5, 3 * joint[~keep].sum() * n + 10)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 3000), st.lists(st.floats(0.0, 5.0), max_size=50), st.floats(1e-3, 1.0),
       st.floats(0.0, 1.0), st.floats(0.0, 1.0), st.floats(0.0, 10.0))
def test_undetected_weights_identical(n, w, b, p_D, p_S, ratio):
    out = undetected_weights(n, np.array(w), b, p_D, p_S, ratio)
    assert len(out) == n and len(np.unique(out.view(np.uint64))) == 1
    assert out.sum() == pytest.approx((p_S * sum(w) + b) * (1 - p_D) * ratio, rel=1e-9, abs=1e-300)


def test_group_mass_equals_factor_times_functional(rng, models):
    state, pred, source, Z, V1, V2, lin, card_pred, N_pred = setup(rng, models)
    prop = build_detected_proposal(lin, V1, state.weights, models.birth.mass, Z, card_pred, N_pred, models)
    tup = sample_detected(3000, prop, state, pred, source, Z, models, rng)
    log_s = _log_summands(tup, state, Z, models, False, pred)
    lin_upd = updated_linear_functionals(tup, log_s, lin)
    factor = np.array([0.7, 1.1, 2.0])
    w = detected_weights(tup, log_s, factor)
    for p in np.unique(tup.meas):
        assert w[tup.meas == p].sum() == pytest.approx(factor[p] * lin_upd[p], rel=1e-12)
    # an unpicked measurement keeps the predicted value
    miss = np.setdiff1d(np.arange(3), tup.meas)
    np.testing.assert_array_equal(lin_upd[miss], lin[miss])


def test_importance_sampling_recovers_linear_functional(rng, models):
    # one particle parent, predictive transition: the tuple average estimates
    # w p_S p_D E[L_z(x)] with x ~ N(x_pred, P_pred)
    state, pred, source, Z, *_ = setup(rng, models, n=1)
    z = Z[:1]
    V1, _ = compute_potentials(pred, source, z, models)
    lin = predicted_linear_functionals(V1, state.weights, 1e-300)
    prop = build_detected_proposal(lin, V1, state.weights, 1e-300, z, None, 1.0, models, False)
    tup = sample_detected(100_000, prop, state, pred, source, z, models, rng)
    assert np.all(tup.parent == 0)
    est = updated_linear_functionals(tup, _log_summands(tup, state, z, models, False, pred), lin)[0]
    xs = rng.multivariate_normal(pred.x_pred[0], pred.P_pred[0], size=400_000)
    mc = 0.99 * 0.95 * likelihood(z[0], xs, models.sensor)
    se = mc.std() / np.sqrt(len(mc))
    vals = np.exp(_log_summands(tup, state, z, models, False, pred))
    se_is = vals.std() / np.sqrt(len(vals))
    assert abs(est - mc.mean()) < 4 * np.hypot(se, se_is)


def test_importance_sampling_birth_source(rng, models):
    # source parent: the average estimates b[1] p_D E_b[L_z(x)]
    state = AuxFilterState()
    source = predict_source(models.birth, models.sensor, models.motion)
    z = measure(models.birth.mean + [8.0, 0, -5.0, 0, 0])[None]
    V1, _ = compute_potentials(None, source, z, models)
    lin = predicted_linear_functionals(V1, state.weights, models.birth.mass)
    prop = build_detected_proposal(lin, V1, state.weights, models.birth.mass, z, None, 0.05, models, False)
    tup = sample_detected(50_000, prop, state, None, source, z, models, rng)
    log_s = _log_summands(tup, state, z, models, False, None)
    est = updated_linear_functionals(tup, log_s, lin)[0]
    xs = rng.multivariate_normal(models.birth.mean, models.birth.cov, size=2_000_000)
    mc = 0.05 * 0.95 * likelihood(z[0], xs, models.sensor)
    se = mc.std() / np.sqrt(len(mc))
    vals = np.exp(log_s)
    se_is = vals.std() / np.sqrt(len(vals))
    assert abs(est - mc.mean()) < 4 * np.hypot(se, se_is)


def test_log_transition_forms(rng, models):
    state, pred, *_ = setup(rng, models, n=3)
    parent = np.array([0, 1, 3])
    children = np.vstack([ct_predict(state.states[0]), pred.x_pred[1], models.birth.mean])
    # noise-free child sits on the peak of the projected density
    lp = log_transition(children, parent, state.states, models, transition="projected")
    Q = models.motion.Q
    peak = -0.5 * (3 * np.log(2 * np.pi) + np.log(np.linalg.det(Q)))
    assert lp[0] == pytest.approx(peak, rel=1e-10)
    lq = log_transition(children, parent, state.states, models, pred, transition="predictive")
    want = -0.5 * (5 * np.log(2 * np.pi) + np.log(np.linalg.det(pred.P_pred[1])))
    assert lq[1] == pytest.approx(want, rel=1e-9)
    birth_peak = -0.5 * (5 * np.log(2 * np.pi) + np.log(np.linalg.det(models.birth.cov)))
    assert lp[2] == pytest.approx(birth_peak) and lq[2] == pytest.approx(birth_peak)
    with pytest.raises(ValueError):
        log_transition(children, parent, state.states, models, pred, transition="x")


@pytest.mark.parametrize("transition", ["predictive", "projected"])
def test_step_produces_valid_state(rng, models, transition):
    state, pred, source, Z, *_ = setup(rng, models)
    new = aux_step(state, Z, models, rng, 800, 200, transition=transition)
    assert len(new.weights) == 1000 and np.all(new.weights >= 0)
    assert abs(new.card.sum() - 1) < 1e-9 and new.card.min() >= 0
    assert len(set(new.weights[new.meas_index < 0].tolist())) == 1
    # the persisting target keeps about one unit of mass
    assert 0.5 < new.expected_count < 1.6


def test_step_without_measurements(rng, models):
    state = make_state(rng)
    new = aux_step(state, np.zeros((0, 2)), models, rng, 300, 100)
    assert len(new.weights) == 400 and np.all(new.meas_index == -1)
    # with an empty scan the missed-detection mass is exactly the posterior mean count
    assert new.expected_count == pytest.approx(mean_cardinality(new.card), rel=1e-9)


def test_uaphd_mass_is_phd_mass(rng, models):
    state, pred, source, Z, V1, V2, lin, *_ = setup(rng, models)
    new = aux_step(state, Z, models, rng, 2000, 500, cardinalized=False)
    det = new.weights[new.meas_index >= 0]
    und = new.weights[new.meas_index < 0]
    assert und.sum() == pytest.approx(0.05 * (0.99 + 0.05))
    # each group mass is lin / (lambda c + lin) <= 1
    for p in np.unique(new.meas_index[new.meas_index >= 0]):
        assert det[new.meas_index[new.meas_index >= 0] == p].sum() <= 1.0 + 1e-12


def test_natural_cluster_extract():
    states = np.array([[1.0, 0, 1, 0, 0], [3.0, 0, 3, 0, 0], [10.0, 0, 10, 0, 0], [50.0, 0, 50, 0, 0]])
    w = np.array([0.3, 0.3, 0.4, 0.9])
    est = natural_cluster_extract(states, w, np.array([0, 0, 1, -1]))
    np.testing.assert_allclose(est, [[2.0, 0, 2, 0, 0]])


@pytest.mark.parametrize("cls", [UAcphdFilter, UAphdFilter])
def test_filter_tracks_single_target(cls, scen):
    s = scen.with_clutter(5.0)
    from mtt.scenario import simulate
    truth, scans = simulate(s, np.random.default_rng(11))
    f = cls(s.models, n_detected=1000, n_undetected=200)
    state = f.initial_state()
    rng = np.random.default_rng(0)
    for k in range(4):
        state, est = f.step(state, scans[k], rng)
    # only target 1 exists during steps 1-4
    assert len(est) == 1
    assert np.linalg.norm(est[0, [0, 2]] - truth.at(4)[0, [0, 2]]) < 10.0
