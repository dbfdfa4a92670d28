"""Unscented auxiliary-particle CPHD (U-ACPHD) and PHD (U-APHD) filters.

One step draws ``n_detected`` three-tuples (child, parent, measurement index)
and ``n_undetected`` two-tuples (child, parent).  Parents range over the
current particles plus the birth source point ``S``, which always sits at
index ``N`` (one past the last particle) in the extended arrays below.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .cardinality import (
    N_MAX,
    UpsilonInputs,
    delta,
    poisson_pmf,
    predict_cardinality,
    update_cardinality,
    upsilon_set,
)
from .models import (
    LOG_2PI,
    TrackingModels,
    filter_clutter_density,
    ct_predict,
    log_birth_density,
    log_likelihood,
    sample_birth,
    sample_transition,
    transition_noise,
    wrap_angle,
)
from .unscented import (
    UtParams,
    UtPrediction,
    gaussian_potential,
    potential_matrix,
    predict_particles,
    predict_source,
    ut_gain,
)

log = logging.getLogger(__name__)

N_DETECTED = 2500
N_UNDETECTED = 500
EXTRACT_THRESHOLD = 0.5
# proposal densities below this zero the tuple's weight
DENSITY_FLOOR = 1e-300
JITTER = 1e-9

# How f^a(child | particle) is scored in the importance weights:
#   "predictive": the parent's UT-predicted Gaussian N(x_pred, P_pred), which
#                 is the density its own covariance implies;
#   "projected":  the rank-3 process-noise density of the parent point,
#                 evaluated in noise coordinates.
TRANSITIONS = ("predictive", "projected")
# How V1 of the birth source is estimated:
#   "gaussian": UT predictive likelihood N(z; y_pred, P_yy);
#   "sigma":    likelihood averaged over the predicted sigma states.
SOURCE_POTENTIALS = ("gaussian", "sigma")


class ProposalError(RuntimeError):
    """No measurement can be explained by any particle."""


@dataclass
class AuxFilterState:
    states: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))
    covs: np.ndarray = field(default_factory=lambda: np.zeros((0, 5, 5)))
    card: np.ndarray = field(default_factory=lambda: delta(0, N_MAX))
    birth_pick_count: int = 0
    # measurement index each particle was drawn for, -1 for undetected
    meas_index: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    diverged: bool = False

    @property
    def expected_count(self) -> float:
        return float(np.sum(self.weights))


@dataclass
class DetectedTuples:
    children: np.ndarray  # (n, 5)
    covs: np.ndarray  # (n, 5, 5)
    parent: np.ndarray  # index into particles, N means S
    meas: np.ndarray  # 0-based measurement index
    log_q_child: np.ndarray  # log q(child | parent, p)
    log_q_parent: np.ndarray  # log q(parent | p)
    log_q_meas: np.ndarray  # log q(p)


@dataclass
class DetectedProposal:
    meas_probs: np.ndarray  # q(p), shape (m,)
    parent_probs: np.ndarray  # q(parent | p), shape (N+1, m)

    @property
    def joint(self) -> np.ndarray:
        return self.parent_probs * self.meas_probs[None, :]


# -- potentials and linear functionals ---------------------------------------


def compute_potentials(pred: UtPrediction | None, source: UtPrediction, Z, models: TrackingModels,
                       source_potential: str = "gaussian"):
    """Detection potentials V1 (N+1, m) and missed-detection potentials V2 (N+1,).

    Particle rows average the likelihood over predicted sigma states.  The
    source row does the same with ``source_potential="sigma"``; the default
    uses the UT predictive likelihood instead, because the birth spread
    (tens of metres) dwarfs the range noise and a 25-point average of the
    likelihood then underflows for almost every newborn target.
    """
    if source_potential not in SOURCE_POTENTIALS:
        raise ValueError(f"unknown source potential {source_potential!r}")
    sensor, p_S = models.sensor, models.motion.p_S
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    rows = []
    if pred is not None:
        rows.append(potential_matrix(pred, Z, sensor, p_S))
    src = gaussian_potential if source_potential == "gaussian" else potential_matrix
    rows.append(src(source, Z, sensor, 1.0)[None, :])
    V1 = np.concatenate(rows, axis=0)
    n = V1.shape[0] - 1
    V2 = np.full(n + 1, sensor.q_D * p_S)
    V2[n] = sensor.q_D
    return V1, V2


def predicted_linear_functionals(V1, weights, b_mass: float) -> np.ndarray:
    """sum_i V1[i, p] w_i + V1[S, p] b[1] for every measurement p."""
    Da = np.append(np.asarray(weights, dtype=float), b_mass)
    return Da @ V1


def _detect_factor(lin, Z, card_pred, N_pred, models, cardinalized):
    """Per-measurement factor multiplying p_D L_z in the corrector.

    CPHD: Upsilon^1(Z - z_p) / (c(z_p) Upsilon^0(Z)); PHD: 1 / (lambda c(z_p) + D[p_D L_z_p]).
    Also returns the missed-detection factor (Upsilon^1/Upsilon^0 or 1) and the Upsilon inputs.
    """
    sensor = models.sensor
    c = filter_clutter_density(Z, sensor)
    if not cardinalized:
        denom = sensor.clutter_rate * c + lin
        factor = np.divide(1.0, denom, out=np.zeros_like(denom), where=denom > 0)
        return factor, 1.0, None
    inputs = UpsilonInputs.poisson(lin / c, N_pred, sensor.q_D, sensor.clutter_rate, card_pred)
    ups = upsilon_set(inputs)
    return ups.detect_ratios / c, ups.missed_ratio, inputs


def build_detected_proposal(lin_pred, V1, weights, b_mass, Z, card_pred, N_pred,
                            models: TrackingModels, cardinalized: bool = True) -> DetectedProposal:
    """Auxiliary proposal over (measurement, parent) pairs.

    q(p) is proportional to the predicted corrector factor times the predicted
    linear functional; q(parent | p) to D^a(parent) V1[parent, p].
    """
    factor, _, _ = _detect_factor(lin_pred, Z, card_pred, N_pred, models, cardinalized)
    a = factor * lin_pred
    total = a.sum()
    if not total > 0 or not np.isfinite(total):
        raise ProposalError("no measurement is explainable by the particle set")
    Da = np.append(np.asarray(weights, dtype=float), b_mass)
    num = Da[:, None] * V1
    parent = np.divide(num, lin_pred[None, :], out=np.zeros_like(num), where=lin_pred[None, :] > 0)
    return DetectedProposal(a / total, parent)


def bootstrap_proposal(weights, b_mass, m: int, p_S: float) -> DetectedProposal:
    """Measurement uniform, parent proportional to its predicted mass."""
    mass = np.append(p_S * np.asarray(weights, dtype=float), b_mass)
    parent = np.repeat((mass / mass.sum())[:, None], m, axis=1)
    return DetectedProposal(np.full(m, 1.0 / m), parent)


# -- Gaussian helpers -----------------------------------------------------------


def _safe_cholesky(cov):
    cov = 0.5 * (cov + np.swapaxes(cov, -1, -2))
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        vals = np.linalg.eigvalsh(cov)
        shift = np.maximum(0.0, -vals.min(axis=-1)) + JITTER
        eye = np.eye(cov.shape[-1])
        return np.linalg.cholesky(cov + shift[..., None, None] * eye)


def _batched_logpdf(d, chol):
    """log N(d; 0, L L') for rows d (n, k) and Cholesky factors (n, k, k)."""
    k = d.shape[-1]
    sol = np.linalg.solve(chol, d[..., None])[..., 0]
    logdet = np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    return -0.5 * (k * LOG_2PI + np.sum(sol**2, axis=-1)) - logdet


def _take(pred: UtPrediction, idx) -> UtPrediction:
    return UtPrediction(pred.sigma_states[idx], pred.x_pred[idx], pred.P_pred[idx], pred.sigma_meas[idx],
                        pred.y_pred[idx], pred.wm, pred.wc, pred.is_birth, pred.wrap_bearing)


def log_transition(children, parent, states, models: TrackingModels, pred: UtPrediction | None = None,
                   transition: str = "predictive"):
    """log f^a(child | parent); the birth density b(x)/b[1] for S.

    ``pred`` (the particles' UT prediction) is needed for the predictive form.
    """
    if transition not in TRANSITIONS:
        raise ValueError(f"unknown transition form {transition!r}")
    n_part = len(states)
    out = np.empty(len(children))
    is_s = parent == n_part
    if np.any(~is_s):
        idx = parent[~is_s]
        if transition == "predictive":
            out[~is_s] = _batched_logpdf(children[~is_s] - pred.x_pred[idx], _safe_cholesky(pred.P_pred[idx]))
        else:
            eps, _ = transition_noise(children[~is_s], states[idx], models.motion)
            Q = models.motion.Q
            out[~is_s] = _batched_logpdf(eps, np.broadcast_to(np.linalg.cholesky(Q), eps.shape[:1] + Q.shape))
    if np.any(is_s):
        out[is_s] = log_birth_density(children[is_s], models.birth)
    return out


# -- sampling ---------------------------------------------------------------------


def sample_detected(n: int, proposal: DetectedProposal, state: AuxFilterState, pred, source: UtPrediction,
                    Z, models: TrackingModels, rng: np.random.Generator, bootstrap: bool = False,
                    transition: str = "predictive") -> DetectedTuples:
    """Draw (measurement, parent) pairs, then children from the UT posterior.

    The recorded child density lives in the same coordinates as the matching
    ``log_transition`` form: 5-d state space, or for ``"projected"`` particle
    parents the 3-d noise coordinates.
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    n_part = len(state.weights)
    joint = proposal.joint.T.ravel()  # index = p * (N+1) + parent
    joint = joint / joint.sum()
    flat = rng.choice(len(joint), size=n, p=joint)
    meas, parent = np.divmod(flat, n_part + 1)

    children = np.empty((n, 5))
    covs = np.empty((n, 5, 5))
    log_q_child = np.empty(n)
    G = models.motion.G
    G_pinv = np.linalg.solve(G.T @ G, G.T)

    is_s = parent == n_part
    groups = [(~is_s, pred, parent)] if pred is not None else []
    groups.append((is_s, source, np.zeros(n, dtype=int)))
    for mask, upred, rows in groups:
        if not np.any(mask):
            continue
        uniq, inv = np.unique(rows[mask], return_inverse=True)
        sub = _take(upred, uniq) if upred is not source else upred
        K, P_post, _ = ut_gain(sub)
        if upred is source:
            K, P_post = np.broadcast_to(K, (1,) + K.shape), np.broadcast_to(P_post, (1,) + P_post.shape)
            x_pred, y_pred = sub.x_pred[None, :], sub.y_pred[None, :]
        else:
            x_pred, y_pred = sub.x_pred, sub.y_pred
        nu = Z[meas[mask]] - y_pred[inv]
        nu[:, 1] = wrap_angle(nu[:, 1])
        x_post = x_pred[inv] + np.einsum("nab,nb->na", K[inv], nu)
        chol = _safe_cholesky(P_post)
        P_reg = chol @ np.swapaxes(chol, -1, -2)
        covs[mask] = P_reg[inv]
        k = int(mask.sum())
        if bootstrap:
            if upred is source:
                children[mask] = sample_birth(models.birth, rng, size=k)
            else:
                children[mask] = sample_transition(state.states[parent[mask]], models.motion, rng)
            log_q_child[mask] = np.nan  # cancels against f^a, filled below
            continue
        draws = x_post + np.einsum("nab,nb->na", chol[inv], rng.standard_normal((k, 5)))
        children[mask] = draws
        if upred is source or transition == "predictive":
            log_q_child[mask] = _batched_logpdf(draws - x_post, chol[inv])
        else:
            # push N(x_post, P_post) through the least-squares noise map
            base = state.states[parent[mask]]
            fx = ct_predict(base, models.motion.dt)
            eps = (draws - fx) @ G_pinv.T
            eps_mean = (x_post - fx) @ G_pinv.T
            cov_eps = G_pinv @ P_reg @ G_pinv.T
            log_q_child[mask] = _batched_logpdf(eps - eps_mean, _safe_cholesky(cov_eps)[inv])

    with np.errstate(divide="ignore"):
        log_q_parent = np.log(proposal.parent_probs[parent, meas])
        log_q_meas = np.log(proposal.meas_probs[meas])
    return DetectedTuples(children, covs, parent, meas, log_q_child, log_q_parent, log_q_meas)


def sample_undetected(n: int, state: AuxFilterState, pred, source: UtPrediction,
                      models: TrackingModels, rng: np.random.Generator):
    """Parents from q2 (proportional to p_S w_i, or b[1] for S); children from f^a."""
    n_part = len(state.weights)
    mass = np.append(models.motion.p_S * state.weights, models.birth.mass)
    parent = rng.choice(n_part + 1, size=n, p=mass / mass.sum())
    children = np.empty((n, 5))
    covs = np.empty((n, 5, 5))
    is_s = parent == n_part
    if np.any(~is_s):
        children[~is_s] = sample_transition(state.states[parent[~is_s]], models.motion, rng)
        covs[~is_s] = pred.P_pred[parent[~is_s]]
    k = int(is_s.sum())
    if k:
        children[is_s] = sample_birth(models.birth, rng, size=k)
        covs[is_s] = source.P_pred
    covs = 0.5 * (covs + np.swapaxes(covs, -1, -2))
    return children, covs, parent


# -- weights -----------------------------------------------------------------------


def _log_summands(tuples: DetectedTuples, state: AuxFilterState, Z, models: TrackingModels, bootstrap: bool,
                  pred: UtPrediction | None = None, transition: str = "predictive"):
    """log of p_D L_z(child) p_S^a f^a D^a / (q(parent|p) q(child|parent,p)) per tuple."""
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    n_part = len(state.weights)
    is_s = tuples.parent == n_part
    Da = np.append(state.weights, models.birth.mass)
    with np.errstate(divide="ignore"):
        log_pd = np.log(models.sensor.p_D)
        log_ps = np.where(is_s, 0.0, np.log(models.motion.p_S))
        log_da = np.log(Da[tuples.parent])
    log_l = log_likelihood(Z[tuples.meas], tuples.children, models.sensor)
    if bootstrap:
        log_ratio = np.zeros(len(tuples.parent))
    else:
        log_f = log_transition(tuples.children, tuples.parent, state.states, models, pred, transition)
        log_q = tuples.log_q_child
        log_ratio = np.where(np.exp(log_q) < DENSITY_FLOOR, -np.inf, log_f - log_q)
        if np.any(np.exp(log_q) < DENSITY_FLOOR):
            log.warning("proposal density underflow in %d tuples", int(np.sum(np.exp(log_q) < DENSITY_FLOOR)))
    return log_pd + log_l + log_ps + log_da + log_ratio - tuples.log_q_parent


def updated_linear_functionals(tuples: DetectedTuples, log_summand, lin_pred) -> np.ndarray:
    """Sample-based D[p_D L_z_p] from the tuples that picked measurement p.

    With q(parent|p) = D^a V1 / D_pred this is exactly the potential-weighted
    form: D_pred / |X_p| * sum over X_p of p_D L p_S f / (q(child) V1(parent)).
    Measurements nobody picked keep their predicted value.
    """
    m = len(lin_pred)
    vals = np.exp(log_summand)
    sums = np.bincount(tuples.meas, weights=vals, minlength=m)
    counts = np.bincount(tuples.meas, minlength=m)
    return np.where(counts > 0, sums / np.maximum(counts, 1), lin_pred)


def detected_weights(tuples: DetectedTuples, log_summand, detect_factor) -> np.ndarray:
    """Importance weights of detected tuples.

    Each tuple's summand is scaled by the corrector factor of its measurement
    and averaged within its measurement group, so a group's total mass equals
    factor_p * (updated linear functional)_p.
    """
    counts = np.bincount(tuples.meas, minlength=len(detect_factor))
    w = np.exp(log_summand) * detect_factor[tuples.meas] / counts[tuples.meas]
    w = np.where(np.isfinite(w), w, 0.0)
    return w


def undetected_weights(n: int, weights, b_mass: float, p_D: float, p_S: float, missed_ratio: float) -> np.ndarray:
    """Uniform missed-detection weights (identical floats)."""
    value = float((p_S * float(np.sum(weights)) + b_mass) / n * (1.0 - p_D) * missed_ratio)
    return np.full(n, value)


def natural_cluster_extract(states, weights, meas_index, threshold: float = EXTRACT_THRESHOLD) -> np.ndarray:
    """One estimate per measurement group whose total weight exceeds ``threshold``."""
    states = np.asarray(states, dtype=float)
    weights = np.asarray(weights, dtype=float)
    meas_index = np.asarray(meas_index)
    est = []
    for p in np.unique(meas_index[meas_index >= 0]):
        sel = meas_index == p
        total = weights[sel].sum()
        if total > threshold:
            est.append(weights[sel] @ states[sel] / total)
    return np.array(est).reshape(-1, 5)


# -- the filter step ------------------------------------------------------------


def aux_step(state: AuxFilterState, Z, models: TrackingModels, rng: np.random.Generator,
             n_detected: int = N_DETECTED, n_undetected: int = N_UNDETECTED, cardinalized: bool = True,
             bootstrap: bool = False, params: UtParams | None = None, transition: str = "predictive",
             source_potential: str = "gaussian") -> AuxFilterState:
    motion, sensor, birth = models.motion, models.sensor, models.birth
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    m = len(Z)
    n_part = len(state.weights)
    b_mass = birth.mass

    card_pred = None
    if cardinalized:
        card_pred = predict_cardinality(state.card, motion.p_S, poisson_pmf(b_mass, len(state.card) - 1))
    N_pred = motion.p_S * float(np.sum(state.weights)) + b_mass

    pred = predict_particles(state.states, state.covs, motion, sensor, params) if n_part else None
    source = predict_source(birth, sensor, motion, params)

    tuples = None
    if m:
        V1, _ = compute_potentials(pred, source, Z, models, source_potential)
        lin_pred = predicted_linear_functionals(V1, state.weights, b_mass)
        try:
            if bootstrap:
                proposal = bootstrap_proposal(state.weights, b_mass, m, motion.p_S)
            else:
                proposal = build_detected_proposal(lin_pred, V1, state.weights, b_mass, Z, card_pred, N_pred,
                                                   models, cardinalized)
        except ProposalError:
            log.debug("no explainable measurement; all tuples are missed detections")
        else:
            tuples = sample_detected(n_detected, proposal, state, pred, source, Z, models, rng, bootstrap,
                                     transition)

    n_missed = n_undetected if tuples is not None else n_detected + n_undetected
    und_children, und_covs, _ = sample_undetected(n_missed, state, pred, source, models, rng)

    if tuples is not None:
        log_s = _log_summands(tuples, state, Z, models, bootstrap, pred, transition)
        lin_upd = updated_linear_functionals(tuples, log_s, lin_pred)
    else:
        lin_upd = np.zeros(m)

    try:
        factor, missed, inputs = _detect_factor(lin_upd, Z, card_pred, N_pred, models, cardinalized)
        card = update_cardinality(card_pred, inputs) if cardinalized else state.card
    except FloatingPointError:
        log.warning("filter diverged; resetting to the birth-only state")
        return AuxFilterState(card=delta(0, len(state.card) - 1), diverged=True)

    w_und = undetected_weights(n_missed, state.weights, b_mass, sensor.p_D, motion.p_S, missed)
    if tuples is not None:
        w_det = detected_weights(tuples, log_s, factor)
        picks_det = int(np.sum(tuples.parent == n_part))
        states = np.concatenate([tuples.children, und_children])
        covs = np.concatenate([tuples.covs, und_covs])
        weights = np.concatenate([w_det, w_und])
        meas_index = np.concatenate([tuples.meas, np.full(n_missed, -1)])
    else:
        picks_det = 0
        states, covs, weights = und_children, und_covs, w_und
        meas_index = np.full(n_missed, -1)
    return AuxFilterState(states, weights, covs, card, picks_det, meas_index)


def uacphd_step(state, Z, models, rng, **kw) -> AuxFilterState:
    return aux_step(state, Z, models, rng, cardinalized=True, **kw)


def uaphd_step(state, Z, models, rng, **kw) -> AuxFilterState:
    return aux_step(state, Z, models, rng, cardinalized=False, **kw)


class UAcphdFilter:
    name = "u-acphd"
    cardinalized = True

    def __init__(self, models: TrackingModels, n_detected: int = N_DETECTED, n_undetected: int = N_UNDETECTED,
                 threshold: float = EXTRACT_THRESHOLD, transition: str = "predictive",
                 source_potential: str = "gaussian"):
        self.models = models
        self.n_detected = n_detected
        self.n_undetected = n_undetected
        self.threshold = threshold
        self.transition = transition
        self.source_potential = source_potential

    def initial_state(self) -> AuxFilterState:
        return AuxFilterState()

    def step(self, state: AuxFilterState, Z, rng: np.random.Generator):
        new = aux_step(state, Z, self.models, rng, self.n_detected, self.n_undetected, self.cardinalized,
                       transition=self.transition, source_potential=self.source_potential)
        est = natural_cluster_extract(new.states, new.weights, new.meas_index, self.threshold)
        return new, est


class UAphdFilter(UAcphdFilter):
    name = "u-aphd"
    cardinalized = False
