"""Bootstrap SMC-PHD and SMC-CPHD baselines and their state extraction."""

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
    TrackingModels,
    filter_clutter_density,
    log_likelihood,
    sample_birth,
    sample_transition,
)

log = logging.getLogger(__name__)

N_SURVIVE = 2500
N_BIRTH = 500


@dataclass
class WeightedParticleSet:
    states: np.ndarray = field(default_factory=lambda: np.zeros((0, 5)))
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def expected_count(self) -> float:
        return float(np.sum(self.weights))

    def __len__(self):
        return len(self.weights)


def resample(weights, n_out: int, rng: np.random.Generator) -> np.ndarray:
    """Systematic resampling; returns ``n_out`` parent indices."""
    w = np.asarray(weights, dtype=float)
    total = w.sum()
    if not total > 0:
        raise ValueError("cannot resample from all-zero weights")
    cdf = np.cumsum(w / total)
    cdf[-1] = 1.0
    pos = (rng.uniform() + np.arange(n_out)) / n_out
    idx = np.searchsorted(cdf, pos, side="right")
    return np.minimum(idx, len(w) - 1)


def smc_predict(pset: WeightedParticleSet, n_birth: int, n_survive: int,
                models: TrackingModels, rng: np.random.Generator) -> WeightedParticleSet:
    if n_birth <= 0 or n_survive <= 0:
        raise ValueError("particle budgets must be positive")
    mass = pset.expected_count
    b_mass = models.birth.mass
    if mass <= 0 and b_mass <= 0:
        raise ValueError("nothing to predict: empty prior and no birth mass")
    parts, weights = [], []
    if mass > 0:
        parents = resample(pset.weights, n_survive, rng)
        parts.append(sample_transition(pset.states[parents], models.motion, rng))
        weights.append(np.full(n_survive, models.motion.p_S * mass / n_survive))
    parts.append(sample_birth(models.birth, rng, size=n_birth))
    weights.append(np.full(n_birth, b_mass / n_birth))
    return WeightedParticleSet(np.concatenate(parts), np.concatenate(weights))


def _detection_terms(pset, Z, models):
    """p_D L_z(x_i) for every particle/measurement pair, shape (N, m)."""
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if len(Z) == 0 or len(pset) == 0:
        return np.zeros((len(pset), len(Z)))
    return models.sensor.p_D * np.exp(log_likelihood(Z[None, :, :], pset.states[:, None, :], models.sensor))


def smc_phd_update(pset: WeightedParticleSet, Z, models: TrackingModels) -> WeightedParticleSet:
    """PHD corrector:

    w <- [q_D + sum_p p_D L_p(x) / (lambda c(z_p) + sum_i p_D L_p(x_i) w_i)] w
    """
    sensor = models.sensor
    g = _detection_terms(pset, Z, models)
    if g.shape[1] == 0:
        return WeightedParticleSet(pset.states, sensor.q_D * pset.weights)
    lin = pset.weights @ g
    kappa = sensor.clutter_rate * filter_clutter_density(Z, sensor)
    denom = kappa + lin
    scale = np.divide(g, denom, out=np.zeros_like(g), where=denom > 0).sum(axis=1)
    return WeightedParticleSet(pset.states, (sensor.q_D + scale) * pset.weights)


def cphd_upsilons(lin, Z, N_pred: float, card_pred, models: TrackingModels):
    """Upsilon set for predicted linear functionals ``lin`` = D[p_D L_z_p]."""
    sensor = models.sensor
    c = filter_clutter_density(Z, sensor)
    inputs = UpsilonInputs.poisson(np.asarray(lin) / c, N_pred, sensor.q_D,
                                   sensor.clutter_rate, card_pred)
    return upsilon_set(inputs), inputs, c


def smc_cphd_update(pset: WeightedParticleSet, card, Z, models: TrackingModels):
    """CPHD corrector: w <- L_Z(x) w and the matching cardinality update."""
    sensor = models.sensor
    g = _detection_terms(pset, Z, models)
    lin = pset.weights @ g
    ups, inputs, c = cphd_upsilons(lin, Z, pset.expected_count, card, models)
    factor = ups.missed_ratio * sensor.q_D
    if g.shape[1]:
        factor = factor + g @ (ups.detect_ratios / c)
    new_card = update_cardinality(card, inputs)
    return WeightedParticleSet(pset.states, factor * pset.weights), new_card


def _weighted_median(values, weights):
    order = np.argsort(values, kind="stable")
    v, w = values[order], weights[order]
    cw = np.cumsum(w)
    return v[np.searchsorted(cw, 0.5 * cw[-1])]


def _kmeans_l1_once(pos, w, k, rng, max_iter=100):
    p = w / w.sum()
    nz = np.count_nonzero(p)
    seeds = rng.choice(len(pos), size=k, replace=False, p=p) if nz >= k else np.argsort(-w, kind="stable")[:k]
    centers = pos[np.sort(seeds)].copy()
    labels = None
    for _ in range(max_iter):
        dist = np.abs(pos[:, None, :] - centers[None, :, :]).sum(axis=2)
        new_labels = np.argmin(dist, axis=1)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            member = labels == c
            if w[member].sum() > 0:
                centers[c] = [_weighted_median(pos[member, d], w[member]) for d in range(pos.shape[1])]
    dist = np.abs(pos[:, None, :] - centers[None, :, :]).sum(axis=2)
    labels = np.argmin(dist, axis=1)
    cost = float(np.sum(w * dist[np.arange(len(pos)), labels]))
    return labels, cost


def kmeans_extract(pset: WeightedParticleSet, n_clusters: int, restarts: int = 5,
                   rng: np.random.Generator | None = None, return_cost: bool = False):
    """Weighted city-block k-means on positions, best of ``restarts``.

    Cluster centres are reported as weighted means of the member particles'
    full states.
    """
    rng = rng or np.random.default_rng(0)
    n_clusters = min(int(n_clusters), len(pset))
    w = np.asarray(pset.weights, dtype=float)
    if n_clusters <= 0 or w.sum() <= 0:
        out = np.zeros((0, 5))
        return (out, 0.0) if return_cost else out
    pos = pset.states[:, [0, 2]]
    best = None
    for _ in range(max(1, restarts)):
        labels, cost = _kmeans_l1_once(pos, w, n_clusters, rng)
        if best is None or cost < best[1]:
            best = (labels, cost)
    labels, cost = best
    est = []
    for c in range(n_clusters):
        member = labels == c
        wm = w[member]
        if wm.sum() > 0:
            est.append(wm @ pset.states[member] / wm.sum())
    out = np.array(est).reshape(-1, 5)
    return (out, cost) if return_cost else out


def extract_count(pset: WeightedParticleSet) -> int:
    return int(np.floor(pset.expected_count + 0.5))


# -- filter objects used by the harness ---------------------------------------


@dataclass
class SmcState:
    particles: WeightedParticleSet = field(default_factory=WeightedParticleSet)
    card: np.ndarray = field(default_factory=lambda: delta(0, N_MAX))
    birth_pick_count: int = 0


class SmcPhdFilter:
    name = "smc-phd"
    cardinalized = False

    def __init__(self, models: TrackingModels, n_survive: int = N_SURVIVE, n_birth: int = N_BIRTH,
                 kmeans_restarts: int = 5):
        self.models = models
        self.n_survive = n_survive
        self.n_birth = n_birth
        self.kmeans_restarts = kmeans_restarts

    def initial_state(self) -> SmcState:
        return SmcState()

    def _update(self, state, pred, Z):
        return SmcState(smc_phd_update(pred, Z, self.models), state.card)

    def step(self, state: SmcState, Z, rng: np.random.Generator):
        pred = smc_predict(state.particles, self.n_birth, self.n_survive, self.models, rng)
        new = self._update(state, pred, Z)
        est = kmeans_extract(new.particles, extract_count(new.particles), self.kmeans_restarts, rng)
        return new, est


class SmcCphdFilter(SmcPhdFilter):
    name = "smc-cphd"
    cardinalized = True

    def _update(self, state, pred, Z):
        birth_card = poisson_pmf(self.models.birth.mass, len(state.card) - 1)
        card_pred = predict_cardinality(state.card, self.models.motion.p_S, birth_card)
        parts, card = smc_cphd_update(pred, card_pred, Z, self.models)
        return SmcState(parts, card)
