"""Cardinality recursion of the CPHD filter.

Cardinality distributions are plain probability vectors ``p[0..n_max]``.
Combinatorial sums are carried in log space so that large clutter sets and
sharp likelihoods neither overflow nor underflow.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp
from scipy.stats import binom, poisson

N_MAX = 100
N_PRED_FLOOR = 1e-9
NORM_TOL = 1e-9
# bound on the relative error of a deflated ESF before falling back
DEFLATION_TOL = 1e-10

_EPS = np.finfo(float).eps


def _log(a):
    with np.errstate(divide="ignore"):
        return np.log(a)


def poisson_pmf(rate: float, n_max: int = N_MAX) -> np.ndarray:
    return poisson.pmf(np.arange(n_max + 1), rate)


def poisson_log_pmf(rate: float, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1)
    if rate == 0:
        return np.where(n == 0, 0.0, -np.inf)
    return poisson.logpmf(n, rate)


def normalize(p) -> np.ndarray:
    p = np.clip(np.asarray(p, dtype=float), 0.0, None)
    total = p.sum()
    if not np.isfinite(total) or total <= 0:
        raise FloatingPointError("cardinality distribution has no mass")
    return p / total


def delta(n: int, n_max: int = N_MAX) -> np.ndarray:
    p = np.zeros(n_max + 1)
    p[n] = 1.0
    return p


def mean_cardinality(p) -> float:
    p = np.asarray(p)
    return float(np.arange(len(p)) @ p)


# -- elementary symmetric functions ----------------------------------------


@dataclass
class EsfVector:
    """sigma_j = values[j] * exp(j * log_scale)."""

    values: np.ndarray
    log_scale: float = 0.0

    def log(self) -> np.ndarray:
        j = np.arange(len(self.values))
        return _log(self.values) + j * self.log_scale

    def unscaled(self) -> np.ndarray:
        return np.exp(self.log())


def _esf_scaled(y: np.ndarray) -> np.ndarray:
    e = np.zeros(len(y) + 1)
    e[0] = 1.0
    for k, yk in enumerate(y):
        e[1 : k + 2] += yk * e[: k + 1]
    return e


def esf(values) -> EsfVector:
    """All elementary symmetric functions of nonnegative ``values``.

    Expands prod(1 + y_j t); inputs are divided by their maximum first and
    the scale is tracked separately.
    """
    y = np.asarray(values, dtype=float).ravel()
    if np.any(y < 0) or np.any(np.isnan(y)):
        raise ValueError("elementary symmetric functions need nonnegative inputs")
    top = y.max(initial=0.0)
    if top == 0.0 or not np.isfinite(top):
        if not np.isfinite(top):
            raise ValueError("infinite input")
        e = np.zeros(len(y) + 1)
        e[0] = 1.0
        return EsfVector(e, 0.0)
    return EsfVector(_esf_scaled(y / top), float(np.log(top)))


def leave_one_out_log_esf(values) -> np.ndarray:
    """``out[p, j] = log sigma_j(values without item p)`` for j = 0..m-1.

    Uses polynomial deflation of the full product and recomputes directly
    for items where deflation loses accuracy.
    """
    y = np.asarray(values, dtype=float).ravel()
    m = len(y)
    if m == 0:
        return np.zeros((0, 0))
    full = esf(y)
    s = full.log_scale
    ys = y / np.exp(s)
    e = full.values

    defl = np.zeros((m, m))
    err = np.zeros((m, m))
    defl[:, 0] = 1.0
    for i in range(1, m):
        carry = ys * defl[:, i - 1]
        defl[:, i] = e[i] - carry
        err[:, i] = _EPS * (e[i] + carry) + ys * err[:, i - 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(defl > 0, err / defl, np.inf)
    bad = np.any(rel > DEFLATION_TOL, axis=1)
    for p in np.flatnonzero(bad):
        defl[p] = _esf_scaled(np.delete(ys, p))
    return _log(defl) + np.arange(m) * s


# -- probability generating function and prediction --------------------------


def pgf_derivative_terms(p, x: float, i: int) -> float:
    """i-th derivative of G(x) = sum_n p(n) x^n."""
    p = np.asarray(p, dtype=float)
    n = np.arange(i, len(p))
    if len(n) == 0:
        return 0.0
    coef = np.exp(gammaln(n + 1) - gammaln(n - i + 1))
    powers = np.where(n == i, 1.0, float(x) ** np.maximum(n - i, 0))
    return float(np.sum(coef * p[i:] * powers))


def predict_cardinality(p, s_pS: float, birth_card) -> np.ndarray:
    """Survival thinning of ``p`` followed by convolution with the birth count."""
    if not 0.0 <= s_pS <= 1.0:
        raise ValueError("survival probability out of range")
    p = np.asarray(p, dtype=float)
    n_max = len(p) - 1
    idx = np.arange(n_max + 1)
    # thinned[i] = G^(i)(1-s) s^i / i!  =  sum_l C(l, i) s^i (1-s)^(l-i) p(l)
    thin = binom.pmf(idx[:, None], idx[None, :], s_pS) @ p
    birth = np.asarray(birth_card, dtype=float)[: n_max + 1]
    out = np.convolve(thin, birth)[: n_max + 1]
    return normalize(out)


# -- Upsilon functions and cardinality update --------------------------------


@dataclass
class UpsilonInputs:
    linfuncs: np.ndarray  # D[p_D L_z] / c(z) per measurement
    N_pred: float
    q_D: float
    log_clutter_card: np.ndarray  # log p_K(0..)
    p_pred: np.ndarray

    @classmethod
    def poisson(cls, linfuncs, N_pred, q_D, clutter_rate, p_pred):
        m = len(np.atleast_1d(linfuncs))
        return cls(np.asarray(linfuncs, dtype=float).ravel(), N_pred, q_D,
                   poisson_log_pmf(clutter_rate, m), np.asarray(p_pred, dtype=float))

    @property
    def log_N(self) -> float:
        return float(np.log(max(self.N_pred, N_PRED_FLOOR)))


def _log_falling_sums(p_pred, q_D: float, k_max: int) -> np.ndarray:
    """log sum_{n>=k} n!/(n-k)! q_D^(n-k) p(n) for k = 0..k_max."""
    n = np.arange(len(p_pred))
    k = np.arange(k_max + 1)[:, None]
    gap = n[None, :] - k
    valid = gap >= 0
    gap_c = np.where(valid, gap, 0)
    log_q = np.where(gap_c == 0, 0.0, gap_c * _log(q_D) if q_D > 0 else -np.inf)
    terms = gammaln(n + 1) - gammaln(gap_c + 1) + log_q + _log(p_pred)[None, :]
    terms = np.where(valid, terms, -np.inf)
    return logsumexp(terms, axis=1)


def log_upsilon(u: int, log_sigma, inputs: UpsilonInputs, falling=None) -> float:
    """log Upsilon^u for a measurement set summarised by its log-ESFs."""
    log_sigma = np.asarray(log_sigma, dtype=float)
    m = len(log_sigma) - 1
    j = np.arange(m + 1)
    if falling is None:
        falling = _log_falling_sums(inputs.p_pred, inputs.q_D, m + u)
    clut = gammaln(m - j + 1) + inputs.log_clutter_card[m - j]
    terms = clut + log_sigma + falling[j + u] - (j + u) * inputs.log_N
    return float(logsumexp(terms))


def upsilon(u: int, log_sigma, inputs: UpsilonInputs) -> float:
    return float(np.exp(log_upsilon(u, log_sigma, inputs)))


@dataclass
class UpsilonSet:
    log_u0: float
    log_u1: float
    log_u1_loo: np.ndarray  # per measurement p: log Upsilon^1(Z - {z_p})

    @property
    def missed_ratio(self) -> float:
        """Upsilon^1(Z) / Upsilon^0(Z)."""
        return float(np.exp(self.log_u1 - self.log_u0))

    @property
    def detect_ratios(self) -> np.ndarray:
        """Upsilon^1(Z - {z_p}) / Upsilon^0(Z) per measurement."""
        return np.exp(self.log_u1_loo - self.log_u0)


def upsilon_set(inputs: UpsilonInputs) -> UpsilonSet:
    """Upsilon^0(Z), Upsilon^1(Z) and every leave-one-out Upsilon^1."""
    y = inputs.linfuncs
    m = len(y)
    falling = _log_falling_sums(inputs.p_pred, inputs.q_D, m + 1)
    log_sig = esf(y).log()
    u0 = log_upsilon(0, log_sig, inputs, falling)
    u1 = log_upsilon(1, log_sig, inputs, falling)
    if m:
        loo = leave_one_out_log_esf(y)
        u1_loo = np.array([log_upsilon(1, row, inputs, falling) for row in loo])
    else:
        u1_loo = np.zeros(0)
    return UpsilonSet(u0, u1, u1_loo)


def update_cardinality(p_pred, inputs: UpsilonInputs) -> np.ndarray:
    p_pred = np.asarray(p_pred, dtype=float)
    y = inputs.linfuncs
    m = len(y)
    log_sig = esf(y).log()
    n = np.arange(len(p_pred))[:, None]
    j = np.arange(m + 1)[None, :]
    gap = n - j
    valid = gap >= 0
    gap_c = np.where(valid, gap, 0)
    log_q = np.where(gap_c == 0, 0.0, gap_c * _log(inputs.q_D) if inputs.q_D > 0 else -np.inf)
    clut = gammaln(m - j + 1) + inputs.log_clutter_card[m - j]
    terms = (clut + log_sig[None, :] + gammaln(n + 1) - gammaln(gap_c + 1) + log_q
             - j * inputs.log_N)
    terms = np.where(valid, terms, -np.inf)
    log_post = _log(p_pred) + logsumexp(terms, axis=1)
    if not np.any(np.isfinite(log_post)):
        raise FloatingPointError("cardinality update has an all-zero numerator")
    log_post -= log_post.max()
    return normalize(np.exp(log_post))
