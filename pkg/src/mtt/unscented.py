"""Unscented transform machinery for the auxiliary filters.

Sigma points are stored row-wise: a ``SigmaSet.points`` array has shape
``(..., 2L+1, L)`` so that stacks of particles are processed in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy.linalg import block_diag

from .models import (
    BirthModel,
    MotionModel,
    SensorModel,
    ct_predict,
    measure,
    wrap_angle,
)

# Birth mean uncertainty (same value in every state unit).
SIGMA_B = 1e-2
SYMMETRY_TOL = 1e-9
MAX_INNOVATION_COND = 1e12
# exp(-RANGE_CUTOFF**2 / 2) is 0.0 in double precision
RANGE_CUTOFF = 40.0


@dataclass(frozen=True)
class UtParams:
    alpha: float = 1.0
    beta: float = 1.0
    kappa: float = 2.0
    L: int = 10

    @property
    def scaling(self) -> float:
        return self.alpha**2 * (self.L + self.kappa) - self.L

    def with_dim(self, L: int) -> "UtParams":
        return replace(self, L=L)


def ut_weights(params: UtParams):
    """Mean and covariance weights of the 2L+1 sigma points."""
    L, lam = params.L, params.scaling
    if L + lam <= 0:
        raise ValueError(f"UT scaling {lam} must exceed -L = {-L}")
    wm = np.full(2 * L + 1, 0.5 / (L + lam))
    wc = wm.copy()
    wm[0] = lam / (L + lam)
    wc[0] = wm[0] + (1.0 - params.alpha**2 + params.beta)
    return wm, wc


@dataclass
class SigmaSet:
    points: np.ndarray
    wm: np.ndarray
    wc: np.ndarray


def psd_sqrt(cov: np.ndarray) -> np.ndarray:
    """Symmetric square root with negative eigenvalues clipped to zero."""
    vals, vecs = np.linalg.eigh(cov)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)[..., None, :]) @ np.swapaxes(vecs, -1, -2)


def sigma_points(mean, cov, params: Optional[UtParams] = None) -> SigmaSet:
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(cov, dtype=float)
    L = mean.shape[-1]
    params = (params or UtParams()).with_dim(L)
    if np.max(np.abs(cov - np.swapaxes(cov, -1, -2)), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("covariance is not symmetric")
    wm, wc = ut_weights(params)
    # rows of the symmetric root are its columns
    S = psd_sqrt((L + params.scaling) * cov)
    m = mean[..., None, :]
    points = np.concatenate([m, m + S, m - S], axis=-2)
    return SigmaSet(points, wm, wc)


@dataclass
class AugmentedParticle:
    """Augmented mean/covariance: state, then motion noise, then measurement noise."""

    mean: np.ndarray
    cov: np.ndarray
    is_birth: bool = False


def augment_particle(x, P, motion: MotionModel, sensor: SensorModel) -> AugmentedParticle:
    x = np.asarray(x, dtype=float)
    P = np.asarray(P, dtype=float)
    batch = x.shape[:-1]
    mean = np.concatenate([x, np.zeros(batch + (5,))], axis=-1)
    cov = np.zeros(batch + (10, 10))
    cov[..., :5, :5] = P
    cov[..., 5:8, 5:8] = motion.Q
    cov[..., 8:, 8:] = sensor.R
    return AugmentedParticle(mean, cov, is_birth=False)


def augment_birth(birth: BirthModel, sensor: SensorModel, sigma_b: float = SIGMA_B) -> AugmentedParticle:
    mean = np.concatenate([birth.mean, np.zeros(7)])
    cov = block_diag(sigma_b**2 * np.eye(5), birth.cov, sensor.R)
    return AugmentedParticle(mean, cov, is_birth=True)


@dataclass
class UtPrediction:
    sigma_states: np.ndarray  # (..., 2L+1, 5)
    x_pred: np.ndarray
    P_pred: np.ndarray
    sigma_meas: np.ndarray  # (..., 2L+1, 2)
    y_pred: np.ndarray
    wm: np.ndarray
    wc: np.ndarray
    is_birth: bool = False
    wrap_bearing: bool = True


def _meas_residual(Y, y, wrap: bool):
    d = Y - y
    if wrap:
        d = d.copy()
        d[..., 1] = wrap_angle(d[..., 1])
    return d


def ut_time_update(
    p: AugmentedParticle,
    motion: MotionModel,
    is_birth: Optional[bool] = None,
    params: Optional[UtParams] = None,
    measure_fn: Optional[Callable] = None,
    wrap_bearing: bool = True,
) -> UtPrediction:
    """Push an augmented particle (or a stack of them) through motion and sensor.

    Persistent particles move by ``F(w) x + G eps``; the source point's
    sigma states are ``m_b`` plus the birth-noise rows.  ``measure_fn``
    replaces the range-bearing map, e.g. with a linear one for testing.
    """
    if is_birth is None:
        is_birth = p.is_birth
    sig = sigma_points(p.mean, p.cov, params)
    chi = sig.points
    if is_birth:
        states = chi[..., :5] + chi[..., 5:10]
        meas_noise = chi[..., 10:12]
    else:
        states = ct_predict(chi[..., :5], motion.dt) + chi[..., 5:8] @ motion.G.T
        meas_noise = chi[..., 8:10]
    h = measure_fn or measure
    Y = h(states) + meas_noise

    wm, wc = sig.wm, sig.wc
    x_pred = np.einsum("j,...jk->...k", wm, states)
    dx = states - x_pred[..., None, :]
    P_pred = np.einsum("j,...ja,...jb->...ab", wc, dx, dx)
    if wrap_bearing:
        # average bearings relative to the central point
        ref = Y[..., :1, :]
        y_pred = ref[..., 0, :] + np.einsum("j,...jk->...k", wm, _meas_residual(Y, ref, True))
        y_pred[..., 1] = wrap_angle(y_pred[..., 1])
    else:
        y_pred = np.einsum("j,...jk->...k", wm, Y)
    return UtPrediction(states, x_pred, P_pred, Y, y_pred, wm, wc, bool(is_birth), wrap_bearing)


def ut_gain(pred: UtPrediction):
    """Gain and conditional covariance; neither depends on the measurement value."""
    dx = pred.sigma_states - pred.x_pred[..., None, :]
    dy = _meas_residual(pred.sigma_meas, pred.y_pred[..., None, :], pred.wrap_bearing)
    P_yy = np.einsum("j,...ja,...jb->...ab", pred.wc, dy, dy)
    P_xy = np.einsum("j,...ja,...jb->...ab", pred.wc, dx, dy)
    if np.any(np.linalg.cond(P_yy) > MAX_INNOVATION_COND):
        raise np.linalg.LinAlgError("degenerate innovation covariance")
    K = P_xy @ np.linalg.inv(P_yy)
    P_post = pred.P_pred - K @ P_yy @ np.swapaxes(K, -1, -2)
    P_post = 0.5 * (P_post + np.swapaxes(P_post, -1, -2))
    return K, P_post, P_yy


def ut_measurement_update(pred: UtPrediction, z):
    """Conditional mean and covariance of the state given measurement z."""
    K, P_post, _ = ut_gain(pred)
    nu = np.asarray(z, dtype=float) - pred.y_pred
    if pred.wrap_bearing:
        nu = nu.copy()
        nu[..., 1] = wrap_angle(nu[..., 1])
    x_post = pred.x_pred + np.einsum("...ab,...b->...a", K, nu)
    return x_post, P_post


def potential_matrix(pred: UtPrediction, Z, sensor: SensorModel, survival: float) -> np.ndarray:
    """Predicted detection potentials for every (particle, measurement) pair.

    Returns an array of shape ``pred.x_pred.shape[:-1] + (len(Z),)``.
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if len(Z) == 0 or sensor.p_D == 0.0:
        return np.zeros(pred.x_pred.shape[:-1] + (len(Z),))
    # Same value as averaging likelihood(Z, sigma_states) over sigma points.
    # Pairs whose range gap exceeds RANGE_CUTOFF sigma_r at every sigma point
    # underflow to exactly 0 in double precision, so they are skipped.
    batch = pred.sigma_states.shape[:-2]
    h = measure(pred.sigma_states).reshape((-1,) + pred.sigma_states.shape[-2:-1] + (2,))
    r = h[..., 0]
    slack = RANGE_CUTOFF * sensor.sigma_r
    near = (Z[None, :, 0] >= r.min(axis=1)[:, None] - slack) & (Z[None, :, 0] <= r.max(axis=1)[:, None] + slack)
    rows, cols = np.nonzero(near)
    out = np.zeros((len(h), len(Z)))
    if len(rows):
        dth = Z[cols, 1][:, None] - h[rows, :, 1]
        dth += np.pi
        np.mod(dth, 2.0 * np.pi, out=dth)
        dth -= np.pi
        dth /= sensor.sigma_theta
        np.square(dth, out=dth)
        dr = Z[cols, 0][:, None] - r[rows]
        dr /= sensor.sigma_r
        np.square(dr, out=dr)
        dth += dr
        dth *= -0.5
        np.exp(dth, out=dth)
        norm = 1.0 / (2.0 * np.pi * sensor.sigma_r * sensor.sigma_theta)
        out[rows, cols] = (survival * sensor.p_D * norm) * (dth @ pred.wm)
    return out.reshape(batch + (len(Z),))


def gaussian_potential(pred: UtPrediction, Z, sensor: SensorModel, survival: float) -> np.ndarray:
    """Potentials from the UT predictive likelihood N(z; y_pred, P_yy).

    Unlike ``potential_matrix`` this integrates the likelihood over the
    predicted spread, so it stays usable when that spread is much wider
    than the sensor noise (the birth source).
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, 2)
    if len(Z) == 0 or sensor.p_D == 0.0:
        return np.zeros(pred.x_pred.shape[:-1] + (len(Z),))
    _, _, P_yy = ut_gain(pred)
    nu = Z - pred.y_pred[..., None, :]
    if pred.wrap_bearing:
        nu[..., 1] = wrap_angle(nu[..., 1])
    chol = np.linalg.cholesky(P_yy)
    sol = np.linalg.solve(chol[..., None, :, :], nu[..., None])[..., 0]
    logdet = np.sum(np.log(np.diagonal(chol, axis1=-2, axis2=-1)), axis=-1)
    logp = -0.5 * np.sum(sol**2, axis=-1) - np.log(2.0 * np.pi) - logdet[..., None]
    return survival * sensor.p_D * np.exp(logp)


def predicted_potential(pred: UtPrediction, z, sensor: SensorModel, motion: MotionModel):
    """Sigma-point estimate of the detection potential for one measurement."""
    survival = 1.0 if pred.is_birth else motion.p_S
    return potential_matrix(pred, np.reshape(z, (1, 2)), sensor, survival)[..., 0]


def predict_particles(x, P, motion: MotionModel, sensor: SensorModel, params=None) -> UtPrediction:
    """Batch UT time update for persistent particles ``x`` (N, 5), ``P`` (N, 5, 5)."""
    return ut_time_update(augment_particle(x, P, motion, sensor), motion, False, params)


def predict_source(birth: BirthModel, sensor: SensorModel, motion: MotionModel, params=None,
                   sigma_b: float = SIGMA_B) -> UtPrediction:
    return ut_time_update(augment_birth(birth, sensor, sigma_b), motion, True, params)
