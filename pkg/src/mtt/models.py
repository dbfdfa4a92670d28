"""Target motion, range-bearing sensor, birth and clutter models.

State vectors are ``[x, vx, y, vy, w]`` (m, m/s, m, m/s, rad/s) and
measurements are ``[r, theta]`` (m, rad).  Every function accepts a single
vector or a stack with the vector on the last axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STATE_DIM = 5
MEAS_DIM = 2
NOISE_DIM = 3

# |w| below this uses the constant-velocity limit of the turn matrix
TURN_EPS = 1e-6
# max residual outside col(G) accepted by the strict transition density
SUBSPACE_TOL = 1e-6

LOG_2PI = np.log(2.0 * np.pi)


def wrap_angle(a):
    """Wrap angles to (-pi, pi]."""
    a = np.asarray(a, dtype=float)
    return np.pi - np.mod(np.pi - a, 2.0 * np.pi)


def noise_gain(dt: float = 1.0) -> np.ndarray:
    """The 5x3 matrix G mapping [ax, ay, w-noise] into the state."""
    h = 0.5 * dt * dt
    return np.array(
        [[h, 0.0, 0.0], [dt, 0.0, 0.0], [0.0, h, 0.0], [0.0, dt, 0.0], [0.0, 0.0, 1.0]]
    )


def turn_matrix(w: float, dt: float = 1.0) -> np.ndarray:
    """Nearly-constant-turn transition matrix F(w)."""
    if abs(w) < TURN_EPS:
        s_w, c_w = dt, 0.0
    else:
        s_w, c_w = np.sin(w * dt) / w, (1.0 - np.cos(w * dt)) / w
    s, c = np.sin(w * dt), np.cos(w * dt)
    return np.array(
        [
            [1.0, s_w, 0.0, -c_w, 0.0],
            [0.0, c, 0.0, -s, 0.0],
            [0.0, c_w, 1.0, s_w, 0.0],
            [0.0, s, 0.0, c, 0.0],
            [0.0, 0.0, 0.0, 0.0, 1.0],
        ]
    )


def ct_predict(x, dt: float = 1.0) -> np.ndarray:
    """Noise-free constant-turn step, vectorised over leading axes."""
    x = np.asarray(x, dtype=float)
    px, vx, py, vy, w = np.moveaxis(x, -1, 0)
    wt = w * dt
    small = np.abs(w) < TURN_EPS
    w_safe = np.where(small, 1.0, w)
    s, c = np.sin(wt), np.cos(wt)
    s_w = np.where(small, dt, s / w_safe)
    c_w = np.where(small, 0.0, (1.0 - c) / w_safe)
    out = np.stack(
        [
            px + s_w * vx - c_w * vy,
            c * vx - s * vy,
            py + c_w * vx + s_w * vy,
            s * vx + c * vy,
            w,
        ],
        axis=-1,
    )
    return out


@dataclass(frozen=True)
class MotionModel:
    dt: float = 1.0
    sigma_eps: float = 0.1
    sigma_w: float = np.pi / 180.0
    p_S: float = 0.99

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not 0.0 <= self.p_S <= 1.0:
            raise ValueError("p_S must be a probability")

    @property
    def Q(self) -> np.ndarray:
        return np.diag([self.sigma_eps**2, self.sigma_eps**2, self.sigma_w**2])

    @property
    def G(self) -> np.ndarray:
        return noise_gain(self.dt)


@dataclass(frozen=True)
class SensorModel:
    sigma_r: float = 1.0
    sigma_theta: float = 0.5 * np.pi / 180.0
    p_D: float = 0.95
    clutter_rate: float = 10.0
    range_limits: tuple = (0.0, 1000.0)
    bearing_limits: tuple = (0.0, np.pi / 2.0)

    def __post_init__(self):
        if not 0.0 <= self.p_D <= 1.0:
            raise ValueError("p_D must be a probability")
        if self.clutter_rate < 0:
            raise ValueError("clutter_rate must be nonnegative")

    @property
    def R(self) -> np.ndarray:
        return np.diag([self.sigma_r**2, self.sigma_theta**2])

    @property
    def q_D(self) -> float:
        return 1.0 - self.p_D

    @property
    def region_volume(self) -> float:
        (r0, r1), (b0, b1) = self.range_limits, self.bearing_limits
        return (r1 - r0) * (b1 - b0)


@dataclass(frozen=True)
class BirthModel:
    mass: float = 0.05
    mean: np.ndarray = field(default_factory=lambda: np.array([500.0, 0.0, 500.0, 0.0, 0.0]))
    cov: np.ndarray = field(default_factory=lambda: np.diag([15.0**2, 5.0**2, 15.0**2, 5.0**2, 0.1**2]))

    def __post_init__(self):
        if self.mass <= 0:
            raise ValueError("birth mass must be positive")
        cov = np.asarray(self.cov, dtype=float)
        if not np.allclose(cov, cov.T) or np.linalg.eigvalsh(cov).min() <= 0:
            raise ValueError("birth covariance must be symmetric positive definite")
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "cov", cov)


def sample_transition(x, model: MotionModel, rng: np.random.Generator) -> np.ndarray:
    """Draw from f(.|x): ct_predict(x) + G eps with eps ~ N(0, Q)."""
    x = np.asarray(x, dtype=float)
    std = np.array([model.sigma_eps, model.sigma_eps, model.sigma_w])
    eps = rng.standard_normal(x.shape[:-1] + (NOISE_DIM,)) * std
    return ct_predict(x, model.dt) + eps @ model.G.T


def _gaussian_logpdf(d, cov) -> np.ndarray:
    """log N(d; 0, cov) for stacked residuals d (..., k)."""
    k = cov.shape[-1]
    chol = np.linalg.cholesky(cov)
    sol = np.linalg.solve(chol, np.moveaxis(d, -1, 0).reshape(k, -1))
    maha = np.sum(sol**2, axis=0).reshape(d.shape[:-1])
    return -0.5 * (k * LOG_2PI + maha) - np.sum(np.log(np.diag(chol)))


def transition_noise(x_next, x_prev, model: MotionModel):
    """Least-squares noise (G'G)^-1 G'(x_next - F x_prev) and the residual norm off col(G)."""
    G = model.G
    d = np.asarray(x_next, float) - ct_predict(x_prev, model.dt)
    pinv = np.linalg.solve(G.T @ G, G.T)
    eps = d @ pinv.T
    resid = d - eps @ G.T
    return eps, np.linalg.norm(resid, axis=-1)


def log_transition_density(x_next, x_prev, model: MotionModel, strict: bool = True):
    """Log of the rank-3 transition density in noise coordinates.

    ``strict`` returns -inf for pairs whose residual leaves the column space
    of G by more than ``SUBSPACE_TOL``; with ``strict=False`` the residual is
    projected onto col(G) and the orthogonal part is ignored.
    """
    eps, off = transition_noise(x_next, x_prev, model)
    logp = _gaussian_logpdf(eps, model.Q)
    if strict:
        logp = np.where(off > SUBSPACE_TOL, -np.inf, logp)
    return logp


def eval_transition_density(x_next, x_prev, model: MotionModel, strict: bool = True):
    return np.exp(log_transition_density(x_next, x_prev, model, strict=strict))


def measure(x) -> np.ndarray:
    """Noise-free range and bearing from a sensor at the origin."""
    x = np.asarray(x, dtype=float)
    px, py = x[..., 0], x[..., 2]
    if np.any((px == 0.0) & (py == 0.0)):
        raise ValueError("bearing undefined for a target at the sensor origin")
    return np.stack([np.hypot(px, py), np.arctan2(py, px)], axis=-1)


def innovation(z, z_pred) -> np.ndarray:
    d = np.asarray(z, float) - np.asarray(z_pred, float)
    return np.concatenate([d[..., :1], wrap_angle(d[..., 1:2])], axis=-1)


def log_likelihood(z, x, sensor: SensorModel) -> np.ndarray:
    """log N(z; measure(x), R) with the bearing innovation wrapped.

    Broadcasts ``z`` (..., 2) against ``x`` (..., 5).
    """
    d = innovation(z, measure(x))
    maha = (d[..., 0] / sensor.sigma_r) ** 2 + (d[..., 1] / sensor.sigma_theta) ** 2
    return -0.5 * maha - LOG_2PI - np.log(sensor.sigma_r * sensor.sigma_theta)


def likelihood(z, x, sensor: SensorModel) -> np.ndarray:
    return np.exp(log_likelihood(z, x, sensor))


def in_clutter_region(z, sensor: SensorModel) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    (r0, r1), (b0, b1) = sensor.range_limits, sensor.bearing_limits
    r, th = z[..., 0], z[..., 1]
    return (r >= r0) & (r <= r1) & (th >= b0) & (th <= b1)


def clutter_density(z, sensor: SensorModel) -> np.ndarray:
    """Spatial clutter density c(z): uniform over the range-bearing box."""
    return np.where(in_clutter_region(z, sensor), 1.0 / sensor.region_volume, 0.0)


def sample_clutter(sensor: SensorModel, rng: np.random.Generator) -> np.ndarray:
    n = rng.poisson(sensor.clutter_rate)
    (r0, r1), (b0, b1) = sensor.range_limits, sensor.bearing_limits
    r = rng.uniform(r0, r1, size=n)
    th = rng.uniform(b0, b1, size=n)
    return np.stack([r, th], axis=-1).reshape(n, MEAS_DIM)


def sample_birth(birth: BirthModel, rng: np.random.Generator, size=None) -> np.ndarray:
    return rng.multivariate_normal(birth.mean, birth.cov, size=size, method="cholesky")


def eval_birth_intensity(x, birth: BirthModel) -> np.ndarray:
    """b(x) = mass * N(x; m_b, Q_b)."""
    d = np.asarray(x, dtype=float) - birth.mean
    return birth.mass * np.exp(_gaussian_logpdf(d, birth.cov))


def log_birth_density(x, birth: BirthModel) -> np.ndarray:
    """log of b(x)/b[1], the transition density out of the source point."""
    return _gaussian_logpdf(np.asarray(x, dtype=float) - birth.mean, birth.cov)


# Floor on c(z) inside filters: a measurement outside the clutter region is
# then treated as (almost) certainly target-originated instead of dividing by 0.
CLUTTER_FLOOR = 1e-12


def filter_clutter_density(Z, sensor: SensorModel) -> np.ndarray:
    return np.maximum(clutter_density(np.asarray(Z, float).reshape(-1, MEAS_DIM), sensor), CLUTTER_FLOOR)


@dataclass(frozen=True)
class TrackingModels:
    """Everything a filter needs to know about the world."""

    motion: MotionModel = field(default_factory=MotionModel)
    sensor: SensorModel = field(default_factory=SensorModel)
    birth: BirthModel = field(default_factory=BirthModel)
