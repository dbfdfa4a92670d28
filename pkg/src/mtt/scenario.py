"""Ground truth and measurement scans for the five-target scenario."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .models import (
    BirthModel,
    MotionModel,
    SensorModel,
    TrackingModels,
    ct_predict,
    measure,
    sample_clutter,
    sample_transition,
)


@dataclass(frozen=True)
class Target:
    state: np.ndarray
    appear: int
    disappear: int


@dataclass(frozen=True)
class Scenario:
    duration: int
    targets: tuple
    models: TrackingModels = field(default_factory=TrackingModels)

    def __post_init__(self):
        for t in self.targets:
            if not t.appear < t.disappear <= self.duration:
                raise ValueError(f"bad target window [{t.appear}, {t.disappear})")

    def with_clutter(self, rate: float) -> "Scenario":
        sensor = replace(self.models.sensor, clutter_rate=float(rate))
        return replace(self, models=replace(self.models, sensor=sensor))

    def true_count(self, step: int) -> int:
        return sum(t.appear <= step < t.disappear for t in self.targets)


def scenario_from_dict(d: dict) -> Scenario:
    s, mo, b = d["sensor"], d["motion"], d["birth"]
    sensor = SensorModel(
        sigma_r=float(s["sigma_r"]),
        sigma_theta=np.deg2rad(float(s["sigma_theta_deg"])),
        p_D=float(s["p_D"]),
        clutter_rate=float(s["lambda"]),
        range_limits=tuple(float(v) for v in s.get("range_limits", (0.0, 1000.0))),
        bearing_limits=tuple(np.deg2rad(float(v)) for v in s.get("bearing_limits_deg", (0.0, 90.0))),
    )
    motion = MotionModel(dt=float(mo["T"]), sigma_eps=float(mo["sigma_eps"]),
                         sigma_w=np.deg2rad(float(mo["sigma_w_deg"])), p_S=float(mo.get("p_S", 0.99)))
    birth = BirthModel(mass=float(b["mass"]), mean=np.array(b["mean"], float), cov=np.diag(np.array(b["cov_diag"], float)))
    targets = tuple(Target(np.array(t["state"], float), int(t["appear"]), int(t["disappear"])) for t in d["targets"])
    return Scenario(int(d["duration"]), targets, TrackingModels(motion, sensor, birth))


def load_scenario(path=None) -> Scenario:
    """Load a scenario file; ``None`` gives the packaged default."""
    if path is None:
        text = resources.files("mtt").joinpath("data/default_scenario.json").read_text()
    else:
        text = Path(path).read_text()
    return scenario_from_dict(json.loads(text))


@dataclass
class TruthLog:
    """``states[k]`` / ``ids[k]`` hold the targets present at step k+1."""

    states: list
    ids: list

    def at(self, step: int) -> np.ndarray:
        return self.states[step - 1]

    def counts(self) -> np.ndarray:
        return np.array([len(s) for s in self.states])


def generate_truth(scen: Scenario, noise_mode: str = "stochastic", rng=None) -> TruthLog:
    if noise_mode not in ("stochastic", "deterministic"):
        raise ValueError(f"unknown noise mode {noise_mode!r}")
    if noise_mode == "stochastic" and rng is None:
        raise ValueError("stochastic truth needs an rng")
    motion = scen.models.motion
    states = [[] for _ in range(scen.duration)]
    ids = [[] for _ in range(scen.duration)]
    for tid, t in enumerate(scen.targets, start=1):
        x = t.state.copy()
        for step in range(t.appear, t.disappear):
            if step > t.appear:
                x = ct_predict(x, motion.dt) if noise_mode == "deterministic" else sample_transition(x, motion, rng)
            states[step - 1].append(x)
            ids[step - 1].append(tid)
    return TruthLog([np.array(s).reshape(-1, 5) for s in states], [np.array(i, dtype=int) for i in ids])


def generate_scan(truth_states, sensor: SensorModel, rng: np.random.Generator) -> np.ndarray:
    """Detections of the present targets plus Poisson clutter, shuffled."""
    X = np.asarray(truth_states, dtype=float).reshape(-1, 5)
    detected = rng.uniform(size=len(X)) < sensor.p_D
    Xd = X[detected]
    noise = rng.standard_normal((len(Xd), 2)) * [sensor.sigma_r, sensor.sigma_theta]
    dets = measure(Xd) + noise if len(Xd) else np.zeros((0, 2))
    Z = np.concatenate([dets, sample_clutter(sensor, rng)])
    return Z[rng.permutation(len(Z))]


def simulate(scen: Scenario, rng: np.random.Generator, noise_mode: str = "stochastic"):
    """Truth log and one scan per step, in that order from ``rng``."""
    truth = generate_truth(scen, noise_mode, rng)
    scans = [generate_scan(truth.at(k), scen.models.sensor, rng) for k in range(1, scen.duration + 1)]
    return truth, scans
