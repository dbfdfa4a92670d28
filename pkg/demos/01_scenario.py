"""
The five-target scenario
========================

Simulate ground truth and range-bearing scans, then look at what a filter
actually receives: a handful of detections buried in Poisson clutter.
"""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mtt import load_scenario, simulate

scen = load_scenario()
print("targets:", len(scen.targets), "steps:", scen.duration)
for i, t in enumerate(scen.targets, 1):
    print(f"  target {i}: born at step {t.appear}, gone at step {t.disappear}, start {t.state}")

truth, scans = simulate(scen, np.random.default_rng(0))

# number of targets alive per step
print("true counts:", truth.counts().tolist())

# clutter dominates: about 10 false alarms vs at most 5 detections
n = np.array([len(Z) for Z in scans])
print(f"measurements per scan: mean {n.mean():.1f}, max {n.max()}")

fig, (ax0, ax1) = plt.subplots(1, 2, figsize=(11, 4.5))
for tid in range(1, len(scen.targets) + 1):
    xy = np.array([x[[0, 2]] for k in range(1, scen.duration + 1)
                   for x, i in zip(truth.at(k), truth.ids[k - 1]) if i == tid])
    ax0.plot(xy[:, 0], xy[:, 1], label=f"target {tid}")
    ax0.plot(*xy[0], "ko", ms=3)
ax0.set_xlabel("x (m)")
ax0.set_ylabel("y (m)")
ax0.legend(fontsize=8)
ax0.set_title("ground truth")

# one scan in Cartesian coordinates
Z = scans[40]
ax1.plot(Z[:, 0] * np.cos(Z[:, 1]), Z[:, 0] * np.sin(Z[:, 1]), "x", label="scan 41")
ax1.plot(truth.at(41)[:, 0], truth.at(41)[:, 2], "o", mfc="none", label="targets")
ax1.set_xlim(0, 1000)
ax1.set_ylim(0, 1000)
ax1.legend(fontsize=8)
ax1.set_title("a single scan")
fig.tight_layout()
fig.savefig("scenario.png", dpi=100)
print("wrote scenario.png")
