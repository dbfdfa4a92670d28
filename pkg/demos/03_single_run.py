"""
One run, four filters
=====================

Feed one simulated run to every filter and compare their OSPA curves.  The
particle filters must guess where newborn targets are; the auxiliary filters
aim their particles at the measurements instead.
"""

import time

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from mtt import FILTERS, load_scenario, simulate
from mtt.metrics import ospa

scen = load_scenario().with_clutter(10.0)
truth, scans = simulate(scen, np.random.default_rng(1))

curves = {}
for name, cls in FILTERS.items():
    filt = cls(scen.models)
    rng = np.random.default_rng(7)
    state = filt.initial_state()
    d, counts = [], []
    t0 = time.perf_counter()
    for k, Z in enumerate(scans, 1):
        state, est = filt.step(state, Z, rng)
        d.append(ospa(truth.at(k), est).total)
        counts.append(len(est))
    curves[name] = np.array(d)
    print(f"{name:9s} mean OSPA {np.mean(d):6.2f} m, "
          f"count at step 45 {counts[44]} (truth {len(truth.at(45))}), {time.perf_counter() - t0:.1f} s")

fig, ax = plt.subplots(figsize=(7, 4))
for name, d in curves.items():
    ax.plot(np.arange(1, len(d) + 1), d, label=name, lw=1)
for t in scen.targets:
    ax.axvline(t.appear, color="0.8", lw=0.8)
ax.set_xlabel("time step")
ax.set_ylabel("OSPA (m)")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig("single_run.png", dpi=100)
print("wrote single_run.png (grey lines mark births)")
