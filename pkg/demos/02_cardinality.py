"""
Cardinality bookkeeping
=======================

The cardinalized filters carry a full distribution over the number of
targets.  Its update needs elementary symmetric functions of the
per-measurement likelihood ratios, which overflow quickly unless scaled.
"""

import numpy as np

from mtt.cardinality import (
    UpsilonInputs,
    delta,
    esf,
    mean_cardinality,
    poisson_pmf,
    predict_cardinality,
    update_cardinality,
)

# ESFs of [1, 2, 3]: 1, 1+2+3, 1*2+1*3+2*3, 1*2*3
print("esf([1, 2, 3]) =", esf([1.0, 2.0, 3.0]).unscaled())

# 300 values of 1e5: the largest coefficient is far beyond float range,
# but the scaled form keeps its logarithm
e = esf(np.full(300, 1e5))
print("log sigma_150 of 300 x 1e5 =", round(float(e.log()[150]), 2))

# prediction: two known targets, survival 0.99, Poisson(0.05) births
p = predict_cardinality(delta(2, 20), 0.99, poisson_pmf(0.05, 20))
print("predicted p(n), n = 0..4:", np.round(p[:5], 5))

# update with two strong detections and one weak one, clutter rate 10.
# linfuncs are D[p_D L_z] / c(z): how much better a target explains z than clutter
for lin in ([400.0, 350.0, 0.2], [400.0, 350.0, 300.0], []):
    post = update_cardinality(p, UpsilonInputs.poisson(lin, 2.03, 0.05, 10.0, p))
    print(f"linfuncs {lin}: mean count {mean_cardinality(post):.3f}, mode {post.argmax()}")
