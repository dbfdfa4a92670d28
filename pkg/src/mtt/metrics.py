"""OSPA distance between finite point sets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


@dataclass(frozen=True)
class OspaParams:
    order: float = 2.0
    cutoff: float = 150.0

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("OSPA order must be >= 1")
        if self.cutoff <= 0:
            raise ValueError("OSPA cutoff must be positive")


@dataclass(frozen=True)
class OspaResult:
    total: float
    loc: float
    card: float


def assignment_solve(cost):
    """Minimum-cost matching of the smaller side of a rectangular cost matrix.

    Returns ``(rows, cols, total_cost)``.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.size == 0:
        return np.zeros(0, int), np.zeros(0, int), 0.0
    rows, cols = linear_sum_assignment(cost)
    return rows, cols, float(cost[rows, cols].sum())


def positions(states) -> np.ndarray:
    """(x, y) columns of 5-d states; 2-d input passes through."""
    s = np.asarray(states, dtype=float)
    if s.size == 0:
        return np.zeros((0, 2))
    s = s.reshape(len(s), -1)
    return s[:, [0, 2]] if s.shape[1] == 5 else s[:, :2]


def ospa(X, Y, params: OspaParams = OspaParams()) -> OspaResult:
    X = positions(X)
    Y = positions(Y)
    p, c = params.order, params.cutoff
    m, n = len(X), len(Y)
    if m == 0 and n == 0:
        return OspaResult(0.0, 0.0, 0.0)
    if m > n:
        X, Y, m, n = Y, X, n, m
    if m:
        d = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
        _, _, loc_sum = assignment_solve(np.minimum(d, c) ** p)
    else:
        loc_sum = 0.0
    card_sum = c**p * (n - m)
    return OspaResult(
        total=float(((loc_sum + card_sum) / n) ** (1.0 / p)),
        loc=float((loc_sum / n) ** (1.0 / p)),
        card=float((card_sum / n) ** (1.0 / p)),
    )
