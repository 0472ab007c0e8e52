"""Central finite-difference check of the analytic gradients."""
from __future__ import annotations

import numpy as np

from .losses import objective_loss
from .network import SurvivalNet


def _loss(model: SurvivalNet, X, delta, tbin, sigma, rank_weight, rps_weight) -> float:
    logits, _ = model.forward(X)
    return objective_loss(logits, delta, tbin, model.objective, sigma, rank_weight, rps_weight)[0]


def grad_check(model: SurvivalNet, X, delta, tbin, h: float = 1e-4, sigma: float = 0.1,
               rank_weight: float = 1.0, floor: float = 1e-6, rps_weight=None) -> float:
    """Max relative error between analytic and central-difference gradients.

    Uses the five-point central stencil, whose O(h^4) truncation keeps the
    estimate accurate while ``h`` stays small enough not to straddle a ReLU
    kink. The relative error of each parameter is
    ``|a - n| / max(|a| + |n|, floor)``; the floor sits above round-off and
    covers parameters whose true gradient is exactly zero.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    delta = np.asarray(delta, dtype=np.int64)
    tbin = np.asarray(tbin, dtype=np.int64)
    logits, cache = model.forward(X)
    _, g_logits = objective_loss(logits, delta, tbin, model.objective, sigma, rank_weight,
                                 rps_weight)
    analytic = model.backward(cache, g_logits)
    worst = 0.0
    for p, g in zip(model.params, analytic):
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            v = []
            for step in (2 * h, h, -h, -2 * h):
                flat[i] = keep + step
                v.append(_loss(model, X, delta, tbin, sigma, rank_weight, rps_weight))
            flat[i] = keep
            num = (8 * (v[1] - v[2]) - (v[0] - v[3])) / (12 * h)
            err = abs(gflat[i] - num) / max(abs(gflat[i]) + abs(num), floor)
            worst = max(worst, err)
    return worst
