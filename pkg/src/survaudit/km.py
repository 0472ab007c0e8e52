"""Kaplan-Meier product-limit estimates on a discrete time grid."""
from __future__ import annotations

import numpy as np


def km_estimate(time_bin, delta, T: int, target: str = "event") -> np.ndarray:
    """Product-limit survival curve of length ``T+1``.

    ``out[0] = 1`` and ``out[k+1] = out[k] * (1 - d_k / n_k)`` where ``d_k``
    counts target events in bin ``k`` and ``n_k`` counts records with
    ``time_bin >= k``. ``target="censoring"`` flips the indicator to estimate
    the censoring survival curve. Events in a bin are counted before
    censorings in that bin, so both are at risk there.
    """
    t = np.asarray(time_bin, dtype=np.int64)
    d = np.asarray(delta, dtype=np.int64)
    if t.size == 0:
        raise ValueError("Kaplan-Meier estimate of an empty sample")
    if target == "censoring":
        d = 1 - d
    elif target != "event":
        raise ValueError(f"unknown target {target!r}")
    if np.any(t < 0) or np.any(t >= T):
        raise ValueError("time bins must lie in [0, T)")
    events = np.bincount(t[d == 1], minlength=T)[:T]
    at_risk = at_risk_counts(t, T)
    # exact rational running product, rounded once per bin
    out = np.empty(T + 1)
    out[0] = 1.0
    num, den = 1, 1
    for k in range(T):
        n_k, d_k = int(at_risk[k]), int(events[k])
        if n_k > 0:
            num *= n_k - d_k
            den *= n_k
        out[k + 1] = num / den
    return out


def at_risk_counts(time_bin, T: int) -> np.ndarray:
    t = np.asarray(time_bin, dtype=np.int64)
    exits = np.bincount(t, minlength=T)[:T]
    return t.size - np.concatenate([[0], np.cumsum(exits)[:-1]])
