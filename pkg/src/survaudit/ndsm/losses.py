"""Discrete-time survival objectives with hand-derived gradients.

Networks emit ``T+1`` logits: one per grid interval plus a beyond-horizon bin.
Batch losses return ``(value, d value / d logits)``. Per-sample helpers
(``loss_nll`` and friends) take a single pmf or logit vector.
"""
from __future__ import annotations

import numpy as np

EPS = 1e-12
OBJECTIVES = ("nll", "deephit", "nmtlr", "rps", "rpsrank")


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def logsumexp(z: np.ndarray, axis=-1) -> np.ndarray:
    m = np.max(z, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis=axis) + np.log(np.sum(np.exp(z - m), axis=axis))


def suffix_sum(z: np.ndarray) -> np.ndarray:
    return np.cumsum(z[..., ::-1], axis=-1)[..., ::-1]


def pmf_from_logits(logits: np.ndarray, objective: str = "nll") -> np.ndarray:
    """Event-bin pmf. N-MTLR scores bin k by the sum of logits from k onwards."""
    if objective == "nmtlr":
        return softmax(suffix_sum(logits))
    return softmax(logits)


def _softmax_backward(p: np.ndarray, g_p: np.ndarray) -> np.ndarray:
    return p * (g_p - np.sum(g_p * p, axis=-1, keepdims=True))


def _cif_backward(g_cif: np.ndarray) -> np.ndarray:
    # cif[k] = sum_{i<=k} pmf[i]  =>  dL/dpmf[i] = sum_{k>=i} dL/dcif[k]
    return suffix_sum(g_cif)


# ---- per-sample losses ---------------------------------------------------

def loss_nll(pmf, delta: int, time_bin: int) -> float:
    p = np.asarray(pmf, dtype=float)
    mass = p[time_bin] if delta else p[time_bin + 1:].sum()
    # the EPS floor and rounding can push the log a hair above 0
    return max(0.0, float(-np.log(mass + EPS)))


def loss_rps(pmf, delta: int, time_bin: int) -> float:
    p = np.asarray(pmf, dtype=float)
    cif = np.cumsum(p)
    T = p.size - 1
    if delta:
        y = (np.arange(T) >= time_bin).astype(float)
        return float(np.sum((cif[:T] - y) ** 2))
    return float(np.sum(cif[:time_bin + 1] ** 2))


def loss_mtlr(logits, delta: int, time_bin: int) -> float:
    s = suffix_sum(np.asarray(logits, dtype=float))
    log_z = logsumexp(s)
    value = log_z - (s[time_bin] if delta else logsumexp(s[time_bin + 1:]))
    return max(0.0, float(value))


def loss_rank(pmf, delta, time_bin, sigma: float = 0.1) -> float:
    value, _ = rank_batch(np.atleast_2d(pmf), np.asarray(delta), np.asarray(time_bin), sigma)
    return value


# ---- batch losses with gradients -----------------------------------------

def nll_batch(p, delta, tbin):
    n, width = p.shape
    cols = np.arange(width)[None, :]
    tail = cols > tbin[:, None]
    at = cols == tbin[:, None]
    mass = np.where(delta[:, None] == 1, at, tail).astype(float)
    s = np.sum(p * mass, axis=1) + EPS
    value = float(np.mean(-np.log(s)))
    g_p = -mass / s[:, None] / n
    return value, g_p


def rps_targets(delta, tbin, T: int, censor_km=None) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin weights and 0/1 targets for the RPS sum over the T grid bins.

    Without ``censor_km`` an event row counts every bin and a censored row
    counts bins up to and including its censoring bin. With the censoring
    Kaplan-Meier curve ``censor_km`` (length T+1, ``G[k] = P(C >= k)``), bin k
    is weighted by the inverse probability of still being observed:
    ``1/G[k]`` while known event-free, ``1/G[t_i]`` after an event, and 0
    after censoring.
    """
    delta = np.asarray(delta, dtype=np.int64)
    tbin = np.asarray(tbin, dtype=np.int64)
    k = np.arange(T)[None, :]
    t = tbin[:, None]
    event = delta[:, None] == 1
    target = (event & (k >= t)).astype(float)
    if censor_km is None:
        weight = np.where(event, 1.0, (k <= t).astype(float))
        return weight, target
    g = np.asarray(censor_km, dtype=float)
    # a row censored in bin t is known event-free through the end of bin t
    alive = (k < t) | (~event & (k == t))
    inv = np.divide(1.0, g, out=np.zeros_like(g), where=g > 0)
    weight = np.where(alive, inv[:T][None, :], np.where(event & (k >= t), inv[tbin][:, None], 0.0))
    return weight, target


def rps_batch(p, delta, tbin, weight=None, target=None):
    n, width = p.shape
    T = width - 1
    if weight is None:
        weight, target = rps_targets(delta, tbin, T)
    cif = np.cumsum(p, axis=1)
    resid = cif[:, :T] - target
    value = float(np.sum(weight * resid ** 2) / n)
    g_cif = np.zeros_like(p)
    g_cif[:, :T] = 2.0 * weight * resid / n
    return value, _cif_backward(g_cif)


def rank_batch(p, delta, tbin, sigma: float = 0.1):
    """Mean of exp(-(F_i(t_i) - F_j(t_i)) / sigma) over comparable pairs."""
    n = p.shape[0]
    cif = np.cumsum(p, axis=1)
    comparable = (delta[:, None] == 1) & (tbin[:, None] < tbin[None, :])
    n_pairs = int(comparable.sum())
    g_cif = np.zeros_like(p)
    if n_pairs == 0:
        return 0.0, g_cif
    f_self = cif[np.arange(n), tbin]              # F_i(t_i)
    f_other = cif[:, tbin].T                      # [i, j] -> F_j(t_i)
    term = np.where(comparable, np.exp(-(f_self[:, None] - f_other) / sigma), 0.0)
    value = float(term.sum() / n_pairs)
    g_diff = -term / (sigma * n_pairs)
    np.add.at(g_cif, (np.arange(n), tbin), g_diff.sum(axis=1))
    # F_j(t_i) enters with a minus sign, accumulated at column t_i of row j
    rows = np.repeat(np.arange(n)[None, :], n, axis=0)
    cols = np.repeat(tbin[:, None], n, axis=1)
    np.add.at(g_cif, (rows[comparable], cols[comparable]), -g_diff[comparable])
    return value, _cif_backward(g_cif)


def mtlr_batch(logits, delta, tbin):
    n, width = logits.shape
    s = suffix_sum(logits)
    cols = np.arange(width)[None, :]
    log_z = logsumexp(s)
    p = softmax(s)
    tail = cols > tbin[:, None]
    masked = np.where(tail, s, -np.inf)
    log_tail = logsumexp(masked)
    s_at = s[np.arange(n), tbin]
    event = delta == 1
    per = np.where(event, log_z - s_at, log_z - log_tail)
    value = float(np.mean(per))
    onehot = (cols == tbin[:, None]).astype(float)
    tail_p = np.where(tail, np.exp(masked - log_tail[:, None]), 0.0)
    g_s = (p - np.where(event[:, None], onehot, tail_p)) / n
    # s_k = sum_{j>=k} z_j  =>  dL/dz_j = sum_{k<=j} dL/ds_k
    return value, np.cumsum(g_s, axis=1)


def objective_loss(logits: np.ndarray, delta: np.ndarray, tbin: np.ndarray, objective: str,
                   sigma: float = 0.1, rank_weight: float = 1.0,
                   rps_weight: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Batch loss and its gradient with respect to the logits.

    ``rps_weight`` optionally supplies per-row RPS bin weights (see
    :func:`rps_targets`); by default the truncated censored form is used.
    """
    delta = np.asarray(delta, dtype=np.int64)
    tbin = np.asarray(tbin, dtype=np.int64)
    if objective == "nmtlr":
        return mtlr_batch(logits, delta, tbin)
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    p = softmax(logits)
    if objective in ("nll", "deephit"):
        value, g_p = nll_batch(p, delta, tbin)
    else:
        target = None
        if rps_weight is not None:
            target = ((delta[:, None] == 1) & (np.arange(p.shape[1] - 1)[None, :] >= tbin[:, None])).astype(float)
        value, g_p = rps_batch(p, delta, tbin, rps_weight, target)
    if objective in ("deephit", "rpsrank"):
        r_value, r_g = rank_batch(p, delta, tbin, sigma)
        value += rank_weight * r_value
        g_p = g_p + rank_weight * r_g
    return value, _softmax_backward(p, g_p)
