"""Discrimination (C-td), overall accuracy (IBS) and calibration (KM-Cal)."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .km import km_estimate

EPS = 1e-12
N_RELIABILITY_GROUPS = 10


class UndefinedMetricError(ValueError):
    pass


def as_pmf(predictions) -> np.ndarray:
    """Stack ``Isd`` objects or pmf rows into an ``(n, T+1)`` array."""
    if isinstance(predictions, np.ndarray):
        return np.atleast_2d(predictions.astype(float, copy=False))
    return np.vstack([np.asarray(getattr(p, "pmf", p), dtype=float) for p in predictions])


def survival_curves(pmf: np.ndarray) -> np.ndarray:
    """Model curves on the Kaplan-Meier layout: ``[1, S(after bin 0), ..., S(after bin T-1)]``."""
    cif = np.cumsum(pmf, axis=1)
    return np.hstack([np.ones((pmf.shape[0], 1)), 1.0 - cif[:, :-1]])


def comparable_pairs(delta, tbin) -> np.ndarray:
    """Boolean matrix ``A[i, j] = (delta_i = 1 and t_i < t_j)``."""
    delta = np.asarray(delta)
    tbin = np.asarray(tbin)
    return (delta[:, None] == 1) & (tbin[:, None] < tbin[None, :])


def concordance_counts(risk: np.ndarray, delta, tbin, members=None, ties: str = "half",
                       partners=None) -> tuple[float, int]:
    """Credit and number of comparable pairs for a risk matrix.

    ``risk[i, k]`` is subject i's predicted risk at bin k; pair (i, j) earns
    credit 1 when ``risk[i, t_i] > risk[j, t_i]`` and 0.5 on an exact tie
    (0 under ``ties="strict"``). ``members`` restricts the earlier subject i
    and ``partners`` the later subject j (default: same as ``members``).
    """
    if ties not in ("half", "strict"):
        raise ValueError("ties must be 'half' or 'strict'")
    delta = np.asarray(delta, dtype=np.int64)
    tbin = np.asarray(tbin, dtype=np.int64)
    keep = np.ones(len(delta), bool) if members is None else _mask(members, len(delta))
    other = keep if partners is None else _mask(partners, len(delta))
    twice_credit = 0
    pairs = 0
    for k in np.unique(tbin[keep & (delta == 1)]):
        ev = np.flatnonzero(keep & (delta == 1) & (tbin == k))
        later = np.sort(risk[other & (tbin > k), k])
        if later.size == 0:
            continue
        v = risk[ev, k]
        below = np.searchsorted(later, v, side="left")
        equal = np.searchsorted(later, v, side="right") - below
        twice_credit += 2 * int(below.sum()) + (int(equal.sum()) if ties == "half" else 0)
        pairs += ev.size * later.size
    return twice_credit / 2, pairs


def _mask(members, n) -> np.ndarray:
    members = np.asarray(members)
    if members.dtype == bool:
        return members
    m = np.zeros(n, bool)
    m[members] = True
    return m


def c_td(predictions, delta, tbin, ties: str = "half") -> float:
    """Time-dependent concordance: share of comparable pairs ordered by CIF at t_i."""
    pmf = as_pmf(predictions)
    credit, pairs = concordance_counts(np.cumsum(pmf, axis=1), delta, tbin, ties=ties)
    if pairs == 0:
        raise UndefinedMetricError("C-td undefined: no comparable pairs")
    return credit / pairs


@dataclass
class BrierResult:
    ibs: float
    bs: np.ndarray
    cal: float
    res: float
    unc: float
    n_excluded: int


def _reliability_group(f: np.ndarray) -> np.ndarray:
    return np.minimum((f * N_RELIABILITY_GROUPS).astype(np.int64), N_RELIABILITY_GROUPS - 1)


def ibs(predictions, delta, tbin, censor_km: np.ndarray | None = None, weighted: bool = True) -> BrierResult:
    """Integrated Brier score over the T grid bins with its CAL - RES + UNC split.

    At bin t the prediction is the survival past t and the outcome is
    ``1{t_i > t}``. Subjects censored at or before bin t have unknown status
    and are excluded. With ``weighted=True`` known subjects are weighted by the
    inverse probability of remaining uncensored, ``1/G[t+1]`` while event-free
    and ``1/G[t_i]`` after an event (``G`` is the censoring curve from
    :func:`km_estimate`), and the weighted sum is divided by n.
    ``weighted=False`` drops the weights and averages over known subjects.
    A subject whose required G is 0 is excluded and counted in ``n_excluded``.
    """
    pmf = as_pmf(predictions)
    delta = np.asarray(delta, dtype=np.int64)
    tbin = np.asarray(tbin, dtype=np.int64)
    n, width = pmf.shape
    T = width - 1
    if weighted and censor_km is None:
        censor_km = km_estimate(tbin, delta, T, target="censoring")
    cif = np.cumsum(pmf, axis=1)
    bs = np.zeros(T)
    cal = np.zeros(T)
    res = np.zeros(T)
    unc = np.zeros(T)
    excluded = np.zeros(n, bool)
    for t in range(T):
        f = 1.0 - cif[:, t]
        alive = tbin > t
        dead = (delta == 1) & (tbin <= t)
        known = alive | dead
        o = alive.astype(float)
        if weighted:
            g = np.where(alive, censor_km[t + 1], censor_km[np.minimum(tbin, T)])
            zero = known & (g <= 0)
            excluded |= zero
            w = np.where(known & ~zero, 1.0 / np.where(g > 0, g, 1.0), 0.0)
            denom = n
        else:
            w = known.astype(float)
            denom = int(known.sum())
        if denom == 0:
            continue
        bs[t] = np.sum(w * (f - o) ** 2) / denom
        grp = _reliability_group(f)
        W_k = np.bincount(grp, weights=w, minlength=N_RELIABILITY_GROUPS)
        O_k = np.bincount(grp, weights=w * o, minlength=N_RELIABILITY_GROUPS)
        obar_k = np.divide(O_k, W_k, out=np.zeros_like(O_k), where=W_k > 0)
        W = W_k.sum()
        obar = O_k.sum() / W if W > 0 else 0.0
        ok = obar_k[grp]
        cal[t] = np.sum(w * (f - ok) * (f + ok - 2 * o)) / denom
        res[t] = np.sum(W_k * (obar_k - obar) ** 2) / denom
        unc[t] = W * obar * (1 - obar) / denom
    return BrierResult(float(bs.mean()), bs, float(cal.mean()), float(res.mean()),
                       float(unc.mean()), int(excluded.sum()))


def event_distribution(curve: np.ndarray) -> np.ndarray:
    """Bin pmf induced by a survival curve: drops per bin plus the residual mass."""
    curve = np.asarray(curve, dtype=float)
    return np.concatenate([curve[:-1] - curve[1:], curve[-1:]])


def kl_divergence(p, q, eps: float = EPS) -> float:
    p = np.clip(np.asarray(p, dtype=float), 0.0, None) + eps
    q = np.clip(np.asarray(q, dtype=float), 0.0, None) + eps
    p /= p.sum()
    q /= q.sum()
    return float(np.sum(p * np.log(p / q)))


def km_cal(predictions, delta, tbin) -> float:
    """KL divergence from the Kaplan-Meier event distribution to the mean predicted one."""
    pmf = as_pmf(predictions)
    if pmf.shape[0] == 0:
        raise UndefinedMetricError("KM-Cal needs at least one prediction")
    T = pmf.shape[1] - 1
    s_km = km_estimate(tbin, delta, T)
    s_hat = survival_curves(pmf).mean(axis=0)
    return kl_divergence(event_distribution(s_km), event_distribution(s_hat))


@dataclass
class MetricReport:
    c_td: float
    ibs: float
    ibs_cal: float
    ibs_res: float
    ibs_unc: float
    km_cal: float
    n_excluded: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate(predictions, delta, tbin, ties: str = "half", weighted: bool = True) -> MetricReport:
    pmf = as_pmf(predictions)
    b = ibs(pmf, delta, tbin, weighted=weighted)
    return MetricReport(c_td(pmf, delta, tbin, ties), b.ibs, b.cal, b.res, b.unc,
                        km_cal(pmf, delta, tbin), b.n_excluded)
