"""Subgroup fairness: concordance impurity, bootstrapped KM-Fair, Hosmer-Lemeshow."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .km import at_risk_counts, km_estimate
from .metrics import UndefinedMetricError, as_pmf, concordance_counts, km_cal


def partition(labels) -> dict[str, np.ndarray]:
    """Group label -> record indices. Empty labels are treated as missing."""
    labels = np.asarray(labels, dtype=object)
    out = {}
    for g in sorted({str(v) for v in labels if v is not None and str(v) != ""}):
        out[g] = np.flatnonzero(labels.astype(str) == g)
    return out


def concordance_fraction(predictions, delta, tbin, group_indices, ties: str = "half",
                         cross_group: bool = False) -> float:
    """C-td restricted to one subgroup, ordering pairs by predicted survival at t_i.

    A comparable pair (i, j) is concordant when S(t_i | x_i) < S(t_i | x_j).
    Both members must belong to the group unless ``cross_group`` lets the
    later subject come from anywhere.
    """
    pmf = as_pmf(predictions)
    surv = 1.0 - np.cumsum(pmf, axis=1)
    partners = np.ones(len(pmf), bool) if cross_group else None
    credit, pairs = concordance_counts(-surv, delta, tbin, members=group_indices, ties=ties,
                                       partners=partners)
    if pairs == 0:
        raise UndefinedMetricError("no comparable pair inside the group")
    return credit / pairs


@dataclass
class ImpurityResult:
    attribute: str
    fractions: dict[str, float]
    skipped: list[str]
    value: float

    @property
    def reported(self) -> float:
        return 100.0 * self.value

    def to_dict(self) -> dict:
        return {"attribute": self.attribute, "fractions": self.fractions,
                "skipped": self.skipped, "ci_td": self.value, "ci_td_x100": self.reported}


def ci_td(predictions, delta, tbin, labels, attribute: str = "", ties: str = "half",
          cross_group: bool = False) -> ImpurityResult:
    """Largest gap between subgroup concordance fractions (max CF - min CF)."""
    pmf = as_pmf(predictions)
    fractions, skipped = {}, []
    for g, idx in partition(labels).items():
        try:
            fractions[g] = concordance_fraction(pmf, delta, tbin, idx, ties, cross_group)
        except UndefinedMetricError:
            skipped.append(g)
    if len(fractions) < 2:
        raise UndefinedMetricError(f"CI-td needs two groups with comparable pairs ({attribute})")
    vals = list(fractions.values())
    return ImpurityResult(attribute, fractions, skipped, max(vals) - min(vals))


def _stream(seed: int, label: str, b: int, attempt: int = 0):
    return np.random.default_rng([seed, zlib.crc32(label.encode()), b, attempt])


def bootstrap_km_cal(pmf, delta, tbin, idx, label: str, B: int = 1000, seed: int = 0,
                     mode: str = "bootstrap", frac: float = 0.5, max_redraw: int = 10):
    """B KM-Cal scores of one group over resamples of its records.

    Resample b draws from a generator keyed by (seed, label, b), so the vector
    does not depend on execution order. Predictions and labels are resampled
    jointly per record. ``mode="subsample"`` draws ``frac`` of the group
    without replacement instead of a full-size bootstrap.
    """
    idx = np.asarray(idx)
    n = idx.size
    if n < 2:
        raise UndefinedMetricError(f"group {label!r} has fewer than 2 members")
    out = np.empty(B)
    redrawn = 0
    for b in range(B):
        for attempt in range(max_redraw):
            rng = _stream(seed, label, b, attempt)
            if mode == "bootstrap":
                r = idx[rng.integers(0, n, n)]
            elif mode == "subsample":
                r = idx[rng.choice(n, max(2, int(round(frac * n))), replace=False)]
            else:
                raise ValueError(f"unknown resampling mode {mode!r}")
            k = km_cal(pmf[r], delta[r], tbin[r])
            if np.isfinite(k):
                break
            redrawn += 1
        else:
            raise UndefinedMetricError(f"group {label!r}: resample {b} stayed degenerate")
        out[b] = k
    return out, redrawn


def km_fair_decision(k_diff, alpha: float = 0.05) -> tuple[int, float, float]:
    """-1 when the CI of K_i - K_j lies below 0, +1 above 0, else 0."""
    a, b = np.percentile(k_diff, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    decision = -1 if b < 0 else (1 if a > 0 else 0)
    return decision, float(a), float(b)


@dataclass
class KmFairResult:
    attribute: str
    groups: list[str]
    decision: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    mean_diff: np.ndarray
    B: int
    scores: dict[str, np.ndarray] = field(repr=False, default_factory=dict)
    redrawn: int = 0

    def to_dict(self) -> dict:
        return {
            "attribute": self.attribute, "groups": self.groups, "B": self.B,
            "decision": self.decision.tolist(), "lower": self.lower.tolist(),
            "upper": self.upper.tolist(), "mean_diff": self.mean_diff.tolist(),
            "mean_km_cal": {g: float(v.mean()) for g, v in self.scores.items()},
            "redrawn": self.redrawn,
        }


def km_fair(predictions, delta, tbin, labels, B: int = 1000, alpha: float = 0.05, seed: int = 0,
            attribute: str = "", mode: str = "bootstrap", paired: bool = True) -> KmFairResult:
    """Pairwise KM-Fair decisions between the groups of one attribute.

    Cell (i, j) compares group i (row) with group j (column) through the
    percentile interval of K_i - K_j. A negative decision means the model is
    better calibrated for the row group.
    """
    pmf = as_pmf(predictions)
    delta = np.asarray(delta, dtype=np.int64)
    tbin = np.asarray(tbin, dtype=np.int64)
    parts = partition(labels)
    groups = list(parts)
    scores, redrawn = {}, 0
    for g in groups:
        scores[g], r = bootstrap_km_cal(pmf, delta, tbin, parts[g], g, B, seed, mode)
        redrawn += r
    m = len(groups)
    decision = np.zeros((m, m), dtype=np.int64)
    lower, upper, mean = (np.zeros((m, m)) for _ in range(3))
    for i in range(m):
        for j in range(i + 1, m):
            other = scores[groups[j]]
            if not paired:
                other = other[np.random.default_rng([seed, i, j]).permutation(B)]
            diff = scores[groups[i]] - other
            d, a, b = km_fair_decision(diff, alpha)
            decision[i, j], decision[j, i] = d, -d
            lower[i, j], upper[i, j] = a, b
            lower[j, i], upper[j, i] = -b, -a
            mean[i, j] = float(diff.mean())
            mean[j, i] = -mean[i, j]
    return KmFairResult(attribute, groups, decision, lower, upper, mean, B, scores, redrawn)


def hl_statistic(km_surv, p, n_at_risk) -> tuple[float, list[int]]:
    """Sum of (KM - p)^2 n / (p (1 - p)) over bins with 0 < p < 1."""
    km_surv, p, n_at_risk = (np.asarray(a, dtype=float) for a in (km_surv, p, n_at_risk))
    ok = (p > 0) & (p < 1)
    skipped = [int(i) for i in np.flatnonzero(~ok)]
    if not ok.any():
        raise UndefinedMetricError("every bin has a predicted probability of 0 or 1")
    terms = (km_surv[ok] - p[ok]) ** 2 * n_at_risk[ok] / (p[ok] * (1 - p[ok]))
    return float(terms.sum()), skipped


def hosmer_lemeshow(predictions, delta, tbin, group_indices) -> tuple[float, list[int]]:
    """Group goodness of fit between Kaplan-Meier and mean predicted survival.

    Evaluated after each grid bin k: KM survival past k, mean predicted
    survival past k, and the number at risk entering k.
    """
    pmf = as_pmf(predictions)
    idx = np.asarray(group_indices)
    if idx.dtype == bool:
        idx = np.flatnonzero(idx)
    if idx.size == 0:
        raise UndefinedMetricError("empty group")
    T = pmf.shape[1] - 1
    d = np.asarray(delta)[idx]
    t = np.asarray(tbin)[idx]
    km = km_estimate(t, d, T)[1:]
    p = (1.0 - np.cumsum(pmf[idx], axis=1))[:, :T].mean(axis=0)
    return hl_statistic(km, p, at_risk_counts(t, T))
