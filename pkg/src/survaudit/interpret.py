"""Permutation feature importance against held-out C-td."""
from __future__ import annotations

import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .metrics import UndefinedMetricError, c_td

log = logging.getLogger(__name__)


@dataclass
class FeatureImportance:
    feature: str
    mean_delta: float
    std: float
    deltas: list[float]


@dataclass
class ImportanceReport:
    baseline: float
    repetitions: int
    features: list[FeatureImportance]
    discarded: int = 0

    def ranking(self) -> list[str]:
        return [f.feature for f in self.features]

    def to_dict(self) -> dict:
        return {
            "baseline_c_td": self.baseline,
            "repetitions": self.repetitions,
            "discarded": self.discarded,
            "features": [
                {"feature": f.feature, "mean_delta": f.mean_delta, "std": f.std, "deltas": f.deltas}
                for f in self.features
            ],
        }


def parent_groups(parents: list[str]) -> dict[str, list[int]]:
    """Raw feature -> encoded column indices, in first-appearance order."""
    out: dict[str, list[int]] = {}
    for j, p in enumerate(parents):
        out.setdefault(p, []).append(j)
    return out


def permutation_importance(predict, X, delta, tbin, parents: list[str], reps: int = 10,
                           seed: int = 0, workers: int = 1, permute=None) -> ImportanceReport:
    """Mean drop in C-td when one raw feature is shuffled across rows.

    ``predict`` maps a feature matrix to an event-bin pmf matrix. All encoded
    columns of a raw feature (one-hot siblings) move with the same row
    permutation. Repetition r of feature f shuffles with a generator keyed by
    (seed, f, r), so serial and threaded runs agree exactly. ``permute``
    overrides how a permutation is drawn from that generator.
    """
    X = np.asarray(X, dtype=float)
    baseline = c_td(predict(X), delta, tbin)
    groups = parent_groups(parents)
    draw = permute or (lambda rng, n: rng.permutation(n))

    def task(item):
        name, r = item
        rng = np.random.default_rng([seed, zlib.crc32(name.encode()), r])
        perm = draw(rng, len(X))
        Xp = X.copy()
        cols = groups[name]
        Xp[:, cols] = X[perm][:, cols]
        try:
            return baseline - c_td(predict(Xp), delta, tbin)
        except UndefinedMetricError:
            log.warning("C-td undefined after permuting %s (rep %d); discarded", name, r)
            return None

    items = [(name, r) for name in groups for r in range(reps)]
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(task, items))
    else:
        results = [task(it) for it in items]

    feats, discarded = [], 0
    for name in groups:
        deltas = [results[i] for i, it in enumerate(items) if it[0] == name]
        kept = [d for d in deltas if d is not None]
        discarded += len(deltas) - len(kept)
        arr = np.asarray(kept, dtype=float)
        mean = float(arr.mean()) if arr.size else float("nan")
        std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        feats.append(FeatureImportance(name, mean, std, [float(d) for d in kept]))
    # stable sort keeps first-appearance order among equal scores
    feats.sort(key=lambda f: -f.mean_delta if np.isfinite(f.mean_delta) else np.inf)
    return ImportanceReport(baseline, reps, feats, discarded)
