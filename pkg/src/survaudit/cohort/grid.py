"""Discrete time grid: continuous follow-up times to interval indices."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """T intervals bounded by T+1 strictly increasing cut points (months).

    Interval k covers ``[cut_points[k], cut_points[k+1])``. Times at or past the
    last boundary fall into interval T-1, so ``bin_of`` is total on ``[0, inf)``.
    """

    cut_points: tuple[float, ...]

    def __post_init__(self):
        cuts = np.asarray(self.cut_points, dtype=float)
        if cuts.ndim != 1 or cuts.size < 2:
            raise GridError("a time grid needs at least two cut points")
        if cuts[0] != 0.0:
            raise GridError("first cut point must be 0")
        if not np.all(np.diff(cuts) > 0):
            raise GridError("cut points must be strictly increasing")
        object.__setattr__(self, "cut_points", tuple(float(c) for c in cuts))

    @property
    def T(self) -> int:
        return len(self.cut_points) - 1

    def bin_of(self, t):
        """Interval index for a scalar or array of times (vectorised)."""
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0) or not np.all(np.isfinite(t_arr)):
            raise GridError("times must be finite and >= 0")
        inner = np.asarray(self.cut_points[1:-1])
        out = np.searchsorted(inner, t_arr, side="right")
        if out.ndim == 0:
            return int(out)
        return out.astype(np.int64)

    def to_dict(self) -> dict:
        return {"cut_points": list(self.cut_points), "T": self.T}

    @classmethod
    def from_dict(cls, d: dict) -> "TimeGrid":
        return cls(tuple(d["cut_points"]))

    @classmethod
    def equal_width(cls, horizon: float, T: int) -> "TimeGrid":
        return cls(tuple(np.linspace(0.0, float(horizon), T + 1)))


def fit_time_grid(times: Sequence[float], T: int = 10, scheme: str = "quantile") -> TimeGrid:
    """Fit a grid of ``T`` intervals to observed follow-up times.

    ``scheme="quantile"`` places cuts at equal-frequency order statistics so each
    interval holds ``floor(n/T)`` or ``ceil(n/T)`` records when times are
    distinct. Coinciding cuts are merged, then the widest interval is split at
    its midpoint until ``T`` intervals exist. ``scheme="equal_width"`` splits
    ``[0, max]`` evenly.
    """
    if T < 1:
        raise GridError("T must be >= 1")
    t = np.sort(np.asarray(times, dtype=float))
    if t.size == 0:
        raise GridError("no observed times")
    if np.any(t < 0):
        raise GridError("times must be >= 0")
    top = float(t[-1])
    if T == 1:
        return TimeGrid((0.0, top if top > 0 else 1.0))
    n_distinct = np.unique(t).size
    if n_distinct < T:
        raise GridError(
            f"only {n_distinct} distinct times for T={T} intervals; lower T"
        )
    if scheme == "equal_width":
        return TimeGrid.equal_width(top, T)
    if scheme != "quantile":
        raise GridError(f"unknown binning scheme {scheme!r}")

    n = t.size
    inner = [float(t[(n * k) // T]) for k in range(1, T)]
    cuts = sorted({0.0, *inner, top})
    while len(cuts) < T + 1:
        widths = np.diff(cuts)
        k = int(np.argmax(widths))
        cuts.insert(k + 1, 0.5 * (cuts[k] + cuts[k + 1]))
    return TimeGrid(tuple(cuts))
