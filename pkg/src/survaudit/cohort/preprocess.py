"""Imputation, min-max scaling and one-hot encoding.

Every statistic is fitted on the training split and replayed unchanged on the
validation and test splits.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

log = logging.getLogger(__name__)


def _mode(values: pd.Series):
    observed = values.dropna()
    if observed.empty:
        return None
    counts = observed.value_counts(sort=False)
    best = counts.max()
    # first-seen order breaks ties
    for v in observed:
        if counts[v] == best:
            return v


def impute(table: pd.DataFrame, kinds: dict[str, str], missing_threshold: float = 0.30,
           stats: dict | None = None) -> tuple[pd.DataFrame, dict]:
    """Drop sparse columns, then fill gaps with the mean (continuous) or mode.

    Columns missing strictly more than ``missing_threshold`` of their values are
    dropped, as are columns with no observed value at all. Returns the imputed
    frame and the statistics used, which can be passed back in as ``stats`` to
    impute another split identically.
    """
    out = table.copy()
    if stats is None:
        stats = {"dropped": [], "fill": {}, "warnings": []}
        for name, kind in kinds.items():
            col = out[name]
            frac = float(col.isna().mean()) if len(col) else 1.0
            if col.notna().sum() == 0:
                stats["dropped"].append(name)
                stats["warnings"].append(f"{name}: no observed values, dropped")
                continue
            if frac > missing_threshold:
                stats["dropped"].append(name)
                continue
            if kind == "continuous":
                stats["fill"][name] = float(pd.to_numeric(col).mean())
            else:
                stats["fill"][name] = _mode(col)
    for w in stats["warnings"]:
        log.warning(w)
    out = out.drop(columns=[c for c in stats["dropped"] if c in out.columns])
    for name, value in stats["fill"].items():
        if kinds[name] == "continuous":
            out[name] = pd.to_numeric(out[name]).fillna(value).astype(float)
        else:
            out[name] = out[name].where(out[name].notna(), value)
    return out, stats


def normalize_minmax(column, bounds: tuple[float, float] | None = None):
    """Scale to [0, 1] with ``(x - min) / (max - min)``.

    With ``bounds`` taken from the training split, values outside the training
    range are clipped. A constant training column maps to zeros.
    """
    x = np.asarray(column, dtype=float)
    if bounds is None:
        bounds = (float(np.min(x)), float(np.max(x)))
        clip = False
    else:
        clip = True
    lo, hi = bounds
    if hi <= lo:
        return np.zeros_like(x), (lo, hi)
    z = (x - lo) / (hi - lo)
    if clip:
        z = np.clip(z, 0.0, 1.0)
    return z, (lo, hi)


def one_hot(column, levels: list[str] | None = None) -> tuple[np.ndarray, list[str], list[str]]:
    """Encode a categorical column.

    More than two levels gives one indicator column per level; one or two
    levels give a single 0/1 column flagging the second (sorted) level. Values
    not among ``levels`` encode as all zeros and are reported as warnings.
    """
    values = [str(v) for v in column]
    if levels is None:
        levels = sorted(set(values))
    index = {lv: i for i, lv in enumerate(levels)}
    unseen = sorted({v for v in values if v not in index})
    warnings = [f"unseen category {v!r}" for v in unseen]
    if len(levels) <= 2:
        one = levels[1] if len(levels) == 2 else None
        return np.array([[1.0 if v == one else 0.0] for v in values]).reshape(-1, 1), levels, warnings
    out = np.zeros((len(values), len(levels)))
    for r, v in enumerate(values):
        k = index.get(v)
        if k is not None:
            out[r, k] = 1.0
    return out, levels, warnings


@dataclass
class Preprocessor:
    """Fitted feature pipeline: impute -> min-max -> one-hot."""

    kinds: dict[str, str]
    missing_threshold: float = 0.30
    impute_stats: dict = field(default_factory=dict)
    bounds: dict[str, tuple[float, float]] = field(default_factory=dict)
    levels: dict[str, list[str]] = field(default_factory=dict)
    columns: list[str] = field(default_factory=list)
    parents: list[str] = field(default_factory=list)

    def fit(self, table: pd.DataFrame) -> "Preprocessor":
        imputed, self.impute_stats = impute(table[list(self.kinds)], self.kinds, self.missing_threshold)
        self.bounds, self.levels, self.columns, self.parents = {}, {}, [], []
        for name in imputed.columns:
            if self.kinds[name] == "continuous":
                _, self.bounds[name] = normalize_minmax(imputed[name])
                self.columns.append(name)
                self.parents.append(name)
            else:
                _, lv, _ = one_hot(imputed[name])
                self.levels[name] = lv
                if len(lv) <= 2:
                    self.columns.append(name)
                    self.parents.append(name)
                else:
                    self.columns.extend(f"{name}={v}" for v in lv)
                    self.parents.extend(name for _ in lv)
        return self

    def transform(self, table: pd.DataFrame) -> tuple[np.ndarray, list[str]]:
        imputed, _ = impute(table[list(self.kinds)], self.kinds, stats=self.impute_stats)
        blocks, warnings = [], []
        for name in imputed.columns:
            if self.kinds[name] == "continuous":
                z, _ = normalize_minmax(imputed[name], self.bounds[name])
                blocks.append(z.reshape(-1, 1))
            else:
                m, _, w = one_hot(imputed[name], self.levels[name])
                blocks.append(m)
                warnings.extend(f"{name}: {x}" for x in w)
        for w in warnings:
            log.warning(w)
        X = np.hstack(blocks) if blocks else np.zeros((len(table), 0))
        return X, warnings

    def manifest(self) -> dict:
        return {
            "missing_threshold": self.missing_threshold,
            "dropped": list(self.impute_stats.get("dropped", [])),
            "fill": self.impute_stats.get("fill", {}),
            "minmax": {k: list(v) for k, v in self.bounds.items()},
            "levels": self.levels,
            "columns": self.columns,
            "parents": self.parents,
        }
