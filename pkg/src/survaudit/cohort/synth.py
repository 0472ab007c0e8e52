"""Synthetic censored cohorts from a discrete-time logistic hazard.

Each subject gets baseline covariates ``x`` and sensitive-attribute labels
``g``. The per-interval event hazard is

    h_k(x) = sigmoid(b_k + beta . x + gamma_g)

and censoring is an independent per-interval hazard. Visits are emitted once
per interval up to the observed one, so label construction recovers the
sampled ``(delta, time)`` pair exactly.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .grid import TimeGrid
from .schema import NEGATIVE, POSITIVE, FeatureSpec, TableSchema


class ConfigError(ValueError):
    pass


@dataclass
class FeatureGen:
    name: str
    kind: str = "continuous"
    coef: float = 0.0                      # continuous effect on the hazard logit
    levels: list[str] = field(default_factory=list)
    probs: list[float] = field(default_factory=list)
    level_coefs: list[float] = field(default_factory=list)
    missing: float = 0.0


@dataclass
class AttributeGen:
    name: str
    levels: list[str]
    prevalence: list[float]
    effects: list[float] = field(default_factory=list)   # gamma per level
    as_feature: bool = True
    proxy_of: str | None = None           # continuous feature the label leans on
    proxy_strength: float = 0.0


@dataclass
class CohortConfig:
    n_subjects: int = 1000
    n_intervals: int = 10
    horizon: float = 120.0
    baseline_logit: list[float] | float = -2.5
    features: list[FeatureGen] = field(default_factory=list)
    attributes: list[AttributeGen] = field(default_factory=list)
    censor_hazard: list[float] | float = 0.05
    flip_rate: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.features = [f if isinstance(f, FeatureGen) else FeatureGen(**f) for f in self.features]
        self.attributes = [a if isinstance(a, AttributeGen) else AttributeGen(**a) for a in self.attributes]
        self.validate()

    def baseline(self) -> np.ndarray:
        return _per_interval(self.baseline_logit, self.n_intervals, "baseline_logit")

    def censoring(self) -> np.ndarray:
        return _per_interval(self.censor_hazard, self.n_intervals, "censor_hazard")

    def validate(self):
        if self.n_subjects < 1 or self.n_intervals < 1 or self.horizon <= 0:
            raise ConfigError("n_subjects, n_intervals and horizon must be positive")
        c = self.censoring()
        if np.any((c < 0) | (c > 1)):
            raise ConfigError("censor_hazard must lie in [0, 1]")
        self.baseline()
        names = set()
        for f in self.features:
            if f.name in names:
                raise ConfigError(f"duplicate feature {f.name}")
            names.add(f.name)
            if f.kind == "categorical":
                _check_probs(f.probs, f.levels, f.name)
                if f.level_coefs and len(f.level_coefs) != len(f.levels):
                    raise ConfigError(f"{f.name}: level_coefs length mismatch")
            elif f.kind != "continuous":
                raise ConfigError(f"{f.name}: unknown kind {f.kind}")
            if not 0 <= f.missing < 1:
                raise ConfigError(f"{f.name}: missing rate must be in [0, 1)")
        for a in self.attributes:
            if a.name in names:
                raise ConfigError(f"duplicate column {a.name}")
            names.add(a.name)
            _check_probs(a.prevalence, a.levels, a.name)
            if a.effects and len(a.effects) != len(a.levels):
                raise ConfigError(f"{a.name}: effects length mismatch")
            if a.proxy_of is not None and a.proxy_of not in {
                f.name for f in self.features if f.kind == "continuous"
            }:
                raise ConfigError(f"{a.name}: proxy_of must name a continuous feature")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CohortConfig":
        return cls(**d)

    @classmethod
    def load(cls, path) -> "CohortConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _per_interval(v, n, what) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim == 0:
        arr = np.full(n, float(arr))
    if arr.shape != (n,):
        raise ConfigError(f"{what} needs {n} values, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{what} must be finite")
    return arr


def _check_probs(p, levels, name):
    if len(p) != len(levels) or len(levels) < 1:
        raise ConfigError(f"{name}: need one probability per level")
    if np.any(np.asarray(p) < 0) or abs(sum(p) - 1.0) > 1e-9:
        raise ConfigError(f"{name}: probabilities must be >= 0 and sum to 1")


@dataclass
class CohortTruth:
    """Generator ground truth, one row per subject."""

    subject_id: np.ndarray
    hazards: np.ndarray          # (n, K) event hazard per interval
    event_interval: np.ndarray   # K means no event within the horizon
    censor_interval: np.ndarray  # K means never censored
    delta: np.ndarray
    obs_interval: np.ndarray
    time_raw: np.ndarray
    groups: dict[str, np.ndarray]
    grid: TimeGrid

    def oracle_pmf(self) -> np.ndarray:
        """True event-interval distribution (K+1 bins, last = beyond horizon)."""
        return hazards_to_pmf(self.hazards)

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({
            "subject_id": self.subject_id,
            "event_interval": self.event_interval,
            "censor_interval": self.censor_interval,
            "delta": self.delta,
            "obs_interval": self.obs_interval,
            "time_raw": self.time_raw,
        })
        for a, v in self.groups.items():
            df[f"group.{a}"] = v
        for k in range(self.hazards.shape[1]):
            df[f"h{k}"] = self.hazards[:, k]
        return df


def hazards_to_pmf(h: np.ndarray) -> np.ndarray:
    h = np.atleast_2d(h)
    surv = np.cumprod(1.0 - h, axis=1)
    before = np.hstack([np.ones((h.shape[0], 1)), surv[:, :-1]])
    return np.hstack([h * before, surv[:, -1:]])


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z))


def generate_cohort(cfg: CohortConfig) -> tuple[pd.DataFrame, TableSchema, CohortTruth]:
    """Sample a raw visit table, its schema and the ground truth.

    All random draws happen in a fixed order from one seeded generator, so the
    output depends only on ``cfg``.
    """
    cfg.validate()
    n, K = cfg.n_subjects, cfg.n_intervals
    rng = np.random.default_rng(cfg.seed)
    width = cfg.horizon / K

    eta = np.zeros(n)
    raw: dict[str, np.ndarray] = {}
    for f in cfg.features:
        if f.kind == "continuous":
            x = rng.standard_normal(n)
            eta += f.coef * x
            raw[f.name] = x
        else:
            idx = rng.choice(len(f.levels), size=n, p=f.probs)
            if f.level_coefs:
                eta += np.asarray(f.level_coefs)[idx]
            raw[f.name] = np.asarray(f.levels, dtype=object)[idx]

    groups: dict[str, np.ndarray] = {}
    for a in cfg.attributes:
        k = len(a.levels)
        logits = np.log(np.maximum(np.asarray(a.prevalence, dtype=float), 1e-300))
        logits = np.broadcast_to(logits, (n, k)).copy()
        if a.proxy_of is not None and k > 1:
            logits += a.proxy_strength * np.outer(raw[a.proxy_of], np.arange(k) / (k - 1))
        p = np.exp(logits - logits.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        u = rng.random(n)
        idx = np.minimum((u[:, None] > np.cumsum(p, axis=1)).sum(axis=1), k - 1)
        if a.effects:
            eta += np.asarray(a.effects)[idx]
        groups[a.name] = np.asarray(a.levels, dtype=object)[idx]

    with np.errstate(over="ignore"):
        hazards = _sigmoid(cfg.baseline()[None, :] + eta[:, None])
    if not np.all(np.isfinite(hazards)) or np.any(hazards <= 0) or np.any(hazards >= 1):
        raise ConfigError("hazard coefficients push h outside (0, 1); shrink them")

    ev_draw = rng.random((n, K)) < hazards
    ce_draw = rng.random((n, K)) < cfg.censoring()[None, :]
    jitter = rng.uniform(0.05, 0.95, size=(n, K))
    flips = rng.random((n, K)) < cfg.flip_rate
    miss = {f.name: rng.random(n) < f.missing for f in cfg.features}

    e = np.where(ev_draw.any(axis=1), ev_draw.argmax(axis=1), K)
    c = np.where(ce_draw.any(axis=1), ce_draw.argmax(axis=1), K)
    delta = ((e < c) & (e < K)).astype(np.int64)
    obs = np.where(delta == 1, e, np.minimum(c, K - 1))

    visit_t = np.round(width * (np.arange(K)[None, :] + jitter), 3)
    visit_t[:, 0] = 0.0
    time_raw = visit_t[np.arange(n), obs]

    sids = np.array([f"S{i:06d}" for i in range(n)], dtype=object)
    counts = obs + 1
    row_sub = np.repeat(np.arange(n), counts)
    row_k = np.concatenate([np.arange(m) for m in counts])
    last = row_k == obs[row_sub]
    positive = last & (delta[row_sub] == 1)
    # transient positives never touch the final visit or (for converters) the one before it
    guard = obs[row_sub] - delta[row_sub]
    positive |= flips[row_sub, row_k] & (row_k < guard)
    table = pd.DataFrame({
        "subject_id": sids[row_sub],
        "visit_time": visit_t[row_sub, row_k],
        "diagnosis": np.where(positive, POSITIVE, NEGATIVE),
    })
    baseline_rows = row_k == 0
    for f in cfg.features:
        col = np.full(len(table), np.nan, dtype=object if f.kind == "categorical" else float)
        vals = raw[f.name].astype(object if f.kind == "categorical" else float)
        vals = np.where(miss[f.name], np.nan, vals)
        col[baseline_rows] = vals
        table[f.name] = col
    for a in cfg.attributes:
        col = np.full(len(table), np.nan, dtype=object)
        col[baseline_rows] = groups[a.name]
        table[a.name] = col

    schema_feats = [FeatureSpec(f.name, f.kind) for f in cfg.features]
    schema_feats += [FeatureSpec(a.name, "categorical") for a in cfg.attributes if a.as_feature]
    schema = TableSchema(schema_feats, [a.name for a in cfg.attributes])
    truth = CohortTruth(
        subject_id=sids, hazards=hazards, event_interval=e, censor_interval=c,
        delta=delta, obs_interval=obs, time_raw=time_raw, groups=groups,
        grid=TimeGrid.equal_width(cfg.horizon, K),
    )
    return table, schema, truth
