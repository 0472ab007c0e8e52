"""Preprocessed cohort: labels, grid, encoded features and group labels."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .grid import TimeGrid, fit_time_grid
from .labels import build_survival_labels, truncate_at_risk
from .preprocess import Preprocessor
from .schema import IngestionError, TableSchema, validate_visits

SPLITS = ("train", "val", "test")


@dataclass
class Cohort:
    """Column-oriented survival records sharing one time grid."""

    subject_id: np.ndarray
    delta: np.ndarray
    time_raw: np.ndarray
    time_bin: np.ndarray
    X: np.ndarray
    columns: list[str]
    parents: list[str]
    groups: dict[str, np.ndarray]
    grid: TimeGrid
    split: np.ndarray | None = None
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.delta)

    def subset(self, idx) -> "Cohort":
        idx = np.asarray(idx)
        return Cohort(
            subject_id=self.subject_id[idx], delta=self.delta[idx],
            time_raw=self.time_raw[idx], time_bin=self.time_bin[idx], X=self.X[idx],
            columns=list(self.columns), parents=list(self.parents),
            groups={k: v[idx] for k, v in self.groups.items()}, grid=self.grid,
            split=None if self.split is None else self.split[idx], manifest=self.manifest,
        )

    def part(self, name: str) -> "Cohort":
        if self.split is None:
            raise ValueError("cohort carries no split column")
        return self.subset(np.flatnonzero(self.split == name))

    def drop_parents(self, names) -> "Cohort":
        """Remove every encoded column derived from the named raw features."""
        names = set(names)
        keep = [i for i, p in enumerate(self.parents) if p not in names]
        if not keep:
            raise ValueError("dropping these features leaves no model inputs")
        out = self.subset(np.arange(len(self)))
        out.X = self.X[:, keep]
        out.columns = [self.columns[i] for i in keep]
        out.parents = [self.parents[i] for i in keep]
        return out

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({
            "subject_id": self.subject_id,
            "delta": self.delta,
            "time_bin": self.time_bin,
            "time_raw": self.time_raw,
        })
        if self.split is not None:
            df["split"] = self.split
        for a, v in self.groups.items():
            df[f"group.{a}"] = v
        for j in range(self.X.shape[1]):
            df[f"f{j}"] = self.X[:, j]
        return df

    def save(self, csv_path, manifest_path):
        self.to_frame().to_csv(csv_path, index=False, float_format="%.17g", lineterminator="\n")
        man = dict(self.manifest)
        man.update({"grid": self.grid.to_dict(), "columns": self.columns, "parents": self.parents,
                    "groups": sorted(self.groups)})
        Path(manifest_path).write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, csv_path, manifest_path) -> "Cohort":
        man = json.loads(Path(manifest_path).read_text())
        group_cols = {f"group.{a}": str for a in man.get("groups", [])}
        df = pd.read_csv(csv_path, float_precision="round_trip",
                         dtype={"subject_id": str, "split": str, **group_cols},
                         keep_default_na=False, na_values={})
        fcols = [f"f{j}" for j in range(len(man["columns"]))]
        return cls(
            subject_id=df["subject_id"].to_numpy(dtype=object),
            delta=df["delta"].to_numpy(dtype=np.int64),
            time_raw=df["time_raw"].to_numpy(dtype=float),
            time_bin=df["time_bin"].to_numpy(dtype=np.int64),
            X=df[fcols].to_numpy(dtype=float) if fcols else np.zeros((len(df), 0)),
            columns=list(man["columns"]), parents=list(man["parents"]),
            groups={a: df[f"group.{a}"].to_numpy(dtype=object) for a in man.get("groups", [])},
            grid=TimeGrid.from_dict(man["grid"]),
            split=df["split"].to_numpy(dtype=object) if "split" in df else None,
            manifest=man,
        )


def stratified_split(delta: np.ndarray, fractions=(0.7, 0.15, 0.15), seed: int = 0) -> np.ndarray:
    """Assign train/val/test labels, stratified on the event indicator."""
    if abs(sum(fractions) - 1.0) > 1e-9 or len(fractions) != 3:
        raise ValueError("split fractions must be three numbers summing to 1")
    rng = np.random.default_rng(seed)
    out = np.empty(len(delta), dtype=object)
    for d in (0, 1):
        idx = np.flatnonzero(delta == d)
        idx = idx[rng.permutation(idx.size)]
        n_tr = int(round(fractions[0] * idx.size))
        n_va = int(round(fractions[1] * idx.size))
        out[idx[:n_tr]] = "train"
        out[idx[n_tr:n_tr + n_va]] = "val"
        out[idx[n_tr + n_va:]] = "test"
    return out


def preprocess_visits(table: pd.DataFrame, schema: TableSchema, T: int = 10, *,
                      scheme: str = "quantile", seed: int = 0,
                      fractions=(0.7, 0.15, 0.15), missing_threshold: float = 0.30,
                      anchor: str = "final_run", grid: TimeGrid | None = None) -> Cohort:
    """Raw visits -> labelled, truncated, split, imputed, scaled and encoded cohort.

    Features come from each subject's first visit. Imputation statistics,
    scaling bounds, category levels and (unless ``grid`` is given) the time
    grid are fitted on the training split only.
    """
    visits = validate_visits(table)
    labels = truncate_at_risk(build_survival_labels(visits, anchor=anchor))
    if not labels:
        raise IngestionError("no at-risk subjects after truncation")
    base = visits.groupby("subject_id", sort=False).head(1).set_index("subject_id")
    sid = np.array([r[0] for r in labels], dtype=object)
    delta = np.array([r[1] for r in labels], dtype=np.int64)
    time_raw = np.array([r[2] for r in labels], dtype=float)
    base = base.loc[sid]

    split = stratified_split(delta, fractions, seed)
    train = split == "train"
    if not train.any():
        raise IngestionError("empty training split")
    if grid is None:
        grid = fit_time_grid(time_raw[train], T, scheme=scheme)

    kinds = {f.name: f.kind for f in schema.features}
    absent = [k for k in kinds if k not in base.columns]
    if absent:
        raise IngestionError(f"schema features missing from table: {absent}")
    pre = Preprocessor(kinds, missing_threshold).fit(base.loc[sid[train]].reset_index())
    X, warnings = pre.transform(base.reset_index())
    groups = {}
    for a in schema.sensitive:
        if a not in base.columns:
            raise IngestionError(f"sensitive attribute {a} missing from table")
        col = base[a]
        groups[a] = col.where(col.notna(), "").astype(str).to_numpy(dtype=object)

    manifest = {
        "n_subjects": int(len(sid)),
        "n_truncated": int(visits["subject_id"].nunique() - len(sid)),
        "anchor": anchor,
        "binning": scheme,
        "split_seed": seed,
        "split_fractions": list(fractions),
        "encode_warnings": warnings,
        **pre.manifest(),
    }
    return Cohort(sid, delta, time_raw, grid.bin_of(time_raw), X, pre.columns, pre.parents,
                  groups, grid, split, manifest)
