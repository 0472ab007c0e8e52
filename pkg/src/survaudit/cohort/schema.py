"""Visit-table schema and survival records."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

REQUIRED_COLUMNS = ("subject_id", "visit_time", "diagnosis")
POSITIVE = "positive"
NEGATIVE = "negative"


class IngestionError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str  # "continuous" | "categorical"

    def __post_init__(self):
        if self.kind not in ("continuous", "categorical"):
            raise IngestionError(f"feature {self.name}: unknown kind {self.kind!r}")


@dataclass
class TableSchema:
    """Sidecar schema: feature kinds plus which columns are sensitive attributes.

    A sensitive attribute that is also listed as a feature is a model input;
    ablation runs remove it from the inputs while keeping it as a group label.
    """

    features: list[FeatureSpec]
    sensitive: list[str] = field(default_factory=list)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    def kind_of(self, name: str) -> str:
        for f in self.features:
            if f.name == name:
                return f.kind
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "features": [{"name": f.name, "kind": f.kind} for f in self.features],
            "sensitive": list(self.sensitive),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TableSchema":
        return cls(
            [FeatureSpec(f["name"], f["kind"]) for f in d["features"]],
            list(d.get("sensitive", [])),
        )

    @classmethod
    def load(cls, path) -> "TableSchema":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SurvivalRecord:
    subject_id: str
    delta: int
    time_raw: float
    time_bin: int = -1
    features: np.ndarray | None = None
    groups: dict[str, str] = field(default_factory=dict)


def validate_visits(table: pd.DataFrame) -> pd.DataFrame:
    """Check the raw-visit invariants and return the table sorted by subject/time."""
    missing = [c for c in REQUIRED_COLUMNS if c not in table.columns]
    if missing:
        raise IngestionError(f"missing required columns: {missing}")
    if table.empty:
        raise IngestionError("visit table has no rows")
    if table["diagnosis"].isna().any():
        bad = table.loc[table["diagnosis"].isna(), "subject_id"].unique()[:5]
        raise IngestionError(f"missing diagnosis for subjects {list(bad)}")
    diag = table["diagnosis"].astype(str).str.lower()
    unknown = set(diag.unique()) - {POSITIVE, NEGATIVE}
    if unknown:
        raise IngestionError(f"unknown diagnosis values {sorted(unknown)}")
    t = pd.to_numeric(table["visit_time"], errors="coerce")
    if t.isna().any() or (t < 0).any():
        raise IngestionError("visit_time must be numeric and >= 0")
    out = table.copy()
    out["subject_id"] = out["subject_id"].astype(str)
    out["diagnosis"] = diag
    out["visit_time"] = t.astype(float)
    # subjects keep first-appearance order; visits sorted within subject
    out["_order"] = pd.factorize(out["subject_id"])[0]
    out = out.sort_values(["_order", "visit_time"], kind="mergesort").drop(columns="_order")
    dup = out.duplicated(["subject_id", "visit_time"])
    if dup.any():
        sid = out.loc[dup, "subject_id"].iloc[0]
        raise IngestionError(f"visit times for subject {sid} are not strictly increasing")
    return out.reset_index(drop=True)


def read_visits(csv_path, schema_path=None) -> tuple[pd.DataFrame, TableSchema | None]:
    schema = TableSchema.load(schema_path) if schema_path else None
    dtypes = {"subject_id": str, "diagnosis": str}
    if schema is not None:
        dtypes.update({f.name: str for f in schema.features if f.kind == "categorical"})
        dtypes.update({a: str for a in schema.sensitive})
    table = pd.read_csv(csv_path, dtype=dtypes, float_precision="round_trip")
    return validate_visits(table), schema
