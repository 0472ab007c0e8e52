"""Request and response bodies for the HTTP service."""
from __future__ import annotations

from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator

Objective = Literal["nll", "deephit", "nmtlr", "rps", "rpsrank"]
Split = Literal["train", "val", "test"]


class _Body(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CohortPaths(_Body):
    cohort_csv: str
    manifest: str
    drop: list[str] = Field(default_factory=list)


class GenerateRequest(_Body):
    config_path: str | None = None
    config: dict[str, Any] | None = None
    visits_csv: str
    schema_path: str
    truth_csv: str | None = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.config_path is None) == (self.config is None):
            raise ValueError("give exactly one of config_path or config")
        return self


class GenerateResponse(_Body):
    n_subjects: int
    n_rows: int
    n_events: int


class PreprocessRequest(_Body):
    visits_csv: str
    schema_path: str
    cohort_csv: str
    manifest: str
    n_bins: int = Field(10, ge=1)
    binning: Literal["quantile", "equal_width"] = "quantile"
    split_seed: int = 0
    anchor: Literal["final_run", "first_positive"] = "final_run"
    missing_threshold: float = Field(0.30, ge=0.0, le=1.0)


class PreprocessResponse(_Body):
    n_records: int
    n_truncated: int
    columns: list[str]
    cut_points: list[float]
    dropped: list[str]


class TrainRequest(CohortPaths):
    model_path: str
    objective: Objective = "nll"
    seed: int = 0
    epochs: int = Field(20, ge=0)
    lr: float = Field(1e-4, gt=0)
    batch_size: int = Field(128, ge=1)
    hidden: list[int] = Field(default_factory=lambda: [128, 128])
    activation: Literal["relu", "tanh"] = "relu"
    sigma: float = Field(0.1, gt=0)
    rank_weight: float = 1.0
    rps_censoring: Literal["truncate", "ipcw"] = "truncate"
    workers: int = Field(1, ge=1)


class TrainResponse(_Body):
    best_epoch: int
    history: list[dict[str, Any]]


class EvaluateRequest(CohortPaths):
    model_path: str
    split: Split = "test"
    ties: Literal["half", "strict"] = "half"
    out_json: str | None = None
    out_csv: str | None = None


class MetricReportBody(_Body):
    c_td: float
    ibs: float
    ibs_cal: float
    ibs_res: float
    ibs_unc: float
    km_cal: float
    n_excluded: int


class FairnessRequest(CohortPaths):
    model_path: str
    attributes: list[str] = Field(min_length=1)
    B: int = Field(1000, ge=1)
    alpha: float = Field(0.05, gt=0, lt=1)
    seed: int = 0
    mode: Literal["bootstrap", "subsample"] = "bootstrap"
    split: Split = "test"
    ties: Literal["half", "strict"] = "half"
    out_json: str | None = None
    out_dir: str | None = None


class ImportanceRequest(CohortPaths):
    model_path: str
    reps: int = Field(10, ge=1)
    seed: int = 0
    split: Split = "test"
    workers: int = Field(1, ge=1)
    top_k: int = Field(10, ge=1)
    out_csv: str | None = None
    out_plot: str | None = None


class KmRequest(CohortPaths):
    split: Split | None = None
    attribute: str | None = None
    target: Literal["event", "censoring"] = "event"
    out_csv: str | None = None


class KmResponse(_Body):
    cut_points: list[float]
    curves: dict[str, list[float]]


class RunRequest(_Body):
    config_path: str | None = None
    config: dict[str, Any] | None = None
    overrides: dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _one_source(self):
        if (self.config_path is None) == (self.config is None):
            raise ValueError("give exactly one of config_path or config")
        return self


class AblateRequest(RunRequest):
    drop: list[str] = Field(min_length=1)


class ErrorBody(_Body):
    stage: str
    detail: str
    seed: int | None = None
