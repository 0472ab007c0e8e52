"""HTTP service exposing the pipeline stages.

Paths in requests are read and written by the server process; the CLI talks
to an in-process instance by default, so both see the same filesystem.
"""
from __future__ import annotations

import logging

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__, pipeline
from ..cohort import CohortConfig, ConfigError, GridError, IngestionError
from ..metrics import UndefinedMetricError
from ..ndsm import TrainConfig, TrainingError, checkpoint
from . import schemas

log = logging.getLogger(__name__)

app = FastAPI(title="survaudit", version=__version__)


class ServiceError(Exception):
    def __init__(self, stage: str, detail: str, status: int = 422, seed: int | None = None):
        self.stage, self.detail, self.status, self.seed = stage, detail, status, seed


@app.exception_handler(ServiceError)
async def _service_error(request: Request, exc: ServiceError):
    body = schemas.ErrorBody(stage=exc.stage, detail=exc.detail, seed=exc.seed)
    return JSONResponse(status_code=exc.status, content=body.model_dump())


@app.exception_handler(pipeline.StageError)
async def _stage_error(request: Request, exc: pipeline.StageError):
    cause = exc.__cause__
    status = 422 if isinstance(cause, (ValueError, FileNotFoundError)) else 500
    body = schemas.ErrorBody(stage=exc.stage, detail=str(exc), seed=exc.seed)
    return JSONResponse(status_code=status, content=body.model_dump())


_USER_ERRORS = (ConfigError, GridError, IngestionError, UndefinedMetricError, TrainingError,
                pipeline.PipelineConfigError, FileNotFoundError, KeyError, ValueError)


def _guard(stage: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except pipeline.StageError:
        raise
    except _USER_ERRORS as e:
        raise ServiceError(stage, f"{type(e).__name__}: {e}") from e
    except Exception as e:  # pragma: no cover - unexpected failures
        log.exception("stage %s failed", stage)
        raise ServiceError(stage, f"{type(e).__name__}: {e}", status=500) from e


def _cohort(req: schemas.CohortPaths):
    return pipeline.load_cohort(req.cohort_csv, req.manifest, req.drop)


def _model_and_cohort(req):
    model, grid, _ = checkpoint.load(req.model_path)
    coh = _cohort(req)
    if grid != coh.grid:
        raise ValueError("model and cohort use different time grids")
    missing = [c for c in model.input_names if c not in coh.columns]
    if missing:
        raise ValueError(f"cohort lacks model inputs {missing}")
    cols = [coh.columns.index(c) for c in model.input_names]
    aligned = coh.subset(np.arange(len(coh)))
    aligned.X = coh.X[:, cols]
    aligned.columns = list(model.input_names)
    aligned.parents = [coh.parents[i] for i in cols]
    return model, aligned


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.post("/generate", response_model=schemas.GenerateResponse)
def generate(req: schemas.GenerateRequest):
    def run():
        cfg = CohortConfig.from_dict(req.config) if req.config is not None else CohortConfig.load(req.config_path)
        return pipeline.generate_stage(cfg, req.visits_csv, req.schema_path, req.truth_csv)
    return _guard("generate", run)


@app.post("/preprocess", response_model=schemas.PreprocessResponse)
def preprocess(req: schemas.PreprocessRequest):
    return _guard("preprocess", pipeline.preprocess_stage, req.visits_csv, req.schema_path,
                  req.cohort_csv, req.manifest, n_bins=req.n_bins, binning=req.binning,
                  split_seed=req.split_seed, anchor=req.anchor,
                  missing_threshold=req.missing_threshold)


@app.post("/train", response_model=schemas.TrainResponse)
def train(req: schemas.TrainRequest):
    def run():
        cfg = TrainConfig(objective=req.objective, epochs=req.epochs, lr=req.lr,
                          batch_size=req.batch_size, hidden=tuple(req.hidden),
                          activation=req.activation, sigma=req.sigma,
                          rank_weight=req.rank_weight, rps_censoring=req.rps_censoring,
                          seed=req.seed)
        return pipeline.train_stage(_cohort(req), cfg, req.model_path, req.workers)
    return _guard("train", run)


@app.post("/evaluate", response_model=schemas.MetricReportBody)
def evaluate(req: schemas.EvaluateRequest):
    def run():
        model, coh = _model_and_cohort(req)
        report = pipeline.evaluate_stage(model, coh, req.split, req.ties)
        if req.out_json:
            pipeline.write_json(req.out_json, report)
        if req.out_csv:
            pipeline.write_csv(req.out_csv, ["objective", "c_td", "ibs", "km_cal"],
                               [[model.objective, 100 * report["c_td"], 100 * report["ibs"],
                                 report["km_cal"]]])
        return report
    return _guard("evaluate", run)


@app.post("/fairness")
def fairness(req: schemas.FairnessRequest):
    def run():
        model, coh = _model_and_cohort(req)
        report = pipeline.fairness_stage(model, coh, req.attributes, B=req.B, alpha=req.alpha,
                                         seed=req.seed, mode=req.mode, split=req.split,
                                         ties=req.ties)
        if req.out_json:
            pipeline.write_json(req.out_json, report)
        if req.out_dir:
            for a, entry in report.items():
                kf = entry["km_fair"]
                g = kf["groups"]
                pipeline.write_csv(f"{req.out_dir}/km_fair_{a}.csv", ["group"] + g,
                                   [[gi] + row for gi, row in zip(g, kf["decision"])])
                pipeline.write_csv(
                    f"{req.out_dir}/km_fair_{a}_plot.csv",
                    ["row", "column", "decision", "lower", "upper", "mean_diff"],
                    [[g[i], g[j], kf["decision"][i][j], kf["lower"][i][j], kf["upper"][i][j],
                      kf["mean_diff"][i][j]] for i in range(len(g)) for j in range(len(g)) if i != j])
        return pipeline._clean(report)
    return _guard("fairness", run)


@app.post("/importance")
def importance(req: schemas.ImportanceRequest):
    def run():
        model, coh = _model_and_cohort(req)
        report = pipeline.importance_stage(model, coh, reps=req.reps, seed=req.seed,
                                           split=req.split, workers=req.workers)
        rows = [[f["feature"], f["mean_delta"], f["std"]] for f in report["features"]]
        if req.out_csv:
            pipeline.write_csv(req.out_csv, ["feature", "mean_delta", "std"], rows)
        if req.out_plot:
            pipeline.write_csv(req.out_plot, ["rank", "feature", "mean_delta", "std"],
                               [[i + 1, *r] for i, r in enumerate(rows[:req.top_k])])
        return pipeline._clean(report)
    return _guard("importance", run)


@app.post("/km", response_model=schemas.KmResponse)
def km(req: schemas.KmRequest):
    def run():
        coh = _cohort(req)
        if req.attribute is not None and req.attribute not in coh.groups:
            raise ValueError(f"unknown sensitive attribute {req.attribute!r}")
        curves = pipeline.km_stage(coh, req.split, req.attribute, req.target)
        if req.out_csv:
            pipeline.write_csv(req.out_csv, *pipeline.km_rows(curves, coh.grid.cut_points))
        return {"cut_points": list(coh.grid.cut_points), "curves": curves}
    return _guard("km", run)


def _run_config(req: schemas.RunRequest) -> pipeline.RunConfig:
    base = req.config if req.config is not None else pipeline.read_json(req.config_path)
    return pipeline.RunConfig.from_dict({**base, **req.overrides})


@app.post("/report")
def report(req: schemas.RunRequest):
    cfg = _guard("config", _run_config, req)
    return pipeline._clean(_guard("report", pipeline.run_pipeline, cfg))


@app.post("/ablate")
def ablate(req: schemas.AblateRequest):
    cfg = _guard("config", _run_config, req)
    return pipeline._clean(_guard("ablate", pipeline.run_ablation, cfg, req.drop))
