"""JSON checkpoints: architecture header, weights, optimiser state, time grid."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..cohort.grid import TimeGrid
from .network import SurvivalNet

FORMAT = "survaudit-ndsm"
VERSION = 1


def _arr(a: np.ndarray) -> dict:
    return {"shape": list(a.shape), "data": a.reshape(-1).tolist()}


def _unarr(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def to_dict(model: SurvivalNet, grid: TimeGrid, extra: dict | None = None) -> dict:
    return {
        "format": FORMAT,
        "version": VERSION,
        "architecture": {
            "inputs": model.n_inputs,
            "hidden": model.hidden,
            "outputs": model.n_outputs,
            "activation": model.activation,
        },
        "objective": model.objective,
        "seed": model.seed,
        "input_names": model.input_names,
        "grid": grid.to_dict(),
        "step": model.step,
        "params": [_arr(p) for p in model.params],
        "adam_m": [_arr(p) for p in model.adam_m],
        "adam_v": [_arr(p) for p in model.adam_v],
        "extra": extra or {},
    }


def from_dict(d: dict) -> tuple[SurvivalNet, TimeGrid, dict]:
    if d.get("format") != FORMAT:
        raise ValueError("not a survaudit checkpoint")
    if d.get("version") != VERSION:
        raise ValueError(f"unsupported checkpoint version {d.get('version')}")
    model = SurvivalNet(
        [_unarr(p) for p in d["params"]], d["architecture"]["activation"], d["objective"],
        d["seed"], list(d["input_names"]), [_unarr(p) for p in d["adam_m"]],
        [_unarr(p) for p in d["adam_v"]], d["step"],
    )
    grid = TimeGrid.from_dict(d["grid"])
    if model.n_outputs != grid.T + 1:
        raise ValueError("checkpoint output width does not match its grid")
    return model, grid, d.get("extra", {})


def save(path, model: SurvivalNet, grid: TimeGrid, extra: dict | None = None):
    Path(path).write_text(json.dumps(to_dict(model, grid, extra), sort_keys=True) + "\n")


def load(path) -> tuple[SurvivalNet, TimeGrid, dict]:
    return from_dict(json.loads(Path(path).read_text()))
