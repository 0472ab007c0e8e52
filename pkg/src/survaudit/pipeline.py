"""File-based experiment pipeline: stages, per-seed runs, aggregation, ablation.

Every artifact is written deterministically (sorted JSON keys, fixed float
formatting, no timestamps), so an identical config reproduces every file
byte for byte. Stage outputs are cached next to a key file holding the hash
of the stage inputs; a re-run skips stages whose key still matches.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .cohort import Cohort, CohortConfig, generate_cohort, preprocess_visits, read_visits
from .fairness import ci_td, hosmer_lemeshow, km_fair, partition
from .interpret import permutation_importance
from .km import km_estimate
from .metrics import UndefinedMetricError, evaluate
from .ndsm import OBJECTIVES, TrainConfig, checkpoint, train

log = logging.getLogger(__name__)

METRICS = ("c_td", "ibs", "ibs_cal", "ibs_res", "ibs_unc", "km_cal")
# scaled by 100 in the table, as in the usual presentation
SCALED = ("c_td", "ibs")


class StageError(RuntimeError):
    """A pipeline stage failed; ``stage`` and ``seed`` locate it."""

    def __init__(self, stage: str, message: str, seed: int | None = None):
        self.stage = stage
        self.seed = seed
        where = stage if seed is None else f"{stage} (seed {seed})"
        super().__init__(f"[{where}] {message}")


class PipelineConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    """Flat key-value run description; see README for every key."""

    cohort_config: str = ""
    out_dir: str = "run"
    objectives: list[str] = field(default_factory=lambda: list(OBJECTIVES))
    seeds: list[int] = field(default_factory=lambda: [1, 2, 3])
    attributes: list[str] = field(default_factory=list)
    n_bins: int = 10
    binning: str = "quantile"
    split_seed: int = 0
    anchor: str = "final_run"
    missing_threshold: float = 0.30
    epochs: int = 20
    lr: float = 1e-4
    batch_size: int = 128
    hidden: list[int] = field(default_factory=lambda: [128, 128])
    activation: str = "relu"
    sigma: float = 0.1
    rank_weight: float = 1.0
    rps_censoring: str = "truncate"
    bootstrap: int = 1000
    alpha: float = 0.05
    bootstrap_mode: str = "bootstrap"
    importance_reps: int = 10
    ties: str = "half"
    drop_attributes: list[str] = field(default_factory=list)
    init_fan_in: int | None = None
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not self.seeds:
            raise PipelineConfigError("seeds must be non-empty")
        bad = [o for o in self.objectives if o not in OBJECTIVES]
        if bad or not self.objectives:
            raise PipelineConfigError(f"objectives must be a non-empty subset of {OBJECTIVES}; got {bad}")
        if len(set(self.seeds)) != len(self.seeds):
            raise PipelineConfigError("seeds must be distinct")
        try:
            self.train_config(self.objectives[0], self.seeds[0])
        except ValueError as e:
            raise PipelineConfigError(str(e)) from e
        if self.bootstrap < 1 or self.importance_reps < 1 or self.workers < 1:
            raise PipelineConfigError("bootstrap, importance_reps and workers must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)

    def persisted(self) -> dict:
        """Config as written into artifacts; thread count never changes results."""
        d = self.to_dict()
        d.pop("workers")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise PipelineConfigError(f"unknown config keys: {unknown}")
        return cls(**d)

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def train_config(self, objective: str, seed: int) -> TrainConfig:
        return TrainConfig(objective=objective, epochs=self.epochs, lr=self.lr,
                           batch_size=self.batch_size, hidden=tuple(self.hidden),
                           activation=self.activation, sigma=self.sigma,
                           rank_weight=self.rank_weight, rps_censoring=self.rps_censoring,
                           seed=seed, init_fan_in=self.init_fan_in)


# ---- deterministic writers -----------------------------------------------

def _clean(o):
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.ndarray):
        return _clean(o.tolist())
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        o = float(o)
    if isinstance(o, float) and not np.isfinite(o):
        return None
    return o


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_json(path):
    return json.loads(Path(path).read_text(encoding="utf-8"))


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if not np.isfinite(v) else repr(float(v))
    return v


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8")


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        if isinstance(p, Path):
            h.update(p.read_bytes())
        else:
            h.update(json.dumps(_clean(p), sort_keys=True).encode())
    return h.hexdigest()


def _cached(outputs, key: str) -> bool:
    stamp = Path(str(outputs[0]) + ".key")
    return all(Path(o).exists() for o in outputs) and stamp.exists() and stamp.read_text() == key


def _stamp(outputs, key: str):
    Path(str(outputs[0]) + ".key").write_text(key)


# ---- single stages -----------------------------------------------------------

def generate_stage(cohort_config, visits_csv, schema_json, truth_csv=None) -> dict:
    cfg = cohort_config if isinstance(cohort_config, CohortConfig) else CohortConfig.load(cohort_config)
    table, schema, truth = generate_cohort(cfg)
    Path(visits_csv).parent.mkdir(parents=True, exist_ok=True)
    table.to_csv(visits_csv, index=False, float_format="%.17g", lineterminator="\n")
    write_json(schema_json, schema.to_dict())
    if truth_csv is not None:
        truth.to_frame().to_csv(truth_csv, index=False, float_format="%.17g", lineterminator="\n")
    return {"n_subjects": int(cfg.n_subjects), "n_rows": int(len(table)),
            "n_events": int(truth.delta.sum())}


def preprocess_stage(visits_csv, schema_json, cohort_csv, manifest_json, *, n_bins=10,
                     binning="quantile", split_seed=0, anchor="final_run",
                     missing_threshold=0.30) -> dict:
    table, schema = read_visits(visits_csv, schema_json)
    coh = preprocess_visits(table, schema, n_bins, scheme=binning, seed=split_seed,
                            anchor=anchor, missing_threshold=missing_threshold)
    coh.save(cohort_csv, manifest_json)
    return {"n_records": len(coh), "n_truncated": coh.manifest["n_truncated"],
            "columns": coh.columns, "cut_points": list(coh.grid.cut_points),
            "dropped": coh.manifest.get("dropped", [])}


def load_cohort(cohort_csv, manifest_json, drop=()) -> Cohort:
    coh = Cohort.load(cohort_csv, manifest_json)
    if drop:
        missing = [a for a in drop if a not in coh.groups and a not in coh.parents]
        if missing:
            raise PipelineConfigError(f"cannot drop unknown attributes {missing}")
        try:
            coh = coh.drop_parents(drop)
        except ValueError as e:
            raise PipelineConfigError(str(e)) from e
    return coh


def train_stage(coh: Cohort, tcfg: TrainConfig, model_path, workers: int = 1) -> dict:
    tcfg.workers = workers
    res = train(coh.part("train"), tcfg, coh.part("val"))
    checkpoint.save(model_path, res.model, coh.grid,
                    {"best_epoch": res.best_epoch, "history": res.history, "train": tcfg.to_dict()})
    return {"best_epoch": res.best_epoch, "history": res.history}


def evaluate_stage(model, coh: Cohort, split="test", ties="half") -> dict:
    part = coh.part(split)
    return evaluate(model.predict_pmf(part.X), part.delta, part.time_bin, ties=ties).to_dict()


def fairness_stage(model, coh: Cohort, attributes, *, B=1000, alpha=0.05, seed=0,
                   mode="bootstrap", split="test", ties="half") -> dict:
    part = coh.part(split)
    pmf = model.predict_pmf(part.X)
    out = {}
    for a in attributes:
        if a not in part.groups:
            raise PipelineConfigError(f"unknown sensitive attribute {a!r}")
        labels = part.groups[a]
        entry = {}
        try:
            entry["ci_td"] = ci_td(pmf, part.delta, part.time_bin, labels, a, ties).to_dict()
        except UndefinedMetricError as e:
            entry["ci_td"] = {"error": str(e)}
        entry["km_fair"] = km_fair(pmf, part.delta, part.time_bin, labels, B, alpha, seed, a,
                                   mode).to_dict()
        hl = {}
        for g, idx in partition(labels).items():
            try:
                v, skipped = hosmer_lemeshow(pmf, part.delta, part.time_bin, idx)
                hl[g] = {"value": v, "skipped_bins": skipped}
            except UndefinedMetricError as e:
                hl[g] = {"error": str(e)}
        entry["hosmer_lemeshow"] = hl
        out[a] = entry
    return out


def importance_stage(model, coh: Cohort, *, reps=10, seed=0, split="test", workers=1) -> dict:
    part = coh.part(split)
    return permutation_importance(model.predict_pmf, part.X, part.delta, part.time_bin,
                                  part.parents, reps, seed, workers).to_dict()


def km_stage(coh: Cohort, split=None, attribute=None, target="event") -> dict:
    part = coh if split is None else coh.part(split)
    T = part.grid.T
    curves = {"all": km_estimate(part.time_bin, part.delta, T, target)}
    if attribute:
        for g, idx in partition(part.groups[attribute]).items():
            curves[g] = km_estimate(part.time_bin[idx], part.delta[idx], T, target)
    return {k: v.tolist() for k, v in curves.items()}


def km_rows(curves: dict, cut_points) -> tuple[list, list]:
    names = list(curves)
    header = ["bin", "time"] + [f"survival_{n}" if n != "all" else "survival" for n in names]
    rows = [[k, float(cut_points[k])] + [curves[n][k] for n in names]
            for k in range(len(curves[names[0]]))]
    return header, rows


# ---- one (objective, seed) job -------------------------------------------------

def _job(cfg: RunConfig, coh: Cohort, cohort_key: str, objective: str, seed: int, root: Path,
         inner_workers: int) -> dict:
    d = root / "models" / objective / f"seed{seed}"
    d.mkdir(parents=True, exist_ok=True)
    tcfg = cfg.train_config(objective, seed)
    model_path = d / "model.json"
    key = _digest(cohort_key, tcfg.to_dict(), cfg.drop_attributes)
    try:
        if not _cached([model_path], key):
            train_stage(coh, tcfg, model_path, inner_workers)
            _stamp([model_path], key)
    except Exception as e:
        raise StageError(f"train:{objective}", str(e), seed) from e
    model, _, extra = checkpoint.load(model_path)

    metrics_path = d / "metrics.json"
    ekey = _digest(key, Path(model_path), cfg.ties, cfg.attributes, cfg.bootstrap, cfg.alpha,
                   cfg.bootstrap_mode, cfg.importance_reps)
    if _cached([metrics_path], ekey):
        return read_json(metrics_path)
    try:
        metrics = evaluate_stage(model, coh, ties=cfg.ties)
    except Exception as e:
        raise StageError(f"evaluate:{objective}", str(e), seed) from e
    try:
        fair = fairness_stage(model, coh, cfg.attributes, B=cfg.bootstrap, alpha=cfg.alpha,
                              seed=seed, mode=cfg.bootstrap_mode, ties=cfg.ties)
    except Exception as e:
        raise StageError(f"fairness:{objective}", str(e), seed) from e
    try:
        imp = importance_stage(model, coh, reps=cfg.importance_reps, seed=seed,
                               workers=inner_workers)
    except Exception as e:
        raise StageError(f"importance:{objective}", str(e), seed) from e
    write_json(d / "fairness.json", fair)
    write_csv(d / "importance.csv", ["feature", "mean_delta", "std"],
              [[f["feature"], f["mean_delta"], f["std"]] for f in imp["features"]])
    record = {"objective": objective, "seed": seed, "best_epoch": extra.get("best_epoch"),
              "metrics": metrics, "importance": imp,
              "ci_td": {a: fair[a]["ci_td"].get("ci_td") for a in fair}}
    write_json(metrics_path, record)
    _stamp([metrics_path], ekey)
    return record


# ---- aggregation -------------------------------------------------------------

def mean_std(values) -> tuple[float, float]:
    """Arithmetic mean and sample (n-1) standard deviation; std is 0 for one value."""
    arr = np.asarray([v for v in values if v is not None], dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(arr.mean()), float(arr.std(ddof=1)) if arr.size > 1 else 0.0


def aggregate(records: list[dict], attributes, fairness: dict | None = None) -> dict:
    """Fold per-seed records into per-objective mean/std summaries."""
    out = {}
    for obj in dict.fromkeys(r["objective"] for r in records):
        rs = [r for r in records if r["objective"] == obj]
        summary = {"seeds": [r["seed"] for r in rs], "n_seeds": len(rs)}
        for m in METRICS:
            mu, sd = mean_std([r["metrics"][m] for r in rs])
            summary[m] = {"mean": mu, "std": sd}
        for a in attributes:
            mu, sd = mean_std([r["ci_td"].get(a) for r in rs])
            summary[f"ci_td.{a}"] = {"mean": mu, "std": sd}
        if fairness is not None:
            summary["km_fair"] = fairness.get(obj, {})
        out[obj] = summary
    return out


def mean_decisions(per_seed: list[dict], attribute: str) -> dict:
    groups = per_seed[0][attribute]["km_fair"]["groups"]
    mats = [np.asarray(f[attribute]["km_fair"]["decision"], dtype=float) for f in per_seed]
    return {"groups": groups, "mean_decision": np.mean(mats, axis=0).tolist()}


def table_rows(summary: dict, attributes) -> tuple[list, list]:
    header = ["objective"]
    for m in ("c_td", "ibs", "km_cal"):
        header += [m, f"{m}_std"]
    for a in attributes:
        header += [f"ci_td_{a}", f"ci_td_{a}_std"]
    rows = []
    for obj, s in summary.items():
        row = [obj]
        for m in ("c_td", "ibs", "km_cal"):
            k = 100.0 if m in SCALED else 1.0
            row += [k * s[m]["mean"], k * s[m]["std"]]
        for a in attributes:
            row += [100.0 * s[f"ci_td.{a}"]["mean"], 100.0 * s[f"ci_td.{a}"]["std"]]
        rows.append(row)
    return header, rows


# ---- orchestration -------------------------------------------------------------

def prepare_cohort(cfg: RunConfig, root: Path) -> tuple[Path, Path, str]:
    """Generate and preprocess the cohort once, cached by config content."""
    cdir = root / "cohort"
    cdir.mkdir(parents=True, exist_ok=True)
    visits, schema = cdir / "visits.csv", cdir / "schema.json"
    truth = cdir / "truth.csv"
    if not cfg.cohort_config:
        raise StageError("generate", "cohort_config is required")
    try:
        ccfg = CohortConfig.load(cfg.cohort_config)
        gkey = _digest(ccfg.to_dict())
        if not _cached([visits, schema, truth], gkey):
            generate_stage(ccfg, visits, schema, truth)
            _stamp([visits, schema, truth], gkey)
    except Exception as e:
        raise StageError("generate", str(e)) from e
    cohort_csv, manifest = cdir / "cohort.csv", cdir / "manifest.json"
    pkey = _digest(gkey, cfg.n_bins, cfg.binning, cfg.split_seed, cfg.anchor, cfg.missing_threshold)
    try:
        if not _cached([cohort_csv, manifest], pkey):
            preprocess_stage(visits, schema, cohort_csv, manifest, n_bins=cfg.n_bins,
                             binning=cfg.binning, split_seed=cfg.split_seed, anchor=cfg.anchor,
                             missing_threshold=cfg.missing_threshold)
            _stamp([cohort_csv, manifest], pkey)
    except Exception as e:
        raise StageError("preprocess", str(e)) from e
    return cohort_csv, manifest, pkey


def run_pipeline(cfg: RunConfig, root: Path | None = None, cohort_paths=None) -> dict:
    """Run every stage for each (objective, seed) and write the aggregate report.

    Jobs run on ``cfg.workers`` threads; each job's artifacts depend only on
    its own inputs, so serial and parallel runs write identical files.
    """
    cfg.validate()
    root = Path(root or cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    write_json(root / "config.json", cfg.persisted())
    if cohort_paths is None:
        cohort_csv, manifest, ckey = prepare_cohort(cfg, root)
    else:
        cohort_csv, manifest, ckey = cohort_paths
    try:
        coh = load_cohort(cohort_csv, manifest, cfg.drop_attributes)
    except PipelineConfigError:
        raise
    except Exception as e:
        raise StageError("load", str(e)) from e
    unknown = [a for a in cfg.attributes if a not in coh.groups]
    if unknown:
        raise PipelineConfigError(f"unknown sensitive attributes {unknown}")

    T = coh.grid.T
    test = coh.part("test")
    header, rows = km_rows(km_stage(coh, "test"), coh.grid.cut_points)
    write_csv(root / "km_test.csv", header, rows)

    jobs = [(o, s) for o in cfg.objectives for s in cfg.seeds]
    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            records = list(pool.map(lambda j: _job(cfg, coh, ckey, j[0], j[1], root, 1), jobs))
    else:
        records = [_job(cfg, coh, ckey, o, s, root, 1) for o, s in jobs]

    fairness = {}
    for obj in cfg.objectives:
        per_seed = [read_json(root / "models" / obj / f"seed{s}" / "fairness.json") for s in cfg.seeds]
        fairness[obj] = {a: mean_decisions(per_seed, a) for a in cfg.attributes}
        for a in cfg.attributes:
            m = fairness[obj][a]
            write_csv(root / "report" / f"km_fair_{obj}_{a}.csv", ["group"] + m["groups"],
                      [[g] + row for g, row in zip(m["groups"], m["mean_decision"])])
        imp = _mean_importance([r for r in records if r["objective"] == obj])
        write_csv(root / "report" / f"importance_{obj}.csv", ["feature", "mean_delta", "std"], imp)

    summary = aggregate(records, cfg.attributes, fairness)
    header, rows = table_rows(summary, cfg.attributes)
    write_csv(root / "report" / "table.csv", header, rows)
    write_csv(root / "report" / "per_seed.csv", ["objective", "seed", *METRICS,
                                                 *[f"ci_td_{a}" for a in cfg.attributes]],
              [[r["objective"], r["seed"], *[r["metrics"][m] for m in METRICS],
                *[r["ci_td"].get(a) for a in cfg.attributes]] for r in records])
    report = {"config": cfg.persisted(), "n_test": len(test), "n_bins": T, "summary": summary}
    write_json(root / "report" / "summary.json", report)
    return report


def _mean_importance(records) -> list:
    names = list(dict.fromkeys(f["feature"] for r in records for f in r["importance"]["features"]))
    rows = []
    for n in names:
        vals = [f["mean_delta"] for r in records for f in r["importance"]["features"] if f["feature"] == n]
        mu, sd = mean_std(vals)
        rows.append([n, mu, sd])
    rows.sort(key=lambda r: -r[1] if np.isfinite(r[1]) else np.inf)
    return rows


# deltas below this are summation-order rounding, not change
DELTA_TOL = 1e-12


def significant(delta: float, baseline_std: float) -> bool:
    """A change counts when it leaves the baseline's one-std band."""
    if delta is None or baseline_std is None or not np.isfinite(delta):
        return False
    return abs(delta) > max(baseline_std, DELTA_TOL)


def run_ablation(cfg: RunConfig, drop_attributes, root: Path | None = None) -> dict:
    """Retrain without the named attribute columns and compare with the baseline run.

    Group labels stay available, so fairness is still measured on the withheld
    attributes. Delta = ablated mean - baseline mean per (objective, metric).
    """
    drop = list(drop_attributes)
    if not drop:
        raise PipelineConfigError("name at least one attribute to drop")
    root = Path(root or cfg.out_dir)
    base_cfg = RunConfig.from_dict({**cfg.to_dict(), "drop_attributes": []})
    paths = prepare_cohort(base_cfg, root)
    man = read_json(paths[1])
    available = set(man.get("groups", [])) | set(man.get("parents", []))
    absent = [a for a in drop if a not in available]
    if absent:
        raise PipelineConfigError(f"attributes not in the cohort schema: {absent}")
    baseline = run_pipeline(base_cfg, root, paths)
    # same first-layer scale as the baseline, so only the withheld rows differ at init
    fan_in = cfg.init_fan_in or len(man["columns"])
    abl_cfg = RunConfig.from_dict({**cfg.to_dict(), "drop_attributes": drop, "init_fan_in": fan_in})
    tag = "ablation_" + "+".join(drop)
    ablated = run_pipeline(abl_cfg, root / tag, paths)

    deltas, rows = {}, []
    for obj, b in baseline["summary"].items():
        a = ablated["summary"][obj]
        cells = {}
        for key in [*METRICS, *[f"ci_td.{x}" for x in cfg.attributes]]:
            d = a[key]["mean"] - b[key]["mean"]
            cells[key] = {"delta": d, "baseline_std": b[key]["std"],
                          "significant": significant(d, b[key]["std"])}
            rows.append([obj, key, d, b[key]["std"], int(cells[key]["significant"])])
        deltas[obj] = cells
    n_sig = sum(c["significant"] for o in deltas.values() for c in o.values())
    report = {"dropped": drop, "deltas": deltas, "n_significant": n_sig,
              "baseline": baseline["summary"], "ablated": ablated["summary"]}
    write_json(root / tag / "report" / "ablation.json", report)
    write_csv(root / tag / "report" / "ablation.csv",
              ["objective", "metric", "delta", "baseline_std", "significant"], rows)
    return report
