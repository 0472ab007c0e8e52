"""Command-line client for the survaudit service.

Each subcommand sends one request. Without ``--server`` the service runs
in-process; with it, requests go over HTTP to a running ``survaudit serve``.
"""
from __future__ import annotations

import json
import os
import sys
import warnings

import click


def _abspath(p):
    return None if p is None else os.path.abspath(p)


class Client:
    def __init__(self, server: str | None):
        if server:
            import httpx
            self._http = httpx.Client(base_url=server, timeout=None)
        else:
            with warnings.catch_warnings():
                # the in-process transport's httpx deprecation notice is noise here
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient
            from .service import app
            self._http = TestClient(app, raise_server_exceptions=False)

    def post(self, path: str, body: dict) -> dict:
        body = {k: v for k, v in body.items() if v is not None}
        r = self._http.post(path, json=body)
        if r.status_code >= 400:
            stage, detail = path.strip("/"), r.text
            try:
                payload = r.json()
            except ValueError:
                payload = None
            if isinstance(payload, dict) and "stage" in payload:
                stage, detail = payload["stage"], payload["detail"]
            elif isinstance(payload, dict) and "detail" in payload:
                stage = f"{stage}:request"
                detail = "; ".join(
                    f"{'.'.join(str(x) for x in e.get('loc', [])[1:])}: {e.get('msg')}"
                    for e in payload["detail"]) if isinstance(payload["detail"], list) else payload["detail"]
            click.echo(f"error [{stage}]: {detail}", err=True)
            sys.exit(1)
        return r.json()


def _emit(obj):
    click.echo(json.dumps(obj, indent=2, sort_keys=True))


def _parse_set(values) -> dict:
    out = {}
    for item in values:
        if "=" not in item:
            raise click.BadParameter(f"expected key=value, got {item!r}", param_hint="--set")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


cohort_options = [
    click.option("--cohort", "cohort_csv", required=True, type=click.Path(), help="Preprocessed cohort CSV."),
    click.option("--manifest", required=True, type=click.Path(), help="Cohort manifest JSON."),
    click.option("--drop", multiple=True, help="Raw feature or attribute to withhold (repeatable)."),
]


def with_cohort(f):
    for opt in reversed(cohort_options):
        f = opt(f)
    return f


def _cohort_body(cohort_csv, manifest, drop):
    return {"cohort_csv": _abspath(cohort_csv), "manifest": _abspath(manifest), "drop": list(drop)}


@click.group()
@click.option("--server", envvar="SURVAUDIT_SERVER", default=None,
              help="Base URL of a running service; in-process when omitted.")
@click.pass_context
def main(ctx, server):
    """Train discrete-time survival networks and audit them."""
    ctx.obj = server


def _client(ctx) -> Client:
    return Client(ctx.obj)


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Cohort config JSON.")
@click.option("--out-visits", required=True, type=click.Path())
@click.option("--out-schema", required=True, type=click.Path())
@click.option("--out-truth", type=click.Path(), default=None, help="Optional ground-truth CSV.")
@click.pass_context
def generate(ctx, config_path, out_visits, out_schema, out_truth):
    """Simulate a censored visit table from a cohort config."""
    _emit(_client(ctx).post("/generate", {
        "config_path": _abspath(config_path), "visits_csv": _abspath(out_visits),
        "schema_path": _abspath(out_schema), "truth_csv": _abspath(out_truth)}))


@main.command()
@click.option("--visits", required=True, type=click.Path())
@click.option("--schema", required=True, type=click.Path())
@click.option("--out-cohort", required=True, type=click.Path())
@click.option("--out-manifest", required=True, type=click.Path())
@click.option("--bins", default=10, show_default=True)
@click.option("--binning", type=click.Choice(["quantile", "equal_width"]), default="quantile", show_default=True)
@click.option("--split-seed", default=0, show_default=True)
@click.option("--anchor", type=click.Choice(["final_run", "first_positive"]), default="final_run", show_default=True)
@click.option("--missing-threshold", default=0.30, show_default=True)
@click.pass_context
def preprocess(ctx, visits, schema, out_cohort, out_manifest, bins, binning, split_seed, anchor,
               missing_threshold):
    """Label, split, impute, encode and bin a visit table."""
    _emit(_client(ctx).post("/preprocess", {
        "visits_csv": _abspath(visits), "schema_path": _abspath(schema),
        "cohort_csv": _abspath(out_cohort), "manifest": _abspath(out_manifest), "n_bins": bins,
        "binning": binning, "split_seed": split_seed, "anchor": anchor,
        "missing_threshold": missing_threshold}))


@main.command()
@with_cohort
@click.option("--out", "model_path", required=True, type=click.Path(), help="Checkpoint path.")
@click.option("--objective", type=click.Choice(["nll", "deephit", "nmtlr", "rps", "rpsrank"]), default="nll", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--epochs", default=20, show_default=True)
@click.option("--lr", default=1e-4, show_default=True)
@click.option("--batch", "batch_size", default=128, show_default=True)
@click.option("--hidden", default="128,128", show_default=True, help="Comma-separated layer widths.")
@click.option("--activation", type=click.Choice(["relu", "tanh"]), default="relu", show_default=True)
@click.option("--sigma", default=0.1, show_default=True)
@click.option("--rank-weight", default=1.0, show_default=True)
@click.option("--rps-censoring", type=click.Choice(["truncate", "ipcw"]), default="truncate", show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.pass_context
def train(ctx, cohort_csv, manifest, drop, model_path, objective, seed, epochs, lr, batch_size,
          hidden, activation, sigma, rank_weight, rps_censoring, workers):
    """Train one model and keep the best validation checkpoint."""
    try:
        widths = [int(h) for h in hidden.split(",") if h.strip()]
    except ValueError:
        raise click.BadParameter("widths must be integers", param_hint="--hidden")
    res = _client(ctx).post("/train", {
        **_cohort_body(cohort_csv, manifest, drop), "model_path": _abspath(model_path),
        "objective": objective, "seed": seed, "epochs": epochs, "lr": lr,
        "batch_size": batch_size, "hidden": widths, "activation": activation, "sigma": sigma,
        "rank_weight": rank_weight, "rps_censoring": rps_censoring, "workers": workers})
    _emit({"best_epoch": res["best_epoch"], "epochs": len(res["history"]),
           "final": res["history"][-1] if res["history"] else None})


@main.command()
@with_cohort
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--ties", type=click.Choice(["half", "strict"]), default="half", show_default=True)
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-csv", type=click.Path(), default=None, help="Table row: C-td and IBS x100, KM-cal raw.")
@click.pass_context
def evaluate(ctx, cohort_csv, manifest, drop, model_path, split, ties, out_json, out_csv):
    """C-td, IBS with its decomposition, and KM-Cal on one split."""
    _emit(_client(ctx).post("/evaluate", {
        **_cohort_body(cohort_csv, manifest, drop), "model_path": _abspath(model_path),
        "split": split, "ties": ties, "out_json": _abspath(out_json), "out_csv": _abspath(out_csv)}))


@main.command()
@with_cohort
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--attribute", "attributes", multiple=True, required=True, help="Sensitive attribute (repeatable).")
@click.option("--bootstrap", "B", default=1000, show_default=True)
@click.option("--alpha", default=0.05, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--mode", type=click.Choice(["bootstrap", "subsample"]), default="bootstrap", show_default=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--out-json", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None, help="Directory for decision matrix CSVs.")
@click.pass_context
def fairness(ctx, cohort_csv, manifest, drop, model_path, attributes, B, alpha, seed, mode, split,
             out_json, out_dir):
    """CI-td, KM-Fair decision matrix and Hosmer-Lemeshow per group."""
    _emit(_client(ctx).post("/fairness", {
        **_cohort_body(cohort_csv, manifest, drop), "model_path": _abspath(model_path),
        "attributes": list(attributes), "B": B, "alpha": alpha, "seed": seed, "mode": mode,
        "split": split, "out_json": _abspath(out_json), "out_dir": _abspath(out_dir)}))


@main.command()
@with_cohort
@click.option("--model", "model_path", required=True, type=click.Path())
@click.option("--reps", default=10, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--split", type=click.Choice(["train", "val", "test"]), default="test", show_default=True)
@click.option("--workers", default=1, show_default=True)
@click.option("--top-k", default=10, show_default=True)
@click.option("--out-csv", type=click.Path(), default=None)
@click.option("--out-plot", type=click.Path(), default=None, help="Top-k bar chart data.")
@click.pass_context
def importance(ctx, cohort_csv, manifest, drop, model_path, reps, seed, split, workers, top_k,
               out_csv, out_plot):
    """Permutation importance by mean drop in C-td."""
    res = _client(ctx).post("/importance", {
        **_cohort_body(cohort_csv, manifest, drop), "model_path": _abspath(model_path),
        "reps": reps, "seed": seed, "split": split, "workers": workers, "top_k": top_k,
        "out_csv": _abspath(out_csv), "out_plot": _abspath(out_plot)})
    _emit({"baseline_c_td": res["baseline_c_td"],
           "features": [{k: f[k] for k in ("feature", "mean_delta", "std")} for f in res["features"]]})


@main.command()
@with_cohort
@click.option("--split", type=click.Choice(["train", "val", "test"]), default=None, help="Default: all records.")
@click.option("--attribute", default=None, help="Add one curve per group of this attribute.")
@click.option("--target", type=click.Choice(["event", "censoring"]), default="event", show_default=True)
@click.option("--out-csv", type=click.Path(), default=None)
@click.pass_context
def km(ctx, cohort_csv, manifest, drop, split, attribute, target, out_csv):
    """Kaplan-Meier curve on the cohort's time grid."""
    res = _client(ctx).post("/km", {
        **_cohort_body(cohort_csv, manifest, drop), "split": split, "attribute": attribute,
        "target": target, "out_csv": _abspath(out_csv)})
    if out_csv is None:
        names = list(res["curves"])
        click.echo(",".join(["bin", "time", *names]))
        for k, t in enumerate(res["cut_points"]):
            click.echo(",".join([str(k), repr(t), *[repr(res["curves"][n][k]) for n in names]]))
    else:
        _emit(res)


def _run_body(config_path, sets):
    return {"config_path": _abspath(config_path), "overrides": _parse_set(sets)}


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config JSON.")
@click.option("--set", "sets", multiple=True, help="Override a config key: key=value (JSON value).")
@click.pass_context
def report(ctx, config_path, sets):
    """Run the full pipeline and print the per-objective summary."""
    res = _client(ctx).post("/report", _run_body(config_path, sets))
    _emit(res["summary"])


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(), help="Run config JSON.")
@click.option("--drop", multiple=True, required=True, help="Attribute to withhold (repeatable).")
@click.option("--set", "sets", multiple=True, help="Override a config key: key=value (JSON value).")
@click.pass_context
def ablate(ctx, config_path, drop, sets):
    """Retrain without attributes and report deltas against the baseline."""
    res = _client(ctx).post("/ablate", {**_run_body(config_path, sets), "drop": list(drop)})
    _emit({"dropped": res["dropped"], "n_significant": res["n_significant"], "deltas": res["deltas"]})


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    uvicorn.run("survaudit.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
