"""Adam training loop with validation-concordance checkpoint selection."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ..km import km_estimate
from ..metrics import c_td
from .losses import OBJECTIVES, objective_loss, rps_targets
from .network import SurvivalNet, init_network

log = logging.getLogger(__name__)

# rows per gradient chunk; fixed so the reduction order never depends on workers
CHUNK = 32


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    objective: str = "nll"
    epochs: int = 20
    lr: float = 1e-4
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: tuple[int, ...] = (128, 128)
    activation: str = "relu"
    sigma: float = 0.1
    rank_weight: float = 1.0
    rps_censoring: str = "truncate"
    seed: int = 0
    init_fan_in: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ValueError(f"objective must be one of {OBJECTIVES}")
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.epochs < 0 or self.batch_size < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("epochs must be >= 0, batch_size and hidden widths >= 1")
        if not (self.lr > 0 and self.sigma > 0):
            raise ValueError("lr and sigma must be positive")
        if self.activation not in ("relu", "tanh"):
            raise ValueError("activation must be relu or tanh")
        if self.rps_censoring not in ("truncate", "ipcw"):
            raise ValueError("rps_censoring must be truncate or ipcw")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        d.pop("workers")
        return d


@dataclass
class TrainResult:
    model: SurvivalNet
    best_epoch: int
    history: list[dict] = field(default_factory=list)


def adam_step(model: SurvivalNet, grads, lr, beta1=0.9, beta2=0.999, eps=1e-8):
    model.step += 1
    t = model.step
    for p, g, m, v in zip(model.params, grads, model.adam_m, model.adam_v):
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        m_hat = m / (1 - beta1 ** t)
        v_hat = v / (1 - beta2 ** t)
        p -= lr * m_hat / (np.sqrt(v_hat) + eps)


def batch_gradient(model: SurvivalNet, X, delta, tbin, cfg: TrainConfig, pool=None, rps_weight=None):
    """Loss and parameter gradients for one batch.

    Rows are processed in fixed-size chunks and the chunk gradients are summed
    in chunk order, so results are identical for any number of workers.
    """
    starts = range(0, len(X), CHUNK)
    mapper = pool.map if pool is not None else map
    fwd = list(mapper(lambda s: model.forward(X[s:s + CHUNK]), starts))
    logits = np.vstack([f[0] for f in fwd])
    value, g_logits = objective_loss(logits, delta, tbin, model.objective, cfg.sigma,
                                     cfg.rank_weight, rps_weight)
    parts = list(mapper(lambda sc: model.backward(sc[1][1], g_logits[sc[0]:sc[0] + CHUNK]),
                        zip(starts, fwd)))
    grads = [np.zeros_like(p) for p in model.params]
    for part in parts:
        for g, gp in zip(grads, part):
            g += gp
    return value, grads


def _val_ctd(model, val) -> float:
    if val is None or len(val) == 0:
        return float("nan")
    try:
        return c_td(model.predict_pmf(val.X), val.delta, val.time_bin)
    except ValueError:
        return float("nan")


def train(train_set, cfg: TrainConfig, val_set=None, model: SurvivalNet | None = None,
          callback=None) -> TrainResult:
    """Minimise the configured objective with mini-batch Adam.

    After each epoch the model is scored by validation C-td; the best epoch's
    weights are returned (the last epoch when no validation set is given).
    Shuffling uses a generator seeded from ``cfg.seed``, so the result is
    bit-identical for a given input and seed.
    """
    if len(train_set) == 0:
        raise TrainingError("empty training split")
    X = np.asarray(train_set.X, dtype=float)
    delta = np.asarray(train_set.delta, dtype=np.int64)
    tbin = np.asarray(train_set.time_bin, dtype=np.int64)
    if model is None:
        model = init_network(X.shape[1], train_set.grid.T + 1, cfg.hidden,
                             activation=cfg.activation, objective=cfg.objective,
                             seed=cfg.seed, input_names=list(train_set.columns),
                             fan_in=cfg.init_fan_in)
    if model.n_outputs != train_set.grid.T + 1:
        raise TrainingError("model output width does not match the time grid")
    rps_weight = None
    if cfg.objective in ("rps", "rpsrank") and cfg.rps_censoring == "ipcw":
        G = km_estimate(tbin, delta, train_set.grid.T, target="censoring")
        rps_weight, _ = rps_targets(delta, tbin, train_set.grid.T, G)
    elif cfg.rps_censoring not in ("ipcw", "truncate"):
        raise ValueError("rps_censoring must be 'ipcw' or 'truncate'")
    rng = np.random.default_rng([cfg.seed, 0xBA7C4])
    best = model.copy()
    best_score, best_epoch = -np.inf, 0
    history = []
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    try:
        for epoch in range(1, cfg.epochs + 1):
            order = rng.permutation(len(X))
            total, n_batches = 0.0, 0
            for s in range(0, len(X), cfg.batch_size):
                idx = order[s:s + cfg.batch_size]
                value, grads = batch_gradient(model, X[idx], delta[idx], tbin[idx], cfg, pool,
                                              None if rps_weight is None else rps_weight[idx])
                if not np.isfinite(value):
                    raise TrainingError(
                        f"non-finite loss at epoch {epoch}, batch {n_batches}; "
                        f"try a smaller learning rate"
                    )
                adam_step(model, grads, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
                total += value
                n_batches += 1
            if not all(np.all(np.isfinite(p)) for p in model.params):
                raise TrainingError(f"non-finite parameters after epoch {epoch}")
            score = _val_ctd(model, val_set)
            history.append({"epoch": epoch, "loss": total / max(n_batches, 1), "val_c_td": score})
            log.debug("epoch %d loss %.5f val C-td %.4f", epoch, history[-1]["loss"], score)
            if callback is not None:
                callback(history[-1])
            if val_set is None or (np.isfinite(score) and score > best_score):
                best, best_score, best_epoch = model.copy(), score, epoch
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(best, best_epoch, history)
