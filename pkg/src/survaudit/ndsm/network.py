"""Dense feed-forward network with explicit forward and backward passes."""
from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .losses import OBJECTIVES, pmf_from_logits

ACTIVATIONS = ("relu", "tanh")


@dataclass
class Isd:
    """Individual survival distribution over ``T+1`` event bins."""

    pmf: np.ndarray

    @property
    def cif(self) -> np.ndarray:
        return np.cumsum(self.pmf, axis=-1)

    @property
    def survival(self) -> np.ndarray:
        return 1.0 - self.cif


def _act(z, kind):
    if kind == "relu":
        return np.maximum(z, 0.0)
    return np.tanh(z)


def _act_grad(z, a, kind):
    if kind == "relu":
        return (z > 0).astype(z.dtype)
    return 1.0 - a * a


@dataclass
class SurvivalNet:
    """D -> H -> ... -> H -> (T+1) network plus its training metadata.

    ``params`` alternates weight matrices and bias vectors. The Adam moments
    and step counter live alongside so a checkpoint resumes exactly.
    """

    params: list[np.ndarray]
    activation: str = "relu"
    objective: str = "nll"
    seed: int = 0
    input_names: list[str] = field(default_factory=list)
    adam_m: list[np.ndarray] = field(default_factory=list)
    adam_v: list[np.ndarray] = field(default_factory=list)
    step: int = 0

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.objective not in OBJECTIVES:
            raise ValueError(f"unknown objective {self.objective!r}")
        if not self.adam_m:
            self.adam_m = [np.zeros_like(p) for p in self.params]
            self.adam_v = [np.zeros_like(p) for p in self.params]

    @property
    def n_inputs(self) -> int:
        return self.params[0].shape[0]

    @property
    def n_outputs(self) -> int:
        return self.params[-1].shape[0]

    @property
    def hidden(self) -> list[int]:
        return [w.shape[1] for w in self.params[0:-2:2]]

    def n_params(self) -> int:
        return sum(p.size for p in self.params)

    def copy(self) -> "SurvivalNet":
        return SurvivalNet(
            [p.copy() for p in self.params], self.activation, self.objective, self.seed,
            list(self.input_names), [m.copy() for m in self.adam_m],
            [v.copy() for v in self.adam_v], self.step,
        )

    # ---- forward / backward ----------------------------------------------

    def forward(self, X: np.ndarray):
        """Logits and the activations needed by :meth:`backward`."""
        a = np.asarray(X, dtype=float)
        cache = [(None, a)]
        n_layers = len(self.params) // 2
        for layer in range(n_layers):
            W, b = self.params[2 * layer], self.params[2 * layer + 1]
            z = a @ W + b
            if layer < n_layers - 1:
                a = _act(z, self.activation)
            else:
                a = z
            cache.append((z, a))
        return a, cache

    def backward(self, cache, g_out: np.ndarray) -> list[np.ndarray]:
        grads = [None] * len(self.params)
        n_layers = len(self.params) // 2
        g = g_out
        for layer in reversed(range(n_layers)):
            z, a = cache[layer + 1]
            if layer < n_layers - 1:
                g = g * _act_grad(z, a, self.activation)
            a_prev = cache[layer][1]
            grads[2 * layer] = a_prev.T @ g
            grads[2 * layer + 1] = g.sum(axis=0)
            if layer:
                g = g @ self.params[2 * layer].T
        return grads

    def logits(self, X) -> np.ndarray:
        return self.forward(X)[0]

    def predict_pmf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite input features")
        return pmf_from_logits(self.logits(np.atleast_2d(X)), self.objective)


def predict_isd(model: SurvivalNet, x) -> Isd:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != model.n_inputs:
        raise ValueError(f"expected a feature vector of length {model.n_inputs}")
    return Isd(model.predict_pmf(x[None, :])[0])


def init_network(n_inputs: int, n_outputs: int, hidden=(128, 128), *, activation: str = "relu",
                 objective: str = "nll", seed: int = 0,
                 input_names: list[str] | None = None, fan_in: int | None = None) -> SurvivalNet:
    """Uniform fan-in initialisation, biases zero.

    First-layer rows are drawn from a stream keyed by (seed, input name), so
    removing one input leaves the other rows' draws unchanged. ``fan_in``
    fixes the first-layer scale; passing the full input count keeps the
    remaining rows identical when inputs are withheld.
    """
    names = list(input_names) if input_names is not None else [f"x{i}" for i in range(n_inputs)]
    if len(names) != n_inputs:
        raise ValueError("input_names length must equal n_inputs")
    sizes = [n_inputs, *hidden, n_outputs]
    params = []
    first = np.empty((n_inputs, sizes[1]))
    for i, name in enumerate(names):
        rng = np.random.default_rng([seed, zlib.crc32(name.encode())])
        first[i] = rng.uniform(-1.0, 1.0, sizes[1])
    params += [first / np.sqrt(max(fan_in or n_inputs, 1)), np.zeros(sizes[1])]
    rng = np.random.default_rng([seed, 0x5EED])
    for n_in, n_out in zip(sizes[1:-1], sizes[2:]):
        bound = 1.0 / np.sqrt(n_in)
        params += [rng.uniform(-bound, bound, (n_in, n_out)), np.zeros(n_out)]
    return SurvivalNet(params, activation, objective, seed, names)
