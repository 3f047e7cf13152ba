"""Small dense feed-forward networks with hand-written backpropagation and Adam.

Only the fixed affine + activation composition needed by the interpolation
and shift networks is supported. Batches are row-major: ``x`` has shape
``(batch, input_dim)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

__all__ = [
    "ACTIVATIONS",
    "Layer",
    "MLP",
    "AdamState",
    "TrainConfig",
    "TrainResult",
    "init_params",
    "forward",
    "backward",
    "adam_step",
    "fit",
]

log = logging.getLogger(__name__)

LEAKY_SLOPE = 0.01


def _softplus(z):
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def _softplus_grad(z, a):
    # sigmoid(z) = 1 - exp(-softplus(z))
    return -np.expm1(-a)


def _sigmoid_grad(z, a):
    return a * (1.0 - a)


def _leaky(z):
    return np.where(z > 0.0, z, LEAKY_SLOPE * z)


def _leaky_grad(z, a):
    return np.where(z > 0.0, 1.0, LEAKY_SLOPE)


# name -> (activation, derivative w.r.t. pre-activation given (z, activation(z)))
ACTIVATIONS: dict[str, tuple[Callable, Callable]] = {
    "softplus": (_softplus, _softplus_grad),
    "sigmoid": (expit, _sigmoid_grad),
    "leakyrelu": (_leaky, _leaky_grad),
    "identity": (lambda z: z, lambda z, a: np.ones_like(z)),
}


def _canonical_activation(name: str) -> str:
    key = name.lower().replace("_", "").replace("-", "")
    if key not in ACTIVATIONS:
        raise ValueError(f"unknown activation {name!r}; expected one of {sorted(ACTIVATIONS)}")
    return key


@dataclass
class Layer:
    weights: np.ndarray  # (out, in)
    biases: np.ndarray  # (out,)
    activation: str = "identity"

    def __post_init__(self):
        self.activation = _canonical_activation(self.activation)
        self.weights = np.asarray(self.weights, dtype=float)
        self.biases = np.asarray(self.biases, dtype=float)
        if self.weights.ndim != 2 or self.biases.shape != (self.weights.shape[0],):
            raise ValueError(
                f"layer shapes inconsistent: weights {self.weights.shape}, biases {self.biases.shape}"
            )


@dataclass
class MLP:
    """A stack of dense layers. ``trained`` is set by :func:`fit`."""

    layers: list[Layer]
    trained: bool = False

    def __post_init__(self):
        if not self.layers:
            raise ValueError("an MLP needs at least one layer")
        for prev, nxt in zip(self.layers, self.layers[1:]):
            if nxt.weights.shape[1] != prev.weights.shape[0]:
                raise ValueError(
                    f"layer dims do not chain: {prev.weights.shape} -> {nxt.weights.shape}"
                )

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def output_dim(self) -> int:
        return self.layers[-1].weights.shape[0]

    @property
    def dims(self) -> list[int]:
        return [self.input_dim] + [lay.weights.shape[0] for lay in self.layers]

    @property
    def activations(self) -> list[str]:
        return [lay.activation for lay in self.layers]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order (W0, b0, W1, b1, ...)."""
        out = []
        for lay in self.layers:
            out.extend((lay.weights, lay.biases))
        return out

    def copy(self) -> "MLP":
        return MLP(
            [Layer(lay.weights.copy(), lay.biases.copy(), lay.activation) for lay in self.layers],
            trained=self.trained,
        )

    def __call__(self, x):
        return forward(self, x)


def init_params(
    dims: Sequence[int],
    activations: Sequence[str] | str,
    seed: int = 0,
) -> MLP:
    """Uniform initialisation in ``[-1/sqrt(fan_in), 1/sqrt(fan_in)]``.

    ``dims`` lists every layer width including input and output, e.g.
    ``[1, 10, 10, 1]``. A single activation name is used for the hidden layers
    and the output layer is Identity; a list gives one name per layer.
    """
    dims = [int(d) for d in dims]
    if len(dims) < 2 or min(dims) < 1:
        raise ValueError(f"need at least input and output dims, all positive; got {dims}")
    n_layers = len(dims) - 1
    if isinstance(activations, str):
        activations = [activations] * (n_layers - 1) + ["identity"]
    if len(activations) != n_layers:
        raise ValueError(f"expected {n_layers} activations, got {len(activations)}")
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, act in zip(dims[:-1], dims[1:], activations):
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_out, fan_in))
        b = rng.uniform(-bound, bound, size=fan_out)
        layers.append(Layer(w, b, act))
    return MLP(layers)


def _check_input(net: MLP, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None] if net.input_dim == 1 else x[None, :]
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"input width {x.shape[-1]} does not match net input_dim {net.input_dim}")
    return x


def forward(net: MLP, x, return_cache: bool = False):
    """Evaluate the network on a batch. With ``return_cache`` the per-layer
    inputs and pre-activations are returned for :func:`backward`."""
    a = _check_input(net, x)
    cache = []
    for lay in net.layers:
        z = a @ lay.weights.T + lay.biases
        a_in = a
        a = ACTIVATIONS[lay.activation][0](z)
        cache.append((a_in, z, a))
    if return_cache:
        return a, cache
    return a


def backward(net: MLP, cache, upstream) -> tuple[list[np.ndarray], np.ndarray]:
    """Backpropagate ``upstream = dL/d(output)`` through a cached forward pass.

    Returns the parameter gradients (same order as :meth:`MLP.params`) and
    the gradient with respect to the network input.
    """
    g = np.asarray(upstream, dtype=float)
    if len(cache) != len(net.layers):
        raise ValueError("cache does not belong to this network")
    if g.shape != (cache[-1][1].shape):
        raise ValueError(f"upstream shape {g.shape} != output shape {cache[-1][1].shape}")
    grads: list[np.ndarray] = [None] * (2 * len(net.layers))
    for k in range(len(net.layers) - 1, -1, -1):
        lay = net.layers[k]
        a_in, z, a_out = cache[k]
        if lay.activation != "identity":
            g = g * ACTIVATIONS[lay.activation][1](z, a_out)
        grads[2 * k] = g.T @ a_in
        grads[2 * k + 1] = g.sum(axis=0)
        g = g @ lay.weights
    return grads, g


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def for_net(cls, net: MLP, lr: float) -> "AdamState":
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        return cls(
            lr=lr,
            m=[np.zeros_like(p) for p in net.params()],
            v=[np.zeros_like(p) for p in net.params()],
        )


def adam_step(net: MLP, grads: Sequence[np.ndarray], state: AdamState) -> tuple[MLP, AdamState]:
    """One bias-corrected Adam update, applied in place."""
    params = net.params()
    if len(grads) != len(params) or len(state.m) != len(params):
        raise ValueError("gradient/state list does not match network parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return net, state


@dataclass(frozen=True)
class TrainConfig:
    lr: float
    loss_threshold: float
    max_epochs: int = 10000
    seed: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if not self.loss_threshold > 0:
            raise ValueError("loss_threshold must be > 0")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")


@dataclass(frozen=True)
class TrainResult:
    net: MLP
    loss: float
    epochs: int
    converged: bool
    history: np.ndarray


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""


def fit(
    net: MLP,
    loss_and_grads: Callable[[MLP], tuple[float, list[np.ndarray]]],
    config: TrainConfig,
    name: str = "net",
) -> TrainResult:
    """Full-batch Adam until the loss drops to ``config.loss_threshold``.

    ``loss_and_grads(net)`` returns the current loss and parameter gradients.
    Hitting ``max_epochs`` is not an error; ``converged`` is False instead.
    The network with the lowest loss seen is returned.
    """
    state = AdamState.for_net(net, config.lr)
    history = []
    best_loss, best = np.inf, net.copy()
    loss = np.inf
    epoch = 0
    while epoch < config.max_epochs:
        loss, grads = loss_and_grads(net)
        if not np.isfinite(loss):
            raise DivergenceError(f"{name}: non-finite loss at epoch {epoch}")
        history.append(loss)
        if loss < best_loss:
            best_loss, best = loss, net.copy()
        if loss <= config.loss_threshold:
            break
        adam_step(net, grads, state)
        epoch += 1
    else:
        loss, _ = loss_and_grads(net)
        history.append(loss)
        if loss < best_loss:
            best_loss, best = loss, net.copy()
    converged = best_loss <= config.loss_threshold
    if not converged:
        log.warning("%s: threshold %.3g unmet after %d epochs (loss %.3g)",
                    name, config.loss_threshold, epoch, best_loss)
    best.trained = True
    return TrainResult(best, float(best_loss), epoch, converged, np.asarray(history))


def net_state(net: MLP, prefix: str) -> tuple[dict, dict[str, np.ndarray]]:
    """Metadata and named arrays describing ``net`` for serialisation."""
    meta = {"dims": net.dims, "activations": net.activations, "trained": net.trained}
    arrays = {}
    for k, lay in enumerate(net.layers):
        arrays[f"{prefix}.W{k}"] = lay.weights
        arrays[f"{prefix}.b{k}"] = lay.biases
    return meta, arrays


def net_from_state(meta: dict, arrays: dict[str, np.ndarray], prefix: str) -> MLP:
    dims = meta["dims"]
    layers = []
    for k, act in enumerate(meta["activations"]):
        w = arrays[f"{prefix}.W{k}"]
        if w.shape != (dims[k + 1], dims[k]):
            raise ValueError(f"{prefix}: layer {k} has shape {w.shape}, expected {(dims[k + 1], dims[k])}")
        layers.append(Layer(w, arrays[f"{prefix}.b{k}"], act))
    return MLP(layers, trained=bool(meta["trained"]))
