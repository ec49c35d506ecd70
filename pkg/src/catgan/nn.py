"""Fully connected discriminator and generator networks.

Each layer applies, in order: affine map, optional batch normalization,
additive Gaussian noise (training mode only), activation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError

ACTIVATIONS = ("leaky_relu", "sigmoid", "linear", "softmax")
LEAK = 0.1
BN_EPS = 1e-5
BN_MOMENTUM = 0.9


@dataclass(frozen=True)
class LayerSpec:
    in_dim: int
    out_dim: int
    activation: str = "leaky_relu"
    batch_norm: bool = True
    noise_std: float = 0.0

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ContractError(f"layer dims must be positive, got {self.in_dim}->{self.out_dim}")
        if self.activation not in ACTIVATIONS:
            raise ContractError(f"unknown activation {self.activation!r}; valid: {ACTIVATIONS}")
        if self.noise_std < 0:
            raise ContractError("noise_std must be non-negative")


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[LayerSpec, ...]
    input_noise_std: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ContractError("a network needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise ContractError(
                    f"layer {i} outputs {a.out_dim} features but layer {i + 1} expects {b.in_dim}"
                )
        for layer in self.layers[:-1]:
            if layer.activation == "softmax":
                raise ContractError("softmax is only allowed on the final layer")
        if self.input_noise_std < 0:
            raise ContractError("input_noise_std must be non-negative")

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim

    @property
    def widths(self) -> list[int]:
        return [self.layers[0].in_dim] + [layer.out_dim for layer in self.layers]

    def to_dict(self) -> dict:
        return {"layers": [asdict(l) for l in self.layers], "input_noise_std": self.input_noise_std}

    @classmethod
    def from_dict(cls, d: dict) -> "NetworkSpec":
        return cls(tuple(LayerSpec(**l) for l in d["layers"]), d.get("input_noise_std", 0.0))


@dataclass
class LayerParams:
    weight: Tensor
    bias: Tensor
    gamma: Optional[Tensor] = None
    beta: Optional[Tensor] = None
    running_mean: Optional[np.ndarray] = None
    running_var: Optional[np.ndarray] = None

    def tensors(self) -> list[Tensor]:
        out = [self.weight, self.bias]
        if self.gamma is not None:
            out += [self.gamma, self.beta]
        return out


@dataclass
class Network:
    spec: NetworkSpec
    layers: list[LayerParams]
    mode: str = "train"

    def parameters(self) -> list[Tensor]:
        """All trainable tensors in declaration order (W, b, gamma, beta per layer)."""
        return [t for layer in self.layers for t in layer.tensors()]

    def weights(self) -> list[Tensor]:
        return [layer.weight for layer in self.layers]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def train(self) -> "Network":
        self.mode = "train"
        return self

    def eval(self) -> "Network":
        self.mode = "eval"
        return self

    def parameter_count(self) -> int:
        return sum(p.size for p in self.parameters())

    def __call__(self, x, rng=None, noise: bool = True, update_stats: bool = True) -> Tensor:
        return forward(self, x, rng, noise=noise, update_stats=update_stats)


def init_network(spec: NetworkSpec, seed) -> Network:
    """Glorot-uniform weights, zero biases, unit BN scale, zero BN shift."""
    rng = np.random.default_rng(seed)
    layers = []
    for ls in spec.layers:
        limit = math.sqrt(6.0 / (ls.in_dim + ls.out_dim))
        w = rng.uniform(-limit, limit, size=(ls.in_dim, ls.out_dim))
        params = LayerParams(Tensor(w, requires_grad=True), Tensor(np.zeros(ls.out_dim), requires_grad=True))
        if ls.batch_norm:
            params.gamma = Tensor(np.ones(ls.out_dim), requires_grad=True)
            params.beta = Tensor(np.zeros(ls.out_dim), requires_grad=True)
            params.running_mean = np.zeros(ls.out_dim)
            params.running_var = np.ones(ls.out_dim)
        layers.append(params)
    return Network(spec, layers)


def _activate(h: Tensor, kind: str) -> Tensor:
    if kind == "leaky_relu":
        return ad.leaky_relu(h, LEAK)
    if kind == "sigmoid":
        return ad.sigmoid(h)
    if kind == "softmax":
        return ad.softmax(h)
    return h


def forward(net: Network, batch_inputs, rng=None, noise: bool = True, update_stats: bool = True) -> Tensor:
    """Run ``net`` on a B x I batch.

    In train mode batch norm uses batch statistics and, when ``noise`` is
    set, Gaussian noise is injected at the input and after each normalized
    layer.  ``update_stats`` controls whether running BN statistics move
    toward this batch.  Eval mode is deterministic and ignores ``rng``.
    """
    x = batch_inputs if isinstance(batch_inputs, Tensor) else Tensor(batch_inputs)
    if x.ndim != 2 or x.shape[1] != net.spec.in_dim:
        raise ContractError(f"expected a batch of shape (B, {net.spec.in_dim}), got {x.shape}")
    train = net.mode == "train"
    inject = train and noise
    if inject and (net.spec.input_noise_std > 0 or any(l.noise_std > 0 for l in net.spec.layers)):
        if rng is None:
            raise ContractError("noise injection needs an rng")
    if inject and net.spec.input_noise_std > 0:
        x = x + rng.normal(0.0, net.spec.input_noise_std, size=x.shape)
    h = x
    for ls, p in zip(net.spec.layers, net.layers):
        h = ad.affine(h, p.weight, p.bias)
        if ls.batch_norm:
            if train:
                if h.shape[0] < 2:
                    raise ContractError("train-mode batch norm needs a batch of at least 2 rows")
                h, (mu, var) = ad.batch_norm(h, p.gamma, p.beta, BN_EPS)
                if update_stats:
                    n = h.shape[0]
                    p.running_mean = BN_MOMENTUM * p.running_mean + (1 - BN_MOMENTUM) * mu
                    p.running_var = BN_MOMENTUM * p.running_var + (1 - BN_MOMENTUM) * var * n / (n - 1)
            else:
                h, _ = ad.batch_norm(h, p.gamma, p.beta, BN_EPS, running=(p.running_mean, p.running_var))
        if inject and ls.noise_std > 0:
            h = h + rng.normal(0.0, ls.noise_std, size=h.shape)
        h = _activate(h, ls.activation)
    return h


def predict_proba(net: Network, inputs, chunk: int = 4096) -> np.ndarray:
    """Eval-mode output as a plain array, computed in chunks without recording."""
    mode = net.mode
    net.eval()
    try:
        x = np.asarray(inputs, dtype=np.float64)
        parts = [forward(net, Tensor(x[i:i + chunk])).data for i in range(0, len(x), chunk)]
    finally:
        net.mode = mode
    if not parts:
        return np.zeros((0, net.spec.out_dim))
    return np.concatenate(parts, axis=0)


# ------------------------------------------------------------------- presets

PRESETS = ("synthetic2d", "pi_mnist")


def _chain(widths, final_activation, hidden_noise, final_bn=False, input_noise=0.0) -> NetworkSpec:
    layers = []
    for i, (a, b) in enumerate(zip(widths, widths[1:])):
        last = i == len(widths) - 2
        layers.append(LayerSpec(
            a, b,
            activation=final_activation if last else "leaky_relu",
            batch_norm=final_bn if last else True,
            noise_std=0.0 if last else hidden_noise,
        ))
    return NetworkSpec(tuple(layers), input_noise)


def build_paper_discriminator(preset: str, k: int = 2, in_dim: Optional[int] = None) -> NetworkSpec:
    """Discriminator architecture for ``preset``.

    ``k == 1`` gives a single linear logit for the logistic reduction;
    otherwise the output is a K-way softmax.
    """
    final = "linear" if k == 1 else "softmax"
    if preset == "synthetic2d":
        return _chain([in_dim or 2, 100, 100, 100, k], final, hidden_noise=0.05)
    if preset == "pi_mnist":
        return _chain([in_dim or 784, 1000, 500, 250, 250, 250, k], final,
                      hidden_noise=0.3, input_noise=0.3)
    raise ContractError(f"unknown preset {preset!r}; valid: {PRESETS}")


def build_paper_generator(preset: str, out_dim: Optional[int] = None) -> NetworkSpec:
    if preset == "synthetic2d":
        return _chain([10, 100, 100, 100, out_dim or 2], "linear", hidden_noise=0.05)
    if preset == "pi_mnist":
        return _chain([128, 500, 500, 1000, out_dim or 784], "sigmoid", hidden_noise=0.0)
    raise ContractError(f"unknown preset {preset!r}; valid: {PRESETS}")
