"""Plain-text ``key = value`` experiment files.

Blank lines and ``#`` comments are ignored.  Every key must be a field of
:class:`ExperimentConfig`; unknown keys are rejected with the list of valid
ones.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Optional

from .errors import ContractError
from .optim import DEFAULT_MAX_LR
from .training import TrainConfig

DATASETS = ("blobs", "moons", "circles", "mnist")
EXPERIMENT_OBJECTIVES = ("catgan", "catgan_semi", "rim", "kmeans", "gan_k1")
_TRAIN_OBJECTIVE = {"catgan": "unsupervised", "catgan_semi": "semi_supervised", "rim": "rim", "gan_k1": "gan_k1"}


@dataclass
class ExperimentConfig:
    dataset: str = "circles"
    objective: str = "catgan"
    k: Optional[int] = None
    n_labeled: int = 0
    n_validation: int = 0
    lam: float = 1.0
    gamma: float = 1e-4
    seeds: list = field(default_factory=lambda: [0])
    preset: Optional[str] = None
    epochs: int = 200
    steps_per_epoch: Optional[int] = None
    batch_size: int = 100
    max_lr: float = DEFAULT_MAX_LR
    n_samples: int = 1000
    noise_std: float = 0.08
    data_dir: str = "data/mnist"
    match_size: Optional[int] = None
    kmeans_iters: int = 100
    d_steps: int = 1
    g_steps: int = 1
    k1_variant: str = "entropy"
    fake_batch_norm: str = "separate"
    mem_cap: Optional[float] = None
    noisy_entropy: bool = True
    out: str = "runs"

    def __post_init__(self):
        if self.dataset not in DATASETS:
            raise ContractError(f"unknown dataset {self.dataset!r}; valid: {', '.join(DATASETS)}")
        if self.objective not in EXPERIMENT_OBJECTIVES:
            raise ContractError(f"unknown objective {self.objective!r}; valid: {', '.join(EXPERIMENT_OBJECTIVES)}")
        if self.k is None:
            self.k = 1 if self.objective == "gan_k1" else (3 if self.dataset == "blobs" else 10 if self.dataset == "mnist" else 2)
        if self.k < 1:
            raise ContractError("k must be at least 1")
        if self.n_labeled and self.objective != "catgan_semi":
            raise ContractError("n_labeled is only valid with objective=catgan_semi")
        if self.objective == "catgan_semi" and self.n_labeled <= 0:
            raise ContractError("objective=catgan_semi needs n_labeled > 0")
        if self.preset is None:
            self.preset = "pi_mnist" if self.dataset == "mnist" else "synthetic2d"
        if not self.seeds:
            raise ContractError("seeds must list at least one seed")

    @property
    def synthetic(self) -> bool:
        return self.dataset != "mnist"

    def train_config(self, seed: int) -> TrainConfig:
        if self.objective == "kmeans":
            raise ContractError("k-means is not trained by gradient descent")
        return TrainConfig(
            objective=_TRAIN_OBJECTIVE[self.objective], k=self.k, batch_size=self.batch_size,
            steps_per_epoch=self.steps_per_epoch, epochs=self.epochs, lam=self.lam, gamma=self.gamma,
            seed=seed, max_lr=self.max_lr, preset=self.preset, d_steps=self.d_steps, g_steps=self.g_steps,
            match_size=self.match_size, k1_variant=self.k1_variant, fake_batch_norm=self.fake_batch_norm,
            mem_cap=self.mem_cap, noisy_entropy=self.noisy_entropy,
        )


def valid_keys() -> list[str]:
    return [f.name for f in fields(ExperimentConfig)]


def _convert(name: str, text: str, default):
    text = text.strip()
    if name == "seeds":
        try:
            return [int(s) for s in text.replace(" ", "").split(",") if s]
        except ValueError:
            raise ContractError(f"seeds must be comma-separated integers, got {text!r}") from None
    if text.lower() in ("none", ""):
        return None
    kind = type(default) if default is not None else None
    if name in ("k", "steps_per_epoch", "match_size"):
        kind = int
    elif name == "mem_cap":
        kind = float
    elif name == "preset":
        kind = str
    if kind is bool:
        if text.lower() in ("true", "yes", "1"):
            return True
        if text.lower() in ("false", "no", "0"):
            return False
        raise ContractError(f"{name}: expected true or false, got {text!r}")
    try:
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ContractError(f"{name}: cannot parse {text!r} as {kind.__name__}") from None
    return text


def parse_config(text: str, **overrides) -> ExperimentConfig:
    defaults = ExperimentConfig()
    keys = valid_keys()
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ContractError(f"line {lineno}: expected key = value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in keys:
            raise ContractError(f"line {lineno}: unknown key {key!r}; valid keys: {', '.join(keys)}")
        values[key] = _convert(key, value, getattr(defaults, key))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig(**values)


def load_config(path, **overrides) -> ExperimentConfig:
    return parse_config(Path(path).read_text(encoding="utf-8"), **overrides)


def dump_config(config: ExperimentConfig) -> str:
    lines = []
    for key, value in dataclasses.asdict(config).items():
        if key == "seeds":
            value = ",".join(str(s) for s in value)
        lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"
