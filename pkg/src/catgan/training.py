"""Alternating discriminator/generator training with SMORMS3."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Optional, Union

import numpy as np

from . import objectives as obj
from . import autodiff as ad
from .autodiff import Tape, Tensor, backward
from .data import Dataset, LabeledSplit, Standardizer
from .errors import ContractError, TrainingAborted
from .evaluation import error_rate, half_shot_match, predict_classes
from .nn import Network, build_paper_discriminator, build_paper_generator, forward, init_network
from .optim import DEFAULT_MAX_LR, Smorms3State, smorms3_step

logger = logging.getLogger(__name__)

OBJECTIVES = ("unsupervised", "semi_supervised", "rim", "gan_k1")


@dataclass
class TrainConfig:
    objective: str = "unsupervised"
    k: int = 2
    batch_size: int = 100
    steps_per_epoch: Optional[int] = None
    epochs: int = 200
    lam: float = 1.0
    gamma: float = 1e-4
    m: Optional[int] = None
    seed: int = 0
    max_lr: float = DEFAULT_MAX_LR
    preset: str = "synthetic2d"
    d_steps: int = 1
    g_steps: int = 1
    match_size: Optional[int] = None
    k1_variant: str = "entropy"
    fake_batch_norm: str = "separate"
    mem_cap: Optional[float] = None
    noisy_entropy: bool = True

    def __post_init__(self):
        if self.objective not in OBJECTIVES:
            raise ContractError(f"unknown objective {self.objective!r}; valid: {OBJECTIVES}")
        if self.batch_size < 2:
            raise ContractError("batch_size must be at least 2 (batch norm)")
        if self.lam < 0 or self.gamma < 0:
            raise ContractError("lam and gamma must be non-negative")
        if self.k < 1 or (self.k == 1) != (self.objective == "gan_k1"):
            raise ContractError("k must be 1 exactly for the gan_k1 objective and >= 2 otherwise")
        if self.fake_batch_norm not in ("separate", "joint"):
            raise ContractError(f"fake_batch_norm must be 'separate' or 'joint', got {self.fake_batch_norm!r}")

    @property
    def samples_per_step(self) -> int:
        return self.m or self.batch_size

    @property
    def uses_generator(self) -> bool:
        return self.objective != "rim"


@dataclass
class StepMetrics:
    terms: obj.ObjectiveTerms
    d_objective: float
    g_objective: float


@dataclass
class EpochMetrics:
    epoch: int
    H_X: float
    condH_X: float
    condH_G: float
    H_G: float
    CE: float
    val_error: float = float("nan")

    def row(self) -> list:
        return [self.epoch, self.H_X, self.condH_X, self.condH_G, self.H_G, self.CE, self.val_error]


METRIC_COLUMNS = ("epoch", "H_X", "condH_X", "condH_G", "H_G", "CE", "val_error")


@dataclass
class TrainingState:
    disc: Network
    gen: Optional[Network]
    d_opt: Smorms3State
    g_opt: Optional[Smorms3State]
    rng: np.random.Generator
    step: int = 0


@dataclass
class TrainedPair:
    disc: Network
    gen: Optional[Network]
    history: list = field(default_factory=list)
    scaler: Optional[Standardizer] = None
    config: Optional[TrainConfig] = None


def _has_noise(net: Network) -> bool:
    return net.spec.input_noise_std > 0 or any(l.noise_std > 0 for l in net.spec.layers)


def _probs(out: Tensor, config: "TrainConfig") -> Tensor:
    return out if config.objective == "gan_k1" else obj.clamp_probs(out)


def _disc_outputs(disc: Network, real, fake, rng, config: "TrainConfig", update_stats: bool,
                  want_noisy: bool = True):
    """Discriminator outputs on a real batch and (optionally) a generated batch.

    Returns ``(clean_real, noisy_real, clean_fake)``: clamped class
    probabilities, or raw logits for the K=1 objective.  With
    ``fake_batch_norm="joint"`` real and generated rows share one batch-norm
    pass; otherwise each batch is normalized by its own statistics.
    """
    noisy_wanted = want_noisy and _has_noise(disc)
    if fake is not None and config.fake_batch_norm == "joint":
        b = len(real.data) if isinstance(real, Tensor) else len(real)
        both = ad.concat_rows([real, fake])
        clean = _probs(forward(disc, both, rng, noise=False, update_stats=update_stats), config)
        clean_real, clean_fake = ad.slice_rows(clean, 0, b), ad.slice_rows(clean, b, clean.shape[0])
        noisy_real = clean_real
        if noisy_wanted:
            noisy = _probs(forward(disc, both, rng, noise=True, update_stats=False), config)
            noisy_real = ad.slice_rows(noisy, 0, b)
        return clean_real, noisy_real, clean_fake
    clean_real = _probs(forward(disc, real, rng, noise=False, update_stats=update_stats), config)
    noisy_real = clean_real
    if noisy_wanted:
        noisy_real = _probs(forward(disc, real, rng, noise=True, update_stats=False), config)
    clean_fake = None
    if fake is not None:
        clean_fake = _probs(forward(disc, fake, rng, noise=False, update_stats=False), config)
    return clean_real, noisy_real, clean_fake


def _cond(clean, noisy):
    if clean is noisy:
        return obj.conditional_entropy(clean)
    return obj.noisy_cross_entropy_surrogate(clean, noisy)


def sample_z(rng, m: int, z_dim: int) -> np.ndarray:
    return rng.uniform(0.0, 1.0, size=(m, z_dim))


def _check_finite(value: float, state: TrainingState, terms: obj.ObjectiveTerms, phase: str) -> None:
    if not math.isfinite(value):
        snapshot = {"step": state.step, "phase": phase, **terms.as_dict()}
        raise TrainingAborted(f"non-finite {phase} loss at step {state.step}: {snapshot}", snapshot)


def discriminator_step(state: TrainingState, batch_x, config: TrainConfig,
                       labeled_x=None, labeled_y=None) -> tuple[obj.ObjectiveTerms, float]:
    """One ascent step on the discriminator objective; the generator is frozen."""
    disc, gen, rng = state.disc, state.gen, state.rng
    fake = None
    if config.uses_generator:
        z = sample_z(rng, config.samples_per_step, gen.spec.in_dim)
        fake = forward(gen, z, rng, noise=True, update_stats=False).data
    disc.zero_grad()
    with Tape():
        terms = obj.ObjectiveTerms(lam=config.lam if config.objective == "semi_supervised" else 0.0)
        want_noisy = config.noisy_entropy and config.objective != "gan_k1"
        real, noisy_real, fake_out = _disc_outputs(disc, batch_x, fake, rng, config, update_stats=True,
                                                   want_noisy=want_noisy)
        if config.objective == "gan_k1":
            target = obj.catgan_k1_objective(real, fake_out, config.k1_variant)
            terms.cond_entropy_X = obj.k1_generator_loss(real)
            terms.cond_entropy_G = obj.k1_generator_loss(fake_out)
        else:
            terms.marginal_entropy_X = obj.marginal_entropy(real)
            terms.cond_entropy_X = _cond(real, noisy_real)
            if config.objective == "rim":
                target = obj.rim_loss(real, disc, config.gamma, None if real is noisy_real else noisy_real)
            else:
                terms.cond_entropy_G = obj.conditional_entropy(fake_out)
                terms.marginal_entropy_G = obj.marginal_entropy(fake_out)
                if labeled_x is not None:
                    _, noisy_l, _ = _disc_outputs(disc, labeled_x, None, rng, config, update_stats=False)
                    terms.labeled_ce = obj.cross_entropy(labeled_y, noisy_l)
                target = obj.discriminator_loss(terms)
        value = float(target)
        _check_finite(value, state, terms.as_floats(), "discriminator")
        backward(-target)
    params = disc.parameters()
    smorms3_step(params, [p.grad for p in params], state.d_opt)
    disc.zero_grad()
    return terms.as_floats(), value


def generator_step(state: TrainingState, batch_x, config: TrainConfig) -> tuple[obj.ObjectiveTerms, float]:
    """One descent step on the generator objective; the discriminator is frozen.

    ``batch_x`` is only used when real and generated rows share batch norm.
    """
    disc, gen, rng = state.disc, state.gen, state.rng
    z = sample_z(rng, config.samples_per_step, gen.spec.in_dim)
    gen.zero_grad()
    with Tape():
        fake = forward(gen, z, rng, noise=True, update_stats=True)
        terms = obj.ObjectiveTerms()
        if config.fake_batch_norm == "joint":
            _, _, out = _disc_outputs(disc, Tensor(batch_x), fake, rng, config, update_stats=False,
                                      want_noisy=False)
        else:
            out = _probs(forward(disc, fake, rng, noise=False, update_stats=False), config)
        if config.objective == "gan_k1":
            loss = obj.k1_generator_loss(out)
            terms.cond_entropy_G = loss
        else:
            terms.cond_entropy_G = obj.conditional_entropy(out)
            terms.marginal_entropy_G = obj.marginal_entropy(out)
            loss = obj.generator_loss(terms)
        value = float(loss)
        _check_finite(value, state, terms.as_floats(), "generator")
        backward(loss)
    params = gen.parameters()
    smorms3_step(params, [p.grad for p in params], state.g_opt)
    gen.zero_grad()
    disc.zero_grad()
    return terms.as_floats(), value


def train_step(state: TrainingState, batch_x, config: TrainConfig, labeled_x=None, labeled_y=None) -> StepMetrics:
    """``d_steps`` discriminator updates followed by ``g_steps`` generator updates."""
    for _ in range(config.d_steps):
        d_terms, d_value = discriminator_step(state, batch_x, config, labeled_x, labeled_y)
    g_value = 0.0
    if config.uses_generator:
        for _ in range(config.g_steps):
            g_terms, g_value = generator_step(state, batch_x, config)
        d_terms.cond_entropy_G = g_terms.cond_entropy_G
        d_terms.marginal_entropy_G = g_terms.marginal_entropy_G
    state.step += 1
    return StepMetrics(d_terms, d_value, g_value)


def build_networks(config: TrainConfig, in_dim: int):
    ss = np.random.SeedSequence(config.seed)
    d_seed, g_seed, run_seed = ss.spawn(3)
    disc = init_network(build_paper_discriminator(config.preset, config.k, in_dim), d_seed)
    gen = None
    if config.uses_generator:
        gen = init_network(build_paper_generator(config.preset, in_dim), g_seed)
    return disc, gen, np.random.default_rng(run_seed)


def init_state(config: TrainConfig, in_dim: int) -> TrainingState:
    disc, gen, rng = build_networks(config, in_dim)
    return TrainingState(
        disc, gen,
        Smorms3State.for_params(disc.parameters(), config.max_lr, config.mem_cap),
        Smorms3State.for_params(gen.parameters(), config.max_lr, config.mem_cap) if gen is not None else None,
        rng,
    )


def validation_error(disc: Network, validation: Dataset, config: TrainConfig) -> float:
    """Raw error for semi-supervised runs with K = C, matched error otherwise."""
    pred = predict_classes(disc, validation.inputs)
    truth = validation.labels
    if config.objective == "semi_supervised" and config.k == validation.class_count:
        return error_rate(pred, truth)
    n = len(truth) if config.match_size is None else min(config.match_size, len(truth))
    table = half_shot_match(pred[:n], truth[:n], n_pseudo=config.k, n_classes=validation.class_count)
    return error_rate(pred, truth, table)


def train(data: Union[Dataset, LabeledSplit], config: TrainConfig, callback=None) -> TrainedPair:
    """Run ``epochs * steps_per_epoch`` alternating steps over reshuffled batches.

    A plain labeled :class:`Dataset` is also used as its own validation set.
    ``callback(epoch_metrics)`` is invoked after every epoch.
    """
    if isinstance(data, LabeledSplit):
        unlabeled, labeled, validation = data.unlabeled, data.labeled, data.validation
    else:
        unlabeled, labeled = data, None
        validation = data if data.labels is not None else None
    if config.objective == "semi_supervised" and labeled is None:
        raise ContractError("semi_supervised training needs a LabeledSplit with labeled examples")
    x = unlabeled.inputs
    n, b = len(x), config.batch_size
    if n < b:
        raise ContractError(f"dataset has {n} examples, fewer than batch size {b}")
    steps = config.steps_per_epoch or n // b
    state = init_state(config, unlabeled.feature_dim)
    batch_rng = np.random.default_rng(np.random.SeedSequence(config.seed).spawn(4)[3])
    use_labels = labeled is not None and config.objective == "semi_supervised"
    if use_labels:
        labeled_y = labeled.one_hot()
        if labeled_y.shape[1] != config.k:
            raise ContractError(f"labeled data has {labeled_y.shape[1]} classes but K={config.k}")

    history = []
    order, cursor = batch_rng.permutation(n), 0
    for epoch in range(config.epochs):
        sums = np.zeros(5)
        for _ in range(steps):
            if cursor + b > n:
                order, cursor = batch_rng.permutation(n), 0
            idx = order[cursor:cursor + b]
            cursor += b
            lx = ly = None
            if use_labels:
                li = batch_rng.choice(len(labeled), size=b, replace=len(labeled) < b)
                lx, ly = labeled.inputs[li], labeled_y[li]
            m = train_step(state, x[idx], config, lx, ly)
            t = m.terms
            sums += (t.marginal_entropy_X, t.cond_entropy_X, t.cond_entropy_G, t.marginal_entropy_G, t.labeled_ce)
        means = sums / steps
        val = validation_error(state.disc, validation, config) if validation is not None else float("nan")
        em = EpochMetrics(epoch + 1, *means.tolist(), val_error=val)
        history.append(em)
        logger.debug("epoch %d: %s", epoch + 1, em)
        if callback is not None:
            callback(em)
    return TrainedPair(state.disc, state.gen, history, config=config)
