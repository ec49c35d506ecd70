"""Entropy terms and the composed CatGAN, semi-supervised, RIM and K=1 objectives.

All entropies are in nats.  Inputs may be tensors (to differentiate through
them) or plain arrays; every function returns a scalar :class:`Tensor`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DivergenceError

PROB_FLOOR = 1e-4

ArrayLike = Union[Tensor, np.ndarray, Sequence]


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def clamp_probs(probs: ArrayLike, floor: float = PROB_FLOOR) -> Tensor:
    """Floor every probability at ``floor`` and renormalize the rows."""
    return ad.normalize_rows(ad.min_clamp(_t(probs), floor))


def _rows(probs: ArrayLike) -> Tensor:
    p = _t(probs)
    if p.ndim == 1:
        p = Tensor(p.data[None, :]) if not p.requires_grad else p
    if p.ndim != 2:
        raise ContractError(f"class probabilities must be B x K, got shape {p.shape}")
    return p


def entropy(p: ArrayLike) -> Tensor:
    """Entropy of a single distribution (1-D)."""
    return ad.neg(ad.reduce_sum(ad.xlogx(_t(p))))


def conditional_entropy(probs: ArrayLike) -> Tensor:
    """Mean per-row entropy of a B x K matrix of class distributions."""
    p = _rows(probs)
    return ad.neg(ad.reduce_sum(ad.xlogx(p))) * (1.0 / p.shape[0])


def marginal_entropy(probs: ArrayLike) -> Tensor:
    """Entropy of the batch-mean class distribution."""
    p = _rows(probs)
    return entropy(ad.reduce_mean(p, axis=0))


def mc_generator_entropy(disc, gen, z_batch, rng=None) -> Tensor:
    """Monte-Carlo estimate of the expected conditional entropy on generated samples.

    Both networks run in whatever mode they are in; noise injection is off
    and running statistics are left untouched.
    """
    from .nn import forward

    x = forward(gen, z_batch, rng, noise=False, update_stats=False)
    return conditional_entropy(clamp_probs(forward(disc, x, rng, noise=False, update_stats=False)))


@dataclass(frozen=True)
class PriorSpec:
    kind: str = "uniform"
    weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in ("uniform", "explicit"):
            raise ContractError(f"prior kind must be 'uniform' or 'explicit', got {self.kind!r}")
        if self.kind == "explicit":
            if self.weights is None:
                raise ContractError("explicit prior needs weights")
            w = np.asarray(self.weights, dtype=np.float64)
            if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
                raise ContractError(f"prior weights must be non-negative and sum to 1, got {w.tolist()}")
            object.__setattr__(self, "weights", tuple(w.tolist()))

    def probabilities(self, k: int) -> np.ndarray:
        if self.kind == "uniform":
            return np.full(k, 1.0 / k)
        if len(self.weights) != k:
            raise ContractError(f"prior has {len(self.weights)} classes, expected {k}")
        return np.asarray(self.weights)


def marginal_prior_term(probs: ArrayLike, prior: PriorSpec = PriorSpec()) -> Tensor:
    """``-KL(mean_row || prior)``.  Equals ``marginal_entropy - ln K`` for a uniform prior."""
    p = _rows(probs)
    pbar = ad.reduce_mean(p, axis=0)
    q = prior.probabilities(p.shape[1])
    bad = (q == 0) & (pbar.data > 0)
    if np.any(bad):
        raise DivergenceError(
            f"prior assigns zero mass to classes {np.flatnonzero(bad).tolist()} that the batch uses"
        )
    logq = np.log(np.where(q > 0, q, 1.0))
    return ad.sub(ad.reduce_sum(ad.mul(pbar, Tensor(logq))), ad.reduce_sum(ad.xlogx(pbar)))


def cross_entropy(labels: ArrayLike, probs: ArrayLike) -> Tensor:
    """Mean of ``-log p[label]`` for one-hot ``labels``."""
    y = np.asarray(labels.data if isinstance(labels, Tensor) else labels, dtype=np.float64)
    p = _rows(probs)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape != p.shape:
        raise ContractError(f"labels {y.shape} and probabilities {p.shape} differ in shape")
    if not (np.all((y == 0) | (y == 1)) and np.all(y.sum(axis=1) == 1)):
        raise ContractError("every label row must be one-hot")
    picked = ad.take_rows(p, y.argmax(axis=1))
    return ad.neg(ad.reduce_mean(ad.log(picked)))


def noisy_cross_entropy_surrogate(clean_probs: ArrayLike, noisy_probs: ArrayLike) -> Tensor:
    """Batch-mean ``-sum p_clean * log p_noisy``.

    Stands in for the conditional entropy when the network is trained with
    injected noise.  The clean probabilities act as constant weights: the
    gradient flows only through the noisy log term.
    """
    c, n = _rows(clean_probs), _rows(noisy_probs)
    if c.shape != n.shape:
        raise ContractError(f"clean {c.shape} and noisy {n.shape} probabilities differ in shape")
    c = ad.detach(c)
    return ad.neg(ad.reduce_sum(ad.mul(c, ad.log(n)))) * (1.0 / c.shape[0])


@dataclass
class ObjectiveTerms:
    """Entropy terms for one step.  Fields hold tensors while differentiating."""

    marginal_entropy_X: object = 0.0
    cond_entropy_X: object = 0.0
    cond_entropy_G: object = 0.0
    marginal_entropy_G: object = 0.0
    labeled_ce: object = 0.0
    lam: float = 0.0

    def as_floats(self) -> "ObjectiveTerms":
        return ObjectiveTerms(**{f.name: float(getattr(self, f.name)) for f in fields(self)})

    def as_dict(self) -> dict:
        return {f.name: float(getattr(self, f.name)) for f in fields(self)}


def discriminator_loss(terms: ObjectiveTerms):
    """Maximization target ``H_X - E_x H + E_z H - lam * CE``.

    The labeled cross-entropy is subtracted: it has to be minimized, so it
    enters the maximized objective with a negative sign.
    """
    out = terms.marginal_entropy_X - terms.cond_entropy_X + terms.cond_entropy_G
    if terms.lam:
        out = out - terms.lam * terms.labeled_ce
    return out


def generator_loss(terms: ObjectiveTerms):
    """Minimization target ``-H_G + E_z H``."""
    return terms.cond_entropy_G - terms.marginal_entropy_G


def weight_penalty(disc_params) -> Tensor:
    """Sum of squared weights; accepts a network or a list of weight tensors."""
    weights = disc_params.weights() if hasattr(disc_params, "weights") else list(disc_params)
    total = Tensor(0.0)
    for w in weights:
        total = total + ad.sum_squares(w)
    return total


def rim_loss(probs_X: ArrayLike, disc_params, gamma: float, noisy_probs: ArrayLike = None) -> Tensor:
    """Maximization target ``H_X - E_x H - gamma * ||W||^2``.

    With ``noisy_probs`` the conditional entropy is replaced by the noisy
    cross-entropy surrogate, as in CatGAN training.
    """
    if gamma < 0:
        raise ContractError("gamma must be non-negative")
    cond = (conditional_entropy(probs_X) if noisy_probs is None
            else noisy_cross_entropy_surrogate(probs_X, noisy_probs))
    out = marginal_entropy(probs_X) - cond
    if gamma:
        out = out - gamma * weight_penalty(disc_params)
    return out


def _binary_entropy(p: Tensor) -> Tensor:
    return ad.neg(ad.add(ad.xlogx(p), ad.xlogx(ad.sub(1.0, p))))


def catgan_k1_objective(disc_logit: ArrayLike, gen_logit: ArrayLike, variant: str = "entropy") -> Tensor:
    """Single-class reduction with a logistic discriminator (maximized by D).

    ``variant="entropy"`` pushes real probabilities toward 0 or 1;
    ``variant="cross_entropy"`` replaces the real-data entropy by
    ``log p(y=1|x)``.  Both push generated samples toward 0.5.
    """
    px = ad.sigmoid(_t(disc_logit))
    pg = ad.sigmoid(_t(gen_logit))
    fake = ad.reduce_mean(_binary_entropy(pg))
    if variant == "entropy":
        real = ad.neg(ad.reduce_mean(_binary_entropy(px)))
    elif variant == "cross_entropy":
        real = ad.reduce_mean(ad.log(px))
    else:
        raise ContractError(f"variant must be 'entropy' or 'cross_entropy', got {variant!r}")
    return real + fake


def k1_generator_loss(gen_logit: ArrayLike) -> Tensor:
    """Generator side of the single-class reduction (minimized by G)."""
    return ad.reduce_mean(_binary_entropy(ad.sigmoid(_t(gen_logit))))


def gan_objective(disc_logit: ArrayLike, gen_logit: ArrayLike) -> Tensor:
    """Standard binary GAN value ``E log p_x + E log(1 - p_G)``."""
    px = ad.sigmoid(_t(disc_logit))
    pg = ad.sigmoid(_t(gen_logit))
    return ad.reduce_mean(ad.log(px)) + ad.reduce_mean(ad.log(ad.sub(1.0, pg)))


def max_entropy(k: int) -> float:
    return math.log(k)
