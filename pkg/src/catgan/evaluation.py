"""Category matching, error rates, k-means, Parzen-window likelihood, decision grids."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import logsumexp

from .errors import ContractError
from .nn import Network, predict_proba

logger = logging.getLogger(__name__)

CHANCE_THRESHOLD = 0.55


@dataclass(frozen=True)
class MatchingTable:
    """Total map from pseudo-category to true class (not necessarily injective)."""

    mapping: tuple

    def __getitem__(self, k: int) -> int:
        return self.mapping[k]

    def __len__(self) -> int:
        return len(self.mapping)

    def apply(self, predictions) -> np.ndarray:
        return np.asarray(self.mapping, dtype=np.int64)[np.asarray(predictions, dtype=np.int64)]

    @classmethod
    def identity(cls, k: int) -> "MatchingTable":
        return cls(tuple(range(k)))


def half_shot_match(predictions, truths, n_pseudo: Optional[int] = None,
                    n_classes: Optional[int] = None) -> MatchingTable:
    """Map every pseudo-category to the true class it co-occurs with most often.

    Ties go to the smallest class id.  Pseudo-categories that never occur
    map to class 0 (with a warning).
    """
    pred = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truths, dtype=np.int64)
    if pred.size == 0:
        raise ContractError("matching needs at least one example")
    if pred.shape != truth.shape:
        raise ContractError(f"{pred.size} predictions but {truth.size} labels")
    k = n_pseudo or int(pred.max()) + 1
    c = n_classes or int(truth.max()) + 1
    counts = np.zeros((k, c), dtype=np.int64)
    np.add.at(counts, (pred, truth), 1)
    unseen = np.flatnonzero(counts.sum(axis=1) == 0)
    if len(unseen):
        logger.warning("pseudo-categories %s never predicted; mapped to class 0", unseen.tolist())
    return MatchingTable(tuple(int(i) for i in counts.argmax(axis=1)))


def predict_classes(disc: Network, inputs) -> np.ndarray:
    return predict_proba(disc, inputs).argmax(axis=1)


def error_rate(predictions, truths, matching: Optional[MatchingTable] = None) -> float:
    pred = np.asarray(predictions, dtype=np.int64)
    if matching is not None:
        pred = matching.apply(pred)
    return 100.0 * (1.0 - float(np.mean(pred == np.asarray(truths))))


def classification_error(disc: Network, dataset, matching: Optional[MatchingTable] = None) -> float:
    """Percentage of misclassified examples, argmax over eval-mode class probabilities."""
    if dataset.labels is None:
        raise ContractError(f"dataset {dataset.name!r} has no labels")
    return error_rate(predict_classes(disc, dataset.inputs), dataset.labels, matching)


def matched_error(predictions, truths, match_index=None) -> tuple[float, MatchingTable]:
    """Match on ``match_index`` (default: all examples), score on all examples."""
    pred = np.asarray(predictions)
    truth = np.asarray(truths)
    sel = slice(None) if match_index is None else np.asarray(match_index)
    table = half_shot_match(pred[sel], truth[sel], n_pseudo=int(pred.max()) + 1,
                            n_classes=int(truth.max()) + 1)
    return error_rate(pred, truth, table), table


# ------------------------------------------------------------------- k-means

@dataclass
class KMeansResult:
    centers: np.ndarray
    assignments: np.ndarray
    inertia_history: list

    def __iter__(self):
        return iter((self.centers, self.assignments))

    @property
    def inertia(self) -> float:
        return self.inertia_history[-1]


def _sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    d = (x * x).sum(axis=1)[:, None] - 2.0 * x @ centers.T + (centers * centers).sum(axis=1)[None, :]
    return np.maximum(d, 0.0)


def _kmeans_pp(x: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(x)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(x, x[chosen])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            remaining = np.setdiff1d(np.arange(n), chosen)
            idx = int(rng.choice(remaining))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(x, x[idx:idx + 1])[:, 0])
    return x[chosen].copy()


def kmeans(inputs, k: int, seed=0, max_iters: int = 300) -> KMeansResult:
    """Lloyd's algorithm with k-means++ seeding.

    An empty cluster is re-seeded at the point farthest from its assigned
    center.  Stops when assignments no longer change.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if not 1 <= k <= len(x):
        raise ContractError(f"k={k} must be between 1 and the number of points ({len(x)})")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(x, k, rng)
    assign = None
    history = []
    for _ in range(max_iters):
        d = _sq_dists(x, centers)
        new = d.argmin(axis=1)
        history.append(float(d[np.arange(len(x)), new].sum()))
        if assign is not None and np.array_equal(new, assign):
            break
        assign = new
        for j in range(k):
            members = assign == j
            if members.any():
                centers[j] = x[members].mean(axis=0)
            else:
                far = int(d[np.arange(len(x)), assign].argmax())
                centers[j] = x[far]
                assign[far] = j
                d[far] = 0.0
    return KMeansResult(centers, assign, history)


# ------------------------------------------------------------------- Parzen

BANDWIDTH_GRID = np.logspace(math.log10(0.05), 0.0, 10)


@dataclass(frozen=True)
class ParzenConfig:
    bandwidth: Union[float, str] = "select"
    grid: tuple = tuple(BANDWIDTH_GRID.tolist())

    def __post_init__(self):
        if self.bandwidth != "select" and not float(self.bandwidth) > 0:
            raise ContractError("explicit bandwidth must be positive")


@dataclass(frozen=True)
class ParzenResult:
    mean: float
    stderr: float
    bandwidth: float


def parzen_log_density(samples, points, sigma: float, chunk: int = 1000) -> np.ndarray:
    """Log density of an isotropic Gaussian mixture centred on ``samples`` at each point."""
    s = np.asarray(samples, dtype=np.float64)
    x = np.asarray(points, dtype=np.float64)
    if len(s) < 1:
        raise ContractError("Parzen estimate needs at least one sample")
    dim = s.shape[1]
    norm = -0.5 * dim * math.log(2 * math.pi * sigma * sigma) - math.log(len(s))
    out = np.empty(len(x))
    for i in range(0, len(x), chunk):
        d2 = _sq_dists(x[i:i + chunk], s)
        out[i:i + chunk] = logsumexp(-d2 / (2 * sigma * sigma), axis=1) + norm
    return out


def select_bandwidth(samples, validation, grid=BANDWIDTH_GRID) -> float:
    scores = [parzen_log_density(samples, validation, float(s)).mean() for s in grid]
    return float(grid[int(np.argmax(scores))])


def parzen_log_likelihood(samples_from_G, test_set, config: ParzenConfig = ParzenConfig(),
                          validation=None) -> ParzenResult:
    """Mean test log-likelihood under a Parzen window on generated samples, with standard error."""
    if config.bandwidth == "select":
        if validation is None:
            raise ContractError("bandwidth selection needs a validation set")
        sigma = select_bandwidth(samples_from_G, validation, np.asarray(config.grid))
    else:
        sigma = float(config.bandwidth)
    ll = parzen_log_density(samples_from_G, test_set, sigma)
    stderr = float(ll.std(ddof=1) / math.sqrt(len(ll))) if len(ll) > 1 else 0.0
    return ParzenResult(float(ll.mean()), stderr, sigma)


# --------------------------------------------------------------------- grid

def decision_grid(disc: Network, bounds, resolution: int, transform=None) -> np.ndarray:
    """Evaluate D on a ``resolution`` x ``resolution`` grid over ``(x0min, x0max, x1min, x1max)``.

    Returns rows ``(x0, x1, argmax class, max prob, chance flag)``.  ``transform``
    maps grid coordinates to network inputs (e.g. standardization).
    """
    if disc.spec.in_dim != 2:
        raise ContractError(f"decision grid needs a 2-D input discriminator, got {disc.spec.in_dim}-D")
    if resolution < 1:
        raise ContractError("resolution must be positive")
    x0min, x0max, x1min, x1max = bounds
    xs = np.linspace(x0min, x0max, resolution)
    ys = np.linspace(x1min, x1max, resolution)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
    probs = predict_proba(disc, pts if transform is None else transform(pts))
    top = probs.max(axis=1)
    return np.column_stack([pts, probs.argmax(axis=1), top, top < CHANCE_THRESHOLD])
