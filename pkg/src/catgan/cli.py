"""Command line entry point: train, eval, grid, sample, parzen."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np

from . import data as datamod
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import ExperimentConfig, load_config
from .data import Dataset, LabeledSplit, Standardizer
from .errors import CatGANError, ContractError, TrainingAborted
from .evaluation import (ParzenConfig, decision_grid, half_shot_match, kmeans, matched_error,
                         parzen_log_likelihood, predict_classes, error_rate)
from .nn import forward
from .training import METRIC_COLUMNS, sample_z, train

log = logging.getLogger("catgan")

EXIT_ERROR = 2
EXIT_DIVERGED = 3


def fmt(v) -> str:
    """Locale-independent number formatting for CSV cells."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])


# ------------------------------------------------------------------ datasets

def load_dataset(spec: str, seed: int = 0, n: int = datamod.DEFAULT_SIZE,
                 noise_std: float = datamod.DEFAULT_NOISE, data_dir: str = "data/mnist") -> Dataset:
    """Resolve a dataset argument.

    ``blobs``, ``moons`` and ``circles`` are generated from ``seed``;
    ``mnist``/``mnist-test`` and ``mnist-train`` read IDX files from
    ``data_dir``; anything else is read as a CSV file.
    """
    if spec in datamod.SYNTHETIC:
        return datamod.make_synthetic(spec, n=n, seed=seed, noise_std=noise_std)
    if spec in ("mnist", "mnist-test"):
        return datamod.load_mnist_dir(data_dir, "t10k")
    if spec == "mnist-train":
        return datamod.load_mnist_dir(data_dir, "train")
    path = Path(spec)
    if not path.exists():
        raise ContractError(f"unknown dataset {spec!r}: not a synthetic name, mnist split or existing CSV file")
    return datamod.read_csv(path)


def _dataset_from_meta(spec: str, meta: dict, seed: Optional[int]) -> Dataset:
    return load_dataset(spec, meta.get("seed", 0) if seed is None else seed, meta.get("n_samples", datamod.DEFAULT_SIZE),
                        meta.get("noise_std", datamod.DEFAULT_NOISE), meta.get("data_dir", "data/mnist"))


def _scaler(ckpt: Checkpoint, dim: int) -> Standardizer:
    return ckpt.scaler if ckpt.scaler is not None else Standardizer.identity(dim)


# --------------------------------------------------------------------- train

def _prepare(cfg: ExperimentConfig, seed: int):
    """Return (training data, scaler, evaluation dataset) in network coordinates."""
    if cfg.synthetic:
        raw = load_dataset(cfg.dataset, seed, cfg.n_samples, cfg.noise_std)
        scaler = Standardizer.fit(raw.inputs)
    else:
        raw = load_dataset("mnist-train", data_dir=cfg.data_dir)
        scaler = Standardizer.identity(raw.feature_dim)
    ds = scaler.transform(raw)
    if cfg.objective == "catgan_semi" or cfg.n_validation:
        split = datamod.split_semi_supervised(ds, cfg.n_labeled, cfg.n_validation, seed)
        return split, scaler, split.validation if split.validation is not None else ds
    return ds, scaler, ds


def _final_error(pred, truth, cfg: ExperimentConfig) -> tuple[float, float]:
    raw = error_rate(pred, truth) if cfg.k == int(truth.max()) + 1 else float("nan")
    n = len(truth) if cfg.match_size is None else min(cfg.match_size, len(truth))
    matched, _ = matched_error(pred, truth, np.arange(n))
    return matched, raw


def run_seed(cfg: ExperimentConfig, seed: int, out: Path, suffix: str) -> list:
    data, scaler, eval_ds = _prepare(cfg, seed)
    if cfg.objective == "kmeans":
        x = data.unlabeled.inputs if isinstance(data, LabeledSplit) else data.inputs
        result = kmeans(x, cfg.k, seed=seed, max_iters=cfg.kmeans_iters)
        pred = result.assignments if eval_ds is data else np.argmin(
            ((eval_ds.inputs[:, None, :] - result.centers[None]) ** 2).sum(-1), axis=1)
        matched, raw = _final_error(pred, eval_ds.labels, cfg)
        return [seed, cfg.dataset, cfg.objective, matched, 100.0 - matched, raw]

    tcfg = cfg.train_config(seed)
    rows = []
    try:
        pair = train(data, tcfg, callback=lambda m: rows.append(m.row()))
    finally:
        write_rows(out / f"metrics{suffix}.csv", METRIC_COLUMNS, rows)
    meta = {"dataset": cfg.dataset, "objective": cfg.objective, "k": cfg.k, "seed": seed,
            "n_samples": cfg.n_samples, "noise_std": cfg.noise_std, "data_dir": cfg.data_dir,
            "preset": cfg.preset}
    save_checkpoint(out / f"checkpoint{suffix}.bin", pair.disc, pair.gen, scaler, meta)
    pred = predict_classes(pair.disc, eval_ds.inputs)
    matched, raw = _final_error(pred, eval_ds.labels, cfg)
    return [seed, cfg.dataset, cfg.objective, matched, 100.0 - matched, raw]


SUMMARY_COLUMNS = ("seed", "dataset", "objective", "matched_error", "matched_accuracy", "raw_error")


def cmd_train(args) -> int:
    seeds = [args.seed] if args.seed is not None else None
    cfg = load_config(args.config, seeds=seeds, out=args.out)
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    summary = []
    status = 0
    for seed in cfg.seeds:
        suffix = "" if len(cfg.seeds) == 1 else f"_seed{seed}"
        try:
            row = run_seed(cfg, seed, out, suffix)
        except TrainingAborted as exc:
            print(f"seed {seed}: training aborted: {exc}", file=sys.stderr)
            row = [seed, cfg.dataset, cfg.objective, float("nan"), float("nan"), float("nan")]
            status = EXIT_DIVERGED
        summary.append(row)
        print(f"seed {seed}: matched error {fmt_pct(row[3])}")
    with open(out / "summary.csv", "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for row in summary:
            w.writerow([fmt(v) if isinstance(v, (int, float, np.number)) else v for v in row])
    return status


def fmt_pct(v: float) -> str:
    return f"{v:.2f}%"


# ---------------------------------------------------------------------- eval

def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    ds = _dataset_from_meta(args.dataset, ckpt.meta, args.seed)
    if ds.labels is None:
        raise ContractError(f"dataset {args.dataset!r} has no labels")
    x = _scaler(ckpt, ds.feature_dim).apply(ds.inputs)
    pred = predict_classes(ckpt.disc, x)
    n = min(args.match_size, len(ds))
    table = half_shot_match(pred[:n], ds.labels[:n], n_pseudo=ckpt.disc.spec.out_dim,
                            n_classes=max(ds.class_count, int(ds.labels.max()) + 1))
    matched = error_rate(pred, ds.labels, table)
    raw = error_rate(pred, ds.labels) if ckpt.disc.spec.out_dim == ds.class_count else float("nan")
    print(f"matched error: {fmt_pct(matched)}")
    print(f"raw error: {fmt_pct(raw)}")
    write_rows(args.out, ("pseudo_category", "class"), enumerate(table.mapping))
    return 0


# ---------------------------------------------------------------- grid/sample

def _parse_bounds(text: str):
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise ContractError(f"bounds must be four numbers, got {text!r}") from None
    if len(vals) != 4 or vals[0] >= vals[1] or vals[2] >= vals[3]:
        raise ContractError("bounds must be x0min,x0max,x1min,x1max with min < max")
    return vals


def cmd_grid(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    scaler = _scaler(ckpt, ckpt.disc.spec.in_dim)
    rows = decision_grid(ckpt.disc, _parse_bounds(args.bounds), args.res, transform=scaler.apply)
    write_rows(args.out, ("x0", "x1", "class", "max_prob", "chance"),
               ([r[0], r[1], int(r[2]), r[3], bool(r[4])] for r in rows))
    return 0


def generate(ckpt: Checkpoint, n: int, seed: int) -> np.ndarray:
    """``n`` generator samples in data coordinates."""
    if ckpt.gen is None:
        raise ContractError("checkpoint has no generator")
    dim = ckpt.gen.spec.out_dim
    if n == 0:
        return np.zeros((0, dim))
    z = sample_z(np.random.default_rng(seed), n, ckpt.gen.spec.in_dim)
    out = np.concatenate([forward(ckpt.gen, z[i:i + 4096]).data for i in range(0, n, 4096)])
    return _scaler(ckpt, dim).invert(out)


def cmd_sample(args) -> int:
    if args.n < 0:
        raise ContractError("--n must be non-negative")
    ckpt = load_checkpoint(args.checkpoint)
    samples = generate(ckpt, args.n, args.seed)
    write_rows(args.out, [f"x{i}" for i in range(samples.shape[1])], samples)
    return 0


# -------------------------------------------------------------------- parzen

def _validation_spec(test_spec: str) -> str:
    if test_spec in datamod.SYNTHETIC:
        return test_spec
    if test_spec in ("mnist", "mnist-test"):
        return "mnist-train"
    raise ContractError("bandwidth selection needs --validation for a CSV test set")


def cmd_parzen(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    base_seed = ckpt.meta.get("seed", 0) if args.data_seed is None else args.data_seed
    test = _dataset_from_meta(args.test_set, ckpt.meta, base_seed + 1)
    samples = generate(ckpt, args.n_samples, args.seed)
    validation = None
    if args.sigma == "select":
        spec = args.validation or _validation_spec(args.test_set)
        val = _dataset_from_meta(spec, ckpt.meta, base_seed + 2)
        validation = val.inputs[-10000:] if spec == "mnist-train" else val.inputs
        config = ParzenConfig()
    else:
        config = ParzenConfig(bandwidth=float(args.sigma))
    res = parzen_log_likelihood(samples, test.inputs, config, validation)
    print(f"{res.mean:.4f} +- {res.stderr:.4f} (sigma={res.bandwidth:.4g})")
    return 0


# ---------------------------------------------------------------------- main

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="catgan", description="Categorical GAN experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train according to a key=value config file")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int)
    t.add_argument("--out")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="matched and raw classification error")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--dataset", required=True)
    e.add_argument("--match-size", type=int, default=100)
    e.add_argument("--seed", type=int, help="seed for generated datasets (default: the training seed)")
    e.add_argument("--out", default="matching.csv")
    e.set_defaults(func=cmd_eval)

    g = sub.add_parser("grid", help="decision grid CSV for a 2-D discriminator")
    g.add_argument("--checkpoint", required=True)
    g.add_argument("--bounds", required=True)
    g.add_argument("--res", type=int, default=100)
    g.add_argument("--out", default="grid.csv")
    g.set_defaults(func=cmd_grid)

    s = sub.add_parser("sample", help="generated samples CSV")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="samples.csv")
    s.set_defaults(func=cmd_sample)

    z = sub.add_parser("parzen", help="Parzen-window log-likelihood of generated samples")
    z.add_argument("--checkpoint", required=True)
    z.add_argument("--test-set", required=True)
    z.add_argument("--n-samples", type=int, default=10000)
    z.add_argument("--sigma", default="select", help="bandwidth, or 'select' to pick it on a validation set")
    z.add_argument("--validation", help="validation dataset for bandwidth selection")
    z.add_argument("--seed", type=int, default=0, help="seed for generator noise")
    z.add_argument("--data-seed", type=int, help="base seed for generated test/validation data")
    z.set_defaults(func=cmd_parzen)
    return p


def _join_bounds(argv: list) -> list:
    # "--bounds -2,2,-2,2" would otherwise be read as an unknown option.
    out, i = [], 0
    while i < len(argv):
        if argv[i] == "--bounds" and i + 1 < len(argv):
            out.append(f"--bounds={argv[i + 1]}")
            i += 2
        else:
            out.append(argv[i])
            i += 1
    return out


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    args = build_parser().parse_args(_join_bounds(argv))
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (CatGANError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
