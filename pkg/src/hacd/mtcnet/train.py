"""Symmetric stop-gradient loss and the seeded training loop."""

from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from .. import autodiff as ad
from ..errors import ConfigError, DegenerateError, ShapeError
from ..hsio import HsiCube, extract_patches
from .model import ArchConfig, MtcNetModel, patches_to_input

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 128
    base_lr: float = 0.05
    patch_size: int = 31
    seed: int = 0
    shuffle: bool = True
    momentum: float = 0.9
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.patch_size < 1:
            raise ConfigError("epochs, batch_size and patch_size must be >= 1")
        if self.base_lr < 0:
            raise ConfigError("base_lr must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def pair_similarity(p, z, stop_grad: bool = True):
    """Per-pair cosine similarity between predictions ``p`` and targets ``z`` ([N, d])."""
    target = ad.stop_gradient(z) if stop_grad else z
    return ad.cosine_similarity(p, target, axis=-1)


def simsiam_loss(model: MtcNetModel, x1, x2, stop_grad: bool = True):
    """``-0.5 * (D(p1, sg(z2)) + D(p2, sg(z1)))`` averaged over the batch.

    ``x1`` and ``x2`` are co-located patch batches [N, 1, bands, m, m].
    With ``stop_grad=False`` the targets stay in the graph (for comparison only).
    """
    x1, x2 = ad.as_tensor(x1), ad.as_tensor(x2)
    if x1.shape != x2.shape:
        raise ShapeError(f"patch batches differ in shape: {x1.shape} vs {x2.shape}")
    z1 = model.encode(x1)
    z2 = model.encode(x2)
    p1 = model.predict(z1)
    p2 = model.predict(z2)
    d1 = ad.mean_over(pair_similarity(p1, z2, stop_grad))
    d2 = ad.mean_over(pair_similarity(p2, z1, stop_grad))
    return -0.5 * (d1 + d2)


def make_batches(n: int, batch_size: int, rng: np.random.Generator | None) -> list:
    """Index batches over ``n`` pairs; the short final batch is kept, but a
    lone trailing pair joins the previous batch (batch norm needs two)."""
    order = rng.permutation(n) if rng is not None else np.arange(n)
    batches = [order[i : i + batch_size] for i in range(0, n, batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        last = batches.pop()
        batches[-1] = np.concatenate([batches[-1], last])
    return batches


def train(cube1: HsiCube, cube2: HsiCube, arch: ArchConfig, cfg: TrainConfig, model: MtcNetModel | None = None):
    """Fit the network on co-located patch pairs of two co-registered cubes.

    Returns ``(model, history)`` where ``history[e]`` is the pair-weighted mean
    loss of epoch ``e``.
    """
    if cube1.shape != cube2.shape:
        raise ShapeError(f"cube shapes differ: {cube1.shape} vs {cube2.shape}")
    if arch.patch_size != cfg.patch_size:
        raise ConfigError(f"arch patch_size {arch.patch_size} != train patch_size {cfg.patch_size}")
    m = cfg.patch_size
    if m > min(cube1.height, cube1.width):
        raise DegenerateError(f"no {m}x{m} patch fits a {cube1.height}x{cube1.width} image: empty training set")
    _, b1 = extract_patches(cube1, m)
    _, b2 = extract_patches(cube2, m)
    n = len(b1)
    if n < 2:
        raise DegenerateError(f"training needs at least 2 patch pairs, got {n}")
    x1_all = patches_to_input(b1).data
    x2_all = patches_to_input(b2).data

    if model is None:
        model = MtcNetModel(arch, seed=cfg.seed)
    if model.arch.bands not in (0, cube1.bands):
        raise ShapeError(f"model expects {model.arch.bands} bands, cubes have {cube1.bands}")
    model.arch = replace(model.arch, bands=cube1.bands)
    model.train()
    params = model.parameters()
    opt = ad.OptimizerState(cfg.base_lr, cfg.epochs, 0, cfg.momentum, cfg.weight_decay)
    rng = np.random.default_rng(cfg.seed) if cfg.shuffle else None

    history = []
    for epoch in range(cfg.epochs):
        total = 0.0
        for idx in make_batches(n, cfg.batch_size, rng):
            loss = simsiam_loss(model, x1_all[idx], x2_all[idx])
            loss.backward()
            ad.sgd_step(params, opt)
            total += loss.item() * len(idx)
        history.append(total / n)
        log.info("epoch %d/%d lr=%.5f loss=%.6f", epoch + 1, cfg.epochs, opt.lr, history[-1])
        opt.t += 1
    model.eval()
    return model, history


def write_history_csv(history, path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "mean_loss"])
        for i, v in enumerate(history, start=1):
            w.writerow([i, repr(float(v))])
