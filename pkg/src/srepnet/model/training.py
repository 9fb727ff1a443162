"""Training, fine-tuning and evaluation loops."""
from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..fileio import load_srep
from ..mask import VolumetricMask, read_nrrd
from ..srep import build_graph
from .. import autodiff as ad
from .augment import augment
from .config import ModelConfig
from .network import SrepNet, load_model, normalize_coords, substream

log = logging.getLogger(__name__)

LOG_COLUMNS = ("epoch", "iter", "lr", "L_r", "L_KL", "total")


class NumericalError(RuntimeError):
    pass


@dataclass
class Sample:
    id: int
    mask: VolumetricMask
    coords: np.ndarray  # physical graph node coordinates


def load_samples(manifest, split: str, subset: float | None = None) -> list[Sample]:
    entries = sorted(manifest.split(split), key=lambda e: e.id)
    if subset is not None:
        if not 0 < subset <= 1:
            raise ValueError(f"subset must be in (0, 1], got {subset}")
        entries = entries[:max(1, int(round(subset * len(entries))))]
    out = []
    for e in entries:
        srep = load_srep(manifest.path(e.srep))
        out.append(Sample(e.id, read_nrrd(manifest.path(e.mask)), build_graph(srep).coords))
    return out


def batch_arrays(samples: list[Sample], config: ModelConfig, rng=None):
    """Stacked mask and normalised target arrays, augmented when ``rng`` is given."""
    masks, targets = [], []
    for s in samples:
        mask, coords = s.mask, s.coords
        if rng is not None:
            mask, coords, _ = augment(mask, coords, rng, config.rotation_deg, config.scale_range)
        masks.append(mask.voxels)
        targets.append(normalize_coords(coords, mask))
    return np.stack(masks).astype(np.float64), np.stack(targets)


def evaluate_loss(model: SrepNet, samples: list[Sample]) -> tuple[float, float, float]:
    """Deterministic (z = mu) mean (total, L_r, L_KL) over ``samples``."""
    if not samples:
        raise ValueError("no samples to evaluate")
    bs = model.config.batch_size
    sums = np.zeros(3)
    for start in range(0, len(samples), bs):
        chunk = samples[start:start + bs]
        masks, targets = batch_arrays(chunk, model.config)
        terms = model.loss(masks, targets)
        sums += len(chunk) * np.array([t.item() for t in terms])
    return tuple(sums / len(samples))


def coordinate_mae(model: SrepNet, samples: list[Sample]) -> float:
    """Mean per-node Euclidean error in physical units (z = mu)."""
    errs = []
    for s in samples:
        pred = model.predict_normalized(s.mask.voxels[None])[0]
        world = pred * s.mask.half_extent + s.mask.center
        errs.append(np.linalg.norm(world - s.coords, axis=1))
    return float(np.mean(errs))


class Trainer:
    """One model, one optimiser, and the seeded streams that drive them."""

    def __init__(self, model: SrepNet, lr: float | None = None):
        self.model = model
        self.config = model.config
        self.optimizer = ad.Adam(model.parameters(), lr=self.config.learning_rate if lr is None else lr)
        self.aug_rng = substream(self.config.seed, "augment")
        self.sampling_rng = substream(self.config.seed, "sampling")
        self.noise_rng = substream(self.config.seed, "noise")
        self.step_count = 0

    def step(self, samples: list[Sample]) -> tuple[float, float, float]:
        """Augment, sample z, back-propagate and take one Adam step; returns (total, L_r, L_KL)."""
        cfg = self.config
        masks, targets = batch_arrays(samples, cfg, self.aug_rng if cfg.augment else None)
        noise = self.noise_rng.standard_normal((len(samples), cfg.latent_dim))
        total, l_r, l_kl = self.model.loss(masks, targets, noise)
        values = (total.item(), l_r.item(), l_kl.item())
        if not all(math.isfinite(v) for v in values):
            raise NumericalError(
                f"non-finite loss at step {self.step_count + 1}: total={values[0]}, L_r={values[1]}, "
                f"L_KL={values[2]} (sample ids {[s.id for s in samples]})")
        self.optimizer.zero_grad()
        total.backward()
        self.optimizer.step()
        self.step_count += 1
        return values

    def draw_batch(self, samples: list[Sample]) -> list[Sample]:
        idx = self.sampling_rng.choice(len(samples), size=self.config.batch_size,
                                       replace=len(samples) < self.config.batch_size)
        return [samples[i] for i in idx]


@dataclass
class TrainResult:
    best_checkpoint: Path
    last_checkpoint: Path
    log_path: Path
    best_val: float
    best_epoch: int
    losses: list[tuple[float, float, float]] = field(default_factory=list)


def fit(model: SrepNet, train: list[Sample], val: list[Sample], out_dir: str | os.PathLike,
        epochs: int, lr: float | None = None) -> TrainResult:
    """Run ``epochs`` epochs, logging every iteration and keeping the best-on-validation weights."""
    if not train:
        raise ValueError("training split is empty")
    if not val:
        raise ValueError("validation split is empty")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = model.config
    trainer = Trainer(model, lr)
    best_path, last_path, log_path = out / "best.ckpt", out / "last.ckpt", out / "train_log.csv"
    best_val, best_epoch = math.inf, -1
    losses = []
    with open(log_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for epoch in range(epochs):
            lr_now = trainer.optimizer.lr
            for it in range(cfg.iterations_per_epoch):
                total, l_r, l_kl = trainer.step(trainer.draw_batch(train))
                losses.append((total, l_r, l_kl))
                writer.writerow((epoch, it, repr(lr_now), repr(l_r), repr(l_kl), repr(total)))
            fh.flush()
            val_loss = evaluate_loss(model, val)[1]
            log.info("epoch %d: last train loss %.6g, val L_r %.6g", epoch, losses[-1][0], val_loss)
            if val_loss < best_val:
                best_val, best_epoch = val_loss, epoch
                model.save(best_path, {"epoch": epoch, "val_l_r": val_loss})
            trainer.optimizer.lr = lr_now * cfg.lr_decay
    model.save(last_path, {"epoch": epochs - 1})
    if best_epoch < 0:
        model.save(best_path, {"epoch": -1})
    return TrainResult(best_path, last_path, log_path, best_val, best_epoch, losses)


def train(manifest, config: ModelConfig, out_dir: str | os.PathLike, subset: float | None = None,
          epochs: int | None = None) -> TrainResult:
    """Train from scratch on the manifest's train split, validating on its val split."""
    train_set = load_samples(manifest, "train", subset)
    val_set = load_samples(manifest, "val")
    _check_dataset(manifest, config)
    model = SrepNet(config)
    return fit(model, train_set, val_set, out_dir, config.epochs if epochs is None else epochs)


def finetune(manifest, checkpoint: str | os.PathLike, out_dir: str | os.PathLike,
             epochs: int | None = None, subset: float | None = None, overrides: dict | None = None
             ) -> TrainResult:
    """Continue training a saved model, by default for ``finetune_epochs`` epochs."""
    base = load_model(checkpoint)
    config = base.config.with_updates(**(overrides or {}))
    model = SrepNet(config)
    model.load_state_dict(base.state_dict())
    _check_dataset(manifest, config)
    train_set = load_samples(manifest, "train", subset)
    val_set = load_samples(manifest, "val")
    n_epochs = config.finetune_epochs if epochs is None else min(epochs, config.finetune_epochs)
    return fit(model, train_set, val_set, out_dir, n_epochs)


def _check_dataset(manifest, config: ModelConfig) -> None:
    if (manifest.rings, manifest.angular_samples) != (config.rings, config.angular_samples):
        raise ValueError(f"dataset grid {(manifest.rings, manifest.angular_samples)} != model grid "
                         f"{(config.rings, config.angular_samples)}")
    if tuple(manifest.dims) != config.image_dims:
        raise ValueError(f"dataset image dims {tuple(manifest.dims)} != model dims {config.image_dims}")
