"""Minibatch SGD training of the matcher.

Fixed regime: batch 32, lr 0.01, momentum 0.9, 15 epochs with the rate
halved after epochs 5 and 10, per-epoch shuffle from a seeded generator.
The head starts zeroed, so the recorded pre-training loss is exactly
ln(40); an epoch mean above twice that aborts as divergence.

A dataset is anything with __len__ and gather(indices) returning
(audio (B,1,136,40), sheet (B,1,40,200), targets (B,40)) arrays.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError, TrainingDivergedError
from .net import (ModelParams, ModelSpec, TrainSample, init_params,
                  loss_and_grads_arrays, loss_only)
from .score import NUM_BINS


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 32
    learning_rate: float = 0.01
    momentum: float = 0.9
    epochs: int = 15
    lr_drop_after: tuple[int, ...] = (5, 10)
    spec: ModelSpec = field(default_factory=ModelSpec)


class ListDataset:
    """Adapter from a plain list of TrainSample to the batch protocol."""

    def __init__(self, samples: list[TrainSample]):
        self.samples = list(samples)

    def __len__(self):
        return len(self.samples)

    def gather(self, indices):
        rows = [self.samples[i] for i in indices]
        xa = np.stack([s.audio.T for s in rows])[:, None].astype(np.float32)
        xs = np.stack([s.sheet for s in rows])[:, None].astype(np.float32)
        targets = np.zeros((len(rows), NUM_BINS), dtype=np.float32)
        for i, s in enumerate(rows):
            targets[i, s.label] = 1.0
        return xa, xs, targets


def dataset_loss(params: ModelParams, dataset, batch_size: int = 64) -> float:
    """Mean loss over the whole dataset with the given params."""
    n = len(dataset)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = np.arange(start, min(start + batch_size, n))
        xa, xs, targets = dataset.gather(idx)
        total += loss_only(params, xa, xs, targets) * len(idx)
    return total / n


NUM_TRAINING_TEMPI = 20


def train_demo_model(pieces_dir=None, seed: int = 0, epochs: int = 15,
                     log=None) -> tuple[ModelParams, np.ndarray]:
    """The demo regime end to end: every piece in the corpus at 20 seeded
    tempo factors, every 2nd frame, trained with the standard config."""
    from .corpus import load_corpus
    from .dataset import build_training_set
    from .synth import sample_training_tempi

    corpus = load_corpus(pieces_dir)
    tempi = sample_training_tempi(seed, NUM_TRAINING_TEMPI)
    dataset = build_training_set(corpus, tempi, seed=seed)
    if log:
        log(f"dataset: {len(dataset)} samples from {len(corpus)} pieces "
            f"x {len(tempi)} tempi")
    cfg = TrainConfig(epochs=epochs)
    return train(dataset, cfg, seed=seed, log=log)


def train(dataset, cfg: TrainConfig | None = None, seed: int = 0,
          log=None) -> tuple[ModelParams, np.ndarray]:
    """Train from scratch; returns (params, loss curve).

    curve[0] is the loss before any update, curve[e] the mean training
    loss of epoch e. Fully deterministic given (dataset order, cfg, seed).
    """
    cfg = cfg or TrainConfig()
    n = len(dataset)
    if n == 0:
        raise ShapeError("empty dataset")
    rng = np.random.default_rng(seed)
    params = init_params(cfg.spec, seed=seed)
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}

    curve = [dataset_loss(params, dataset)]
    if log:
        log(f"initial loss {curve[0]:.4f} over {n} samples")

    lr = cfg.learning_rate
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = perm[start:start + cfg.batch_size]
            xa, xs, targets = dataset.gather(idx)
            loss, grads = loss_and_grads_arrays(params, xa, xs, targets)
            total += loss * len(idx)
            for name, g in grads.items():
                v = velocity[name]
                v *= cfg.momentum
                v += g
                params.tensors[name] -= (lr * v).astype(params.tensors[name].dtype)
        epoch_mean = total / n
        curve.append(epoch_mean)
        if log:
            log(f"epoch {epoch:2d}/{cfg.epochs}  lr {lr:.4f}  loss {epoch_mean:.4f}")
        if epoch_mean > 2.0 * curve[0]:
            raise TrainingDivergedError(
                f"epoch {epoch} loss {epoch_mean:.4f} > 2x initial {curve[0]:.4f}")
        if epoch in cfg.lr_drop_after:
            lr *= 0.5
    return params, np.asarray(curve)
