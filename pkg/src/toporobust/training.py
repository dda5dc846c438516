"""Shared training machinery: config, SGD with momentum, losses, batching.

Plain momentum SGD is used everywhere; adaptive optimizers interact badly
with the sparse subgradients of max units, where each sample touches a
single weight coordinate per unit.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .seeds import make_rng


class TrainingDiverged(RuntimeError):
    """Raised when a loss or parameter becomes non-finite during training."""


@dataclass
class TrainConfig:
    epochs: int = 60
    batch_size: int = 64
    learning_rate: float = 0.1
    momentum: float = 0.9
    lr_decay_factor: float = 0.5
    lr_decay_every: int = 0  # 0 disables step decay
    loss: str = "hinge"  # "hinge" or "xent"
    margin_target: float = 1.0
    temperature: float = 1.0
    seed: int = 0
    layer_sizes: Optional[tuple[int, ...]] = None
    center_last: bool = False
    val_fraction: float = 0.15
    # feature equalization: shrink each input coordinate to at most the
    # sigma at this quantile (0 disables).  Shrink-only scaling is
    # 1-Lipschitz, so the certificate is unaffected.
    equalize_quantile: float = 0.0
    # L_p relaxation schedule for max units: p grows geometrically from
    # relax_p_start to relax_p_final over relax_fraction of the epochs, then
    # training finishes on the exact max.  relax_p_start = 0 disables.
    relax_p_start: float = 8.0
    relax_p_final: float = 1000.0
    relax_fraction: float = 0.8

    def relaxation_at(self, epoch: int) -> Optional[float]:
        if self.relax_p_start <= 0:
            return None
        horizon = int(self.relax_fraction * self.epochs)
        if epoch >= horizon:
            return None
        if horizon <= 1:
            return self.relax_p_start
        growth = (self.relax_p_final / self.relax_p_start) ** (1.0 / (horizon - 1))
        return self.relax_p_start * growth**epoch

    def __post_init__(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.loss not in ("hinge", "xent"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in [0, 1)")


class SGDMomentum:
    """Velocity-buffered SGD step over a list of parameter arrays."""

    def __init__(self, params: list[np.ndarray], lr: float, momentum: float = 0.9):
        self.params = params
        self.lr = lr
        self.momentum = momentum
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        for p, v, g in zip(self.params, self.velocity, grads):
            v *= self.momentum
            v -= self.lr * g
            p += v


def hinge_loss_grad(logits: np.ndarray, labels: np.ndarray, margin_target: float):
    """Multiclass hinge on the prediction margin: meaned over the batch.

    L = max(0, gamma - M) with M = z_c - max_{i != c} z_i; the gradient pushes
    the true logit up and the best rival down wherever the hinge is active.
    """
    n, n_classes = logits.shape
    idx = np.arange(n)
    true_logit = logits[idx, labels]
    rival = logits.copy()
    rival[idx, labels] = -np.inf
    rival_class = np.argmax(rival, axis=1)
    margins = true_logit - rival[idx, rival_class]
    active = margins < margin_target
    losses = np.where(active, margin_target - margins, 0.0)
    grad = np.zeros_like(logits)
    grad[idx[active], labels[active]] = -1.0
    grad[idx[active], rival_class[active]] = 1.0
    return float(losses.mean()), grad / n


def xent_loss_grad(logits: np.ndarray, labels: np.ndarray, temperature: float = 1.0):
    """Cross-entropy on temperature-scaled logits, mean over the batch."""
    n = len(logits)
    z = logits / temperature
    z = z - z.max(axis=1, keepdims=True)
    expz = np.exp(z)
    probs = expz / expz.sum(axis=1, keepdims=True)
    idx = np.arange(n)
    losses = -np.log(np.maximum(probs[idx, labels], 1e-300))
    grad = probs.copy()
    grad[idx, labels] -= 1.0
    return float(losses.mean()), grad / (n * temperature)


def loss_and_grad(logits: np.ndarray, labels: np.ndarray, config: TrainConfig):
    if config.loss == "hinge":
        return hinge_loss_grad(logits, labels, config.margin_target)
    return xent_loss_grad(logits, labels, config.temperature)


def stratified_split(labels: np.ndarray, holdout_fraction: float, seed: int):
    """Deterministic per-class split; returns (kept_idx, holdout_idx), both sorted."""
    rng = make_rng(seed, 0x5B17)
    kept, held = [], []
    for cls in np.unique(labels):
        members = np.nonzero(labels == cls)[0]
        perm = members[rng.permutation(len(members))]
        n_hold = int(round(holdout_fraction * len(members)))
        held.extend(perm[:n_hold].tolist())
        kept.extend(perm[n_hold:].tolist())
    return np.array(sorted(kept), dtype=np.int64), np.array(sorted(held), dtype=np.int64)


def epoch_batches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start : start + batch_size]


def check_finite(value: float, what: str, epoch: int) -> None:
    if not np.isfinite(value):
        raise TrainingDiverged(f"{what} became non-finite at epoch {epoch}")
