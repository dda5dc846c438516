"""Permutation-invariant set classifier over raw diagram points.

Each (birth, death) point is encoded through two rectified affine layers
(2 -> 25 -> 25); per encoding dimension the five largest values over the
set are kept and concatenated (125 features), then a final affine layer
produces the class logits.  Top-k pooling makes the output invariant to
point order, but NOT stable under the Wasserstein geometry: a point slid
along the diagonal costs nothing metrically yet can hijack the pools.
That fragility is exactly what the adversarial search exploits.

Diagrams with fewer than five points (including the empty diagram) are
padded with copies of (0, 0) before encoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .seeds import make_rng
from .training import (
    SGDMomentum,
    TrainConfig,
    TrainingDiverged,
    check_finite,
    epoch_batches,
    loss_and_grad,
    stratified_split,
)

ENCODER_WIDTH = 25
TOP_K = 5
N_CLASSES = 5


@dataclass
class DeepSetNet:
    w1: np.ndarray  # (2, 25)
    b1: np.ndarray
    w2: np.ndarray  # (25, 25)
    b2: np.ndarray
    w3: np.ndarray  # (125, n_classes)
    b3: np.ndarray
    coord_scale: float = 1.0  # input coordinates are multiplied by this


def init_deepset(seed: int, n_classes: int = N_CLASSES, coord_scale: float = 1.0) -> DeepSetNet:
    rng = make_rng(seed, 0xD5)
    def he(fan_in, shape):
        return rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
    return DeepSetNet(
        w1=he(2, (2, ENCODER_WIDTH)),
        b1=np.zeros(ENCODER_WIDTH),
        w2=he(ENCODER_WIDTH, (ENCODER_WIDTH, ENCODER_WIDTH)),
        b2=np.zeros(ENCODER_WIDTH),
        w3=he(TOP_K * ENCODER_WIDTH, (TOP_K * ENCODER_WIDTH, n_classes)),
        b3=np.zeros(n_classes),
        coord_scale=float(coord_scale),
    )


def _pad_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(pts) >= TOP_K:
        return pts
    pad = np.zeros((TOP_K - len(pts), 2))
    return np.vstack([pts, pad]) if len(pts) else pad


def _forward_cached(net: DeepSetNet, points: np.ndarray):
    pts = _pad_points(points) * net.coord_scale
    a1 = pts @ net.w1 + net.b1
    h1 = np.maximum(a1, 0.0)
    a2 = h1 @ net.w2 + net.b2
    h2 = np.maximum(a2, 0.0)  # (P, 25)
    # stable argsort: among equal activations the lowest point index pools first
    order = np.argsort(-h2, axis=0, kind="stable")[:TOP_K]  # (5, 25)
    pooled = np.take_along_axis(h2, order, axis=0)  # (5, 25)
    feats = pooled.T.ravel()  # feature-major: 25 blocks of 5
    logits = feats @ net.w3 + net.b3
    cache = (pts, len(np.asarray(points).reshape(-1, 2)), a1, h1, a2, h2, order, feats)
    return logits, cache


def deepset_forward(net: DeepSetNet, diagram) -> np.ndarray:
    """Class logits for one diagram (object with .points or (k, 2) array)."""
    points = getattr(diagram, "points", diagram)
    logits, _ = _forward_cached(net, points)
    return logits


def deepset_backward(net: DeepSetNet, cache, grad_logits: np.ndarray):
    """Parameter gradients plus the gradient on the (unpadded) input points."""
    pts, n_real, a1, h1, a2, h2, order, feats = cache
    gw3 = np.outer(feats, grad_logits)
    gb3 = grad_logits.copy()
    gfeats = net.w3 @ grad_logits  # (125,)
    gpooled = gfeats.reshape(ENCODER_WIDTH, TOP_K).T  # (5, 25)
    gh2 = np.zeros_like(h2)
    np.put_along_axis(gh2, order, gpooled, axis=0)
    ga2 = gh2 * (a2 > 0.0)
    gw2 = h1.T @ ga2
    gb2 = ga2.sum(axis=0)
    gh1 = ga2 @ net.w2.T
    ga1 = gh1 * (a1 > 0.0)
    gw1 = pts.T @ ga1
    gb1 = ga1.sum(axis=0)
    gpts = ga1 @ net.w1.T * net.coord_scale  # (P, 2); padded rows are dropped
    return (gw1, gb1, gw2, gb2, gw3, gb3), gpts[:n_real]


def deepset_point_gradient(net: DeepSetNet, points: np.ndarray, grad_logits: np.ndarray):
    """d(grad_logits . logits)/d(points) for the adversarial search."""
    _, cache = _forward_cached(net, points)
    _, gpts = deepset_backward(net, cache, np.asarray(grad_logits, dtype=np.float64))
    return gpts


def predict_diagram(net: DeepSetNet, diagram) -> int:
    return int(np.argmax(deepset_forward(net, diagram)))


def train_deepset(
    diagrams,
    labels: np.ndarray,
    config: TrainConfig,
    val: Optional[tuple[list, np.ndarray]] = None,
):
    """Train the set classifier on persistence diagrams.

    Mirrors the Lipschitz trainer: momentum SGD, deterministic given
    config.seed, per-epoch accuracy history, divergence guard.
    """
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    points = [np.asarray(getattr(d, "points", d), dtype=np.float64).reshape(-1, 2) for d in diagrams]

    if val is None and config.val_fraction > 0:
        train_idx, val_idx = stratified_split(labels, config.val_fraction, config.seed)
        d_train = [points[i] for i in train_idx]
        y_train = labels[train_idx]
        d_val = [points[i] for i in val_idx]
        y_val = labels[val_idx]
    elif val is not None:
        d_train, y_train = points, labels
        d_val = [np.asarray(getattr(d, "points", d), dtype=np.float64).reshape(-1, 2) for d in val[0]]
        y_val = np.asarray(val[1], dtype=np.int64)
    else:
        d_train, y_train = points, labels
        d_val, y_val = [], np.empty(0, dtype=np.int64)

    all_coords = np.concatenate([d.ravel() for d in d_train if len(d)]) if d_train else np.ones(1)
    spread = float(all_coords.std()) if all_coords.size else 1.0
    net = init_deepset(config.seed, n_classes=n_classes, coord_scale=1.0 / max(spread, 1e-9))
    params = [net.w1, net.b1, net.w2, net.b2, net.w3, net.b3]
    opt = SGDMomentum(params, lr=config.learning_rate, momentum=config.momentum)
    rng = make_rng(config.seed, 0x7B42)
    history = {"loss": [], "train_acc": [], "val_acc": [], "mean_margin": []}

    def eval_acc(ds, ys):
        if not len(ds):
            return float("nan")
        preds = np.array([predict_diagram(net, d) for d in ds])
        return float((preds == ys).mean())

    for epoch in range(config.epochs):
        if config.lr_decay_every and epoch > 0 and epoch % config.lr_decay_every == 0:
            opt.lr *= config.lr_decay_factor
        epoch_loss = 0.0
        n_batches = 0
        for batch in epoch_batches(len(d_train), config.batch_size, rng):
            logits = np.empty((len(batch), n_classes))
            caches = []
            for bi, di in enumerate(batch):
                logits[bi], cache = _forward_cached(net, d_train[di])
                caches.append(cache)
            loss, grad_logits = loss_and_grad(logits, y_train[batch], config)
            check_finite(loss, "training loss", epoch)
            total = [np.zeros_like(p) for p in params]
            for bi, cache in enumerate(caches):
                grads, _ = deepset_backward(net, cache, grad_logits[bi])
                for t, g in zip(total, grads):
                    t += g
            opt.step(total)
            epoch_loss += loss
            n_batches += 1
        if not all(np.all(np.isfinite(p)) for p in params):
            raise TrainingDiverged(f"weights became non-finite at epoch {epoch}")
        logits_tr = np.array([deepset_forward(net, d) for d in d_train])
        pred_tr = np.argmax(logits_tr, axis=1)
        idx = np.arange(len(d_train))
        rival = logits_tr.copy()
        rival[idx, y_train] = -np.inf
        margins = logits_tr[idx, y_train] - rival.max(axis=1)
        history["loss"].append(epoch_loss / max(n_batches, 1))
        history["train_acc"].append(float((pred_tr == y_train).mean()))
        history["mean_margin"].append(float(margins.mean()))
        history["val_acc"].append(eval_acc(d_val, y_val))
    return net, history
