"""A 1-Lipschitz classifier built from L-infinity distance units.

Every unit computes u(x, w, b) = ||x - w||_inf + b, which is 1-Lipschitz
from (R^d, L_inf) to R no matter what the parameters are, so the whole stack
is globally 1-Lipschitz without any weight constraint or spectral trick.
After each layer (by default not the logits layer) a centering step
subtracts the feature-wise mean: batch mean in training, a running mean at
inference.  Translation costs nothing in Lipschitz terms.

Because the network is 1-Lipschitz, a prediction with margin M cannot flip
under input perturbations of L_inf size below M/2; composed with a
K-Lipschitz vectorization upstream the certified radius becomes M/(2K) in
the diagram metric, and computing it needs one forward pass only.
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

DEFAULT_LAYER_SIZES = (1200, 700, 300, 80, 5)
CENTERING_MOMENTUM = 0.9


@dataclass
class LinfLayer:
    weights: np.ndarray  # (units, in_dim)
    biases: np.ndarray  # (units,)
    center: bool = True
    running_mean: np.ndarray = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.running_mean is None:
            self.running_mean = np.zeros(len(self.weights))


@dataclass
class LipschitzNetwork:
    """Stack of distance-unit layers behind an optional fixed input transform.

    The transform x -> (x - input_mean) * input_scale is a translation
    followed by per-coordinate shrinking; with every scale entry <= 1 it is
    itself 1-Lipschitz L_inf -> L_inf, so the network stays globally
    1-Lipschitz.  Scales above 1 are rejected because they would silently
    inflate the certified constant.
    """

    layers: list[LinfLayer]
    input_mean: Optional[np.ndarray] = None
    input_scale: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.input_scale is not None and np.any(np.asarray(self.input_scale) > 1.0 + 1e-12):
            raise ValueError("input_scale entries must be <= 1 to preserve the Lipschitz bound")

    @property
    def input_dim(self) -> int:
        return self.layers[0].weights.shape[1]

    @property
    def n_classes(self) -> int:
        return len(self.layers[-1].biases)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(len(layer.biases) for layer in self.layers)

    def transform(self, x: np.ndarray) -> np.ndarray:
        if self.input_mean is not None:
            x = x - self.input_mean
        if self.input_scale is not None:
            x = x * self.input_scale
        return x


def unit_forward(x: np.ndarray, w: np.ndarray, b: float) -> float:
    """One distance unit: ||x - w||_inf + b."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if x.shape != w.shape:
        raise ValueError(f"dimension mismatch: input {x.shape} vs weights {w.shape}")
    return float(np.max(np.abs(x - w)) + b)


def init_network(
    input_dim: int,
    layer_sizes: tuple[int, ...],
    seed: int,
    feature_std: Optional[np.ndarray] = None,
    probe: Optional[np.ndarray] = None,
    center_last: bool = False,
) -> LipschitzNetwork:
    """Random network with data-aware scales.

    First-layer weights are uniform in [-1, 1] scaled per coordinate by the
    feature standard deviation; deeper layers are scaled by the standard
    deviation of their actual inputs on a probe batch, so initial activations
    start at a sensible order of magnitude.
    """
    rng = make_rng(seed, 0x11F)
    layers: list[LinfLayer] = []
    dim = input_dim
    x = probe
    for li, units in enumerate(layer_sizes):
        raw = rng.uniform(-1.0, 1.0, size=(units, dim))
        if li == 0 and feature_std is not None:
            scale = np.asarray(feature_std, dtype=np.float64)[None, :]
        elif x is not None and len(x):
            scale = max(float(x.std()), 1e-3)
        else:
            scale = 1.0
        weights = raw * scale
        is_last = li == len(layer_sizes) - 1
        layer = LinfLayer(
            weights=weights,
            biases=np.zeros(units),
            center=center_last or not is_last,
        )
        layers.append(layer)
        if x is not None:
            x, _ = _layer_forward(layer, x, training=True, update_running=False)
        dim = units
    return LipschitzNetwork(layers=layers)


def _layer_forward(
    layer: LinfLayer, x: np.ndarray, training: bool, update_running: bool = True
):
    """Distance units plus centering; returns (output, cache for backward).

    Units are processed in chunks so the (batch, units, in_dim) broadcast
    never materializes at full size.
    """
    n_batch = len(x)
    n_units, in_dim = layer.weights.shape
    out = np.empty((n_batch, n_units))
    arg = np.empty((n_batch, n_units), dtype=np.int64)
    sign = np.empty((n_batch, n_units))
    chunk = max(1, int(4_000_000 // max(n_batch * in_dim, 1)))
    for s in range(0, n_units, chunk):
        w = layer.weights[s : s + chunk]
        diff = x[:, None, :] - w[None, :, :]
        abs_diff = np.abs(diff)
        a = np.argmax(abs_diff, axis=2)  # first max wins on ties
        take = a[:, :, None]
        top = np.take_along_axis(diff, take, axis=2)[:, :, 0]
        out[:, s : s + chunk] = np.take_along_axis(abs_diff, take, axis=2)[:, :, 0]
        arg[:, s : s + chunk] = a
        # lowest-index coordinate with +1 direction when x == w exactly
        sign[:, s : s + chunk] = np.where(top >= 0.0, 1.0, -1.0)
    out += layer.biases[None, :]
    if layer.center:
        if training:
            mean = out.mean(axis=0)
            if update_running:
                layer.running_mean *= CENTERING_MOMENTUM
                layer.running_mean += (1.0 - CENTERING_MOMENTUM) * mean
        else:
            mean = layer.running_mean
        out = out - mean[None, :]
    cache = ((n_batch, in_dim), arg, sign, training)
    return out, cache


def _layer_forward_relaxed(
    layer: LinfLayer, x: np.ndarray, p_relax: float, training: bool, update_running: bool = True
):
    """Training-time smooth stand-in: ||x - w||_p instead of the max.

    Dense L_p gradients reach every weight coordinate, which the sparse
    argmax routing of the exact unit cannot do; p is annealed upward during
    training and inference always uses the exact max, so the deployed
    network (and its certificate) is untouched.
    """
    n_batch = len(x)
    n_units, in_dim = layer.weights.shape
    out = np.empty((n_batch, n_units))
    chunk = max(1, int(4_000_000 // max(n_batch * in_dim, 1)))
    for s in range(0, n_units, chunk):
        w = layer.weights[s : s + chunk]
        abs_diff = np.abs(x[:, None, :] - w[None, :, :])
        m = abs_diff.max(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = abs_diff / m[:, :, None]
            norm = m * np.sum(ratio**p_relax, axis=2) ** (1.0 / p_relax)
        out[:, s : s + chunk] = np.where(m > 0, norm, 0.0)
    norms = out.copy()
    out += layer.biases[None, :]
    if layer.center:
        if training:
            mean = out.mean(axis=0)
            if update_running:
                layer.running_mean *= CENTERING_MOMENTUM
                layer.running_mean += (1.0 - CENTERING_MOMENTUM) * mean
        else:
            mean = layer.running_mean
        out = out - mean[None, :]
    cache = ("relaxed", x, p_relax, norms, training)
    return out, cache


def _layer_backward_relaxed(layer: LinfLayer, cache, grad_out: np.ndarray):
    _, x, p_relax, norms, training = cache
    n_batch, in_dim = x.shape
    n_units = layer.weights.shape[0]
    if layer.center and training:
        grad_out = grad_out - grad_out.mean(axis=0, keepdims=True)
    grad_b = grad_out.sum(axis=0)
    grad_w = np.empty_like(layer.weights)
    grad_x = np.zeros((n_batch, in_dim))
    chunk = max(1, int(4_000_000 // max(n_batch * in_dim, 1)))
    for s in range(0, n_units, chunk):
        w = layer.weights[s : s + chunk]
        diff = x[:, None, :] - w[None, :, :]
        abs_diff = np.abs(diff)
        nz = norms[:, s : s + chunk, None]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = (abs_diff / nz) ** (p_relax - 1.0)
        ratio = np.where(nz > 0, ratio, 0.0)
        contrib = ratio * np.where(diff >= 0, 1.0, -1.0) * grad_out[:, s : s + chunk, None]
        grad_x += contrib.sum(axis=1)
        grad_w[s : s + chunk] = -contrib.sum(axis=0)
    return grad_w, grad_b, grad_x


def _layer_backward(layer: LinfLayer, cache, grad_out: np.ndarray):
    """Gradients for one layer; each unit routes to its argmax coordinate."""
    if cache[0] == "relaxed":
        return _layer_backward_relaxed(layer, cache, grad_out)
    in_shape, arg, sign, training = cache
    n_batch, in_dim = in_shape
    n_units = layer.weights.shape[0]
    if layer.center and training:
        grad_out = grad_out - grad_out.mean(axis=0, keepdims=True)
    grad_b = grad_out.sum(axis=0)
    routed = sign * grad_out  # (batch, units)
    u_idx = np.broadcast_to(np.arange(n_units)[None, :], arg.shape)
    grad_w = -np.bincount(
        (u_idx * in_dim + arg).ravel(), weights=routed.ravel(), minlength=n_units * in_dim
    ).reshape(n_units, in_dim)
    b_idx = np.broadcast_to(np.arange(n_batch)[:, None], arg.shape)
    grad_x = np.bincount(
        (b_idx * in_dim + arg).ravel(), weights=routed.ravel(), minlength=n_batch * in_dim
    ).reshape(n_batch, in_dim)
    return grad_w, grad_b, grad_x


def batch_forward(
    net: LipschitzNetwork, x: np.ndarray, training: bool = False, p_relax: Optional[float] = None
):
    """Logits for a batch; returns (logits, caches) for use by batch_backward.

    p_relax switches the units to their smooth L_p stand-in (training only).
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.input_dim:
        raise ValueError(f"expected (batch, {net.input_dim}) input, got {x.shape}")
    x = net.transform(x)
    caches = []
    for layer in net.layers:
        if p_relax is not None:
            x, cache = _layer_forward_relaxed(layer, x, p_relax, training=training)
        else:
            x, cache = _layer_forward(layer, x, training=training)
        caches.append(cache)
    return x, caches


def forward(net: LipschitzNetwork, x: np.ndarray) -> np.ndarray:
    """Inference logits for a single input vector."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("forward takes a single vector; use batch_forward for batches")
    out, _ = batch_forward(net, x[None, :], training=False)
    return out[0]


def batch_backward(net: LipschitzNetwork, caches, grad_logits: np.ndarray):
    """Reverse accumulation; returns (per-layer (grad_w, grad_b), grad_input)."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(net.layers)  # type: ignore
    g = grad_logits
    for li in range(len(net.layers) - 1, -1, -1):
        grad_w, grad_b, g = _layer_backward(net.layers[li], caches[li], g)
        grads[li] = (grad_w, grad_b)
    return grads, g


def input_gradient(net: LipschitzNetwork, x: np.ndarray, grad_logits: np.ndarray) -> np.ndarray:
    """d(grad_logits . logits)/dx at inference, for attack chains."""
    logits, caches = batch_forward(net, x[None, :], training=False)
    _, g = batch_backward(net, caches, np.asarray(grad_logits, dtype=np.float64)[None, :])
    g = g[0]
    if net.input_scale is not None:
        g = g * net.input_scale  # chain through the fixed shrink transform
    return g


def margin(logits: np.ndarray, true_class: int) -> float:
    """True-class logit minus the best other logit (negative if misclassified)."""
    logits = np.asarray(logits, dtype=np.float64)
    if len(logits) < 2:
        raise ValueError("margin needs at least two classes")
    rival = np.delete(logits, true_class)
    return float(logits[true_class] - rival.max())


def margins_batch(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    idx = np.arange(len(logits))
    rival = logits.copy()
    rival[idx, labels] = -np.inf
    return logits[idx, labels] - rival.max(axis=1)


def inference_logits(net: LipschitzNetwork, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Row-chunked inference logits for a whole matrix of inputs."""
    out = np.empty((len(x), net.n_classes))
    for s in range(0, len(x), chunk):
        out[s : s + chunk], _ = batch_forward(net, x[s : s + chunk], training=False)
    return out


def predict(net: LipschitzNetwork, x: np.ndarray) -> int:
    return int(np.argmax(forward(net, x)))


def predict_batch(net: LipschitzNetwork, x: np.ndarray) -> np.ndarray:
    return np.argmax(inference_logits(net, x), axis=1)


@dataclass
class CertificationRecord:
    sample_id: int
    predicted_class: int
    true_class: int
    margin: float
    certified_radius: float
    lipschitz_k: float

    @property
    def correct(self) -> bool:
        return self.predicted_class == self.true_class


def certify(
    net: LipschitzNetwork, x: np.ndarray, true_class: int, lipschitz_k: float, sample_id: int = -1
) -> CertificationRecord:
    """Certified robustness radius max(M, 0) / (2K) from one forward pass.

    K is the Lipschitz bound of the vectorization feeding the network (the
    network itself contributes a factor of 1); the radius is then valid in
    the same W_p metric the vectorization is stable against.
    """
    if lipschitz_k <= 0:
        raise ValueError("Lipschitz constant must be positive")
    logits = forward(net, x)
    pred = int(np.argmax(logits))
    m = margin(logits, true_class)
    radius = max(m, 0.0) / (2.0 * lipschitz_k) if pred == true_class else 0.0
    return CertificationRecord(
        sample_id=sample_id,
        predicted_class=pred,
        true_class=int(true_class),
        margin=m,
        certified_radius=radius,
        lipschitz_k=float(lipschitz_k),
    )


def certify_dataset(
    net: LipschitzNetwork,
    vectors: np.ndarray,
    labels: np.ndarray,
    lipschitz_k: float,
    sample_ids=None,
) -> list[CertificationRecord]:
    if sample_ids is None:
        sample_ids = range(len(vectors))
    return [
        certify(net, vectors[i], int(labels[i]), lipschitz_k, sample_id=int(sid))
        for i, sid in enumerate(sample_ids)
    ]


def certified_robust_accuracy(records: list[CertificationRecord], epsilon: float) -> float:
    """Fraction predicted correctly AND certified at radius >= epsilon."""
    if not records:
        return 0.0
    good = sum(1 for r in records if r.correct and r.certified_radius >= epsilon)
    return good / len(records)


def train(
    vectors: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    val: Optional[tuple[np.ndarray, np.ndarray]] = None,
    net: Optional[LipschitzNetwork] = None,
):
    """Train a Lipschitz network on stable-rank vectors.

    Deterministic given config.seed.  Returns (network, history) where
    history records per-epoch loss, train/validation accuracy and mean
    margin of correct predictions.  Pass an existing network to warm-start.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    n_classes = int(labels.max()) + 1
    sizes = config.layer_sizes or DEFAULT_LAYER_SIZES
    if sizes[-1] != n_classes:
        raise ValueError(f"last layer size {sizes[-1]} must equal n_classes {n_classes}")

    if val is None and config.val_fraction > 0:
        train_idx, val_idx = stratified_split(labels, config.val_fraction, config.seed)
        x_val, y_val = vectors[val_idx], labels[val_idx]
        x_train, y_train = vectors[train_idx], labels[train_idx]
    elif val is not None:
        x_train, y_train = vectors, labels
        x_val, y_val = val
    else:
        x_train, y_train = vectors, labels
        x_val = np.empty((0, vectors.shape[1]))
        y_val = np.empty(0, dtype=np.int64)

    if net is None:
        input_mean = x_train.mean(axis=0)
        input_scale = None
        if config.equalize_quantile > 0:
            sd = x_train.std(axis=0)
            positive = sd[sd > 1e-9]
            if positive.size:
                s_ref = float(np.quantile(positive, config.equalize_quantile))
                input_scale = np.minimum(1.0, s_ref / np.maximum(sd, 1e-9))
        transformed = x_train - input_mean
        if input_scale is not None:
            transformed = transformed * input_scale
        net = init_network(
            vectors.shape[1],
            tuple(sizes),
            seed=config.seed,
            feature_std=transformed.std(axis=0),
            probe=transformed[: min(len(transformed), 256)],
            center_last=config.center_last,
        )
        net.input_mean = input_mean
        net.input_scale = input_scale

    params: list[np.ndarray] = []
    for layer in net.layers:
        params.extend([layer.weights, layer.biases])
    opt = SGDMomentum(params, lr=config.learning_rate, momentum=config.momentum)
    rng = make_rng(config.seed, 0x7B41)
    history = {"loss": [], "train_acc": [], "val_acc": [], "mean_margin": []}
    best_val = -1.0
    best_state: Optional[list[np.ndarray]] = None

    for epoch in range(config.epochs):
        if config.lr_decay_every and epoch > 0 and epoch % config.lr_decay_every == 0:
            opt.lr *= config.lr_decay_factor
        p_relax = config.relaxation_at(epoch)
        epoch_loss = 0.0
        n_batches = 0
        for batch in epoch_batches(len(x_train), config.batch_size, rng):
            logits, caches = batch_forward(net, x_train[batch], training=True, p_relax=p_relax)
            loss, grad_logits = loss_and_grad(logits, y_train[batch], config)
            check_finite(loss, "training loss", epoch)
            grads, _ = batch_backward(net, caches, grad_logits)
            flat = [g for pair in grads for g in pair]
            opt.step(flat)
            epoch_loss += loss
            n_batches += 1
        for layer in net.layers:
            if not np.all(np.isfinite(layer.weights)):
                raise TrainingDiverged(f"weights became non-finite at epoch {epoch}")

        logits_tr = inference_logits(net, x_train)
        pred_tr = np.argmax(logits_tr, axis=1)
        margins = margins_batch(logits_tr, y_train)
        history["loss"].append(epoch_loss / max(n_batches, 1))
        history["train_acc"].append(float((pred_tr == y_train).mean()))
        history["mean_margin"].append(float(margins.mean()))
        if len(x_val):
            val_acc = float((predict_batch(net, x_val) == y_val).mean())
            history["val_acc"].append(val_acc)
            # keep the best validation snapshot; relaxed epochs are skipped
            # because their training state is not the deployed max network
            if config.relaxation_at(epoch) is None and val_acc >= best_val:
                best_val = val_acc
                best_state = [
                    np.concatenate([l.weights.ravel(), l.biases, l.running_mean])
                    for l in net.layers
                ]
        else:
            history["val_acc"].append(float("nan"))
    if best_state is not None:
        for layer, flat in zip(net.layers, best_state):
            n_w = layer.weights.size
            n_b = layer.biases.size
            layer.weights = flat[:n_w].reshape(layer.weights.shape).copy()
            layer.biases = flat[n_w : n_w + n_b].copy()
            layer.running_mean = flat[n_w + n_b :].copy()
    return net, history
