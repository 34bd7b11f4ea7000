"""Desk-scale dense-network rig for pruning experiments.

A tiny fully-connected classifier (ReLU hidden layers, softmax
cross-entropy) is trained with in-module backpropagation, magnitude-scored,
pruned with the adaptive top-k rule (whole-net or per-layer), and the
train-loss change and test-accuracy change are measured across a grid of
scale coefficients.  A finite-difference Hutchinson estimator supplies the
Hessian trace needed by the loss-change bounds.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field

import numpy as np

from ._files import atomic_write_bytes, atomic_write_text
from ._parallel import ordered_map
from .bounds import LossBoundInputs, epsilon_bound_asymptotic, epsilon_bound_lemma
from .core import Partition, combined_mask, emp_decide, emp_decide_partitioned
from .errors import DivergenceDetected, LengthMismatch, NonFiniteEstimate

__all__ = [
    "Dataset",
    "make_blobs",
    "make_moons",
    "make_digit_patterns",
    "load_idx",
    "DenseNet",
    "TrainConfig",
    "TrainResult",
    "train",
    "WeightIndexMap",
    "magnitude_scores",
    "layer_partition",
    "apply_mask",
    "PruneExperimentResult",
    "prune_once",
    "beta_sweep",
    "TraceEstimate",
    "estimate_trace_h",
    "net_grad_fn",
    "BoundGapReport",
    "evaluate_bound_gap",
    "save_checkpoint",
    "load_checkpoint",
]


# ----------------------------------------------------------------------
# datasets
# ----------------------------------------------------------------------

@dataclass
class Dataset:
    """Feature matrix with integer labels and a fixed train/test split."""

    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.intp).ravel()
        if x.ndim != 2 or x.shape[0] != y.size:
            raise ValueError("features must be (samples, dim) aligned with labels")
        if not np.isfinite(x).all():
            raise ValueError("features contain NaN or infinite entries")
        if y.min(initial=0) < 0:
            raise ValueError("labels must be nonnegative integers")
        self.features, self.labels = x, y
        self.train_idx = np.asarray(self.train_idx, dtype=np.intp)
        self.test_idx = np.asarray(self.test_idx, dtype=np.intp)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.train_idx], self.labels[self.train_idx]

    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self.features[self.test_idx], self.labels[self.test_idx]


def _split(n: int, test_fraction: float, rng: np.random.Generator):
    order = rng.permutation(n)
    n_test = max(1, int(round(n * test_fraction)))
    return order[n_test:], order[:n_test]


def make_blobs(
    n_samples: int = 400,
    centers=((-2.0, -2.0), (2.0, 2.0)),
    spread: float = 0.6,
    seed: int = 0,
    test_fraction: float = 0.25,
) -> Dataset:
    """Isotropic Gaussian blobs, one per class."""
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    k, dim = centers.shape
    labels = rng.integers(0, k, size=n_samples)
    feats = centers[labels] + spread * rng.standard_normal((n_samples, dim))
    train_idx, test_idx = _split(n_samples, test_fraction, rng)
    return Dataset(feats, labels, train_idx, test_idx)


def make_moons(
    n_samples: int = 400,
    noise: float = 0.15,
    seed: int = 0,
    test_fraction: float = 0.25,
) -> Dataset:
    """Two interleaving half-circles, the classic nonlinear 2-class toy."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n_samples)
    t = rng.uniform(0.0, np.pi, size=n_samples)
    x = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    y = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    feats = np.stack([x, y], axis=1) + noise * rng.standard_normal((n_samples, 2))
    train_idx, test_idx = _split(n_samples, test_fraction, rng)
    return Dataset(feats, labels, train_idx, test_idx)


# Ten 8x8 digit-like glyph prototypes, one row string per scanline.
_GLYPHS = [
    "00111100 01000010 01000110 01001010 01010010 01100010 00111100 00000000",  # 0
    "00011000 00111000 00011000 00011000 00011000 00011000 01111110 00000000",  # 1
    "00111100 01000010 00000010 00001100 00110000 01000000 01111110 00000000",  # 2
    "00111100 01000010 00000010 00011100 00000010 01000010 00111100 00000000",  # 3
    "00000100 00001100 00010100 00100100 01111110 00000100 00000100 00000000",  # 4
    "01111110 01000000 01111100 00000010 00000010 01000010 00111100 00000000",  # 5
    "00111100 01000000 01111100 01000010 01000010 01000010 00111100 00000000",  # 6
    "01111110 00000010 00000100 00001000 00010000 00100000 00100000 00000000",  # 7
    "00111100 01000010 00111100 01000010 01000010 01000010 00111100 00000000",  # 8
    "00111100 01000010 01000010 00111110 00000010 00000010 00111100 00000000",  # 9
]


def make_digit_patterns(
    n_samples: int = 500,
    n_classes: int = 10,
    noise: float = 0.25,
    seed: int = 0,
    test_fraction: float = 0.25,
) -> Dataset:
    """Noisy 8x8 glyph patterns, a stand-in for downsampled digit data."""
    if not 2 <= n_classes <= len(_GLYPHS):
        raise ValueError(f"n_classes must be in [2, {len(_GLYPHS)}]")
    protos = np.array(
        [[float(ch) for ch in glyph.replace(" ", "")] for glyph in _GLYPHS[:n_classes]]
    )
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n_samples)
    feats = protos[labels] + noise * rng.standard_normal((n_samples, 64))
    train_idx, test_idx = _split(n_samples, test_fraction, rng)
    return Dataset(feats, labels, train_idx, test_idx)


def load_idx(images_path, labels_path, test_fraction: float = 0.2, seed: int = 0) -> Dataset:
    """Load user-supplied IDX files (the classic digit-file format).

    Pixel values are scaled to [0, 1]; images are flattened row-major.
    """
    def read_idx(path):
        with open(path, "rb") as fh:
            zero, dtype_code, ndim = struct.unpack(">HBB", fh.read(4))
            if zero != 0 or dtype_code != 0x08:
                raise ValueError(f"{path}: not an unsigned-byte IDX file")
            dims = struct.unpack(">" + "I" * ndim, fh.read(4 * ndim))
            data = np.frombuffer(fh.read(), dtype=np.uint8)
            if data.size != int(np.prod(dims)):
                raise ValueError(f"{path}: truncated IDX payload")
            return data.reshape(dims)

    images = read_idx(images_path)
    labels = read_idx(labels_path)
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    rng = np.random.default_rng(seed)
    train_idx, test_idx = _split(feats.shape[0], test_fraction, rng)
    return Dataset(feats, labels.astype(np.intp), train_idx, test_idx)


# ----------------------------------------------------------------------
# model
# ----------------------------------------------------------------------

@dataclass
class DenseNet:
    """Fully-connected net: ReLU hidden layers, linear output, 64-bit params."""

    widths: tuple[int, ...]
    weights: list[np.ndarray] = field(default_factory=list)
    biases: list[np.ndarray] = field(default_factory=list)

    @classmethod
    def init(cls, widths, seed: int = 0) -> "DenseNet":
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or any(w < 1 for w in widths):
            raise ValueError(f"widths must be >= 2 positive layer sizes, got {widths}")
        rng = np.random.default_rng(seed)
        weights = [
            rng.standard_normal((fan_in, fan_out)) * np.sqrt(2.0 / fan_in)
            for fan_in, fan_out in zip(widths[:-1], widths[1:])
        ]
        biases = [np.zeros(fan_out) for fan_out in widths[1:]]
        return cls(widths=widths, weights=weights, biases=biases)

    def copy(self) -> "DenseNet":
        return DenseNet(
            widths=self.widths,
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )

    @property
    def n_weights(self) -> int:
        return sum(w.size for w in self.weights)

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits for a (samples, input_dim) batch."""
        a = np.asarray(x, dtype=np.float64)
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
        return a @ self.weights[-1] + self.biases[-1]

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        """Mean softmax cross-entropy."""
        logits = self.forward(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        logsumexp = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
        return float(np.mean(logsumexp - logits[np.arange(len(y)), y]))

    def accuracy(self, x: np.ndarray, y: np.ndarray) -> float:
        return float(np.mean(self.forward(x).argmax(axis=1) == y))

    def gradients(self, x: np.ndarray, y: np.ndarray):
        """Backprop gradients of the mean cross-entropy w.r.t. all parameters."""
        x = np.asarray(x, dtype=np.float64)
        acts = [x]
        a = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ w + b, 0.0)
            acts.append(a)
        logits = acts[-1] @ self.weights[-1] + self.biases[-1]

        shifted = logits - logits.max(axis=1, keepdims=True)
        expd = np.exp(shifted)
        probs = expd / expd.sum(axis=1, keepdims=True)
        delta = probs
        delta[np.arange(len(y)), y] -= 1.0
        delta /= len(y)

        grads_w = [np.empty(0)] * len(self.weights)
        grads_b = [np.empty(0)] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads_w[layer] = acts[layer].T @ delta
            grads_b[layer] = delta.sum(axis=0)
            if layer > 0:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0.0)
        return grads_w, grads_b

    # Flat parameter vector: per layer, weights row-major then bias.
    def flatten(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts.append(w.ravel())
            parts.append(b)
        return np.concatenate(parts)

    def with_flat(self, theta: np.ndarray) -> "DenseNet":
        theta = np.asarray(theta, dtype=np.float64)
        if theta.size != self.flatten().size:
            raise LengthMismatch(f"flat vector has {theta.size} entries, net needs {self.flatten().size}")
        net = self.copy()
        pos = 0
        for layer, (w, b) in enumerate(zip(net.weights, net.biases)):
            net.weights[layer] = theta[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            net.biases[layer] = theta[pos:pos + b.size].copy()
            pos += b.size
        return net


@dataclass
class TrainConfig:
    epochs: int = 200
    lr: float = 0.1
    batch_size: int = 32
    momentum: float = 0.9
    seed: int = 0


@dataclass
class TrainResult:
    net: DenseNet
    train_loss: float
    test_loss: float
    train_acc: float
    test_acc: float
    epoch_losses: list[float]


def train(net: DenseNet, data: Dataset, cfg: TrainConfig) -> TrainResult:
    """Mini-batch gradient descent with momentum; deterministic per seed.

    Raises DivergenceDetected as soon as the epoch train loss goes
    non-finite.  Zero epochs (or a zero learning rate) leave the
    parameters untouched.
    """
    net = net.copy()
    x_train, y_train = data.train()
    x_test, y_test = data.test()
    rng = np.random.default_rng(cfg.seed)
    vel_w = [np.zeros_like(w) for w in net.weights]
    vel_b = [np.zeros_like(b) for b in net.biases]
    epoch_losses = []

    for _epoch in range(cfg.epochs):
        order = rng.permutation(len(y_train))
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads_w, grads_b = net.gradients(x_train[batch], y_train[batch])
            for layer in range(len(net.weights)):
                vel_w[layer] = cfg.momentum * vel_w[layer] + grads_w[layer]
                vel_b[layer] = cfg.momentum * vel_b[layer] + grads_b[layer]
                net.weights[layer] -= cfg.lr * vel_w[layer]
                net.biases[layer] -= cfg.lr * vel_b[layer]
        loss = net.loss(x_train, y_train)
        if not np.isfinite(loss):
            raise DivergenceDetected(f"train loss became {loss} at epoch {_epoch}")
        epoch_losses.append(loss)

    return TrainResult(
        net=net,
        train_loss=net.loss(x_train, y_train),
        test_loss=net.loss(x_test, y_test),
        train_acc=net.accuracy(x_train, y_train),
        test_acc=net.accuracy(x_test, y_test),
        epoch_losses=epoch_losses,
    )


# ----------------------------------------------------------------------
# scoring and masking
# ----------------------------------------------------------------------

@dataclass
class WeightIndexMap:
    """Layout of the flattened weight-only score vector (biases excluded)."""

    shapes: list[tuple[int, int]]
    offsets: list[int]
    total: int

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        """Rebuild per-layer arrays from a flat weight-aligned vector."""
        flat = np.asarray(flat)
        if flat.size != self.total:
            raise LengthMismatch(f"vector has {flat.size} entries, map covers {self.total}")
        out = []
        for shape, offset in zip(self.shapes, self.offsets):
            size = shape[0] * shape[1]
            out.append(flat[offset:offset + size].reshape(shape))
        return out


def magnitude_scores(net: DenseNet) -> tuple[np.ndarray, WeightIndexMap]:
    """Flat |weights| scores (biases excluded) with a reversible layout map."""
    parts, shapes, offsets = [], [], []
    pos = 0
    for w in net.weights:
        parts.append(np.abs(w).ravel())
        shapes.append(w.shape)
        offsets.append(pos)
        pos += w.size
    return np.concatenate(parts), WeightIndexMap(shapes=shapes, offsets=offsets, total=pos)


def layer_partition(net: DenseNet) -> Partition:
    """One partition group per weight matrix, matching magnitude_scores order."""
    return Partition.from_sizes([w.size for w in net.weights])


def apply_mask(net: DenseNet, mask) -> DenseNet:
    """Zero the dropped weights; biases are never pruned; input net untouched."""
    mask = np.asarray(mask, dtype=bool).ravel()
    if mask.size != net.n_weights:
        raise LengthMismatch(f"mask has {mask.size} entries, net has {net.n_weights} weights")
    _, index_map = magnitude_scores(net)
    out = net.copy()
    for layer, layer_mask in enumerate(index_map.split(mask)):
        out.weights[layer] = np.where(layer_mask, out.weights[layer], 0.0)
    return out


# ----------------------------------------------------------------------
# experiments
# ----------------------------------------------------------------------

@dataclass
class PruneExperimentResult:
    """One (beta, mode) pruning cell: losses, accuracies, and bookkeeping."""

    beta: float
    mode: str
    sparsity: float
    rho: float                 # kept fraction k/N
    dense_loss: float
    pruned_loss: float
    epsilon: float             # |dense_loss - pruned_loss| on the train split
    dense_acc: float
    pruned_acc: float
    delta_theta_sq: float      # ||theta_dense - theta_pruned||^2
    theta_l1: float
    n_weights: int
    trace_h_estimate: float | None = None
    lemma_bound: float | None = None


def prune_once(net: DenseNet, data: Dataset, beta: float, mode: str = "global") -> PruneExperimentResult:
    """Magnitude-prune a trained net at one beta and measure the loss change."""
    if mode not in ("global", "block"):
        raise ValueError(f"mode must be 'global' or 'block', got {mode!r}")
    scores, _ = magnitude_scores(net)
    if mode == "global":
        decision = emp_decide(scores, beta)
        mask = decision.mask
        keep = decision.keep_count
    else:
        partition = layer_partition(net)
        decisions = emp_decide_partitioned(scores, partition, beta)
        mask = combined_mask(decisions, partition)
        keep = sum(d.keep_count for d in decisions)

    pruned = apply_mask(net, mask)
    x_train, y_train = data.train()
    x_test, y_test = data.test()
    dense_loss = net.loss(x_train, y_train)
    pruned_loss = pruned.loss(x_train, y_train)
    delta_sq = float(np.sum(scores[~mask] ** 2))  # dropped |w|^2 = dropped w^2
    return PruneExperimentResult(
        beta=float(beta),
        mode=mode,
        sparsity=1.0 - keep / scores.size,
        rho=keep / scores.size,
        dense_loss=dense_loss,
        pruned_loss=pruned_loss,
        epsilon=abs(dense_loss - pruned_loss),
        dense_acc=net.accuracy(x_test, y_test),
        pruned_acc=pruned.accuracy(x_test, y_test),
        delta_theta_sq=delta_sq,
        theta_l1=float(scores.sum()),
        n_weights=scores.size,
    )


def beta_sweep(net: DenseNet, data: Dataset, betas, modes=("global", "block")) -> list[PruneExperimentResult]:
    """Prune at every (beta, mode) cell; cells are independent and fan out."""
    cells = [(float(b), m) for b in betas for m in modes]
    return ordered_map(lambda cell: prune_once(net, data, cell[0], cell[1]), cells)


# ----------------------------------------------------------------------
# Hessian trace
# ----------------------------------------------------------------------

@dataclass
class TraceEstimate:
    mean: float
    stderr: float
    probes: int
    fd_step: float


def net_grad_fn(net: DenseNet, data: Dataset, split: str = "train"):
    """Gradient of the train (or test) loss as a function of the flat parameters."""
    x, y = data.train() if split == "train" else data.test()

    def grad(theta: np.ndarray) -> np.ndarray:
        probe_net = net.with_flat(theta)
        grads_w, grads_b = probe_net.gradients(x, y)
        parts = []
        for gw, gb in zip(grads_w, grads_b):
            parts.append(gw.ravel())
            parts.append(gb)
        return np.concatenate(parts)

    return grad


def estimate_trace_h(
    grad_fn,
    theta: np.ndarray,
    probes: int = 64,
    seed: int = 0,
    fd_step: float | None = None,
) -> TraceEstimate:
    """Hutchinson trace estimate with finite-difference Hessian products.

    Averages v^T H v over Rademacher probes v, where H v is the central
    difference of the gradient with step h = 1e-4 * (1 + max|theta|)
    unless overridden.  Reports the probe-mean and its standard error.
    """
    if probes < 10:
        raise ValueError(f"at least 10 probes are required, got {probes}")
    theta = np.asarray(theta, dtype=np.float64)
    h = fd_step if fd_step is not None else 1e-4 * (1.0 + float(np.abs(theta).max(initial=0.0)))
    rng = np.random.default_rng(seed)
    estimates = np.empty(probes)
    for i in range(probes):
        v = rng.integers(0, 2, size=theta.size) * 2.0 - 1.0
        hv = (grad_fn(theta + h * v) - grad_fn(theta - h * v)) / (2.0 * h)
        estimates[i] = float(v @ hv)
    if not np.isfinite(estimates).all():
        raise NonFiniteEstimate("a Hessian-vector probe produced NaN or infinity")
    mean = float(estimates.mean())
    stderr = float(estimates.std(ddof=1) / np.sqrt(probes)) if probes > 1 else 0.0
    return TraceEstimate(mean=mean, stderr=stderr, probes=probes, fd_step=h)


@dataclass
class BoundGapReport:
    """Measured loss change next to its closed-form upper bounds."""

    epsilon: float
    rho: float
    lemma_bound: float
    asymptotic_bound: float
    slack_factor: float
    violation: bool


def evaluate_bound_gap(
    result: PruneExperimentResult,
    trace_h: float,
    slack_factor: float = 1.0,
) -> BoundGapReport:
    """Compare a measured loss change against the loss-change bounds.

    The violation flag is informational: it marks epsilon exceeding
    slack_factor times the exact-form bound, which is only meaningful when
    the second-order expansion behind that bound is accurate.  A fully
    kept net (rho = 1) has zero bounds and epsilon exactly 0.
    """
    if result.rho >= 1.0:
        return BoundGapReport(
            epsilon=result.epsilon,
            rho=result.rho,
            lemma_bound=0.0,
            asymptotic_bound=0.0,
            slack_factor=slack_factor,
            violation=result.epsilon > 0.0,
        )
    inputs = LossBoundInputs(
        rho=result.rho,
        n=result.n_weights,
        theta_l1=result.theta_l1,
        trace_h=trace_h,
        delta_theta_sq=result.delta_theta_sq,
    )
    lemma = epsilon_bound_lemma(inputs)
    asym = epsilon_bound_asymptotic(inputs)
    return BoundGapReport(
        epsilon=result.epsilon,
        rho=result.rho,
        lemma_bound=lemma,
        asymptotic_bound=asym,
        slack_factor=slack_factor,
        violation=result.epsilon > slack_factor * lemma,
    )


# ----------------------------------------------------------------------
# checkpoints
# ----------------------------------------------------------------------

def save_checkpoint(net: DenseNet, path) -> None:
    """Write parameters as little-endian float64 plus a JSON shape header.

    The header lands next to the binary as ``<path>.json``.  Layout: per
    layer, the weight matrix row-major followed by the bias vector.
    """
    flat = net.flatten().astype("<f8")
    atomic_write_bytes(path, flat.tobytes())
    header = {
        "widths": list(net.widths),
        "dtype": "<f8",
        "count": int(flat.size),
        "layout": "per layer: weight row-major, then bias",
    }
    atomic_write_text(f"{path}.json", json.dumps(header, indent=2, sort_keys=True) + "\n")


def load_checkpoint(path) -> DenseNet:
    with open(f"{path}.json", "r", encoding="utf-8") as fh:
        header = json.load(fh)
    flat = np.fromfile(path, dtype="<f8")
    if flat.size != header["count"]:
        raise LengthMismatch(f"checkpoint has {flat.size} values, header declares {header['count']}")
    return DenseNet.init(header["widths"], seed=0).with_flat(flat)
