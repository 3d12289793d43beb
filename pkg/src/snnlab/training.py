"""Surrogate-gradient BPTT for feedforward LIF networks.

The forward pass emits exact Heaviside spikes; the backward pass replaces
the step's derivative with the arctan surrogate::

    d/du [atan(pi * a * (u - theta)) / pi + 1/2] = a / (1 + (pi * a * (u - theta))^2)

With ``smooth=True`` the forward pass uses that smoothed step as well, so
the reverse pass is the exact gradient of a differentiable function and can
be compared with finite differences.

Output spikes are summed over time and used as logits for a softmax
cross-entropy loss.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from snnlab import kernels
from snnlab.core import RESET_MODES, LifParams, NetworkSpec, check_weights, conv2d_forward, layer_drive
from snnlab.data import Dataset, iter_batches
from snnlab.errors import DataError, ParameterError, ShapeError
from snnlab.initschemes import InitScheme, initialize_network
from snnlab.numerics import Rng

log = logging.getLogger(__name__)

WEIGHT_STREAM = 1
SHUFFLE_STREAM = 2
CALIBRATION_STREAM = 3


@dataclass(frozen=True)
class SurrogateSpec:
    kind: str = "arctan"
    slope: float = 2.0

    def __post_init__(self):
        if self.kind != "arctan":
            raise ParameterError(f"unsupported surrogate {self.kind!r}")
        if not self.slope > 0:
            raise ParameterError(f"surrogate slope must be > 0, got {self.slope}")


def surrogate_grad(u, theta: float, spec: SurrogateSpec = SurrogateSpec()):
    """Derivative of the smoothed step; accepts scalars or arrays."""
    z = math.pi * spec.slope * (np.asarray(u, dtype=np.float64) - theta)
    out = spec.slope / (1.0 + z * z)
    return float(out) if np.ndim(out) == 0 else out


def smooth_step(u, theta: float, spec: SurrogateSpec = SurrogateSpec()):
    return np.arctan(math.pi * spec.slope * (np.asarray(u, dtype=np.float64) - theta)) / math.pi + 0.5


def _surrogate_array(u: np.ndarray, theta: float, spec: SurrogateSpec) -> np.ndarray:
    flat = np.ascontiguousarray(u, dtype=np.float64).reshape(-1)
    out = np.empty_like(flat)
    kernels.arctan_surrogate(flat, theta, spec.slope, out)
    return out.reshape(u.shape)


# -- loss -------------------------------------------------------------------


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _check_labels(labels, classes: int, batch: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError(f"expected {batch} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DataError(f"labels must lie in [0, {classes - 1}]")
    return labels.astype(np.int64)


def count_cross_entropy(counts, labels) -> tuple[float, float, np.ndarray]:
    """Loss, accuracy and d(loss)/d(counts) for spike-count logits [batch, classes]."""
    counts = np.asarray(counts, dtype=np.float64)
    if counts.ndim != 2 or counts.shape[1] < 2:
        raise ShapeError(f"counts must be [batch, classes>=2], got {counts.shape}")
    b = counts.shape[0]
    labels = _check_labels(labels, counts.shape[1], b)
    logp = _log_softmax(counts)
    rows = np.arange(b)
    loss = float(-logp[rows, labels].mean())
    acc = float((counts.argmax(axis=1) == labels).mean())
    grad = np.exp(logp)
    grad[rows, labels] -= 1.0
    return loss, acc, grad / b


def spike_count_cross_entropy(output_spikes, labels) -> tuple[float, float]:
    """``output_spikes`` is [batch, classes, T]; ties in the count go to the lowest class."""
    spikes = np.asarray(output_spikes, dtype=np.float64)
    if spikes.ndim != 3:
        raise ShapeError(f"output spikes must be [batch, classes, T], got {spikes.shape}")
    loss, acc, _ = count_cross_entropy(spikes.sum(axis=2), labels)
    return loss, acc


# -- forward / backward -----------------------------------------------------


@dataclass
class ForwardCache:
    """Per-step membrane potentials and spikes, ``u[t][i]`` for population ``i``."""

    inputs: np.ndarray
    u: list[list[np.ndarray]]
    s: list[list[np.ndarray]]
    first: int

    @property
    def counts(self) -> np.ndarray:
        return sum(step[-1] for step in self.s).reshape(self.inputs.shape[0], -1)


def _reset_code(lif: LifParams) -> int:
    return RESET_MODES[lif.reset]


def forward_cached(
    net: NetworkSpec,
    weights: Sequence[np.ndarray],
    inputs,
    T: int,
    surrogate: SurrogateSpec = SurrogateSpec(),
    smooth: bool = False,
) -> ForwardCache:
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    check_weights(net, weights)
    x_in = np.asarray(inputs, dtype=np.float64)
    if x_in.shape[1:] != tuple(net.input_shape):
        raise ShapeError(f"input shape {x_in.shape[1:]} != network input {net.input_shape}")
    b = x_in.shape[0]
    first = 0 if net.has_input_layer else 1
    shapes = [(b, *net.input_shape)] + [(b, *layer.out_shape) for layer in net.layers]
    u_prev = {i: np.zeros(shapes[i]) for i in range(first, len(shapes))}
    s_prev = {i: np.zeros(shapes[i]) for i in range(first, len(shapes))}
    cache = ForwardCache(x_in, [], [], first)
    for _ in range(T):
        us, ss = [None] * len(shapes), [None] * len(shapes)
        x = x_in
        for i in range(first, len(shapes)):
            lif = net.lif_for(i)
            drive = x_in if i == 0 else layer_drive(net.layers[i - 1], weights[i - 1], x).reshape(shapes[i])
            if smooth:
                if lif.reset == "soft":
                    u = drive + lif.beta * u_prev[i] - lif.theta * s_prev[i]
                elif lif.reset == "hard":
                    u = drive + lif.beta * u_prev[i] * (1.0 - s_prev[i])
                else:
                    u = drive + lif.beta * u_prev[i]
                s = smooth_step(u, lif.theta, surrogate)
            else:
                u = np.array(u_prev[i], order="C", copy=True)
                s = np.empty_like(u)
                kernels.lif_update(
                    u.reshape(-1),
                    s_prev[i].reshape(-1),
                    np.ascontiguousarray(drive).reshape(-1),
                    lif.beta,
                    lif.theta,
                    _reset_code(lif),
                    s.reshape(-1),
                )
            us[i], ss[i] = u, s
            u_prev[i], s_prev[i] = u, s
            x = s
        cache.u.append(us)
        cache.s.append(ss)
    return cache


def _conv_weight_grad(x: np.ndarray, g: np.ndarray, k: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    patches = sliding_window_view(x, (k, k), axis=(2, 3))  # b, c, oh, ow, k, k
    return np.tensordot(g, patches, axes=([0, 2, 3], [0, 2, 3]))  # co, c, k, k


def _conv_input_grad(g: np.ndarray, w: np.ndarray, padding: int) -> np.ndarray:
    k = w.shape[2]
    if padding > k - 1:
        raise ShapeError("conv backward needs padding <= kernel - 1")
    flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    return conv2d_forward(g, flipped, k - 1 - padding)


def _drive_backward(layer, w: np.ndarray, x: np.ndarray, g: np.ndarray, need_input: bool):
    """Gradients of a layer drive w.r.t. its weight and (optionally) its input."""
    if layer.kind == "conv2d":
        gw = _conv_weight_grad(x, g, layer.kernel, layer.padding)
        gx = _conv_input_grad(g, w, layer.padding) if need_input else None
        return gw, gx
    x2 = x.reshape(x.shape[0], -1)
    gw = g.T @ x2
    gx = (g @ w).reshape(x.shape) if need_input else None
    return gw, gx


def bptt_backward(
    net: NetworkSpec,
    weights: Sequence[np.ndarray],
    cache: ForwardCache,
    grad_counts: np.ndarray,
    surrogate: SurrogateSpec = SurrogateSpec(),
    detach_reset: bool = False,
) -> list[np.ndarray]:
    """Reverse pass through the unrolled dynamics given d(loss)/d(output counts)."""
    check_weights(net, weights)
    T = len(cache.u)
    L = len(net.layers)
    grads = [np.zeros_like(w, dtype=np.float64) for w in weights]
    gu_next: dict[int, np.ndarray | None] = {i: None for i in range(1, L + 1)}
    gs_reset: dict[int, np.ndarray | None] = {i: None for i in range(1, L + 1)}
    out_shape = cache.s[0][L].shape
    g_out = np.asarray(grad_counts, dtype=np.float64).reshape(out_shape)
    for t in range(T - 1, -1, -1):
        g_from_above = g_out
        for i in range(L, 0, -1):
            lif = net.lif_for(i)
            u, s = cache.u[t][i], cache.s[t][i]
            gs = g_from_above.copy()
            if gs_reset[i] is not None:
                gs += gs_reset[i]
            gu = gs * _surrogate_array(u, lif.theta, surrogate)
            if gu_next[i] is not None:
                if lif.reset == "hard":
                    gu += gu_next[i] * lif.beta * (1.0 - s)
                else:
                    gu += gu_next[i] * lif.beta
            # how u[t] and s[t] feed u[t+1] through the reset term
            if lif.reset == "soft" and not detach_reset:
                gs_reset_next = -lif.theta * gu
            elif lif.reset == "hard" and not detach_reset and t > 0:
                gs_reset_next = -lif.beta * cache.u[t - 1][i] * gu
            else:
                gs_reset_next = None
            x_below = cache.s[t][i - 1] if i > 1 or cache.first == 0 else cache.inputs
            need_input = i > 1
            gw, gx = _drive_backward(net.layers[i - 1], weights[i - 1], x_below, gu, need_input)
            grads[i - 1] += gw
            gu_next[i] = gu
            gs_reset[i] = gs_reset_next
            g_from_above = gx if need_input else None
    return grads


def loss_and_grads(
    net: NetworkSpec,
    weights: Sequence[np.ndarray],
    inputs,
    labels,
    T: int,
    surrogate: SurrogateSpec = SurrogateSpec(),
    smooth: bool = False,
    detach_reset: bool = False,
) -> tuple[float, float, list[np.ndarray]]:
    cache = forward_cached(net, weights, inputs, T, surrogate, smooth)
    loss, acc, g_counts = count_cross_entropy(cache.counts, labels)
    grads = bptt_backward(net, weights, cache, g_counts, surrogate, detach_reset)
    return loss, acc, grads


def smooth_loss(net, weights, inputs, labels, T, surrogate=SurrogateSpec()) -> float:
    cache = forward_cached(net, weights, inputs, T, surrogate, smooth=True)
    return count_cross_entropy(cache.counts, labels)[0]


# -- gradient check ---------------------------------------------------------


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """max |a-b| / max(|a|, |b|, floor) over elements."""
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float((np.abs(a - b) / denom).max()) if a.size else 0.0


def finite_difference_grads(net, weights, inputs, labels, T, surrogate=SurrogateSpec(), h: float = 1e-5):
    """Central differences of the smoothed-forward loss for every weight."""
    weights = [np.array(w, dtype=np.float64, copy=True) for w in weights]
    out = []
    for w in weights:
        g = np.zeros_like(w)
        flat, gflat = w.reshape(-1), g.reshape(-1)
        for j in range(flat.size):
            orig = flat[j]
            flat[j] = orig + h
            lp = smooth_loss(net, weights, inputs, labels, T, surrogate)
            flat[j] = orig - h
            lm = smooth_loss(net, weights, inputs, labels, T, surrogate)
            flat[j] = orig
            gflat[j] = (lp - lm) / (2.0 * h)
        out.append(g)
    return out


@dataclass
class GradcheckResult:
    trial: int
    seed: int
    depth: int
    width: int
    T: int
    max_rel_error: float


def gradcheck(
    trials: int = 10,
    max_depth: int = 3,
    max_width: int = 8,
    max_T: int = 3,
    input_dim: int = 5,
    classes: int = 3,
    batch: int = 4,
    seed: int = 0,
    h: float = 1e-5,
    surrogate: SurrogateSpec = SurrogateSpec(),
    fault: str | None = None,
    fixed: tuple[int, int, int] | None = None,
) -> list[GradcheckResult]:
    """Compare smoothed-forward BPTT with central differences on random small networks.

    ``fixed=(depth, width, T)`` pins the architecture instead of sampling it.
    ``fault="sign_flip"`` negates the BPTT gradient to prove the check can fail.
    """
    results = []
    for trial in range(trials):
        gen = Rng(seed).substream(trial).generator()
        if fixed is None:
            depth = int(gen.integers(1, max_depth + 1))
            width = int(gen.integers(2, max_width + 1))
            T = int(gen.integers(1, max_T + 1))
        else:
            depth, width, T = fixed
        beta = float(gen.uniform(0.2, 0.9))
        theta = float(gen.uniform(0.5, 1.2))
        reset = "soft" if T > 1 else "none"
        widths = [width] * (depth - 1) + [classes]
        net = NetworkSpec.mlp(input_dim, widths, LifParams(beta, theta, reset))
        weights = [
            wt.values
            for wt in initialize_network(net, InitScheme("proposed"), Rng(seed).substream(trial, WEIGHT_STREAM))
        ]
        x = gen.standard_normal((batch, input_dim)) * 1.5
        y = gen.integers(0, classes, size=batch)
        _, _, bp = loss_and_grads(net, weights, x, y, T, surrogate, smooth=True)
        if fault == "sign_flip":
            bp = [-g for g in bp]
        fd = finite_difference_grads(net, weights, x, y, T, surrogate, h)
        err = max(relative_error(a, b) for a, b in zip(bp, fd))
        results.append(GradcheckResult(trial, seed, depth, width, T, err))
    return results


# -- optimizer and schedule -------------------------------------------------


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], betas=(0.9, 0.999), eps=1e-8) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0, tuple(betas), eps)


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float):
    """One bias-corrected Adam update; returns new parameter arrays and advances ``state`` in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ShapeError("adam_step: params, grads and state differ in length")
    b1, b2 = state.betas
    state.step += 1
    c1 = 1.0 - b1**state.step
    c2 = 1.0 - b2**state.step
    out = []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or p.shape != m.shape:
            raise ShapeError(f"adam_step: shape mismatch {p.shape} vs {g.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        out.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
    return out


def cosine_lr(epoch: int, total: int, lr0: float) -> float:
    if not 0 <= epoch < total:
        raise ParameterError(f"epoch must lie in [0, {total}), got {epoch}")
    return max(0.0, lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / total)))


# -- training loop ----------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 5
    batch_size: int = 128
    T: int = 3
    lr: float = 1e-3
    schedule: str = "cosine_annealing"
    optimizer: str = "adam"
    adam_betas: tuple[float, float] = (0.9, 0.999)
    adam_eps: float = 1e-8
    seed: int = 0
    scheme: InitScheme = field(default_factory=lambda: InitScheme("proposed"))
    surrogate: SurrogateSpec = field(default_factory=SurrogateSpec)
    detach_reset: bool = False
    calibration_samples: int = 256

    def __post_init__(self):
        if self.epochs < 1 or self.T < 1 or self.batch_size < 1:
            raise ParameterError("epochs, T and batch_size must be >= 1")
        if not self.lr >= 0:
            raise ParameterError(f"lr must be >= 0, got {self.lr}")
        if self.schedule not in ("cosine_annealing", "constant"):
            raise ParameterError(f"unknown schedule {self.schedule!r}")
        if self.optimizer != "adam":
            raise ParameterError(f"unsupported optimizer {self.optimizer!r}")
        if isinstance(self.scheme, str):
            object.__setattr__(self, "scheme", InitScheme(self.scheme))
        object.__setattr__(self, "adam_betas", tuple(self.adam_betas))

    def lr_at(self, epoch: int) -> float:
        if self.schedule == "constant":
            return self.lr
        return cosine_lr(epoch, self.epochs, self.lr)


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_accuracy: float
    test_accuracy: float | None
    lr: float
    wall_time: float


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    weights: list[np.ndarray] | None = None

    @property
    def train_accuracy(self) -> list[float]:
        return [r.train_accuracy for r in self.records]


def evaluate(net: NetworkSpec, weights, data: Dataset, T: int, batch_size: int = 512) -> float:
    correct = 0
    for start in range(0, len(data), batch_size):
        x = data.images[start : start + batch_size].reshape(-1, *net.input_shape)
        y = data.labels[start : start + batch_size]
        cache = forward_cached(net, weights, x, T)
        correct += int((cache.counts.argmax(axis=1) == y).sum())
    return correct / len(data) if len(data) else float("nan")


def init_weights(net: NetworkSpec, config: TrainConfig, train_data: Dataset | None = None) -> list[np.ndarray]:
    rng = Rng(config.seed).substream(WEIGHT_STREAM)
    calib = None
    if config.scheme.name == "fluctuation_driven" and config.scheme.p_hat is None:
        if train_data is None:
            raise ParameterError("fluctuation_driven init needs training data for calibration")
        gen = Rng(config.seed).substream(CALIBRATION_STREAM).generator()
        idx = np.sort(gen.permutation(len(train_data))[: config.calibration_samples])
        calib = train_data.images[idx].reshape(-1, *net.input_shape)
    return [wt.values for wt in initialize_network(net, config.scheme, rng, calib, calibration_T=1)]


def train(
    net: NetworkSpec,
    config: TrainConfig,
    dataset: Dataset,
    test: Dataset | None = None,
    weights: Sequence[np.ndarray] | None = None,
) -> TrainLog:
    """Seeded training loop: per-epoch shuffle, T-step forward, BPTT, Adam, schedule.

    Train accuracy and loss are running averages over the epoch's batches.
    """
    if weights is None:
        weights = init_weights(net, config, dataset)
    weights = [np.array(w, dtype=np.float64, copy=True) for w in weights]
    state = AdamState.zeros_like(weights, config.adam_betas, config.adam_eps)
    log_ = TrainLog()
    for epoch in range(config.epochs):
        t0 = time.perf_counter()
        lr = config.lr_at(epoch)
        loss_sum, correct, seen = 0.0, 0.0, 0
        shuffle_seed = Rng(config.seed).substream(SHUFFLE_STREAM, epoch)
        for x, y in iter_batches(dataset, config.batch_size, shuffle_seed):
            x = x.reshape(-1, *net.input_shape)
            loss, acc, grads = loss_and_grads(
                net, weights, x, y, config.T, config.surrogate, detach_reset=config.detach_reset
            )
            weights = adam_step(weights, grads, state, lr)
            loss_sum += loss * len(y)
            correct += acc * len(y)
            seen += len(y)
        test_acc = evaluate(net, weights, test, config.T) if test is not None else None
        rec = EpochRecord(epoch + 1, loss_sum / seen, correct / seen, test_acc, lr, time.perf_counter() - t0)
        log.info(
            "epoch %d scheme=%s loss=%.4f acc=%.4f lr=%.3g (%.1fs)",
            rec.epoch, config.scheme.name, rec.train_loss, rec.train_accuracy, lr, rec.wall_time,
        )
        log_.records.append(rec)
    log_.weights = weights
    return log_


def with_scheme(config: TrainConfig, scheme: str | InitScheme) -> TrainConfig:
    return replace(config, scheme=InitScheme(scheme) if isinstance(scheme, str) else scheme)
