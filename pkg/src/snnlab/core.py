"""Discrete-time LIF dynamics and feedforward dense/conv layers.

Membrane update with soft reset, per neuron::

    u[t] = drive[t] + beta * u[t-1] - x[t-1] * theta
    x[t] = 1 if u[t] > theta else 0

The reset uses the spike emitted at the previous step and is not scaled by
the leak. Within one time step layers are swept in order, so layer ``l`` at
time ``t`` sees the spikes layer ``l-1`` emitted at the same ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from snnlab import kernels
from snnlab.errors import ParameterError, ShapeError

RESET_MODES = {"none": kernels.RESET_NONE, "soft": kernels.RESET_SOFT, "hard": kernels.RESET_HARD}
LAYER_KINDS = ("dense", "conv2d", "linear_readout")
ENCODINGS = ("direct_to_membrane", "direct_to_conv")


@dataclass(frozen=True)
class LifParams:
    beta: float = 0.5
    theta: float = 1.0
    reset: str = "soft"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ParameterError(f"beta must lie in [0, 1], got {self.beta}")
        if not (math.isfinite(self.theta) and self.theta >= 0.0):
            raise ParameterError(f"theta must be finite and >= 0, got {self.theta}")
        if self.reset not in RESET_MODES:
            raise ParameterError(f"reset must be one of {sorted(RESET_MODES)}, got {self.reset!r}")


@dataclass(frozen=True)
class LayerSpec:
    """One weighted layer followed by a LIF population.

    ``in_shape``/``out_shape`` exclude the batch axis: ``(features,)`` for
    dense layers, ``(channels, h, w)`` for conv layers. A linear readout
    flattens whatever it receives.
    """

    kind: str
    in_shape: tuple[int, ...]
    out_shape: tuple[int, ...]
    kernel: int = 0
    padding: int = 0
    lif: LifParams | None = None

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ParameterError(f"unknown layer kind {self.kind!r}")
        if any(d < 1 for d in self.in_shape + self.out_shape):
            raise ParameterError(f"layer dimensions must be positive: {self.in_shape} -> {self.out_shape}")
        if self.kind == "conv2d":
            if len(self.in_shape) != 3 or len(self.out_shape) != 3 or self.kernel < 1:
                raise ParameterError("conv2d layers need (c, h, w) shapes and a kernel size")
            _, h, w = self.in_shape
            oh, ow = h + 2 * self.padding - self.kernel + 1, w + 2 * self.padding - self.kernel + 1
            if self.out_shape[1:] != (oh, ow):
                raise ShapeError(f"conv2d output {self.out_shape[1:]} does not match computed {(oh, ow)}")
        elif len(self.out_shape) != 1:
            raise ParameterError(f"{self.kind} layers produce a flat output")

    @property
    def fan_in(self) -> int:
        if self.kind == "conv2d":
            return self.kernel * self.kernel * self.in_shape[0]
        return int(np.prod(self.in_shape))

    @property
    def fan_out(self) -> int:
        if self.kind == "conv2d":
            return self.kernel * self.kernel * self.out_shape[0]
        return self.out_shape[0]

    @property
    def width(self) -> int:
        return int(np.prod(self.out_shape))

    @property
    def weight_shape(self) -> tuple[int, ...]:
        if self.kind == "conv2d":
            return (self.out_shape[0], self.in_shape[0], self.kernel, self.kernel)
        return (self.out_shape[0], self.fan_in)


@dataclass(frozen=True)
class NetworkSpec:
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    lif: LifParams = field(default_factory=LifParams)
    input_encoding: str = "direct_to_membrane"

    def __post_init__(self):
        if self.input_encoding not in ENCODINGS:
            raise ParameterError(f"unknown input encoding {self.input_encoding!r}")
        object.__setattr__(self, "layers", tuple(self.layers))
        prev = tuple(self.input_shape)
        for i, layer in enumerate(self.layers):
            expected = (int(np.prod(prev)),) if layer.kind == "linear_readout" else prev
            if layer.in_shape != expected:
                raise ShapeError(f"layer {i + 1} expects input {layer.in_shape}, previous layer gives {expected}")
            prev = layer.out_shape

    def lif_for(self, index: int) -> LifParams:
        """LIF parameters of layer ``index`` (0 is the input population)."""
        if index == 0:
            return self.lif
        return self.layers[index - 1].lif or self.lif

    @property
    def has_input_layer(self) -> bool:
        return self.input_encoding == "direct_to_membrane"

    @classmethod
    def mlp(cls, input_dim: int, widths: Sequence[int], lif: LifParams | None = None) -> "NetworkSpec":
        layers, prev = [], int(input_dim)
        for w in widths:
            layers.append(LayerSpec("dense", (prev,), (int(w),)))
            prev = int(w)
        return cls((int(input_dim),), tuple(layers), lif or LifParams())

    @classmethod
    def cnn(
        cls,
        in_channels: int,
        size: int,
        channels: int = 64,
        n_conv: int = 6,
        classes: int = 10,
        kernel: int = 3,
        padding: int = 1,
        lif: LifParams | None = None,
    ) -> "NetworkSpec":
        layers, c = [], in_channels
        side = size
        for _ in range(n_conv):
            out_side = side + 2 * padding - kernel + 1
            layers.append(LayerSpec("conv2d", (c, side, side), (channels, out_side, out_side), kernel, padding))
            c, side = channels, out_side
        layers.append(LayerSpec("linear_readout", (c * side * side,), (classes,)))
        return cls((in_channels, size, size), tuple(layers), lif or LifParams(), "direct_to_conv")

    def with_lif(self, lif: LifParams) -> "NetworkSpec":
        return replace(self, lif=lif)


@dataclass
class LayerState:
    u: np.ndarray
    x_prev: np.ndarray

    @classmethod
    def zeros(cls, shape) -> "LayerState":
        return cls(np.zeros(shape), np.zeros(shape))


def heaviside_spike(u, theta: float) -> np.ndarray:
    if theta < 0:
        raise ParameterError(f"theta must be >= 0, got {theta}")
    return (np.asarray(u, dtype=np.float64) > theta).astype(np.float64)


def lif_step(state: LayerState, drive, params: LifParams) -> tuple[LayerState, np.ndarray]:
    drive = np.asarray(drive, dtype=np.float64)
    if state.u.shape != drive.shape or state.x_prev.shape != drive.shape:
        raise ShapeError(f"lif_step: state {state.u.shape} vs drive {drive.shape}")
    u = np.array(state.u, dtype=np.float64, order="C", copy=True)
    spikes = np.empty_like(u)
    kernels.lif_update(
        u.reshape(-1),
        np.ascontiguousarray(state.x_prev, dtype=np.float64).reshape(-1),
        np.ascontiguousarray(drive).reshape(-1),
        params.beta,
        params.theta,
        RESET_MODES[params.reset],
        spikes.reshape(-1),
    )
    return LayerState(u, spikes.copy()), spikes


def conv2d_forward(x, kernels_, padding: int = 0) -> np.ndarray:
    """Stride-1 cross-correlation, ``x`` as [batch, c, h, w], kernels as [co, ci, k, k]."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(kernels_, dtype=np.float64)
    if x.ndim != 4 or w.ndim != 4 or w.shape[1] != x.shape[1] or w.shape[2] != w.shape[3]:
        raise ShapeError(f"conv2d: input {x.shape} incompatible with kernels {w.shape}")
    k = w.shape[2]
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeError(f"conv2d: kernel {k} larger than padded input {x.shape[2:]}")
    patches = sliding_window_view(x, (k, k), axis=(2, 3))  # b, c, oh, ow, k, k
    out = np.tensordot(patches, w, axes=([1, 4, 5], [1, 2, 3]))  # b, oh, ow, co
    return np.ascontiguousarray(out.transpose(0, 3, 1, 2))


def layer_drive(layer: LayerSpec, weight: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Synaptic input to ``layer`` from presynaptic activity ``x`` (batch first)."""
    if layer.kind == "conv2d":
        return conv2d_forward(x, weight, layer.padding)
    x2 = x.reshape(x.shape[0], -1)
    if x2.shape[1] != weight.shape[1]:
        raise ShapeError(f"{layer.kind}: weight {weight.shape} cannot consume input width {x2.shape[1]}")
    return x2 @ weight.T


def check_weights(net: NetworkSpec, weights: Sequence[np.ndarray]) -> None:
    if len(weights) != len(net.layers):
        raise ShapeError(f"expected {len(net.layers)} weight tensors, got {len(weights)}")
    for i, (layer, w) in enumerate(zip(net.layers, weights), start=1):
        if tuple(np.shape(w)) != layer.weight_shape:
            raise ShapeError(f"layer {i}: weight shape {np.shape(w)} != {layer.weight_shape}")


Recorder = Callable[[int, int, np.ndarray, np.ndarray], None]


@dataclass
class Trajectory:
    """Membrane potentials and spikes indexed ``[t][layer]``; ``t`` is 0-based here."""

    u: list[list[np.ndarray | None]]
    spikes: list[list[np.ndarray | None]]


def forward_pass(
    net: NetworkSpec,
    weights: Sequence[np.ndarray],
    inputs,
    T: int,
    recorder: Recorder | None = None,
    keep: bool = True,
) -> Trajectory | None:
    """Run ``T`` steps with the input re-injected as constant drive at every step.

    Layer index 0 is the input LIF population (membrane encoding only);
    weighted layers are 1..L. ``recorder(layer, t, u, spikes)`` is called
    with 1-based ``t`` after each layer update. With ``keep=False`` nothing is
    retained and ``None`` is returned.
    """
    if T < 1:
        raise ParameterError(f"T must be >= 1, got {T}")
    check_weights(net, weights)
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[1:] != tuple(net.input_shape):
        raise ShapeError(f"input shape {inputs.shape[1:]} != network input {net.input_shape}")
    batch = inputs.shape[0]
    first = 0 if net.has_input_layer else 1
    shapes = [(batch, *net.input_shape)] + [(batch, *layer.out_shape) for layer in net.layers]
    states = {i: LayerState.zeros(shapes[i]) for i in range(first, len(shapes))}
    traj = Trajectory([], []) if keep else None
    for t in range(1, T + 1):
        us: list[np.ndarray | None] = [None] * len(shapes)
        xs: list[np.ndarray | None] = [None] * len(shapes)
        x = inputs
        for i in range(first, len(shapes)):
            drive = inputs if i == 0 else layer_drive(net.layers[i - 1], weights[i - 1], x)
            states[i], x = lif_step(states[i], drive, net.lif_for(i))
            if recorder is not None:
                recorder(i, t, states[i].u, x)
            us[i], xs[i] = states[i].u, x
        if traj is not None:
            traj.u.append(us)
            traj.spikes.append(xs)
    return traj
