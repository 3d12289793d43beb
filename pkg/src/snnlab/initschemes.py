"""Weight initialization schemes.

Every scheme draws i.i.d. Gaussian weights; only mean and variance differ.
The threshold-aware rule scales the Kaiming fan-in rule by the fraction of
presynaptic neurons expected to fire for a standard-normal membrane
potential, so a layer receiving binary spikes keeps unit membrane variance::

    Var[w] = 1 / (fan_in * P(U > theta)),   U ~ N(0, 1)

Schemes flagged ``approximation`` stand in for published SNN rules whose
exact parameterization is not reproduced here; see ``SCHEMES``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from snnlab.core import NetworkSpec, forward_pass
from snnlab.errors import MissingCalibrationError, ParameterError, VarianceOverflowError
from snnlab.numerics import Rng, std_normal_tail


@dataclass(frozen=True)
class SchemeInfo:
    name: str
    approximation: bool
    note: str


SCHEMES: dict[str, SchemeInfo] = {
    s.name: s
    for s in [
        SchemeInfo("proposed", False, "1/(fan_in * P(U > theta)), threshold-aware"),
        SchemeInfo("kaiming", False, "2/fan_in (He et al., ReLU)"),
        SchemeInfo("glorot", False, "2/(fan_in + fan_out)"),
        SchemeInfo("lee2016", True, "1/fan_in; fan-in scaling shared by the cited SNN rules"),
        SchemeInfo("bellec2018", True, "1/fan_in; fan-in scaling shared by the cited SNN rules"),
        SchemeInfo("zenke", True, "1/fan_in; fan-in scaling shared by the cited SNN rules"),
        SchemeInfo(
            "ding2022",
            True,
            "2*theta^2/fan_in; ReLU-style rule on the asymptotic rate response max(0, I)/theta "
            "of a neuron under constant (mean-driven) input",
        ),
        SchemeInfo(
            "fluctuation_driven",
            True,
            "sigma_u^2/(fan_in * p_hat), p_hat measured on calibration inputs",
        ),
    ]
}


@dataclass(frozen=True)
class InitScheme:
    """A named scheme plus its hyperparameters.

    ``theta`` overrides the network threshold for threshold-dependent rules.
    ``p_hat`` is the measured presynaptic spike probability for
    ``fluctuation_driven``; a sequence gives one value per layer.
    """

    name: str
    theta: float | None = None
    sigma_u: float = 1.0
    p_hat: float | tuple[float, ...] | None = None

    def __post_init__(self):
        if self.name not in SCHEMES:
            raise ParameterError(f"unknown init scheme {self.name!r}; choose from {sorted(SCHEMES)}")
        if isinstance(self.p_hat, list):
            object.__setattr__(self, "p_hat", tuple(self.p_hat))

    @property
    def approximation(self) -> bool:
        return SCHEMES[self.name].approximation


@dataclass(frozen=True)
class WeightDistribution:
    mean: float
    variance: float

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass
class WeightTensor:
    values: np.ndarray
    scheme: str
    seed: int
    fan_in: int
    layer: int


def _check_fan(fan_in: int, what: str = "fan_in") -> None:
    if fan_in < 1:
        raise ParameterError(f"{what} must be >= 1, got {fan_in}")


def proposed_variance(fan_in: int, theta: float) -> float:
    _check_fan(fan_in)
    if theta < 0:
        raise ParameterError(f"theta must be >= 0, got {theta}")
    tail = std_normal_tail(theta)
    var = 1.0 / (fan_in * tail) if tail > 0 else math.inf
    if not math.isfinite(var):
        raise VarianceOverflowError(
            f"P(U > {theta}) underflows; the threshold is too many standard deviations above "
            "the membrane distribution. Lower theta or rescale the inputs."
        )
    return var


def kaiming_variance(fan_in: int) -> float:
    _check_fan(fan_in)
    return 2.0 / fan_in


def fluctuation_driven_variance(fan_in: int, sigma_u: float, p_hat: float) -> float:
    _check_fan(fan_in)
    if not 0.0 < p_hat <= 1.0:
        raise ParameterError(f"measured spike probability must lie in (0, 1], got {p_hat}")
    return sigma_u**2 / (fan_in * p_hat)


def baseline_variance(
    scheme: InitScheme | str, fan_in: int, fan_out: int, theta: float = 1.0, p_hat: float | None = None
) -> WeightDistribution:
    """Weight distribution for ``scheme`` at the given fans.

    ``theta`` is used by the threshold-dependent rules unless the scheme
    carries its own; ``p_hat`` overrides the scheme's calibration value.
    """
    if isinstance(scheme, str):
        scheme = InitScheme(scheme)
    _check_fan(fan_in)
    _check_fan(fan_out, "fan_out")
    th = theta if scheme.theta is None else scheme.theta
    name = scheme.name
    if name == "proposed":
        var = proposed_variance(fan_in, th)
    elif name == "kaiming":
        var = kaiming_variance(fan_in)
    elif name == "glorot":
        var = 2.0 / (fan_in + fan_out)
    elif name in ("lee2016", "bellec2018", "zenke"):
        var = 1.0 / fan_in
    elif name == "ding2022":
        var = 2.0 * th * th / fan_in
        if var == 0.0:
            raise ParameterError("ding2022 needs theta > 0")
    else:
        p = p_hat if p_hat is not None else scheme.p_hat
        if p is None:
            raise MissingCalibrationError(
                "fluctuation_driven needs a measured spike probability; "
                "pass p_hat or calibration inputs to initialize_network"
            )
        if isinstance(p, tuple):
            raise ParameterError("per-layer p_hat must be resolved before calling baseline_variance")
        var = fluctuation_driven_variance(fan_in, scheme.sigma_u, p)
    return WeightDistribution(0.0, var)


def standard_draws(rng: Rng, layer: int, shape: Sequence[int]) -> np.ndarray:
    """Unit-normal draws backing layer ``layer`` (1-based) for a given seed."""
    return rng.substream(layer).generator().standard_normal(tuple(shape))


def layer_distribution(
    net: NetworkSpec, scheme: InitScheme, index: int, p_hat: float | None = None
) -> WeightDistribution:
    """Distribution for weighted layer ``index`` (1-based); threshold is the presynaptic one."""
    layer = net.layers[index - 1]
    if p_hat is None and isinstance(scheme.p_hat, tuple):
        if len(scheme.p_hat) != len(net.layers):
            raise ParameterError(f"need {len(net.layers)} per-layer p_hat values, got {len(scheme.p_hat)}")
        p_hat = scheme.p_hat[index - 1]
    return baseline_variance(scheme, layer.fan_in, layer.fan_out, net.lif_for(index - 1).theta, p_hat)


def _spike_probability(net: NetworkSpec, weights, inputs, T: int, index: int) -> float:
    """Mean firing probability of population ``index`` over batch, neurons and time."""
    sub = NetworkSpec(net.input_shape, net.layers[:index], net.lif, net.input_encoding)
    total, count = 0.0, 0

    def rec(layer, t, u, spikes):
        nonlocal total, count
        if layer == index:
            total += float(spikes.sum())
            count += spikes.size

    forward_pass(sub, weights[:index], inputs, T, recorder=rec, keep=False)
    return total / count


def calibrate_fluctuation_driven(
    net: NetworkSpec, scheme: InitScheme, rng: Rng, calibration_inputs, T: int = 1
) -> list[WeightTensor]:
    """Initialize layer by layer, measuring each layer's presynaptic firing on calibration data."""
    if not net.has_input_layer:
        raise ParameterError("fluctuation_driven calibration needs a spiking input layer")
    inputs = np.asarray(calibration_inputs, dtype=np.float64)
    weights: list[np.ndarray] = []
    p_hats = []
    for index in range(1, len(net.layers) + 1):
        p = _spike_probability(net, weights, inputs, T, index - 1)
        if p == 0.0:
            raise MissingCalibrationError(
                f"no presynaptic spikes reach layer {index} on the calibration inputs; cannot calibrate"
            )
        p_hats.append(p)
        dist = layer_distribution(net, scheme, index, p_hat=p)
        layer = net.layers[index - 1]
        weights.append(dist.mean + dist.std * standard_draws(rng, index, layer.weight_shape))
    return [
        WeightTensor(w, scheme.name, rng.seed, layer.fan_in, i)
        for i, (w, layer) in enumerate(zip(weights, net.layers), start=1)
    ]


def initialize_network(
    net: NetworkSpec, scheme: InitScheme | str, rng: Rng, calibration_inputs=None, calibration_T: int = 1
) -> list[WeightTensor]:
    if isinstance(scheme, str):
        scheme = InitScheme(scheme)
    if scheme.name == "fluctuation_driven" and scheme.p_hat is None:
        if calibration_inputs is None:
            raise MissingCalibrationError("fluctuation_driven needs p_hat or calibration inputs")
        return calibrate_fluctuation_driven(net, scheme, rng, calibration_inputs, calibration_T)
    out = []
    for index, layer in enumerate(net.layers, start=1):
        dist = layer_distribution(net, scheme, index)
        values = dist.mean + dist.std * standard_draws(rng, index, layer.weight_shape)
        out.append(WeightTensor(values, scheme.name, rng.seed, layer.fan_in, index))
    return out
