"""Threshold-aware weight initialization and activity-propagation experiments for deep SNNs."""

from snnlab.core import LayerSpec, LayerState, LifParams, NetworkSpec, forward_pass, heaviside_spike, lif_step
from snnlab.initschemes import InitScheme, initialize_network, kaiming_variance, proposed_variance
from snnlab.kernels import BACKEND
from snnlab.numerics import Rng, describe, std_normal_tail

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "InitScheme",
    "LayerSpec",
    "LayerState",
    "LifParams",
    "NetworkSpec",
    "Rng",
    "describe",
    "forward_pass",
    "heaviside_spike",
    "initialize_network",
    "kaiming_variance",
    "lif_step",
    "proposed_variance",
    "std_normal_tail",
]
