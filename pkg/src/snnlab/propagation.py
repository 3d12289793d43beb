"""Depth x time activity propagation in deep fully-connected SNNs.

Networks are simulated layer by layer rather than step by step: a
feedforward layer's whole spike train depends only on the spike train of the
layer below, so each weight matrix is drawn once, applied to all time steps
in a single matmul and discarded. Several (scheme, threshold, leak)
variants run together on the same unit-normal draws, which makes results
for one variant independent of whatever it is grouped with.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from snnlab import kernels
from snnlab.core import RESET_MODES, LifParams
from snnlab.errors import MissingCalibrationError, ParameterError
from snnlab.initschemes import InitScheme, baseline_variance, standard_draws
from snnlab.numerics import Rng

INPUT_STREAM = 0
CALIBRATION_STREAM = (0, 1)
METRICS = ("var_u", "spike_count", "skewness", "excess_kurtosis")


@dataclass(frozen=True)
class PropagationConfig:
    depth: int = 100
    width: int = 1000
    T: int = 1
    lif: LifParams = field(default_factory=lambda: LifParams(beta=0.5, theta=1.0, reset="none"))
    scheme: InitScheme = field(default_factory=lambda: InitScheme("proposed"))
    seeds: int = 20
    seed0: int = 0
    batch: int = 1
    calibration_batch: int = 16

    def __post_init__(self):
        for name in ("depth", "width", "T", "seeds", "batch", "calibration_batch"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.seed0 < 0:
            raise ParameterError("seed0 must be non-negative")
        if isinstance(self.scheme, str):
            object.__setattr__(self, "scheme", InitScheme(self.scheme))

    @property
    def seed_list(self) -> tuple[int, ...]:
        return tuple(range(self.seed0, self.seed0 + self.seeds))

    def shares_draws_with(self, other: "PropagationConfig") -> bool:
        keys = ("depth", "width", "T", "seeds", "seed0", "batch", "calibration_batch")
        return all(getattr(self, k) == getattr(other, k) for k in keys)


@dataclass
class SimTrace:
    """Per-(seed, layer, t) statistics; arrays are [seed, layer-1, t-1]."""

    config: PropagationConfig
    var_u: np.ndarray
    spike_count: np.ndarray
    skewness: np.ndarray
    excess_kurtosis: np.ndarray

    @property
    def seeds(self) -> tuple[int, ...]:
        return self.config.seed_list

    def metric(self, name: str) -> np.ndarray:
        if name not in METRICS:
            raise KeyError(name)
        return getattr(self, name)

    def time_average(self, name: str) -> np.ndarray:
        """[seed, layer] average over all time steps, ignoring undefined entries."""
        values = self.metric(name).astype(np.float64)
        out = np.full(values.shape[:2], np.nan)
        ok = ~np.all(np.isnan(values), axis=2)
        out[ok] = np.nanmean(values[ok], axis=1)
        return out


@dataclass
class Aggregate:
    """Mean and population std across seeds for each metric, shape [layer, t]."""

    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]


def _nan_stats(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = np.full(values.shape[1:], np.nan)
    std = np.full(values.shape[1:], np.nan)
    ok = ~np.all(np.isnan(values), axis=0)
    mean[ok] = np.nanmean(values[:, ok], axis=0)
    std[ok] = np.nanstd(values[:, ok], axis=0)
    return mean, std


def aggregate(traces: SimTrace | Sequence[SimTrace]) -> Aggregate:
    """Collapse the seed axis. Several traces are concatenated along it first."""
    if isinstance(traces, SimTrace):
        traces = [traces]
    if not traces:
        raise ParameterError("aggregate needs at least one trace")
    means, stds = {}, {}
    for name in METRICS:
        stacked = np.concatenate([tr.metric(name).astype(np.float64) for tr in traces], axis=0)
        if stacked.shape[0] == 0:
            raise ParameterError("aggregate needs at least one seed")
        means[name], stds[name] = _nan_stats(stacked)
    return Aggregate(means, stds)


class _Variant:
    """Mutable per-seed simulation state for one config."""

    def __init__(self, config: PropagationConfig, inputs: np.ndarray, calibration: np.ndarray | None):
        self.config = config
        self.lif = config.lif
        self.reset = RESET_MODES[config.lif.reset]
        self.spikes = None  # [T, batch, n] spikes of the layer below
        self.cal_spikes = None
        self.inputs = inputs
        self.calibration = calibration

    def run_population(self, drive_seq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Advance one LIF population through all T steps; returns (u_seq, spike_seq)."""
        T = drive_seq.shape[0]
        u = np.zeros(drive_seq.shape[1:])
        x = np.zeros_like(u)
        u_seq = np.empty_like(drive_seq)
        s_seq = np.empty_like(drive_seq)
        flat_u, flat_x = u.reshape(-1), x.reshape(-1)
        for t in range(T):
            d = np.ascontiguousarray(drive_seq[t]).reshape(-1)
            kernels.lif_update(flat_u, flat_x, d, self.lif.beta, self.lif.theta, self.reset, flat_x)
            u_seq[t] = u
            s_seq[t] = x
        return u_seq, s_seq

    def run_calibration(self, drive: np.ndarray) -> np.ndarray:
        # single-step, reset-free pass of the untrained network
        return (drive > self.lif.theta).astype(np.float64)


def _record(trace_arrays, s_idx, layer, u_seq, s_seq):
    T = u_seq.shape[0]
    flat = np.ascontiguousarray(u_seq.reshape(T, -1).T)
    mom = kernels.column_moments(flat)
    m2, m3, m4 = mom[:, 1], mom[:, 2], mom[:, 3]
    var, cnt, skew, kurt = trace_arrays
    var[s_idx, layer - 1] = m2
    cnt[s_idx, layer - 1] = s_seq.reshape(T, -1).sum(axis=1).astype(np.int64)
    pos = m2 > 0
    with np.errstate(invalid="ignore", divide="ignore"):
        skew[s_idx, layer - 1] = np.where(pos, m3 / np.where(pos, m2, 1.0) ** 1.5, np.nan)
        kurt[s_idx, layer - 1] = np.where(pos, m4 / np.where(pos, m2, 1.0) ** 2 - 3.0, np.nan)


def simulate(configs: Sequence[PropagationConfig]) -> list[SimTrace]:
    """Run several configs that share depth/width/T/seeds on common draws."""
    if not configs:
        raise ParameterError("simulate needs at least one config")
    base = configs[0]
    for c in configs[1:]:
        if not base.shares_draws_with(c):
            raise ParameterError("configs simulated together must share depth, width, T, seeds and batch")
    S, L, T, n, B = base.seeds, base.depth, base.T, base.width, base.batch
    arrays = [
        [np.zeros((S, L, T)), np.zeros((S, L, T), dtype=np.int64), np.zeros((S, L, T)), np.zeros((S, L, T))]
        for _ in configs
    ]
    for s_idx, seed in enumerate(base.seed_list):
        rng = Rng(seed)
        inputs = rng.substream(INPUT_STREAM).generator().standard_normal((B, n))
        needs_cal = any(c.scheme.name == "fluctuation_driven" and c.scheme.p_hat is None for c in configs)
        calibration = (
            rng.substream(*CALIBRATION_STREAM).generator().standard_normal((base.calibration_batch, n))
            if needs_cal
            else None
        )
        variants = [_Variant(c, inputs, calibration) for c in configs]
        for v in variants:
            _, v.spikes = v.run_population(np.broadcast_to(inputs, (T, B, n)).copy())
            if calibration is not None:
                v.cal_spikes = v.run_calibration(calibration)
        for layer in range(1, L + 1):
            z = standard_draws(rng, layer, (n, n))
            for v, arr in zip(variants, arrays):
                dist = _layer_distribution(v, layer, n)
                pre = v.spikes.reshape(T * B, n)
                drive = (pre @ z.T).reshape(T, B, n)
                drive *= dist.std
                if dist.mean:
                    drive += dist.mean * v.spikes.sum(axis=2, keepdims=True)
                u_seq, v.spikes = v.run_population(drive)
                if v.cal_spikes is not None:
                    v.cal_spikes = v.run_calibration(dist.std * (v.cal_spikes @ z.T) + dist.mean * v.cal_spikes.sum(1, keepdims=True))
                _record(arr, s_idx, layer, u_seq, v.spikes)
    return [SimTrace(c, *arr) for c, arr in zip(configs, arrays)]


def _layer_distribution(v: _Variant, layer: int, n: int):
    scheme = v.config.scheme
    theta = v.lif.theta
    if scheme.name != "fluctuation_driven":
        return baseline_variance(scheme, n, n, theta)
    if scheme.p_hat is not None:
        p = scheme.p_hat[layer - 1] if isinstance(scheme.p_hat, tuple) else scheme.p_hat
        return baseline_variance(scheme, n, n, theta, p_hat=p)
    p = float(v.cal_spikes.mean())
    if p == 0.0:
        raise MissingCalibrationError(f"calibration activity vanished before layer {layer}")
    return baseline_variance(scheme, n, n, theta, p_hat=p)


def run_single_step(config: PropagationConfig) -> SimTrace:
    if config.T != 1:
        raise ParameterError(f"single-step runs need T=1, got {config.T}")
    if config.lif.reset != "none":
        raise ParameterError("single-step runs use reset='none'")
    return simulate([config])[0]


def run_multi_step(config: PropagationConfig) -> SimTrace:
    if config.T < 2:
        raise ParameterError(f"multi-step runs need T >= 2, got {config.T}")
    if config.lif.reset != "soft":
        raise ParameterError("multi-step runs use the soft reset")
    return simulate([config])[0]


def single_step_config(**kw) -> PropagationConfig:
    """Defaults for the t=0 analysis: T=1, no reset, 20 seeds."""
    theta = kw.pop("theta", 1.0)
    kw.setdefault("lif", LifParams(beta=0.5, theta=theta, reset="none"))
    kw.setdefault("seeds", 20)
    kw["T"] = 1
    return PropagationConfig(**kw)


def multi_step_config(**kw) -> PropagationConfig:
    """Defaults for the space-time analysis: T=20, soft reset, 10 seeds."""
    theta = kw.pop("theta", 1.0)
    beta = kw.pop("beta", 0.5)
    kw.setdefault("lif", LifParams(beta=beta, theta=theta, reset="soft"))
    kw.setdefault("seeds", 10)
    kw.setdefault("T", 20)
    return PropagationConfig(**kw)


def compare(configs: Iterable[PropagationConfig]) -> list[SimTrace]:
    """Simulate configs, grouping those that can share draws; output keeps input order."""
    configs = list(configs)
    results: list[SimTrace | None] = [None] * len(configs)
    groups: list[list[int]] = []
    for i, c in enumerate(configs):
        for g in groups:
            if configs[g[0]].shares_draws_with(c):
                g.append(i)
                break
        else:
            groups.append([i])
    for g in groups:
        for i, tr in zip(g, simulate([configs[i] for i in g])):
            results[i] = tr
    return results  # type: ignore[return-value]


def run_finite_size_sweep(
    widths: Sequence[int], thetas: Sequence[float], base: PropagationConfig
) -> dict[tuple[int, float], SimTrace]:
    if not widths or not thetas:
        raise ParameterError("finite-size sweep needs at least one width and one theta")
    if any(w < 1 for w in widths):
        raise ParameterError("all widths must be >= 1")
    configs = [
        replace(base, width=int(w), lif=replace(base.lif, theta=float(th))) for w in widths for th in thetas
    ]
    traces = compare(configs)
    return {(c.width, c.lif.theta): tr for c, tr in zip(configs, traces)}
