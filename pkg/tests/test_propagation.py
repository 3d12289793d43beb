from dataclasses import replace

import numpy as np
import pytest

from snnlab.core import NetworkSpec, forward_pass
from snnlab.errors import ParameterError
from snnlab.initschemes import InitScheme, initialize_network
from snnlab.numerics import Rng
from snnlab.propagation import (
    PropagationConfig,
    SimTrace,
    aggregate,
    compare,
    multi_step_config,
    run_finite_size_sweep,
    run_multi_step,
    run_single_step,
    simulate,
    single_step_config,
)


def reference_trace(config: PropagationConfig):
    """Per-seed statistics recomputed with forward_pass on explicitly initialized weights."""
    n, L = config.width, config.depth
    net = NetworkSpec.mlp(n, [n] * L, config.lif)
    out = np.zeros((config.seeds, L, config.T, 2))
    for s_idx, seed in enumerate(config.seed_list):
        rng = Rng(seed)
        weights = [w.values for w in initialize_network(net, config.scheme, rng)]
        x = rng.substream(0).generator().standard_normal((config.batch, n))
        traj = forward_pass(net, weights, x, config.T)
        for t in range(config.T):
            for layer in range(1, L + 1):
                out[s_idx, layer - 1, t] = traj.u[t][layer].var(), traj.spikes[t][layer].sum()
    return out


@pytest.mark.parametrize(
    "config",
    [
        single_step_config(depth=4, width=30, seeds=3),
        multi_step_config(depth=3, width=25, seeds=2, T=4),
        multi_step_config(depth=3, width=25, seeds=2, T=3, beta=0.9, theta=0.5),
        replace(single_step_config(depth=3, width=20, seeds=2), scheme=InitScheme("kaiming")),
    ],
)
def test_matches_forward_pass(config):
    tr = simulate([config])[0]
    ref = reference_trace(config)
    np.testing.assert_allclose(tr.var_u, ref[..., 0], rtol=1e-10, atol=1e-12)
    assert np.array_equal(tr.spike_count, ref[..., 1].astype(np.int64))


def test_variant_independent_of_grouping():
    a = single_step_config(depth=5, width=40, seeds=2, theta=0.6)
    b = replace(a, scheme=InitScheme("kaiming"))
    alone = simulate([a])[0]
    grouped = compare([b, a])[1]
    assert np.array_equal(alone.var_u, grouped.var_u)


def test_determinism():
    c = multi_step_config(depth=4, width=30, seeds=2, T=5)
    a, b = run_multi_step(c), run_multi_step(c)
    for name in ("var_u", "spike_count", "skewness", "excess_kurtosis"):
        assert np.array_equal(a.metric(name), b.metric(name), equal_nan=True)


def test_invariants():
    tr = run_multi_step(multi_step_config(depth=5, width=50, seeds=2, T=4))
    assert (tr.var_u >= 0).all()
    assert tr.spike_count.min() >= 0 and tr.spike_count.max() <= 50


def test_spike_count_monotone_in_theta():
    """Same weights and inputs (shared draws); higher threshold cannot add first-layer spikes."""
    base = single_step_config(depth=1, width=60, seeds=3, scheme=InitScheme("kaiming"))
    thetas = [0.0, 0.3, 0.7, 1.2]
    traces = compare([replace(base, lif=replace(base.lif, theta=th)) for th in thetas])
    counts = np.stack([tr.spike_count[:, 0, 0] for tr in traces])
    assert (np.diff(counts, axis=0) <= 0).all()


def test_dead_layer_is_absorbing():
    tr = run_single_step(replace(single_step_config(depth=30, width=50, seeds=2, theta=1.0), scheme=InitScheme("kaiming")))
    for s in range(2):
        dead = np.flatnonzero(tr.spike_count[s, :, 0] == 0)
        if dead.size and dead[0] + 1 < 30:
            assert (tr.var_u[s, dead[0] + 1 :, 0] == 0).all()


def test_run_mode_preconditions():
    with pytest.raises(ParameterError):
        run_single_step(multi_step_config(depth=2, width=5, seeds=1))
    with pytest.raises(ParameterError):
        run_multi_step(single_step_config(depth=2, width=5, seeds=1))
    with pytest.raises(ParameterError):
        PropagationConfig(depth=0)


class TestAggregate:
    def _trace(self, values):
        v = np.asarray(values, dtype=float)
        z = np.zeros_like(v)
        return SimTrace(single_step_config(depth=v.shape[1], width=5, seeds=v.shape[0]), v, z.astype(np.int64), z, z)

    def test_single_seed_std_zero(self):
        agg = aggregate(self._trace(np.arange(6.0).reshape(1, 3, 2)))
        assert (agg.std["var_u"] == 0).all()

    def test_identical_seeds(self):
        v = np.random.default_rng(0).random((1, 4, 1))
        agg = aggregate(self._trace(np.concatenate([v, v])))
        assert (agg.std["var_u"] == 0).all() and np.array_equal(agg.mean["var_u"], v[0])

    def test_recomputation(self):
        v = np.random.default_rng(1).random((20, 5, 1))
        agg = aggregate(self._trace(v))
        for layer in range(5):
            col = [v[s, layer, 0] for s in range(20)]
            mean = sum(col) / 20
            std = (sum((c - mean) ** 2 for c in col) / 20) ** 0.5
            assert agg.mean["var_u"][layer, 0] == pytest.approx(mean, abs=1e-14)
            assert agg.std["var_u"][layer, 0] == pytest.approx(std, abs=1e-14)

    def test_empty(self):
        with pytest.raises(ParameterError):
            aggregate([])


def test_finite_size_consistency():
    """|Var - 1| at depth shrinks as width grows (theta=0.8)."""
    base = single_step_config(depth=20, seeds=10, theta=0.8)
    sweep = run_finite_size_sweep([100, 300, 1000], [0.8], base)
    dev = [abs(np.mean(sweep[(w, 0.8)].var_u[:, -5:, 0]) - 1) for w in (100, 300, 1000)]
    assert dev[0] > dev[1] > dev[2]


def test_sweep_rejects_empty():
    with pytest.raises(ParameterError):
        run_finite_size_sweep([100], [], single_step_config())


def test_fluctuation_driven_calibrated_run():
    c = replace(single_step_config(depth=5, width=200, seeds=2), scheme=InitScheme("fluctuation_driven"))
    tr = run_single_step(c)
    assert np.isfinite(tr.var_u).all()


def test_time_average_nan_aware():
    c = multi_step_config(depth=2, width=10, seeds=1, T=3)
    z = np.zeros((1, 2, 3))
    sk = np.array([[[np.nan, 1.0, 3.0], [np.nan] * 3]])
    tr = SimTrace(c, z, z.astype(np.int64), sk, z)
    avg = tr.time_average("skewness")
    assert avg[0, 0] == 2.0 and np.isnan(avg[0, 1])
