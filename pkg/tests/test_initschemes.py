import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from snnlab.core import LifParams, NetworkSpec
from snnlab.errors import MissingCalibrationError, ParameterError, VarianceOverflowError
from snnlab.initschemes import (
    SCHEMES,
    InitScheme,
    baseline_variance,
    initialize_network,
    kaiming_variance,
    proposed_variance,
)
from snnlab.numerics import Rng


class TestProposed:
    def test_theta_zero_is_kaiming(self):
        assert proposed_variance(1000, 0.0) == kaiming_variance(1000) == 0.002

    @pytest.mark.parametrize("n,theta,tail", [(1000, 1.0, 0.1586553), (600, 0.5, 0.3085375)])
    def test_derived_values(self, n, theta, tail):
        # tails come from the trapezoid oracle in test_numerics, printed to 7 digits
        assert proposed_variance(n, theta) == pytest.approx(1.0 / (n * tail), rel=1e-6)

    def test_printed_value(self):
        assert proposed_variance(1000, 1.0) == pytest.approx(6.3030e-3, abs=5e-8)

    def test_overflow(self):
        with pytest.raises(VarianceOverflowError):
            proposed_variance(1000, 40.0)

    @pytest.mark.parametrize("n,theta", [(0, 1.0), (10, -0.5)])
    def test_parameter_errors(self, n, theta):
        with pytest.raises(ParameterError):
            proposed_variance(n, theta)

    @given(st.integers(1, 10**6), st.floats(1e-9, 5.0))
    def test_exceeds_kaiming(self, n, theta):
        assert proposed_variance(n, theta) > kaiming_variance(n)

    @given(st.integers(1, 10**5), st.floats(0, 5), st.floats(0.01, 1))
    def test_monotone(self, n, theta, d):
        assert proposed_variance(n, theta + d) > proposed_variance(n, theta)
        assert proposed_variance(n + 1, theta) < proposed_variance(n, theta)


class TestBaselines:
    @pytest.mark.parametrize("n,expected", [(1000, 0.002), (2, 1.0)])
    def test_kaiming(self, n, expected):
        assert kaiming_variance(n) == expected

    def test_glorot(self):
        assert baseline_variance("glorot", 1000, 1000).variance == 0.001

    @pytest.mark.parametrize("name", ["lee2016", "bellec2018", "zenke"])
    def test_fan_in_rules(self, name):
        assert baseline_variance(name, 100, 7).variance == 0.01

    def test_fluctuation_driven_identity(self):
        fd = baseline_variance(InitScheme("fluctuation_driven", sigma_u=1.0), 1000, 1000, p_hat=0.1587).variance
        assert fd == pytest.approx(6.30e-3, abs=5e-6)
        tail = proposed_variance(1000, 1.0) * 1000
        exact = baseline_variance(InitScheme("fluctuation_driven"), 1000, 1000, p_hat=1 / tail).variance
        assert exact == pytest.approx(proposed_variance(1000, 1.0), rel=1e-14)

    def test_fluctuation_driven_needs_calibration(self):
        with pytest.raises(MissingCalibrationError):
            baseline_variance("fluctuation_driven", 10, 10)

    @pytest.mark.parametrize("name", sorted(SCHEMES))
    def test_positive_finite(self, name):
        scheme = InitScheme(name, p_hat=0.2) if name == "fluctuation_driven" else InitScheme(name)
        for n in (1, 3, 1000):
            v = baseline_variance(scheme, n, n, theta=1.0).variance
            assert math.isfinite(v) and v > 0

    def test_approximation_flags(self):
        flagged = {name for name, info in SCHEMES.items() if info.approximation}
        assert flagged == {"lee2016", "bellec2018", "zenke", "ding2022", "fluctuation_driven"}

    def test_unknown_scheme(self):
        with pytest.raises(ParameterError):
            InitScheme("orthogonal")


class TestInitializeNetwork:
    def test_empirical_variance(self):
        net = NetworkSpec.mlp(1000, [1000], LifParams(theta=1.0))
        (w,) = initialize_network(net, "proposed", Rng(0))
        assert w.values.shape == (1000, 1000)
        assert abs(w.values.var() / 6.3030e-3 - 1) < 0.01
        assert abs(w.values.mean()) < 3 * w.values.std() / 1000

    def test_conv_fan_in(self):
        net = NetworkSpec.cnn(64, 8, channels=64, n_conv=1, classes=2)
        tensors = initialize_network(net, "kaiming", Rng(1))
        assert tensors[0].fan_in == 576
        assert tensors[0].values.var() == pytest.approx(2 / 576, rel=0.05)

    def test_determinism(self):
        net = NetworkSpec.mlp(20, [10, 5])
        a = initialize_network(net, "proposed", Rng(4))
        b = initialize_network(net, "proposed", Rng(4))
        assert all(np.array_equal(x.values, y.values) for x, y in zip(a, b))
        assert a[1].scheme == "proposed" and a[1].seed == 4 and a[1].layer == 2

    def test_presynaptic_threshold(self):
        from dataclasses import replace

        net = NetworkSpec.mlp(50, [40, 30], LifParams(theta=0.5))
        net = replace(net, layers=(replace(net.layers[0], lif=LifParams(theta=1.0)), net.layers[1]))
        w = initialize_network(net, "proposed", Rng(0))
        std1 = w[0].values / Rng(0).substream(1).generator().standard_normal((40, 50))
        std2 = w[1].values / Rng(0).substream(2).generator().standard_normal((30, 40))
        assert np.allclose(std1, math.sqrt(proposed_variance(50, 0.5)))
        assert np.allclose(std2, math.sqrt(proposed_variance(40, 1.0)))

    def test_single_layer_variance_is_one(self):
        """One dense layer fed by N(0,1) membranes keeps unit variance under the proposed rule."""
        from snnlab.core import forward_pass

        net = NetworkSpec.mlp(1000, [1000], LifParams(0.5, 1.0, "none"))
        variances = []
        for seed in range(20):
            rng = Rng(seed)
            w = [t.values for t in initialize_network(net, "proposed", rng)]
            u0 = rng.substream(0).generator().standard_normal((1, 1000))
            variances.append(forward_pass(net, w, u0, 1).u[0][1].var())
        assert abs(np.mean(variances) - 1) < 0.1

    def test_fluctuation_driven_calibration(self, gen):
        net = NetworkSpec.mlp(200, [200, 200], LifParams(0.5, 1.0, "none"))
        tensors = initialize_network(net, InitScheme("fluctuation_driven"), Rng(0), gen.standard_normal((16, 200)))
        assert len(tensors) == 2 and all(np.isfinite(t.values).all() for t in tensors)
        with pytest.raises(MissingCalibrationError):
            initialize_network(net, InitScheme("fluctuation_driven"), Rng(0))
