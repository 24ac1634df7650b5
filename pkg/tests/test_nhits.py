import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import copy_parameters, zero_parameters
from vitalattn import numerics as nx
from vitalattn.nbeats import NBeatsModel
from vitalattn.nhits import (
    NHitsModel,
    NHitsStackConfig,
    interpolate_coeffs,
    interpolation_matrix,
    multirate_pool,
    nhits_forward,
)
from vitalattn.numerics import Tensor, grad_check


class TestPool:
    def test_identity_kernel(self, rng):
        x = rng.normal(size=(2, 6))
        np.testing.assert_array_equal(multirate_pool(Tensor(x), 1).data, x.ravel())

    def test_example(self):
        assert multirate_pool(Tensor([[1, 3, 2, 5]]), 2).data.tolist() == [3, 5]

    def test_shape(self, rng):
        assert multirate_pool(Tensor(rng.normal(size=(2, 6))), 3).shape == (4,)
        assert multirate_pool(Tensor(rng.normal(size=(5, 2, 7))), 3).shape == (5, 6)

    def test_channels_pooled_separately(self):
        out = multirate_pool(Tensor([[1, 9, 0], [4, 2, 3]]), 2).data
        assert out.tolist() == [9, 0, 4, 3]

    def test_bad_kernel(self):
        with pytest.raises(ValueError):
            multirate_pool(Tensor(np.zeros((1, 4))), 0)


class TestInterpolation:
    def test_linear(self):
        np.testing.assert_allclose(interpolate_coeffs(Tensor([0.0, 1.0]), 3).data, [0, 0.5, 1])

    def test_identity(self, rng):
        theta = rng.normal(size=5)
        np.testing.assert_array_equal(interpolate_coeffs(Tensor(theta), 5).data, theta)

    def test_constant(self):
        assert interpolate_coeffs(Tensor([2.0]), 4).data.tolist() == [2, 2, 2, 2]

    @settings(max_examples=40)
    @given(st.integers(2, 12), st.integers(0, 30))
    def test_endpoints_and_range(self, c, extra):
        H = c + extra
        theta = np.random.default_rng(c * 31 + extra).normal(size=c)
        out = interpolate_coeffs(Tensor(theta), H).data
        assert out[0] == pytest.approx(theta[0]) and out[-1] == pytest.approx(theta[-1])
        assert theta.min() - 1e-12 <= out.min() and out.max() <= theta.max() + 1e-12

    def test_matches_numpy_interp(self):
        theta = np.array([1.0, -2.0, 0.5, 3.0])
        grid = np.linspace(0, 3, 10)
        np.testing.assert_allclose(interpolate_coeffs(Tensor(theta), 10).data, np.interp(grid, range(4), theta), atol=1e-14)

    def test_matrix_columns_sum_to_one(self):
        M = interpolation_matrix(4, 9)
        np.testing.assert_allclose(M.sum(axis=0), 1.0)

    def test_bad_counts(self):
        with pytest.raises(ValueError):
            interpolation_matrix(5, 4)

    def test_knot_counts(self):
        assert [NHitsStackConfig(k, r).n_coeffs(36) for k, r in [(8, 12), (4, 4), (1, 1)]] == [3, 9, 36]
        assert NHitsStackConfig(1, 5).n_coeffs(4) == 1
        assert math.ceil(36 / 5) == NHitsStackConfig(1, 5).n_coeffs(36)


class TestModel:
    def test_zero_model(self, rng):
        model = NHitsModel(2, 8, 4, kernels=(4, 1), ratios=(2, 1), width=8)
        zero_parameters(model)
        x = Tensor(rng.normal(size=(2, 8)))
        forecast, residual = nhits_forward(model, x)
        assert not forecast.data.any()
        np.testing.assert_array_equal(residual.data, x.data.ravel())

    @pytest.mark.parametrize("seed", range(5))
    def test_telescoping(self, seed):
        rng = np.random.default_rng(seed)
        model = NHitsModel(3, 12, 6, kernels=(4, 2, 1), ratios=(3, 2, 1), n_blocks=2, width=16, seed=seed)
        x = Tensor(rng.uniform(0, 1, (4, 3, 12)))
        trace = []
        _, residual = model.forward(x, trace)
        total = residual.data + sum(b.data for b, _ in trace)
        np.testing.assert_allclose(total, x.data.reshape(4, 36), atol=1e-10)

    def test_backcast_full_resolution(self, rng):
        model = NHitsModel(2, 8, 4, kernels=(4,), ratios=(2,), width=8)
        assert model.stacks[0].blocks[0].n_in == 4
        assert model.stacks[0].blocks[0].backcast_size == 16
        assert model.stacks[0].blocks[0].theta_f.weight.shape == (8, 2)

    @pytest.mark.parametrize("seed", range(3))
    def test_degenerates_to_nbeats(self, seed):
        rng = np.random.default_rng(seed)
        nbeats = NBeatsModel(2, 8, 4, n_stacks=3, n_blocks=2, width=8, seed=seed)
        nhits = NHitsModel(2, 8, 4, kernels=(1, 1, 1), ratios=(1, 1, 1), n_blocks=2, width=8, seed=seed + 100)
        copy_parameters(nbeats, nhits)
        x = Tensor(rng.normal(size=(5, 2, 8)))
        fa, ra = nbeats.forward(x)
        fb, rb = nhits.forward(x)
        assert np.array_equal(fa.data, fb.data) and np.array_equal(ra.data, rb.data)

    def test_mismatched_config(self):
        with pytest.raises(ValueError):
            NHitsModel(1, 8, 4, kernels=(2, 1), ratios=(1,))

    def test_model_gradients(self, rng):
        model = NHitsModel(2, 8, 4, kernels=(4, 2), ratios=(2, 1), width=8, seed=2)
        x, y = Tensor(rng.uniform(-2, 2, (3, 2, 8))), Tensor(rng.uniform(-2, 2, (3, 4)))
        report = grad_check(lambda: nx.mse_loss(model(x), y), dict(model.named_parameters()), tolerance=1e-4,
                            max_entries=6)
        assert report.passed, report.worst
