"""
Test bản 1D nhân quả
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from app.core import (causal_depthwise_conv1d, causal_iw_attention, causal_iw_block, causal_mask,
                      causal_window_attention, init_causal1d, operation_counts, window_msa)
from app.errors import BoundsError, ConfigError, LayoutError
from app.harness.verify import causality, causality_check
from app.models import Layout1D, init_attention
from app.tensor import Tensor


class TestLayout1D:

    def test_groups(self):
        layout = Layout1D(16, 4)
        assert layout.G == 4
        assert layout.window_of(5) == 1
        assert layout.is_sqrt_layout

    def test_not_divisible(self):
        with pytest.raises(LayoutError):
            Layout1D(10, 4)

    def test_token_bounds(self):
        with pytest.raises(BoundsError):
            Layout1D(16, 4).window_of(16)

    def test_sqrt_layout(self):
        assert Layout1D.sqrt(9).M == 3
        with pytest.raises(LayoutError):
            Layout1D.sqrt(12)


class TestCausalOps:

    def test_conv_delta_kernel(self, rng):
        x = Tensor(rng.normal(size=(1, 6, 3)))
        out = causal_depthwise_conv1d(x, Tensor(np.ones((1, 3))))
        assert_array_equal(out.data, x.data)

    def test_conv_sees_only_past(self):
        x = np.zeros((1, 5, 1))
        x[0, 2, 0] = 1.0
        out = causal_depthwise_conv1d(Tensor(x), Tensor(np.ones((3, 1)))).data[0, :, 0]
        assert_array_equal(out, [0.0, 0.0, 1.0, 1.0, 1.0])

    def test_single_group_is_dense_causal(self, rng):
        p = init_attention(rng, 4, 2)
        x = Tensor(rng.normal(size=(2, 6, 4)))
        out = causal_iw_attention(x, Layout1D(6, 6), p)
        assert_allclose(out.data, window_msa(x, p, causal_mask(6)).data, atol=1e-12)

    @pytest.mark.parametrize("n,m", [(8, 2), (12, 3)])
    def test_interleaved_equals_masked_dense(self, n, m, rng):
        layout = Layout1D(n, m)
        p = init_attention(rng, 4, 2)
        x = Tensor(rng.normal(size=(2, n, 4)))
        t, s = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        mask = (t % layout.G == s % layout.G) & (s <= t)
        assert_allclose(causal_iw_attention(x, layout, p).data,
                        window_msa(x, p, mask).data, atol=1e-12)

    def test_conv_matches_loop(self, rng):
        x, weight = rng.normal(size=(1, 7, 2)), rng.normal(size=(3, 2))
        expected = np.zeros((7, 2))
        for t in range(7):
            for k in range(3):
                src = t - 2 + k
                if src >= 0:
                    expected[t] += weight[k] * x[0, src]
        out = causal_depthwise_conv1d(Tensor(x), Tensor(weight)).data[0]
        assert_allclose(out, expected, atol=1e-12)

    def test_window_mode_needs_sqrt_layout(self, rng):
        p = init_attention(rng, 4, 2)
        with pytest.raises(LayoutError):
            causal_window_attention(Tensor(rng.normal(size=(1, 12, 4))), Layout1D(12, 3), p)

    def test_sequence_length_mismatch(self, rng):
        p = init_causal1d(rng, 4, 2)
        with pytest.raises(LayoutError):
            causal_iw_block(Tensor(rng.normal(size=(1, 8, 4))), Layout1D(16, 4), p)

    def test_unknown_local_mode(self, rng):
        with pytest.raises(ConfigError):
            init_causal1d(rng, 4, 2, local_mode="dilated")


class TestCausality:

    @pytest.mark.parametrize("n,m,k,mode", [(16, 4, 3, "conv"), (16, 4, 3, "window"),
                                            (12, 3, 2, "conv"), (8, 2, 1, "conv")])
    def test_jacobian_upper_triangle_is_zero(self, n, m, k, mode):
        result = causality_check(n, m, k, mode)
        assert result["passed"]
        assert result["upper_max_abs"] == 0.0
        assert result["lower_nonzero_entries"] > 0
        assert result["violations"] == []
        assert result["pairs_checked"] == n * (n - 1) // 2

    def test_suite(self):
        passed, detail = causality()
        assert passed, detail

    def test_operation_counts(self):
        counts = operation_counts(Layout1D(16, 4), kernel=3)
        assert counts["G"] == 4
        assert counts["interleaved_scores"] == 40
        assert counts["dense_causal_scores"] == 136
        assert counts["conv_taps"] == 45

    def test_operation_counts_window_mode(self):
        counts = operation_counts(Layout1D(16, 4), local_mode="window")
        assert counts["local_scores"] == counts["interleaved_scores"]
        assert "conv_taps" not in counts
