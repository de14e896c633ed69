"""
Test các layer: attention, depthwise conv, downsample, patch embed, MLP và tính cục bộ của gradient
"""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import special

from app.algorithms import module_flops, swin_module_flops
from app.core import (dense_attention, depthwise_conv, downsample, iw_msa, mlp, patch_embed,
                      plain_window_msa, relative_position_index, window_members, window_msa)
from app.errors import ConfigError, DimensionError, ShapeError
from app.harness.verify import coset_mask, oracle_equivalence
from app.models import (ConvParams, DepthwiseConvParams, DownsampleMethod, InterleavePath,
                        LayerNormParams, WindowLayout, init_attention, init_depthwise,
                        init_downsample, init_layernorm, init_mlp)
from app.tensor import GradTape, Tensor, backward


def feature(rng, H, W, C, B=1):
    return Tensor(rng.normal(size=(B, H, W, C)))


class TestAttention:

    def test_single_window_equals_dense(self, rng):
        p = init_attention(rng, 6, 2)
        x = feature(rng, 4, 4, 6)
        out = iw_msa(x, WindowLayout(4, 4, 4), p)
        assert_allclose(out.data, dense_attention(x, p).data, atol=1e-12)

    def test_masked_dense_oracle(self, rng):
        layout = WindowLayout(8, 8, 2)
        p = init_attention(rng, 8, 2)
        x = feature(rng, 8, 8, 8)
        oracle = window_msa(x.reshape(1, 64, 8), p, coset_mask(layout)).reshape(1, 8, 8, 8)
        assert_allclose(iw_msa(x, layout, p).data, oracle.data, atol=1e-10)

    def test_index_path_bit_exact(self, rng):
        layout = WindowLayout(6, 6, 3)
        p = init_attention(rng, 4, 2)
        x = feature(rng, 6, 6, 4)
        assert_array_equal(iw_msa(x, layout, p, InterleavePath.INDEX).data,
                           iw_msa(x, layout, p, InterleavePath.RTR).data)

    def test_interleaved_differs_from_plain_windows(self, rng):
        layout = WindowLayout(4, 4, 2)
        p = init_attention(rng, 4, 1)
        x = feature(rng, 4, 4, 4)
        assert not np.allclose(iw_msa(x, layout, p).data, plain_window_msa(x, layout, p).data)

    def test_relative_bias_window_mismatch(self, rng):
        p = init_attention(rng, 4, 2, rel_window=3)
        with pytest.raises(ConfigError):
            iw_msa(feature(rng, 4, 4, 4), WindowLayout(4, 4, 2), p)

    def test_relative_index_range(self):
        index = relative_position_index(3)
        assert index.shape == (9, 9)
        assert index.min() == 0 and index.max() == 24
        assert np.all(np.diag(index) == 12)

    def test_wrong_channels(self, rng):
        with pytest.raises(DimensionError):
            window_msa(Tensor(np.ones((1, 4, 6))), init_attention(rng, 4, 2))

    def test_oracle_suite(self):
        passed, detail = oracle_equivalence()
        assert passed, detail


class TestDepthwiseConv:

    def test_delta_kernel_is_identity(self, rng):
        weight = np.zeros((3, 3, 4))
        weight[1, 1] = 1.0
        p = DepthwiseConvParams(Tensor(weight), Tensor(np.zeros(4)))
        x = feature(rng, 5, 5, 4)
        assert_allclose(depthwise_conv(x, p).data, x.data)

    def test_ones_kernel_on_constant(self):
        p = DepthwiseConvParams(Tensor(np.ones((3, 3, 2))), Tensor(np.zeros(2)))
        out = depthwise_conv(Tensor(np.full((1, 5, 5, 2), 2.0)), p).data
        assert_allclose(out[0, 2, 2], [18.0, 18.0])
        assert_allclose(out[0, 0, 0], [8.0, 8.0])
        assert_allclose(out[0, 0, 2], [12.0, 12.0])

    def test_channels_do_not_mix(self, rng):
        p = init_depthwise(rng, 3, 3)
        x = np.zeros((1, 4, 4, 3))
        x[..., 1] = rng.normal(size=(4, 4))
        out = depthwise_conv(Tensor(x), p).data
        assert_array_equal(out[..., 0], 0.0)
        assert_array_equal(out[..., 2], 0.0)

    def test_even_kernel_rejected(self):
        with pytest.raises(ConfigError):
            DepthwiseConvParams(Tensor(np.ones((2, 2, 3))), Tensor(np.zeros(3)))

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            depthwise_conv(feature(rng, 4, 4, 5), init_depthwise(rng, 3, 3))


class TestDownsample:

    @pytest.mark.parametrize("method", list(DownsampleMethod))
    def test_halves_grid_doubles_channels(self, method, rng):
        out = downsample(feature(rng, 8, 8, 4), init_downsample(rng, method, 4))
        assert out.shape == (1, 4, 4, 8)

    def test_odd_extent(self, rng):
        with pytest.raises(ShapeError):
            downsample(feature(rng, 7, 8, 4), init_downsample(rng, DownsampleMethod.CONV, 4))


class TestPatchEmbed:

    def embed_params(self, rng, C=8):
        conv = ConvParams(Tensor(rng.normal(size=(4, 4, 3, C))), Tensor(np.zeros(C)), 4, 0)
        return conv, init_layernorm(C)

    def test_shape(self, rng):
        conv, norm = self.embed_params(rng)
        assert patch_embed(feature(rng, 16, 8, 3), conv, norm).shape == (1, 4, 2, 8)

    def test_indivisible_image(self, rng):
        conv, norm = self.embed_params(rng)
        with pytest.raises(ShapeError):
            patch_embed(feature(rng, 6, 8, 3), conv, norm)

    def test_absolute_table_mismatch(self, rng):
        conv, norm = self.embed_params(rng)
        table = Tensor(np.zeros((1, 4, 4, 8)))
        with pytest.raises(ConfigError):
            patch_embed(feature(rng, 32, 32, 3), conv, norm, table)


class TestModuleFlops:

    def test_stage_one_terms(self):
        terms = module_flops(56, 56, 96, 7, 3)
        assert terms.total == 147_818_496
        assert terms.swin_total == 145_108_992
        assert swin_module_flops(56, 56, 96, 7) == 145_108_992
        assert terms.overhead_ratio == pytest.approx(2_709_504 / 145_108_992)

    def test_no_conv_matches_swin(self):
        terms = module_flops(28, 28, 192, 7, 0)
        assert terms.total == terms.swin_total

    def test_invalid_arguments(self):
        with pytest.raises(ConfigError):
            module_flops(0, 56, 96, 7)


# ---------------------------------------------------------------------------
# Cài đặt tham chiếu bằng vòng lặp
# ---------------------------------------------------------------------------

def ref_linear(x, lp):
    out = x @ lp.weight.data
    return out if lp.bias is None else out + lp.bias.data


def ref_layernorm(x, p, eps=1e-5):
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * p.gamma.data + p.beta.data


def ref_attention(tokens, p, allowed):
    """tokens [T, C]; allowed(t, s) quyết định key s có được query t nhìn thấy"""
    T, C = tokens.shape
    d = C // p.num_heads
    q, k, v = (ref_linear(tokens, lp) for lp in (p.q, p.k, p.v))
    out = np.zeros((T, C))
    for h in range(p.num_heads):
        cols = slice(h * d, (h + 1) * d)
        for t in range(T):
            keys = [s for s in range(T) if allowed(t, s)]
            scores = np.array([q[t, cols] @ k[s, cols] / np.sqrt(d) for s in keys])
            weights = np.exp(scores - scores.max())
            weights /= weights.sum()
            for wgt, s in zip(weights, keys):
                out[t, cols] += wgt * v[s, cols]
    return ref_linear(out, p.o)


def ref_conv(x, weight, bias, stride, pad):
    """x [H, W, Cin], weight [K, K, Cin, Cout]"""
    K = weight.shape[0]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    H_out = (xp.shape[0] - K) // stride + 1
    W_out = (xp.shape[1] - K) // stride + 1
    out = np.zeros((H_out, W_out, weight.shape[3]))
    for i in range(H_out):
        for j in range(W_out):
            for a in range(K):
                for b in range(K):
                    out[i, j] += xp[stride * i + a, stride * j + b] @ weight[a, b]
    return out if bias is None else out + bias


def ref_depthwise(x, weight, bias, stride=1):
    """x [H, W, C], weight [K, K, C]"""
    K, C = weight.shape[0], weight.shape[2]
    pad = K // 2
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    H_out = (xp.shape[0] - K) // stride + 1
    W_out = (xp.shape[1] - K) // stride + 1
    out = np.zeros((H_out, W_out, C))
    for i in range(H_out):
        for j in range(W_out):
            for c in range(C):
                for a in range(K):
                    for b in range(K):
                        out[i, j, c] += weight[a, b, c] * xp[stride * i + a, stride * j + b, c]
    return out + bias


def random_norm(rng, C):
    return LayerNormParams(Tensor(rng.normal(size=C)), Tensor(rng.normal(size=C)))


class TestLoopReference:

    def test_window_msa_per_head(self, rng):
        p = init_attention(rng, 8, 2)
        w = rng.normal(size=(3, 4, 8))
        out = window_msa(Tensor(w), p).data
        for n in range(3):
            assert_allclose(out[n], ref_attention(w[n], p, lambda t, s: True), atol=1e-10)

    @pytest.mark.parametrize("H,W,M", [(8, 8, 2), (4, 6, 2), (6, 6, 3)])
    def test_iw_msa_coset_membership(self, H, W, M, rng):
        layout = WindowLayout(H, W, M)
        p = init_attention(rng, 4, 2)
        x = rng.normal(size=(1, H, W, 4))
        Hg, Wg = H // M, W // M
        pos = [(i, j) for i in range(H) for j in range(W)]

        def allowed(t, s):
            return pos[t][0] % Hg == pos[s][0] % Hg and pos[t][1] % Wg == pos[s][1] % Wg

        expected = ref_attention(x[0].reshape(H * W, 4), p, allowed).reshape(H, W, 4)
        assert_allclose(iw_msa(Tensor(x), layout, p).data[0], expected, atol=1e-10)

    @pytest.mark.parametrize("stride", [1, 2])
    def test_depthwise_conv(self, stride, rng):
        p = DepthwiseConvParams(Tensor(rng.normal(size=(3, 3, 3))), Tensor(rng.normal(size=3)))
        x = rng.normal(size=(1, 6, 5, 3))
        expected = ref_depthwise(x[0], p.weight.data, p.bias.data, stride)
        assert_allclose(depthwise_conv(Tensor(x), p, stride).data[0], expected, atol=1e-12)

    def test_downsample_conv(self, rng):
        w = init_downsample(rng, DownsampleMethod.CONV, 3)
        x = rng.normal(size=(1, 6, 4, 3))
        conv = ref_conv(x[0], w.conv.weight.data, w.conv.bias.data, w.conv.stride, w.conv.padding)
        assert_allclose(downsample(Tensor(x), w).data[0], ref_layernorm(conv, w.norm),
                        atol=1e-10)

    def test_downsample_avgpool(self, rng):
        w = init_downsample(rng, DownsampleMethod.AVGPOOL, 3)
        x = rng.normal(size=(1, 4, 6, 3))
        projected = ref_linear(x[0], w.proj)
        pooled = np.zeros((2, 3, 6))
        for i in range(2):
            for j in range(3):
                pooled[i, j] = projected[2 * i:2 * i + 2, 2 * j:2 * j + 2].mean(axis=(0, 1))
        assert_allclose(downsample(Tensor(x), w).data[0], ref_layernorm(pooled, w.norm),
                        atol=1e-10)

    def test_downsample_patch_merging(self, rng):
        w = init_downsample(rng, DownsampleMethod.PATCH_MERGING, 2)
        x = rng.normal(size=(1, 4, 4, 2))
        merged = np.zeros((2, 2, 8))
        for i in range(2):
            for j in range(2):
                parts = [x[0, 2 * i + di, 2 * j + dj] for di, dj in ((0, 0), (1, 0), (0, 1), (1, 1))]
                merged[i, j] = np.concatenate(parts)
        expected = ref_linear(ref_layernorm(merged, w.norm_in), w.proj)
        assert_allclose(downsample(Tensor(x), w).data[0], expected, atol=1e-10)

    def test_downsample_dwconv(self, rng):
        w = init_downsample(rng, DownsampleMethod.DWCONV, 2)
        x = rng.normal(size=(1, 4, 6, 2))
        projected = ref_linear(x[0], w.proj)
        conv = ref_depthwise(projected, w.depthwise.weight.data, w.depthwise.bias.data, stride=2)
        assert conv.shape == (2, 3, 4)
        assert_allclose(downsample(Tensor(x), w).data[0], ref_layernorm(conv, w.norm),
                        atol=1e-10)

    def test_patch_embed(self, rng):
        conv = ConvParams(Tensor(rng.normal(size=(4, 4, 3, 5))), Tensor(rng.normal(size=5)), 4, 0)
        norm = random_norm(rng, 5)
        image = rng.normal(size=(1, 8, 12, 3))
        patches = np.zeros((2, 3, 5))
        for i in range(2):
            for j in range(3):
                block = image[0, 4 * i:4 * i + 4, 4 * j:4 * j + 4]
                patches[i, j] = np.einsum("abc,abco->o", block, conv.weight.data) + conv.bias.data
        assert_allclose(patch_embed(Tensor(image), conv, norm).data[0],
                        ref_layernorm(patches, norm), atol=1e-10)

    def test_mlp(self, rng):
        p = init_mlp(rng, 4, 8)
        x = rng.normal(size=(3, 4))
        hidden = ref_linear(x, p.fc1)
        hidden = hidden * 0.5 * (1.0 + special.erf(hidden / np.sqrt(2.0)))
        assert_allclose(mlp(Tensor(x), p).data, ref_linear(hidden, p.fc2), atol=1e-12)


class TestLocality:

    def input_gradient(self, fn, x, pos, rng):
        """Gradient theo x của <fn(x)[0, i, j], r> với r ngẫu nhiên"""
        xt = Tensor(x)
        with GradTape() as tape:
            tape.watch(xt)
            out = fn(xt)
            loss = (out[0, pos[0], pos[1]] * Tensor(rng.normal(size=out.shape[-1]))).sum()
        return np.abs(backward(tape, loss)[xt].data[0]).max(axis=-1)

    @pytest.mark.parametrize("pos", [(0, 0), (3, 5), (5, 2)])
    def test_iw_msa_gradient_confined_to_coset(self, pos, rng):
        layout = WindowLayout(6, 6, 2)
        p = init_attention(rng, 4, 2)
        grad = self.input_gradient(lambda t: iw_msa(t, layout, p), rng.normal(size=(1, 6, 6, 4)),
                                   pos, rng)
        members = set(window_members(pos, layout))
        for i in range(6):
            for j in range(6):
                if (i, j) in members:
                    assert grad[i, j] > 0.0, (i, j)
                else:
                    assert grad[i, j] == 0.0, (i, j)

    @pytest.mark.parametrize("K", [3, 5])
    def test_depthwise_gradient_confined_to_kernel(self, K, rng):
        p = DepthwiseConvParams(Tensor(rng.normal(size=(K, K, 2))), Tensor(np.zeros(2)))
        pos = (3, 4)
        grad = self.input_gradient(lambda t: depthwise_conv(t, p), rng.normal(size=(1, 7, 8, 2)),
                                   pos, rng)
        r = K // 2
        for i in range(7):
            for j in range(8):
                if abs(i - pos[0]) > r or abs(j - pos[1]) > r:
                    assert grad[i, j] == 0.0, (i, j)
