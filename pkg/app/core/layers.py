"""
Module chứa các layer: window attention, interleaved window attention,
depthwise convolution, downsample, patch embedding và MLP

Mọi feature map ở dạng channels-last [B, H, W, C].
"""

from functools import lru_cache
from typing import Optional

import numpy as np

from app.core.interleave import check_feature_map, permutation_pair, window_merge, window_partition
from app.errors import ConfigError, DimensionError, ShapeError
from app.models import (AttentionParams, ConvParams, DepthwiseConvParams, DownsampleMethod,
                        DownsampleWeights, InterleavePath, LayerNormParams, MlpParams, PATCH_SIZE,
                        WindowLayout)
from app.tensor import (Tensor, concat, conv2d, extract_patches, gelu, layernorm, linear, matmul,
                        rearrange)
from app.tensor import softmax_lastdim, take


# ---------------------------------------------------------------------------
# Attention
# ---------------------------------------------------------------------------

@lru_cache(maxsize=32)
def relative_position_index(window: int) -> np.ndarray:
    """
    Chỉ số vào bảng relative bias [(2M-1)^2, heads] cho mọi cặp token trong cửa sổ.

    Returns:
        mảng [M*M, M*M]; ô (p, q) = (dy + M - 1) * (2M - 1) + (dx + M - 1)
    """
    coords = np.stack(np.meshgrid(np.arange(window), np.arange(window), indexing="ij"))
    flat = coords.reshape(2, -1)
    rel = flat[:, :, None] - flat[:, None, :] + (window - 1)
    index = rel[0] * (2 * window - 1) + rel[1]
    index.setflags(write=False)
    return index


def window_msa(w: Tensor, p: AttentionParams, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Multi-head self-attention độc lập trên từng cửa sổ.

    Args:
        w: [nW, T, C]
        p: tham số attention
        mask: bool [T, T] (hoặc broadcast được tới [nW, h, T, T]); False = bị chặn
    """
    if w.shape[-1] != p.dim:
        raise DimensionError("window_msa", w.shape, p.q.weight.shape)
    tokens = w.shape[1]
    heads = p.num_heads

    def split(t: Tensor) -> Tensor:
        return rearrange(t, 'n t (h d) -> n h t d', h=heads)

    q = split(linear(w, p.q.weight, p.q.bias))
    k = split(linear(w, p.k.weight, p.k.bias))
    v = split(linear(w, p.v.weight, p.v.bias))

    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / np.sqrt(p.head_dim))
    if p.rel_bias is not None:
        window = p.rel_window
        if window * window != tokens:
            raise ConfigError(f"relative bias table built for window {window}, "
                              f"got windows of {tokens} tokens")
        index = relative_position_index(window)
        bias = take(p.rel_bias, index.reshape(-1), axis=0).reshape(tokens, tokens, heads)
        scores = scores + bias.transpose(2, 0, 1)

    attn = softmax_lastdim(scores, mask)
    out = rearrange(matmul(attn, v), 'n h t d -> n t (h d)')
    return linear(out, p.o.weight, p.o.bias)


def iw_msa(x: Tensor, layout: WindowLayout, p: AttentionParams,
           path: InterleavePath = InterleavePath.RTR) -> Tensor:
    """Rearrange -> attention trong cửa sổ -> restore"""
    forward, inverse = permutation_pair(path)
    windows = window_partition(forward(x, layout), layout)
    return inverse(window_merge(window_msa(windows, p), layout), layout)


def plain_window_msa(x: Tensor, layout: WindowLayout, p: AttentionParams) -> Tensor:
    """Window attention không hoán vị (W-MSA không shift)"""
    return window_merge(window_msa(window_partition(x, layout), p), layout)


def dense_attention(x: Tensor, p: AttentionParams) -> Tensor:
    """Attention toàn cục trên toàn bộ H*W token"""
    if x.ndim != 4:
        raise ShapeError(f"dense_attention expects [B, H, W, C], got {x.shape}")
    _, H, W, _ = x.shape
    tokens = rearrange(x, 'b h w c -> b (h w) c')
    bare = AttentionParams(p.num_heads, p.q, p.k, p.v, p.o)
    return rearrange(window_msa(tokens, bare), 'b (h w) c -> b h w c', h=H, w=W)


# ---------------------------------------------------------------------------
# Convolution
# ---------------------------------------------------------------------------

def depthwise_conv(x: Tensor, p: DepthwiseConvParams, stride: int = 1) -> Tensor:
    """Convolution theo từng kênh, zero padding K // 2, cộng bias; pointwise nếu có"""
    if x.ndim != 4 or x.shape[-1] != p.channels:
        raise DimensionError("depthwise_conv", x.shape, p.weight.shape)
    k = p.kernel_size
    pad = k // 2
    patches = extract_patches(x, (k, k), (stride, stride), ((pad, pad), (pad, pad)))
    out = (patches * p.weight).sum(axis=(3, 4)) + p.bias
    if p.pointwise is not None:
        out = linear(out, p.pointwise.weight, p.pointwise.bias)
    return out


def downsample(x: Tensor, w: DownsampleWeights) -> Tensor:
    """Giảm một nửa H, W và nhân đôi số kênh"""
    if x.ndim != 4 or x.shape[1] % 2 or x.shape[2] % 2:
        raise ShapeError(f"downsample needs even spatial extents, got {x.shape}")
    method = w.method
    if method is DownsampleMethod.CONV:
        out = conv2d(x, w.conv.weight, w.conv.bias, w.conv.stride, w.conv.padding)
        return apply_norm(out, w.norm)
    if method is DownsampleMethod.AVGPOOL:
        # chiếu C -> 2C ở độ phân giải vào rồi lấy trung bình 2x2
        projected = linear(x, w.proj.weight, w.proj.bias)
        return apply_norm(extract_patches(projected, (2, 2), (2, 2)).mean(axis=(3, 4)), w.norm)
    if method is DownsampleMethod.PATCH_MERGING:
        merged = concat([x[:, 0::2, 0::2], x[:, 1::2, 0::2], x[:, 0::2, 1::2], x[:, 1::2, 1::2]])
        return linear(apply_norm(merged, w.norm_in), w.proj.weight, w.proj.bias)
    if method is DownsampleMethod.DWCONV:
        # pointwise C -> 2C trước, depthwise 3x3 stride 2 trên 2C kênh sau
        projected = linear(x, w.proj.weight, w.proj.bias)
        return apply_norm(depthwise_conv(projected, w.depthwise, stride=2), w.norm)
    raise ConfigError(f"unknown downsample method {method}")


def patch_embed(image: Tensor, conv: ConvParams, norm: LayerNormParams,
                abs_pos: Optional[Tensor] = None) -> Tensor:
    """
    Chia ảnh thành patch 4x4 không chồng lấn và chiếu lên C kênh, rồi LayerNorm.

    Raises:
        ShapeError: H, W không chia hết cho 4
        ConfigError: bảng absolute position không khớp độ phân giải
    """
    if image.ndim != 4 or image.shape[1] % PATCH_SIZE or image.shape[2] % PATCH_SIZE:
        raise ShapeError(f"image {image.shape} must be [B, H, W, C] with H, W divisible by {PATCH_SIZE}")
    out = apply_norm(conv2d(image, conv.weight, conv.bias, conv.stride, conv.padding), norm)
    if abs_pos is not None:
        if abs_pos.shape[1:] != out.shape[1:]:
            raise ConfigError(f"absolute position table {abs_pos.shape[1:]} does not match "
                              f"patch grid {out.shape[1:]}")
        out = out + abs_pos
    return out


def mlp(x: Tensor, p: MlpParams) -> Tensor:
    return linear(gelu(linear(x, p.fc1.weight, p.fc1.bias)), p.fc2.weight, p.fc2.bias)


def apply_norm(x: Tensor, p: LayerNormParams) -> Tensor:
    return layernorm(x, p.gamma, p.beta)


def attention_layout(x: Tensor, window: int) -> WindowLayout:
    """Layout cửa sổ của một feature map; sai chia hết -> LayoutError"""
    layout = WindowLayout(x.shape[1], x.shape[2], window)
    check_feature_map(x, layout)
    return layout
