"""
Module chứa bản 1D nhân quả của Iwin: attention nhân quả trong cửa sổ xen kẽ
cộng với depthwise convolution nhân quả

Token t thuộc cửa sổ xen kẽ t mod G. Trong mỗi cửa sổ các token giữ thứ tự
thời gian gốc, nên mask tam giác theo chỉ số trong nhóm chính là mask theo
thời gian gốc.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Optional

import numpy as np

from app.core.layers import window_msa
from app.errors import ConfigError, DimensionError, LayoutError
from app.models import AttentionParams, Layout1D, init_attention
from app.tensor import Tensor, extract_patches

logger = logging.getLogger(__name__)

LOCAL_MODES = ("conv", "window")


@dataclass(frozen=True)
class Causal1DParams:
    attn: AttentionParams
    conv_weight: Optional[Tensor] = None      # [K, C]
    conv_bias: Optional[Tensor] = None        # [C]
    local_attn: Optional[AttentionParams] = None

    @property
    def local_mode(self) -> str:
        return "window" if self.local_attn is not None else "conv"


def init_causal1d(rng: np.random.Generator, dim: int, num_heads: int, kernel: int = 3,
                  local_mode: str = "conv") -> Causal1DParams:
    if local_mode not in LOCAL_MODES:
        raise ConfigError(f"local_mode must be one of {LOCAL_MODES}, got {local_mode!r}")
    attn = init_attention(rng, dim, num_heads)
    if local_mode == "window":
        return Causal1DParams(attn, local_attn=init_attention(rng, dim, num_heads))
    weight = Tensor(rng.normal(0.0, 0.02, size=(kernel, dim)))
    return Causal1DParams(attn, weight, Tensor(np.zeros(dim)))


def _check_sequence(x: Tensor, layout: Layout1D) -> None:
    if x.ndim != 3 or x.shape[1] != layout.N:
        raise LayoutError(f"sequence {x.shape} does not match layout N={layout.N}")


def causal_mask(size: int) -> np.ndarray:
    return np.tril(np.ones((size, size), dtype=bool))


def _plain(p: AttentionParams) -> AttentionParams:
    if p.rel_bias is not None:
        raise ConfigError("1D causal attention does not take a relative bias table")
    return p


def causal_iw_attention(x: Tensor, layout: Layout1D, p: AttentionParams) -> Tensor:
    """Attention nhân quả trong từng nhóm {t : t mod G = g}; [B, N, C] -> [B, N, C]"""
    _check_sequence(x, layout)
    B, N, C = x.shape
    groups = x.reshape(B, layout.M, layout.G, C).swapaxes(1, 2).reshape(B * layout.G, layout.M, C)
    out = window_msa(groups, _plain(p), causal_mask(layout.M))
    return out.reshape(B, layout.G, layout.M, C).swapaxes(1, 2).reshape(B, N, C)


def causal_window_attention(x: Tensor, layout: Layout1D, p: AttentionParams) -> Tensor:
    """Attention nhân quả trong cửa sổ liền kề kích thước M; yêu cầu M = sqrt(N)"""
    _check_sequence(x, layout)
    if not layout.is_sqrt_layout:
        raise LayoutError(f"window local mode needs M = sqrt(N), got N={layout.N} M={layout.M}")
    B, N, C = x.shape
    windows = x.reshape(B * layout.G, layout.M, C)
    out = window_msa(windows, _plain(p), causal_mask(layout.M))
    return out.reshape(B, N, C)


def causal_depthwise_conv1d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Convolution theo kênh, chỉ đệm bên trái K - 1: out[t] phụ thuộc x[t-K+1 .. t].

    weight[k] nhân với x[t - K + 1 + k].
    """
    if x.ndim != 3 or weight.ndim != 2 or weight.shape[1] != x.shape[-1]:
        raise DimensionError("causal_depthwise_conv1d", x.shape, weight.shape)
    B, N, C = x.shape
    K = weight.shape[0]
    patches = extract_patches(x.reshape(B, N, 1, C), (K, 1), padding=((K - 1, 0), (0, 0)))
    out = (patches.reshape(B, N, K, C) * weight).sum(axis=2)
    return out + bias if bias is not None else out


def causal_iw_block(x: Tensor, layout: Layout1D, p: Causal1DParams) -> Tensor:
    """Tổng nhánh attention xen kẽ và nhánh cục bộ (conv hoặc cửa sổ liền kề)"""
    out = causal_iw_attention(x, layout, p.attn)
    if p.local_attn is not None:
        return out + causal_window_attention(x, layout, p.local_attn)
    if p.conv_weight is None:
        raise ConfigError("conv local mode needs a causal conv kernel")
    return out + causal_depthwise_conv1d(x, p.conv_weight, p.conv_bias)


def operation_counts(layout: Layout1D, kernel: int = 3, local_mode: str = "conv") -> Dict[str, int]:
    """
    Số ô score không bị mask và số tap conv hợp lệ.

    Chỉ đếm; không kết luận về bậc độ phức tạp.
    """
    if local_mode not in LOCAL_MODES:
        raise ConfigError(f"local_mode must be one of {LOCAL_MODES}, got {local_mode!r}")
    per_window = layout.M * (layout.M + 1) // 2
    counts = {
        "N": layout.N,
        "M": layout.M,
        "G": layout.G,
        "interleaved_scores": layout.G * per_window,
        "dense_causal_scores": layout.N * (layout.N + 1) // 2,
    }
    if local_mode == "window":
        counts["local_scores"] = layout.G * per_window
    else:
        counts["conv_taps"] = int(sum(min(t + 1, kernel) for t in range(layout.N)))
    logger.debug("operation counts %s", counts)
    return counts
