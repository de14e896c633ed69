"""
Module chứa Iwin block và ba cách nối nhánh S1/S2/S3

S1:  X' = LN(X);  X'' = X + IW-MSA(X') + DWConv(X');  X''' = X'' + MLP(LN(X''))
S2:  Y = X + IW-MSA(LN(X));  X'' = Y + DWConv(LN(Y));  MLP như S1
S3:  X'' = X + IW-MSA(LN(DWConv(LN(X))));  MLP như S1
"""

from typing import Callable, Optional

from app.core.layers import apply_norm, attention_layout, depthwise_conv, iw_msa, mlp, plain_window_msa
from app.errors import ConfigError
from app.models import (AttentionMode, BlockConfig, BlockWeights, PositionMode, Structure,
                        WindowLayout)
from app.tensor import Tensor

Branch = Callable[[Tensor], Tensor]


def _attention_branch(cfg: BlockConfig, w: BlockWeights,
                      layout: Optional[WindowLayout]) -> Optional[Branch]:
    if not cfg.has_attention:
        return None
    if w.attn is None:
        raise ConfigError("attention branch enabled but block has no attention weights")
    if cfg.position_mode is PositionMode.RELATIVE and w.attn.rel_bias is None:
        raise ConfigError("relative position mode requires a relative bias table")
    if cfg.attention_mode is AttentionMode.WINDOW:
        return lambda t: plain_window_msa(t, layout, w.attn)
    return lambda t: iw_msa(t, layout, w.attn, cfg.interleave_path)


def _conv_branch(cfg: BlockConfig, w: BlockWeights) -> Optional[Branch]:
    if not cfg.has_conv:
        return None
    if w.conv is None or w.conv.kernel_size != cfg.kernel:
        raise ConfigError(f"block expects a depthwise kernel of size {cfg.kernel}")
    return lambda t: depthwise_conv(t, w.conv)


def block_forward(x: Tensor, cfg: BlockConfig, w: BlockWeights) -> Tensor:
    """
    Một Iwin block, giữ nguyên shape [B, H, W, C].

    Raises:
        LayoutError: M không chia hết H hoặc W
        ConfigError: thiếu bảng relative bias hoặc trọng số không khớp cấu hình
    """
    layout = attention_layout(x, cfg.window) if cfg.has_attention else None
    attend = _attention_branch(cfg, w, layout)
    conv = _conv_branch(cfg, w)
    serial = attend and conv and cfg.structure is not Structure.S1
    if serial and w.norm_extra is None:
        raise ConfigError(f"structure {cfg.structure.value} needs the extra layernorm weights")

    if attend and conv and cfg.structure is Structure.S2:
        y = x + attend(apply_norm(x, w.norm1))
        y = y + conv(apply_norm(y, w.norm_extra))
    elif attend and conv and cfg.structure is Structure.S3:
        y = x + attend(apply_norm(conv(apply_norm(x, w.norm1)), w.norm_extra))
    else:
        xn = apply_norm(x, w.norm1)
        y = x
        if attend:
            y = y + attend(xn)
        if conv:
            y = y + conv(xn)

    return y + mlp(apply_norm(y, w.norm2), w.mlp)
