"""
Module chứa mô hình chi phí: FLOPs (1 MAC = 1 FLOP) và số tham số

Unified module (attention + depthwise conv) trên lưới H x W với C kênh:
    O_Iwin = 4HWC^2 + (2M^2 + k^2) HWC
    O_Swin = 4HWC^2 + 2M^2 HWC
Softmax, norm, activation và cộng bias không được tính FLOPs.
"""

import logging
from typing import Any, Dict, Optional, Tuple

from app.errors import ConfigError
from app.models import (AttentionMode, CostReport, DownsampleMethod, ModelConfig, ModuleFlops,
                        NUM_STAGES, PATCH_SIZE, PositionMode, StageCost, Structure,
                        VARIANTS, build_variant)

logger = logging.getLogger(__name__)

DOWNSAMPLE_KERNEL = 3

# (variant, resolution) -> (params M, FLOPs G)
REFERENCE_COSTS: Dict[Tuple[str, int], Tuple[float, float]] = {
    ("T", 224): (30.2, 4.7),
    ("S", 224): (51.6, 9.0),
    ("S", 384): (51.6, 27.7),
    ("S", 512): (51.6, 52.0),
    ("S", 1024): (51.6, 207.9),
    ("B", 224): (91.2, 15.9),
    ("B", 384): (91.2, 48.3),
    ("B", 512): (91.3, 89.5),
    ("B", 1024): (91.3, 358.2),
    ("L", 224): (204.3, 35.4),
    ("L", 384): (204.3, 106.6),
}

# Ablation của Iwin-T @ 224: tên -> (ghi đè ModelConfig, params M, FLOPs G)
ABLATION_COSTS: Dict[str, Tuple[Dict[str, Any], float, float]] = {
    "baseline": ({}, 30.23, 4.72),
    "conv_only": ({"attention_mode": AttentionMode.NONE}, 21.60, 3.20),
    "attention_only": ({"kernels": (None, None, None, None)}, 30.20, 4.71),
    "plain_window": ({"attention_mode": AttentionMode.WINDOW}, 30.23, 4.72),
    "downsample_dwconv": ({"downsample": DownsampleMethod.DWCONV}, 27.14, 4.57),
    "downsample_avgpool": ({"downsample": DownsampleMethod.AVGPOOL}, 27.13, 4.51),
    "downsample_patch_merging": ({"downsample": DownsampleMethod.PATCH_MERGING}, 28.29, 4.51),
    "kernels_7_5_3": ({"kernels": (7, 5, 3, None)}, 30.24, 4.75),
    "kernels_7_7_7": ({"kernels": (7, 7, 7, None)}, 30.34, 4.78),
    "kernels_5_5_5": ({"kernels": (5, 5, 5, None)}, 30.27, 4.75),
    "depths_4_3_2_2": ({"depths": (4, 3, 2, 2)}, 23.79, 4.43),
    "depths_3_3_3_3": ({"depths": (3, 3, 3, 3)}, 32.56, 4.80),
    "absolute_position": ({"position_mode": PositionMode.ABSOLUTE}, 30.53, 4.72),
    "relative_position": ({"position_mode": PositionMode.RELATIVE}, 30.25, 4.72),
}


def module_flops(H: int, W: int, C: int, M: int, k: int = 0) -> ModuleFlops:
    """Các số hạng chi phí của attention + conv; k = 0 nghĩa là không có nhánh conv"""
    if min(H, W, C, M) < 1 or k < 0:
        raise ConfigError(f"invalid cost arguments H={H} W={W} C={C} M={M} k={k}")
    hw = H * W
    return ModuleFlops(
        qkv=3 * hw * C * C,
        attn_core=2 * M * M * hw * C,
        out_proj=hw * C * C,
        conv=k * k * hw * C,
        swin_total=swin_module_flops(H, W, C, M),
    )


def swin_module_flops(H: int, W: int, C: int, M: int) -> int:
    hw = H * W
    return 4 * hw * C * C + 2 * M * M * hw * C


# ---------------------------------------------------------------------------
# Từng thành phần
# ---------------------------------------------------------------------------

def block_cost(cfg: ModelConfig, stage: int, side: int) -> Tuple[int, int, ModuleFlops]:
    """(flops, params, module terms) của một block ở stage cho trước"""
    block = cfg.block_config(stage)
    C, M, h = block.dim, block.window, block.num_heads
    k = block.kernel or 0
    hw = side * side
    terms = module_flops(side, side, C, M, k)
    hidden = block.hidden_dim

    flops = hw * C * hidden * 2
    params = C * hidden + hidden + hidden * C + C + 4 * C  # MLP + hai LayerNorm
    if block.has_attention:
        flops += terms.qkv + terms.attn_core + terms.out_proj
        params += 4 * (C * C + C)
        if block.position_mode is PositionMode.RELATIVE:
            params += (2 * M - 1) ** 2 * h
    if block.has_conv:
        flops += terms.conv
        params += k * k * C + C
        if block.pointwise:
            flops += hw * C * C
            params += C * C + C
    if block.has_conv and block.has_attention and block.structure is not Structure.S1:
        params += 2 * C
    if not block.has_attention:
        terms = ModuleFlops(0, 0, 0, terms.conv, terms.swin_total)
    return flops, params, terms


def downsample_cost(method: DownsampleMethod, side_out: int, C: int) -> Tuple[int, int]:
    """(flops, params) của downsample C -> 2C, đầu ra side_out x side_out"""
    hw = side_out * side_out
    hw_in = 4 * hw
    out = 2 * C
    kk = DOWNSAMPLE_KERNEL * DOWNSAMPLE_KERNEL
    if method is DownsampleMethod.CONV:
        return hw * kk * C * out, kk * C * out + out + 2 * out
    if method is DownsampleMethod.AVGPOOL:
        return hw_in * C * out, C * out + out + 2 * out
    if method is DownsampleMethod.PATCH_MERGING:
        return hw * 4 * C * out, 2 * 4 * C + 4 * C * out
    if method is DownsampleMethod.DWCONV:
        return hw_in * C * out + hw * kk * out, C * out + out + kk * out + out + 2 * out
    raise ConfigError(f"unknown downsample method {method}")


def embed_cost(cfg: ModelConfig, resolution: int) -> Tuple[int, int]:
    side = resolution // PATCH_SIZE
    fan_in = PATCH_SIZE * PATCH_SIZE * cfg.in_chans
    flops = side * side * fan_in * cfg.patch_dim
    params = fan_in * cfg.patch_dim + cfg.patch_dim + 2 * cfg.patch_dim
    if cfg.position_mode is PositionMode.ABSOLUTE:
        params += side * side * cfg.patch_dim
    return flops, params


# ---------------------------------------------------------------------------
# Toàn mô hình
# ---------------------------------------------------------------------------

def model_cost(cfg: ModelConfig, resolution: Optional[int] = None) -> CostReport:
    """
    FLOPs và số tham số của toàn backbone.

    Args:
        cfg: cấu hình mô hình
        resolution: độ phân giải; khác cfg.resolution thì cửa sổ đổi theo quy tắc độ phân giải
    """
    if resolution is not None and resolution != cfg.resolution:
        cfg = cfg.with_resolution(resolution)
    res = cfg.resolution
    cfg.stage_layouts(res)

    embed_flops, total_params = embed_cost(cfg, res)
    total_flops = embed_flops
    down_flops = 0
    stages = []
    for stage in range(NUM_STAGES):
        side = cfg.stage_resolution(stage)
        C = cfg.dims[stage]
        b_flops, b_params, terms = block_cost(cfg, stage, side)
        s_flops = b_flops * cfg.depths[stage]
        s_params = b_params * cfg.depths[stage]
        if stage < NUM_STAGES - 1:
            d_flops, d_params = downsample_cost(cfg.downsample, side // 2, C)
            down_flops += d_flops
            s_flops += d_flops
            s_params += d_params
        stages.append(StageCost(stage + 1, side, C, cfg.depths[stage], s_flops, s_params, terms))
        total_flops += s_flops
        total_params += s_params

    last = cfg.dims[-1]
    head_flops = last * cfg.num_classes
    total_flops += head_flops
    total_params += 2 * last + last * cfg.num_classes + cfg.num_classes

    reference = REFERENCE_COSTS.get((cfg.name, res)) if _is_reference_config(cfg) else None
    report = CostReport(
        variant=cfg.name, resolution=res, window=cfg.window, flops=total_flops,
        params=total_params, stages=stages, embed_flops=embed_flops,
        downsample_flops=down_flops, head_flops=head_flops,
        reference_params_m=reference[0] if reference else None,
        reference_flops_g=reference[1] if reference else None,
    )
    logger.info("%s@%d: %.2f GFLOPs, %.2f M params", cfg.name, res, report.gflops, report.mparams)
    return report


def _is_reference_config(cfg: ModelConfig) -> bool:
    """Chỉ so với bảng tham chiếu khi cấu hình đúng mặc định (không ablation)"""
    if cfg.name not in VARIANTS:
        return False
    patch_dim, depths, heads = VARIANTS[cfg.name]
    default = ModelConfig(name=cfg.name, resolution=cfg.resolution, patch_dim=patch_dim,
                          depths=depths, heads=heads, window=cfg.window)
    return cfg == default


def ablation_cost(name: str) -> Tuple[CostReport, float, float]:
    """
    Chi phí của một dòng ablation Iwin-T @ 224.

    Returns:
        (CostReport, params tham chiếu M, FLOPs tham chiếu G)

    Raises:
        ConfigError: tên ablation không có trong ABLATION_COSTS
    """
    if name not in ABLATION_COSTS:
        raise ConfigError(f"unknown ablation '{name}', expected one of {sorted(ABLATION_COSTS)}")
    overrides, params_m, flops_g = ABLATION_COSTS[name]
    return model_cost(build_variant("T", 224, **overrides)), params_m, flops_g
