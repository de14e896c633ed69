"""
Module chứa backbone bốn stage: patch embed -> stage 1 -> downsample -> ... -> stage 4 -> head
"""

import logging
from typing import List, Sequence

from app.core.block import block_forward
from app.core.layers import apply_norm, downsample, patch_embed
from app.errors import LayoutError
from app.models import BackboneWeights, BlockWeights, ModelConfig, NUM_STAGES, PATCH_SIZE, WindowLayout
from app.tensor import Tensor, linear

logger = logging.getLogger(__name__)


def check_resolution(cfg: ModelConfig, height: int, width: int) -> None:
    """Kiểm tra chia hết ở từng stage; lỗi chỉ rõ stage vi phạm"""
    stride = PATCH_SIZE * 2 ** (NUM_STAGES - 1)
    if height % stride or width % stride:
        raise LayoutError(f"input {height}x{width} must be divisible by {stride}")
    for stage in range(NUM_STAGES):
        scale = PATCH_SIZE * 2 ** stage
        try:
            WindowLayout(height // scale, width // scale, cfg.window)
        except LayoutError as exc:
            raise LayoutError(str(exc), stage=stage + 1) from None


def stage_forward(x: Tensor, cfg: ModelConfig, stage: int, blocks: Sequence[BlockWeights]) -> Tensor:
    block_cfg = cfg.block_config(stage)
    for w in blocks:
        x = block_forward(x, block_cfg, w)
    return x


def backbone_features(image: Tensor, cfg: ModelConfig, weights: BackboneWeights) -> List[Tensor]:
    """Feature map đầu ra của từng stage"""
    check_resolution(cfg, image.shape[1], image.shape[2])
    x = patch_embed(image, weights.patch_embed, weights.patch_norm, weights.abs_pos)
    features = []
    for stage in range(NUM_STAGES):
        x = stage_forward(x, cfg, stage, weights.stages[stage])
        features.append(x)
        logger.debug("stage %d output %s", stage + 1, x.shape)
        if stage < NUM_STAGES - 1:
            x = downsample(x, weights.downsamples[stage])
    return features


def backbone_forward(image: Tensor, cfg: ModelConfig, weights: BackboneWeights) -> Tensor:
    """
    Logits [B, num_classes] của ảnh [B, H, W, 3].

    Raises:
        LayoutError: độ phân giải không chia hết ở một stage (có số stage)
    """
    last = backbone_features(image, cfg, weights)[-1]
    pooled = apply_norm(last.mean(axis=(1, 2)), weights.norm)
    return linear(pooled, weights.head.weight, weights.head.bias)
