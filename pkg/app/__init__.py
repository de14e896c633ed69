"""
Iwin - hoán vị xen kẽ, attention cửa sổ xen kẽ kết hợp depthwise convolution,
backbone bốn stage và các bộ kiểm chứng đi kèm

Package chính export các class cần thiết.
"""

from app.errors import IwinError
from app.models import ModelConfig, WindowLayout, build_variant, init_backbone
from app.core import backbone_forward, block_forward, iw_msa, rearrange, restore
from app.algorithms import model_cost, verify_theorem1

__all__ = [
    'IwinError',
    # Models
    'WindowLayout', 'ModelConfig', 'build_variant', 'init_backbone',
    # Core
    'rearrange', 'restore', 'iw_msa', 'block_forward', 'backbone_forward',
    # Algorithms
    'verify_theorem1', 'model_cost',
]
