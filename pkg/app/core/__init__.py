"""
Package core - chứa logic nghiệp vụ chính: hoán vị xen kẽ, layer, block, backbone, causal 1D
"""

from .interleave import (check_feature_map, dump_index_table, index_map, permutation_pair,
                         rearrange, rearrange_by_index, restore, restore_by_index, same_window,
                         window_members, window_merge, window_of, window_partition)
from .layers import (apply_norm, dense_attention, depthwise_conv, downsample, iw_msa, mlp,
                     patch_embed, plain_window_msa, relative_position_index, window_msa)
from .block import block_forward
from .backbone import backbone_features, backbone_forward, check_resolution, stage_forward
from .causal1d import (Causal1DParams, causal_depthwise_conv1d, causal_iw_attention,
                       causal_iw_block, causal_mask, causal_window_attention, init_causal1d,
                       operation_counts)

__all__ = [
    # Interleave
    'rearrange', 'restore', 'rearrange_by_index', 'restore_by_index', 'index_map',
    'permutation_pair', 'window_partition', 'window_merge', 'window_of', 'same_window',
    'window_members', 'dump_index_table', 'check_feature_map',
    # Layers
    'window_msa', 'iw_msa', 'plain_window_msa', 'dense_attention', 'relative_position_index',
    'depthwise_conv', 'downsample', 'patch_embed', 'mlp', 'apply_norm',
    # Block / backbone
    'block_forward', 'stage_forward', 'backbone_features', 'backbone_forward', 'check_resolution',
    # Causal 1D
    'Causal1DParams', 'init_causal1d', 'causal_iw_attention', 'causal_window_attention',
    'causal_depthwise_conv1d', 'causal_iw_block', 'causal_mask', 'operation_counts',
]
