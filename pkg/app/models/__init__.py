"""
Package models - chứa các class dữ liệu
"""

from .layout import IndexMap, Layout1D, Position, WindowLayout
from .config import (AttentionMode, BlockConfig, DownsampleMethod, InterleavePath, ModelConfig,
                     PositionMode, Structure, DEFAULT_KERNEL, DEFAULT_MLP_RATIO, NUM_STAGES,
                     STANDARD_VARIANTS, PATCH_SIZE, VARIANTS, WINDOW_BY_RESOLUTION, build_variant,
                     window_for_resolution)
from .params import (AttentionParams, BackboneWeights, BlockWeights, ConvParams,
                     DepthwiseConvParams, DownsampleWeights, LayerNormParams, LinearParams,
                     MlpParams, count_parameters, init_attention, init_backbone, init_block,
                     init_depthwise, init_downsample, init_layernorm, init_linear, init_mlp,
                     load_parameters, map_parameters, named_parameters, parameter_dict)
from .state import EdgeKind, HopState, PathResult
from .reports import (ConvRadiusMode, CostReport, ModuleFlops, ReachabilityReport,
                      ReachabilityWitness, RunReport, StageCost, SyntheticTask)
from .progress import CheckProgress

__all__ = [
    # Hình học
    'Position', 'WindowLayout', 'IndexMap', 'Layout1D',
    # Cấu hình
    'Structure', 'PositionMode', 'AttentionMode', 'DownsampleMethod', 'InterleavePath',
    'BlockConfig', 'ModelConfig', 'build_variant', 'window_for_resolution',
    'DEFAULT_KERNEL', 'DEFAULT_MLP_RATIO', 'NUM_STAGES', 'PATCH_SIZE', 'STANDARD_VARIANTS',
    'VARIANTS', 'WINDOW_BY_RESOLUTION',
    # Tham số
    'LayerNormParams', 'LinearParams', 'AttentionParams', 'DepthwiseConvParams', 'ConvParams',
    'MlpParams', 'BlockWeights', 'DownsampleWeights', 'BackboneWeights',
    'init_layernorm', 'init_linear', 'init_attention', 'init_depthwise', 'init_mlp',
    'init_block', 'init_downsample', 'init_backbone',
    'named_parameters', 'map_parameters', 'load_parameters', 'parameter_dict', 'count_parameters',
    # Tìm đường
    'EdgeKind', 'HopState', 'PathResult',
    # Báo cáo
    'ConvRadiusMode', 'ReachabilityWitness', 'ReachabilityReport', 'ModuleFlops', 'StageCost',
    'CostReport', 'SyntheticTask', 'RunReport',
    'CheckProgress',
]
