"""
Package algorithms - chứa bộ kiểm chứng reachability và mô hình chi phí
"""

from .reachability import (MAX_NODES, MAX_TIME_SECONDS, ReachabilityGraph, bfs_unreachable,
                           conv_radius, erf_depth_bound, find_path, theorem_condition,
                           verify_theorem1, witness)
from .cost import (ABLATION_COSTS, REFERENCE_COSTS, ablation_cost, block_cost, downsample_cost,
                   embed_cost, model_cost, module_flops, swin_module_flops)

__all__ = [
    # Reachability
    'ReachabilityGraph', 'find_path', 'bfs_unreachable', 'witness', 'verify_theorem1',
    'theorem_condition', 'erf_depth_bound', 'conv_radius', 'MAX_NODES', 'MAX_TIME_SECONDS',
    # Cost
    'REFERENCE_COSTS', 'ABLATION_COSTS', 'ablation_cost', 'module_flops', 'swin_module_flops',
    'block_cost', 'downsample_cost', 'embed_cost', 'model_cost',
]
