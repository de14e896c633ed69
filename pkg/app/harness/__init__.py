"""
Package harness - CLI, dữ liệu tổng hợp, trainer, benchmark và verify-all
"""

from .config import SCHEMA_PATH
from .gradcheck import analytic_gradients, gradcheck, gradcheck_passed, numeric_gradient
from .synthetic import class_tints, make_dataset, upscale
from .trainer import accuracy, evaluate, train_toy
from .transfer import absolute_position_contrast, resolution_transfer_check
from .bench import bench, time_median
from .verify import (causality_check, coset_law, gradient_checks, interleave_bijectivity,
                     oracle_equivalence, reference_costs, suites, theorem_sweep, verify_all)

__all__ = [
    'SCHEMA_PATH',
    # Gradient
    'gradcheck', 'gradcheck_passed', 'analytic_gradients', 'numeric_gradient',
    # Dữ liệu và huấn luyện
    'make_dataset', 'upscale', 'class_tints', 'train_toy', 'evaluate', 'accuracy',
    'resolution_transfer_check', 'absolute_position_contrast',
    # Benchmark
    'bench', 'time_median',
    # verify-all
    'verify_all', 'suites', 'interleave_bijectivity', 'coset_law', 'theorem_sweep',
    'oracle_equivalence', 'gradient_checks', 'causality_check', 'reference_costs',
]
