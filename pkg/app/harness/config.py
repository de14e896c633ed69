"""
Cấu hình mặc định của harness (trainer, bench, verify-all)
"""

from pathlib import Path

# Trainer
DEFAULT_STEPS = 300
DEFAULT_LR = 0.05
DEFAULT_TOY_RESOLUTION = 64
DEFAULT_TRANSFER_RESOLUTION = 128
LOG_EVERY = 25
LOSS_REDUCTION = 10.0
TARGET_ACCURACY = 0.9
TRANSFER_CHANCE_FACTOR = 2.0

# Gradient check
FD_STEP = 1e-5
FD_RTOL = 1e-4
FD_FLOOR = 1e-3  # chuẩn gradient nhỏ hơn mức này được so theo sai số tuyệt đối

# Bench
DEFAULT_REPEATS = 5
BENCH_OPS = ("interleave", "attention", "dwconv")
BENCH_DEFAULTS = {
    "interleave": {"size": 224, "channels": 96, "window": 7},
    "attention": {"size": 56, "channels": 96, "window": 7, "heads": 3},
    "dwconv": {"size": 56, "channels": 96, "kernel": 3},
}

# verify-all
DEFAULT_WORKERS = 4
PERMUTATION_SWEEP = 16
COSET_SIDES = (2, 4, 6, 8)
THEOREM_SWEEP = 16
MAX_KERNEL = 16
PARAM_TOLERANCE = 0.03
FLOPS_TOLERANCE = 0.05
ABLATION_PARAM_TOLERANCE = 0.01
ABLATION_FLOPS_TOLERANCE = 0.02
ORACLE_TOLERANCE = 1e-10

# Cặp (variant, resolution) phải khớp bảng tham chiếu
PARAM_TARGETS = (("T", 224), ("S", 224), ("B", 224), ("L", 224))
FLOPS_TARGETS = (("T", 224), ("S", 224), ("S", 384), ("B", 224), ("B", 384), ("B", 512),
                 ("B", 1024), ("L", 224), ("L", 384))

SCHEMA_PATH = Path(__file__).parent / "schema" / "run_report.schema.json"
