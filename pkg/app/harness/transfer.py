"""
Chạy mô hình đã huấn luyện ở độ phân giải khác mà không đổi trọng số
"""

import logging
import time
from dataclasses import replace

import numpy as np

from app.core import backbone_forward
from app.errors import ConfigError, IwinError
from app.harness.config import TRANSFER_CHANCE_FACTOR
from app.harness.synthetic import make_dataset, upscale
from app.harness.trainer import accuracy, train_toy
from app.models import (BackboneWeights, ModelConfig, PositionMode, RunReport, SyntheticTask,
                        parameter_dict)
from app.tensor import Tensor

logger = logging.getLogger(__name__)


def _snapshot(weights: BackboneWeights):
    return {name: (t.shape, t.numpy()) for name, t in parameter_dict(weights).items()}


def resolution_transfer_check(cfg: ModelConfig, weights: BackboneWeights, task: SyntheticTask,
                              target_resolution: int, expect_failure: bool = False) -> RunReport:
    """
    Đánh giá trọng số huấn luyện ở cfg.resolution tại target_resolution.

    Cửa sổ đổi theo quy tắc độ phân giải; ảnh của task được phóng to nearest.
    Lỗi layout (kèm stage) và lỗi bảng vị trí được ghi vào report.
    expect_failure=True hạ mức log của lỗi xuống INFO (lỗi là kết quả mong đợi).
    """
    start = time.perf_counter()
    report = RunReport("transfer-check", config={
        "model": cfg.to_dict(), "target_resolution": target_resolution,
    })
    before = _snapshot(weights)
    chance = 1.0 / task.num_classes
    try:
        if target_resolution % cfg.resolution:
            raise ConfigError(f"target resolution {target_resolution} must be a multiple "
                              f"of {cfg.resolution}")
        target = cfg.with_resolution(target_resolution)
        images, labels = make_dataset(task)
        images = upscale(images, target_resolution // cfg.resolution)
        logits = backbone_forward(Tensor(images), target, weights)
        acc = accuracy(logits, labels)
    except IwinError as exc:
        logger.log(logging.INFO if expect_failure else logging.ERROR,
                   "transfer to %d failed: %s", target_resolution, exc)
        report.errors.append(f"{type(exc).__name__}: {exc}")
        report.check("forward_succeeds", False)
        report.wall_clock = time.perf_counter() - start
        return report

    after = _snapshot(weights)
    unchanged = before.keys() == after.keys() and all(
        before[k][0] == after[k][0] and np.array_equal(before[k][1], after[k][1]) for k in before)
    report.config["target_window"] = target.window
    report.metrics.update(accuracy=acc, chance=chance)
    report.check("forward_succeeds", True)
    report.check("parameters_unchanged", unchanged)
    report.check("accuracy_above_chance", acc >= TRANSFER_CHANCE_FACTOR * chance)
    report.wall_clock = time.perf_counter() - start
    logger.info("transfer %d -> %d (M %d -> %d): accuracy %.3f",
                cfg.resolution, target_resolution, cfg.window, target.window, acc)
    return report


def absolute_position_contrast(cfg: ModelConfig, task: SyntheticTask, target_resolution: int,
                               seed: int = 0) -> RunReport:
    """
    Cùng phép chuyển độ phân giải với bảng vị trí tuyệt đối: phải thất bại cứng.

    Check "absolute_table_rejected" đúng khi forward ở độ phân giải mới báo ConfigError.
    """
    abs_cfg = replace(cfg, position_mode=PositionMode.ABSOLUTE)
    _, weights = train_toy(abs_cfg, task, steps=0, seed=seed)
    inner = resolution_transfer_check(abs_cfg, weights, task, target_resolution,
                                      expect_failure=True)
    report = RunReport("transfer-check:absolute", config=inner.config, wall_clock=inner.wall_clock)
    rejected = not inner.checks.get("forward_succeeds", True) and any(
        e.startswith("ConfigError") for e in inner.errors)
    report.metrics["error"] = inner.errors[0] if inner.errors else None
    report.check("absolute_table_rejected", rejected)
    return report
