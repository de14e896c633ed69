"""
Trainer gradient descent thuần cho mô hình nhỏ trên dữ liệu tổng hợp
"""

import logging
import time
from dataclasses import asdict
from typing import Optional, Tuple

import numpy as np

from app.core import backbone_forward
from app.errors import ConfigError, IwinError, NumericError
from app.harness.config import DEFAULT_LR, DEFAULT_STEPS, LOG_EVERY, LOSS_REDUCTION, TARGET_ACCURACY
from app.harness.synthetic import make_dataset
from app.models import (BackboneWeights, ModelConfig, RunReport, SyntheticTask, count_parameters,
                        init_backbone, map_parameters, parameter_dict)
from app.tensor import GradTape, Tensor, backward, cross_entropy

logger = logging.getLogger(__name__)


def accuracy(logits: Tensor, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits.data, axis=-1) == labels))


def evaluate(cfg: ModelConfig, weights: BackboneWeights, images: np.ndarray,
             labels: np.ndarray) -> Tuple[float, float]:
    """(loss, accuracy) không ghi tape"""
    logits = backbone_forward(Tensor(images), cfg, weights)
    return cross_entropy(logits, labels).item(), accuracy(logits, labels)


def sgd_step(weights: BackboneWeights, grads, lr: float) -> BackboneWeights:
    return map_parameters(weights, lambda name, t: Tensor(t.data - lr * grads[t].data))


def train_toy(cfg: ModelConfig, task: SyntheticTask, steps: int = DEFAULT_STEPS,
              lr: float = DEFAULT_LR, seed: int = 0,
              weights: Optional[BackboneWeights] = None) -> Tuple[RunReport, BackboneWeights]:
    """
    Huấn luyện full-batch bằng gradient descent với cross-entropy.

    Args:
        cfg: cấu hình mô hình nhỏ
        task: bài toán tổng hợp (độ phân giải ảnh phải bằng cfg.resolution)
        steps: số bước cập nhật; 0 chỉ đánh giá
        lr: learning rate
        seed: seed khởi tạo trọng số

    Returns:
        (RunReport, trọng số sau huấn luyện)
    """
    start = time.perf_counter()
    report = RunReport("train-toy", config={
        "model": cfg.to_dict(), "task": asdict(task),
        "steps": steps, "lr": lr, "seed": seed,
    })
    weights = weights or init_backbone(cfg, seed)
    report.metrics["params"] = count_parameters(weights)

    history = []
    try:
        if task.image_size != cfg.resolution:
            raise ConfigError(f"task images are {task.image_size}px, model expects {cfg.resolution}px")
        images, labels = make_dataset(task)
        init_loss, init_acc = evaluate(cfg, weights, images, labels)
        report.metrics.update(initial_loss=init_loss, initial_accuracy=init_acc)
        x = Tensor(images)
        for step in range(steps):
            try:
                with GradTape() as tape:
                    params = parameter_dict(weights)
                    tape.watch(*params.values())
                    loss = cross_entropy(backbone_forward(x, cfg, weights), labels)
                value = loss.item()
                if not np.isfinite(value):
                    raise NumericError(f"non-finite loss {value}")
                grads = backward(tape, loss)
            except NumericError as exc:
                report.metrics["failed_step"] = step
                raise NumericError(f"training diverged at step {step}: {exc}") from exc
            weights = sgd_step(weights, grads, lr)
            if step % LOG_EVERY == 0:
                history.append([step, value])
                logger.info("step %d: loss %.4f", step, value)
        try:
            final_loss, final_acc = evaluate(cfg, weights, images, labels)
            if not np.isfinite(final_loss):
                raise NumericError(f"non-finite loss {final_loss}")
        except NumericError as exc:
            report.metrics["failed_step"] = steps
            raise NumericError(f"training diverged at step {steps} (final evaluation): {exc}") from exc
    except IwinError as exc:
        logger.error("training failed: %s", exc)
        report.errors.append(str(exc))
        report.check("finite_loss", False)
        report.wall_clock = time.perf_counter() - start
        return report, weights

    report.metrics.update(final_loss=final_loss, train_accuracy=final_acc,
                          loss_history=history, chance=1.0 / task.num_classes)
    report.check("finite_loss", True)
    if steps > 0:
        report.check("loss_reduced_tenfold", final_loss < init_loss / LOSS_REDUCTION)
        report.check("train_accuracy", final_acc >= TARGET_ACCURACY)
    report.wall_clock = time.perf_counter() - start
    logger.info("trained %d steps: loss %.4f -> %.4f, accuracy %.3f",
                steps, init_loss, final_loss, final_acc)
    return report, weights
