"""
Sinh dữ liệu phân loại ảnh tổng hợp từ seed

Mỗi lớp có một màu (tint) riêng và một kiểu hoa văn khối (sọc ngang, sọc dọc,
bàn cờ, sọc chéo) với pha ngẫu nhiên. Ở noise = 0 các lớp tách được tuyến tính
qua màu trung bình.
"""

import logging
from typing import Tuple

import numpy as np
from scipy import ndimage

from app.errors import ConfigError
from app.models import SyntheticTask

logger = logging.getLogger(__name__)

BLOCKS_PER_SIDE = 8
PATTERNS = ("horizontal", "vertical", "checker", "diagonal")


def class_tints(num_classes: int) -> np.ndarray:
    """Màu RGB phân biệt trên vòng màu, [num_classes, 3] trong [0, 1]"""
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    offsets = np.array([0.0, 2.0 * np.pi / 3.0, 4.0 * np.pi / 3.0])
    return 0.5 + 0.5 * np.cos(angles[:, None] + offsets[None, :])


def block_pattern(kind: str, size: int, phase: Tuple[int, int]) -> np.ndarray:
    block = max(1, size // BLOCKS_PER_SIDE)
    rows, cols = np.meshgrid(np.arange(size) + phase[0], np.arange(size) + phase[1], indexing="ij")
    if kind == "horizontal":
        bits = rows // block
    elif kind == "vertical":
        bits = cols // block
    elif kind == "checker":
        bits = rows // block + cols // block
    else:
        bits = (rows + cols) // block
    return (bits % 2).astype(np.float64)


def make_dataset(task: SyntheticTask) -> Tuple[np.ndarray, np.ndarray]:
    """
    Tập dữ liệu cân bằng, xác định hoàn toàn bởi task.seed.

    Returns:
        images [n, S, S, 3] (float64, quanh 0) và labels [n] (int64)
    """
    if task.kind != "blocks":
        raise ConfigError(f"unknown synthetic task kind '{task.kind}'")
    if task.num_classes < 2 or task.samples_per_class < 1 or task.image_size < 1:
        raise ConfigError(f"invalid synthetic task {task}")

    rng = np.random.default_rng(task.seed)
    tints = class_tints(task.num_classes)
    block = max(1, task.image_size // BLOCKS_PER_SIDE)
    count = task.num_classes * task.samples_per_class
    labels = np.arange(count) % task.num_classes
    images = np.empty((count, task.image_size, task.image_size, 3))
    for idx, label in enumerate(labels):
        phase = tuple(int(v) for v in rng.integers(0, 2 * block, size=2))
        pattern = block_pattern(PATTERNS[label % len(PATTERNS)], task.image_size, phase)
        images[idx] = tints[label] * (0.5 + 0.5 * pattern[:, :, None]) - 0.5
    if task.noise > 0:
        images += rng.normal(0.0, task.noise, size=images.shape)
    logger.debug("synthetic dataset: %d images of %dx%d", count, task.image_size, task.image_size)
    return images, labels.astype(np.int64)


def upscale(images: np.ndarray, factor: int) -> np.ndarray:
    """Phóng to theo nearest neighbour, [n, S, S, C] -> [n, fS, fS, C]"""
    if factor < 1:
        raise ConfigError(f"upscale factor must be >= 1, got {factor}")
    return ndimage.zoom(images, (1, factor, factor, 1), order=0)
