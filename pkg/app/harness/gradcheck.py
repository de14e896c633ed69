"""
Kiểm tra gradient bằng sai phân trung tâm
"""

import logging
from typing import Callable, Dict, Mapping, Optional

import numpy as np

from app.harness.config import FD_FLOOR, FD_RTOL, FD_STEP
from app.tensor import GradTape, Tensor, backward

logger = logging.getLogger(__name__)

ScalarFn = Callable[[Mapping[str, Tensor]], Tensor]


def analytic_gradients(fn: ScalarFn, tensors: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
    with GradTape() as tape:
        tape.watch(*tensors.values())
        loss = fn(tensors)
    grads = backward(tape, loss)
    return {name: grads[t].numpy() for name, t in tensors.items()}


def numeric_gradient(fn: ScalarFn, tensors: Mapping[str, Tensor], name: str,
                     h: float = FD_STEP, max_entries: Optional[int] = None,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """
    (f(x + h e) - f(x - h e)) / 2h cho từng phần tử của tensors[name].

    Nếu max_entries nhỏ hơn số phần tử, chỉ lấy mẫu ngẫu nhiên; phần còn lại là NaN.
    """
    base = tensors[name].numpy()
    flat = base.reshape(-1)
    entries = np.arange(flat.size)
    if max_entries is not None and flat.size > max_entries:
        entries = (rng or np.random.default_rng(0)).choice(flat.size, max_entries, replace=False)

    grad = np.full(flat.size, np.nan)
    for idx in entries:
        values = []
        for sign in (1.0, -1.0):
            bumped = flat.copy()
            bumped[idx] += sign * h
            trial = dict(tensors)
            trial[name] = Tensor(bumped.reshape(base.shape))
            values.append(fn(trial).item())
        grad[idx] = (values[0] - values[1]) / (2.0 * h)
    return grad.reshape(base.shape)


def gradcheck(fn: ScalarFn, tensors: Mapping[str, Tensor], h: float = FD_STEP,
              rtol: float = FD_RTOL, max_entries: Optional[int] = None,
              seed: int = 0) -> Dict[str, float]:
    """
    Sai số tương đối giữa gradient giải tích và số cho từng tensor.

    Sai số = ||g_a - g_n|| / max(||g_a|| + ||g_n||, FD_FLOOR), chỉ trên các phần tử được đo.
    """
    rng = np.random.default_rng(seed)
    analytic = analytic_gradients(fn, tensors)
    errors = {}
    for name in tensors:
        numeric = numeric_gradient(fn, tensors, name, h, max_entries, rng)
        measured = ~np.isnan(numeric)
        a, n = analytic[name][measured], numeric[measured]
        scale = max(np.linalg.norm(a) + np.linalg.norm(n), FD_FLOOR)
        errors[name] = float(np.linalg.norm(a - n) / scale)
        level = logging.DEBUG if errors[name] < rtol else logging.WARNING
        logger.log(level, "gradcheck %s: rel err %.3e", name, errors[name])
    return errors


def gradcheck_passed(errors: Mapping[str, float], rtol: float = FD_RTOL) -> bool:
    return all(err < rtol for err in errors.values())
