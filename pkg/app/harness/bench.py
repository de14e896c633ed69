"""
Micro-benchmark CPU cho hoán vị xen kẽ, attention và depthwise conv

Mỗi phép được kiểm tra đúng trước khi đo; thời gian là median của các lần lặp.
"""

import logging
import time
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from app.algorithms import module_flops
from app.core import (dense_attention, depthwise_conv, iw_msa, rearrange, rearrange_by_index,
                      restore, restore_by_index)
from app.errors import ConfigError, ContractError
from app.harness.config import BENCH_DEFAULTS, BENCH_OPS, DEFAULT_REPEATS
from app.models import RunReport, WindowLayout, init_attention, init_depthwise, map_parameters
from app.tensor import Tensor

logger = logging.getLogger(__name__)

DTYPES = {"float64": np.float64, "float32": np.float32}


def time_median(fn: Callable[[], object], repeats: int) -> Dict[str, float]:
    """Median và khoảng (max - min) thời gian chạy của fn, tính bằng giây"""
    if repeats < 1:
        raise ConfigError(f"repeats must be >= 1, got {repeats}")
    samples = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        samples.append(time.perf_counter() - start)
    return {"median": float(np.median(samples)), "spread": float(max(samples) - min(samples))}


def divisible_size(size: int, window: int) -> int:
    rounded = max(window, size - size % window)
    if rounded != size:
        logger.warning("bench size %d rounded down to %d (window %d)", size, rounded, window)
    return rounded


def _cast(params, dtype):
    return map_parameters(params, lambda name, t: Tensor(t.data, dtype=dtype))


def _reference_dwconv(x: np.ndarray, weight: np.ndarray, bias: np.ndarray) -> np.ndarray:
    k = weight.shape[0]
    pad = k // 2
    _, H, W, _ = x.shape
    padded = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    out = np.zeros_like(x)
    for dy in range(k):
        for dx in range(k):
            out += padded[:, dy:dy + H, dx:dx + W, :] * weight[dy, dx]
    return out + bias


def _bench_interleave(size: int, opts: dict, repeats: int, dtype, rng) -> dict:
    layout = WindowLayout(size, size, opts["window"])
    x = Tensor(rng.normal(size=(1, size, size, opts["channels"])), dtype=dtype)
    if not np.array_equal(restore(rearrange(x, layout), layout).data, x.data):
        raise ContractError("restore(rearrange(x)) != x")
    if not np.array_equal(rearrange_by_index(x, layout).data, rearrange(x, layout).data):
        raise ContractError("reshape path and index path disagree")
    rtr = time_median(lambda: restore(rearrange(x, layout), layout), repeats)
    index = time_median(lambda: restore_by_index(rearrange_by_index(x, layout), layout), repeats)
    return {"rtr_s": rtr["median"], "rtr_spread_s": rtr["spread"],
            "index_s": index["median"], "index_spread_s": index["spread"]}


def _bench_attention(size: int, opts: dict, repeats: int, dtype, rng) -> dict:
    C, M, heads = opts["channels"], opts["window"], opts["heads"]
    layout = WindowLayout(size, size, M)
    p = _cast(init_attention(rng, C, heads), dtype)
    x = Tensor(rng.normal(size=(1, size, size, C)), dtype=dtype)
    for name, out in (("iw_msa", iw_msa(x, layout, p)), ("dense", dense_attention(x, p))):
        if out.shape != x.shape or not np.all(np.isfinite(out.data)):
            raise ContractError(f"{name} produced shape {out.shape} or non-finite values")
    iw = time_median(lambda: iw_msa(x, layout, p), repeats)
    dense = time_median(lambda: dense_attention(x, p), repeats)
    hw = size * size
    terms = module_flops(size, size, C, M)
    dense_flops = 4 * hw * C * C + 2 * hw * hw * C
    return {
        "iw_msa_s": iw["median"], "iw_msa_spread_s": iw["spread"],
        "dense_s": dense["median"], "dense_spread_s": dense["spread"],
        "measured_speedup": dense["median"] / iw["median"],
        "score_work_ratio": (M * M) / hw,
        "flop_speedup": dense_flops / (terms.qkv + terms.attn_core + terms.out_proj),
    }


def _bench_dwconv(size: int, opts: dict, repeats: int, dtype, rng) -> dict:
    C, k = opts["channels"], opts["kernel"]
    p = _cast(init_depthwise(rng, C, k), dtype)
    x = Tensor(rng.normal(size=(1, size, size, C)), dtype=dtype)
    expected = _reference_dwconv(x.data, p.weight.data, p.bias.data)
    tol = 1e-10 if dtype is np.float64 else 1e-4
    if not np.allclose(depthwise_conv(x, p).data, expected, atol=tol, rtol=tol):
        raise ContractError("depthwise_conv disagrees with shifted-sum reference")
    conv = time_median(lambda: depthwise_conv(x, p), repeats)
    terms = module_flops(size, size, C, BENCH_DEFAULTS["attention"]["window"], k)
    return {"dwconv_s": conv["median"], "dwconv_spread_s": conv["spread"],
            "flops": terms.conv, "overhead_vs_swin_module": terms.overhead_ratio}


RUNNERS = {"interleave": _bench_interleave, "attention": _bench_attention, "dwconv": _bench_dwconv}


def bench(op: str, sizes: Optional[Sequence[int]] = None, repeats: int = DEFAULT_REPEATS,
          dtype: str = "float64", seed: int = 0) -> RunReport:
    """
    Đo thời gian một phép trên các kích thước cho trước.

    Args:
        op: interleave, attention hoặc dwconv
        sizes: cạnh của feature map vuông; mặc định theo BENCH_DEFAULTS
        repeats: số lần đo
        dtype: float64 hoặc float32
    """
    if op not in BENCH_OPS:
        raise ConfigError(f"unknown bench op '{op}', expected one of {BENCH_OPS}")
    if dtype not in DTYPES:
        raise ConfigError(f"unknown dtype '{dtype}', expected one of {sorted(DTYPES)}")
    opts = BENCH_DEFAULTS[op]
    sizes = list(sizes or [opts["size"]])
    report = RunReport("bench", config={"op": op, "sizes": sizes, "repeats": repeats,
                                        "dtype": dtype, "seed": seed, **opts})
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    results: List[dict] = []
    for size in sizes:
        size = divisible_size(size, opts.get("window", 1))
        try:
            row = RUNNERS[op](size, opts, repeats, DTYPES[dtype], rng)
        except ContractError as exc:
            logger.error("bench %s at %d: %s", op, size, exc)
            report.errors.append(str(exc))
            report.check(f"correct_{size}", False)
            continue
        report.check(f"correct_{size}", True)
        results.append({"size": size, **row})
        logger.info("bench %s at %d: %s", op, size,
                    ", ".join(f"{k}={v:.4g}" for k, v in row.items()))
    report.metrics["results"] = results
    report.wall_clock = time.perf_counter() - start
    return report
