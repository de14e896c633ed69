"""
verify-all: chạy mọi bộ kiểm tra bất biến và gom kết quả vào một RunReport

Các suite độc lập nên chạy song song trên ThreadPoolExecutor; tiến độ được
ghi vào CheckProgress (thread-safe).
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterator, Optional, Tuple

import numpy as np

from app.algorithms import (ABLATION_COSTS, ReachabilityGraph, ablation_cost, bfs_unreachable,
                            find_path, model_cost, theorem_condition, verify_theorem1)
from app.core import (block_forward, causal_iw_block, dense_attention, depthwise_conv, downsample,
                      init_causal1d, iw_msa, mlp, patch_embed, rearrange, rearrange_by_index,
                      restore, same_window, window_msa, window_partition)
from app.errors import ConfigError, IwinError
from app.harness.config import (ABLATION_FLOPS_TOLERANCE, ABLATION_PARAM_TOLERANCE, COSET_SIDES,
                                DEFAULT_WORKERS, FD_RTOL, FLOPS_TARGETS, FLOPS_TOLERANCE,
                                MAX_KERNEL, ORACLE_TOLERANCE, PARAM_TARGETS, PARAM_TOLERANCE,
                                PERMUTATION_SWEEP, THEOREM_SWEEP)
from app.harness.gradcheck import gradcheck
from app.models import (BlockConfig, CheckProgress, ConvParams, ConvRadiusMode, DownsampleMethod,
                        Layout1D, RunReport, Structure, WindowLayout, build_variant,
                        init_attention, init_block, init_depthwise, init_downsample,
                        init_layernorm, init_mlp, load_parameters, map_parameters,
                        parameter_dict)
from app.tensor import GradTape, Tensor, backward, gelu, layernorm, softmax_lastdim

logger = logging.getLogger(__name__)

RestoreFn = Callable[[Tensor, WindowLayout], Tensor]
SuiteResult = Tuple[bool, dict]

# Các layout nhỏ đủ để BFS đối chiếu với verifier ma trận
BFS_CROSS_CHECK = ((4, 4, 2, 1), (4, 4, 2, 2), (6, 6, 2, 1), (6, 6, 3, 1))
ORACLE_CASES = ((4, 4, 2, 4, 1), (8, 8, 2, 8, 2), (8, 8, 4, 8, 2), (6, 6, 3, 6, 3), (4, 8, 2, 8, 2))
CAUSAL_CASES = ((16, 4, 3, "conv"), (16, 4, 3, "window"), (12, 3, 2, "conv"), (9, 3, 3, "window"))


def sweep_layouts(limit: int) -> Iterator[WindowLayout]:
    """Mọi (H, W, M) với H, W <= limit và M chia hết cả hai"""
    for H in range(1, limit + 1):
        for W in range(1, limit + 1):
            for M in range(1, min(H, W) + 1):
                if H % M == 0 and W % M == 0:
                    yield WindowLayout(H, W, M)


def weighted_loss(rng: np.random.Generator, shape) -> Callable[[Tensor], Tensor]:
    """Loss vô hướng sum(out * R) với R ngẫu nhiên cố định"""
    proj = Tensor(rng.normal(size=shape))
    return lambda out: (out * proj).sum()


def jitter(params, rng: np.random.Generator, scale: float = 0.1):
    """Cộng nhiễu vào mọi tham số để gradient không suy biến (bias 0, gamma 1)"""
    return map_parameters(params, lambda name, t: Tensor(t.data + rng.normal(0.0, scale, t.shape)))


# ---------------------------------------------------------------------------
# Suite: hoán vị
# ---------------------------------------------------------------------------

def interleave_bijectivity(restore_fn: Optional[RestoreFn] = None, seed: int = 0) -> SuiteResult:
    """restore(rearrange(x)) == x bit-exact, và hai đường cài đặt cho cùng kết quả"""
    restore_fn = restore_fn or restore
    rng = np.random.default_rng(seed)
    checked, failures = 0, []
    for layout in sweep_layouts(PERMUTATION_SWEEP):
        x = Tensor(rng.normal(size=(1, layout.H, layout.W, int(rng.integers(1, 4)))))
        forward = rearrange(x, layout)
        ok = (np.array_equal(restore_fn(forward, layout).data, x.data)
              and np.array_equal(rearrange_by_index(x, layout).data, forward.data))
        checked += 1
        if not ok:
            failures.append([layout.H, layout.W, layout.M])
    return not failures, {"layouts": checked, "failures": failures[:10]}


def coset_law(seed: int = 0) -> SuiteResult:
    """
    Token trong mỗi cửa sổ sau rearrange đúng bằng coset {(i + a H_g, j + b W_g)}.

    Kiểm tra trên toàn bộ sweep bằng nhãn coset, và từng cặp với same_window
    trên các lưới nhỏ.
    """
    failures = []
    checked = 0
    for layout in sweep_layouts(PERMUTATION_SWEEP):
        ids = np.arange(layout.num_tokens, dtype=np.float64).reshape(1, layout.H, layout.W, 1)
        windows = window_partition(rearrange(Tensor(ids), layout), layout).data[..., 0].astype(int)
        rows, cols = np.divmod(windows, layout.W)
        labels = (rows % layout.H_g) * layout.W_g + cols % layout.W_g
        ok = bool(np.all(labels == labels[:, :1])) and len(set(labels[:, 0])) == layout.num_windows
        checked += 1
        if not ok:
            failures.append([layout.H, layout.W, layout.M])

    pairs = 0
    for side in COSET_SIDES:
        for M in range(1, side + 1):
            if side % M:
                continue
            layout = WindowLayout(side, side, M)
            ids = np.arange(layout.num_tokens, dtype=np.float64).reshape(1, side, side, 1)
            windows = window_partition(rearrange(Tensor(ids), layout), layout).data[..., 0]
            member = np.empty(layout.num_tokens, dtype=int)
            for w, tokens in enumerate(windows.astype(int)):
                member[tokens] = w
            positions = list(layout.positions())
            for a, p1 in enumerate(positions):
                for b, p2 in enumerate(positions):
                    pairs += 1
                    if same_window(p1, p2, layout) != (member[a] == member[b]):
                        failures.append([side, M, list(p1), list(p2)])
    return not failures, {"layouts": checked, "pairs": pairs, "failures": failures[:10]}


# ---------------------------------------------------------------------------
# Suite: reachability
# ---------------------------------------------------------------------------

def theorem_sweep() -> SuiteResult:
    """
    K * M >= max(H, W) => verifier đạt và witness chứng nhận mọi cặp (bán kính K).
    Thêm: phản ví dụ cho 8x8, M=2, K=2 và BFS đối chiếu trên lưới nhỏ.
    """
    satisfied, failures = 0, []
    for layout in sweep_layouts(THEOREM_SWEEP):
        for K in range(1, min(MAX_KERNEL, max(layout.H, layout.W)) + 1):
            if not theorem_condition(layout, K):
                continue
            report = verify_theorem1(layout, K, ConvRadiusMode.LEMMA)
            satisfied += 1
            if not (report.passed and report.witness_certified):
                failures.append([layout.H, layout.W, layout.M, K])

    layout = WindowLayout(8, 8, 2)
    counter = verify_theorem1(layout, 2, ConvRadiusMode.LEMMA)
    counter_ok = not counter.passed and counter.counterexample is not None
    if counter_ok:
        graph = ReachabilityGraph(layout, counter.radius)
        counter_ok = not find_path(graph, *counter.counterexample).success

    bfs_agrees = True
    for H, W, M, K in BFS_CROSS_CHECK:
        small = WindowLayout(H, W, M)
        graph = ReachabilityGraph(small, K)
        reach = graph.reachability()
        from_bfs = {pair for pair in bfs_unreachable(graph)}
        from_matrix = {((int(i1), int(j1)), (int(i2), int(j2)))
                       for i1, i2, j1, j2 in np.argwhere(~reach)}
        bfs_agrees &= from_bfs == from_matrix

    passed = not failures and counter_ok and bfs_agrees
    return passed, {
        "satisfying_cases": satisfied, "failures": failures[:10],
        "counterexample": [list(p) for p in counter.counterexample] if counter.counterexample else None,
        "counterexample_confirmed_by_bfs": counter_ok, "bfs_matches_matrix": bfs_agrees,
    }


# ---------------------------------------------------------------------------
# Suite: attention oracle
# ---------------------------------------------------------------------------

def coset_mask(layout: WindowLayout) -> np.ndarray:
    positions = list(layout.positions())
    return np.array([[same_window(p, q, layout) for q in positions] for p in positions])


def oracle_equivalence(seed: int = 0) -> SuiteResult:
    """iw_msa == attention dày đặc bị mask theo coset; một cửa sổ == attention toàn cục"""
    rng = np.random.default_rng(seed)
    errors = {}
    for H, W, M, C, heads in ORACLE_CASES:
        layout = WindowLayout(H, W, M)
        p = init_attention(rng, C, heads)
        x = Tensor(rng.normal(size=(2, H, W, C)))
        tokens = x.reshape(2, H * W, C)
        oracle = window_msa(tokens, p, coset_mask(layout)).reshape(2, H, W, C)
        errors[f"{H}x{W}x{C}/M{M}"] = float(np.max(np.abs(iw_msa(x, layout, p).data - oracle.data)))
    for side, C in ((4, 4), (7, 6)):
        p = init_attention(rng, C, 2)
        x = Tensor(rng.normal(size=(1, side, side, C)))
        single = iw_msa(x, WindowLayout(side, side, side), p)
        errors[f"single_window_{side}"] = float(np.max(np.abs(single.data - dense_attention(x, p).data)))
    worst = max(errors.values())
    return worst <= ORACLE_TOLERANCE, {"max_abs_error": errors}


# ---------------------------------------------------------------------------
# Suite: gradient
# ---------------------------------------------------------------------------

def _check_tree(name: str, forward: Callable, params, x: Tensor, rng) -> Dict[str, float]:
    """gradcheck cho input x và mọi tensor trong cây tham số"""
    out_shape = forward(x, params).shape
    loss = weighted_loss(rng, out_shape)
    tensors = {"input": x, **parameter_dict(params)}

    def fn(t):
        rest = {k: v for k, v in t.items() if k != "input"}
        return loss(forward(t["input"], load_parameters(params, rest)))

    errors = gradcheck(fn, tensors)
    return {f"{name}/{k}": v for k, v in errors.items()}


def gradient_checks(seed: int = 0) -> SuiteResult:
    rng = np.random.default_rng(seed)
    errors: Dict[str, float] = {}

    def feature(*shape):
        return Tensor(rng.normal(size=shape))

    ln = jitter(init_layernorm(4), rng)
    errors.update(_check_tree("layernorm", lambda x, p: layernorm(x, p.gamma, p.beta), ln,
                              feature(2, 3, 4), rng))
    errors.update(_check_tree("gelu", lambda x, p: gelu(x), (), feature(3, 5), rng))
    errors.update(_check_tree("softmax", lambda x, p: softmax_lastdim(x), (), feature(3, 5), rng))

    layout = WindowLayout(4, 4, 2)
    attn = jitter(init_attention(rng, 4, 2, rel_window=2), rng)
    errors.update(_check_tree("iw_msa", lambda x, p: iw_msa(x, layout, p), attn,
                              feature(1, 4, 4, 4), rng))
    dw = jitter(init_depthwise(rng, 3, 3, pointwise_out=3), rng)
    errors.update(_check_tree("depthwise_conv", depthwise_conv, dw, feature(1, 4, 4, 3), rng))
    errors.update(_check_tree("mlp", mlp, jitter(init_mlp(rng, 4, 8), rng), feature(1, 2, 2, 4), rng))
    for method in DownsampleMethod:
        w = jitter(init_downsample(rng, method, 2), rng)
        errors.update(_check_tree(f"downsample_{method.value}", downsample, w,
                                  feature(1, 4, 4, 2), rng))
    embed = (jitter(ConvParams(Tensor(rng.normal(size=(4, 4, 3, 4))), Tensor(np.zeros(4)), 4, 0), rng),
             jitter(init_layernorm(4), rng))
    errors.update(_check_tree("patch_embed", lambda x, p: patch_embed(x, p[0], p[1]), embed,
                              feature(1, 8, 8, 3), rng))
    for structure in Structure:
        cfg = BlockConfig(dim=4, num_heads=2, window=2, kernel=3, structure=structure)
        w = jitter(init_block(rng, cfg), rng)
        errors.update(_check_tree(f"block_{structure.value}",
                                  lambda x, p, cfg=cfg: block_forward(x, cfg, p), w,
                                  feature(1, 4, 4, 4), rng))

    worst = max(errors.values())
    failing = sorted(k for k, v in errors.items() if v >= FD_RTOL)
    return not failing, {"checked": len(errors), "max_rel_error": worst, "failing": failing}


# ---------------------------------------------------------------------------
# Suite: nhân quả 1D
# ---------------------------------------------------------------------------

def causality_check(n: int, m: int, kernel: int = 3, local_mode: str = "conv",
                    seed: int = 0, dim: int = 4, heads: int = 2) -> dict:
    """
    Jacobian dOut[t] / dIn[s] bằng 0 chính xác với mọi s > t, và nhiễu ở token s
    không đổi out[t < s].

    "violations" liệt kê từng cặp [t, s] với s > t có gradient khác 0.
    """
    rng = np.random.default_rng(seed)
    layout = Layout1D(n, m)
    p = jitter(init_causal1d(rng, dim, heads, kernel, local_mode), rng)
    x = Tensor(rng.normal(size=(1, n, dim)))

    upper_max, lower_nonzero = 0.0, 0
    violations = []
    for t in range(n):
        proj = np.zeros((1, n, dim))
        proj[0, t] = rng.normal(size=dim)
        with GradTape() as tape:
            tape.watch(x)
            loss = (causal_iw_block(x, layout, p) * Tensor(proj)).sum()
        grad = backward(tape, loss)[x].data[0]
        future = np.abs(grad[t + 1:]).max(axis=-1, initial=0.0)
        violations.extend([t, t + 1 + int(s)] for s in np.flatnonzero(future))
        upper_max = max(upper_max, float(np.max(future, initial=0.0)))
        lower_nonzero += int(np.count_nonzero(np.abs(grad[:t + 1]).sum(axis=-1)))

    base = causal_iw_block(x, layout, p).data
    perturbation_ok = True
    for s in range(n):
        bumped = x.numpy()
        bumped[0, s] += rng.normal(size=dim)
        out = causal_iw_block(Tensor(bumped), layout, p).data
        perturbation_ok &= bool(np.array_equal(out[:, :s], base[:, :s]))

    return {"N": n, "M": m, "K": kernel, "local_mode": local_mode,
            "upper_max_abs": upper_max, "lower_nonzero_entries": lower_nonzero,
            "pairs_checked": n * (n - 1) // 2, "violations": violations,
            "perturbation_ok": perturbation_ok,
            "passed": upper_max == 0.0 and perturbation_ok}


def causality(seed: int = 0) -> SuiteResult:
    cases = [causality_check(n, m, k, mode, seed) for n, m, k, mode in CAUSAL_CASES]
    return all(c["passed"] for c in cases), {"cases": cases}


# ---------------------------------------------------------------------------
# Suite: chi phí
# ---------------------------------------------------------------------------

def reference_costs() -> SuiteResult:
    """Params và FLOPs của các biến thể chuẩn và các dòng ablation so với giá trị tham chiếu"""
    rows, failing = [], []
    for name, res in sorted(set(PARAM_TARGETS) | set(FLOPS_TARGETS)):
        report = model_cost(build_variant(name, res))
        row = {"variant": name, "resolution": res, "gflops": report.gflops,
               "mparams": report.mparams, "flops_delta": report.flops_delta,
               "params_delta": report.params_delta}
        if (name, res) in PARAM_TARGETS and abs(report.params_delta) > PARAM_TOLERANCE:
            failing.append(f"params {name}@{res}")
        if (name, res) in FLOPS_TARGETS and abs(report.flops_delta) > FLOPS_TOLERANCE:
            failing.append(f"flops {name}@{res}")
        rows.append(row)
    for name in ABLATION_COSTS:
        report, params_m, flops_g = ablation_cost(name)
        params_delta = (report.mparams - params_m) / params_m
        flops_delta = (report.gflops - flops_g) / flops_g
        rows.append({"variant": f"T:{name}", "resolution": 224, "gflops": report.gflops,
                     "mparams": report.mparams, "flops_delta": flops_delta,
                     "params_delta": params_delta})
        if abs(params_delta) > ABLATION_PARAM_TOLERANCE:
            failing.append(f"params T:{name}")
        if abs(flops_delta) > ABLATION_FLOPS_TOLERANCE:
            failing.append(f"flops T:{name}")
    return not failing, {"rows": rows, "failing": failing}


# ---------------------------------------------------------------------------
# Tổng hợp
# ---------------------------------------------------------------------------

def suites(restore_fn: Optional[RestoreFn] = None, seed: int = 0) -> Dict[str, Callable[[], SuiteResult]]:
    return {
        "interleave_bijectivity": lambda: interleave_bijectivity(restore_fn, seed),
        "coset_law": lambda: coset_law(seed),
        "theorem_sweep": theorem_sweep,
        "oracle_equivalence": lambda: oracle_equivalence(seed),
        "gradients": lambda: gradient_checks(seed),
        "causality": lambda: causality(seed),
        "reference_costs": reference_costs,
    }


def verify_all(restore_fn: Optional[RestoreFn] = None, workers: int = DEFAULT_WORKERS,
               seed: int = 0, only: Optional[Tuple[str, ...]] = None,
               progress: Optional[CheckProgress] = None) -> RunReport:
    """
    Chạy các suite song song và gom kết quả.

    Args:
        restore_fn: thay thế restore (dùng để kiểm tra đột biến)
        workers: số thread
        only: chỉ chạy các suite có tên trong danh sách

    Raises:
        ConfigError: only chứa tên suite không tồn tại
    """
    table = suites(restore_fn, seed)
    if only:
        unknown = sorted(set(only) - set(table))
        if unknown:
            raise ConfigError(f"unknown suite(s) {unknown}, expected one of {sorted(table)}")
        table = {name: fn for name, fn in table.items() if name in only}
    progress = progress or CheckProgress()
    report = RunReport("verify-all", config={"seed": seed, "workers": workers,
                                             "suites": list(table)})
    start = time.perf_counter()
    progress.start(len(table))

    def run(name: str) -> Tuple[str, bool, dict, Optional[str]]:
        progress.begin(name)
        logger.info("suite %s started", name)
        try:
            passed, detail = table[name]()
            error = None
        except IwinError as exc:
            passed, detail, error = False, {}, f"{type(exc).__name__}: {exc}"
        progress.update(name, passed)
        logger.info("suite %s finished: %s", name, "pass" if passed else "FAIL")
        return name, passed, detail, error

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(run, table))
    progress.stop()

    for name, passed, detail, error in results:
        report.check(name, passed)
        report.metrics[name] = detail
        if error:
            report.errors.append(f"{name}: {error}")
    report.wall_clock = time.perf_counter() - start
    return report
