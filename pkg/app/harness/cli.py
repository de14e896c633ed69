"""
Giao diện dòng lệnh

Chạy: python main.py <verb> [options]

Mỗi lệnh trả về RunReport; exit code 0 khi mọi check đạt, 1 khi có check
thất bại, 2 khi tham số hoặc cấu hình không hợp lệ.
"""

import argparse
import csv
import logging
import sys
import time
from pathlib import Path
from typing import List, Optional, Sequence

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from app.algorithms import erf_depth_bound, model_cost, theorem_condition, verify_theorem1
from app.core import dump_index_table, operation_counts
from app.errors import IwinError
from app.harness.bench import bench
from app.harness.config import (BENCH_OPS, DEFAULT_LR, DEFAULT_REPEATS, DEFAULT_STEPS,
                                DEFAULT_TOY_RESOLUTION, DEFAULT_TRANSFER_RESOLUTION,
                                DEFAULT_WORKERS)
from app.harness.trainer import train_toy
from app.harness.transfer import absolute_position_contrast, resolution_transfer_check
from app.harness.verify import causality_check, verify_all
from app.models import (ConvRadiusMode, Layout1D, ModelConfig, RunReport, SyntheticTask,
                        VARIANTS, WindowLayout, build_variant, count_parameters, init_backbone,
                        load_parameters, parameter_dict)
from app.tensor import load_weights, save_weights

logger = logging.getLogger(__name__)
console = Console()

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

DUMP_HEADER = ["table", "src_i", "src_j", "dst_i", "dst_j"]


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    level = logging.ERROR if quiet else logging.DEBUG if verbose else logging.WARNING
    logging.basicConfig(level=level, format="%(message)s", datefmt="[%X]",
                        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True)],
                        force=True)


def load_model(args) -> ModelConfig:
    """--config thắng --variant / --res"""
    if getattr(args, "config", None):
        return ModelConfig.from_json(args.config)
    return build_variant(args.variant, args.res)


def print_checks(report: RunReport) -> None:
    table = Table(title=f"{report.command}", show_header=True, header_style="bold magenta")
    table.add_column("check")
    table.add_column("result")
    for name, ok in report.checks.items():
        table.add_row(name, "[green]pass[/green]" if ok else "[red]FAIL[/red]")
    console.print(table)
    for error in report.errors:
        console.print(f"[red]error:[/red] {error}")
    console.print(f"wall clock {report.wall_clock:.2f}s")


def write_csv(path: Optional[str], rows: Sequence[Sequence]) -> None:
    """Ghi CSV ra file; path None thì in ra stdout"""
    if path is None:
        csv.writer(sys.stdout, lineterminator="\n").writerows(rows)
        return
    with open(path, "w", newline="", encoding="utf-8") as f:
        csv.writer(f).writerows(rows)


# ---------------------------------------------------------------------------
# Các lệnh
# ---------------------------------------------------------------------------

def cmd_verify_all(args) -> RunReport:
    report = verify_all(workers=args.workers, seed=args.seed,
                        only=tuple(args.suite) if args.suite else None)
    print_checks(report)
    return report


def cmd_interleave_dump(args) -> RunReport:
    layout = WindowLayout(args.H, args.W, args.M)
    forward = dump_index_table(layout)
    inverse = dump_index_table(layout, inverse=True)
    report = RunReport("interleave dump", config={"H": args.H, "W": args.W, "M": args.M})
    report.metrics["rows"] = len(forward) + len(inverse)
    write_csv(args.csv, [DUMP_HEADER]
              + [["forward", *row] for row in forward]
              + [["inverse", *row] for row in inverse])
    back = {tuple(row[:2]): tuple(row[2:]) for row in inverse}
    report.check("bijective", len({r[2:] for r in forward}) == layout.num_tokens)
    report.check("inverse_consistent", all(back[r[2:]] == r[:2] for r in forward))
    return report


def cmd_analyze_reach(args) -> RunReport:
    layout = WindowLayout(args.H, args.W, args.M)
    mode = ConvRadiusMode(args.mode)
    result = verify_theorem1(layout, args.K, mode)
    report = RunReport("analyze reach", config={"H": args.H, "W": args.W, "M": args.M,
                                                "K": args.K, "mode": mode.value})
    report.metrics.update(result.to_dict())
    report.metrics["condition_holds"] = theorem_condition(layout, args.K)
    report.metrics["erf_depth_bound"] = erf_depth_bound(layout, args.K)

    table = Table(title=f"{layout} K={args.K} mode={mode.value}")
    table.add_column("field")
    table.add_column("value")
    table.add_row("radius", str(result.radius))
    table.add_row("K*M >= max(H, W)", str(report.metrics["condition_holds"]))
    table.add_row("passed", str(result.passed))
    table.add_row("diameter", str(result.diameter))
    table.add_row("witness certifies", str(result.witness_certified))
    table.add_row("counterexample", str(result.counterexample))
    table.add_row("depth bound (physical)", str(report.metrics["erf_depth_bound"]))
    console.print(table)
    console.print(f"[dim]{result.reading}[/dim]")
    # Kết quả phân tích luôn được báo cáo; chỉ --expect-pass mới biến nó thành check
    if args.expect_pass:
        report.check("reachability", result.passed)
    return report


def cmd_analyze_cost(args) -> RunReport:
    cfg = load_model(args)
    cost = model_cost(cfg)
    report = RunReport("analyze cost", config=cfg.to_dict(), metrics=cost.to_dict())
    table = Table(title=f"{cfg.name} @ {cfg.resolution} (M={cfg.window})")
    for col in ("stage", "res", "dim", "depth", "GFLOPs", "M params", "conv overhead"):
        table.add_column(col, justify="right")
    for s in cost.stages:
        table.add_row(str(s.stage), f"{s.resolution}x{s.resolution}", str(s.dim), str(s.depth),
                      f"{s.flops / 1e9:.3f}", f"{s.params / 1e6:.3f}",
                      f"{s.module.overhead_ratio:.2%}")
    table.add_row("total", "", "", "", f"{cost.gflops:.3f}", f"{cost.mparams:.3f}", "")
    if cost.reference_flops_g is not None:
        table.add_row("reference", "", "", "", f"{cost.reference_flops_g}",
                      f"{cost.reference_params_m}", "")
    console.print(table)
    if args.csv:
        write_csv(args.csv, cost.to_csv_rows())
    return report


def cmd_model_describe(args) -> RunReport:
    cfg = load_model(args)
    report = RunReport("model describe", config=cfg.to_dict())
    layouts = cfg.stage_layouts()
    cost = model_cost(cfg)
    table = Table(title=f"{cfg.name} @ {cfg.resolution}")
    for col in ("stage", "output", "dim", "depth", "heads", "window", "grid", "kernel", "M params"):
        table.add_column(col, justify="right")
    for stage, layout in enumerate(layouts):
        block = cfg.block_config(stage)
        table.add_row(str(stage + 1), f"{layout.H}x{layout.W}", str(block.dim),
                      str(cfg.depths[stage]), str(block.num_heads), str(block.window),
                      f"{layout.H_g}x{layout.W_g}", str(block.kernel or "-"),
                      f"{cost.stages[stage].params / 1e6:.3f}")
    console.print(table)
    console.print(f"logits: {cfg.num_classes}, params {cost.mparams:.2f}M, "
                  f"FLOPs {cost.gflops:.2f}G")
    report.metrics.update(stages=[[l.H, l.W, cfg.dims[s]] for s, l in enumerate(layouts)],
                          params=cost.params, flops=cost.flops)
    return report


def _toy_config(args) -> ModelConfig:
    if getattr(args, "config", None):
        return ModelConfig.from_json(args.config)
    return build_variant("tiny-test", args.res, num_classes=args.classes)


def _toy_task(args, image_size: int) -> SyntheticTask:
    return SyntheticTask(num_classes=args.classes, image_size=image_size, seed=args.seed,
                         noise=args.noise, samples_per_class=args.samples)


def cmd_train_toy(args) -> RunReport:
    cfg = _toy_config(args)
    report, weights = train_toy(cfg, _toy_task(args, cfg.resolution), args.steps, args.lr, args.seed)
    if args.save:
        save_weights(args.save, parameter_dict(weights))
        report.config["weights"] = args.save
    print_checks(report)
    return report


def cmd_transfer_check(args) -> RunReport:
    cfg = _toy_config(args)
    task = _toy_task(args, cfg.resolution)
    if args.weights:
        weights = load_parameters(init_backbone(cfg, args.seed), load_weights(args.weights))
        trained = RunReport("train-toy", config={"weights": args.weights})
    else:
        trained, weights = train_toy(cfg, task, args.steps, args.lr, args.seed)
    report = resolution_transfer_check(cfg, weights, task, args.to_res)
    report.metrics["train"] = {"checks": trained.checks, "metrics": {
        k: v for k, v in trained.metrics.items() if k != "loss_history"}}
    report.metrics["params"] = count_parameters(weights)
    contrast = absolute_position_contrast(cfg, task, args.to_res, args.seed)
    report.check("absolute_table_rejected", contrast.checks["absolute_table_rejected"])
    report.metrics["absolute_position_error"] = contrast.metrics["error"]
    print_checks(report)
    return report


def cmd_causal1d_check(args) -> RunReport:
    start = time.perf_counter()
    result = causality_check(args.N, args.M, args.K, args.local_mode, args.seed)
    report = RunReport("causal1d check", config={"N": args.N, "M": args.M, "K": args.K,
                                                 "local_mode": args.local_mode})
    report.metrics.update(result)
    report.metrics["operation_counts"] = operation_counts(Layout1D(args.N, args.M), args.K,
                                                          args.local_mode)
    report.check("jacobian_upper_zero", result["upper_max_abs"] == 0.0)
    report.check("perturbation", result["perturbation_ok"])
    report.wall_clock = time.perf_counter() - start
    print_causal_pairs(args.N, result["violations"])
    print_checks(report)
    return report


def print_causal_pairs(n: int, violations: Sequence[Sequence[int]]) -> None:
    """Lưới output t x input s: ok / FAIL cho mọi cặp s > t, '.' khi s <= t"""
    failed = {tuple(v) for v in violations}
    table = Table(title=f"dOut[t] / dIn[s] == 0 for s > t ({n * (n - 1) // 2} pairs)")
    table.add_column("t \\ s", justify="right")
    for s in range(n):
        table.add_column(str(s), justify="center")
    for t in range(n):
        cells = ["." if s <= t else "[red]FAIL[/red]" if (t, s) in failed else "[green]ok[/green]"
                 for s in range(n)]
        table.add_row(str(t), *cells)
    console.print(table)


def cmd_bench(args) -> RunReport:
    report = bench(args.op, args.sizes, args.repeats, args.dtype, args.seed)
    results = report.metrics.get("results", [])
    if results:
        table = Table(title=f"bench {args.op} ({args.dtype}, {args.repeats} repeats)")
        for col in results[0]:
            table.add_column(col, justify="right")
        for row in results:
            table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in row.values()))
        console.print(table)
    print_checks(report)
    return report


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="Seed cho mọi phần ngẫu nhiên")
    common.add_argument("--json", metavar="PATH", help="Ghi RunReport dạng JSON")
    common.add_argument("--verbose", "-v", action="store_true", help="Log mức DEBUG")
    common.add_argument("--quiet", "-q", action="store_true", help="Chỉ log lỗi")

    parser = argparse.ArgumentParser(prog="iwin", description="Iwin verification toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("verify-all", parents=[common], help="Chạy mọi suite kiểm tra")
    p.add_argument("--workers", type=int, default=DEFAULT_WORKERS)
    p.add_argument("--suite", action="append", help="Chỉ chạy suite này (lặp được)")
    p.set_defaults(func=cmd_verify_all)

    inter = sub.add_parser("interleave", help="Bảng hoán vị").add_subparsers(dest="action", required=True)
    p = inter.add_parser("dump", parents=[common], help="In bảng forward và inverse dạng CSV")
    p.add_argument("--h", "--H", dest="H", type=int, required=True)
    p.add_argument("--w", "--W", dest="W", type=int, required=True)
    p.add_argument("--m", "--M", dest="M", type=int, required=True)
    p.add_argument("--csv", metavar="PATH", help="Ghi CSV ra file thay vì stdout")
    p.set_defaults(func=cmd_interleave_dump)

    analyze = sub.add_parser("analyze", help="Phân tích").add_subparsers(dest="action", required=True)
    p = analyze.add_parser("reach", parents=[common], help="Kiểm chứng trao đổi thông tin toàn cục")
    p.add_argument("--h", "--H", dest="H", type=int, required=True)
    p.add_argument("--w", "--W", dest="W", type=int, required=True)
    p.add_argument("--m", "--M", dest="M", type=int, required=True)
    p.add_argument("--k", "--K", dest="K", type=int, required=True)
    p.add_argument("--mode", choices=[m.value for m in ConvRadiusMode], default="lemma")
    p.add_argument("--expect-pass", action="store_true", help="Exit code 1 nếu verifier thất bại")
    p.set_defaults(func=cmd_analyze_reach)

    p = analyze.add_parser("cost", parents=[common], help="FLOPs và số tham số")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="T")
    p.add_argument("--res", type=int, default=224)
    p.add_argument("--config", metavar="PATH", help="ModelConfig JSON")
    p.add_argument("--csv", metavar="PATH")
    p.set_defaults(func=cmd_analyze_cost)

    model = sub.add_parser("model", help="Mô hình").add_subparsers(dest="action", required=True)
    p = model.add_parser("describe", parents=[common], help="Bảng cấu hình từng stage")
    p.add_argument("--variant", choices=sorted(VARIANTS), default="T")
    p.add_argument("--res", type=int, default=224)
    p.add_argument("--config", metavar="PATH")
    p.set_defaults(func=cmd_model_describe)

    for name, func in (("train-toy", cmd_train_toy), ("transfer-check", cmd_transfer_check)):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--res", type=int, default=DEFAULT_TOY_RESOLUTION)
        p.add_argument("--steps", type=int, default=DEFAULT_STEPS)
        p.add_argument("--lr", type=float, default=DEFAULT_LR)
        p.add_argument("--classes", type=int, default=4)
        p.add_argument("--samples", type=int, default=8, help="Số ảnh mỗi lớp")
        p.add_argument("--noise", type=float, default=0.0)
        p.add_argument("--config", metavar="PATH")
        p.set_defaults(func=func)
        if name == "train-toy":
            p.add_argument("--save", metavar="PATH", help="Ghi trọng số (định dạng IWTS)")
        else:
            p.add_argument("--to-res", type=int, default=DEFAULT_TRANSFER_RESOLUTION)
            p.add_argument("--weights", metavar="PATH", help="Dùng trọng số đã lưu thay vì huấn luyện")

    causal = sub.add_parser("causal1d", help="Bản 1D nhân quả").add_subparsers(dest="action", required=True)
    p = causal.add_parser("check", parents=[common], help="Kiểm tra Jacobian nhân quả")
    p.add_argument("--n", "--N", dest="N", type=int, default=16)
    p.add_argument("--m", "--M", dest="M", type=int, default=4)
    p.add_argument("--k", "--K", dest="K", type=int, default=3)
    p.add_argument("--local-mode", choices=("conv", "window"), default="conv")
    p.set_defaults(func=cmd_causal1d_check)

    p = sub.add_parser("bench", parents=[common], help="Micro-benchmark CPU")
    p.add_argument("--op", choices=BENCH_OPS, required=True)
    p.add_argument("--sizes", type=int, nargs="+")
    p.add_argument("--repeats", type=int, default=DEFAULT_REPEATS)
    p.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    try:
        report = args.func(args)
    except IwinError as exc:
        logger.error("%s: %s", type(exc).__name__, exc)
        console.print(f"[red]{type(exc).__name__}:[/red] {exc}")
        if args.json:
            command = " ".join(filter(None, (args.command, getattr(args, "action", None))))
            aborted = RunReport(command, config={"argv": list(sys.argv[1:] if argv is None else argv)})
            aborted.errors.append(f"{type(exc).__name__}: {exc}")
            aborted.to_json(args.json)
        return EXIT_USAGE
    if args.json:
        report.to_json(args.json)
        logger.info("report written to %s", Path(args.json).resolve())
    return EXIT_OK if report.passed else EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
