"""
Module chứa các báo cáo: reachability, chi phí, synthetic task và RunReport
"""

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from app.models.layout import Position, WindowLayout


class ConvRadiusMode(Enum):
    LEMMA = "lemma"        # |delta| <= K
    PHYSICAL = "physical"  # |delta| <= K // 2


# Header mô tả cách đọc kết quả của verifier
REACHABILITY_READING = (
    "union graph of one block: attention edges (same interleaved window) and conv edges "
    "(Chebyshev distance <= radius); a pair passes when a path of at most one attention "
    "hop and one conv hop, in either order, connects it"
)


@dataclass(frozen=True)
class ReachabilityWitness:
    p1: Position
    p2: Position
    p3: Position
    hops: Tuple[str, str] = ("attn", "conv")


@dataclass
class ReachabilityReport:
    layout: WindowLayout
    kernel: int
    mode: ConvRadiusMode
    radius: int
    passed: bool
    pairs_checked: int
    diameter: Optional[int]
    witness_certified: bool
    witnesses: List[ReachabilityWitness] = field(default_factory=list)
    counterexample: Optional[Tuple[Position, Position]] = None
    reading: str = REACHABILITY_READING

    def to_dict(self) -> Dict[str, Any]:
        return {
            "reading": self.reading,
            "H": self.layout.H, "W": self.layout.W, "M": self.layout.M,
            "H_g": self.layout.H_g, "W_g": self.layout.W_g,
            "K": self.kernel, "mode": self.mode.value, "radius": self.radius,
            "passed": self.passed,
            "pairs_checked": self.pairs_checked,
            "diameter": self.diameter,
            "witness_certified": self.witness_certified,
            "witnesses": [asdict(w) for w in self.witnesses],
            "counterexample": list(self.counterexample) if self.counterexample else None,
        }


@dataclass(frozen=True)
class ModuleFlops:
    """Các số hạng chi phí của unified module (attention + conv) trên một stage"""

    qkv: int
    attn_core: int
    out_proj: int
    conv: int
    swin_total: int

    @property
    def total(self) -> int:
        return self.qkv + self.attn_core + self.out_proj + self.conv

    @property
    def overhead_ratio(self) -> float:
        """(O_Iwin - O_Swin) / O_Swin"""
        return (self.total - self.swin_total) / self.swin_total


@dataclass(frozen=True)
class StageCost:
    stage: int
    resolution: int
    dim: int
    depth: int
    flops: int
    params: int
    module: ModuleFlops


@dataclass
class CostReport:
    variant: str
    resolution: int
    window: int
    flops: int
    params: int
    stages: List[StageCost]
    embed_flops: int
    downsample_flops: int
    head_flops: int
    reference_flops_g: Optional[float] = None
    reference_params_m: Optional[float] = None

    @property
    def gflops(self) -> float:
        return self.flops / 1e9

    @property
    def mparams(self) -> float:
        return self.params / 1e6

    @property
    def flops_delta(self) -> Optional[float]:
        if self.reference_flops_g is None:
            return None
        return (self.gflops - self.reference_flops_g) / self.reference_flops_g

    @property
    def params_delta(self) -> Optional[float]:
        if self.reference_params_m is None:
            return None
        return (self.mparams - self.reference_params_m) / self.reference_params_m

    def to_dict(self) -> Dict[str, Any]:
        return {
            "variant": self.variant, "resolution": self.resolution, "window": self.window,
            "flops": self.flops, "params": self.params,
            "gflops": round(self.gflops, 3), "mparams": round(self.mparams, 3),
            "embed_flops": self.embed_flops, "downsample_flops": self.downsample_flops,
            "head_flops": self.head_flops,
            "reference": {"gflops": self.reference_flops_g, "mparams": self.reference_params_m,
                          "flops_delta": self.flops_delta, "params_delta": self.params_delta},
            "stages": [
                {"stage": s.stage, "resolution": s.resolution, "dim": s.dim, "depth": s.depth,
                 "flops": s.flops, "params": s.params,
                 "module": dict(asdict(s.module), total=s.module.total)}
                for s in self.stages
            ],
        }

    def to_csv_rows(self) -> List[List[Any]]:
        rows = [["stage", "resolution", "dim", "depth", "flops", "params"]]
        for s in self.stages:
            rows.append([s.stage, s.resolution, s.dim, s.depth, s.flops, s.params])
        rows.append(["total", self.resolution, "", "", self.flops, self.params])
        rows.append(["reference", self.resolution, "", "",
                     self.reference_flops_g if self.reference_flops_g is None else self.reference_flops_g * 1e9,
                     self.reference_params_m if self.reference_params_m is None else self.reference_params_m * 1e6])
        return rows


@dataclass(frozen=True)
class SyntheticTask:
    """Bài toán phân loại ảnh sinh từ seed"""

    num_classes: int = 4
    image_size: int = 64
    seed: int = 0
    kind: str = "blocks"
    noise: float = 0.0
    samples_per_class: int = 8


@dataclass
class RunReport:
    command: str
    config: Dict[str, Any] = field(default_factory=dict)
    metrics: Dict[str, Any] = field(default_factory=dict)
    checks: Dict[str, bool] = field(default_factory=dict)
    wall_clock: float = 0.0
    errors: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors and all(self.checks.values())

    def check(self, name: str, ok: bool) -> bool:
        self.checks[name] = bool(ok)
        return bool(ok)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config": self.config,
            "metrics": self.metrics,
            "checks": dict(self.checks),
            "passed": self.passed,
            "wall_clock": self.wall_clock,
            "errors": list(self.errors),
        }

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, default=str) + "\n",
                              encoding="utf-8")
