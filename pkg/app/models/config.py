"""
Module chứa cấu hình block và mô hình bốn stage, cùng hàm build_variant
"""

import json
from dataclasses import asdict, dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from app.errors import ConfigError, LayoutError
from app.models.layout import WindowLayout


class Structure(Enum):
    """Cách nối nhánh attention và conv trong block"""
    S1 = "S1"  # song song, cộng chung một residual
    S2 = "S2"  # hai residual độc lập nối tiếp
    S3 = "S3"  # conv -> LN -> attention


class PositionMode(Enum):
    NONE = "none"
    ABSOLUTE = "absolute"
    RELATIVE = "relative"


class AttentionMode(Enum):
    INTERLEAVED = "interleaved"
    WINDOW = "window"
    NONE = "none"


class DownsampleMethod(Enum):
    CONV = "conv"
    AVGPOOL = "avgpool"
    PATCH_MERGING = "patch_merging"
    DWCONV = "dwconv"


class InterleavePath(Enum):
    RTR = "rtr"      # reshape-transpose-reshape
    INDEX = "index"  # gather theo công thức chỉ số


# Cấu hình mặc định
DEFAULT_MLP_RATIO = 4.0
DEFAULT_KERNEL = 3
PATCH_SIZE = 4
NUM_STAGES = 4
WINDOW_BY_RESOLUTION = {224: 7, 384: 12, 512: 16, 1024: 16}

# name -> (C0, depths, heads)
VARIANTS: Dict[str, Tuple[int, Tuple[int, ...], Tuple[int, ...]]] = {
    "T": (96, (2, 2, 6, 2), (3, 6, 12, 24)),
    "S": (96, (2, 2, 18, 2), (3, 6, 12, 24)),
    "B": (128, (2, 2, 18, 2), (4, 8, 16, 32)),
    "L": (192, (2, 2, 18, 2), (6, 12, 24, 48)),
    "tiny-test": (16, (1, 1, 1, 1), (1, 2, 4, 8)),
}
STANDARD_VARIANTS = ("T", "S", "B", "L")


@dataclass(frozen=True)
class BlockConfig:
    """Siêu tham số của một Iwin block"""

    dim: int
    num_heads: int
    window: int
    kernel: Optional[int] = DEFAULT_KERNEL
    mlp_ratio: float = DEFAULT_MLP_RATIO
    structure: Structure = Structure.S1
    position_mode: PositionMode = PositionMode.NONE
    attention_mode: AttentionMode = AttentionMode.INTERLEAVED
    pointwise: bool = False
    interleave_path: InterleavePath = InterleavePath.RTR

    def __post_init__(self):
        if self.dim < 1 or self.num_heads < 1 or self.dim % self.num_heads:
            raise ConfigError(f"num_heads {self.num_heads} must divide dim {self.dim}")
        if self.window < 1:
            raise ConfigError(f"window must be >= 1, got {self.window}")
        if self.kernel is not None and (self.kernel < 1 or self.kernel % 2 == 0):
            raise ConfigError(f"conv kernel must be odd, got {self.kernel}")
        hidden = self.dim * self.mlp_ratio
        if hidden != int(hidden) or hidden < 1:
            raise ConfigError(f"mlp_ratio {self.mlp_ratio} * dim {self.dim} is not integral")

    @property
    def head_dim(self) -> int:
        return self.dim // self.num_heads

    @property
    def hidden_dim(self) -> int:
        return int(self.dim * self.mlp_ratio)

    @property
    def has_conv(self) -> bool:
        return self.kernel is not None

    @property
    def has_attention(self) -> bool:
        return self.attention_mode is not AttentionMode.NONE


@dataclass(frozen=True)
class ModelConfig:
    """Mô tả đầy đủ kiến trúc bốn stage"""

    name: str
    resolution: int
    patch_dim: int
    depths: Tuple[int, ...]
    heads: Tuple[int, ...]
    window: int
    kernels: Tuple[Optional[int], ...] = (DEFAULT_KERNEL, DEFAULT_KERNEL, DEFAULT_KERNEL, None)
    num_classes: int = 1000
    mlp_ratio: float = DEFAULT_MLP_RATIO
    structure: Structure = Structure.S1
    position_mode: PositionMode = PositionMode.NONE
    attention_mode: AttentionMode = AttentionMode.INTERLEAVED
    downsample: DownsampleMethod = DownsampleMethod.CONV
    pointwise: bool = False
    in_chans: int = 3
    interleave_path: InterleavePath = InterleavePath.RTR

    def __post_init__(self):
        for name in ("depths", "heads", "kernels"):
            value = tuple(getattr(self, name))
            object.__setattr__(self, name, value)
            if len(value) != NUM_STAGES:
                raise ConfigError(f"{name} must have {NUM_STAGES} entries, got {len(value)}")
        if self.kernels[-1] is not None:
            raise ConfigError("stage-4 kernel must be none")
        if any(d < 1 for d in self.depths):
            raise ConfigError(f"depths must be >= 1, got {self.depths}")
        if self.num_classes < 1 or self.patch_dim < 1:
            raise ConfigError("num_classes and patch_dim must be >= 1")
        for stage in range(NUM_STAGES):
            self.block_config(stage)

    @property
    def dims(self) -> Tuple[int, ...]:
        return tuple(self.patch_dim * 2 ** s for s in range(NUM_STAGES))

    def stage_resolution(self, stage: int) -> int:
        return self.resolution // (PATCH_SIZE * 2 ** stage)

    def block_config(self, stage: int) -> BlockConfig:
        return BlockConfig(dim=self.dims[stage], num_heads=self.heads[stage], window=self.window,
                           kernel=self.kernels[stage], mlp_ratio=self.mlp_ratio,
                           structure=self.structure, position_mode=self.position_mode,
                           attention_mode=self.attention_mode, pointwise=self.pointwise,
                           interleave_path=self.interleave_path)

    def stage_layouts(self, resolution: Optional[int] = None) -> List[WindowLayout]:
        """
        Layout của từng stage; lỗi chỉ rõ stage vi phạm

        Raises:
            LayoutError: độ phân giải không chia hết cho 32 hoặc cho M ở một stage
        """
        resolution = resolution or self.resolution
        if resolution % (PATCH_SIZE * 2 ** (NUM_STAGES - 1)):
            raise LayoutError(f"resolution {resolution} must be divisible by 32")
        layouts = []
        for stage in range(NUM_STAGES):
            side = resolution // (PATCH_SIZE * 2 ** stage)
            try:
                layouts.append(WindowLayout(side, side, self.window))
            except LayoutError as exc:
                raise LayoutError(str(exc), stage=stage + 1) from None
        return layouts

    def with_resolution(self, resolution: int, window: Optional[int] = None) -> "ModelConfig":
        """
        Cùng kiến trúc, đổi độ phân giải và kích thước cửa sổ.

        Không truyền window: dùng quy tắc cửa sổ theo độ phân giải; độ phân giải
        ngoài bảng (ví dụ 448) thì M co giãn theo tỉ lệ, 224 / M=7 -> 448 / M=14.
        """
        if window is None:
            if self.name in STANDARD_VARIANTS and resolution not in WINDOW_BY_RESOLUTION:
                window, rem = divmod(self.window * resolution, self.resolution)
                if rem or window < 1:
                    raise ConfigError(f"resolution {resolution} not in {sorted(WINDOW_BY_RESOLUTION)} "
                                      f"and window {self.window} does not scale from {self.resolution}")
            else:
                window = window_for_resolution(self.name, resolution)
        return replace(self, resolution=resolution, window=window)

    # --- JSON ---

    def to_dict(self) -> dict:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, Enum):
                data[key] = value.value
            elif isinstance(value, tuple):
                data[key] = list(value)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        enums = {"structure": Structure, "position_mode": PositionMode,
                 "attention_mode": AttentionMode, "downsample": DownsampleMethod,
                 "interleave_path": InterleavePath}
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        kwargs = dict(data)
        for key, enum_cls in enums.items():
            if key in kwargs:
                try:
                    kwargs[key] = enum_cls(kwargs[key])
                except ValueError:
                    raise ConfigError(f"invalid {key}: {kwargs[key]!r}") from None
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_json(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def from_json(cls, path: Union[str, Path]) -> "ModelConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def window_for_resolution(name: str, resolution: int) -> int:
    """Quy tắc cửa sổ: 7/12/16/16 cho 224/384/512/1024; tiny-test dùng resolution / 32"""
    if name in STANDARD_VARIANTS:
        if resolution not in WINDOW_BY_RESOLUTION:
            raise ConfigError(f"resolution {resolution} not in {sorted(WINDOW_BY_RESOLUTION)}")
        return WINDOW_BY_RESOLUTION[resolution]
    if resolution % 32:
        raise ConfigError(f"resolution {resolution} must be divisible by 32")
    return resolution // 32


def build_variant(name: str, resolution: int = 224, **overrides) -> ModelConfig:
    """
    Trả về cấu hình chuẩn của biến thể

    Args:
        name: T, S, B, L hoặc tiny-test
        resolution: 224/384/512/1024 với T, S, B, L
        overrides: ghi đè field bất kỳ của ModelConfig (ablation)
    """
    if name not in VARIANTS:
        raise ConfigError(f"unknown variant '{name}', expected one of {sorted(VARIANTS)}")
    patch_dim, depths, heads = VARIANTS[name]
    params = dict(name=name, resolution=resolution, patch_dim=patch_dim, depths=depths,
                  heads=heads, window=window_for_resolution(name, resolution))
    if name == "tiny-test":
        params["num_classes"] = 4
    params.update(overrides)
    return ModelConfig(**params)
