"""
Module chứa các bộ tham số (trọng số) của layer, block và backbone

Trọng số là Tensor bất biến; cập nhật trọng số tạo ra một bộ tham số mới
(xem map_parameters).
"""

import dataclasses
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Tuple

import numpy as np

from app.errors import ConfigError, DimensionError
from app.models.config import (BlockConfig, DownsampleMethod, ModelConfig, PositionMode,
                               Structure, PATCH_SIZE)
from app.tensor import Tensor

INIT_STD = 0.02
DOWNSAMPLE_KERNEL = 3


@dataclass(frozen=True)
class LayerNormParams:
    gamma: Tensor
    beta: Tensor


@dataclass(frozen=True)
class LinearParams:
    weight: Tensor  # [in, out]
    bias: Optional[Tensor] = None


@dataclass(frozen=True)
class AttentionParams:
    """W_Q, W_K, W_V, W_O (C x C, có bias) và bảng relative bias tùy chọn"""

    num_heads: int
    q: LinearParams
    k: LinearParams
    v: LinearParams
    o: LinearParams
    rel_bias: Optional[Tensor] = None  # [(2M-1)^2, heads]

    def __post_init__(self):
        dim = self.dim
        if dim % self.num_heads:
            raise ConfigError(f"num_heads {self.num_heads} must divide dim {dim}")
        for proj in (self.q, self.k, self.v, self.o):
            if proj.weight.shape != (dim, dim):
                raise DimensionError("attention projection", proj.weight.shape, (dim, dim))

    @property
    def dim(self) -> int:
        return self.q.weight.shape[0]

    @property
    def head_dim(self) -> int:
        return self.dim // self.num_heads

    @property
    def rel_window(self) -> Optional[int]:
        """M suy ra từ bảng relative bias"""
        if self.rel_bias is None:
            return None
        side = int(round(np.sqrt(self.rel_bias.shape[0])))
        return (side + 1) // 2


@dataclass(frozen=True)
class DepthwiseConvParams:
    """Kernel K x K riêng cho từng kênh, không trộn kênh (trừ khi bật pointwise)"""

    weight: Tensor  # [K, K, C]
    bias: Tensor    # [C]
    pointwise: Optional[LinearParams] = None

    def __post_init__(self):
        k = self.weight.shape[0]
        if self.weight.ndim != 3 or self.weight.shape[1] != k:
            raise DimensionError("depthwise kernel", self.weight.shape, (k, k, self.bias.shape[0]))
        if k % 2 == 0:
            raise ConfigError(f"depthwise kernel size must be odd, got {k}")
        if self.bias.shape != (self.weight.shape[2],):
            raise DimensionError("depthwise bias", self.bias.shape, (self.weight.shape[2],))

    @property
    def kernel_size(self) -> int:
        return self.weight.shape[0]

    @property
    def channels(self) -> int:
        return self.weight.shape[2]


@dataclass(frozen=True)
class ConvParams:
    """Convolution thường; weight [K, K, C_in, C_out]"""

    weight: Tensor
    bias: Optional[Tensor]
    stride: int
    padding: int


@dataclass(frozen=True)
class MlpParams:
    fc1: LinearParams
    fc2: LinearParams


@dataclass(frozen=True)
class BlockWeights:
    norm1: LayerNormParams
    attn: Optional[AttentionParams]
    conv: Optional[DepthwiseConvParams]
    norm2: LayerNormParams
    mlp: MlpParams
    norm_extra: Optional[LayerNormParams] = None  # S2: LN của nhánh conv; S3: LN giữa conv và attention


@dataclass(frozen=True)
class DownsampleWeights:
    method: DownsampleMethod
    conv: Optional[ConvParams] = None
    depthwise: Optional[DepthwiseConvParams] = None
    proj: Optional[LinearParams] = None
    norm_in: Optional[LayerNormParams] = None
    norm: Optional[LayerNormParams] = None


@dataclass(frozen=True)
class BackboneWeights:
    patch_embed: ConvParams
    patch_norm: LayerNormParams
    stages: Tuple[Tuple[BlockWeights, ...], ...]
    downsamples: Tuple[DownsampleWeights, ...]
    norm: LayerNormParams
    head: LinearParams
    abs_pos: Optional[Tensor] = None  # [1, H/4, W/4, C0]


# ---------------------------------------------------------------------------
# Khởi tạo
# ---------------------------------------------------------------------------

def _normal(rng: np.random.Generator, *shape: int) -> Tensor:
    return Tensor(rng.normal(0.0, INIT_STD, size=shape))


def _zeros(*shape: int) -> Tensor:
    return Tensor(np.zeros(shape))


def init_layernorm(dim: int) -> LayerNormParams:
    return LayerNormParams(Tensor(np.ones(dim)), _zeros(dim))


def init_linear(rng: np.random.Generator, fan_in: int, fan_out: int, bias: bool = True) -> LinearParams:
    return LinearParams(_normal(rng, fan_in, fan_out), _zeros(fan_out) if bias else None)


def init_attention(rng: np.random.Generator, dim: int, num_heads: int,
                   rel_window: Optional[int] = None) -> AttentionParams:
    q, k, v, o = (init_linear(rng, dim, dim) for _ in range(4))
    rel_bias = None
    if rel_window is not None:
        rel_bias = _normal(rng, (2 * rel_window - 1) ** 2, num_heads)
    return AttentionParams(num_heads, q, k, v, o, rel_bias)


def init_depthwise(rng: np.random.Generator, dim: int, kernel: int,
                   pointwise_out: Optional[int] = None) -> DepthwiseConvParams:
    pointwise = init_linear(rng, dim, pointwise_out) if pointwise_out else None
    return DepthwiseConvParams(_normal(rng, kernel, kernel, dim), _zeros(dim), pointwise)


def init_mlp(rng: np.random.Generator, dim: int, hidden: int) -> MlpParams:
    return MlpParams(init_linear(rng, dim, hidden), init_linear(rng, hidden, dim))


def init_block(rng: np.random.Generator, cfg: BlockConfig) -> BlockWeights:
    rel_window = cfg.window if cfg.position_mode is PositionMode.RELATIVE else None
    attn = init_attention(rng, cfg.dim, cfg.num_heads, rel_window) if cfg.has_attention else None
    conv = None
    if cfg.has_conv:
        conv = init_depthwise(rng, cfg.dim, cfg.kernel, cfg.dim if cfg.pointwise else None)
    norm_extra = None
    if cfg.structure is not Structure.S1 and cfg.has_conv and cfg.has_attention:
        norm_extra = init_layernorm(cfg.dim)
    return BlockWeights(norm1=init_layernorm(cfg.dim), attn=attn, conv=conv,
                        norm2=init_layernorm(cfg.dim), mlp=init_mlp(rng, cfg.dim, cfg.hidden_dim),
                        norm_extra=norm_extra)


def init_downsample(rng: np.random.Generator, method: DownsampleMethod, dim: int) -> DownsampleWeights:
    out = 2 * dim
    if method is DownsampleMethod.CONV:
        conv = ConvParams(_normal(rng, DOWNSAMPLE_KERNEL, DOWNSAMPLE_KERNEL, dim, out), _zeros(out),
                          stride=2, padding=1)
        return DownsampleWeights(method, conv=conv, norm=init_layernorm(out))
    if method is DownsampleMethod.AVGPOOL:
        return DownsampleWeights(method, proj=init_linear(rng, dim, out), norm=init_layernorm(out))
    if method is DownsampleMethod.PATCH_MERGING:
        return DownsampleWeights(method, norm_in=init_layernorm(4 * dim),
                                 proj=init_linear(rng, 4 * dim, out, bias=False))
    if method is DownsampleMethod.DWCONV:
        return DownsampleWeights(method, proj=init_linear(rng, dim, out),
                                 depthwise=init_depthwise(rng, out, DOWNSAMPLE_KERNEL),
                                 norm=init_layernorm(out))
    raise ConfigError(f"unknown downsample method {method}")


def init_backbone(cfg: ModelConfig, seed: int = 0) -> BackboneWeights:
    """Khởi tạo toàn bộ trọng số từ seed; head khởi tạo bằng 0"""
    rng = np.random.default_rng(seed)
    c0 = cfg.patch_dim
    patch_embed = ConvParams(_normal(rng, PATCH_SIZE, PATCH_SIZE, cfg.in_chans, c0), _zeros(c0),
                             stride=PATCH_SIZE, padding=0)
    abs_pos = None
    if cfg.position_mode is PositionMode.ABSOLUTE:
        side = cfg.stage_resolution(0)
        abs_pos = _normal(rng, 1, side, side, c0)

    stages: List[Tuple[BlockWeights, ...]] = []
    downsamples: List[DownsampleWeights] = []
    for stage, depth in enumerate(cfg.depths):
        block_cfg = cfg.block_config(stage)
        stages.append(tuple(init_block(rng, block_cfg) for _ in range(depth)))
        if stage < len(cfg.depths) - 1:
            downsamples.append(init_downsample(rng, cfg.downsample, cfg.dims[stage]))

    last = cfg.dims[-1]
    head = LinearParams(_zeros(last, cfg.num_classes), _zeros(cfg.num_classes))
    return BackboneWeights(patch_embed=patch_embed, patch_norm=init_layernorm(c0),
                           stages=tuple(stages), downsamples=tuple(downsamples),
                           norm=init_layernorm(last), head=head, abs_pos=abs_pos)


# ---------------------------------------------------------------------------
# Duyệt tham số
# ---------------------------------------------------------------------------

def named_parameters(obj, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
    """Duyệt mọi Tensor trong cây tham số theo thứ tự khai báo"""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            yield from named_parameters(getattr(obj, f.name), _join(prefix, f.name))
    elif isinstance(obj, (list, tuple)):
        for idx, item in enumerate(obj):
            yield from named_parameters(item, _join(prefix, str(idx)))


def map_parameters(obj, fn: Callable[[str, Tensor], Tensor], prefix: str = ""):
    """Tạo cây tham số mới với mỗi Tensor thay bằng fn(name, tensor)"""
    if isinstance(obj, Tensor):
        return fn(prefix, obj)
    if dataclasses.is_dataclass(obj):
        changes = {f.name: map_parameters(getattr(obj, f.name), fn, _join(prefix, f.name))
                   for f in dataclasses.fields(obj)}
        return dataclasses.replace(obj, **changes)
    if isinstance(obj, (list, tuple)):
        return type(obj)(map_parameters(item, fn, _join(prefix, str(idx)))
                         for idx, item in enumerate(obj))
    return obj


def load_parameters(template, tensors: Mapping[str, Tensor]):
    """Thay tham số của template bằng tensors cùng tên, kiểm tra shape"""
    def pick(name: str, current: Tensor) -> Tensor:
        if name not in tensors:
            raise ConfigError(f"missing parameter '{name}'")
        new = tensors[name]
        if new.shape != current.shape:
            raise DimensionError(f"parameter '{name}'", current.shape, new.shape)
        return new
    return map_parameters(template, pick)


def parameter_dict(obj) -> Dict[str, Tensor]:
    return dict(named_parameters(obj))


def count_parameters(obj) -> int:
    return sum(t.size for _, t in named_parameters(obj))


def _join(prefix: str, name: str) -> str:
    return f"{prefix}.{name}" if prefix else name
