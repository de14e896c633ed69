"""
Module chứa các phép toán mạng nơ-ron khả vi trên Tensor

Mỗi hàm nhận và trả về Tensor, đồng thời ghi quy tắc vector-Jacobian vào
GradTape đang mở.
"""

import math
from typing import Optional, Sequence, Tuple

import einops
import numpy as np
from scipy import special

from app.errors import ConfigError, DimensionError, NumericError, ShapeError
from app.tensor.tensor import Tensor, make, matmul

DEFAULT_EPS = 1e-5

Padding = Tuple[Tuple[int, int], Tuple[int, int]]


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make("exp", out, (x,), lambda g: (g * out,))


def sqrt(x: Tensor) -> Tensor:
    if np.any(x.data < 0):
        raise NumericError("sqrt of a negative value")
    out = np.sqrt(x.data)
    return make("sqrt", out, (x,), lambda g: (g / (2.0 * out),))


def softmax_lastdim(x: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
    """
    Softmax theo trục cuối, trừ max trước khi lấy exp.

    Args:
        mask: mảng bool broadcast được tới x; ô False có xác suất đúng bằng 0.
              Mỗi hàng phải còn ít nhất một ô True.
    """
    if not np.all(np.isfinite(x.data)):
        raise NumericError("softmax input contains non-finite values")
    z = x.data if mask is None else np.where(mask, x.data, -np.inf)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    p = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=-1, keepdims=True)),)

    return make("softmax", p, (x,), vjp)


def log_softmax_lastdim(x: Tensor) -> Tensor:
    if not np.all(np.isfinite(x.data)):
        raise NumericError("log_softmax input contains non-finite values")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))

    def vjp(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return make("log_softmax", out, (x,), vjp)


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Trung bình negative log-likelihood của nhãn nguyên theo logits [B, K]"""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError("cross_entropy", logits.shape, labels.shape)
    picked = log_softmax_lastdim(logits)[np.arange(len(labels)), labels]
    return -picked.mean()


def layernorm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = DEFAULT_EPS) -> Tensor:
    """LayerNorm theo trục kênh (trục cuối): gamma * x_hat + beta"""
    if eps <= 0:
        raise ConfigError(f"layernorm eps must be > 0, got {eps}")
    channels = x.shape[-1]
    if gamma.shape != (channels,) or beta.shape != (channels,):
        raise DimensionError("layernorm", x.shape, gamma.shape)

    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv
    out = x_hat * gamma.data + beta.data

    def vjp(g):
        g_hat = g * gamma.data
        gx = inv * (g_hat
                    - g_hat.mean(axis=-1, keepdims=True)
                    - x_hat * (g_hat * x_hat).mean(axis=-1, keepdims=True))
        return gx, g * x_hat, g

    return make("layernorm", out, (x, gamma, beta), vjp)


def gelu(x: Tensor) -> Tensor:
    """GELU chính xác, x * Phi(x)"""
    cdf = 0.5 * (1.0 + special.erf(x.data / math.sqrt(2.0)))
    pdf = np.exp(-0.5 * x.data * x.data) / math.sqrt(2.0 * math.pi)

    def vjp(g):
        return (g * (cdf + x.data * pdf),)

    return make("gelu", x.data * cdf, (x,), vjp)


def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """x @ W (+ b) trên trục cuối"""
    if x.shape[-1] != weight.shape[0]:
        raise DimensionError("linear", x.shape, weight.shape)
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def take(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """Gather theo một trục; gradient được scatter ngược có cộng dồn"""
    indices = np.asarray(indices, dtype=np.int64)
    axis = axis % x.ndim

    def vjp(g):
        full = np.zeros_like(x.data)
        key = (slice(None),) * axis + (indices,)
        np.add.at(full, key, g)
        return (full,)

    return make("take", np.take(x.data, indices, axis=axis), (x,), vjp)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = tuple(tensors)
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return make("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, vjp)


def rearrange(x: Tensor, pattern: str, **axes_lengths: int) -> Tensor:
    """
    einops.rearrange dạng khả vi.

    Chỉ nhận pattern hoán vị / reshape thuần, nên gradient là chính hoán vị
    chỉ số đó chạy ngược.
    """
    out = einops.rearrange(x.data, pattern, **axes_lengths)
    source = einops.rearrange(np.arange(x.size).reshape(x.shape), pattern, **axes_lengths)
    if source.size != x.size:
        raise ShapeError(f"rearrange pattern '{pattern}' is not a permutation")

    def vjp(g):
        full = np.empty(x.size, dtype=g.dtype)
        full[source.reshape(-1)] = g.reshape(-1)
        return (full.reshape(x.shape),)

    return make("rearrange", np.ascontiguousarray(out), (x,), vjp)


def extract_patches(x: Tensor, kernel: Tuple[int, int], stride: Tuple[int, int] = (1, 1),
                    padding: Padding = ((0, 0), (0, 0))) -> Tensor:
    """
    Các patch trượt (zero padding) của feature map channels-last.

    [B, H, W, C] -> [B, Ho, Wo, kh, kw, C]; mọi convolution trong package đều là
    phép này rồi co trục.
    """
    if x.ndim != 4:
        raise ShapeError(f"extract_patches expects [B, H, W, C], got {x.shape}")
    kh, kw = kernel
    sh, sw = stride
    (pt, pb), (pl, pr) = padding
    padded = np.pad(x.data, ((0, 0), (pt, pb), (pl, pr), (0, 0)))
    if padded.shape[1] < kh or padded.shape[2] < kw:
        raise ShapeError(f"kernel {kernel} larger than padded input {padded.shape[1:3]}")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (kh, kw), axis=(1, 2))
    windows = windows[:, ::sh, ::sw]
    out_h, out_w = windows.shape[1], windows.shape[2]
    out = np.ascontiguousarray(np.moveaxis(windows, 3, 5))

    def vjp(g):
        full = np.zeros_like(padded)
        for a in range(kh):
            for b in range(kw):
                full[:, a:a + sh * out_h:sh, b:b + sw * out_w:sw, :] += g[:, :, :, a, b, :]
        return (full[:, pt:pt + x.shape[1], pl:pl + x.shape[2], :],)

    return make("extract_patches", out, (x,), vjp)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor], stride: int, padding: int) -> Tensor:
    """Convolution thường; weight [K, K, C_in, C_out]"""
    k = weight.shape[0]
    if weight.ndim != 4 or weight.shape[1] != k or weight.shape[2] != x.shape[-1]:
        raise DimensionError("conv2d", x.shape, weight.shape)
    patches = extract_patches(x, (k, k), (stride, stride), ((padding, padding), (padding, padding)))
    batch, out_h, out_w = patches.shape[:3]
    cols = patches.reshape(batch, out_h, out_w, k * k * x.shape[-1])
    return linear(cols, weight.reshape(k * k * x.shape[-1], weight.shape[-1]), bias)
