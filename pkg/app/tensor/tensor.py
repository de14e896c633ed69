"""
Module chứa Tensor, GradTape và hàm backward

Tensor là giá trị bất biến (buffer numpy chỉ đọc, layout row-major, channels-last).
Mọi phép toán chạy trong một GradTape đang mở sẽ được ghi lại để tính
gradient ngược (reverse-mode).
"""

import logging
import threading
from typing import Callable, Dict, Iterator, List, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from app.errors import ContractError, DimensionError, ShapeError

logger = logging.getLogger(__name__)

# 64-bit cho mọi kiểm tra; 32-bit chỉ dùng cho bench
DEFAULT_DTYPE = np.float64

ArrayLike = Union["Tensor", np.ndarray, float, int, Sequence]
VjpFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_local = threading.local()


def _tape_stack() -> List["GradTape"]:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = []
        _local.stack = stack
    return stack


def active_tape() -> Optional["GradTape"]:
    """Tape đang mở trên thread hiện tại (nếu có)"""
    stack = _tape_stack()
    return stack[-1] if stack else None


class Tensor:
    """Tensor dày đặc với ngữ nghĩa giá trị"""

    __slots__ = ("data", "__weakref__")

    def __init__(self, data: ArrayLike, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.array(data, dtype=dtype or DEFAULT_DTYPE)
        self.data = _freeze(arr)

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "Tensor":
        out = cls.__new__(cls)
        out.data = _freeze(np.asarray(arr))
        return out

    # --- thuộc tính ---

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        """Bản sao ghi được của dữ liệu"""
        return np.array(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"expected a scalar tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype})"

    def __len__(self):
        return self.shape[0]

    # --- toán tử ---

    def __add__(self, other): return add(self, other)
    def __radd__(self, other): return add(other, self)
    def __sub__(self, other): return sub(self, other)
    def __rsub__(self, other): return sub(other, self)
    def __mul__(self, other): return mul(self, other)
    def __rmul__(self, other): return mul(other, self)
    def __truediv__(self, other): return div(self, other)
    def __rtruediv__(self, other): return div(other, self)
    def __neg__(self): return neg(self)
    def __matmul__(self, other): return matmul(self, other)
    def __getitem__(self, key): return getitem(self, key)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def swapaxes(self, a: int, b: int) -> "Tensor":
        return swapaxes(self, a, b)

    def transpose(self, *axes) -> "Tensor":
        return transpose(self, axes or None)

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        return tensor_sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        return mean(self, axis, keepdims)


def _freeze(arr: np.ndarray) -> np.ndarray:
    if any(extent < 1 for extent in arr.shape):
        raise ShapeError(f"tensor extents must be >= 1, got {arr.shape}")
    if arr.flags.writeable:
        arr.setflags(write=False)
    return arr


def as_tensor(value: ArrayLike, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(value, dtype=dtype)


class _Record(NamedTuple):
    name: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    vjp: VjpFn


class GradTape:
    """
    Băng ghi các phép toán khả vi theo đúng thứ tự thực thi.

    Dùng như context manager:

        with GradTape() as tape:
            tape.watch(w)
            loss = (x @ w).sum()
        grads = backward(tape, loss)
    """

    def __init__(self):
        self.records: List[_Record] = []
        self.leaves: List[Tensor] = []
        self._tracked = set()

    def __enter__(self) -> "GradTape":
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        return False

    def watch(self, *tensors: Tensor) -> None:
        """Đăng ký các tensor lá cần gradient"""
        for t in tensors:
            if id(t) not in self._tracked:
                self._tracked.add(id(t))
                self.leaves.append(t)

    def is_tracked(self, t: Tensor) -> bool:
        return id(t) in self._tracked

    def record(self, name: str, output: Tensor, inputs: Tuple[Tensor, ...], vjp: VjpFn) -> None:
        if any(id(t) in self._tracked for t in inputs):
            self.records.append(_Record(name, output, inputs, vjp))
            self._tracked.add(id(output))

    def __len__(self):
        return len(self.records)

    def __iter__(self) -> Iterator[_Record]:
        return iter(self.records)


def backward(tape: GradTape, loss: Tensor) -> Dict[Tensor, Tensor]:
    """
    Lan truyền ngược từ loss vô hướng.

    Returns:
        dict {leaf: gradient}; lá không dùng tới nhận gradient 0
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not tape.is_tracked(loss):
        raise ContractError("loss was not produced under this tape")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for rec in reversed(tape.records):
        g = grads.get(id(rec.output))
        if g is None:
            continue
        for inp, g_in in zip(rec.inputs, rec.vjp(g)):
            if g_in is None or not tape.is_tracked(inp):
                continue
            g_in = unbroadcast(g_in, inp.shape)
            prev = grads.get(id(inp))
            grads[id(inp)] = g_in if prev is None else prev + g_in

    return {
        leaf: Tensor._wrap(np.array(grads[id(leaf)]) if id(leaf) in grads else np.zeros_like(leaf.data))
        for leaf in tape.leaves
    }


def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Cộng dồn các trục đã broadcast để gradient khớp với shape gốc"""
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


def make(name: str, out: np.ndarray, inputs: Tuple[Tensor, ...], vjp: VjpFn) -> Tensor:
    """Bọc kết quả numpy thành Tensor và ghi vào tape đang mở"""
    result = Tensor._wrap(out)
    tape = active_tape()
    if tape is not None:
        tape.record(name, result, inputs, vjp)
    return result


def _binary_shape(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(op, a.shape, b.shape) from None


# ---------------------------------------------------------------------------
# Phép toán cơ bản
# ---------------------------------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _binary_shape("add", a, b)
    return make("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _binary_shape("sub", a, b)
    return make("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _binary_shape("mul", a, b)
    return make("mul", a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _pair(a, b)
    _binary_shape("div", a, b)
    out = a.data / b.data
    return make("div", out, (a, b), lambda g: (g / b.data, -g * out / b.data))


def neg(a: Tensor) -> Tensor:
    return make("neg", -a.data, (a,), lambda g: (-g,))


def _pair(a: ArrayLike, b: ArrayLike) -> Tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, as_tensor(b, like=a)
    b = as_tensor(b)
    return as_tensor(a, like=b), b


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Tích ma trận theo batch: [..., m, k] x [..., k, n] -> [..., m, n]"""
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError("matmul", a.shape, b.shape)
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise DimensionError("matmul", a.shape, b.shape) from None

    def vjp(g):
        return g @ np.swapaxes(b.data, -1, -2), np.swapaxes(a.data, -1, -2) @ g

    return make("matmul", np.matmul(a.data, b.data), (a, b), vjp)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise DimensionError("reshape", a.shape, shape) from None
    return make("reshape", out, (a,), lambda g: (g.reshape(a.shape),))


def swapaxes(a: Tensor, ax1: int, ax2: int) -> Tensor:
    return make("swapaxes", np.swapaxes(a.data, ax1, ax2), (a,),
                lambda g: (np.swapaxes(g, ax1, ax2),))


def transpose(a: Tensor, axes: Optional[Sequence[int]] = None) -> Tensor:
    axes = tuple(axes) if axes is not None else tuple(reversed(range(a.ndim)))
    inverse = tuple(np.argsort(axes))
    return make("transpose", np.transpose(a.data, axes), (a,),
                lambda g: (np.transpose(g, inverse),))


def getitem(a: Tensor, key) -> Tensor:
    out = np.array(a.data[key])

    def vjp(g):
        full = np.zeros_like(a.data)
        np.add.at(full, key, g)
        return (full,)

    return make("getitem", out, (a,), vjp)


def tensor_sum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = np.sum(a.data, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make("sum", np.asarray(out), (a,), vjp)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        count = a.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        count = int(np.prod([a.shape[ax] for ax in axes]))
    return tensor_sum(a, axis, keepdims) / float(count)
