"""
Module chứa đại số hoán vị RTR (Reshape-Transpose-Reshape)

rearrange đưa token (i, j) tới vị trí
    i' = (i mod H_g) * M + floor(i / H_g),  j' tương tự với W_g,
sau đó các ô M x M liền nhau chính là các cửa sổ xen kẽ. restore là nghịch đảo.
Có hai cách cài đặt cho cùng một phép hoán vị: chuỗi reshape/transpose (nhanh)
và gather theo công thức chỉ số (dùng làm oracle).
"""

from typing import Callable, List, Optional, Tuple

import numpy as np

from app.errors import LayoutError
from app.models import IndexMap, InterleavePath, Position, WindowLayout
from app.tensor import Tensor
from app.tensor.ops import rearrange as pattern_rearrange, take

PermuteFn = Callable[[Tensor, WindowLayout], Tensor]


def check_feature_map(x: Tensor, layout: WindowLayout) -> None:
    if x.ndim != 4 or x.shape[1:3] != (layout.H, layout.W):
        raise LayoutError(f"feature map {x.shape} does not match layout {layout.H}x{layout.W}")


# ---------------------------------------------------------------------------
# Đường nhanh: reshape - transpose - reshape
# ---------------------------------------------------------------------------

def rearrange(x: Tensor, layout: WindowLayout) -> Tensor:
    """Hoán vị [B, H, W, C] để mỗi ô M x M gom các token cách nhau H_g (W_g)"""
    check_feature_map(x, layout)
    B, H, W, C = x.shape
    x = x.reshape(B, -1, layout.H_g, W, C).swapaxes(1, 2).reshape(B, -1, W, C)
    x = x.reshape(B, H, -1, layout.W_g, C).swapaxes(2, 3).reshape(B, H, -1, C)
    return x


def restore(x: Tensor, layout: WindowLayout) -> Tensor:
    """Nghịch đảo của rearrange"""
    check_feature_map(x, layout)
    B, H, W, C = x.shape
    x = x.reshape(B, H, layout.W_g, -1, C).swapaxes(2, 3).reshape(B, H, -1, C)
    x = x.reshape(B, layout.H_g, -1, W, C).swapaxes(1, 2).reshape(B, -1, W, C)
    return x


# ---------------------------------------------------------------------------
# Đường công thức: gather theo bảng chỉ số
# ---------------------------------------------------------------------------

def forward_rows(n: int, grid: int, window: int) -> np.ndarray:
    i = np.arange(n)
    return (i % grid) * window + i // grid


def inverse_rows(n: int, grid: int, window: int) -> np.ndarray:
    i = np.arange(n)
    return (i % window) * grid + i // window


def index_map(layout: WindowLayout) -> IndexMap:
    return IndexMap(
        layout=layout,
        rows=forward_rows(layout.H, layout.H_g, layout.M),
        cols=forward_rows(layout.W, layout.W_g, layout.M),
        inv_rows=inverse_rows(layout.H, layout.H_g, layout.M),
        inv_cols=inverse_rows(layout.W, layout.W_g, layout.M),
    )


def rearrange_by_index(x: Tensor, layout: WindowLayout) -> Tensor:
    # out[i'] = x[inverse(i')]
    check_feature_map(x, layout)
    imap = index_map(layout)
    return take(take(x, imap.inv_rows, axis=1), imap.inv_cols, axis=2)


def restore_by_index(x: Tensor, layout: WindowLayout) -> Tensor:
    check_feature_map(x, layout)
    imap = index_map(layout)
    return take(take(x, imap.rows, axis=1), imap.cols, axis=2)


def permutation_pair(path: InterleavePath) -> Tuple[PermuteFn, PermuteFn]:
    """(rearrange, restore) theo đường cài đặt được chọn"""
    if path is InterleavePath.INDEX:
        return rearrange_by_index, restore_by_index
    return rearrange, restore


# ---------------------------------------------------------------------------
# Chia / ghép cửa sổ
# ---------------------------------------------------------------------------

def window_partition(x: Tensor, layout: WindowLayout) -> Tensor:
    """[B, H, W, C] -> [B * H_g * W_g, M * M, C], cửa sổ và token theo row-major"""
    check_feature_map(x, layout)
    return pattern_rearrange(x, 'b (hg m1) (wg m2) c -> (b hg wg) (m1 m2) c',
                             hg=layout.H_g, wg=layout.W_g)


def window_merge(w: Tensor, layout: WindowLayout) -> Tensor:
    """Nghịch đảo của window_partition"""
    if w.ndim != 3 or w.shape[1] != layout.M * layout.M or w.shape[0] % layout.num_windows:
        raise LayoutError(f"window tensor {w.shape} inconsistent with {layout}")
    return pattern_rearrange(w, '(b hg wg) (m1 m2) c -> b (hg m1) (wg m2) c',
                             hg=layout.H_g, wg=layout.W_g, m1=layout.M, m2=layout.M)


# ---------------------------------------------------------------------------
# Luật coset
# ---------------------------------------------------------------------------

def window_of(pos: Position, layout: WindowLayout) -> Position:
    """Cửa sổ xen kẽ (hàng, cột) chứa vị trí gốc pos"""
    layout.check_position(pos)
    return pos[0] % layout.H_g, pos[1] % layout.W_g


def same_window(p1: Position, p2: Position, layout: WindowLayout) -> bool:
    return window_of(p1, layout) == window_of(p2, layout)


def window_members(pos: Position, layout: WindowLayout) -> List[Position]:
    """Mọi vị trí cùng cửa sổ xen kẽ với pos"""
    r, c = window_of(pos, layout)
    return [(r + a * layout.H_g, c + b * layout.W_g)
            for a in range(layout.M) for b in range(layout.M)]


def dump_index_table(layout: WindowLayout, imap: Optional[IndexMap] = None,
                     inverse: bool = False) -> List[Tuple[int, int, int, int]]:
    """
    Các dòng (nguồn, đích) của ánh xạ chỉ số, duyệt nguồn theo row-major.

    forward: (i, j, i', j'); inverse: (i', j', i, j).
    """
    imap = imap or index_map(layout)
    step = imap.inverse if inverse else imap.forward
    return [(i, j) + step((i, j)) for i, j in layout.positions()]
