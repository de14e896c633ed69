"""
Module chứa các class hình học cửa sổ: WindowLayout, IndexMap, Layout1D
"""

import math
from dataclasses import dataclass, field
from typing import Tuple

import numpy as np

from app.errors import BoundsError, LayoutError

Position = Tuple[int, int]


@dataclass(frozen=True)
class WindowLayout:
    """Lưới H x W chia thành H_g x W_g cửa sổ kích thước M x M"""

    H: int
    W: int
    M: int

    def __post_init__(self):
        if self.M < 1 or self.H < 1 or self.W < 1:
            raise LayoutError(f"extents must be >= 1, got H={self.H} W={self.W} M={self.M}")
        if self.H % self.M or self.W % self.M:
            raise LayoutError(f"window {self.M} does not divide grid {self.H}x{self.W}")

    @property
    def H_g(self) -> int:
        return self.H // self.M

    @property
    def W_g(self) -> int:
        return self.W // self.M

    @property
    def num_windows(self) -> int:
        return self.H_g * self.W_g

    @property
    def num_tokens(self) -> int:
        return self.H * self.W

    def check_position(self, pos: Position) -> None:
        i, j = pos
        if not (0 <= i < self.H and 0 <= j < self.W):
            raise BoundsError(f"position {pos} outside {self.H}x{self.W} grid")

    def positions(self):
        """Duyệt mọi vị trí theo thứ tự row-major"""
        for i in range(self.H):
            for j in range(self.W):
                yield (i, j)

    def flat(self, pos: Position) -> int:
        return pos[0] * self.W + pos[1]

    def __repr__(self):
        return f"WindowLayout(H={self.H}, W={self.W}, M={self.M}, H_g={self.H_g}, W_g={self.W_g})"


@dataclass(frozen=True)
class IndexMap:
    """
    Hoán vị vị trí của phép rearrange theo từng trục.

    rows[i] = i' và cols[j] = j' (forward); inv_rows / inv_cols là nghịch đảo.
    """

    layout: WindowLayout
    rows: np.ndarray = field(repr=False)
    cols: np.ndarray = field(repr=False)
    inv_rows: np.ndarray = field(repr=False)
    inv_cols: np.ndarray = field(repr=False)

    def forward(self, pos: Position) -> Position:
        self.layout.check_position(pos)
        return int(self.rows[pos[0]]), int(self.cols[pos[1]])

    def inverse(self, pos: Position) -> Position:
        self.layout.check_position(pos)
        return int(self.inv_rows[pos[0]]), int(self.inv_cols[pos[1]])


@dataclass(frozen=True)
class Layout1D:
    """Chuỗi độ dài N chia thành G = N / M cửa sổ xen kẽ, mỗi cửa sổ M token"""

    N: int
    M: int

    def __post_init__(self):
        if self.M < 1 or self.N < 1:
            raise LayoutError(f"extents must be >= 1, got N={self.N} M={self.M}")
        if self.N % self.M:
            raise LayoutError(f"window {self.M} does not divide sequence length {self.N}")

    @property
    def G(self) -> int:
        return self.N // self.M

    def window_of(self, t: int) -> int:
        if not 0 <= t < self.N:
            raise BoundsError(f"token {t} outside sequence of length {self.N}")
        return t % self.G

    @property
    def is_sqrt_layout(self) -> bool:
        return self.M * self.M == self.N

    @classmethod
    def sqrt(cls, n: int) -> "Layout1D":
        """Layout với M = G = sqrt(N)"""
        root = math.isqrt(n)
        if root * root != n:
            raise LayoutError(f"sequence length {n} is not a perfect square")
        return cls(n, root)
