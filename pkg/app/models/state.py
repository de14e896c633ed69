"""
Module chứa các class EdgeKind, HopState và PathResult
"""

from dataclasses import dataclass
from enum import Enum
from typing import List, Tuple

from app.models.layout import Position


class EdgeKind(Enum):
    """Các loại cạnh trao đổi thông tin trong một block"""
    ATTN = "attn"
    CONV = "conv"


@dataclass(frozen=True)
class HopState:
    """Trạng thái khi đi trên đồ thị reachability: vị trí và loại cạnh đã dùng"""

    pos: Position
    used_attn: bool = False
    used_conv: bool = False

    def can_take(self, kind: EdgeKind) -> bool:
        """Mỗi loại cạnh chỉ được dùng tối đa một lần"""
        return not (self.used_attn if kind is EdgeKind.ATTN else self.used_conv)

    def take(self, kind: EdgeKind, pos: Position) -> "HopState":
        if kind is EdgeKind.ATTN:
            return HopState(pos, True, self.used_conv)
        return HopState(pos, self.used_attn, True)

    def is_goal(self, target: Position) -> bool:
        return self.pos == target

    def __repr__(self):
        return f"HopState(pos={self.pos}, attn={self.used_attn}, conv={self.used_conv})"


class PathResult:
    """Kết quả tìm đường giữa hai vị trí"""

    def __init__(self, path: List[Tuple[EdgeKind, Position]], nodes_expanded: int,
                 time_taken: float, memory_used: int, success: bool,
                 algorithm_name: str = "BFS"):
        self.path = path
        self.nodes_expanded = nodes_expanded
        self.time_taken = time_taken
        self.memory_used = memory_used
        self.success = success
        self.algorithm_name = algorithm_name

    @property
    def hops(self) -> int:
        return len(self.path)

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(kind.value for kind, _ in self.path)

    def __repr__(self):
        return (f"PathResult(algo={self.algorithm_name}, success={self.success}, "
                f"hops={len(self.path)}, nodes={self.nodes_expanded})")
