"""
Module chứa bộ kiểm chứng trao đổi thông tin toàn cục của một Iwin block

Đồ thị trên lưới H x W có hai loại cạnh:
    attn: hai vị trí cùng cửa sổ xen kẽ (i1 = i2 mod H_g, j1 = j2 mod W_g)
    conv: khoảng cách Chebyshev <= radius
Một cặp (p1, p2) đạt khi có đường đi dùng tối đa một cạnh attn và một cạnh conv.

Cả hai quan hệ đều là tích của một quan hệ theo hàng và một quan hệ theo cột,
nên ma trận reachability N x N được tính từ các ma trận H x H và W x W.
"""

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from typing import Iterator, List, Optional, Tuple

import numpy as np

from app.errors import ConfigError, ContractError
from app.models import (ConvRadiusMode, EdgeKind, HopState, PathResult, Position,
                        ReachabilityReport, ReachabilityWitness, WindowLayout)

logger = logging.getLogger(__name__)

# Giới hạn cho BFS, giống giới hạn của các thuật toán tìm kiếm
MAX_TIME_SECONDS = 30.0
MAX_NODES = 1000000
WITNESS_SAMPLE = 8


def conv_radius(kernel: int, mode: ConvRadiusMode) -> int:
    if kernel < 1:
        raise ConfigError(f"kernel must be >= 1, got {kernel}")
    return kernel if mode is ConvRadiusMode.LEMMA else kernel // 2


def theorem_condition(layout: WindowLayout, kernel: int) -> bool:
    """K * M >= max(H, W)"""
    return kernel * layout.M >= max(layout.H, layout.W)


class ReachabilityGraph:
    """Đồ thị cạnh attn/conv của một block trên lưới H x W"""

    def __init__(self, layout: WindowLayout, radius: int):
        if radius < 0:
            raise ConfigError(f"conv radius must be >= 0, got {radius}")
        self.layout = layout
        self.radius = radius

    def get_successors(self, pos: Position) -> List[Tuple[EdgeKind, Position]]:
        """
        Sinh các vị trí kề - dùng cho BFS

        Returns:
            List các tuple (edge kind, position), không gồm chính pos
        """
        self.layout.check_position(pos)
        i, j = pos
        L = self.layout
        successors = []
        for a in range(L.M):
            for b in range(L.M):
                other = (i % L.H_g + a * L.H_g, j % L.W_g + b * L.W_g)
                if other != pos:
                    successors.append((EdgeKind.ATTN, other))
        r = self.radius
        for ni in range(max(0, i - r), min(L.H, i + r + 1)):
            for nj in range(max(0, j - r), min(L.W, j + r + 1)):
                if (ni, nj) != pos:
                    successors.append((EdgeKind.CONV, (ni, nj)))
        return successors

    def cliques(self) -> Iterator[List[Position]]:
        """Các clique attention; mỗi clique là một cửa sổ xen kẽ"""
        L = self.layout
        for r in range(L.H_g):
            for c in range(L.W_g):
                yield [(r + a * L.H_g, c + b * L.W_g) for a in range(L.M) for b in range(L.M)]

    # --- ma trận kề theo từng trục ---

    def axis_relations(self, n: int, grid: int) -> Tuple[np.ndarray, np.ndarray]:
        idx = np.arange(n)
        attn = (idx[:, None] % grid) == (idx[None, :] % grid)
        conv = np.abs(idx[:, None] - idx[None, :]) <= self.radius
        return attn, conv

    def reachability(self) -> np.ndarray:
        """
        Ma trận bool [H, H, W, W]: R[i1, i2, j1, j2] = (i1, j1) tới được (i2, j2)
        """
        L = self.layout
        ar, cr = self.axis_relations(L.H, L.H_g)
        ac, cc = self.axis_relations(L.W, L.W_g)
        acr, car = _compose(ar, cr), _compose(cr, ar)
        acc, cac = _compose(ac, cc), _compose(cc, ac)

        def outer(row: np.ndarray, col: np.ndarray) -> np.ndarray:
            return row[:, :, None, None] & col[None, None, :, :]

        return outer(ar, ac) | outer(cr, cc) | outer(acr, acc) | outer(car, cac)

    def one_hop(self) -> np.ndarray:
        L = self.layout
        ar, cr = self.axis_relations(L.H, L.H_g)
        ac, cc = self.axis_relations(L.W, L.W_g)
        return (ar[:, :, None, None] & ac[None, None, :, :]) | (cr[:, :, None, None] & cc[None, None, :, :])


def _compose(first: np.ndarray, second: np.ndarray) -> np.ndarray:
    """Quan hệ first rồi second"""
    return (first.astype(np.int64) @ second.astype(np.int64)) > 0


# ---------------------------------------------------------------------------
# BFS
# ---------------------------------------------------------------------------

def find_path(graph: ReachabilityGraph, source: Position, target: Position) -> PathResult:
    """
    Breadth-First Search trên trạng thái (vị trí, đã dùng attn, đã dùng conv)

    Mỗi loại cạnh dùng tối đa một lần, nên đường tìm được dài tối đa 2.
    """
    start_time = time.perf_counter()
    graph.layout.check_position(source)
    graph.layout.check_position(target)
    initial = HopState(source)

    if initial.is_goal(target):
        return PathResult([], 0, time.perf_counter() - start_time, 1, True)

    frontier = deque([(initial, [])])
    frontier_set = {initial}
    explored = set()
    nodes_expanded = 0
    max_frontier_size = 1

    while frontier:
        if time.perf_counter() - start_time > MAX_TIME_SECONDS or nodes_expanded > MAX_NODES:
            return PathResult([], nodes_expanded, time.perf_counter() - start_time,
                              max_frontier_size, False, "BFS (limit)")

        max_frontier_size = max(max_frontier_size, len(frontier))
        state, path = frontier.popleft()
        frontier_set.remove(state)
        explored.add(state)
        nodes_expanded += 1

        for kind, pos in graph.get_successors(state.pos):
            if not state.can_take(kind):
                continue
            next_state = state.take(kind, pos)
            if next_state in explored or next_state in frontier_set:
                continue
            if next_state.is_goal(target):
                return PathResult(path + [(kind, pos)], nodes_expanded,
                                  time.perf_counter() - start_time, max_frontier_size, True)
            frontier.append((next_state, path + [(kind, pos)]))
            frontier_set.add(next_state)

    return PathResult([], nodes_expanded, time.perf_counter() - start_time,
                      max_frontier_size, False)


def bfs_unreachable(graph: ReachabilityGraph, workers: int = 4) -> List[Tuple[Position, Position]]:
    """Mọi cặp không nối được, tìm bằng BFS; chia nguồn cho nhiều thread"""
    positions = list(graph.layout.positions())

    def scan(source: Position) -> List[Tuple[Position, Position]]:
        return [(source, target) for target in positions
                if not find_path(graph, source, target).success]

    with ThreadPoolExecutor(max_workers=workers) as pool:
        chunks = list(pool.map(scan, positions))
    return [pair for chunk in chunks for pair in chunk]


# ---------------------------------------------------------------------------
# Witness và verifier
# ---------------------------------------------------------------------------

def witness(p1: Position, p2: Position, layout: WindowLayout) -> ReachabilityWitness:
    """
    Vị trí trung gian p3 cùng cửa sổ xen kẽ với p1 và gần p2:
        i3 = (i1 mod H_g) + H_g * floor(i2 / H_g), j3 tương tự

    Raises:
        BoundsError: vị trí ngoài lưới
    """
    layout.check_position(p1)
    layout.check_position(p2)
    (i1, j1), (i2, j2) = p1, p2
    i3 = i1 % layout.H_g + layout.H_g * (i2 // layout.H_g)
    j3 = j1 % layout.W_g + layout.W_g * (j2 // layout.W_g)
    if i3 % layout.H_g != i1 % layout.H_g or j3 % layout.W_g != j1 % layout.W_g:
        raise ContractError(f"witness {(i3, j3)} left the window of {p1}")
    if abs(i2 - i3) > layout.H_g - 1 or abs(j2 - j3) > layout.W_g - 1:
        raise ContractError(f"witness {(i3, j3)} too far from {p2}")
    return ReachabilityWitness(p1, p2, (i3, j3))


def _witness_certifies(layout: WindowLayout, radius: int) -> bool:
    """Witness (attn rồi conv) nối được mọi cặp với bán kính conv đã cho"""
    def axis_ok(n: int, grid: int) -> bool:
        i1, i2 = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
        i3 = i1 % grid + grid * (i2 // grid)
        return bool(np.all((i3 % grid == i1 % grid) & (np.abs(i2 - i3) <= radius)))
    return axis_ok(layout.H, layout.H_g) and axis_ok(layout.W, layout.W_g)


def _counterexample(layout: WindowLayout, reach: np.ndarray) -> Tuple[Position, Position]:
    """Nguồn lỗi đầu tiên (row-major) và đích không tới được xa nhất của nó"""
    missing = np.argwhere(~reach)  # [i1, i2, j1, j2]
    sources = missing[:, 0] * layout.W + missing[:, 2]
    first = missing[sources == sources.min()]
    di = np.abs(first[:, 1] - first[:, 0])
    dj = np.abs(first[:, 3] - first[:, 2])
    pick = first[np.lexsort((-dj, -di, -np.maximum(di, dj)))[0]]
    return (int(pick[0]), int(pick[2])), (int(pick[1]), int(pick[3]))


def _sample_witnesses(layout: WindowLayout, count: int) -> List[ReachabilityWitness]:
    n = layout.num_tokens
    picks = np.linspace(0, n * n - 1, num=min(count, n * n), dtype=np.int64)
    out = []
    for flat in picks:
        a, b = divmod(int(flat), n)
        out.append(witness(divmod(a, layout.W), divmod(b, layout.W), layout))
    return out


def verify_theorem1(layout: WindowLayout, kernel: int,
                    mode: ConvRadiusMode = ConvRadiusMode.LEMMA,
                    radius: Optional[int] = None) -> ReachabilityReport:
    """
    Kiểm chứng mọi cặp vị trí có đường đi <= 2 cạnh (một attn, một conv).

    Args:
        layout: lưới và kích thước cửa sổ
        kernel: K của depthwise conv
        mode: lemma (bán kính K) hoặc physical (bán kính K // 2)
        radius: ghi đè bán kính conv (dùng cho phân tích ERF)
    """
    if radius is None:
        radius = conv_radius(kernel, mode)
    graph = ReachabilityGraph(layout, radius)
    reach = graph.reachability()
    passed = bool(reach.all())

    if layout.num_tokens == 1:
        diameter = 0
    elif not passed:
        diameter = None
    else:
        diameter = 1 if graph.one_hop().all() else 2

    report = ReachabilityReport(
        layout=layout, kernel=kernel, mode=mode, radius=radius, passed=passed,
        pairs_checked=layout.num_tokens ** 2, diameter=diameter,
        witness_certified=_witness_certifies(layout, radius),
    )
    if passed:
        report.witnesses = _sample_witnesses(layout, WITNESS_SAMPLE)
    else:
        report.counterexample = _counterexample(layout, reach)
    logger.debug("%s K=%d radius=%d passed=%s", layout, kernel, radius, passed)
    return report


def erf_depth_bound(layout: WindowLayout, kernel: int) -> Optional[int]:
    """
    Số block tối thiểu d để bán kính conv hiệu dụng d * (K // 2) thỏa verifier.

    Bố cục một cửa sổ trả về 1 (một bước attention là đủ). None nếu không
    bao giờ đạt (K // 2 = 0 trên lưới nhiều cửa sổ).
    """
    if kernel < 1:
        raise ConfigError(f"kernel must be >= 1, got {kernel}")
    step = kernel // 2
    needed = max(layout.H_g, layout.W_g) - 1
    if needed == 0:
        return 1
    if step == 0:
        return None
    depth = max(1, -(-needed // step))
    while not verify_theorem1(layout, kernel, ConvRadiusMode.PHYSICAL, radius=depth * step).passed:
        depth += 1
    # depth - 1 phải thất bại để depth là nhỏ nhất
    if depth > 1 and verify_theorem1(layout, kernel, ConvRadiusMode.PHYSICAL,
                                     radius=(depth - 1) * step).passed:
        raise ContractError(f"depth bound {depth} is not minimal for {layout}")
    return depth

