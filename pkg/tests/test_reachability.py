"""
Test bộ kiểm chứng reachability: verifier ma trận, BFS, witness và ERF
"""

import numpy as np
import pytest

from app.algorithms import (ReachabilityGraph, bfs_unreachable, erf_depth_bound, find_path,
                            theorem_condition, verify_theorem1, witness)
from app.core import index_map, window_of
from app.errors import BoundsError, ConfigError
from app.harness.verify import theorem_sweep
from app.models import ConvRadiusMode, EdgeKind, WindowLayout


class TestVerifier:

    def test_condition_holds_passes(self):
        report = verify_theorem1(WindowLayout(8, 8, 2), 4)
        assert report.passed
        assert report.witness_certified
        assert report.pairs_checked == 64 * 64
        assert report.diameter == 2
        assert report.counterexample is None

    def test_counterexample(self):
        report = verify_theorem1(WindowLayout(8, 8, 2), 2)
        assert not report.passed
        assert report.diameter is None
        assert report.counterexample == ((0, 0), (7, 7))

    def test_counterexample_has_no_path(self):
        layout = WindowLayout(8, 8, 2)
        report = verify_theorem1(layout, 2)
        assert not find_path(ReachabilityGraph(layout, report.radius), *report.counterexample).success

    def test_single_window_diameter(self):
        report = verify_theorem1(WindowLayout(4, 4, 4), 1)
        assert report.passed
        assert report.diameter == 1

    def test_single_token(self):
        assert verify_theorem1(WindowLayout(1, 1, 1), 1).diameter == 0

    def test_physical_mode_radius(self):
        layout = WindowLayout(8, 8, 2)
        assert verify_theorem1(layout, 3, ConvRadiusMode.PHYSICAL).radius == 1
        assert not verify_theorem1(layout, 3, ConvRadiusMode.PHYSICAL).passed
        assert verify_theorem1(layout, 3, ConvRadiusMode.LEMMA).passed

    def test_rectangular_layout(self):
        layout = WindowLayout(4, 8, 2)
        assert theorem_condition(layout, 4)
        assert verify_theorem1(layout, 4).passed
        # W_g = 4 cần bán kính 3
        assert not verify_theorem1(layout, 2).passed

    def test_to_dict(self):
        data = verify_theorem1(WindowLayout(8, 8, 2), 2).to_dict()
        assert data["passed"] is False
        assert data["counterexample"] == [(0, 0), (7, 7)]
        assert data["mode"] == "lemma"

    def test_invalid_kernel(self):
        with pytest.raises(ConfigError):
            verify_theorem1(WindowLayout(4, 4, 2), 0)


class TestCliques:

    @pytest.mark.parametrize("H,W,M", [(8, 8, 2), (6, 9, 3), (4, 6, 2)])
    def test_cliques_partition_grid(self, H, W, M):
        layout = WindowLayout(H, W, M)
        cliques = list(ReachabilityGraph(layout, 1).cliques())
        assert len(cliques) == layout.num_windows
        members = [pos for clique in cliques for pos in clique]
        assert len(members) == H * W
        assert set(members) == set(layout.positions())

    @pytest.mark.parametrize("H,W,M", [(8, 8, 2), (6, 9, 3)])
    def test_clique_lands_in_one_window(self, H, W, M):
        layout = WindowLayout(H, W, M)
        imap = index_map(layout)
        for clique in ReachabilityGraph(layout, 0).cliques():
            assert {window_of(pos, layout) for pos in clique} == {window_of(clique[0], layout)}
            targets = {tuple(c // M for c in imap.forward(pos)) for pos in clique}
            assert len(targets) == 1


class TestWitness:

    def test_example(self):
        w = witness((0, 0), (7, 7), WindowLayout(8, 8, 2))
        assert w.p3 == (4, 4)
        assert w.hops == ("attn", "conv")

    def test_bounds(self):
        with pytest.raises(BoundsError):
            witness((0, 0), (8, 0), WindowLayout(8, 8, 2))


class TestBfs:

    def test_path_uses_each_edge_kind_once(self):
        layout = WindowLayout(8, 8, 2)
        result = find_path(ReachabilityGraph(layout, 4), (0, 0), (7, 7))
        assert result.success
        assert result.hops == 2
        kinds = [kind for kind, _ in result.path]
        assert sorted(k.value for k in kinds) == sorted(k.value for k in EdgeKind)

    def test_same_position(self):
        result = find_path(ReachabilityGraph(WindowLayout(4, 4, 2), 1), (1, 1), (1, 1))
        assert result.success and result.hops == 0

    @pytest.mark.parametrize("H,W,M,radius", [(4, 4, 2, 1), (6, 6, 3, 1), (4, 6, 2, 1)])
    def test_bfs_matches_matrix(self, H, W, M, radius):
        graph = ReachabilityGraph(WindowLayout(H, W, M), radius)
        reach = graph.reachability()
        from_matrix = {((int(i1), int(j1)), (int(i2), int(j2)))
                       for i1, i2, j1, j2 in np.argwhere(~reach)}
        assert set(bfs_unreachable(graph, workers=2)) == from_matrix


class TestErfDepth:

    @pytest.mark.parametrize("H,M,K,expected", [(8, 2, 3, 3), (56, 7, 3, 7), (4, 4, 3, 1),
                                                (8, 2, 5, 2)])
    def test_depth_bound(self, H, M, K, expected):
        assert erf_depth_bound(WindowLayout(H, H, M), K) == expected

    def test_never_reached(self):
        assert erf_depth_bound(WindowLayout(8, 8, 2), 1) is None


@pytest.mark.slow
def test_theorem_sweep():
    passed, detail = theorem_sweep()
    assert passed, detail
    assert detail["counterexample"] == [[0, 0], [7, 7]]
