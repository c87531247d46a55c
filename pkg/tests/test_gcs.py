"""Tests for pushplan.gcs module."""

import json

import networkx as nx
import numpy as np
import pytest

from pushplan.conic import Affine, AffineBlock, ConicSet, NonnegCone, SecondOrderCone
from pushplan.gcs import (
    FlowSolution,
    GcsGraph,
    PathCandidate,
    build_relaxation,
    coupling_equality,
    dump_graph,
    round_paths,
    solve_flow,
    solve_restriction,
)
from pushplan.types import DisconnectedGraph, InfeasibleRestriction, NoPathFound

WEIGHTED_EDGES = [
    ("s", "a", 1.0),
    ("s", "b", 4.0),
    ("a", "b", 1.5),
    ("a", "c", 5.0),
    ("b", "c", 1.0),
    ("b", "d", 6.0),
    ("c", "a", 2.0),
    ("c", "d", 1.0),
    ("c", "t", 7.0),
    ("d", "t", 1.0),
]


def interval(lo: float, hi: float) -> ConicSet:
    """The homogeneous interval lo·x₀ ≤ x₁ ≤ hi·x₀."""
    rows = [Affine({1: 1.0, 0: -lo}), Affine({0: hi, 1: -1.0})]
    return ConicSet(size=2, atoms=(NonnegCone(AffineBlock.from_rows(rows)),))


def weighted_graph() -> GcsGraph:
    """Graph of singleton sets whose edges carry fixed costs on the homogenizer."""
    graph = GcsGraph("s", "t")
    for v in "sabcdt":
        graph.add_vertex(v, ConicSet.point([0.0]))
    for u, v, w in WEIGHTED_EDGES:
        graph.add_edge(u, v, cost=Affine({0: w}))
    return graph


def distance_edge(graph: GcsGraph, u: str, v: str):
    """Edge charged |x_u − x_v| through one epigraph variable."""
    t = graph.joint_size(u, v)
    cone = SecondOrderCone(Affine({t: 1.0}), AffineBlock.from_rows([Affine({1: 1.0, 2: -1.0})]))
    graph.add_edge(u, v, atoms=(cone,), cost=Affine({t: 1.0}), num_extra=1)


def diamond_graph() -> GcsGraph:
    """From 0 to 2 through either [0.5, 1.5] (length 2) or [3, 4] (length 4)."""
    graph = GcsGraph("s", "t")
    graph.add_vertex("s", ConicSet.point([0.0]))
    graph.add_vertex("near", interval(0.5, 1.5))
    graph.add_vertex("far", interval(3.0, 4.0))
    graph.add_vertex("t", ConicSet.point([2.0]))
    for u, v in [("s", "near"), ("s", "far"), ("near", "t"), ("far", "t")]:
        distance_edge(graph, u, v)
    return graph


class TestGraph:
    """Tests for graph construction."""

    def test_edges_validated(self):
        graph = weighted_graph()
        with pytest.raises(ValueError, match="source"):
            graph.add_edge("a", "s")
        with pytest.raises(ValueError, match="target"):
            graph.add_edge("t", "a")
        with pytest.raises(ValueError, match="Self-edge"):
            graph.add_edge("a", "a")
        with pytest.raises(ValueError, match="unknown"):
            graph.add_edge("a", "z")

    def test_duplicate_vertex(self):
        graph = weighted_graph()
        with pytest.raises(ValueError, match="already exists"):
            graph.add_vertex("a", ConicSet.point([0.0]))

    def test_disconnected(self):
        graph = GcsGraph("s", "t")
        graph.add_vertex("s", ConicSet.point([0.0]))
        graph.add_vertex("t", ConicSet.point([1.0]))
        with pytest.raises(DisconnectedGraph):
            build_relaxation(graph)

    def test_adjacency_in_insertion_order(self):
        graph = weighted_graph()
        assert graph.out_edges("s") == [("s", "a"), ("s", "b")]
        assert graph.in_edges("c") == [("a", "c"), ("b", "c")]
        assert graph.in_edges("s") == []
        graph.add_edge("s", "a", cost=Affine({0: 3.0}))
        assert graph.out_edges("s") == [("s", "a"), ("s", "b")]
        assert graph.edges[("s", "a")].cost.evaluate(np.array([1.0])) == pytest.approx(3.0)

    def test_coupling_equality_layout(self):
        atom = coupling_equality(2, np.array([[0.0, 1.0]]), np.array([[0.0, 1.0]]))
        assert atom.expr.A.toarray().tolist() == [[0.0, 1.0, -1.0]]

    def test_coupling_equality_constants(self):
        atom = coupling_equality(2, np.array([[-1.0, 1.0]]), np.array([[0.5, 1.0]]))
        assert atom.expr.A.toarray().tolist() == [[-1.5, 1.0, -1.0]]


class TestFlowRelaxation:
    """Tests for the shortest-path relaxation and its rounding."""

    def test_matches_dijkstra(self):
        graph = weighted_graph()
        oracle = nx.DiGraph()
        oracle.add_weighted_edges_from(WEIGHTED_EDGES)
        solution = solve_flow(build_relaxation(graph))
        assert solution.cost == pytest.approx(nx.dijkstra_path_length(oracle, "s", "t"), abs=1e-6)
        assert solution.conservation_residual() < 1e-6

    def test_rounding_recovers_shortest_path(self):
        graph = weighted_graph()
        oracle = nx.DiGraph()
        oracle.add_weighted_edges_from(WEIGHTED_EDGES)
        candidates = round_paths(solve_flow(build_relaxation(graph)), attempts=4, seed=0)
        assert candidates[0].vertices == tuple(nx.dijkstra_path(oracle, "s", "t"))

    def test_restriction_cost(self):
        graph = weighted_graph()
        result = solve_restriction(graph, PathCandidate(("s", "a", "b", "c", "d", "t")))
        assert result.cost == pytest.approx(5.5, abs=1e-6)
        assert result.path.cost == result.cost

    def test_diamond_picks_near_branch(self):
        graph = diamond_graph()
        solution = solve_flow(build_relaxation(graph))
        assert solution.cost == pytest.approx(2.0, abs=1e-5)
        assert solution.flows[("s", "near")] == pytest.approx(1.0, abs=1e-5)
        candidates = round_paths(solution, seed=3)
        assert [c.vertices for c in candidates] == [("s", "near", "t")]

    def test_diamond_restrictions(self):
        graph = diamond_graph()
        near = solve_restriction(graph, PathCandidate(("s", "near", "t")))
        far = solve_restriction(graph, PathCandidate(("s", "far", "t")))
        assert near.cost == pytest.approx(2.0, abs=1e-5)
        assert far.cost == pytest.approx(4.0, abs=1e-5)
        assert far.vertex_values["far"][1] == pytest.approx(3.0, abs=1e-5)

    def test_copy_values_scaled_by_flow(self):
        graph = diamond_graph()
        solution = solve_flow(build_relaxation(graph))
        copy = solution.copy_values(("s", "near"), head=True)
        assert copy[0] == pytest.approx(1.0, abs=1e-5)
        assert 0.5 - 1e-5 <= copy[1] <= 1.5 + 1e-5


class TestRounding:
    """Tests for the randomized depth-first rounding."""

    def dead_end_solution(self) -> FlowSolution:
        graph = GcsGraph("s", "t")
        for v in "sabt":
            graph.add_vertex(v, ConicSet.point([0.0]))
        for u, v in [("s", "a"), ("s", "b"), ("b", "t")]:
            graph.add_edge(u, v)
        flows = {("s", "a"): 0.9, ("s", "b"): 0.1, ("b", "t"): 0.1}
        return FlowSolution(relaxation=build_relaxation(graph), outcome=None, flows=flows)

    def test_dead_ends_backtrack(self):
        candidates = round_paths(self.dead_end_solution(), attempts=5, seed=0)
        assert [c.vertices for c in candidates] == [("s", "b", "t")]

    def test_same_seed_same_paths(self):
        graph = weighted_graph()
        solution = solve_flow(build_relaxation(graph))
        first = [c.vertices for c in round_paths(solution, seed=7)]
        second = [c.vertices for c in round_paths(solution, seed=7)]
        assert first == second

    def test_all_flows_pruned(self):
        solution = self.dead_end_solution()
        solution.flows = dict.fromkeys(solution.flows, 0.0)
        with pytest.raises(NoPathFound):
            round_paths(solution, attempts=3)


class TestRestriction:
    """Tests for fixed-path restrictions."""

    def test_repeated_vertex(self):
        with pytest.raises(ValueError, match="repeats"):
            solve_restriction(weighted_graph(), PathCandidate(("s", "a", "b", "c", "a", "c", "t")))

    def test_missing_edge(self):
        with pytest.raises(ValueError, match="missing edge"):
            solve_restriction(weighted_graph(), PathCandidate(("s", "d", "t")))

    def test_infeasible_coupling(self):
        graph = GcsGraph("s", "t")
        graph.add_vertex("s", ConicSet.point([0.0]))
        graph.add_vertex("t", ConicSet.point([2.0]))
        graph.add_edge("s", "t", atoms=(coupling_equality(2, np.eye(2)[1:], np.eye(2)[1:]),))
        with pytest.raises(InfeasibleRestriction):
            solve_restriction(graph, PathCandidate(("s", "t")))


class TestDump:
    """Tests for the JSON graph dump."""

    def test_dump_with_flows(self):
        graph = diamond_graph()
        solution = solve_flow(build_relaxation(graph))
        data = json.loads(dump_graph(graph, solution))
        assert data["source"] == "s"
        assert {v["id"] for v in data["vertices"]} == {"s", "near", "far", "t"}
        flows = {(e["u"], e["v"]): e["flow"] for e in data["edges"]}
        assert flows[("near", "t")] == pytest.approx(1.0, abs=1e-5)

    def test_dump_without_solution(self):
        data = json.loads(dump_graph(weighted_graph()))
        assert all(e["flow"] is None for e in data["edges"])
        assert len(data["edges"]) == len(WEIGHTED_EDGES)


class TestDijkstraOracle:
    """Random point graphs checked against networkx shortest paths."""

    def random_graph(self, rng: np.random.Generator) -> tuple[GcsGraph, nx.DiGraph]:
        inner = [f"v{i}" for i in range(int(rng.integers(1, 11)))]
        graph = GcsGraph("s", "t")
        oracle = nx.DiGraph()
        for v in ["s", *inner, "t"]:
            graph.add_vertex(v, ConicSet.point([0.0]))
        pairs = [("s", v) for v in inner] + [(u, v) for u in inner for v in inner if u != v]
        pairs += [(v, "t") for v in inner] + [("s", "t")]
        for u, v in pairs:
            if rng.random() < 0.35:
                w = float(rng.uniform(0.1, 1.0))
                graph.add_edge(u, v, cost=Affine({0: w}))
                oracle.add_edge(u, v, weight=w)
        return graph, oracle

    def test_relaxation_matches_dijkstra(self):
        rng = np.random.default_rng(99)
        solved = 0
        while solved < 100:
            graph, oracle = self.random_graph(rng)
            if "s" not in oracle or "t" not in oracle or not nx.has_path(oracle, "s", "t"):
                continue
            solution = solve_flow(build_relaxation(graph))
            expected = nx.dijkstra_path_length(oracle, "s", "t")
            assert solution.cost == pytest.approx(expected, abs=1e-6)
            assert all(min(f, abs(1.0 - f)) <= 1e-5 for f in solution.flows.values())
            (best, *_) = round_paths(solution, attempts=4, seed=solved)
            assert nx.path_weight(oracle, list(best.vertices), "weight") == pytest.approx(expected, abs=1e-6)
            solved += 1
