import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flowredirect.errors import InvalidRange, InvalidSpec, InvariantViolation, ParseError
from flowredirect.graph import (FAMILIES, Graph, GraphSpec, check_graph, generate, is_strongly_connected,
                                load_edge_list, sample_outrates, save_edge_list)


def bfs_from_every_node(g: Graph) -> bool:
    for start in range(g.node_count):
        seen, todo = {start}, [start]
        while todo:
            for j in g.out_neighbors[todo.pop()]:
                if j not in seen:
                    seen.add(j)
                    todo.append(j)
        if len(seen) != g.node_count:
            return False
    return True


def power_reachability(g: Graph) -> bool:
    a = g.adjacency().astype(float)
    n = g.node_count
    reach = np.linalg.matrix_power(np.eye(n) + a, n - 1)
    return bool(np.all(reach > 0))


def test_er_p1_is_complete():
    g = generate(GraphSpec("erdos_renyi", 3, 5, {"p": 1.0}))
    assert g.edge_count == 6
    assert set(g.edges) == {(i, j) for i in range(3) for j in range(3) if i != j}


def test_ba_two_nodes_is_two_cycle():
    g = generate(GraphSpec("barabasi_albert", 2, 0, {"m": 1}))
    assert g.edges == ((0, 1), (1, 0))


def test_er_30_strongly_connected_by_bfs_oracle():
    g = generate(GraphSpec("erdos_renyi", 30, 7, {"p": 0.3}))
    assert is_strongly_connected(g)
    assert bfs_from_every_node(g)


def test_two_cycle_and_single_edge():
    assert is_strongly_connected(Graph(2, [(0, 1), (1, 0)]))
    assert not is_strongly_connected(Graph(2, [(0, 1)]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 20), st.floats(0.02, 0.5), st.integers(0, 10_000))
def test_strong_connectivity_matches_power_oracle(n, p, seed):
    rng = np.random.default_rng(seed)
    a = rng.random((n, n)) < p
    edges = [(i, j) for i in range(n) for j in range(n) if i != j and a[i, j]]
    g = Graph(n, edges)
    assert is_strongly_connected(g) == power_reachability(g)


@pytest.mark.parametrize("family", ["waxman", "barabasi_albert", "relaxed_caveman"])
def test_undirected_families_are_symmetric(family):
    for seed in range(3):
        g = generate(GraphSpec(family, 24, seed))
        edges = set(g.edges)
        assert all((j, i) in edges for i, j in edges)
        assert is_strongly_connected(g)


@pytest.mark.parametrize("family", FAMILIES)
def test_generate_is_deterministic(family):
    spec = GraphSpec(family, 24, 3)
    assert generate(spec) == generate(spec)


def test_graph_rejects_bad_edges():
    with pytest.raises(InvariantViolation):
        Graph(2, [(0, 0)])
    with pytest.raises(InvariantViolation):
        Graph(2, [(0, 2)])
    with pytest.raises(InvariantViolation):
        Graph(2, [(0, 1), (0, 1)])


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        GraphSpec("lattice", 10)
    with pytest.raises(InvalidSpec):
        GraphSpec("erdos_renyi", 10, params={"q": 1})
    with pytest.raises(InvalidSpec):
        GraphSpec("erdos_renyi", 0)


def test_outrates_range_and_determinism():
    g = generate(GraphSpec("erdos_renyi", 30, 1))
    f = sample_outrates(g, 0.0, 0.4, seed=11)
    assert np.all(f > 0) and np.all(f <= 0.4)
    np.testing.assert_array_equal(f, sample_outrates(g, 0.0, 0.4, seed=11))
    with pytest.raises(InvalidRange):
        sample_outrates(g, 0.4, 0.4)


def test_edge_list_round_trip(tmp_path):
    g = generate(GraphSpec("waxman", 15, 2))
    f = sample_outrates(g, seed=4)
    save_edge_list(tmp_path / "g.txt", g, f)
    g2, f2 = load_edge_list(tmp_path / "g.txt")
    assert g2 == g
    np.testing.assert_array_equal(f2, f)


def test_edge_list_unreachable_node(tmp_path):
    (tmp_path / "g.txt").write_text("#nodes 3\n0 1\n1 0\n")
    with pytest.raises(InvariantViolation):
        load_edge_list(tmp_path / "g.txt")


def test_edge_list_malformed_line(tmp_path):
    (tmp_path / "g.txt").write_text("#nodes 2\n0 1\na b c\n")
    with pytest.raises(ParseError) as err:
        load_edge_list(tmp_path / "g.txt")
    assert err.value.line == 3


def test_check_graph_rejects_disconnected():
    with pytest.raises(InvariantViolation):
        check_graph(Graph(3, [(0, 1), (1, 0)]))
