import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from socdiff.errors import ConfigError
from socdiff.graph import TOPOLOGIES, SocialGraph, make_graph

# Undirected edges of make_graph("barabasi_albert", 10, 3, 7), frozen from one run.
BA_10_3_7 = [
    (0, 1), (0, 2), (0, 3), (0, 4), (0, 5), (0, 6), (1, 2), (1, 3), (1, 4), (1, 6), (1, 7), (1, 9),
    (2, 3), (2, 6), (3, 4), (3, 5), (3, 7), (3, 8), (4, 5), (4, 7), (4, 9), (5, 8), (7, 8), (8, 9),
]


def _bfs_reachable(g, start=0):
    adj = {i: set() for i in range(g.n_agents)}
    for j, i in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, stack = {start}, [start]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return seen


def test_directed_ring():
    g = make_graph("directed_ring", 10)
    assert len(g.edges) == 10
    for i in range(10):
        assert g.neighbors(i) == ((i - 1) % 10,)
        assert g.input_dim(i) == 3


def test_complete():
    g = make_graph("complete", 10)
    assert len(g.edges) == 90
    assert all(len(g.neighbors(i)) == 9 for i in range(10))
    assert g.input_dim(4) == 11


def test_star_center_zero():
    g = make_graph("star", 10)
    assert g.neighbors(0) == tuple(range(1, 10))
    for i in range(1, 10):
        assert g.neighbors(i) == (0,)
    assert all((i, j) in g.edges for j, i in g.edges)


def test_barabasi_albert_fixture():
    g = make_graph("barabasi_albert", 10, ba_m=3, rng_seed=7)
    undirected = sorted({tuple(sorted(e)) for e in g.edges})
    assert undirected == BA_10_3_7
    # seed clique of 3 nodes contributes 3 undirected edges, then 7 nodes x 3 attachments
    assert len(undirected) == 3 + 7 * 3
    assert len(g.edges) == 6 + 42
    assert all((i, j) in g.edges for j, i in g.edges)
    assert _bfs_reachable(g) == set(range(10))
    assert g.is_connected()
    assert sum(len(g.neighbors(i)) for i in range(10)) == 2 * len(undirected)
    assert min(len(g.neighbors(i)) for i in range(10)) >= 3


def test_ba_each_new_node_attaches_m_times():
    g = make_graph("barabasi_albert", 30, ba_m=4, rng_seed=3)
    undirected = {tuple(sorted(e)) for e in g.edges}
    for v in range(4, 30):
        older = [u for u, w in undirected if w == v and u < v]
        assert len(older) == 4


@settings(max_examples=60, deadline=None)
@given(
    topology=st.sampled_from(TOPOLOGIES),
    n=st.integers(2, 16),
    m=st.integers(1, 5),
    seed=st.integers(0, 2**32 - 1),
)
def test_structural_invariants(topology, n, m, seed):
    m = min(m, n - 1)
    g = make_graph(topology, n, m, seed)
    for i in range(n):
        assert i not in g.neighbors(i)
        assert list(g.neighbors(i)) == sorted(g.neighbors(i))
    assert sum(len(g.neighbors(i)) for i in range(n)) == len(g.edges)
    if topology == "barabasi_albert":
        assert _bfs_reachable(g) == set(range(n))
        assert g.degrees().min() >= m
        assert make_graph(topology, n, m, seed).edges == g.edges


def test_text_round_trip():
    for topo in TOPOLOGIES:
        g = make_graph(topo, 7, 2, 11)
        back = SocialGraph.from_text(g.to_text())
        assert back == g
        assert back.neighborhoods == g.neighborhoods
    assert make_graph("barabasi_albert", 10, 3, 7).to_text().splitlines()[0] == "barabasi_albert 10 3 7"


@pytest.mark.parametrize(
    "args",
    [("complete", 1), ("barabasi_albert", 10, 0), ("barabasi_albert", 10, 10), ("barabasi_albert", 10, None),
     ("hexagon", 10)],
)
def test_bad_configs(args):
    with pytest.raises(ConfigError):
        make_graph(*args)


def test_rejects_self_loop():
    with pytest.raises(ConfigError):
        SocialGraph(3, frozenset({(1, 1)}), "complete")
