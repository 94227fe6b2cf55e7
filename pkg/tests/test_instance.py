import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from specind import Graph, InfeasibleError, coloring, hardcore, ising, parse_graph_name
from specind.instance import (
    ball,
    generate_graph,
    gibbs_weight,
    read_graph,
    read_lists,
    read_spin_system,
    restrict,
    universe,
    write_graph,
    write_lists,
    write_spin_system,
)

from strategies import graphs, instances


def test_named_graphs():
    assert parse_graph_name("triangle").edges == [(0, 1), (0, 2), (1, 2)]
    assert parse_graph_name("cycle6").max_degree == 2
    assert len(parse_graph_name("grid2x3").edges) == 7
    assert parse_graph_name("star3").n == 4
    assert parse_graph_name("regular3_6").max_degree == 3
    with pytest.raises(ValueError):
        parse_graph_name("blob7")
    with pytest.raises(ValueError):
        generate_graph("cycle", 2)


def test_graph_validation():
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 0)])
    with pytest.raises(ValueError):
        Graph.from_edges(2, [(0, 1), (1, 0)])
    with pytest.raises(ValueError):
        Graph(2, ((1,), ()))


@given(graphs(max_n=6), st.integers(0, 3))
def test_ball_matches_networkx(g, r):
    import networkx as nx

    G = g.to_networkx()
    for u in range(g.n):
        want = nx.single_source_shortest_path_length(G, u, cutoff=r)
        assert ball(g, u, r) == frozenset(want)


@given(instances())
def test_gibbs_weight_is_product_formula(inst):
    for sigma in itertools.islice(itertools.product(*inst.lists), 50):
        w = math.prod(inst.fields[v, s] for v, s in enumerate(sigma))
        for u, v in inst.graph.edges:
            w *= inst.interaction[sigma[u], sigma[v]]
        assert gibbs_weight(inst, sigma) == pytest.approx(w, rel=1e-12)


def test_coloring_weights():
    inst = coloring(parse_graph_name("edge"), 3)
    assert gibbs_weight(inst, [0, 1]) == 1.0
    assert gibbs_weight(inst, [1, 1]) == 0.0
    with pytest.raises(InfeasibleError):
        coloring(parse_graph_name("edge"), 3, [[0], []])


@given(instances(max_n=4), st.data())
def test_restrict_matches_conditioning(inst, data):
    v = data.draw(st.integers(0, inst.n - 1))
    c = data.draw(st.sampled_from(inst.lists[v]))
    try:
        sub = restrict(inst, {v: c})
    except InfeasibleError:
        return
    keep = [u for u in range(inst.n) if u != v]
    for tau in itertools.islice(itertools.product(*sub.lists), 40):
        sigma = np.empty(inst.n, dtype=int)
        sigma[keep] = tau
        sigma[v] = c
        # weights agree up to the constant factor of the pinned vertex
        assert gibbs_weight(sub, tau) * inst.fields[v, c] == pytest.approx(
            gibbs_weight(inst, sigma), rel=1e-12)
    assert sub.pinned == ((inst.origin[v], c),)


def test_restrict_conflict():
    inst = coloring(parse_graph_name("edge"), 2)
    with pytest.raises(InfeasibleError):
        restrict(inst, {0: 0, 1: 0})


@given(instances())
def test_universe_roundtrip(inst):
    U = universe(inst)
    assert U.size == sum(len(L) for L in inst.lists)
    for sigma in itertools.islice(itertools.product(*inst.lists), 20):
        S = U.encode(sigma)
        assert len(S) == inst.n
        assert U.decode(S) == tuple(sigma)


def test_file_roundtrips(tmp_path):
    g = parse_graph_name("grid2x3")
    write_graph(g, tmp_path / "g.txt")
    assert read_graph(tmp_path / "g.txt") == g
    lists = [[0, 2], [1], [0, 1, 2], [2], [0], [1, 2]]
    write_lists(lists, tmp_path / "l.txt")
    assert read_lists(tmp_path / "l.txt", 6) == lists
    s = ising(g, 0.3, 1.5)
    write_spin_system(s, tmp_path / "s.json")
    s2 = read_spin_system(tmp_path / "s.json", g)
    assert np.allclose(s2.A, s.A) and np.allclose(s2.h, s.h)
    (tmp_path / "bad.json").write_text('{"q": 2, "A": [1, 1, 1, 1], "h": [1, 1], "x": 1}')
    with pytest.raises(ValueError):
        read_spin_system(tmp_path / "bad.json", g)


def test_hardcore_exclusion():
    inst = hardcore(parse_graph_name("edge"), 2.0)
    assert gibbs_weight(inst, [0, 0]) == 0.0
    assert gibbs_weight(inst, [0, 1]) == 2.0
