"""Hypothesis strategies for small graphs and instances."""

import numpy as np
from hypothesis import strategies as st

from specind import Graph, SpinSystem, coloring, hardcore, ising


@st.composite
def graphs(draw, min_n=1, max_n=4, connected=False):
    n = draw(st.integers(min_n, max_n))
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    edges = [e for e in pairs if draw(st.booleans())]
    if connected:
        edges = sorted(set(edges) | {(i, i + 1) for i in range(n - 1)})
    return Graph.from_edges(n, edges)


@st.composite
def colorings(draw, max_n=4, slack=(1, 3), full_lists=False):
    g = draw(graphs(max_n=max_n))
    D = g.max_degree
    q = D + draw(st.integers(*slack))
    if full_lists:
        return coloring(g, q)
    lists = []
    for v in range(g.n):
        k = draw(st.integers(min(g.degree(v) + 1, q), q))
        lists.append(sorted(draw(st.permutations(range(q)))[:k]))
    return coloring(g, q, lists)


@st.composite
def spin_systems(draw, max_n=4):
    g = draw(graphs(max_n=max_n))
    kind = draw(st.sampled_from(["ising", "hardcore", "random"]))
    if kind == "ising":
        return ising(g, draw(st.floats(-1.5, 1.5)), draw(st.floats(0.5, 2.0)))
    if kind == "hardcore":
        return hardcore(g, draw(st.floats(0.2, 3.0)))
    q = draw(st.integers(2, 3))
    a = np.array(draw(st.lists(st.floats(0.2, 3.0), min_size=q * q, max_size=q * q)))
    A = a.reshape(q, q)
    A = (A + A.T) / 2
    h = np.array(draw(st.lists(st.floats(0.3, 3.0), min_size=q, max_size=q)))
    return SpinSystem(g, A, h)


def instances(max_n=4):
    return st.one_of(colorings(max_n=max_n), spin_systems(max_n=max_n))
