"""Graphs, spin systems, list-coloring instances and the set-system universe.

Configurations are plain integer sequences ``sigma`` with ``sigma[v]`` the
spin/color of vertex ``v``.  Instances are immutable; conditioning on a
boundary condition (:func:`restrict`) returns a new, smaller instance whose
``origin`` records which vertices of the root instance survive.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import networkx as nx
import numpy as np

MAX_EXACT_VERTICES = 24


class CapExceeded(RuntimeError):
    """A computation was refused because its size exceeds a configured cap."""


class InfeasibleError(ValueError):
    """A boundary condition or parameter choice leaves no feasible configuration."""


@dataclass(frozen=True)
class Graph:
    n: int
    adjacency: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        if len(self.adjacency) != self.n:
            raise ValueError("adjacency must have one entry per vertex")
        for v, nbrs in enumerate(self.adjacency):
            if list(nbrs) != sorted(set(nbrs)):
                raise ValueError(f"neighbors of {v} must be sorted and distinct")
            for u in nbrs:
                if u == v:
                    raise ValueError(f"self-loop at {v}")
                if not 0 <= u < self.n or v not in self.adjacency[u]:
                    raise ValueError(f"asymmetric adjacency between {v} and {u}")

    @classmethod
    def from_edges(cls, n: int, edges: Iterable[tuple[int, int]]) -> "Graph":
        nbrs: list[set[int]] = [set() for _ in range(n)]
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ValueError(f"self-loop at {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
            if v in nbrs[u]:
                raise ValueError(f"duplicate edge ({u}, {v})")
            nbrs[u].add(v)
            nbrs[v].add(u)
        return cls(n, tuple(tuple(sorted(s)) for s in nbrs))

    @classmethod
    def from_networkx(cls, g: nx.Graph) -> "Graph":
        g = nx.convert_node_labels_to_integers(g, ordering="sorted")
        return cls.from_edges(g.number_of_nodes(), g.edges())

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u in range(self.n) for v in self.adjacency[u] if u < v]

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    def degree(self, v: int) -> int:
        return len(self.adjacency[v])

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        return len(ball(self, 0, self.n)) == self.n

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(self.edges)
        return g


def generate_graph(kind: str, n: int = 0, *, d: int = 3, rows: int = 0, cols: int = 0,
                   seed: int = 0) -> Graph:
    """Build a named graph family.

    ``kind`` is one of path, cycle, complete, star, empty, grid (``rows`` x ``cols``)
    or random_regular (degree ``d``; deterministic in ``seed``).
    """
    if kind == "path":
        _need(n >= 1, "path needs n >= 1")
        return Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)])
    if kind == "cycle":
        _need(n >= 3, "cycle needs n >= 3")
        return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])
    if kind == "complete":
        _need(n >= 1, "complete graph needs n >= 1")
        return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    if kind == "star":
        _need(n >= 1, "star needs n >= 1 leaves")
        return Graph.from_edges(n + 1, [(0, i) for i in range(1, n + 1)])
    if kind == "empty":
        _need(n >= 1, "empty graph needs n >= 1")
        return Graph.from_edges(n, [])
    if kind == "grid":
        _need(rows >= 1 and cols >= 1, "grid needs rows, cols >= 1")
        return Graph.from_networkx(nx.grid_2d_graph(rows, cols))
    if kind == "random_regular":
        _need(n >= 1 and 0 <= d < n, f"random_regular needs 0 <= d < n, got d={d}, n={n}")
        _need((n * d) % 2 == 0, f"random_regular needs n*d even, got n={n}, d={d}")
        return Graph.from_networkx(nx.random_regular_graph(d, n, seed=seed % (2**32)))
    raise ValueError(f"unknown graph kind {kind!r}")


def parse_graph_name(name: str, seed: int = 0) -> Graph:
    """Parse shorthand such as ``triangle``, ``edge``, ``path5``, ``cycle6``,
    ``complete4``, ``star3``, ``empty3``, ``grid2x3`` or ``regular3_6``."""
    import re

    name = name.strip().lower()
    if name == "triangle":
        return generate_graph("cycle", 3)
    if name == "edge":
        return generate_graph("path", 2)
    if name == "vertex":
        return generate_graph("path", 1)
    m = re.fullmatch(r"(path|cycle|complete|star|empty)(\d+)", name)
    if m:
        return generate_graph(m.group(1), int(m.group(2)))
    m = re.fullmatch(r"grid(\d+)x(\d+)", name)
    if m:
        return generate_graph("grid", rows=int(m.group(1)), cols=int(m.group(2)))
    m = re.fullmatch(r"regular(\d+)_(\d+)", name)
    if m:
        return generate_graph("random_regular", int(m.group(2)), d=int(m.group(1)), seed=seed)
    raise ValueError(f"unrecognized graph name {name!r}")


def _need(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def ball(g: Graph, u: int, r: int) -> frozenset[int]:
    """Vertices within shortest-path distance ``r`` of ``u``."""
    if not 0 <= u < g.n:
        raise ValueError(f"vertex {u} out of range")
    dist = {u: 0}
    queue = deque([u])
    while queue:
        w = queue.popleft()
        if dist[w] == r:
            continue
        for x in g.adjacency[w]:
            if x not in dist:
                dist[x] = dist[w] + 1
                queue.append(x)
    return frozenset(dist)


# --------------------------------------------------------------------------
# Instances


@dataclass(frozen=True, eq=False)
class SpinSystem:
    """Gibbs distribution with weight prod A(s_u, s_v) * prod h(s_v).

    ``vertex_fields`` (n x q) multiplies ``h`` per vertex; it is how pinned
    neighbors are absorbed by :func:`restrict`.
    """

    graph: Graph
    A: np.ndarray
    h: np.ndarray
    vertex_fields: np.ndarray | None = None
    origin: tuple[int, ...] | None = None
    pinned: tuple[tuple[int, int], ...] = ()
    name: str = ""

    def __post_init__(self):
        A = np.asarray(self.A, dtype=float)
        h = np.asarray(self.h, dtype=float)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "h", h)
        q = h.shape[0]
        if q < 2 or A.shape != (q, q):
            raise ValueError(f"need q >= 2 and A of shape ({q}, {q}), got {A.shape}")
        if not np.allclose(A, A.T, atol=0, rtol=0):
            raise ValueError("interaction matrix A must be symmetric")
        if (A < 0).any():
            raise ValueError("interaction matrix A must be entrywise nonnegative")
        if (h <= 0).any():
            raise ValueError("external fields h must be positive")
        if self.vertex_fields is not None:
            vf = np.asarray(self.vertex_fields, dtype=float)
            if vf.shape != (self.graph.n, q) or (vf < 0).any():
                raise ValueError("vertex_fields must be a nonnegative (n, q) array")
            object.__setattr__(self, "vertex_fields", vf)
        _init_origin(self)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def q(self) -> int:
        return self.h.shape[0]

    @property
    def interaction(self) -> np.ndarray:
        return self.A

    @property
    def fields(self) -> np.ndarray:
        f = np.tile(self.h, (self.n, 1))
        if self.vertex_fields is not None:
            f = f * self.vertex_fields
        return f

    @property
    def lists(self) -> tuple[tuple[int, ...], ...]:
        f = self.fields
        return tuple(tuple(int(c) for c in np.flatnonzero(f[v] > 0)) for v in range(self.n))


@dataclass(frozen=True, eq=False)
class ListColoringInstance:
    """Uniform distribution over proper colorings with sigma(v) in L(v)."""

    graph: Graph
    lists: tuple[tuple[int, ...], ...]
    q: int
    origin: tuple[int, ...] | None = None
    pinned: tuple[tuple[int, int], ...] = ()
    name: str = ""

    def __post_init__(self):
        lists = tuple(tuple(sorted(set(int(c) for c in L))) for L in self.lists)
        object.__setattr__(self, "lists", lists)
        if len(lists) != self.graph.n:
            raise ValueError("need one color list per vertex")
        for v, L in enumerate(lists):
            if not L:
                raise InfeasibleError(f"empty color list at vertex {v}")
            if L[0] < 0 or L[-1] >= self.q:
                raise ValueError(f"colors at vertex {v} outside [0, {self.q})")
        _init_origin(self)

    @property
    def n(self) -> int:
        return self.graph.n

    @property
    def interaction(self) -> np.ndarray:
        return np.ones((self.q, self.q)) - np.eye(self.q)

    @property
    def fields(self) -> np.ndarray:
        f = np.zeros((self.n, self.q))
        for v, L in enumerate(self.lists):
            f[v, list(L)] = 1.0
        return f


Instance = Union[SpinSystem, ListColoringInstance]


def _init_origin(inst) -> None:
    if inst.origin is None:
        object.__setattr__(inst, "origin", tuple(range(inst.graph.n)))
    elif len(inst.origin) != inst.graph.n:
        raise ValueError("origin must label every vertex")


def coloring(g: Graph, q: int, lists: Sequence[Sequence[int]] | None = None,
             name: str = "") -> ListColoringInstance:
    if lists is None:
        lists = [range(q)] * g.n
    return ListColoringInstance(g, tuple(tuple(L) for L in lists), q, name=name)


def ising(g: Graph, beta: float, field: float = 1.0, name: str = "") -> SpinSystem:
    e = math.exp(beta)
    return SpinSystem(g, np.array([[e, 1.0], [1.0, e]]), np.array([1.0, field]), name=name)


def hardcore(g: Graph, lam: float, name: str = "") -> SpinSystem:
    """Spin 0 is 'occupied' (weight lam), spin 1 'unoccupied' (weight 1)."""
    return SpinSystem(g, np.array([[0.0, 1.0], [1.0, 1.0]]), np.array([lam, 1.0]), name=name)


def product_spins(g: Graph, q: int = 2, name: str = "") -> SpinSystem:
    return SpinSystem(g, np.ones((q, q)), np.ones(q), name=name)


def gibbs_weight(inst: Instance, sigma: Sequence[int]) -> float:
    """Unnormalized Gibbs weight; 0 encodes an infeasible configuration."""
    sigma = [int(s) for s in sigma]
    if len(sigma) != inst.n:
        raise ValueError(f"configuration has length {len(sigma)}, expected {inst.n}")
    A, F = inst.interaction, inst.fields
    w = 1.0
    for v, s in enumerate(sigma):
        if not 0 <= s < inst.q:
            raise ValueError(f"spin {s} at vertex {v} outside [0, {inst.q})")
        w *= F[v, s]
    for u, v in inst.graph.edges:
        w *= A[sigma[u], sigma[v]]
    return float(w)


def restrict(inst: Instance, xi: Mapping[int, int]) -> Instance:
    """Condition on the boundary condition ``xi`` (local vertex -> spin).

    Pinned vertices are deleted; their interactions are folded into the
    remaining vertices (neighbors lose the pinned color for list-colorings).
    """
    if not xi:
        return inst
    xi = {int(v): int(c) for v, c in xi.items()}
    F, A = inst.fields, inst.interaction
    for v, c in xi.items():
        if not 0 <= v < inst.n:
            raise ValueError(f"pinned vertex {v} out of range")
        if not 0 <= c < inst.q or F[v, c] <= 0:
            raise InfeasibleError(f"spin {c} not admissible at vertex {v}")
    for u, v in inst.graph.edges:
        if u in xi and v in xi and A[xi[u], xi[v]] <= 0:
            raise InfeasibleError(f"pinned neighbors {u}, {v} conflict")
    keep = [v for v in range(inst.n) if v not in xi]
    relabel = {v: i for i, v in enumerate(keep)}
    sub = Graph.from_edges(len(keep), [(relabel[u], relabel[v]) for u, v in inst.graph.edges
                                       if u in relabel and v in relabel])
    origin = tuple(inst.origin[v] for v in keep)
    pinned = tuple(sorted(inst.pinned + tuple((inst.origin[v], c) for v, c in xi.items())))
    mult = np.ones((len(keep), inst.q))
    for i, v in enumerate(keep):
        for u in inst.graph.adjacency[v]:
            if u in xi:
                mult[i] *= A[:, xi[u]]
    new_fields = F[keep] * mult
    for i, v in enumerate(keep):
        if not (new_fields[i] > 0).any():
            raise InfeasibleError(f"pinning leaves vertex {v} with no admissible spin")
    if isinstance(inst, ListColoringInstance):
        lists = tuple(tuple(int(c) for c in np.flatnonzero(new_fields[i] > 0))
                      for i in range(len(keep)))
        return ListColoringInstance(sub, lists, inst.q, origin=origin, pinned=pinned,
                                    name=inst.name)
    vf = new_fields / inst.h
    return SpinSystem(sub, inst.A, inst.h, vertex_fields=vf, origin=origin, pinned=pinned,
                      name=inst.name)


@dataclass(frozen=True)
class UniverseIndex:
    """Bijection between admissible pairs (v, c) and 0..size-1, ordered by (v, c)."""

    elements: tuple[tuple[int, int], ...]
    offsets: tuple[int, ...]
    index: dict = field(compare=False, repr=False)

    @property
    def size(self) -> int:
        return len(self.elements)

    def encode(self, sigma: Sequence[int]) -> frozenset[int]:
        return frozenset(self.index[(v, int(c))] for v, c in enumerate(sigma))

    def decode(self, s: Iterable[int]) -> tuple[int, ...]:
        pairs = sorted(self.elements[i] for i in s)
        if [v for v, _ in pairs] != list(range(len(self.offsets) - 1)):
            raise ValueError("set does not encode a full configuration")
        return tuple(c for _, c in pairs)

    def vertex_of(self) -> np.ndarray:
        return np.array([v for v, _ in self.elements], dtype=np.int64)


def universe(inst: Instance) -> UniverseIndex:
    elements = [(v, c) for v, L in enumerate(inst.lists) for c in L]
    offsets = [0]
    for L in inst.lists:
        offsets.append(offsets[-1] + len(L))
    return UniverseIndex(tuple(elements), tuple(offsets),
                         {e: i for i, e in enumerate(elements)})


# --------------------------------------------------------------------------
# File formats


def read_graph(path) -> Graph:
    """Text format: first line ``n m``, then ``m`` lines ``u v`` (0-indexed)."""
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise ValueError(f"{path}: empty graph file")
    n, m = int(lines[0][0]), int(lines[0][1])
    if len(lines) - 1 != m:
        raise ValueError(f"{path}: header announces {m} edges, found {len(lines) - 1}")
    return Graph.from_edges(n, [(int(a), int(b)) for a, b in lines[1:]])


def write_graph(g: Graph, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"{g.n} {len(g.edges)}\n")
        for u, v in g.edges:
            fh.write(f"{u} {v}\n")


def read_lists(path, n: int) -> list[list[int]]:
    """One line per vertex: ``v: c1 c2 ...``."""
    lists: dict[int, list[int]] = {}
    with open(path) as fh:
        for ln in fh:
            if not ln.strip():
                continue
            head, _, tail = ln.partition(":")
            lists[int(head)] = [int(c) for c in tail.split()]
    if sorted(lists) != list(range(n)):
        raise ValueError(f"{path}: lists must cover vertices 0..{n - 1}")
    return [lists[v] for v in range(n)]


def write_lists(lists: Sequence[Sequence[int]], path) -> None:
    with open(path, "w") as fh:
        for v, L in enumerate(lists):
            fh.write(f"{v}: {' '.join(str(c) for c in L)}\n")


def read_spin_system(path, g: Graph) -> SpinSystem:
    """JSON document with keys ``q``, ``A`` (row-major, flat or nested) and ``h``."""
    with open(path) as fh:
        doc = json.load(fh)
    unknown = set(doc) - {"q", "A", "h"}
    if unknown:
        raise ValueError(f"{path}: unknown keys {sorted(unknown)}")
    q = int(doc["q"])
    A = np.asarray(doc["A"], dtype=float).reshape(q, q)
    return SpinSystem(g, A, np.asarray(doc["h"], dtype=float))


def write_spin_system(s: SpinSystem, path) -> None:
    with open(path, "w") as fh:
        json.dump({"q": s.q, "A": s.A.ravel().tolist(), "h": s.h.tolist()}, fh)
