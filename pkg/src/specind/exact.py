"""Exhaustive enumeration of Gibbs distributions and exact chain quantities.

Everything here is exact up to floating point: supports are enumerated in
full, kernels are assembled entry by entry, and spectral quantities come from
dense eigensolves.  Sizes are guarded by caps that raise :class:`CapExceeded`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order, connected_components

from .instance import (
    MAX_EXACT_VERTICES,
    CapExceeded,
    Instance,
    InfeasibleError,
    ListColoringInstance,
    UniverseIndex,
    restrict,
    universe,
)
from .dynamics import FlipParameters
from .transport import hamming_matrix, wasserstein1  # noqa: F401  (re-exported)

SUPPORT_CAP = 50_000
RAW_CAP = 5_000_000
DENSE_CAP = 2_500
TMIX_CAP = 1_500
SPARSE_GAP_CAP = 50_000


# --------------------------------------------------------------------------
# Distributions


@dataclass(frozen=True, eq=False)
class ExactDistribution:
    instance: Instance
    support: np.ndarray
    probs: np.ndarray
    weights: np.ndarray
    Z: float
    universe: UniverseIndex
    pos: np.ndarray = field(repr=False)
    radix: np.ndarray = field(repr=False)
    codes: np.ndarray = field(repr=False)

    @property
    def N(self) -> int:
        return self.support.shape[0]

    @property
    def n(self) -> int:
        return self.support.shape[1]

    def encode(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.int64))
        if X.shape[1] != self.n:
            raise ValueError(f"configurations have length {X.shape[1]}, expected {self.n}")
        ok = (X >= 0) & (X < self.pos.shape[1])
        P = np.where(ok, self.pos[np.arange(self.n), np.where(ok, X, 0)], -1)
        code = P @ self.radix if self.n else np.zeros(X.shape[0], dtype=np.int64)
        return np.where((P >= 0).all(axis=1), code, -1)

    def index_of(self, X) -> np.ndarray:
        """Support indices of the rows of X (``-1`` for states outside the support)."""
        return self.lookup(self.encode(X))

    def lookup(self, codes) -> np.ndarray:
        codes = np.asarray(codes, dtype=np.int64)
        i = np.searchsorted(self.codes, codes)
        i = np.minimum(i, self.N - 1)
        return np.where((codes >= 0) & (self.codes[i] == codes), i, -1)

    @cached_property
    def onehot(self) -> np.ndarray:
        """(N, |U|) indicator matrix of the set encoding of each state."""
        X = np.zeros((self.N, self.universe.size))
        off = np.asarray(self.universe.offsets[:-1], dtype=np.int64)
        cols = off[None, :] + self.pos[np.arange(self.n), self.support]
        X[np.arange(self.N)[:, None], cols] = 1.0
        return X

    @cached_property
    def element_vertex(self) -> np.ndarray:
        return self.universe.vertex_of()

    def recolor_index(self, v: int) -> np.ndarray:
        """(N, q) support indices of sigma_{vc}; -1 where c is not admissible."""
        q = self.pos.shape[1]
        pv = self.pos[v]
        cur = pv[self.support[:, v]]
        delta = (pv[None, :] - cur[:, None]) * self.radix[v]
        codes = np.where(pv[None, :] >= 0, self.codes[:, None] + delta, -1)
        return self.lookup(codes.ravel()).reshape(self.N, q)

    def conditional(self, v: int) -> np.ndarray:
        """(N, q) local conditional laws mu^v(. | sigma_{-v}) at every state."""
        inst = self.instance
        A = inst.interaction
        w = np.tile(inst.fields[v], (self.N, 1))
        for u in inst.graph.adjacency[v]:
            w *= A[:, self.support[:, u]].T
        return w / w.sum(axis=1, keepdims=True)


def _positions(inst: Instance):
    q = inst.q
    pos = np.full((inst.n, q), -1, dtype=np.int64)
    for v, L in enumerate(inst.lists):
        pos[v, list(L)] = np.arange(len(L))
    sizes = [len(L) for L in inst.lists]
    radix = np.ones(inst.n, dtype=np.int64)
    for v in range(inst.n - 2, -1, -1):
        radix[v] = radix[v + 1] * sizes[v + 1]
    return pos, radix


def configuration_weights(inst: Instance, X: np.ndarray) -> np.ndarray:
    """Vectorized Gibbs weights of the rows of X."""
    X = np.asarray(X, dtype=np.int64)
    F, A = inst.fields, inst.interaction
    w = np.ones(X.shape[0])
    for v in range(inst.n):
        w *= F[v, X[:, v]]
    for u, v in inst.graph.edges:
        w *= A[X[:, u], X[:, v]]
    return w


def _build(inst: Instance, support: np.ndarray, weights: np.ndarray) -> ExactDistribution:
    Z = float(weights.sum())
    if not Z > 0:
        raise InfeasibleError("empty support (partition function is zero)")
    pos, radix = _positions(inst)
    d = ExactDistribution(inst, support, weights / Z, weights, Z, universe(inst), pos, radix,
                          np.zeros(0, dtype=np.int64))
    object.__setattr__(d, "codes", d.encode(support) if inst.n else np.zeros(1, dtype=np.int64))
    if (np.diff(d.codes) <= 0).any():
        raise AssertionError("support is not in lexicographic order")
    return d


def enumerate_gibbs(inst: Instance, cap: int = SUPPORT_CAP, raw_cap: int = RAW_CAP
                    ) -> ExactDistribution:
    """Enumerate supp(mu) in lexicographic order with exact probabilities."""
    if inst.n > MAX_EXACT_VERTICES:
        raise CapExceeded(f"n={inst.n} exceeds the exact-path limit {MAX_EXACT_VERTICES}")
    raw = math.prod(len(L) for L in inst.lists)
    if raw > raw_cap:
        raise CapExceeded(f"product space of size {raw} exceeds raw cap {raw_cap}")
    if inst.n == 0:
        X = np.zeros((1, 0), dtype=np.int64)
    else:
        grids = np.meshgrid(*[np.asarray(L, dtype=np.int64) for L in inst.lists], indexing="ij")
        X = np.stack([g.ravel() for g in grids], axis=1)
    w = configuration_weights(inst, X)
    keep = w > 0
    if keep.sum() > cap:
        raise CapExceeded(f"support of size {int(keep.sum())} exceeds cap {cap}")
    return _build(inst, X[keep], w[keep])


def condition(d: ExactDistribution, xi: Mapping[int, int]) -> ExactDistribution:
    """mu | xi computed by masking the parent support (same result as
    ``enumerate_gibbs(restrict(d.instance, xi))``)."""
    if not xi:
        return d
    sub = restrict(d.instance, xi)
    mask = np.ones(d.N, dtype=bool)
    for v, c in xi.items():
        mask &= d.support[:, v] == c
    if not mask.any():
        raise InfeasibleError(f"boundary condition {dict(xi)} has probability zero")
    keep = [v for v in range(d.n) if v not in xi]
    X = d.support[mask][:, keep]
    return _build(sub, X, configuration_weights(sub, X))


def embed_indices(child: ExactDistribution, parent: ExactDistribution) -> np.ndarray:
    """Parent-support indices of the child's states (child = parent conditioned)."""
    c_inst, p_inst = child.instance, parent.instance
    col = {r: j for j, r in enumerate(c_inst.origin)}
    pins = dict(c_inst.pinned)
    X = np.empty((child.N, parent.n), dtype=np.int64)
    for i, r in enumerate(p_inst.origin):
        if r in col:
            X[:, i] = child.support[:, col[r]]
        elif r in pins:
            X[:, i] = pins[r]
        else:
            raise ValueError(f"vertex {r} of the parent is unknown to the child")
    idx = parent.index_of(X)
    if (idx < 0).any():
        raise ValueError("child support is not contained in the parent support")
    return idx


def marginal_vector(d: ExactDistribution) -> np.ndarray:
    return d.onehot.T @ d.probs


def tv_distance(p, q) -> float:
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {q.shape}")
    return 0.5 * float(np.abs(p - q).sum())


# --------------------------------------------------------------------------
# Influence, spectral independence, Dobrushin


def _influence_from(X: np.ndarray, w: np.ndarray, element_vertex: np.ndarray,
                    exclude_same_site: bool) -> tuple[np.ndarray, np.ndarray]:
    joint = X.T @ (X * w[:, None])
    m = np.diag(joint).copy()
    I = np.zeros_like(joint)
    live = m > 0
    I[live] = joint[live] / m[live, None] - m[None, :]
    if exclude_same_site:
        I[element_vertex[:, None] == element_vertex[None, :]] = 0.0
    return I, m


def influence_matrix(d: ExactDistribution, exclude_same_site: bool = False) -> np.ndarray:
    """I(i, j) = Pr[j in S | i in S] - Pr[j in S] over the whole universe.

    The diagonal is 1 - Pr[i in S] and same-vertex entries are -Pr[j in S], as
    the formula gives; rows of elements with Pr[i in S] = 0 are zero.  With
    ``exclude_same_site`` every same-vertex entry (diagonal included) is zeroed.
    """
    I, _ = _influence_from(d.onehot, d.probs, d.element_vertex, exclude_same_site)
    return I


def influence_matrix_oracle(d: ExactDistribution) -> np.ndarray:
    """Independent route: re-enumerate mu | i from scratch for every element i."""
    inst = d.instance
    base = enumerate_gibbs(inst)
    m = marginal_vector(base)
    U = d.universe
    local = {r: v for v, r in enumerate(inst.origin)}
    I = np.zeros((U.size, U.size))
    for i, (v, c) in enumerate(U.elements):
        if m[i] <= 0:
            continue
        sub = enumerate_gibbs(restrict(inst, {v: c}))
        cond = np.zeros(U.size)
        cond[i] = 1.0
        ms = marginal_vector(sub)
        for k, (w, c2) in enumerate(sub.universe.elements):
            cond[U.index[(local[sub.instance.origin[w]], c2)]] = ms[k]
        I[i] = cond - m
    return I


def lambda_max(I: np.ndarray, m: np.ndarray | None = None, tol: float = 1e-8) -> float:
    """Largest eigenvalue of an influence matrix (restricted to 0 < Pr < 1)."""
    if m is not None:
        keep = (m > 0) & (m < 1 - 1e-15)
        I = I[np.ix_(keep, keep)]
    if I.size == 0:
        return 0.0
    ev = np.linalg.eigvals(I)
    scale = max(1.0, float(np.abs(I).sum(axis=1).max()))
    if np.abs(ev.imag).max() > tol * scale:
        raise ArithmeticError(f"influence matrix has complex spectrum "
                              f"(max |imag| = {np.abs(ev.imag).max():.3g})")
    return float(ev.real.max())


def inf_norm(I: np.ndarray) -> float:
    return float(np.abs(I).sum(axis=1).max()) if I.size else 0.0


@dataclass
class SpectralIndependence:
    eta: list[float]
    lambda_max: list[float]
    infnorm: list[float]
    worst_pinning: list[tuple[tuple[int, int], ...]]
    nodes: int
    exclude_same_site: bool = False

    @property
    def eta0(self) -> float:
        return self.eta[0]


def color_symmetric(d: ExactDistribution) -> bool:
    """True for colorings whose lists are all of [q] (any colour permutation is
    then an automorphism of the chain preserving Hamming distance)."""
    inst = d.instance
    full = tuple(range(inst.q)) if isinstance(inst, ListColoringInstance) else None
    return full is not None and all(tuple(L) == full for L in inst.lists)


def spectral_independence(d: ExactDistribution, exclude_same_site: bool = False,
                          max_nodes: int = 50_000, levels: int | None = None
                          ) -> SpectralIndependence:
    """eta_k = max over feasible pinnings A (|A| = k <= n-2) of lambda_max(I_{mu|A}) - 1.

    With ``exclude_same_site`` the vertex-influence convention is used instead:
    same-vertex entries are zeroed and eta_k is lambda_max itself.
    """
    n = d.n
    depth = max(n - 1, 1) if levels is None else levels
    lam = [-math.inf] * depth
    norms = [0.0] * depth
    worst: list[tuple] = [()] * depth
    X, p, ev = d.onehot, d.probs, d.element_vertex
    sym = color_symmetric(d)
    count = 0

    def visit(rows: np.ndarray, start: int, pins: tuple, k: int) -> None:
        nonlocal count
        count += 1
        if count > max_nodes:
            raise CapExceeded(f"more than {max_nodes} pinnings")
        w = p[rows] / p[rows].sum()
        I, m = _influence_from(X[rows], w, ev, exclude_same_site)
        lm = lambda_max(I, m)
        if lm > lam[k]:
            lam[k], worst[k] = lm, pins
        norms[k] = max(norms[k], inf_norm(I))
        if k + 1 >= depth:
            return
        sub = d.support[rows]
        used = {c for _, c in pins}
        fresh = min(set(range(d.instance.q)) - used, default=None) if sym else None
        for v in range(start, n):
            for c in np.unique(sub[:, v]):
                if sym and c not in used and c != fresh:
                    continue
                visit(rows[sub[:, v] == c], v + 1, pins + ((v, int(c)),), k + 1)

    visit(np.arange(d.N), 0, (), 0)
    shift = 0.0 if exclude_same_site else 1.0
    return SpectralIndependence([x - shift for x in lam], lam, norms, worst, count,
                                exclude_same_site)


def dobrushin_matrix(d: ExactDistribution) -> tuple[np.ndarray, float]:
    """Dobrushin influence matrix rho(u -> v) and gamma = max_u sum_v rho(u -> v).

    Pairs whose contexts sigma_{-v} are not feasible are skipped.
    """
    n = d.n
    rho = np.zeros((n, n))
    for v in range(n):
        cur = d.pos[v][d.support[:, v]]
        key = d.codes - cur * d.radix[v]
        ukeys, first = np.unique(key, return_index=True)
        laws = d.conditional(v)[first]
        ctx = d.support[first]
        for u in range(n):
            if u == v:
                continue
            k2 = ukeys - d.pos[u][ctx[:, u]] * d.radix[u]
            order = np.argsort(k2, kind="stable")
            k2s = k2[order]
            starts = np.flatnonzero(np.r_[True, k2s[1:] != k2s[:-1]])
            ends = np.r_[starts[1:], k2s.size]
            best = 0.0
            for a, b in zip(starts, ends):
                if b - a < 2:
                    continue
                G = laws[order[a:b]]
                tv = 0.5 * np.abs(G[:, None, :] - G[None, :, :]).sum(axis=2)
                best = max(best, float(tv.max()))
            rho[u, v] = best
    gamma = float(rho.sum(axis=1).max()) if n else 0.0
    return rho, gamma


# --------------------------------------------------------------------------
# Kernels


@dataclass(frozen=True, eq=False)
class TransitionMatrix:
    dist: ExactDistribution
    P: sp.csr_matrix
    stationary: np.ndarray
    name: str = ""

    @property
    def N(self) -> int:
        return self.P.shape[0]

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.N > cap:
            raise CapExceeded(f"dense kernel of size {self.N} exceeds cap {cap}")
        return self.P.toarray()

    def row_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.P.sum(axis=1)).ravel() - 1).max())

    def stationarity_error(self) -> float:
        return float(np.abs(self.P.T @ self.stationary - self.stationary).max())

    def detailed_balance_error(self) -> float:
        F = sp.diags(self.stationary) @ self.P
        D = (F - F.T).tocoo()
        return float(np.abs(D.data).max()) if D.nnz else 0.0

    def min_entry(self) -> float:
        return float(self.P.data.min()) if self.P.nnz else 0.0

    def check(self, reversible: bool = True, tol_rows: float = 1e-12,
              tol_stat: float = 1e-10, tol_db: float = 1e-12) -> None:
        if self.min_entry() < -1e-15:
            raise AssertionError(f"{self.name}: negative kernel entry")
        if (e := self.row_sum_error()) > tol_rows:
            raise AssertionError(f"{self.name}: row sums off by {e:.3g}")
        if (e := self.stationarity_error()) > tol_stat:
            raise AssertionError(f"{self.name}: stationarity violated by {e:.3g}")
        if reversible and (e := self.detailed_balance_error()) > tol_db:
            raise AssertionError(f"{self.name}: detailed balance violated by {e:.3g}")

    def is_irreducible(self) -> bool:
        if self.N == 1:
            return True
        k, _ = connected_components(self.P, directed=True, connection="strong")
        return k == 1

    def period(self) -> int:
        """Period of an irreducible kernel (gcd of level differences along edges)."""
        order, pred = breadth_first_order(self.P, 0, directed=True, return_predecessors=True)
        level = np.full(self.N, -1)
        level[0] = 0
        for x in order[1:]:
            level[x] = level[pred[x]] + 1
        C = self.P.tocoo()
        diffs = np.abs(level[C.row] + 1 - level[C.col])
        return int(np.gcd.reduce(diffs)) if diffs.size else 1

    def max_displacement(self) -> int:
        """Largest vertex-Hamming distance over nonzero transitions."""
        C = self.P.tocoo()
        m = C.data > 0
        S = self.dist.support
        return int((S[C.row[m]] != S[C.col[m]]).sum(axis=1).max()) if m.any() else 0


def _coo_kernel(d: ExactDistribution, rows, cols, vals, name: str) -> TransitionMatrix:
    rows = np.concatenate(rows) if rows else np.zeros(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.zeros(0, dtype=np.int64)
    vals = np.concatenate(vals) if vals else np.zeros(0)
    if (cols < 0).any():
        raise AssertionError(f"{name}: transition leaves the support")
    P = sp.csr_matrix((vals, (rows, cols)), shape=(d.N, d.N))
    P.sum_duplicates()
    P.eliminate_zeros()
    return TransitionMatrix(d, P, d.probs, name)


def glauber_kernel(d: ExactDistribution) -> TransitionMatrix:
    """P(sigma -> sigma_vc) = mu^v(c | sigma_{-v}) / n."""
    if d.n == 0:
        return TransitionMatrix(d, sp.csr_matrix(np.ones((1, 1))), d.probs, "glauber")
    rows, cols, vals = [], [], []
    base = np.arange(d.N)
    for v in range(d.n):
        cond = d.conditional(v) / d.n
        idx = d.recolor_index(v)
        m = cond > 0
        rows.append(np.broadcast_to(base[:, None], m.shape)[m])
        cols.append(idx[m])
        vals.append(cond[m])
    return _coo_kernel(d, rows, cols, vals, "glauber")


def _row_groups(Z: np.ndarray) -> np.ndarray:
    """Labels of equal rows of a small nonnegative integer matrix."""
    base = int(Z.max()) + 1 if Z.size else 1
    if Z.shape[1] * math.log2(max(base, 2)) < 62:
        key = Z.astype(np.int64) @ (base ** np.arange(Z.shape[1], dtype=np.int64))
        _, group = np.unique(key, return_inverse=True)
    else:
        _, group = np.unique(Z, axis=0, return_inverse=True)
    return group.ravel()


def down_up_kernel(d: ExactDistribution) -> TransitionMatrix:
    """Drop a uniform element of S, then resample a superset proportionally to mu.

    Works from the set-system view only: the candidates after dropping vertex v's
    element are the support states sharing every other element.
    """
    if d.n == 0:
        return TransitionMatrix(d, sp.csr_matrix(np.ones((1, 1))), d.probs, "down_up")
    rows, cols, vals = [], [], []
    for v in range(d.n):
        group = _row_groups(np.delete(d.support, v, axis=1))
        order = np.argsort(group, kind="stable")
        gs = group[order]
        starts = np.flatnonzero(np.r_[True, gs[1:] != gs[:-1]])
        sizes = np.diff(np.r_[starts, gs.size])
        width = int(sizes.max())
        members = np.full((starts.size, width), -1, dtype=np.int64)
        for j in range(width):
            has = sizes > j
            members[has, j] = order[starts[has] + j]
        mass = np.where(members >= 0, d.probs[np.maximum(members, 0)], 0.0)
        trans = mass / mass.sum(axis=1, keepdims=True) / d.n
        tg = members[group]
        tv = trans[group]
        m = tg >= 0
        rows.append(np.broadcast_to(np.arange(d.N)[:, None], m.shape)[m])
        cols.append(tg[m])
        vals.append(tv[m])
    return _coo_kernel(d, rows, cols, vals, "down_up")


def flip_moves(d: ExactDistribution, max_size: int = 6):
    """Kempe sizes and target support indices for every (state, v, list slot).

    Computed once per distribution and size limit; the arrays are read-only.
    """
    from ._kempe import kempe_moves

    key = f"_flip_moves_{max_size}"
    if key in d.__dict__:
        return d.__dict__[key]
    inst = d.instance
    if not isinstance(inst, ListColoringInstance):
        raise TypeError("flip dynamics needs a list-coloring instance")
    g = inst.graph
    indptr = np.zeros(g.n + 1, dtype=np.int64)
    indptr[1:] = np.cumsum([len(a) for a in g.adjacency])
    indices = np.array([u for a in g.adjacency for u in a], dtype=np.int64)
    lens = np.array([len(L) for L in inst.lists], dtype=np.int64)
    lists = np.full((g.n, max(lens.max(initial=1), 1)), -1, dtype=np.int64)
    for v, L in enumerate(inst.lists):
        lists[v, :len(L)] = L
    sizes, tcodes = kempe_moves(np.ascontiguousarray(d.support, dtype=np.int64), indptr, indices,
                                lists, lens, d.pos, d.radix, d.codes, max_size)
    targets = np.where(tcodes >= 0, d.lookup(tcodes.ravel()).reshape(tcodes.shape), -1)
    out = (sizes, targets, lists, lens)
    for a in out:
        a.flags.writeable = False
    d.__dict__[key] = out
    return out


def flip_kernel(d: ExactDistribution, params: FlipParameters) -> TransitionMatrix:
    """Exact flip-dynamics kernel: uniform v, uniform c in L(v), flip S_sigma(v, c)
    with probability p_|S| / |S| when flippable."""
    if d.n == 0:
        return TransitionMatrix(d, sp.csr_matrix(np.ones((1, 1))), d.probs, "flip")
    sizes, targets, lists, lens = flip_moves(d, params.J)
    acc = np.zeros(params.J + 2)
    for j in range(1, params.J + 1):
        acc[j] = params.accept(j)
    draw = 1.0 / (d.n * lens)
    w = acc[np.minimum(sizes, params.J + 1)] * draw[None, :, None]
    m = (targets >= 0) & (w > 0)
    rows = np.broadcast_to(np.arange(d.N)[:, None, None], m.shape)[m]
    cols, vals = targets[m], w[m]
    stay = 1.0 - np.bincount(rows, weights=vals, minlength=d.N)
    rows = np.concatenate([rows, np.arange(d.N)])
    cols = np.concatenate([cols, np.arange(d.N)])
    vals = np.concatenate([vals, stay])
    T = _coo_kernel(d, [rows], [cols], [vals], f"flip[{params.preset}]")
    return T


def embed_kernel(child_T: TransitionMatrix, parent: ExactDistribution) -> sp.csr_matrix:
    """Child kernel re-indexed on the parent support (zero outside the child's)."""
    idx = embed_indices(child_T.dist, parent)
    C = child_T.P.tocoo()
    return sp.csr_matrix((C.data, (idx[C.row], idx[C.col])), shape=(parent.N, parent.N))


# --------------------------------------------------------------------------
# Spectral quantities and mixing


@dataclass
class SpectralGap:
    gap: float
    lambda2: float
    lambda_min: float


def _symmetrized(T: TransitionMatrix, cap: int) -> np.ndarray:
    db = T.detailed_balance_error()
    if db > 1e-10:
        raise ValueError(f"kernel is not reversible (detailed balance error {db:.3g})")
    P = T.dense(cap)
    s = np.sqrt(T.stationary)
    S = s[:, None] * P / s[None, :]
    return (S + S.T) / 2


def spectral_gap(T: TransitionMatrix, cap: int = DENSE_CAP,
                 sparse_cap: int = SPARSE_GAP_CAP) -> SpectralGap:
    """1 - lambda_2 of the pi-symmetrized kernel: a dense eigensolve up to ``cap``
    states, Lanczos up to ``sparse_cap``."""
    if T.N == 1:
        return SpectralGap(1.0, 0.0, 1.0)
    if T.N <= cap:
        ev = scipy.linalg.eigvalsh(_symmetrized(T, cap))
        return SpectralGap(float(1 - ev[-2]), float(ev[-2]), float(ev[0]))
    if T.N > sparse_cap:
        raise CapExceeded(f"spectral gap over {T.N} states exceeds cap {sparse_cap}")
    return _lanczos_gap(T)


def _lanczos_gap(T: TransitionMatrix) -> SpectralGap:
    """Top eigenvalue of S - s s^T (S the symmetrized kernel, s = sqrt(pi)).

    The Ritz value is pushed up by its residual norm, so the returned gap is a
    lower bound as long as Lanczos found the top eigenpair.  lambda_min is not
    computed (NaN).
    """
    db = T.detailed_balance_error()
    if db > 1e-10:
        raise ValueError(f"kernel is not reversible (detailed balance error {db:.3g})")
    N = T.N
    s = np.sqrt(T.stationary)
    S = (sp.diags(s) @ T.P @ sp.diags(1 / s)).tocsr()
    S = ((S + S.T) / 2).tocsr()
    op = spla.LinearOperator((N, N), matvec=lambda y: S @ y - s * (s @ y), dtype=float)
    v0 = np.random.default_rng(0).normal(size=N)
    w, V = spla.eigsh(op, k=1, which="LA", tol=1e-12, v0=v0, ncv=40)
    lam2 = w[0] + float(np.linalg.norm(op @ V[:, 0] - w[0] * V[:, 0]))
    return SpectralGap(float(1 - lam2), float(lam2), math.nan)


def mixing_time_exact(T: TransitionMatrix, eps: float = 0.25, budget: int = 100_000,
                      cap: int = TMIX_CAP) -> tuple[int, int]:
    """Exact t_mix(eps) by matrix powering; returns (t, worst start index)."""
    if not T.is_irreducible():
        raise ValueError("chain is reducible")
    if T.period() != 1:
        raise ValueError("chain is periodic")
    P = T.dense(cap)
    pi = T.stationary
    M = np.eye(T.N)
    hit = np.full(T.N, -1)
    for t in range(budget + 1):
        tv = 0.5 * np.abs(M - pi[None, :]).sum(axis=1)
        newly = (hit < 0) & (tv <= eps)
        hit[newly] = t
        if (hit >= 0).all():
            worst = int(np.argmax(hit))
            return int(hit[worst]), worst
        M = M @ P
    raise RuntimeError(f"budget of {budget} steps exhausted before TV <= {eps}")


def local_to_global_bound(eta: Sequence[float], n: int) -> float:
    """(1/n) prod_{k=0}^{n-2} (1 - eta_k / (n - k - 1)); returns <= 0 when some
    factor is nonpositive (the product formula then certifies nothing)."""
    if len(eta) != max(n - 1, 0):
        raise ValueError(f"need n-1 = {n - 1} values of eta, got {len(eta)}")
    factors = [1 - e / (n - k - 1) for k, e in enumerate(eta)]
    val = math.prod(factors) / n
    if any(f <= 0 for f in factors):
        return min(val, 0.0)
    return val


def ltg_applicable(eta: Sequence[float], n: int) -> bool:
    return all(e < n - k - 1 for k, e in enumerate(eta))


# --------------------------------------------------------------------------
# Dirichlet forms and functional constants


def dirichlet_form(T: TransitionMatrix, f, g) -> float:
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    return float(np.dot(T.stationary * f, g - T.P @ g))


def dirichlet_form_edges(T: TransitionMatrix, f, g) -> float:
    """Symmetric form 1/2 sum pi(x) P(x,y) (f(x)-f(y)) (g(x)-g(y)); tolerates g = -inf."""
    C = T.P.tocoo()
    df = np.asarray(f)[C.row] - np.asarray(f)[C.col]
    with np.errstate(invalid="ignore"):
        dg = np.asarray(g)[C.row] - np.asarray(g)[C.col]
        terms = T.stationary[C.row] * C.data * np.where(df == 0, 0.0, df * dg)
    return 0.5 * float(terms.sum())


def variance(pi, f) -> float:
    f = np.asarray(f, dtype=float)
    m = float(np.dot(pi, f))
    return max(float(np.dot(pi, (f - m) ** 2)), 0.0)


def entropy(pi, f) -> float:
    f = np.asarray(f, dtype=float)
    if (f < 0).any():
        raise ValueError("entropy needs a nonnegative function")
    with np.errstate(divide="ignore", invalid="ignore"):
        flogf = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    m = float(np.dot(pi, f))
    val = float(np.dot(pi, flogf)) - (m * math.log(m) if m > 0 else 0.0)
    return max(val, 0.0)


def local_variation(T: TransitionMatrix, f) -> float:
    """v(f) = max_x sum_y P(x,y) (f(x) - f(y))^2."""
    f = np.asarray(f, dtype=float)
    C = T.P.tocoo()
    per = np.bincount(C.row, weights=C.data * (f[C.row] - f[C.col]) ** 2, minlength=T.N)
    return float(per.max())


@dataclass
class FunctionalReport:
    dirichlet: float
    dirichlet_log: float
    variance: float
    entropy: float
    v: float
    spectral_gap: float
    mlsi_upper: float
    lsi_upper: float
    ordering_flags: dict
    tmix_reports: dict
    chernoff_reports: dict
    certified: dict = field(default_factory=lambda: {"spectral_gap": True, "mlsi_upper": False,
                                                     "lsi_upper": False, "tmix_reports": False,
                                                     "chernoff_reports": False})


def _ratio_pool(T: TransitionMatrix, rng: np.random.Generator, pool: int):
    N = T.N
    funcs = [np.exp(rng.normal(size=N) * s) for s in (0.1, 0.5, 1.0, 2.0)
             for _ in range(max(pool // 4, 1))]
    for x in range(min(N, pool)):
        for t in (0.1, 1.0, 10.0):
            f = np.ones(N)
            f[x] += t
            funcs.append(f)
    if N > 1 and N <= DENSE_CAP:
        ev, vecs = scipy.linalg.eigh(_symmetrized(T, DENSE_CAP))
        phi = vecs[:, -2] / np.sqrt(T.stationary)
        phi = phi / np.abs(phi).max()
        for t in (1e-3, 1e-2, 0.1, 0.5, 0.9):
            funcs.append(1 + t * phi)
    return funcs


def functional_report(T: TransitionMatrix, f, rng: np.random.Generator | None = None,
                      pool: int = 32, eps: float = 0.25, deviation: float = 1.0
                      ) -> FunctionalReport:
    """Dirichlet forms, variance, entropy and v(f) of ``f``; exact spectral gap;
    upper-bound estimates of the modified and standard log-Sobolev constants."""
    f = np.asarray(f, dtype=float)
    if not np.isfinite(f).all():
        raise ValueError("f must be finite")
    pi = T.stationary
    rng = rng or np.random.default_rng(0)
    nonneg = bool((f >= 0).all())
    with np.errstate(divide="ignore"):
        logf = np.log(f) if nonneg else None
    dir_log = dirichlet_form_edges(T, f, logf) if nonneg else math.nan
    lam = spectral_gap(T).gap
    rho_hat = kappa_hat = math.inf
    for g in _ratio_pool(T, rng, pool):
        ent = entropy(pi, g)
        if ent <= 1e-14:
            continue
        rho_hat = min(rho_hat, dirichlet_form_edges(T, g, np.log(g)) / ent)
        kappa_hat = min(kappa_hat, dirichlet_form(T, np.sqrt(g), np.sqrt(g)) / ent)
    pi_min = float(pi.min())
    vf = local_variation(T, f)
    llp = math.log(1 / pi_min) if pi_min < 1 else 0.0
    lll = math.log(llp) if llp > 1 else 0.0
    tmix = {
        "from_gap": (0.5 * llp + math.log(1 / (2 * eps))) / lam if lam > 0 else math.inf,
        "from_mlsi_estimate": (lll + math.log(1 / (2 * eps**2))) / rho_hat,
        "from_lsi_estimate": (lll + math.log(1 / (2 * eps**2))) / (4 * kappa_hat),
    }
    chern = {
        "deviation": deviation,
        "from_mlsi_estimate": math.exp(-rho_hat * deviation**2 / (2 * vf)) if vf > 0 else 0.0,
        "from_lsi_estimate": math.exp(-kappa_hat * deviation**2 / (2 * vf)) if vf > 0 else 0.0,
    }
    flags = {"4kappa<=rho": bool(4 * kappa_hat <= rho_hat + 1e-12),
             "rho<=2lambda": bool(rho_hat <= 2 * lam + 1e-12)}
    return FunctionalReport(
        dirichlet=dirichlet_form(T, f, f),
        dirichlet_log=dir_log,
        variance=variance(pi, f),
        entropy=entropy(pi, f) if nonneg else math.nan,
        v=vf,
        spectral_gap=lam,
        mlsi_upper=rho_hat,
        lsi_upper=kappa_hat,
        ordering_flags=flags,
        tmix_reports=tmix,
        chernoff_reports=chern,
    )
