"""Markovian couplings, amortized convergence constants and curvature.

Distances are vertex-Hamming throughout; the constant C and the curvature are
ratios and do not depend on the factor 2 relating vertex- and set-Hamming.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import breadth_first_order, shortest_path

from .certify import Certificate
from .dynamics import (
    FlipParameters,
    FlipSampler,
    _categorical,
    _Padded,
    glauber_laws_batch,
)
from .exact import (
    ExactDistribution,
    TransitionMatrix,
    color_symmetric,
    dobrushin_matrix,
    flip_kernel,
    flip_moves,
    glauber_kernel,
)
from .instance import CapExceeded, Instance
from .transport import hamming_matrix, wasserstein1

JOINT_CAP = 500
PAIR_CAP = 250_000


class NonConvergentCoupling(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Maximal couplings of two laws


def quantile_coupling(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Joint law obtained from one shared uniform through both inverse CDFs
    (north-west corner rule); batched over leading axes."""
    A = np.cumsum(a, axis=-1)
    B = np.cumsum(b, axis=-1)
    A0 = A - a
    B0 = B - b
    lo = np.maximum(A0[..., :, None], B0[..., None, :])
    hi = np.minimum(A[..., :, None], B[..., None, :])
    return np.clip(hi - lo, 0.0, None)


def maximal_coupling(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Shared mass min(a, b) on the diagonal, residuals coupled independently.

    Unlike the quantile rule this commutes with relabelling the outcomes, which
    the orbit-reduced joint kernels rely on.
    """
    m = np.minimum(a, b)
    ra, rb = a - m, b - m
    rest = 0.5 * (ra.sum(axis=-1) + rb.sum(axis=-1))
    safe = np.where(rest > 1e-15, rest, np.inf)
    J = ra[..., :, None] * rb[..., None, :] / safe[..., None, None]
    idx = np.arange(a.shape[-1])
    J[..., idx, idx] += m
    return J


def _inverse_cdf(W: np.ndarray, u: np.ndarray) -> np.ndarray:
    cum = np.cumsum(W, axis=1)
    return np.minimum((u[:, None] * cum[:, -1:] >= cum).sum(axis=1), W.shape[1] - 1)


def sample_maximal(a: np.ndarray, b: np.ndarray, rng: np.random.Generator):
    """Draw rows of (X, Y) from :func:`maximal_coupling` of the rows of a and b."""
    m = np.minimum(a, b)
    w = m.sum(axis=1)
    u1 = rng.random(a.shape[0])
    u2 = rng.random(a.shape[0])
    common = u1 < w
    x = np.empty(a.shape[0], dtype=np.int64)
    y = np.empty(a.shape[0], dtype=np.int64)
    if common.any():
        x[common] = y[common] = _inverse_cdf(m[common], u2[common])
    r = ~common
    if r.any():
        u3 = rng.random(int(r.sum()))
        x[r] = _inverse_cdf(a[r] - m[r], u2[r])
        y[r] = _inverse_cdf(b[r] - m[r], u3)
    return x, y


# --------------------------------------------------------------------------
# Coupling definitions


def canonical_states(d: ExactDistribution) -> np.ndarray:
    """Support indices whose colours appear in order 0, 1, 2, ... of first use."""
    S = d.support
    canon = np.ones(d.N, dtype=bool)
    seen_max = np.full(d.N, -1)
    for j in range(d.n):
        canon &= S[:, j] <= seen_max + 1
        seen_max = np.maximum(seen_max, S[:, j])
    return np.flatnonzero(canon)


def _relabel(Z: np.ndarray, q: int) -> np.ndarray:
    """Rename the values of each row in order of first appearance."""
    w = Z.shape[1]
    if w <= 16:
        # position of each entry's first occurrence, then rank among first occurrences
        Z8 = Z.astype(np.int16 if q > 127 else np.int8)
        first = (Z8[:, :, None] == Z8[:, None, :]).argmax(axis=2).astype(np.int8)
        rank = np.cumsum(first == np.arange(w, dtype=np.int8), axis=1, dtype=np.int8) - 1
        return np.take_along_axis(rank, first.astype(np.intp), axis=1).astype(np.int64)
    label = np.full((len(Z), q), -1, dtype=np.int64)
    nxt = np.zeros(len(Z), dtype=np.int64)
    rows = np.arange(len(Z))
    canon = np.empty_like(Z)
    for j in range(Z.shape[1]):
        c = Z[:, j]
        new = label[rows, c] < 0
        label[rows[new], c[new]] = nxt[new]
        nxt[new] += 1
        canon[:, j] = label[rows, c]
    return canon


class PairOrbits:
    """Ordered pairs of support states modulo a common relabelling of colours.

    Only meaningful when every colour permutation is a symmetry of the chain
    (full lists, see :func:`color_symmetric`).
    """

    def __init__(self, d: ExactDistribution, cap: int = PAIR_CAP, chunk: int = 400_000):
        self.d = d
        self.q = d.instance.q
        if self.q ** (2 * d.n) >= 2 ** 62:
            raise CapExceeded("pair codes do not fit in 64 bits")
        self._radix = self.q ** np.arange(2 * d.n - 1, -1, -1, dtype=np.int64)
        xs = canonical_states(d)
        per = max(1, chunk // max(d.N, 1))
        codes, reps = [], []
        for s in range(0, xs.size, per):
            x = np.repeat(xs[s:s + per], d.N)
            y = np.tile(np.arange(d.N), xs[s:s + per].size)
            c, first = np.unique(self.code(x, y), return_index=True)
            codes.append(c)
            reps.append(np.stack([x[first], y[first]], axis=1))
            if sum(map(len, codes)) > 4 * cap:
                raise CapExceeded(f"more than {cap} pair orbits")
        codes = np.concatenate(codes)
        reps = np.concatenate(reps)
        self.codes, first = np.unique(codes, return_index=True)
        self.reps = reps[first]
        if self.codes.size > cap:
            raise CapExceeded(f"{self.codes.size} pair orbits exceed cap {cap}")

    @property
    def M(self) -> int:
        return self.codes.size

    def code(self, x, y) -> np.ndarray:
        S = self.d.support
        Z = np.concatenate([S[np.asarray(x)], S[np.asarray(y)]], axis=1)
        return _relabel(Z, self.q) @ self._radix

    def index(self, x, y) -> np.ndarray:
        c = self.code(np.atleast_1d(x), np.atleast_1d(y))
        k = np.searchsorted(self.codes, c)
        if (k >= self.M).any() or (self.codes[np.minimum(k, self.M - 1)] != c).any():
            raise KeyError("pair outside the enumerated orbits")
        return k


@dataclass
class JointKernel:
    """Explicit transition matrix on ordered pairs.

    On the full pair space pair (x, y) sits at index x*N + y; with ``orbits``
    the states are colour-relabelling orbits of pairs instead.
    """

    base: TransitionMatrix
    Q: sp.csr_matrix
    name: str = ""
    orbits: PairOrbits | None = None

    @property
    def N(self) -> int:
        return self.base.N

    @property
    def M(self) -> int:
        return self.Q.shape[0]

    def pair_index(self, x, y) -> np.ndarray:
        x, y = np.asarray(x, dtype=np.int64), np.asarray(y, dtype=np.int64)
        if self.orbits is None:
            return x * self.N + y
        return self.orbits.index(x, y)

    def pair_states(self) -> np.ndarray:
        """(M, 2) base-state indices representing each pair state."""
        if self.orbits is None:
            k = np.arange(self.N * self.N)
            return np.stack(np.divmod(k, self.N), axis=1)
        return self.orbits.reps

    def distances(self) -> np.ndarray:
        if self.orbits is None:
            return pair_distances(self.base.dist)
        S = self.base.dist.support
        r = self.orbits.reps
        return (S[r[:, 0]] != S[r[:, 1]]).sum(axis=1).astype(float)

    def diagonal(self) -> np.ndarray:
        if self.orbits is None:
            return np.arange(self.N) * (self.N + 1)
        return np.flatnonzero(self.distances() == 0)

    def marginal_errors(self) -> tuple[float, float]:
        """Max deviation of the X- and Y-marginals from the base kernel rows."""
        if self.orbits is not None:
            raise ValueError("marginals are only defined on the full pair space")
        N = self.N
        C = self.Q.tocoo()
        x2, y2 = np.divmod(C.col, N)
        rows = np.arange(N * N)
        P = self.base.P.tocsr()
        errs = []
        for dst, src in ((x2, rows // N), (y2, rows % N)):
            M = sp.csr_matrix((C.data, (C.row, dst)), shape=(N * N, N))
            errs.append(float(abs(M - P[src]).max()))
        return errs[0], errs[1]

    def row_sum_error(self) -> float:
        return float(np.abs(np.asarray(self.Q.sum(axis=1)).ravel() - 1).max())

    def is_sticky(self) -> bool:
        D = self.distances()
        C = self.Q[self.diagonal()].tocoo()
        return bool(np.all((D[C.col] == 0) | (C.data == 0)))

    def check(self, tol: float = 1e-12) -> None:
        if (e := self.row_sum_error()) > tol:
            raise AssertionError(f"{self.name}: joint rows off by {e:.3g}")
        ex, ey = self.marginal_errors() if self.orbits is None else (0.0, 0.0)
        if max(ex, ey) > tol:
            raise AssertionError(f"{self.name}: marginals off by {max(ex, ey):.3g}")
        if not self.is_sticky():
            raise AssertionError(f"{self.name}: coupling is not sticky")


@dataclass
class CouplingSpec:
    name: str
    inst: Instance
    step: Callable  # (X, Y, rng) -> (X', Y') on (B, n) arrays
    kernel: Callable[[ExactDistribution], TransitionMatrix]
    joint_builder: Callable[[ExactDistribution, TransitionMatrix], sp.csr_matrix]
    sticky: bool = True
    # (d, T) -> rows(x, y) -> (r, x', y', w): transitions out of the pairs
    # (x[r], y[r]); lets the joint kernel be built on pair orbits
    row_builder: Callable | None = None

    def joint(self, d: ExactDistribution, cap: int = JOINT_CAP, symmetry: bool = True,
              orbit_cap: int = PAIR_CAP) -> JointKernel:
        """The joint kernel, on colour-relabelling orbits when ``symmetry`` is set
        and the chain admits it (``cap`` then does not apply)."""
        T = self.kernel(d)
        if symmetry and self.row_builder is not None and color_symmetric(d):
            orb = pair_orbit_index(d, orbit_cap)
            rows = self.row_builder(d, T)
            Q = _assemble_rows(rows, orb.reps[:, 0], orb.reps[:, 1], orb.index, orb.M)
            return JointKernel(T, Q, self.name, orb)
        if d.N > cap:
            raise CapExceeded(f"joint kernel over {d.N} base states exceeds cap {cap}")
        return JointKernel(T, self.joint_builder(d, T), self.name)


def pair_orbit_index(d: ExactDistribution, cap: int = PAIR_CAP) -> PairOrbits:
    """:class:`PairOrbits` of ``d``, computed once per distribution."""
    orb = d.__dict__.get("_pair_orbits")
    if orb is None:
        orb = PairOrbits(d, cap)
        d.__dict__["_pair_orbits"] = orb
    elif orb.M > cap:
        raise CapExceeded(f"{orb.M} pair orbits exceed cap {cap}")
    return orb


def _assemble_rows(rows: Callable, x: np.ndarray, y: np.ndarray, index: Callable, M: int,
                   chunk: int = 20_000) -> sp.csr_matrix:
    R, C, V = [], [], []
    for s in range(0, x.size, chunk):
        r, tx, ty, w = rows(x[s:s + chunk], y[s:s + chunk])
        R.append(r + s)
        C.append(index(tx, ty))
        V.append(w)
    Q = sp.csr_matrix((np.concatenate(V), (np.concatenate(R), np.concatenate(C))),
                      shape=(M, M))
    Q.sum_duplicates()
    Q.eliminate_zeros()
    return Q


def _full_builder(row_builder: Callable, chunk: int = 20_000):
    def build(d: ExactDistribution, T: TransitionMatrix) -> sp.csr_matrix:
        N = d.N
        k = np.arange(N * N)
        return _assemble_rows(row_builder(d, T), k // N, k % N,
                              lambda a, b: a * N + b, N * N, chunk)
    return build


def _glauber_rows(d: ExactDistribution, T: TransitionMatrix):
    n = d.n
    laws = [d.conditional(v) for v in range(n)]
    recol = [d.recolor_index(v) for v in range(n)]

    def rows(x, y):
        if n == 0:
            return np.arange(x.size), x, y, np.ones(x.size)
        R, X, Y, W = [], [], [], []
        for v in range(n):
            J = maximal_coupling(laws[v][x], laws[v][y]) / n
            b, c1, c2 = np.nonzero(J > 0)
            R.append(b)
            X.append(recol[v][x[b], c1])
            Y.append(recol[v][y[b], c2])
            W.append(J[b, c1, c2])
        return tuple(np.concatenate(a) for a in (R, X, Y, W))

    return rows


_glauber_joint = _full_builder(_glauber_rows, chunk=5_000)


def greedy_glauber_coupling(inst: Instance) -> CouplingSpec:
    """Same vertex in both chains; maximal coupling of the two conditional laws."""
    pad = _Padded(inst)

    def step(X, Y, rng):
        X = np.array(X, dtype=np.int64, copy=True)
        Y = np.array(Y, dtype=np.int64, copy=True)
        if inst.n == 0:
            return X, Y
        B = X.shape[0]
        v = rng.integers(inst.n, size=B)
        a = glauber_laws_batch(inst, X, v, pad)
        b = glauber_laws_batch(inst, Y, v, pad)
        cx, cy = sample_maximal(a, b, rng)
        X[np.arange(B), v] = cx
        Y[np.arange(B), v] = cy
        return X, Y

    return CouplingSpec("greedy_glauber", inst, step, glauber_kernel, _glauber_joint,
                        row_builder=_glauber_rows)


def _independent_joint(d: ExactDistribution, T: TransitionMatrix) -> sp.csr_matrix:
    N = d.N
    P = T.P.tocsr()
    Q = sp.kron(P, P, format="lil")
    diag = np.arange(N) * (N + 1)
    D = sp.csr_matrix((P.data, P.indices * (N + 1), P.indptr), shape=(N, N * N))
    Q[diag] = D
    Q = Q.tocsr()
    Q.eliminate_zeros()
    return Q


def independent_coupling(inst: Instance, chain: str = "glauber",
                         params: FlipParameters | None = None) -> CouplingSpec:
    """Independent moves until the chains meet, then identical moves (stickified)."""
    if chain == "glauber":
        pad = _Padded(inst)

        def one(X, rng):
            X = X.copy()
            v = rng.integers(inst.n, size=X.shape[0])
            X[np.arange(X.shape[0]), v] = _categorical(glauber_laws_batch(inst, X, v, pad), rng)
            return X

        kernel = glauber_kernel
    elif chain == "flip":
        params = params or FlipParameters.vigoda()
        sampler = FlipSampler(inst, params)

        def one(X, rng):
            return sampler.step(X, rng)[0]

        def kernel(d):
            return flip_kernel(d, params)
    else:
        raise ValueError(f"unknown chain {chain!r}")

    def step(X, Y, rng):
        X = np.asarray(X, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        met = (X == Y).all(axis=1)
        X2 = one(X, rng)
        Y2 = one(Y, rng)
        Y2[met] = X2[met]
        return X2, Y2

    return CouplingSpec(f"independent_{chain}", inst, step, kernel, _independent_joint)


def _flip_rows_builder(params: FlipParameters):
    def build(d: ExactDistribution, T: TransitionMatrix):
        acc, tgt, draw = _flip_tables(d, params)

        def rows(x, y):
            ax, ay = acc[x], acc[y]
            tx, ty = tgt[x], tgt[y]
            both = np.minimum(ax, ay) * draw
            onlyx = np.clip(ax - ay, 0, None) * draw
            onlyy = np.clip(ay - ax, 0, None) * draw
            X0 = np.broadcast_to(x[:, None], tx.shape)
            Y0 = np.broadcast_to(y[:, None], ty.shape)
            P0 = np.broadcast_to(np.arange(x.size)[:, None], tx.shape)
            R, X, Y, W = [], [], [], []
            for w, cx, cy in ((both, tx, ty), (onlyx, tx, Y0), (onlyy, X0, ty)):
                m = w > 0
                R.append(P0[m])
                X.append(cx[m])
                Y.append(cy[m])
                W.append(w[m])
            R.append(np.arange(x.size))
            X.append(x)
            Y.append(y)
            W.append(1.0 - (both + onlyx + onlyy).sum(axis=1))
            return tuple(np.concatenate(a) for a in (R, X, Y, W))

        return rows

    return build


def _flip_joint_builder(params: FlipParameters):
    return _full_builder(_flip_rows_builder(params))


def greedy_flip_coupling(inst: Instance, params: FlipParameters) -> CouplingSpec:
    """Shared (v, c) draw and shared acceptance uniform."""
    sampler = FlipSampler(inst, params)

    def step(X, Y, rng):
        X = np.asarray(X, dtype=np.int64)
        Y = np.asarray(Y, dtype=np.int64)
        v, k, u = sampler.draw(X.shape[0], rng)
        return sampler.apply(X, v, k, u)[0], sampler.apply(Y, v, k, u)[0]

    def kernel(d):
        return flip_kernel(d, params)

    return CouplingSpec(f"greedy_flip[{params.preset}]", inst, step, kernel,
                        _flip_joint_builder(params), row_builder=_flip_rows_builder(params))


def make_coupling(inst: Instance, chain: str, kind: str = "greedy",
                  params: FlipParameters | None = None) -> CouplingSpec:
    if chain == "downup":
        # one element per vertex: the down-up kernel is the Glauber kernel
        chain = "glauber"
    if kind == "independent":
        return independent_coupling(inst, chain, params)
    if kind != "greedy":
        raise ValueError(f"unknown coupling {kind!r}")
    if chain == "glauber":
        return greedy_glauber_coupling(inst)
    if chain == "flip":
        return greedy_flip_coupling(inst, params or FlipParameters.vigoda())
    raise ValueError(f"no greedy coupling for chain {chain!r}")


# --------------------------------------------------------------------------
# Amortized convergence


def pair_distances(d: ExactDistribution) -> np.ndarray:
    """Vertex-Hamming distance of every ordered pair, flattened as x*N + y."""
    return hamming_matrix(d.support, d.support).ravel()


@dataclass
class CouplingReport:
    C: float
    g: np.ndarray = field(repr=False)
    worst_pair: tuple[int, int]
    residual: float
    series_gap: float
    series_terms: int
    alpha_coupling: float | None = None


def amortized_constant_exact(J: JointKernel, series_terms: int = 200) -> CouplingReport:
    """C = max g / d with g = sum_t E[d(X_t, Y_t)] solving (I - Q_off) g = d.

    ``g`` is indexed like the pair states of ``J`` (see ``J.pair_index``).
    """
    M = J.M
    D = J.distances()
    off = np.flatnonzero(D > 0)
    if off.size == 0:
        return CouplingReport(0.0, np.zeros(M), (0, 0), 0.0, 0.0, 0)
    if not J.is_sticky():
        raise NonConvergentCoupling("coupling is not sticky")
    # every off-diagonal pair must reach the diagonal
    diag = J.diagonal()
    R = J.Q.T.tocsr()
    hub = sp.vstack([R, sp.csr_matrix((np.ones(diag.size),
                                       (np.zeros(diag.size, dtype=np.int64), diag)),
                                      shape=(1, M))]).tocsr()
    hub = sp.hstack([hub, sp.csr_matrix((M + 1, 1))]).tocsr()
    seen = breadth_first_order(hub, M, directed=True, return_predecessors=False)
    stuck = np.setdiff1d(off, seen)
    states = J.pair_states()
    if stuck.size:
        x, y = states[int(stuck[0])]
        raise NonConvergentCoupling(f"{stuck.size} pairs never coalesce (e.g. states {x}, {y})")
    Qo = J.Q[off][:, off].tocsc()
    A = (sp.identity(off.size, format="csc") - Qo).tocsc()
    b = D[off]
    # direct factorizations fill in badly on pair systems; Krylov solves are
    # fast here and the residual is checked explicitly
    g_off, res = None, math.inf
    for solver in (spla.bicgstab, spla.gmres):
        x, info = solver(A, b, rtol=1e-14, atol=0.0, maxiter=50_000)
        r = float(np.abs(A @ x - b).max())
        if info == 0 and np.all(np.isfinite(x)) and r < res:
            g_off, res = x, r
        if res <= 1e-9 * max(1.0, float(np.abs(x).max())):
            break
    if g_off is None or res > 1e-8 * max(1.0, float(np.abs(g_off).max())):
        raise NonConvergentCoupling(f"linear solve failed (residual {res:.3g})")
    if (g_off < -1e-9).any():
        raise NonConvergentCoupling("negative cumulative distance: coupling not convergent")
    g = np.zeros(M)
    g[off] = g_off
    ratio = g_off / b
    k = int(np.argmax(ratio))
    # truncated series as a diagnostic
    acc = b.copy()
    term = b.copy()
    for _ in range(series_terms - 1):
        term = Qo @ term
        acc += term
    gap = float(np.max(g_off - acc))
    x, y = states[int(off[k])]
    return CouplingReport(float(ratio[k]), g, (int(x), int(y)), res, gap, series_terms)


def coupling_curvature(J: JointKernel, pairs: np.ndarray | None = None) -> float:
    """min over pair states of 1 - E[d(X', Y')] / d(x, y) under the joint kernel."""
    D = J.distances()
    EQ = J.Q @ D
    idx = np.flatnonzero(D > 0) if pairs is None else np.asarray(pairs)
    if idx.size == 0:
        return 1.0
    return float(np.min(1 - EQ[idx] / D[idx]))


@dataclass
class MCEstimate:
    C: float
    stderr: float
    per_pair: list[tuple[float, float]]
    tail: float
    horizon: int
    trials: int


def amortized_constant_mc(spec: CouplingSpec, pairs: Sequence[tuple], horizon: int,
                          trials: int, rng: np.random.Generator) -> MCEstimate:
    """Truncated estimate of sum_t E[d(X_t, Y_t)] / d(x, y), worst pair first."""
    if horizon < 1 or trials < 1:
        raise ValueError("horizon and trials must be >= 1")
    per = []
    tail = 0.0
    for x, y in pairs:
        X = np.repeat(np.asarray(x, dtype=np.int64)[None], trials, axis=0)
        Y = np.repeat(np.asarray(y, dtype=np.int64)[None], trials, axis=0)
        d0 = int((X[0] != Y[0]).sum())
        if d0 == 0:
            per.append((0.0, 0.0))
            continue
        tot = np.full(trials, float(d0))
        live = np.ones(trials, dtype=bool)
        last = 0.0
        for _ in range(horizon):
            if not live.any():
                break
            Xi, Yi = spec.step(X[live], Y[live], rng)
            X[live], Y[live] = Xi, Yi
            dist = (Xi != Yi).sum(axis=1)
            tot[live] += dist
            last = float(dist.sum()) / trials
            live[np.flatnonzero(live)[dist == 0]] = False
        tail = max(tail, last / d0)
        m = tot.mean() / d0
        se = tot.std(ddof=1) / d0 / math.sqrt(trials) if trials > 1 else math.inf
        per.append((float(m), float(se)))
    k = int(np.argmax([m for m, _ in per]))
    return MCEstimate(per[k][0], per[k][1], per, tail, horizon, trials)


# --------------------------------------------------------------------------
# Curvature


def adjacent_pairs(d: ExactDistribution) -> np.ndarray:
    """(m, 2) support index pairs x < y differing at exactly one vertex."""
    out = []
    for v in range(d.n):
        R = d.recolor_index(v)
        x = np.repeat(np.arange(d.N), R.shape[1])
        y = R.ravel()
        m = y > x
        out.append(np.stack([x[m], y[m]], axis=1))
    return np.concatenate(out) if out else np.zeros((0, 2), dtype=np.int64)


def is_hamming_geodesic(d: ExactDistribution) -> bool:
    """True if shortest paths through one-vertex moves realize Hamming distance."""
    if d.N > 3000:
        raise CapExceeded("support too large for the geodesic check")
    E = adjacent_pairs(d)
    G = sp.csr_matrix((np.ones(len(E)), (E[:, 0], E[:, 1])), shape=(d.N, d.N))
    SP = shortest_path(G, directed=False, unweighted=True)
    return bool(np.array_equal(SP, hamming_matrix(d.support, d.support)))


def pair_orbits(d: ExactDistribution, E: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Representatives of pairs under colour relabelling, and each pair's orbit.

    Colours are renamed in order of first appearance along (x, y).
    """
    if len(E) == 0:
        return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    Z = np.concatenate([d.support[E[:, 0]], d.support[E[:, 1]]], axis=1)
    q = d.instance.q
    canon = _relabel(Z, q)
    if q ** Z.shape[1] < 2 ** 62:
        canon = canon @ (q ** np.arange(Z.shape[1] - 1, -1, -1, dtype=np.int64))
        _, first, inv = np.unique(canon, return_index=True, return_inverse=True)
    else:
        _, first, inv = np.unique(canon, axis=0, return_index=True, return_inverse=True)
    return first, inv.ravel()


def has_interior_point(d: ExactDistribution, E: np.ndarray, chunk: int = 50_000) -> np.ndarray:
    """For each pair (x, y): is there a support state z other than x, y with
    z_j in {x_j, y_j} for all j, i.e. d(x, z) + d(z, y) = d(x, y)?

    Such pairs never attain the curvature minimum: W1(x, y) <= W1(x, z) + W1(z, y)
    <= (1 - alpha) d(x, y) once the bound holds on the shorter pairs.
    """
    n = d.n
    out = np.zeros(len(E), dtype=bool)
    if n < 2:
        return out
    masks = np.array([[(m >> j) & 1 for j in range(n)] for m in range(1, 2 ** n - 1)],
                     dtype=bool)
    S = d.support
    for s in range(0, len(E), chunk):
        X, Y = S[E[s:s + chunk, 0]], S[E[s:s + chunk, 1]]
        diff = X != Y
        hit = np.zeros(len(X), dtype=bool)
        for m in masks:
            proper = (diff & m).any(axis=1) & (diff & ~m).any(axis=1) & ~hit
            if not proper.any():
                continue
            rows = np.flatnonzero(proper)
            Z = np.where(m, Y[rows], X[rows])
            hit[rows[d.index_of(Z) >= 0]] = True
        out[s:s + chunk] = hit
    return out


def _all_pairs(d: ExactDistribution) -> np.ndarray:
    return np.stack(np.triu_indices(d.N, 1), axis=1)


@dataclass
class Curvature:
    alpha: float
    worst_pair: tuple[int, int]
    mode: str
    pairs: str
    n_pairs: int
    n_solved: int = 0


def ricci_curvature_exact(T: TransitionMatrix, mode: str = "optimal", pairs: str = "auto",
                          joint: JointKernel | None = None, pair_cap: int = PAIR_CAP,
                          symmetry: bool = True) -> Curvature:
    """alpha = min over pairs of 1 - W1(P(x,.), P(y,.)) / d(x, y), vertex-Hamming.

    ``pairs='adjacent'`` restricts to one-vertex differences (path coupling),
    ``'all'`` takes every pair and ``'minimal'`` (also ``'auto'``) every pair
    whose Hamming interval holds no other support state, which gives the same
    minimum as ``'all'``.  For colorings with full lists only one pair per
    colour-relabelling orbit is solved.
    """
    d = T.dist
    if pairs == "auto":
        pairs = "minimal"
    if pairs not in ("adjacent", "all", "minimal"):
        raise ValueError(f"unknown pair set {pairs!r}")
    if symmetry and mode == "optimal" and color_symmetric(d):
        # one ordered pair per colour-relabelling orbit
        orb = pair_orbit_index(d, 4 * pair_cap)
        R = orb.reps
        dist = (d.support[R[:, 0]] != d.support[R[:, 1]]).sum(axis=1)
        E = R[dist == 1] if pairs == "adjacent" else R[dist > 0]
    elif pairs == "adjacent":
        E = adjacent_pairs(d)
    else:
        E = _all_pairs(d)
    if len(E) == 0:
        return Curvature(1.0 if d.N == 1 else math.nan, (0, 0), mode, pairs, 0)
    if pairs == "minimal":
        E = E[~has_interior_point(d, E)]
    n_all = len(E)
    D = (d.support[E[:, 0]] != d.support[E[:, 1]]).sum(axis=1)
    if len(E) > pair_cap:
        raise CapExceeded(f"{len(E)} pairs exceeds the curvature cap {pair_cap}")
    if mode == "given_coupling":
        if joint is None:
            raise ValueError("given_coupling mode needs a joint kernel")
        w = (joint.Q @ joint.distances())[joint.pair_index(E[:, 0], E[:, 1])]
    elif mode == "optimal":
        P = T.P.tocsr()
        ip, ix, val = P.indptr, P.indices, P.data
        w = np.empty(len(E))
        for k, (x, y) in enumerate(E):
            a, b = slice(ip[x], ip[x + 1]), slice(ip[y], ip[y + 1])
            cost = hamming_matrix(d.support[ix[a]], d.support[ix[b]])
            w[k] = wasserstein1(val[a], val[b], cost)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    r = 1 - w / D
    k = int(np.argmin(r))
    return Curvature(float(r[k]), (int(E[k, 0]), int(E[k, 1])), mode, pairs, n_all, len(E))


def dobrushin_curvature_check(d: ExactDistribution, tol: float = 1e-9, instance: str = "",
                              pair_cap: int = PAIR_CAP) -> Certificate:
    """Optimal Glauber curvature >= (1 - gamma) / n whenever gamma < 1."""
    _, gamma = dobrushin_matrix(d)
    if gamma >= 1:
        return Certificate.skipped("dobrushin_curvature", f"gamma = {gamma:.4g} >= 1",
                                   instance, gamma=gamma)
    cur = ricci_curvature_exact(glauber_kernel(d), "optimal", "auto", pair_cap=pair_cap)
    return Certificate("dobrushin_curvature", (1 - gamma) / d.n, cur.alpha, tol,
                       instance=instance, detail={"gamma": gamma, "n": d.n, "pairs": cur.pairs})


# --------------------------------------------------------------------------
# Variable-length path coupling


class FirstChange:
    """Stop the first time the distance differs from its starting value."""

    def __call__(self, t: int, history: np.ndarray) -> np.ndarray:
        return history[:, -1] != history[:, 0]


class FixedTime:
    def __init__(self, k: int):
        self.k = k

    def __call__(self, t: int, history: np.ndarray) -> np.ndarray:
        return np.full(history.shape[0], t >= self.k)


@dataclass
class VariableLengthStats:
    alpha: float
    W: int
    beta: float
    M: int | None
    per_pair: list[dict]
    truncated: int
    reference_alpha: float | None = None


def m_steps(alpha: float, W: float, beta: float) -> int | None:
    """M = ceil(2 beta W / alpha), defined for 0 < alpha <= 1."""
    if not 0 < alpha <= 1:
        return None
    return max(1, math.ceil(2 * beta * W / alpha - 1e-12))


def variable_length_stats(spec: CouplingSpec, pairs: Sequence[tuple], trials: int,
                          rng: np.random.Generator, stop_rule=None, max_steps: int = 100_000,
                          reference_alpha: float | None = None) -> VariableLengthStats:
    """Monte Carlo alpha, W, beta for a stopping rule that only sees the past."""
    stop_rule = stop_rule or FirstChange()
    rows = []
    W = 1
    truncated = 0
    for pid, (x, y) in enumerate(pairs):
        X = np.repeat(np.asarray(x, dtype=np.int64)[None], trials, axis=0)
        Y = np.repeat(np.asarray(y, dtype=np.int64)[None], trials, axis=0)
        d0 = int((X[0] != Y[0]).sum())
        hist = [np.full(trials, d0)]
        T = np.zeros(trials, dtype=np.int64)
        dT = np.full(trials, d0)
        Wmax = np.full(trials, d0)
        live = np.ones(trials, dtype=bool)
        t = 0
        while live.any() and t < max_steps:
            t += 1
            Xi, Yi = spec.step(X[live], Y[live], rng)
            X[live], Y[live] = Xi, Yi
            dist = np.zeros(trials, dtype=np.int64)
            dist[live] = (Xi != Yi).sum(axis=1)
            dist[~live] = dT[~live]
            hist.append(dist)
            Wmax[live] = np.maximum(Wmax[live], dist[live])
            stop = np.zeros(trials, dtype=bool)
            stop[live] = stop_rule(t, np.stack(hist, axis=1)[live])
            T[stop] = t
            dT[stop] = dist[stop]
            live &= ~stop
        if live.any():
            truncated += int(live.sum())
            T[live] = t
            dT[live] = (X[live] != Y[live]).sum(axis=1)
        W = max(W, int(Wmax.max()))
        rows.append({"pair_id": pid, "d0": d0, "mean_dT": float(dT.mean()),
                     "stderr_dT": float(dT.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0,
                     "mean_T": float(T.mean()), "W": int(Wmax.max()),
                     "T": T, "dT": dT, "Wt": Wmax})
    alpha = 1 - max(r["mean_dT"] / r["d0"] for r in rows)
    beta = max(r["mean_T"] for r in rows)
    return VariableLengthStats(alpha, W, beta, m_steps(alpha, W, beta), rows, truncated,
                               reference_alpha)


def m_step_contraction_check(spec: CouplingSpec, M: int, pairs: Sequence[tuple], alpha: float,
                             trials: int, rng: np.random.Generator, slack: float = 0.0,
                             instance: str = "") -> Certificate:
    """E[d(X_M, Y_M)] + 3 stderr <= (1 - alpha/2) d(x, y) on every start pair."""
    if M < 1:
        raise ValueError("M must be >= 1")
    worst = None
    for x, y in pairs:
        X = np.repeat(np.asarray(x, dtype=np.int64)[None], trials, axis=0)
        Y = np.repeat(np.asarray(y, dtype=np.int64)[None], trials, axis=0)
        d0 = int((X[0] != Y[0]).sum())
        for _ in range(M):
            X, Y = spec.step(X, Y, rng)
        dist = (X != Y).sum(axis=1)
        lhs = (dist.mean() + 3 * dist.std(ddof=1) / math.sqrt(trials)) / d0
        rhs = 1 - alpha / 2
        if worst is None or rhs - lhs < worst[1] - worst[0]:
            worst = (lhs, rhs)
    return Certificate("m_step_contraction", worst[0], worst[1] + slack, 0.0, instance=instance,
                       provenance={"lhs": "monte-carlo", "rhs": "monte-carlo"},
                       detail={"M": M, "trials": trials})


def _flip_tables(d: ExactDistribution, params: FlipParameters):
    """Per-state move targets and acceptance probabilities over all (v, c) draws."""
    N = d.N
    sizes, targets, lists, lens = flip_moves(d, params.J)
    acc_table = np.zeros(params.J + 2)
    for j in range(1, params.J + 1):
        acc_table[j] = params.accept(j)
    acc = np.where(targets >= 0, acc_table[np.minimum(sizes, params.J + 1)], 0.0)
    tgt = np.where(targets >= 0, targets, np.arange(N)[:, None, None])
    draw = np.zeros(lists.shape)
    for v in range(d.n):
        draw[v, :lens[v]] = 1.0 / (d.n * lens[v])
    live = draw.ravel() > 0
    return acc.reshape(N, -1)[:, live], tgt.reshape(N, -1)[:, live], draw.ravel()[live]


def _flip_draws(d: ExactDistribution):
    """(v, c) of every live draw and the draw index of each (v, list slot)."""
    lens = np.array([len(L) for L in d.instance.lists])
    dv = np.repeat(np.arange(d.n), lens)
    dc = np.concatenate([np.asarray(L, dtype=np.int64) for L in d.instance.lists])
    kmap = np.full((d.n, int(lens.max())), -1, dtype=np.int64)
    for v in range(d.n):
        kmap[v, :lens[v]] = np.flatnonzero(dv == v)
    return dv, dc, kmap


def greedy_flip_expected_distance(d: ExactDistribution, params: FlipParameters,
                                  pairs: np.ndarray, swap: bool = False,
                                  chunk: int = 4000) -> np.ndarray:
    """E[d(X', Y')] after one step of a shared-randomness flip coupling from each
    pair, computed without building the joint kernel.

    With ``swap`` the pairs must differ at a single vertex w, and the colour
    draw at neighbours of w is matched through the transposition of the two
    colours seen at w (identity elsewhere); both choices are valid couplings.
    """
    acc, tgt, draw = _flip_tables(d, params)
    S = d.support
    K = draw.size
    if swap:
        dv, dc, kmap = _flip_draws(d)
        adj = np.zeros((d.n, d.n), dtype=bool)
        for u, v in d.instance.graph.edges:
            adj[u, v] = adj[v, u] = True
    out = np.empty(len(pairs))
    for s in range(0, len(pairs), chunk):
        x, y = pairs[s:s + chunk, 0], pairs[s:s + chunk, 1]
        ax, ay, tx, ty = acc[x], acc[y], tgt[x], tgt[y]
        if swap:
            diff = S[x] != S[y]
            if (diff.sum(axis=1) != 1).any():
                raise ValueError("swap matching needs pairs at distance one")
            w = diff.argmax(axis=1)
            a = S[x, w][:, None]
            b = S[y, w][:, None]
            both_in = (d.pos[dv[None, :], a] >= 0) & (d.pos[dv[None, :], b] >= 0)
            hit = adj[dv[None, :], w[:, None]] & ((dc == a) | (dc == b)) & both_in
            newc = np.where(dc == a, b, a)
            perm = np.where(hit, kmap[dv[None, :], d.pos[dv[None, :], np.where(hit, newc, 0)]],
                            np.arange(K)[None, :])
            rows = np.arange(len(x))[:, None]
            ay, ty = ay[rows, perm], ty[rows, perm]
        dxy = (S[x] != S[y]).sum(axis=1)[:, None]
        d_tt = (S[tx] != S[ty]).sum(axis=2)
        d_ty = (S[tx] != S[y][:, None, :]).sum(axis=2)
        d_xt = (S[x][:, None, :] != S[ty]).sum(axis=2)
        both = np.minimum(ax, ay)
        e = (both * d_tt + np.clip(ax - ay, 0, None) * d_ty + np.clip(ay - ax, 0, None) * d_xt
             + (1 - np.maximum(ax, ay)) * dxy)
        out[s:s + chunk] = e @ draw
    return out
