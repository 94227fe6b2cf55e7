"""Poisson equation, Stein-type bounds and the certificates built on them.

Distances inside g-vectors are vertex-Hamming; every quantity stated on the set
system (marginal sums, set-Hamming W1, locality) carries the factor 2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import linear_sum_assignment

from .certify import Certificate
from .coupling import (
    JointKernel,
    NonConvergentCoupling,
    amortized_constant_exact,
    color_symmetric,
    make_coupling,
)
from .dynamics import FlipParameters
from .exact import (
    ExactDistribution,
    TransitionMatrix,
    condition,
    down_up_kernel,
    embed_indices,
    embed_kernel,
    flip_kernel,
    glauber_kernel,
    influence_matrix,
    lambda_max,
    local_to_global_bound,
    ltg_applicable,
    marginal_vector,
    spectral_gap,
)
from .instance import CapExceeded, InfeasibleError, ball
from .transport import hamming_matrix, wasserstein1

DENSE_SOLVE_CAP = 2000
SPARSE_SOLVE_CAP = 50_000


# --------------------------------------------------------------------------
# Poisson equation


@dataclass
class PoissonSolution:
    h: np.ndarray
    residual: float
    mean: float
    series_gap: float | None = None


class PoissonSolver:
    """Solves h - P h = f - E_pi f with E_pi h = 0, factorizing once."""

    def __init__(self, T: TransitionMatrix):
        if not T.is_irreducible():
            raise ValueError("Poisson equation needs an irreducible kernel")
        self.T = T
        N = T.N
        pi = T.stationary
        if N <= DENSE_SOLVE_CAP:
            M = np.eye(N) - T.P.toarray() + np.outer(np.ones(N), pi)
            self._lu = scipy.linalg.lu_factor(M)
            self._solve = lambda b: scipy.linalg.lu_solve(self._lu, b)
        elif N <= SPARSE_SOLVE_CAP:
            self._solve = self._krylov(T)
        else:
            raise CapExceeded(f"Poisson solve over {N} states exceeds cap {SPARSE_SOLVE_CAP}")

    @staticmethod
    def _krylov(T: TransitionMatrix):
        """CG on the pi-symmetrized system (I - S + s s^T) y = s * f, h = y / s, for
        reversible kernels; GMRES on (I - P + 1 pi^T) otherwise."""
        N, pi = T.N, T.stationary
        s = np.sqrt(pi)
        if T.detailed_balance_error() <= 1e-12:
            S = (sp.diags(s) @ T.P @ sp.diags(1 / s)).tocsr()
            op = spla.LinearOperator((N, N), matvec=lambda y: y - S @ y + s * (s @ y),
                                     dtype=float)

            def one(b):
                y, info = spla.cg(op, s * b, rtol=1e-14, atol=0.0, maxiter=20 * N)
                return y / s, info
        else:
            P = T.P.tocsr()
            op = spla.LinearOperator((N, N), matvec=lambda h: h - P @ h + pi @ h, dtype=float)

            def one(b):
                return spla.gmres(op, b, rtol=1e-14, atol=0.0, restart=200, maxiter=200)

        def solve(B):
            B2 = B.reshape(N, -1)
            H = np.empty_like(B2)
            for k in range(B2.shape[1]):
                H[:, k], info = one(B2[:, k])
                if info < 0:
                    raise ArithmeticError("iterative Poisson solve broke down")
            return H.reshape(B.shape)

        return solve

    def solve(self, f, series_terms: int = 0) -> PoissonSolution | list[PoissonSolution]:
        F = np.asarray(f, dtype=float)
        one = F.ndim == 1
        F2 = F.reshape(self.T.N, -1)
        pi = self.T.stationary
        Fc = F2 - pi @ F2
        H = self._solve(Fc)
        H = H - pi @ H
        R = np.abs(H - self.T.P @ H - Fc).max(axis=0)
        out = []
        for k in range(H.shape[1]):
            gap = None
            if series_terms:
                acc = np.zeros(self.T.N)
                term = Fc[:, k].copy()
                for _ in range(series_terms):
                    acc += term
                    term = self.T.P @ term
                gap = float(np.abs(acc - H[:, k]).max())
            out.append(PoissonSolution(H[:, k], float(R[k]), float(pi @ H[:, k]), gap))
        return out[0] if one else out


def indicator_solutions(d: ExactDistribution, solver: PoissonSolver) -> np.ndarray:
    """Poisson solutions for the indicators of every universe element, as columns.

    For colour-symmetric colourings one solve per vertex suffices: swapping
    colours c0 and c commutes with the kernel and fixes pi, so the solution
    for (v, c) is the one for (v, c0) read at the swapped state.
    """
    X = d.onehot
    if not color_symmetric(d):
        return np.stack([s.h for s in solver.solve(X)], axis=1)
    H = np.empty(X.shape)
    S = d.support
    for v in range(d.n):
        cols = np.flatnonzero(d.element_vertex == v)
        c0 = d.universe.elements[cols[0]][1]
        h0 = solver.solve(X[:, cols[0]].astype(float)).h
        for e in cols:
            c = d.universe.elements[e][1]
            Y = np.where(S == c, c0, np.where(S == c0, c, S))
            H[:, e] = h0[d.index_of(Y)]
    return H


def poisson_solve(T: TransitionMatrix, f, series_terms: int = 0) -> PoissonSolution:
    return PoissonSolver(T).solve(f, series_terms)


# --------------------------------------------------------------------------
# Comparing two distributions and two kernels


def lift(dnu: ExactDistribution, dmu: ExactDistribution) -> tuple[np.ndarray, np.ndarray]:
    """(indices, probabilities) of nu as a law on supp(mu); errors if not contained."""
    if dnu is dmu:
        return np.arange(dmu.N), dmu.probs
    try:
        idx = embed_indices(dnu, dmu)
    except ValueError as e:
        raise ValueError(f"supp(nu) is not contained in supp(mu): {e}") from None
    return idx, dnu.probs


def marginal_gap(dmu: ExactDistribution, dnu: ExactDistribution) -> float:
    """sum over j in U of |Pr_mu[j in S] - Pr_nu[j in S]|."""
    idx, p = lift(dnu, dmu)
    m_nu = dmu.onehot[idx].T @ p
    return float(np.abs(marginal_vector(dmu) - m_nu).sum())


@dataclass
class KernelDifferenceReport:
    D: np.ndarray
    states: np.ndarray
    max: float
    mean_nu: float
    diff: sp.csr_matrix = field(repr=False)


def kernel_difference(Tmu: TransitionMatrix, Tnu: TransitionMatrix) -> KernelDifferenceReport:
    """D(S) = sum_{T != S} |P_mu(S, T) - P_nu(S, T)| for S in supp(nu)."""
    dmu, dnu = Tmu.dist, Tnu.dist
    idx, p = lift(dnu, dmu)
    Pnu = Tnu.P if dnu is dmu else embed_kernel(Tnu, dmu)
    Delta = (Tmu.P - Pnu).tocsr()[idx]
    Delta = Delta.tocoo()
    off = Delta.col != idx[Delta.row]
    D = np.bincount(Delta.row[off], weights=np.abs(Delta.data[off]), minlength=idx.size)
    diff = sp.csr_matrix((Delta.data, (Delta.row, Delta.col)), shape=(idx.size, dmu.N))
    return KernelDifferenceReport(D, idx, float(D.max()), float(p @ D), diff)


def exact_w1(dmu: ExactDistribution, dnu: ExactDistribution, method: str = "auto") -> float:
    """W1(mu, nu) in vertex-Hamming distance, both as laws on supp(mu).

    ``method='orbits'`` (the default for colour-symmetric mu) solves the
    problem on colour-permutation orbits, see :func:`orbit_w1`.
    """
    if method == "auto":
        method = "orbits" if dnu is not dmu and color_symmetric(dmu) else "dense"
    if method == "orbits":
        return orbit_w1(dmu, dnu)
    idx, p = lift(dnu, dmu)
    cost = hamming_matrix(dmu.support, dmu.support[idx])
    return wasserstein1(dmu.probs, p, cost)


def _relabel_fixing(Z: np.ndarray, q: int, fixed) -> np.ndarray:
    """Canonical rows under permutations of [q] that fix ``fixed`` pointwise:
    fixed colours keep their value, the others become q, q+1, ... by first use."""
    label = np.full((len(Z), q), -1, dtype=np.int64)
    for c in fixed:
        label[:, c] = c
    nxt = np.full(len(Z), q, dtype=np.int64)
    rows = np.arange(len(Z))
    out = np.empty_like(Z)
    for j in range(Z.shape[1]):
        c = Z[:, j]
        new = label[rows, c] < 0
        label[rows[new], c[new]] = nxt[new]
        nxt[new] += 1
        out[:, j] = label[rows, c]
    return out


def orbit_w1(dmu: ExactDistribution, dnu: ExactDistribution) -> float:
    """Exact W1 for colour-symmetric mu and nu = mu pinned.

    Both laws are invariant under the colour permutations G fixing the pinned
    colours, and for G-invariant laws W1 equals the transport cost between
    their orbit masses under d(O, O') = min_g d(x, g y): coupling the two
    orbits through (g x0, g y0) with g uniform attains the minimum pairwise.
    The minimum is an assignment problem on the free colours.
    """
    if not color_symmetric(dmu):
        raise ValueError("orbit W1 needs a colour-symmetric mu")
    q, n = dmu.instance.q, dmu.n
    fixed = sorted({int(c) for _, c in dnu.instance.pinned})
    free = np.array([c for c in range(q) if c not in fixed], dtype=np.int64)
    idx, p = lift(dnu, dmu)
    nu = np.zeros(dmu.N)
    nu[idx] = p
    canon = _relabel_fixing(dmu.support, q, fixed)
    _, first, inv = np.unique(canon, axis=0, return_index=True, return_inverse=True)
    inv = inv.ravel()
    a = np.bincount(inv, weights=dmu.probs)
    b = np.bincount(inv, weights=nu)
    ia, ib = np.flatnonzero(a > 0), np.flatnonzero(b > 0)
    X, Y = dmu.support[first[ia]], dmu.support[first[ib]]
    cost = np.empty((ia.size, ib.size))
    fixed_mask = np.zeros(q, dtype=bool)
    fixed_mask[fixed] = True
    for i in range(ia.size):
        for j in range(ib.size):
            A = np.zeros((q, q))
            np.add.at(A, (X[i], Y[j]), 1.0)
            agree = A[fixed_mask, fixed_mask].sum()
            if free.size:
                F = A[np.ix_(free, free)]
                r, c = linear_sum_assignment(F, maximize=True)
                agree += F[r, c].sum()
            cost[i, j] = n - agree
    return wasserstein1(a[ia], b[ib], cost)


# --------------------------------------------------------------------------
# Stein bound


@dataclass
class SteinResult:
    marginal: Certificate
    w1: Certificate
    identity_error: float
    entrywise_violation: float
    rhs: float


def stein_bound(dmu: ExactDistribution, dnu: ExactDistribution, Tmu: TransitionMatrix,
                Tnu: TransitionMatrix, J: JointKernel, g: np.ndarray | None = None,
                solver: PoissonSolver | None = None, rng: np.random.Generator | None = None,
                n_random: int = 20, tol: float = 1e-9, instance: str = "",
                cache: dict | None = None) -> SteinResult:
    """Both Stein certificates for (mu, nu) with the exact coupling series g.

    RHS = E_nu[ sum_{T != S} |P_mu - P_nu|(S, T) * g_set(S, T) ], g_set = 2 g.
    Poisson solutions depend on mu only; pass the same ``cache`` dict when
    looping over many nu to reuse them.
    """
    if g is None:
        g = amortized_constant_exact(J).g
    N = dmu.N
    kd = kernel_difference(Tmu, Tnu)
    idx, p = lift(dnu, dmu)
    Dl = kd.diff.tocoo()
    S = idx[Dl.row]
    gS = 2.0 * g[J.pair_index(S, Dl.col)]
    per_state = np.bincount(Dl.row, weights=np.abs(Dl.data) * gS, minlength=idx.size)
    rhs = float(p @ per_state)
    lhs1 = marginal_gap(dmu, dnu)
    lhs2 = 2.0 * exact_w1(dmu, dnu)
    meta = {"support_mu": N, "support_nu": int(idx.size)}
    c1 = Certificate("stein_marginal", lhs1, rhs, tol, instance=instance, detail=meta)
    c2 = Certificate("stein_w1", lhs2, rhs, tol, instance=instance, detail=meta)
    # identity E_nu f - E_mu f = E_nu[(P_nu - P_mu) h] on random f, and the
    # entrywise bound for coordinate indicators
    cache = {} if cache is None else cache
    if "F" not in cache or "Hj" not in cache:
        solver = solver or PoissonSolver(Tmu)
    if "F" not in cache:
        rng = rng or np.random.default_rng(0)
        F = rng.normal(size=(N, n_random))
        cache["F"] = F
        cache["H"] = np.stack([s.h for s in solver.solve(F)], axis=1)
    if "Hj" not in cache:
        cache["Hj"] = indicator_solutions(dmu, solver)
    F, H, Hj = cache["F"], cache["H"], cache["Hj"]
    lhs_id = p @ F[idx] - dmu.probs @ F
    rhs_id = -(p @ (kd.diff @ H))
    id_err = float(np.abs(lhs_id - rhs_id).max())
    left = np.abs(kd.diff @ Hj)
    Dg = sp.csr_matrix((np.abs(Dl.data) * gS / 2.0, (Dl.row, Dl.col)), shape=kd.diff.shape)
    right = np.asarray(Dg.sum(axis=1)).ravel()
    # per indicator against vertex-Hamming g, summed over j against set-Hamming g
    ent = float(max((left.max(axis=1) - right).max(), (left.sum(axis=1) - 2 * right).max()))
    return SteinResult(c1, c2, id_err, ent, rhs)


def stein_certificates(d: ExactDistribution, T: TransitionMatrix, J: JointKernel, g: np.ndarray,
                       solver: PoissonSolver, cache: dict, chain: str = "glauber",
                       params: FlipParameters | None = None, tol: float = 1e-9,
                       instance: str = "") -> dict[str, list[Certificate]]:
    """Stein certificates for every pinning mu|(v, c) up to colour symmetry.

    ``cache`` must hold random test functions "F" and their Poisson solutions "H".
    """
    ids = ("stein_marginal", "stein_w1", "stein_identity", "stein_entrywise")
    out = {i: [] for i in ids}
    for v, c in element_representatives(d):
        nu = condition(d, {v: c})
        r = stein_bound(d, nu, T, chain_kernel(nu, chain, params), J, g, solver,
                        tol=tol, instance=instance, cache=cache)
        el = {"element": [v, c]}
        r.marginal.detail.update(el)
        r.w1.detail.update(el)
        out["stein_marginal"].append(r.marginal)
        out["stein_w1"].append(r.w1)
        out["stein_identity"].append(Certificate("stein_identity", r.identity_error, 0.0, 1e-10,
                                                 instance=instance, detail=el))
        out["stein_entrywise"].append(Certificate("stein_entrywise", r.entrywise_violation,
                                                  0.0, tol, instance=instance, detail=el))
    return out


# --------------------------------------------------------------------------
# Spectral-independence certificate from a coupling


def chain_kernel(d: ExactDistribution, chain: str, params: FlipParameters | None = None
                 ) -> TransitionMatrix:
    if chain == "glauber":
        return glauber_kernel(d)
    if chain == "flip":
        return flip_kernel(d, params or FlipParameters.vigoda())
    if chain == "downup":
        return down_up_kernel(d)
    raise ValueError(f"unknown chain {chain!r}")


@dataclass
class ConvergenceData:
    C: float
    ell: int
    g: np.ndarray = field(repr=False)
    kernel: TransitionMatrix = field(repr=False)


def convergence_data(d: ExactDistribution, chain: str, coupling: str = "greedy",
                     params: FlipParameters | None = None) -> ConvergenceData:
    """Exact C of the chosen coupling and the measured set-Hamming locality."""
    spec = make_coupling(d.instance, chain, coupling, params)
    J = spec.joint(d)
    rep = amortized_constant_exact(J)
    return ConvergenceData(rep.C, 2 * J.base.max_displacement(), rep.g, J.base)


def verify_thm_specind(d: ExactDistribution, element: int, chain: str = "glauber",
                       coupling: str = "greedy", params: FlipParameters | None = None,
                       conv: ConvergenceData | None = None, tol: float = 1e-9,
                       instance: str = "") -> Certificate:
    """sum_j |Pr_mu[j] - Pr_{mu|i}[j]| <= C * ell * max_S D(S)."""
    v, c = d.universe.elements[element]
    try:
        nu = condition(d, {v: c})
    except InfeasibleError:
        return Certificate.not_applicable("specind_row", f"Pr[{(v, c)}] = 0", instance)
    try:
        conv = conv or convergence_data(d, chain, coupling, params)
    except NonConvergentCoupling as e:
        return Certificate.not_applicable("specind_row", str(e), instance)
    kd = kernel_difference(conv.kernel, chain_kernel(nu, chain, params))
    lhs = marginal_gap(d, nu)
    theory = {"glauber": 2, "flip": 12, "downup": 2}[chain]
    return Certificate("specind_row", lhs, conv.C * conv.ell * kd.max, tol, instance=instance,
                       detail={"element": [v, c], "C": conv.C, "ell": conv.ell,
                               "ell_theory": theory, "max_D": kd.max})


def _pinnings(d: ExactDistribution, k: int):
    """Feasible pinnings of k vertices, as dicts."""
    for vs in combinations(range(d.n), k):
        if k == 0:
            yield {}
            continue
        for row in np.unique(d.support[:, list(vs)], axis=0):
            yield dict(zip(vs, (int(c) for c in row)))


def blackbox_certificate(d: ExactDistribution, chain: str = "glauber", coupling: str = "greedy",
                         const_bound: float = 4.0, params: FlipParameters | None = None,
                         tol: float = 1e-9, instance: str = "") -> list[Certificate]:
    """Level-by-level locality/coupling/difference data and the derived gap bound."""
    n = d.n
    certs = []
    eta_bound = []
    ok = True
    for k in range(max(n - 1, 0)):
        C_k = Cp_k = 0.0
        ell_k = 0
        lam_excess = -math.inf
        worst = None
        for xi in _pinnings(d, k):
            dA = condition(d, xi)
            try:
                conv = convergence_data(dA, chain, coupling, params)
            except NonConvergentCoupling as e:
                certs.append(Certificate.not_applicable(
                    "blackbox_level", f"level {k}, pinning {xi}: {e}", instance, level=k))
                ok = False
                break
            C_k, ell_k = max(C_k, conv.C), max(ell_k, conv.ell)
            I = influence_matrix(dA)
            m = marginal_vector(dA)
            lam = lambda_max(I, m)
            Cp_A = 0.0
            for e, (v, c) in enumerate(dA.universe.elements):
                if not 0 < m[e] < 1:
                    continue
                nu = condition(dA, {v: c})
                Cp_A = max(Cp_A, kernel_difference(conv.kernel, chain_kernel(nu, chain, params)).max)
            Cp_k = max(Cp_k, Cp_A)
            excess = lam - conv.C * conv.ell * Cp_A
            if excess > lam_excess:
                lam_excess, worst = excess, xi
        else:
            B = ell_k * C_k * Cp_k
            eta_bound.append(B)
            certs.append(Certificate("blackbox_const", B, const_bound, tol, instance=instance,
                                     detail={"level": k, "ell": ell_k, "C": C_k, "C_prime": Cp_k}))
            certs.append(Certificate("blackbox_influence", lam_excess, 0.0, tol, instance=instance,
                                     detail={"level": k, "worst_pinning": worst}))
            continue
        break
    if ok:
        if n <= 1 or ltg_applicable(eta_bound, n):
            gap = spectral_gap(down_up_kernel(d)).gap
            lb = local_to_global_bound(eta_bound, n) if n > 1 else 1.0
            certs.append(Certificate("blackbox_gap", lb, gap, tol, instance=instance,
                                     detail={"eta_bound": eta_bound}))
        else:
            certs.append(Certificate.not_applicable(
                "blackbox_gap", "some eta_k bound >= n-k-1", instance, eta_bound=eta_bound))
    return certs


# --------------------------------------------------------------------------
# Kernel-difference bounds for single pinnings


def element_representatives(d: ExactDistribution) -> list[tuple[int, int]]:
    """Universe elements (v, c) of positive marginal; for colour-symmetric
    colourings one colour per vertex, since relabelling colours carries every
    pinning-based certificate for (v, c) onto the one for (v, c') unchanged."""
    m = marginal_vector(d)
    els = [(int(v), int(c)) for e, (v, c) in enumerate(d.universe.elements) if m[e] > 0]
    if not color_symmetric(d):
        return els
    seen, out = set(), []
    for v, c in els:
        if v not in seen:
            seen.add(v)
            out.append((v, c))
    return out


def kernel_difference_bounds(d: ExactDistribution, chain: str, params: FlipParameters | None = None,
                             tol: float = 1e-9, instance: str = "") -> list[Certificate]:
    """max_S D(S) for (P_mu, P_{mu|uc}) against 2/n (Glauber) or (|B(u,6)|+1)/n (flip),
    one certificate per (u, c) up to colour symmetry."""
    n = d.n
    T = chain_kernel(d, chain, params)
    out = []
    for u, c in element_representatives(d):
        nu = condition(d, {u: c})
        D = kernel_difference(T, chain_kernel(nu, chain, params)).max
        if chain == "flip":
            bound = (len(ball(d.instance.graph, u, 6)) + 1) / n
            iid = "flip_kernel_difference"
        else:
            bound = 2 / n
            iid = f"{chain}_kernel_difference"
        out.append(Certificate(iid, D, bound, tol, instance=instance,
                               detail={"u": u, "c": c}))
    return out
