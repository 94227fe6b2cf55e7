"""The default instance suite and the per-instance certificate checks.

Each ``check_*`` function takes one suite item and returns certificates; the
runner merges them in suite order, so reports do not depend on how many worker
processes were used.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import networkx as nx
import numpy as np
from scipy import stats

from .certify import FAIL, Certificate, instance_digest, tally
from .coupling import (
    NonConvergentCoupling,
    amortized_constant_exact,
    amortized_constant_mc,
    coupling_curvature,
    greedy_flip_coupling,
    greedy_glauber_coupling,
    ricci_curvature_exact,
)
from .dynamics import (
    DownUpSampler,
    FlipParameters,
    FlipSampler,
    RngStream,
    _Padded,
    glauber_step_batch,
)
from .exact import (
    ExactDistribution,
    TransitionMatrix,
    dobrushin_matrix,
    down_up_kernel,
    enumerate_gibbs,
    flip_kernel,
    glauber_kernel,
    inf_norm,
    influence_matrix,
    influence_matrix_oracle,
    lambda_max,
    local_to_global_bound,
    ltg_applicable,
    marginal_vector,
    mixing_time_exact,
    spectral_gap,
    spectral_independence,
)
from .instance import (
    CapExceeded,
    Graph,
    Instance,
    InfeasibleError,
    ListColoringInstance,
    coloring,
    hardcore,
    ising,
    product_spins,
)
from .stein import PoissonSolver, chain_kernel, kernel_difference_bounds, stein_certificates

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
CRITERIA = {
    "c1": "influence matrix equals re-enumeration oracle",
    "c2": "Poisson residual",
    "c3": "Stein certificates and identity",
    "c4": "spectral gap >= local-to-global product bound",
    "c5": "flip kernels exact (rows, balance, irreducibility)",
    "c6": "flip curvature positive at >= ceil(11/6 Delta) colours",
    "c7": "flip kernel difference <= (|B(u,6)|+1)/n",
    "c8": "Dobrushin, influence and curvature bounds when gamma < 1",
    "c9": "C <= 1/alpha and Monte Carlo C agrees",
    "c10": "sampler frequencies match kernels; TV at t_mix",
}


# --------------------------------------------------------------------------
# Suite definition


@dataclass(frozen=True)
class SuiteItem:
    key: str
    model: str
    param: float
    inst: Instance
    designated: tuple[str, ...] = ()


def _atlas(max_n: int):
    for i, g in enumerate(nx.graph_atlas_g()):
        n = g.number_of_nodes()
        if 1 <= n <= max_n and nx.is_connected(g):
            yield f"atlas{i}", Graph.from_networkx(g)


def coloring_qs(delta: int) -> list[int]:
    return sorted({q for q in (delta + 2, math.ceil(11 * delta / 6), 2 * delta + 1) if q >= 2})


# designated instances for the sampler checks
DESIGNATED = {
    "atlas7/coloring_q4": ("glauber", "downup"),   # triangle
    "atlas7/coloring_q5": ("flip",),
    "atlas6/ising_b1": ("glauber", "downup"),      # path on 3 vertices
}


def default_suite(max_n: int = 5) -> list[SuiteItem]:
    """Connected graphs on <= max_n vertices with colourings, Ising and hardcore
    parameters, plus product instances on empty graphs."""
    items = []
    for gid, g in _atlas(max_n):
        D = g.max_degree
        for q in coloring_qs(D):
            key = f"{gid}/coloring_q{q}"
            items.append(SuiteItem(key, "coloring", q, coloring(g, q, name=key),
                                   DESIGNATED.get(key, ())))
        for b in (-1.0, -0.2, 0.2, 1.0):
            key = f"{gid}/ising_b{b:g}"
            items.append(SuiteItem(key, "ising", b, ising(g, b, name=key),
                                   DESIGNATED.get(key, ())))
        for lam in (0.5, 1.0):
            key = f"{gid}/hardcore_l{lam:g}"
            items.append(SuiteItem(key, "hardcore", lam, hardcore(g, lam, name=key)))
    for n in range(2, min(max_n, 4) + 1):
        g = Graph.from_edges(n, [])
        key = f"empty{n}/product_q2"
        items.append(SuiteItem(key, "product", 2, product_spins(g, 2, name=key)))
    return items


@dataclass
class SuiteCaps:
    support: int = 50_000
    joint_states: int = 500
    gap_states: int = 50_000
    spectral_nodes: int = 20_000
    poisson_states: int = 50_000
    curvature_pairs: int = 250_000
    lemma_states: int = 50_000
    mc_states: int = 500


@dataclass
class SuiteConfig:
    seed: int = 0
    max_n: int = 5
    criteria: tuple[str, ...] = tuple(CRITERIA)
    caps: SuiteCaps = field(default_factory=SuiteCaps)
    poisson_functions: int = 100
    identity_functions: int = 20
    mc_trials: int = 2000
    mc_product_trials: int = 100_000
    mc_horizon: int = 100_000
    # "designated": product instances and the sampler-check instances only;
    # "all": every instance with support <= caps.mc_states
    mc_scope: str = "designated"
    sampler_samples: int = 1_000_000
    tmix_chains: int = 20_000
    keys: tuple[str, ...] | None = None


# --------------------------------------------------------------------------
# Checks


class _Ctx:
    """Per-instance cache of the expensive shared objects."""

    def __init__(self, item: SuiteItem, cfg: SuiteConfig, index: int):
        self.item, self.cfg, self.index = item, cfg, index
        self.digest = instance_digest(item.inst)
        self._d = None
        self._glauber = None
        self._joint = None
        self._conv = None
        self._poisson = None

    @property
    def d(self) -> ExactDistribution:
        if self._d is None:
            self._d = enumerate_gibbs(self.item.inst, cap=self.cfg.caps.support)
        return self._d

    @property
    def glauber(self) -> TransitionMatrix:
        if self._glauber is None:
            self._glauber = glauber_kernel(self.d)
        return self._glauber

    def poisson(self):
        """Solver for the Glauber kernel and solutions for the shared random f
        (the identity check reuses the leading columns)."""
        if self._poisson is None:
            T = self.glauber
            k = max(self.cfg.poisson_functions, self.cfg.identity_functions)
            F = self.rng("c2").normal(size=(T.N, k))
            solver = PoissonSolver(T)
            self._poisson = (solver, F, solver.solve(F))
        return self._poisson

    def joint(self):
        """Greedy Glauber joint kernel and its convergence report (or the error)."""
        if self._joint is None:
            J = greedy_glauber_coupling(self.item.inst).joint(self.d,
                                                              cap=self.cfg.caps.joint_states)
            try:
                self._conv = amortized_constant_exact(J)
            except NonConvergentCoupling as e:
                self._conv = e
            self._joint = J
        return self._joint, self._conv

    def rng(self, crit: str) -> np.random.Generator:
        # keyed by instance name so that sub-suites draw the same streams
        key = zlib.crc32(self.item.key.encode())
        return RngStream(self.cfg.seed).child(key, int(crit[1:])).generator()

    @property
    def is_coloring(self) -> bool:
        return isinstance(self.item.inst, ListColoringInstance)


def _worst(certs: list[Certificate], iid: str, checked: int | None = None) -> Certificate:
    """Keep the certificate with the smallest slack among passes/fails."""
    live = [c for c in certs if c.lhs is not None and c.rhs is not None]
    if not live:
        return certs[0]
    w = min(live, key=lambda c: (c.slack + c.tolerance, c.inequality_id))
    w.detail = dict(w.detail, checked=len(live) if checked is None else checked)
    return w


def check_c1(ctx: _Ctx) -> list[Certificate]:
    d = ctx.d
    I = influence_matrix(d)
    I2 = influence_matrix_oracle(d)
    err = float(np.abs(I - I2).max()) if I.size else 0.0
    lam = lambda_max(I, marginal_vector(d))
    return [Certificate("influence_oracle", err, 0.0, 1e-12, instance=ctx.digest,
                        detail={"universe": d.universe.size}),
            Certificate("lambda_le_infnorm", lam, inf_norm(I), 1e-9, instance=ctx.digest)]


def check_c2(ctx: _Ctx) -> list[Certificate]:
    if ctx.d.N > ctx.cfg.caps.poisson_states:
        return [Certificate.skipped("poisson_residual", f"support {ctx.d.N} over cap",
                                    ctx.digest)]
    T = ctx.glauber
    if not T.is_irreducible():
        return [Certificate.not_applicable("poisson_residual", "Glauber kernel is reducible",
                                           ctx.digest)]
    sols = ctx.poisson()[2][:ctx.cfg.poisson_functions]
    res = max(s.residual for s in sols)
    mean = max(abs(s.mean) for s in sols)
    return [Certificate("poisson_residual", res, 0.0, 1e-10, instance=ctx.digest,
                        detail={"functions": len(sols), "max_abs_mean": mean})]


def check_c3(ctx: _Ctx) -> list[Certificate]:
    ids = ("stein_marginal", "stein_w1", "stein_identity", "stein_entrywise")
    d = ctx.d
    J, conv = ctx.joint()
    if isinstance(conv, Exception):
        return [Certificate.not_applicable(i, str(conv), ctx.digest) for i in ids]
    solver, F, sols = ctx.poisson()
    k = ctx.cfg.identity_functions
    cache = {"F": F[:, :k], "H": np.stack([s.h for s in sols[:k]], axis=1)}
    out = stein_certificates(d, J.base, J, conv.g, solver, cache, instance=ctx.digest)
    covered = int((marginal_vector(d) > 0).sum())
    return [_worst(out[i], i, covered) for i in ids]


def check_c4(ctx: _Ctx) -> list[Certificate]:
    d = ctx.d
    if d.N > ctx.cfg.caps.gap_states:
        return [Certificate.skipped("ltg_gap", f"support {d.N} over gap cap", ctx.digest)]
    try:
        si = spectral_independence(d, max_nodes=ctx.cfg.caps.spectral_nodes)
    except CapExceeded as e:
        return [Certificate.skipped("ltg_gap", str(e), ctx.digest)]
    n = d.n
    if n > 1 and not ltg_applicable(si.eta, n):
        return [Certificate.not_applicable("ltg_gap", "some eta_k >= n-k-1", ctx.digest,
                                           eta=si.eta)]
    bound = local_to_global_bound(si.eta, n) if n > 1 else 1.0
    out = []
    G = ctx.glauber
    g_gap = spectral_gap(G).gap
    DU = down_up_kernel(d)
    same = abs(DU.P - G.P).max() <= 1e-14 if d.N > 1 else True
    # one element per vertex: dropping (v, c) and resampling is a Glauber update
    du_gap = g_gap if same else spectral_gap(DU).gap
    for name, gap in (("glauber", g_gap), ("downup", du_gap)):
        out.append(Certificate(f"ltg_gap_{name}", bound, gap, 1e-9, instance=ctx.digest,
                               detail={"eta": si.eta, "pinnings": si.nodes,
                                       "downup_equals_glauber": bool(same)}))
    return out


PRESETS = (FlipParameters.vigoda(), FlipParameters.cdmpp())


def flip_exactness(d: ExactDistribution, params: FlipParameters, tol: float = 1e-12,
                   instance: str = "") -> list[Certificate]:
    """Row sums, uniform stationarity, detailed balance, nonnegativity and (for
    q >= Delta + 2) irreducibility of the exact flip kernel."""
    inst = d.instance
    T = flip_kernel(d, params)
    uniform = np.full(d.N, 1.0 / d.N)
    stat = float(np.abs(T.P.T @ uniform - uniform).max())
    tag = params.preset
    out = [
        Certificate(f"flip_rows_{tag}", T.row_sum_error(), 0.0, tol, instance=instance),
        Certificate(f"flip_uniform_{tag}", max(stat, float(np.abs(d.probs - uniform).max())),
                    0.0, tol, instance=instance),
        Certificate(f"flip_balance_{tag}", T.detailed_balance_error(), 0.0, tol,
                    instance=instance),
        Certificate(f"flip_nonneg_{tag}", -T.min_entry(), 0.0, 0.0, instance=instance),
    ]
    if inst.q >= inst.graph.max_degree + 2:
        out.append(Certificate(f"flip_irreducible_{tag}", 0.0 if T.is_irreducible() else 1.0,
                               0.0, 0.0, instance=instance))
    return out


def check_c5(ctx: _Ctx) -> list[Certificate]:
    if not ctx.is_coloring:
        return []
    return [c for pr in PRESETS for c in flip_exactness(ctx.d, pr, instance=ctx.digest)]


def vigoda_regime(inst: Instance) -> bool:
    """Every list has at least ceil(11/6 Delta) colours."""
    D = inst.graph.max_degree
    return min(len(L) for L in inst.lists) >= math.ceil(11 * D / 6)


def check_c6(ctx: _Ctx) -> list[Certificate]:
    if not ctx.is_coloring:
        return []
    if not vigoda_regime(ctx.item.inst):
        return []
    return [flip_curvature(ctx.d, FlipParameters.vigoda(), ctx.cfg.caps.curvature_pairs,
                           ctx.digest)]


def flip_curvature(d: ExactDistribution, params: FlipParameters, pair_cap: int,
                   instance: str = "") -> Certificate:
    """Optimal-transport curvature of the flip kernel over adjacent pairs must be
    positive; falls back to all pairs when no two states differ at one vertex."""
    iid = f"flip_curvature_{params.preset}"
    T = flip_kernel(d, params)
    try:
        cur = ricci_curvature_exact(T, "optimal", "adjacent", pair_cap=pair_cap)
        pairs = "adjacent"
        if cur.n_pairs == 0:
            cur = ricci_curvature_exact(T, "optimal", "all", pair_cap=pair_cap)
            pairs = "all (no adjacent pairs)"
    except CapExceeded as e:
        return Certificate.skipped(iid, str(e), instance)
    return Certificate(iid, 1e-12, cur.alpha, 0.0, instance=instance,
                       detail={"pairs": pairs, "n_pairs": cur.n_pairs, "solved": cur.n_solved})


def check_c7(ctx: _Ctx) -> list[Certificate]:
    if not ctx.is_coloring:
        return []
    if ctx.d.N > ctx.cfg.caps.lemma_states:
        return [Certificate.skipped("flip_kernel_difference", "support over cap", ctx.digest)]
    out = []
    for pr in PRESETS:
        certs = kernel_difference_bounds(ctx.d, "flip", pr, instance=ctx.digest)
        for c in certs:
            c.inequality_id = f"flip_kernel_difference_{pr.preset}"
        if certs:
            covered = int((marginal_vector(ctx.d) > 0).sum())
            out.append(_worst(certs, certs[0].inequality_id, covered))
    return out


def check_c8(ctx: _Ctx) -> list[Certificate]:
    d = ctx.d
    _, gamma = dobrushin_matrix(d)
    ids = ("dobrushin_curvature", "dobrushin_influence", "curvature_influence")
    if gamma >= 1:
        return [Certificate.not_applicable(i, f"gamma = {gamma:.4g} >= 1", ctx.digest)
                for i in ids]
    out = []
    try:
        cur = ricci_curvature_exact(ctx.glauber, "optimal", "auto",
                                    pair_cap=ctx.cfg.caps.curvature_pairs)
        out.append(Certificate("dobrushin_curvature", (1 - gamma) / d.n, cur.alpha, 1e-9,
                               instance=ctx.digest,
                               detail={"gamma": gamma, "pairs": cur.pairs,
                                       "n_pairs": cur.n_pairs}))
    except CapExceeded as e:
        cur = None
        out.append(Certificate.skipped("dobrushin_curvature", str(e), ctx.digest))
    try:
        si = spectral_independence(d, max_nodes=ctx.cfg.caps.spectral_nodes)
        lam = max(si.lambda_max)
        out.append(Certificate("dobrushin_influence", lam, 4 / (1 - gamma), 1e-9,
                               instance=ctx.digest,
                               detail={"gamma": gamma, "lambda_max_levels": si.lambda_max}))
    except CapExceeded as e:
        out.append(Certificate.skipped("dobrushin_influence", str(e), ctx.digest))
    if cur is None:
        out.append(Certificate.skipped("curvature_influence", "curvature not computed",
                                       ctx.digest))
    elif cur.alpha <= 1e-12:
        out.append(Certificate.not_applicable("curvature_influence", "alpha <= 0", ctx.digest))
    else:
        lam0 = lambda_max(influence_matrix(d), marginal_vector(d))
        out.append(Certificate("curvature_influence", lam0, 4 / (cur.alpha * d.n), 1e-9,
                               instance=ctx.digest, detail={"alpha": cur.alpha}))
    return out


def _mc_check(ctx: _Ctx, spec, J, rep, trials: int, rel: float | None) -> list[Certificate]:
    d = ctx.d
    x, y = rep.worst_pair
    est = amortized_constant_mc(spec, [(d.support[x], d.support[y])], ctx.cfg.mc_horizon,
                                trials, ctx.rng("c9"))
    out = [Certificate("mc_constant_3se", abs(est.C - rep.C), 3 * est.stderr, 0.0,
                       instance=ctx.digest,
                       provenance={"lhs": "monte-carlo", "rhs": "monte-carlo"},
                       detail={"C_exact": rep.C, "C_mc": est.C, "stderr": est.stderr,
                               "trials": trials, "tail": est.tail})]
    if rel is not None:
        out.append(Certificate("mc_constant_rel", abs(est.C - rep.C) / rep.C, rel, 0.0,
                               instance=ctx.digest,
                               provenance={"lhs": "monte-carlo", "rhs": "exact"},
                               detail={"C_exact": rep.C, "C_mc": est.C, "trials": trials}))
    return out


def check_c9(ctx: _Ctx) -> list[Certificate]:
    d = ctx.d
    out = []
    specs = [("glauber", greedy_glauber_coupling(ctx.item.inst))]
    if ctx.is_coloring:
        specs.append(("flip", greedy_flip_coupling(ctx.item.inst, FlipParameters.vigoda())))
    for chain, spec in specs:
        if chain == "glauber":
            J, rep = ctx.joint()
        else:
            J = spec.joint(d, cap=ctx.cfg.caps.joint_states)
            try:
                rep = amortized_constant_exact(J)
            except NonConvergentCoupling as e:
                rep = e
        iid = f"fact_C_le_inv_alpha_{chain}"
        if isinstance(rep, Exception):
            out.append(Certificate.not_applicable(iid, str(rep), ctx.digest))
            continue
        alpha = coupling_curvature(J)
        if alpha > 1e-12:  # rounding can leave a frozen pair at +1e-16
            out.append(Certificate(iid, rep.C, 1 / alpha, 1e-9, instance=ctx.digest,
                                   detail={"alpha": alpha}))
        else:
            out.append(Certificate.not_applicable(iid, f"coupling not one-step contractive "
                                                  f"(alpha = {alpha:.4g})", ctx.digest))
        product = ctx.item.model == "product"
        scoped = product or bool(ctx.item.designated) or ctx.cfg.mc_scope == "all"
        if chain == "glauber" and scoped and d.N <= ctx.cfg.caps.mc_states and rep.C > 0:
            trials = ctx.cfg.mc_product_trials if product else ctx.cfg.mc_trials
            out += _mc_check(ctx, spec, J, rep, trials, 0.05 if product else None)
    return out


def _chi2(counts: np.ndarray, probs: np.ndarray) -> float:
    if counts[probs == 0].sum() > 0:
        return 0.0
    m = probs > 0
    exp = probs[m] * counts.sum()
    if m.sum() == 1:
        return 1.0
    return float(stats.chisquare(counts[m], exp * counts[m].sum() / exp.sum()).pvalue)


def _tv_check(ctx, name, T: TransitionMatrix, step, rng) -> Certificate:
    d = T.dist
    t, worst = mixing_time_exact(T)
    B = ctx.cfg.tmix_chains
    X = np.repeat(worst, B)
    for _ in range(t):
        X = step(X, rng)
    emp = np.bincount(X, minlength=d.N) / B
    Pt = np.zeros(d.N)
    Pt[worst] = 1.0
    for _ in range(t):
        Pt = T.P.T @ Pt
    sigma = 0.5 * float(np.sqrt(Pt * (1 - Pt) / B).sum())
    tv = 0.5 * float(np.abs(emp - d.probs).sum())
    return Certificate(f"tv_at_tmix_{name}", tv, 0.25 + 3 * sigma, 0.0, instance=ctx.digest,
                       provenance={"lhs": "monte-carlo", "rhs": "exact"},
                       detail={"tmix": t, "chains": B, "exact_tv": 0.5 * float(
                           np.abs(Pt - d.probs).sum())})


def index_stepper(d: ExactDistribution, chain: str, params: FlipParameters | None = None):
    """Vectorized one-step sampler on support indices: ``step(idx, rng) -> idx``."""
    S = d.support
    if chain == "glauber":
        pad = _Padded(d.instance)

        def step(idx, rng):
            return d.index_of(glauber_step_batch(d.instance, S[idx], rng, pad))
    elif chain == "flip":
        sampler = FlipSampler(d.instance, params or FlipParameters.vigoda())

        def step(idx, rng):
            return d.index_of(sampler.step(S[idx], rng)[0])
    elif chain == "downup":
        sampler = DownUpSampler(d)

        def step(idx, rng):
            return sampler.step(idx, rng)
    else:
        raise ValueError(f"unknown chain {chain!r}")
    return step


def check_c10(ctx: _Ctx) -> list[Certificate]:
    chains = ctx.item.designated
    if not chains:
        return []
    d = ctx.d
    rng = ctx.rng("c10")
    out = []
    for chain in chains:
        T = ctx.glauber if chain == "glauber" else chain_kernel(d, chain, FlipParameters.vigoda())
        step = index_stepper(d, chain, FlipParameters.vigoda())
        nnz = np.diff(T.P.indptr)
        x = int(np.argmax(nnz))
        M = ctx.cfg.sampler_samples
        nxt = step(np.full(M, x), rng)
        if (nxt < 0).any():
            p = 0.0
        else:
            p = _chi2(np.bincount(nxt, minlength=d.N), T.P[x].toarray().ravel())
        out.append(Certificate(f"chi2_{chain}", 1e-3, p, 0.0, instance=ctx.digest,
                               provenance={"lhs": "exact", "rhs": "monte-carlo"},
                               detail={"start": d.support[x].tolist(), "samples": M}))
        out.append(_tv_check(ctx, chain, T, step, rng))
    return out


CHECKS = {"c1": check_c1, "c2": check_c2, "c3": check_c3, "c4": check_c4, "c5": check_c5,
          "c6": check_c6, "c7": check_c7, "c8": check_c8, "c9": check_c9, "c10": check_c10}


def run_item(args) -> dict:
    index, item, cfg = args
    ctx = _Ctx(item, cfg, index)
    record = {"key": item.key, "instance_digest": ctx.digest, "criteria": {}}
    timings = {}
    try:
        ctx.d
    except (CapExceeded, InfeasibleError) as e:
        for c in cfg.criteria:
            record["criteria"][c] = [Certificate.skipped(c, str(e), ctx.digest).to_dict()]
        return record
    record["support_size"] = ctx.d.N
    for c in cfg.criteria:
        t0 = time.perf_counter()
        try:
            certs = CHECKS[c](ctx)
        except CapExceeded as e:
            certs = [Certificate.skipped(c, str(e), ctx.digest)]
        except Exception as e:  # a hard error fails the criterion, the suite goes on
            log.exception("%s %s", item.key, c)
            certs = [Certificate(c, None, None, 0.0, FAIL, ctx.digest,
                                 reason=f"error: {type(e).__name__}: {e}")]
        timings[c] = time.perf_counter() - t0
        record["criteria"][c] = [x.to_dict() for x in certs]
    log.info("%s N=%d %s", item.key, ctx.d.N,
             " ".join(f"{k}={v:.2f}s" for k, v in timings.items()))
    record["_timings"] = timings
    return record


def workers() -> int:
    env = os.environ.get("SPECIND_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run_suite(cfg: SuiteConfig, items: list[SuiteItem] | None = None,
              timings: dict | None = None) -> dict:
    """Run every criterion on every suite item; returns the report payload.

    Per-criterion CPU seconds are added into ``timings`` when given; they are
    kept out of the payload so that reports are reproducible byte for byte.
    """
    items = items if items is not None else default_suite(cfg.max_n)
    if cfg.keys is not None:
        items = [it for it in items if it.key in cfg.keys]
    jobs = [(i, it, cfg) for i, it in enumerate(items)]
    nw = workers()
    if nw > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(nw) as ex:
            records = list(ex.map(run_item, jobs, chunksize=1))
    else:
        records = [run_item(j) for j in jobs]
    for r in records:
        for k, v in r.pop("_timings", {}).items():
            if timings is not None:
                timings[k] = timings.get(k, 0.0) + v
    summary = {}
    skips = []
    for c in cfg.criteria:
        certs = [x for r in records for x in r["criteria"].get(c, [])]
        summary[c] = {"description": CRITERIA[c], **tally(_Status(x) for x in certs)}
        for r in records:
            for x in r["criteria"].get(c, []):
                if x["status"] == "skip":
                    skips.append({"criterion": c, "key": r["key"],
                                  "inequality_id": x["inequality_id"], "reason": x["reason"]})
    payload = {
        "config": config_dict(cfg),
        "summary": summary,
        "skips": skips,
        "instances": records,
    }
    return payload


class _Status:
    def __init__(self, d: dict):
        self.status = d["status"]


def config_dict(cfg: SuiteConfig) -> dict:
    out = asdict(cfg)
    out["criteria"] = list(cfg.criteria)
    out["keys"] = list(cfg.keys) if cfg.keys is not None else None
    return out


def failed(payload: dict) -> bool:
    return any(v["fail"] for v in payload["summary"].values())


def dumps(payload: dict) -> str:
    return json.dumps(payload, indent=1, sort_keys=False, allow_nan=False)
