"""Command-line runner: ``specind {exact,sample,couple,verify,suite}``.

Every command writes one report record (JSON) holding the schema version, an
optional timestamp, the effective configuration and its digest, the payload and
the exit status.  With ``--format csv`` the tabular part of the payload is
written as CSV and the record goes next to it with a ``.json`` suffix.

Exit status: 0 when every executed certificate passes, 1 when some certificate
fails, 2 on a usage or hard error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime
import hashlib
import io
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import suite as suite_mod
from .certify import FAIL, Certificate, instance_digest, tally
from .coupling import (
    NonConvergentCoupling,
    adjacent_pairs,
    amortized_constant_exact,
    amortized_constant_mc,
    color_symmetric,
    coupling_curvature,
    make_coupling,
    pair_orbits,
    ricci_curvature_exact,
    variable_length_stats,
)
from .dynamics import LAMBDA_STAR, FlipParameters, RngStream, local_law
from .exact import (
    dobrushin_matrix,
    enumerate_gibbs,
    inf_norm,
    influence_matrix,
    lambda_max,
    marginal_vector,
    mixing_time_exact,
    spectral_gap,
    spectral_independence,
)
from .instance import (
    CapExceeded,
    Instance,
    InfeasibleError,
    ListColoringInstance,
    coloring,
    hardcore,
    ising,
    parse_graph_name,
    read_graph,
    read_lists,
    read_spin_system,
)
from .stein import (
    PoissonSolver,
    blackbox_certificate,
    chain_kernel,
    stein_certificates,
)

SCHEMA_VERSION = 1
COMMANDS = ("exact", "sample", "couple", "verify", "suite")
BUNDLES = ("stein", "blackbox", "dobrushin", "ltg", "flip-lemmas")
EXACT_KEYS = ("Z", "support_size", "marginals", "influence_infnorm", "lambda_max", "eta",
              "rho_gamma", "gap", "tmix")

# CSV columns per command
CSV_COLUMNS = {
    "exact": ("vertex", "color", "marginal"),
    "sample": ("t", "tv_empirical", "tv_exact", "stderr"),
    "couple": ("pair_id", "trial", "d0", "T", "dT", "W"),
    "verify": ("inequality_id", "status", "lhs", "rhs", "slack", "tolerance", "instance_digest",
               "reason"),
    "suite": ("key", "criterion", "inequality_id", "status", "lhs", "rhs", "slack", "tolerance",
              "instance_digest", "reason"),
}

log = logging.getLogger("specind")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    command: str = "exact"
    bundle: str | None = None
    graph: str | None = None
    graph_file: str | None = None
    lists_file: str | None = None
    spin_file: str | None = None
    model: str = "coloring"
    q: int | None = None
    beta: float = 1.0
    lam: float = 1.0
    preset: str = "vigoda"
    flip_p: list[float] | None = None
    chain: str = "glauber"
    coupling: str = "greedy"
    trials: int = 1000
    horizon: int = 1000
    stride: int = 0
    pairs: int = 32
    seed: int = 0
    out: str | None = None
    format: str = "json"
    max_n: int = 5
    tolerance: float = 1e-9
    const_bound: float = 4.0
    exclude_same_site: bool = False
    support_cap: int = 50_000
    joint_cap: int = 2_500
    criteria: list[str] = field(default_factory=lambda: list(suite_mod.CRITERIA))
    keys: list[str] | None = None

    def validate(self) -> "ExperimentConfig":
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.command in COMMANDS, f"command must be one of {COMMANDS}, got {self.command!r}")
        if self.command == "verify":
            need(self.bundle in BUNDLES, f"verify needs a bundle from {BUNDLES}")
        need(self.model in ("coloring", "ising", "hardcore", "custom"),
             f"unknown model {self.model!r}")
        need(self.preset in ("vigoda", "cdmpp", "custom"), f"unknown preset {self.preset!r}")
        need(self.chain in ("glauber", "flip", "downup"), f"unknown chain {self.chain!r}")
        need(self.coupling in ("greedy", "independent"), f"unknown coupling {self.coupling!r}")
        need(self.format in ("json", "csv"), f"format must be json or csv, got {self.format!r}")
        need(self.q is None or self.q >= 1, f"--q must be a positive integer, got {self.q}")
        for name in ("trials", "horizon", "pairs", "max_n", "support_cap", "joint_cap"):
            need(getattr(self, name) >= 1, f"--{name.replace('_', '-')} must be >= 1, "
                                           f"got {getattr(self, name)}")
        need(self.stride >= 0, "--stride must be >= 0")
        need(self.seed >= 0, "--seed must be >= 0")
        need(self.tolerance >= 0 and math.isfinite(self.tolerance), "--tolerance must be >= 0")
        need(self.lam > 0 and math.isfinite(self.lam), "--lambda must be > 0")
        need(math.isfinite(self.beta), "--beta must be finite")
        need(self.const_bound > 0, "--const-bound must be > 0")
        bad = sorted(set(self.criteria) - set(suite_mod.CRITERIA))
        need(not bad, f"unknown criteria {bad}")
        if self.preset == "custom":
            need(bool(self.flip_p), "--preset custom needs --flip-p p1,p2,...")
        if self.command != "suite":
            need(bool(self.graph) != bool(self.graph_file),
                 "give exactly one of --graph or --graph-file")
            if self.model == "coloring":
                need(self.q is not None or self.lists_file is not None,
                     "coloring needs --q or --lists-file")
            if self.model == "custom":
                need(self.spin_file is not None, "--model custom needs --spin-file")
            if self.chain == "flip" or self.bundle == "flip-lemmas":
                need(self.model == "coloring", "flip dynamics needs --model coloring")
        return self

    def flip_params(self) -> FlipParameters:
        if self.preset == "custom":
            return FlipParameters(tuple(self.flip_p), "custom")
        return FlipParameters.from_name(self.preset)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def config_digest(cfg: dict) -> str:
    """sha256 of the canonical (key-sorted) JSON form."""
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def load_config_file(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    if "lambda" in doc:
        doc["lam"] = doc.pop("lambda")
    unknown = sorted(set(doc) - set(FIELDS))
    if unknown:
        raise ConfigError(f"{path}: unknown config keys {unknown}")
    return doc


def _csv_floats(s: str) -> list[float]:
    try:
        return [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _csv_strs(s: str) -> list[str]:
    return [x.strip() for x in s.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    g = common.add_argument_group("instance")
    g.add_argument("--config", help="JSON config file; flags override its values")
    g.add_argument("--graph", help="named graph: triangle, edge, path5, cycle6, grid2x3, ...")
    g.add_argument("--graph-file", dest="graph_file", help="edge-list file (first line 'n m')")
    g.add_argument("--lists-file", dest="lists_file", help="colour lists, one 'v: c1 c2' per line")
    g.add_argument("--spin-file", dest="spin_file", help="JSON spin system for --model custom")
    g.add_argument("--model", choices=("coloring", "ising", "hardcore", "custom"))
    g.add_argument("--q", type=int)
    g.add_argument("--beta", type=float)
    g.add_argument("--lambda", dest="lam", type=float)
    g.add_argument("--exclude-same-site", dest="exclude_same_site", action="store_true")
    g = common.add_argument_group("dynamics")
    g.add_argument("--preset", choices=("vigoda", "cdmpp", "custom"))
    g.add_argument("--flip-p", dest="flip_p", type=_csv_floats,
                   help="flip probabilities p1,...,pJ for --preset custom")
    g.add_argument("--chain", choices=("glauber", "flip", "downup"))
    g.add_argument("--coupling", choices=("greedy", "independent"))
    g.add_argument("--trials", type=int)
    g.add_argument("--horizon", type=int)
    g.add_argument("--stride", type=int, help="checkpoint spacing for sample (0: automatic)")
    g.add_argument("--pairs", type=int, help="start pairs for couple")
    g.add_argument("--const-bound", dest="const_bound", type=float)
    g = common.add_argument_group("run")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="output path (default: stdout)")
    g.add_argument("--format", choices=("json", "csv"))
    g.add_argument("--max-n", dest="max_n", type=int)
    g.add_argument("--tolerance", type=float)
    g.add_argument("--support-cap", dest="support_cap", type=int)
    g.add_argument("--joint-cap", dest="joint_cap", type=int)
    g.add_argument("--criteria", type=_csv_strs, help="suite criteria, e.g. c1,c3")
    g.add_argument("--keys", type=_csv_strs, help="restrict the suite to these instance keys")
    g.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="specind", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("exact", parents=[common], help="exact enumeration report")
    sub.add_parser("sample", parents=[common], help="chain runs and TV against exact laws")
    sub.add_parser("couple", parents=[common], help="curvature, C and variable-length statistics")
    v = sub.add_parser("verify", parents=[common], help="certificate bundles")
    v.add_argument("bundle", choices=BUNDLES)
    sub.add_parser("suite", parents=[common], help="the full acceptance suite")
    return p


def parse_config(argv=None) -> tuple[ExperimentConfig, bool]:
    args = vars(build_parser().parse_args(argv))
    verbose = bool(args.pop("verbose", False))
    values = {}
    path = args.pop("config", None)
    if path is not None:
        values.update(load_config_file(path))
    values.update(args)
    try:
        cfg = ExperimentConfig(**values)
    except TypeError as e:
        raise ConfigError(str(e))
    return cfg.validate(), verbose


# --------------------------------------------------------------------------
# Instances


def build_instance(cfg: ExperimentConfig) -> Instance:
    if cfg.graph_file:
        g = read_graph(cfg.graph_file)
        name = Path(cfg.graph_file).stem
    else:
        g = parse_graph_name(cfg.graph, seed=cfg.seed)
        name = cfg.graph
    if cfg.model == "coloring":
        lists = read_lists(cfg.lists_file, g.n) if cfg.lists_file else None
        q = cfg.q if cfg.q is not None else max(max(L) for L in lists) + 1
        return coloring(g, q, lists, name=f"{name}/coloring_q{q}")
    if cfg.model == "ising":
        return ising(g, cfg.beta, name=f"{name}/ising_b{cfg.beta:g}")
    if cfg.model == "hardcore":
        return hardcore(g, cfg.lam, name=f"{name}/hardcore_l{cfg.lam:g}")
    return dataclasses.replace(read_spin_system(cfg.spin_file, g), name=f"{name}/custom")


def _rng(cfg: ExperimentConfig, *stream: int) -> np.random.Generator:
    return RngStream(cfg.seed).child(*stream).generator()


def _num(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else None


# --------------------------------------------------------------------------
# Commands


def cmd_exact(cfg: ExperimentConfig):
    d = enumerate_gibbs(build_instance(cfg), cap=cfg.support_cap)
    m = marginal_vector(d)
    I = influence_matrix(d, cfg.exclude_same_site)
    notes = []
    try:
        si = spectral_independence(d, cfg.exclude_same_site)
        eta = si.eta
    except CapExceeded as e:
        eta = None
        notes.append(f"eta: {e}")
    gamma = dobrushin_matrix(d)[1]
    T = chain_kernel(d, cfg.chain, cfg.flip_params() if cfg.chain == "flip" else None)
    gap = tmix = None
    if not T.is_irreducible():
        notes.append(f"{cfg.chain} kernel is reducible: gap and tmix undefined")
    else:
        try:
            gap = spectral_gap(T).gap
        except CapExceeded as e:
            notes.append(f"gap: {e}")
        try:
            tmix = mixing_time_exact(T)[0]
        except (CapExceeded, ValueError, RuntimeError) as e:
            notes.append(f"tmix: {e}")
    marg = {}
    rows = []
    for e, (v, c) in enumerate(d.universe.elements):
        marg.setdefault(str(v), {})[str(c)] = float(m[e])
        rows.append({"vertex": int(v), "color": int(c), "marginal": float(m[e])})
    payload = {
        "Z": float(d.Z),
        "support_size": d.N,
        "marginals": marg,
        "influence_infnorm": inf_norm(I),
        "lambda_max": lambda_max(I, m),
        "eta": eta,
        "rho_gamma": float(gamma),
        "gap": _num(gap),
        "tmix": tmix,
        "chain": cfg.chain,
        "instance_digest": instance_digest(d.instance),
        "notes": notes,
    }
    return payload, rows, []


def cmd_sample(cfg: ExperimentConfig):
    d = enumerate_gibbs(build_instance(cfg), cap=cfg.support_cap)
    params = cfg.flip_params() if cfg.chain == "flip" else None
    T = chain_kernel(d, cfg.chain, params)
    step = suite_mod.index_stepper(d, cfg.chain, params)
    rng = _rng(cfg, 1)
    try:
        tmix, start = mixing_time_exact(T)
    except (ValueError, RuntimeError, CapExceeded):
        tmix, start = None, 0
    stride = cfg.stride or max(1, cfg.horizon // 20)
    B = cfg.trials
    X = np.full(B, start)
    law = np.zeros(d.N)
    law[start] = 1.0
    rows = []
    PT = T.P.T.tocsr()
    for t in range(cfg.horizon + 1):
        if t % stride == 0 or t == cfg.horizon:
            emp = np.bincount(X, minlength=d.N) / B
            rows.append({"t": t,
                         "tv_empirical": 0.5 * float(np.abs(emp - d.probs).sum()),
                         "tv_exact": 0.5 * float(np.abs(law - d.probs).sum()),
                         "stderr": 0.5 * float(np.sqrt(law * (1 - law) / B).sum())})
        if t == cfg.horizon:
            break
        X = step(X, rng)
        if (X < 0).any():
            raise RuntimeError("sampler left the support")
        law = PT @ law
    last = rows[-1]
    payload = {"chain": cfg.chain, "start": d.support[start].tolist(), "tmix": tmix,
               "support_size": d.N, "trials": B, "horizon": cfg.horizon,
               "final_tv_empirical": last["tv_empirical"], "final_tv_exact": last["tv_exact"],
               "instance_digest": instance_digest(d.instance), "checkpoints": len(rows)}
    # the empirical law of the chains must sit within sampling error of P^t(start, .)
    emp_gap = max(abs(r["tv_empirical"] - r["tv_exact"]) - 3 * r["stderr"] for r in rows)
    cert = Certificate("sample_tv_consistency", emp_gap, 0.0, 0.0,
                       instance=payload["instance_digest"],
                       provenance={"lhs": "monte-carlo", "rhs": "exact"},
                       detail={"note": "|TV_emp - TV_exact| - 3 stderr, worst checkpoint"})
    payload["certificates"] = [cert.to_dict()]
    return payload, rows, [cert]


def _start_pairs(inst: Instance, d, k: int, rng: np.random.Generator):
    """Up to k pairs at vertex-Hamming distance one: all of them (up to colour
    relabelling) when few enough, else a seeded sample."""
    if d is not None:
        E = adjacent_pairs(d)
        if color_symmetric(d) and len(E):
            E = E[pair_orbits(d, E)[0]]
        total = len(E)
        if total > k:
            E = E[np.sort(rng.choice(total, size=k, replace=False))]
        return [(d.support[a], d.support[b]) for a, b in E], total
    # too large to enumerate: a feasible greedy state, then a one-site change
    sigma = np.zeros(inst.n, dtype=np.int64)
    for v in range(inst.n):
        sigma[v] = _feasible_colour(inst, sigma, v, list(range(v)), rng)
    out = []
    for _ in range(k):
        v = int(rng.integers(inst.n))
        law = local_law(inst, sigma, v)
        alt = [c for c in np.flatnonzero(law > 0) if c != sigma[v]]
        if not alt:
            continue
        y = sigma.copy()
        y[v] = int(rng.choice(alt))
        out.append((sigma.copy(), y))
    return out, len(out)


def _feasible_colour(inst, sigma, v, assigned, rng) -> int:
    w = inst.fields[v].copy()
    for u in inst.graph.adjacency[v]:
        if u in assigned:
            w = w * inst.interaction[:, sigma[u]]
    ok = np.flatnonzero(w > 0)
    if not len(ok):
        raise InfeasibleError(f"greedy assignment stuck at vertex {v}")
    return int(ok[0])


def cmd_couple(cfg: ExperimentConfig):
    inst = build_instance(cfg)
    params = cfg.flip_params() if cfg.chain == "flip" else None
    spec = make_coupling(inst, cfg.chain, cfg.coupling, params)
    notes = []
    try:
        d = enumerate_gibbs(inst, cap=cfg.support_cap)
    except CapExceeded as e:
        d = None
        notes.append(f"no enumeration: {e}")
    pairs, n_pairs = _start_pairs(inst, d, cfg.pairs, _rng(cfg, 1))
    if not pairs:
        raise InfeasibleError("no start pair at distance one")
    exact = {"C": None, "alpha_coupling": None, "alpha_optimal": None}
    if d is not None:
        try:
            J = spec.joint(d, cap=cfg.joint_cap)
            exact["alpha_coupling"] = coupling_curvature(J)
            exact["C"] = amortized_constant_exact(J).C
        except (CapExceeded, NonConvergentCoupling) as e:
            notes.append(f"exact C: {e}")
        try:
            cur = ricci_curvature_exact(chain_kernel(d, cfg.chain, params), "optimal", "adjacent")
            exact["alpha_optimal"] = cur.alpha
        except CapExceeded as e:
            notes.append(f"optimal curvature: {e}")
    ref = ref_beta = None
    if cfg.chain == "flip" and isinstance(inst, ListColoringInstance):
        # reference values stated for the cited coupling, not asserted for ours
        D = inst.graph.max_degree
        q = min(len(L) for L in inst.lists)
        if q > D + 2:
            ref = (q - LAMBDA_STAR * D) / (q - D - 2)
            ref_beta = q * inst.n / (q - D - 2)
    vl = variable_length_stats(spec, pairs, cfg.trials, _rng(cfg, 2), max_steps=cfg.horizon,
                               reference_alpha=ref)
    mc = amortized_constant_mc(spec, pairs, cfg.horizon, cfg.trials, _rng(cfg, 3))
    rows = []
    for r in vl.per_pair:
        for i in range(cfg.trials):
            rows.append({"pair_id": r["pair_id"], "trial": i, "d0": r["d0"], "T": int(r["T"][i]),
                         "dT": int(r["dT"][i]), "W": int(r["Wt"][i])})
    per_pair = [{k: v for k, v in r.items() if k not in ("T", "dT", "Wt")} for r in vl.per_pair]
    payload = {
        "chain": cfg.chain, "coupling": cfg.coupling,
        "preset": params.preset if params else None,
        "instance_digest": instance_digest(inst),
        "pairs": len(pairs), "pairs_available": n_pairs, "trials": cfg.trials,
        "alpha_hat": vl.alpha, "W": vl.W, "W_ceiling": 13 if cfg.chain == "flip" else None,
        "beta": vl.beta, "M": vl.M, "contractive": vl.M is not None,
        "reference_alpha": ref, "reference_beta_bound": ref_beta, "truncated": vl.truncated,
        "C_mc": mc.C, "C_stderr": mc.stderr, "C_tail": mc.tail,
        "C_over_n": mc.C / inst.n,
        "exact": exact, "per_pair": per_pair, "notes": notes,
    }
    return payload, rows, []


def _verify_ctx(cfg: ExperimentConfig, d):
    inst = d.instance
    caps = suite_mod.SuiteCaps(support=cfg.support_cap, joint_states=cfg.joint_cap,
                               gap_states=cfg.support_cap)
    item = suite_mod.SuiteItem(inst.name, cfg.model, 0.0, inst)
    ctx = suite_mod._Ctx(item, suite_mod.SuiteConfig(seed=cfg.seed, caps=caps), 0)
    ctx._d = d
    return ctx


def verify_stein(cfg, d, dig) -> list[Certificate]:
    ids = ("poisson_residual", "stein_marginal", "stein_w1", "stein_identity",
           "stein_entrywise")
    params = cfg.flip_params() if cfg.chain == "flip" else None
    try:
        J = make_coupling(d.instance, cfg.chain, cfg.coupling, params).joint(d, cap=cfg.joint_cap)
        conv = amortized_constant_exact(J)
    except NonConvergentCoupling as e:
        return [Certificate.not_applicable(i, str(e), dig) for i in ids]
    T = J.base
    if not T.is_irreducible():
        return [Certificate.not_applicable(i, f"{cfg.chain} kernel is reducible", dig)
                for i in ids]
    solver = PoissonSolver(T)
    F = _rng(cfg, 1).normal(size=(d.N, 20))
    sols = solver.solve(F)
    cache = {"F": F, "H": np.stack([s.h for s in sols], axis=1)}
    out = [Certificate("poisson_residual", max(s.residual for s in sols), 0.0, 1e-10,
                       instance=dig, detail={"functions": len(sols)})]
    certs = stein_certificates(d, T, J, conv.g, solver, cache, cfg.chain, params,
                               tol=cfg.tolerance, instance=dig)
    for i in ids[1:]:
        out += certs[i]
    return out


def verify_flip_lemmas(cfg, d, dig) -> list[Certificate]:
    from .stein import kernel_difference_bounds

    params = cfg.flip_params()
    out = suite_mod.flip_exactness(d, params, instance=dig)
    out += kernel_difference_bounds(d, "flip", params, tol=cfg.tolerance, instance=dig)
    iid = f"flip_curvature_{params.preset}"
    if suite_mod.vigoda_regime(d.instance):
        out.append(suite_mod.flip_curvature(d, params, suite_mod.SuiteCaps.curvature_pairs, dig))
    else:
        out.append(Certificate.not_applicable(iid, "some list has fewer than "
                                              "ceil(11/6 Delta) colours", dig))
    try:
        J = make_coupling(d.instance, "flip", "greedy", params).joint(d, cap=cfg.joint_cap)
        C = amortized_constant_exact(J).C
        out.append(Certificate.not_applicable(
            "flip_C_over_n", "reported, not certified: C = O(n) is asymptotic", dig,
            C=C, n=d.n, C_over_n=C / d.n))
    except (CapExceeded, NonConvergentCoupling) as e:
        out.append(Certificate.skipped("flip_C_over_n", str(e), dig))
    return out


def cmd_verify(cfg: ExperimentConfig):
    d = enumerate_gibbs(build_instance(cfg), cap=cfg.support_cap)
    dig = instance_digest(d.instance)
    if cfg.bundle == "stein":
        certs = verify_stein(cfg, d, dig)
    elif cfg.bundle == "blackbox":
        params = cfg.flip_params() if cfg.chain == "flip" else None
        certs = blackbox_certificate(d, cfg.chain, cfg.coupling, cfg.const_bound, params,
                                     tol=cfg.tolerance, instance=dig)
    elif cfg.bundle == "dobrushin":
        certs = suite_mod.check_c8(_verify_ctx(cfg, d))
    elif cfg.bundle == "ltg":
        certs = suite_mod.check_c4(_verify_ctx(cfg, d))
    else:
        certs = verify_flip_lemmas(cfg, d, dig)
    bundle = [c.to_dict() for c in certs]
    payload = {"bundle": cfg.bundle, "instance_digest": dig, "support_size": d.N,
               "tally": tally(certs), "certificates": bundle}
    return payload, bundle, certs


def cmd_suite(cfg: ExperimentConfig):
    scfg = suite_mod.SuiteConfig(seed=cfg.seed, max_n=cfg.max_n,
                                 criteria=tuple(cfg.criteria),
                                 keys=tuple(cfg.keys) if cfg.keys is not None else None)
    scfg.caps.support = cfg.support_cap
    payload = suite_mod.run_suite(scfg)
    rows = []
    for r in payload["instances"]:
        for crit, certs in r["criteria"].items():
            for c in certs:
                rows.append({"key": r["key"], "criterion": crit, **c})
    return payload, rows, [r["status"] for r in rows]


COMMAND_FUNCS = {"exact": cmd_exact, "sample": cmd_sample, "couple": cmd_couple,
                 "verify": cmd_verify, "suite": cmd_suite}


# --------------------------------------------------------------------------
# Reports


def timestamp() -> str | None:
    """ISO time from SOURCE_DATE_EPOCH, else None so that reports stay reproducible."""
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if not epoch:
        return None
    t = datetime.datetime.fromtimestamp(int(epoch), tz=datetime.timezone.utc)
    return t.isoformat().replace("+00:00", "Z")


def make_record(cfg: dict, payload, exit_status: int, error: str | None = None) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "timestamp": timestamp(),
        "config_digest": config_digest(cfg),
        "config": cfg,
        "payload": payload,
        "exit_status": exit_status,
        "error": error,
    }


def dumps(record: dict) -> str:
    return json.dumps(record, indent=1, allow_nan=False) + "\n"


def csv_text(command: str, rows: list[dict]) -> str:
    cols = CSV_COLUMNS[command]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore", lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: ("" if r.get(k) is None else r.get(k)) for k in cols})
    return buf.getvalue()


def emit_report(record: dict, rows: list[dict] | None, fmt: str, out: str | None,
                stream=None) -> list[str]:
    """Write the record (and the CSV table for ``fmt == "csv"``); returns the paths."""
    stream = stream or sys.stdout
    command = record["config"].get("command", "exact")
    paths = []
    if out is None:
        stream.write(csv_text(command, rows or []) if fmt == "csv" else dumps(record))
        return paths
    out = Path(out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True)
    if fmt == "csv":
        if out.suffix == ".json":
            out = out.with_suffix(".csv")
        out.write_text(csv_text(command, rows or []))
        paths.append(str(out))
        out = out.with_suffix(".json")
    out.write_text(dumps(record))
    paths.append(str(out))
    return paths


def exit_status(certs) -> int:
    """1 if any certificate failed; ``certs`` holds Certificates or status strings."""
    for c in certs:
        status = c if isinstance(c, str) else c.status
        if status == FAIL:
            return 1
    return 0


def main(argv=None) -> int:
    try:
        cfg, verbose = parse_config(argv)
    except (ConfigError, OSError, json.JSONDecodeError) as e:
        print(f"specind: error: {e}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    conf = cfg.to_dict()
    try:
        payload, rows, certs = COMMAND_FUNCS[cfg.command](cfg)
        status = exit_status(certs)
        error = None
    except (CapExceeded, InfeasibleError, ValueError, OSError, RuntimeError) as e:
        payload, rows, status = {}, [], 2
        error = f"{type(e).__name__}: {e}"
        print(f"specind: error: {error}", file=sys.stderr)
    record = make_record(conf, payload, status, error)
    try:
        emit_report(record, rows, cfg.format, cfg.out)
    except OSError as e:
        print(f"specind: error: cannot write report: {e}", file=sys.stderr)
        return 2
    return status


if __name__ == "__main__":
    sys.exit(main())
