"""Stepwise samplers: Glauber, flip and down-up dynamics, and a chain runner.

Single-chain steppers take a configuration and a ``numpy`` Generator.  The
``*_batch`` variants advance a (B, n) array of independent chains at once and
are what the Monte Carlo checks use.
"""

from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .instance import Instance, ListColoringInstance, gibbs_weight

# Regime constants for the flip-dynamics analysis.
VIGODA_RATIO = 11 / 6
LAMBDA_STAR = 11 / 6 - 1e-5


@dataclass(frozen=True)
class FlipParameters:
    """Flip probabilities p_1..p_J; components larger than J never flip."""

    p: tuple[float, ...]
    preset: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "p", tuple(float(x) for x in self.p))
        if any(not 0 <= x <= 1 for x in self.p):
            raise ValueError(f"flip probabilities must lie in [0, 1], got {self.p}")

    @property
    def J(self) -> int:
        return len(self.p)

    def prob(self, j: int) -> float:
        return self.p[j - 1] if 1 <= j <= self.J else 0.0

    def accept(self, j: int) -> float:
        """Probability p_j / j of flipping a flippable component of size j."""
        return self.prob(j) / j if j >= 1 else 0.0

    @classmethod
    def vigoda(cls) -> "FlipParameters":
        return cls((1.0, 13 / 42, 1 / 6, 2 / 21, 1 / 21, 1 / 84), "vigoda")

    @classmethod
    def cdmpp(cls) -> "FlipParameters":
        return cls((1.0, 0.296706, 0.166762, 0.101790, 0.058475, 0.025989), "cdmpp")

    @classmethod
    def glauber_like(cls) -> "FlipParameters":
        return cls((1.0,), "custom")

    @classmethod
    def from_name(cls, name: str) -> "FlipParameters":
        presets = {"vigoda": cls.vigoda, "cdmpp": cls.cdmpp}
        if name not in presets:
            raise ValueError(f"unknown flip preset {name!r} (choose from {sorted(presets)})")
        return presets[name]()


# --------------------------------------------------------------------------
# Randomness


@dataclass(frozen=True)
class RngStream:
    """A reproducible substream: Philox keyed by (seed, stream path)."""

    seed: int
    stream: tuple[int, ...] = ()

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=self.stream)
        return np.random.Generator(np.random.Philox(ss))

    def child(self, *ids: int) -> "RngStream":
        return RngStream(self.seed, self.stream + tuple(int(i) for i in ids))


# --------------------------------------------------------------------------
# Glauber


def local_law(inst: Instance, sigma: Sequence[int], v: int) -> np.ndarray:
    """mu^v(. | sigma_{-v}) from the neighbours of v alone."""
    w = inst.fields[v].copy()
    A = inst.interaction
    for u in inst.graph.adjacency[v]:
        w *= A[:, sigma[u]]
    s = w.sum()
    if not s > 0:
        raise ValueError(f"no admissible spin at vertex {v} given its neighbours")
    return w / s


def _check_feasible(inst: Instance, sigma) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=np.int64)
    if sigma.shape != (inst.n,):
        raise ValueError(f"configuration has shape {sigma.shape}, expected ({inst.n},)")
    if gibbs_weight(inst, sigma) <= 0:
        raise ValueError(f"configuration {sigma.tolist()} is not feasible")
    return sigma


def glauber_step(inst: Instance, sigma, rng: np.random.Generator) -> np.ndarray:
    sigma = _check_feasible(inst, sigma)
    if inst.n == 0:
        return sigma
    v = int(rng.integers(inst.n))
    out = sigma.copy()
    out[v] = rng.choice(inst.q, p=local_law(inst, sigma, v))
    return out


class _Padded:
    """Neighbour table padded with a sentinel vertex whose spin is q."""

    def __init__(self, inst: Instance):
        n, q = inst.n, inst.q
        deg = max((len(a) for a in inst.graph.adjacency), default=0)
        self.nbr = np.full((n, max(deg, 1)), n, dtype=np.int64)
        for v, a in enumerate(inst.graph.adjacency):
            self.nbr[v, :len(a)] = a
        self.A = np.ones((q + 1, q + 1))
        self.A[:q, :q] = inst.interaction
        self.F = inst.fields
        self.q = q


def _categorical(W: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    cum = np.cumsum(W, axis=1)
    u = rng.random(W.shape[0]) * cum[:, -1]
    return np.minimum((u[:, None] >= cum).sum(axis=1), W.shape[1] - 1)


def glauber_laws_batch(inst: Instance, X: np.ndarray, v: np.ndarray, pad: _Padded | None = None
                       ) -> np.ndarray:
    """(B, q) conditional laws at vertex v[b] of configuration X[b]."""
    pad = pad or _Padded(inst)
    B = X.shape[0]
    Xs = np.concatenate([X, np.full((B, 1), pad.q, dtype=X.dtype)], axis=1)
    spins = Xs[np.arange(B)[:, None], pad.nbr[v]]
    W = pad.F[v] * np.prod(pad.A[:pad.q][:, spins].transpose(1, 2, 0), axis=1)
    return W / W.sum(axis=1, keepdims=True)


def glauber_step_batch(inst: Instance, X: np.ndarray, rng: np.random.Generator,
                       pad: _Padded | None = None) -> np.ndarray:
    X = np.array(X, dtype=np.int64, copy=True)
    if inst.n == 0:
        return X
    v = rng.integers(inst.n, size=X.shape[0])
    X[np.arange(X.shape[0]), v] = _categorical(glauber_laws_batch(inst, X, v, pad), rng)
    return X


# --------------------------------------------------------------------------
# Kempe components and flips


def _kempe(g, sigma, u: int, c: int, limit: int | None = None):
    a = sigma[u]
    if c == a:
        return [u], True
    comp = [u]
    seen = {u}
    head = 0
    while head < len(comp):
        w = comp[head]
        head += 1
        other = c if sigma[w] == a else a
        for x in g.adjacency[w]:
            if x not in seen and sigma[x] == other:
                seen.add(x)
                comp.append(x)
                if limit is not None and len(comp) > limit:
                    return comp, False
    return comp, True


def kempe_component(inst: Instance, sigma, u: int, c: int) -> frozenset[int]:
    """Vertices joined to u by paths alternating between colours sigma(u) and c."""
    comp, _ = _kempe(inst.graph, list(sigma), u, c)
    return frozenset(comp)


def flip_apply(inst: ListColoringInstance, sigma, S, u: int, c: int) -> np.ndarray | None:
    """sigma_S (colours sigma(u) and c exchanged on S), or None if not a proper
    list-colouring."""
    sigma = np.asarray(sigma, dtype=np.int64)
    if frozenset(S) != kempe_component(inst, sigma, u, c):
        raise ValueError(f"S is not the Kempe component of ({u}, {c})")
    a = sigma[u]
    out = sigma.copy()
    for w in S:
        out[w] = c if sigma[w] == a else a
    return out if gibbs_weight(inst, out) > 0 else None


def _flip_table(inst: ListColoringInstance, sigma, params: FlipParameters, allowed=None):
    """Targets (n, Lmax, n), acceptance probs (n, Lmax) and component sizes.

    Exchanging two colours on a Kempe component keeps a proper colouring proper,
    so a flip is admissible iff every recoloured vertex keeps a colour from its list.
    """
    n = inst.n
    Lmax = max(len(L) for L in inst.lists)
    allowed = allowed if allowed is not None else [frozenset(L) for L in inst.lists]
    targets = np.repeat(np.asarray(sigma, dtype=np.int64)[None, None, :], n, 0).repeat(Lmax, 1)
    acc = np.zeros((n, Lmax))
    sizes = np.zeros((n, Lmax), dtype=np.int64)
    sig = [int(x) for x in sigma]
    for v, L in enumerate(inst.lists):
        for k, c in enumerate(L):
            comp, small = _kempe(inst.graph, sig, v, c, params.J)
            sizes[v, k] = len(comp)
            if not small:
                continue
            a = sig[v]
            if all((c if sig[w] == a else a) in allowed[w] for w in comp):
                new = targets[v, k]
                for w in comp:
                    new[w] = c if sig[w] == a else a
                acc[v, k] = params.accept(len(comp))
    return targets, acc, sizes


def _check_proper(inst: ListColoringInstance, sigma) -> np.ndarray:
    if not isinstance(inst, ListColoringInstance):
        raise TypeError("flip dynamics needs a list-coloring instance")
    sigma = np.asarray(sigma, dtype=np.int64)
    if sigma.shape != (inst.n,) or gibbs_weight(inst, sigma) <= 0:
        raise ValueError(f"{sigma.tolist()} is not a proper list-coloring")
    return sigma


def flip_step(inst: ListColoringInstance, sigma, params: FlipParameters,
              rng: np.random.Generator) -> tuple[np.ndarray, int]:
    """One flip move; returns the new colouring and the flipped component size
    (0 when nothing flipped)."""
    sigma = _check_proper(inst, sigma)
    v = int(rng.integers(inst.n))
    L = inst.lists[v]
    c = L[int(rng.integers(len(L)))]
    comp, small = _kempe(inst.graph, sigma.tolist(), v, c, params.J)
    u = rng.random()
    if not small or u >= params.accept(len(comp)):
        return sigma, 0
    a = sigma[v]
    out = sigma.copy()
    for w in comp:
        out[w] = c if sigma[w] == a else a
    if gibbs_weight(inst, out) <= 0:
        return sigma, 0
    return out, len(comp)


class FlipSampler:
    """Batch flip dynamics with a per-state cache of the move table."""

    def __init__(self, inst: ListColoringInstance, params: FlipParameters):
        if not isinstance(inst, ListColoringInstance):
            raise TypeError("flip dynamics needs a list-coloring instance")
        self.inst = inst
        self.params = params
        self.lens = np.array([len(L) for L in inst.lists])
        self._allowed = [frozenset(L) for L in inst.lists]
        self._cache: dict[bytes, tuple] = {}

    def table(self, sigma: np.ndarray):
        key = np.ascontiguousarray(sigma, dtype=np.int64).tobytes()
        t = self._cache.get(key)
        if t is None:
            _check_proper(self.inst, sigma)
            t = self._cache[key] = _flip_table(self.inst, sigma, self.params, self._allowed)
        return t

    def draw(self, B: int, rng: np.random.Generator):
        v = rng.integers(self.inst.n, size=B)
        k = np.floor(rng.random(B) * self.lens[v]).astype(np.int64)
        u = rng.random(B)
        return v, k, u

    def step(self, X: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.int64)
        v, k, u = self.draw(X.shape[0], rng)
        return self.apply(X, v, k, u)

    def apply(self, X, v, k, u):
        if X.shape[0] == 0:
            return X.copy(), np.zeros(0, dtype=np.int64)
        uniq, inv = np.unique(X, axis=0, return_inverse=True)
        inv = inv.ravel()
        tabs = [self.table(sigma) for sigma in uniq]
        acc = np.stack([t[1] for t in tabs])[inv, v, k]
        move = u < acc
        out = X.copy()
        size = np.zeros(X.shape[0], dtype=np.int64)
        if move.any():
            r = np.flatnonzero(move)
            if len(tabs) * tabs[0][0].size <= 4_000_000:
                out[r] = np.stack([t[0] for t in tabs])[inv[r], v[r], k[r]]
                size[r] = np.stack([t[2] for t in tabs])[inv[r], v[r], k[r]]
            else:
                out[r] = np.stack([tabs[inv[i]][0][v[i], k[i]] for i in r])
                size[r] = [tabs[inv[i]][2][v[i], k[i]] for i in r]
        return out, size


def flip_step_batch(inst, X, params, rng, sampler: FlipSampler | None = None):
    sampler = sampler or FlipSampler(inst, params)
    return sampler.step(X, rng)[0]


# --------------------------------------------------------------------------
# Down-up walk on the set system


def down_up_step(d, S, rng: np.random.Generator) -> frozenset[int]:
    """Drop a uniform element of S, then draw a support set containing the rest
    with probability proportional to mu."""
    S = frozenset(int(i) for i in S)
    sigma = d.universe.decode(S)
    if d.index_of(np.asarray(sigma)[None, :])[0] < 0:
        raise ValueError("S is not in the support")
    elems = sorted(S)
    i = elems[int(rng.integers(len(elems)))]
    rest = [j for j in elems if j != i]
    cand = np.flatnonzero(d.onehot[:, rest].all(axis=1)) if rest else np.arange(d.N)
    w = d.probs[cand]
    t = cand[int(rng.choice(cand.size, p=w / w.sum()))]
    return frozenset(np.flatnonzero(d.onehot[t]).tolist())


class DownUpSampler:
    """Batch down-up walk on support indices, caching candidate sets per state."""

    def __init__(self, d):
        self.d = d
        self._cache: dict[int, list] = {}

    def moves(self, x: int):
        m = self._cache.get(x)
        if m is None:
            S = np.flatnonzero(self.d.onehot[x])
            m = []
            for i in S:
                rest = S[S != i]
                cand = np.flatnonzero(self.d.onehot[:, rest].all(axis=1))
                w = self.d.probs[cand]
                m.append((cand, np.cumsum(w / w.sum())))
            self._cache[x] = m
        return m

    def step(self, idx: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        out = idx.copy()
        n = self.d.n
        drop = rng.integers(n, size=idx.size) if n else np.zeros(idx.size, dtype=np.int64)
        u = rng.random(idx.size)
        if n == 0:
            return out
        for x in np.unique(idx):
            rows = np.flatnonzero(idx == x)
            mv = self.moves(int(x))
            for e in range(n):
                r = rows[drop[rows] == e]
                cand, cum = mv[e]
                pick = np.minimum(np.searchsorted(cum, u[r] * cum[-1], side="right"), cand.size - 1)
                out[r] = cand[pick]
        return out


# --------------------------------------------------------------------------
# Chain runner


@dataclass
class ChainTrace:
    times: list[int] = field(default_factory=list)
    states: list[tuple[int, ...]] = field(default_factory=list)
    move_stats: Counter = field(default_factory=Counter)

    def record(self, t: int, sigma) -> None:
        if self.times and t <= self.times[-1]:
            raise ValueError("trace times must increase")
        self.times.append(int(t))
        self.states.append(tuple(int(x) for x in sigma))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "sigma"])
            for t, s in zip(self.times, self.states):
                w.writerow([t, " ".join(map(str, s))])

    def stats_json(self, J: int = 6) -> str:
        return json.dumps({str(j): int(self.move_stats.get(j, 0)) for j in range(1, J + 1)})


def run_chain(stepper: Callable, sigma0, steps: int, stride: int = 1,
              rng: np.random.Generator | None = None) -> ChainTrace:
    """Run ``stepper(sigma, rng)`` for ``steps`` steps, recording every ``stride``.

    Steppers may return either a configuration or (configuration, event); integer
    events > 0 are tallied in ``move_stats``.
    """
    if steps < 0 or stride < 1:
        raise ValueError("need steps >= 0 and stride >= 1")
    rng = rng if rng is not None else RngStream(0).generator()
    trace = ChainTrace()
    sigma = np.asarray(sigma0, dtype=np.int64)
    trace.record(0, sigma)
    for t in range(1, steps + 1):
        out = stepper(sigma, rng)
        if isinstance(out, tuple):
            sigma, ev = out
            if ev:
                trace.move_stats[int(ev)] += 1
        else:
            sigma = out
        if t % stride == 0:
            trace.record(t, sigma)
    return trace
