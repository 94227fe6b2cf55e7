"""Exact 1-Wasserstein distances between finitely supported laws.

Backed by the network-simplex solver of POT (``ot.lp.emd``).  The costs here
are small integer Hamming distances, for which the solver is exact in doubles.
"""

from __future__ import annotations

import os

import numpy as np

# POT probes every array backend on import (torch, jax, tf); none are used here.
for _key in ("PYTORCH", "JAX", "CUPY", "TENSORFLOW"):
    os.environ.setdefault(f"POT_BACKEND_DISABLE_{_key}", "1")

from ot.lp import emd  # noqa: E402

from .instance import CapExceeded  # noqa: E402

DEFAULT_TRANSPORT_CAP = 4_000_000


def hamming_matrix(X: np.ndarray, Y: np.ndarray) -> np.ndarray:
    """Vertex-Hamming distances between the rows of X and the rows of Y."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    return (X[:, None, :] != Y[None, :, :]).sum(axis=2).astype(float)


def wasserstein1(p, q, cost, *, cap: int = DEFAULT_TRANSPORT_CAP,
                 return_plan: bool = False):
    """Optimal transport cost ``min_gamma sum gamma(x, y) cost(x, y)``.

    Zero-mass atoms are dropped before solving, so ``cap`` bounds the number of
    entries of the reduced cost matrix.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    cost = np.asarray(cost, dtype=float)
    if cost.shape != (p.size, q.size):
        raise ValueError(f"cost has shape {cost.shape}, expected ({p.size}, {q.size})")
    if (cost < 0).any():
        raise ValueError("cost matrix has negative entries")
    if (p < -1e-15).any() or (q < -1e-15).any():
        raise ValueError("masses must be nonnegative")
    if abs(p.sum() - q.sum()) > 1e-9:
        raise ValueError(f"total masses differ: {p.sum()} vs {q.sum()}")
    ip = np.flatnonzero(p > 0)
    iq = np.flatnonzero(q > 0)
    if ip.size * iq.size > cap:
        raise CapExceeded(f"transport problem {ip.size}x{iq.size} exceeds cap {cap}")
    a = p[ip] / p[ip].sum()
    b = q[iq] / q[iq].sum()
    M = np.ascontiguousarray(cost[np.ix_(ip, iq)])
    G, log = emd(a, b, M, numItermax=10_000_000, log=True)
    if log["warning"] is not None:
        raise RuntimeError(f"transport solver did not converge: {log['warning']}")
    value = float((G * M).sum()) * p.sum()
    if not return_plan:
        return value
    plan = np.zeros_like(cost)
    plan[np.ix_(ip, iq)] = G * p.sum()
    return value, plan
