import numpy as np
import pytest
from hypothesis import given, settings

from specind import (
    FlipParameters,
    blackbox_certificate,
    coloring,
    condition,
    enumerate_gibbs,
    exact_w1,
    glauber_kernel,
    greedy_glauber_coupling,
    ising,
    parse_graph_name,
    stein_bound,
    verify_thm_specind,
)
from specind.coupling import NonConvergentCoupling, amortized_constant_exact
from specind.exact import flip_kernel
from specind.stein import (
    PoissonSolver,
    element_representatives,
    indicator_solutions,
    kernel_difference,
    kernel_difference_bounds,
    marginal_gap,
    orbit_w1,
)
from specind.transport import hamming_matrix, wasserstein1

from strategies import colorings, instances


def _dense_poisson(T, f):
    """h = sum_t P^t (f - pi f) via the fundamental matrix, computed independently."""
    N, pi = T.N, T.stationary
    P = T.P.toarray()
    Z = np.linalg.inv(np.eye(N) - P + np.outer(np.ones(N), pi))
    return Z @ (f - pi @ f)


@given(instances(max_n=3))
def test_poisson_solution(inst):
    d = enumerate_gibbs(inst)
    T = glauber_kernel(d)
    if d.N < 2 or not T.is_irreducible():
        return
    f = np.random.default_rng(0).normal(size=d.N)
    s = PoissonSolver(T).solve(f)
    assert s.residual < 1e-10 and abs(s.mean) < 1e-12
    assert np.allclose(s.h, _dense_poisson(T, f), atol=1e-9)


def test_poisson_krylov_matches_dense():
    d = enumerate_gibbs(ising(parse_graph_name("cycle5"), 0.4))
    f = np.random.default_rng(1).normal(size=(d.N, 3))
    for T in (glauber_kernel(d), flip_kernel(enumerate_gibbs(coloring(parse_graph_name("path3"), 4)),
                                             FlipParameters.vigoda())):
        f = np.random.default_rng(1).normal(size=(T.N, 3))
        dense = [s.h for s in PoissonSolver(T).solve(f)]
        H = PoissonSolver._krylov(T)(f - T.stationary @ f)
        H = H - T.stationary @ H
        assert np.allclose(np.stack(dense, axis=1), H, atol=1e-8)


def test_poisson_series():
    d = enumerate_gibbs(ising(parse_graph_name("path3"), 0.3))
    s = PoissonSolver(glauber_kernel(d)).solve(np.arange(d.N, dtype=float), series_terms=3000)
    assert s.series_gap < 1e-8


def test_reducible_kernel_rejected():
    d = enumerate_gibbs(coloring(parse_graph_name("triangle"), 3))
    with pytest.raises(ValueError):
        PoissonSolver(glauber_kernel(d))


@given(colorings(max_n=4, full_lists=True))
def test_indicator_solutions_by_symmetry(inst):
    d = enumerate_gibbs(inst)
    T = glauber_kernel(d)
    if d.N < 2 or d.N > 500 or not T.is_irreducible():
        return
    solver = PoissonSolver(T)
    H = indicator_solutions(d, solver)
    direct = np.stack([s.h for s in solver.solve(d.onehot.astype(float))], axis=1)
    assert np.allclose(H, direct, atol=1e-9)


@given(colorings(max_n=4, full_lists=True))
@settings(max_examples=25)
def test_orbit_w1_matches_dense(inst):
    d = enumerate_gibbs(inst)
    if d.N > 400:
        return
    for v, c in element_representatives(d)[:2]:
        nu = condition(d, {v: c})
        assert orbit_w1(d, nu) == pytest.approx(exact_w1(d, nu, method="dense"), abs=1e-10)


def test_w1_of_a_pinning_on_two_colourings():
    # edge, 3 colours: mu uniform on 6 colourings, nu = those with vertex 0 coloured 0
    d = enumerate_gibbs(coloring(parse_graph_name("path2"), 3))
    nu = condition(d, {0: 0})
    # (1,2) and (2,1) recolour vertex 0 only, (1,0) and (2,0) must recolour both
    assert exact_w1(d, nu, method="dense") == pytest.approx(2 / 6 + 2 * 2 / 6)
    assert exact_w1(d, nu, method="orbits") == pytest.approx(1.0)
    assert marginal_gap(d, nu) == pytest.approx(4 / 3 + 2 / 3)


@given(instances(max_n=3))
def test_stein_bound_holds(inst):
    d = enumerate_gibbs(inst)
    T = glauber_kernel(d)
    if d.N < 2 or not T.is_irreducible():
        return
    J = greedy_glauber_coupling(inst).joint(d)
    try:
        g = amortized_constant_exact(J).g
    except NonConvergentCoupling:
        return
    cache = {}
    for v, c in element_representatives(d):
        nu = condition(d, {v: c})
        r = stein_bound(d, nu, T, glauber_kernel(nu), J, g, cache=cache)
        assert r.marginal.passed and r.w1.passed
        assert r.identity_error < 1e-10 and r.entrywise_violation <= 1e-9


def test_kernel_difference_is_zero_on_itself():
    d = enumerate_gibbs(ising(parse_graph_name("path3"), 0.5))
    T = glauber_kernel(d)
    kd = kernel_difference(T, T)
    assert kd.max == 0 and kd.mean_nu == 0


@given(instances(max_n=3))
def test_glauber_kernel_difference_bound(inst):
    d = enumerate_gibbs(inst)
    for cert in kernel_difference_bounds(d, "glauber"):
        assert cert.passed, cert


def test_specind_row_and_blackbox_gate():
    d = enumerate_gibbs(coloring(parse_graph_name("path3"), 4))
    for e in range(len(d.universe.elements)):
        assert not verify_thm_specind(d, e).failed
    certs = blackbox_certificate(d, const_bound=1e-3)
    assert any(c.inequality_id == "blackbox_const" and c.failed for c in certs)
    gap = [c for c in blackbox_certificate(d, const_bound=100) if c.inequality_id == "blackbox_gap"]
    assert gap and gap[0].status in ("pass", "inapplicable")


def test_w1_transport_against_linprog():
    from scipy.optimize import linprog

    rng = np.random.default_rng(3)
    for _ in range(10):
        X = rng.integers(0, 3, size=(6, 4))
        Y = rng.integers(0, 3, size=(5, 4))
        p, q = rng.dirichlet(np.ones(6)), rng.dirichlet(np.ones(5))
        C = hamming_matrix(X, Y)
        Aeq = np.vstack([np.kron(np.eye(6), np.ones(5)), np.kron(np.ones(6), np.eye(5))])
        lp = linprog(C.ravel(), A_eq=Aeq, b_eq=np.r_[p, q], bounds=(0, None), method="highs")
        val, plan = wasserstein1(p, q, C, return_plan=True)
        assert val == pytest.approx(lp.fun, abs=1e-10)
        assert np.allclose(plan.sum(axis=1), p) and np.allclose(plan.sum(axis=0), q)


def test_transport_validation():
    from specind import CapExceeded

    C = np.ones((2, 2))
    with pytest.raises(ValueError):
        wasserstein1([0.5, 0.5], [1.0, 0.5], C)
    with pytest.raises(ValueError):
        wasserstein1([0.5, 0.5], [0.5, 0.5], -C)
    with pytest.raises(ValueError):
        wasserstein1([0.5, 0.5], [0.5, 0.5], np.ones((3, 2)))
    with pytest.raises(CapExceeded):
        wasserstein1([0.5, 0.5], [0.5, 0.5], C, cap=3)
    assert wasserstein1([1.0, 0.0], [0.0, 1.0], np.array([[0, 2.0], [2.0, 0]])) == 2.0
