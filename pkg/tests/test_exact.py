import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specind import (
    FlipParameters,
    condition,
    dobrushin_matrix,
    down_up_kernel,
    enumerate_gibbs,
    flip_kernel,
    functional_report,
    glauber_kernel,
    influence_matrix,
    ising,
    lambda_max,
    local_to_global_bound,
    mixing_time_exact,
    parse_graph_name,
    product_spins,
    spectral_gap,
    spectral_independence,
    tv_distance,
)
from specind.dynamics import _flip_table, local_law
from specind.exact import (
    embed_indices,
    inf_norm,
    influence_matrix_oracle,
    ltg_applicable,
    marginal_vector,
)
from specind.instance import CapExceeded, InfeasibleError, gibbs_weight, restrict

from strategies import colorings, instances


def brute(inst):
    states = [s for s in itertools.product(*inst.lists) if gibbs_weight(inst, s) > 0]
    w = np.array([gibbs_weight(inst, s) for s in states])
    return np.array(states), w


@given(instances())
def test_enumeration_matches_brute_force(inst):
    d = enumerate_gibbs(inst)
    X, w = brute(inst)
    assert np.array_equal(d.support, X)
    assert d.Z == pytest.approx(w.sum(), rel=1e-12)
    assert np.allclose(d.probs, w / w.sum(), atol=1e-15)
    assert np.array_equal(d.index_of(X), np.arange(len(X)))


@pytest.mark.parametrize("n", [1, 2, 3, 5])
@pytest.mark.parametrize("q", [2, 3, 4])
def test_chromatic_polynomials(n, q):
    assert enumerate_gibbs(product_spins(parse_graph_name(f"path{n}"), q)).Z == q ** n
    from specind import coloring

    d = enumerate_gibbs(coloring(parse_graph_name(f"path{n}"), q))
    assert d.Z == q * (q - 1) ** (n - 1)
    if n >= 3:
        Z = (q - 1) ** n + (-1) ** n * (q - 1)
        if Z == 0:
            with pytest.raises(InfeasibleError):
                enumerate_gibbs(coloring(parse_graph_name(f"cycle{n}"), q))
        else:
            assert enumerate_gibbs(coloring(parse_graph_name(f"cycle{n}"), q)).Z == Z


@pytest.mark.parametrize("beta", [-1.0, 0.3, 2.0])
def test_ising_transfer_matrix(beta):
    n = 6
    d = enumerate_gibbs(ising(parse_graph_name(f"path{n}"), beta, field=1.7))
    A = np.array([[math.exp(beta), 1.0], [1.0, math.exp(beta)]])
    h = np.diag([1.0, 1.7])
    Z = np.ones(2) @ h @ np.linalg.matrix_power(A @ h, n - 1) @ np.ones(2)
    assert d.Z == pytest.approx(Z, rel=1e-12)


def test_caps():
    with pytest.raises(CapExceeded):
        enumerate_gibbs(product_spins(parse_graph_name("empty12"), 3), cap=1000)


@given(instances())
def test_influence_oracle(inst):
    d = enumerate_gibbs(inst)
    assert np.abs(influence_matrix(d) - influence_matrix_oracle(d)).max() <= 1e-12


@given(instances())
def test_lambda_below_row_norm(inst):
    d = enumerate_gibbs(inst)
    I = influence_matrix(d)
    assert lambda_max(I, marginal_vector(d)) <= inf_norm(I) + 1e-9


def test_product_influence():
    d = enumerate_gibbs(product_spins(parse_graph_name("empty3"), 3))
    I = influence_matrix(d)
    same = d.element_vertex[:, None] == d.element_vertex[None, :]
    assert np.allclose(I[~same], 0)
    assert lambda_max(I, marginal_vector(d)) == pytest.approx(1.0)
    si = spectral_independence(d)
    assert np.allclose(si.eta, 0, atol=1e-12)
    assert spectral_independence(d, exclude_same_site=True).eta == pytest.approx([0, 0])


@given(instances(max_n=3))
def test_eta_by_brute_force_pinnings(inst):
    d = enumerate_gibbs(inst)
    si = spectral_independence(d)
    for k in range(max(d.n - 1, 1)):
        best = -math.inf
        for vs in itertools.combinations(range(d.n), k):
            for row in {tuple(r) for r in d.support[:, list(vs)]}:
                dA = condition(d, dict(zip(vs, row)))
                best = max(best, lambda_max(influence_matrix(dA), marginal_vector(dA)) - 1)
        assert si.eta[k] == pytest.approx(best, abs=1e-9)


@given(colorings(max_n=4, full_lists=True))
@settings(max_examples=15)
def test_eta_symmetric_pinnings_match_all_pinnings(inst):
    d = enumerate_gibbs(inst)
    if d.N > 3000:
        return
    si = spectral_independence(d)
    for k in range(d.n - 1):
        best = -math.inf
        for vs in itertools.combinations(range(d.n), k):
            for row in {tuple(r) for r in d.support[:, list(vs)]}:
                dA = condition(d, dict(zip(vs, row)))
                best = max(best, lambda_max(influence_matrix(dA), marginal_vector(dA)) - 1)
        assert si.eta[k] == pytest.approx(best, abs=1e-9)


@given(instances(), st.data())
def test_condition_equals_restrict(inst, data):
    d = enumerate_gibbs(inst)
    v = data.draw(st.integers(0, d.n - 1))
    c = int(data.draw(st.sampled_from(list(d.support[:, v]))))
    nu = condition(d, {v: c})
    ref = enumerate_gibbs(restrict(inst, {v: c}))
    assert np.array_equal(nu.support, ref.support)
    assert np.allclose(nu.probs, ref.probs)
    idx = embed_indices(nu, d)
    assert (d.support[idx, v] == c).all()
    assert np.allclose(d.probs[idx] / d.probs[idx].sum(), nu.probs)


def test_condition_zero_probability():
    from specind import coloring

    d = enumerate_gibbs(coloring(parse_graph_name("edge"), 2, [[0], [0, 1]]))
    with pytest.raises(InfeasibleError):
        condition(d, {1: 0})


def glauber_oracle(d):
    P = np.zeros((d.N, d.N))
    for x, sigma in enumerate(d.support):
        for v in range(d.n):
            law = local_law(d.instance, sigma, v)
            for c in np.flatnonzero(law):
                tau = sigma.copy()
                tau[v] = c
                P[x, d.index_of(tau[None])[0]] += law[c] / d.n
    return P


@given(instances())
def test_glauber_kernel(inst):
    d = enumerate_gibbs(inst)
    T = glauber_kernel(d)
    T.check()
    assert np.abs(T.P.toarray() - glauber_oracle(d)).max() <= 1e-14


@given(instances())
def test_down_up_is_glauber(inst):
    # each vertex carries exactly one element, so both chains resample one site
    d = enumerate_gibbs(inst)
    DU = down_up_kernel(d)
    DU.check()
    assert abs(DU.P - glauber_kernel(d).P).max() <= 1e-14


def flip_oracle(d, params):
    inst = d.instance
    P = np.zeros((d.N, d.N))
    for x, sigma in enumerate(d.support):
        targets, acc, _ = _flip_table(inst, sigma, params)
        for v, L in enumerate(inst.lists):
            for k in range(len(L)):
                y = d.index_of(targets[v, k][None])[0]
                p = acc[v, k] / (d.n * len(L))
                P[x, y] += p
                P[x, x] += 1 / (d.n * len(L)) - p
    return P


@given(colorings(max_n=4), st.sampled_from(["vigoda", "cdmpp"]))
def test_flip_kernel_matches_python_kempe(inst, preset):
    d = enumerate_gibbs(inst)
    params = FlipParameters.from_name(preset)
    T = flip_kernel(d, params)
    assert np.abs(T.P.toarray() - flip_oracle(d, params)).max() <= 1e-14
    T.check()
    assert np.allclose(d.probs, 1 / d.N)


def test_flip_presets():
    v, c = FlipParameters.vigoda(), FlipParameters.cdmpp()
    assert v.p[1] == pytest.approx(13 / 42) and v.J == 6
    assert c.p[1] == pytest.approx(0.296706)
    assert v.accept(2) == pytest.approx(13 / 84) and v.accept(7) == 0
    with pytest.raises(ValueError):
        FlipParameters((1.2,))


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_product_gap_and_ltg(n):
    d = enumerate_gibbs(product_spins(parse_graph_name(f"empty{n}"), 2))
    gap = spectral_gap(glauber_kernel(d)).gap
    assert gap == pytest.approx(1 / n)
    if n > 1:
        eta = spectral_independence(d).eta
        assert local_to_global_bound(eta, n) == pytest.approx(1 / n)


def test_ltg_formula():
    assert local_to_global_bound([0.5, 0.25], 3) == pytest.approx((1 - 0.25) * (1 - 0.25) / 3)
    assert local_to_global_bound([2.5, 0.0], 3) <= 0
    assert not ltg_applicable([2.5, 0.0], 3)
    with pytest.raises(ValueError):
        local_to_global_bound([0.1], 3)


def test_tmix_against_matrix_powers():
    d = enumerate_gibbs(ising(parse_graph_name("path3"), 0.8))
    T = glauber_kernel(d)
    t, worst = mixing_time_exact(T)
    P = T.P.toarray()
    tvs = [max(tv_distance(row, d.probs) for row in np.linalg.matrix_power(P, s))
           for s in range(t + 1)]
    assert tvs[t] <= 0.25 < tvs[t - 1]
    assert tv_distance(np.linalg.matrix_power(P, t)[worst], d.probs) == pytest.approx(tvs[t])


@pytest.mark.parametrize("beta", [-1.0, 0.5, 1.5])
def test_dobrushin_edge(beta):
    _, gamma = dobrushin_matrix(enumerate_gibbs(ising(parse_graph_name("edge"), beta)))
    assert gamma == pytest.approx(math.tanh(abs(beta) / 2))


def test_dobrushin_product_is_zero():
    _, gamma = dobrushin_matrix(enumerate_gibbs(product_spins(parse_graph_name("path3"))))
    assert gamma == 0


@given(instances(max_n=3), st.integers(0, 2**32 - 1))
def test_functional_report_invariants(inst, seed):
    d = enumerate_gibbs(inst)
    T = glauber_kernel(d)
    if d.N < 2 or not T.is_irreducible():
        return
    rng = np.random.default_rng(seed)
    f = rng.random(d.N) + 0.1
    r = functional_report(T, f, rng, pool=8)
    assert min(r.dirichlet, r.variance, r.entropy, r.v) >= -1e-12
    assert 0 < r.spectral_gap <= 2
    # the pool contains near-constant perturbations of the eigenvector
    assert r.mlsi_upper <= 2 * r.spectral_gap * (1 + 1e-3) + 1e-9
    assert not r.certified["mlsi_upper"]
