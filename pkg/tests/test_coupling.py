import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from specind import (
    FlipParameters,
    NonConvergentCoupling,
    RngStream,
    amortized_constant_exact,
    amortized_constant_mc,
    coloring,
    enumerate_gibbs,
    glauber_kernel,
    greedy_flip_coupling,
    greedy_glauber_coupling,
    independent_coupling,
    make_coupling,
    parse_graph_name,
    product_spins,
    ricci_curvature_exact,
    variable_length_stats,
)
from specind.coupling import (
    PairOrbits,
    adjacent_pairs,
    color_symmetric,
    coupling_curvature,
    has_interior_point,
    is_hamming_geodesic,
    m_step_contraction_check,
    m_steps,
    maximal_coupling,
    pair_orbits,
    quantile_coupling,
    sample_maximal,
)
from specind.exact import flip_kernel
from specind.instance import CapExceeded

from strategies import colorings, instances

probs = st.integers(2, 6).flatmap(lambda k: st.tuples(
    st.lists(st.floats(0, 1), min_size=k, max_size=k),
    st.lists(st.floats(0, 1), min_size=k, max_size=k))).filter(
    lambda ab: sum(ab[0]) > 1e-3 and sum(ab[1]) > 1e-3)


def _norm(x):
    x = np.asarray(x)
    return x / x.sum()


@given(probs, st.randoms())
def test_maximal_coupling(ab, r):
    a, b = _norm(ab[0]), _norm(ab[1])
    for J in (maximal_coupling(a, b), quantile_coupling(a, b)):
        assert np.allclose(J.sum(axis=1), a) and np.allclose(J.sum(axis=0), b)
        assert (J >= -1e-15).all()
    # optimal: P(X != Y) = TV(a, b)
    J = maximal_coupling(a, b)
    assert 1 - np.trace(J) == pytest.approx(0.5 * np.abs(a - b).sum(), abs=1e-12)
    assert np.allclose(np.diag(J), np.minimum(a, b))
    perm = np.array(r.sample(range(a.size), a.size))
    J = maximal_coupling(a, b)
    assert np.allclose(maximal_coupling(a[perm], b[perm]), J[np.ix_(perm, perm)])


def test_sample_maximal_frequencies():
    a = np.array([0.5, 0.3, 0.2, 0.0])
    b = np.array([0.1, 0.1, 0.4, 0.4])
    J = maximal_coupling(a, b)
    rng = RngStream(0).generator()
    B = 400000
    x, y = sample_maximal(np.tile(a, (B, 1)), np.tile(b, (B, 1)), rng)
    counts = np.bincount(x * 4 + y, minlength=16)
    m = J.ravel() > 0
    assert counts[~m].sum() == 0
    assert stats.chisquare(counts[m], J.ravel()[m] * B).pvalue > 1e-4


@given(instances(max_n=3))
def test_glauber_joint_is_a_sticky_coupling(inst):
    d = enumerate_gibbs(inst)
    for spec in (greedy_glauber_coupling(inst), independent_coupling(inst)):
        J = spec.joint(d, symmetry=False)
        J.check()


@given(colorings(max_n=3))
def test_flip_joint_is_a_sticky_coupling(inst):
    d = enumerate_gibbs(inst)
    J = greedy_flip_coupling(inst, FlipParameters.vigoda()).joint(d, symmetry=False)
    J.check()


@given(colorings(max_n=4, full_lists=True), st.sampled_from(["glauber", "flip"]))
def test_orbit_joint_matches_full(inst, chain):
    d = enumerate_gibbs(inst)
    if d.N > 400:
        return
    assert color_symmetric(d)
    spec = make_coupling(inst, chain)
    full = spec.joint(d, symmetry=False)
    orb = spec.joint(d)
    assert orb.orbits is not None and orb.M <= full.M
    assert orb.row_sum_error() <= 1e-12 and orb.is_sticky()
    assert coupling_curvature(orb) == pytest.approx(coupling_curvature(full), abs=1e-12)
    try:
        rf = amortized_constant_exact(full)
    except NonConvergentCoupling:
        with pytest.raises(NonConvergentCoupling):
            amortized_constant_exact(orb)
        return
    ro = amortized_constant_exact(orb)
    assert ro.C == pytest.approx(rf.C, rel=1e-9)
    x, y = np.divmod(np.arange(d.N * d.N), d.N)
    assert np.allclose(ro.g[orb.pair_index(x, y)], rf.g, atol=1e-8)


def test_pair_orbit_count_by_burnside():
    inst = coloring(parse_graph_name("path3"), 3)
    d = enumerate_gibbs(inst)
    S = d.support
    seen = set()
    for x, y in itertools.product(range(d.N), repeat=2):
        seen.add(min(tuple(np.r_[np.array(p)[S[x]], np.array(p)[S[y]]])
                     for p in itertools.permutations(range(3))))
    assert PairOrbits(d).M == len(seen)


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_product_constant_is_n(n):
    inst = product_spins(parse_graph_name(f"empty{n}"), 2)
    d = enumerate_gibbs(inst)
    spec = greedy_glauber_coupling(inst)
    J = spec.joint(d)
    rep = amortized_constant_exact(J)
    assert rep.C == pytest.approx(n, rel=1e-10)
    assert coupling_curvature(J) == pytest.approx(1 / n)
    x, y = rep.worst_pair
    est = amortized_constant_mc(spec, [(d.support[x], d.support[y])], 10_000, 20_000,
                                RngStream(n).generator())
    assert abs(est.C - n) <= 4 * est.stderr


@given(instances(max_n=3))
def test_constant_below_inverse_curvature(inst):
    d = enumerate_gibbs(inst)
    J = greedy_glauber_coupling(inst).joint(d)
    alpha = coupling_curvature(J)
    if alpha <= 1e-12:
        return
    assert amortized_constant_exact(J).C <= 1 / alpha + 1e-9


def test_frozen_triangle_is_not_convergent():
    inst = coloring(parse_graph_name("triangle"), 3)
    d = enumerate_gibbs(inst)
    with pytest.raises(NonConvergentCoupling):
        amortized_constant_exact(greedy_glauber_coupling(inst).joint(d))


def test_joint_cap():
    inst = product_spins(parse_graph_name("empty10"), 2)
    with pytest.raises(CapExceeded):
        greedy_glauber_coupling(inst).joint(enumerate_gibbs(inst), cap=500)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_product_curvature(n):
    d = enumerate_gibbs(product_spins(parse_graph_name(f"empty{n}"), 3))
    for pairs in ("adjacent", "all", "minimal"):
        assert ricci_curvature_exact(glauber_kernel(d), pairs=pairs).alpha == pytest.approx(1 / n)


@given(instances(max_n=3))
def test_minimal_pairs_give_the_all_pairs_minimum(inst):
    d = enumerate_gibbs(inst)
    T = glauber_kernel(d)
    if d.N < 2 or d.N > 60:
        return
    a = ricci_curvature_exact(T, pairs="all", symmetry=False).alpha
    m = ricci_curvature_exact(T, pairs="minimal", symmetry=False).alpha
    s = ricci_curvature_exact(T, pairs="minimal").alpha
    assert m == pytest.approx(a, abs=1e-12)
    assert s == pytest.approx(a, abs=1e-12)


@given(colorings(max_n=4, full_lists=True))
def test_adjacent_curvature_under_symmetry(inst):
    d = enumerate_gibbs(inst)
    if d.N > 300:
        return
    T = flip_kernel(d, FlipParameters.vigoda())
    a = ricci_curvature_exact(T, pairs="adjacent", symmetry=False)
    b = ricci_curvature_exact(T, pairs="adjacent")
    assert a.alpha == pytest.approx(b.alpha, abs=1e-12) or (math.isnan(a.alpha) and
                                                             math.isnan(b.alpha))


@given(instances(max_n=3))
def test_given_coupling_lower_bounds_optimal(inst):
    d = enumerate_gibbs(inst)
    if d.N < 2:
        return
    J = greedy_glauber_coupling(inst).joint(d)
    T = J.base
    opt = ricci_curvature_exact(T, "optimal", "all")
    given_ = ricci_curvature_exact(T, "given_coupling", "all", joint=J)
    assert given_.alpha <= opt.alpha + 1e-12


def test_interior_points():
    d = enumerate_gibbs(product_spins(parse_graph_name("empty2"), 2))
    E = np.array([[0, 3], [0, 1]])
    assert has_interior_point(d, E).tolist() == [True, False]
    assert is_hamming_geodesic(d)


def test_pair_orbits_representatives():
    d = enumerate_gibbs(coloring(parse_graph_name("path3"), 4))
    E = adjacent_pairs(d)
    first, inv = pair_orbits(d, E)
    assert len(first) == inv.max() + 1 and (inv[first] == np.arange(len(first))).all()
    assert len(first) < len(E)


def test_variable_length_on_product():
    n = 3
    inst = product_spins(parse_graph_name(f"empty{n}"), 2)
    spec = greedy_glauber_coupling(inst)
    vl = variable_length_stats(spec, [([0, 0, 0], [1, 0, 0])], 20000, RngStream(0).generator())
    # the differing site is resampled identically at the first time it is chosen
    assert vl.alpha == 1.0 and vl.W == 1 and vl.truncated == 0
    assert abs(vl.beta - n) < 0.1
    assert vl.M == m_steps(vl.alpha, vl.W, vl.beta)
    cert = m_step_contraction_check(spec, vl.M, [([0, 0, 0], [1, 0, 0])], vl.alpha, 5000,
                                    RngStream(1).generator())
    assert cert.passed


def test_m_steps():
    assert m_steps(0.5, 13, 10) == 520
    assert m_steps(1.0, 1, 3) == 6
    assert m_steps(0.0, 13, 10) is None
    assert m_steps(-0.1, 1, 1) is None


def test_identity_coupling_never_contracts():
    inst = product_spins(parse_graph_name("empty2"), 2)
    from specind.coupling import CouplingSpec

    frozen = CouplingSpec("identity", inst, lambda X, Y, rng: (X, Y), glauber_kernel, None)
    vl = variable_length_stats(frozen, [([0, 0], [1, 0])], 10, RngStream(0).generator(),
                               max_steps=50)
    assert vl.truncated == 10 and vl.alpha == 0 and vl.M is None
