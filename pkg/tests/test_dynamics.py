import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from specind import (
    FlipParameters,
    RngStream,
    coloring,
    down_up_kernel,
    down_up_step,
    enumerate_gibbs,
    flip_kernel,
    flip_step,
    glauber_kernel,
    glauber_step,
    ising,
    kempe_component,
    parse_graph_name,
    run_chain,
)
from specind.dynamics import DownUpSampler, FlipSampler, flip_apply, glauber_step_batch
from specind.instance import gibbs_weight

from strategies import colorings


def chi2_pvalue(samples, row):
    counts = np.bincount(samples, minlength=row.size)
    m = row > 0
    assert counts[~m].sum() == 0
    return stats.chisquare(counts[m], row[m] * counts.sum()).pvalue


def test_rng_streams():
    a = RngStream(5).child(1, 2).generator().random(4)
    b = RngStream(5).child(1, 2).generator().random(4)
    c = RngStream(5).child(2, 1).generator().random(4)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)


@pytest.fixture(scope="module")
def small_ising():
    d = enumerate_gibbs(ising(parse_graph_name("path3"), 0.7, field=1.3))
    return d, glauber_kernel(d)


def test_glauber_step_frequencies(small_ising):
    d, T = small_ising
    rng = RngStream(1).generator()
    x = 3
    out = [d.index_of(glauber_step(d.instance, d.support[x], rng)[None])[0]
           for _ in range(20000)]
    assert chi2_pvalue(np.array(out), T.P[x].toarray().ravel()) > 1e-4


def test_glauber_batch_frequencies(small_ising):
    d, T = small_ising
    rng = RngStream(2).generator()
    for x in range(d.N):
        X = np.repeat(d.support[x][None], 40000, axis=0)
        nxt = d.index_of(glauber_step_batch(d.instance, X, rng))
        assert chi2_pvalue(nxt, T.P[x].toarray().ravel()) > 1e-4


def test_glauber_rejects_infeasible():
    inst = coloring(parse_graph_name("edge"), 3)
    with pytest.raises(ValueError):
        glauber_step(inst, [1, 1], RngStream(0).generator())


@given(colorings(max_n=5), st.data())
def test_kempe_component_structure(inst, data):
    d = enumerate_gibbs(inst)
    sigma = d.support[data.draw(st.integers(0, d.N - 1))]
    u = data.draw(st.integers(0, d.n - 1))
    c = data.draw(st.sampled_from(inst.lists[u]))
    S = kempe_component(inst, sigma, u, c)
    a = sigma[u]
    assert u in S
    assert {int(sigma[w]) for w in S} <= {int(a), int(c)}
    g = inst.graph
    for w in S:
        other = c if sigma[w] == a else a
        for x in g.adjacency[w]:
            if sigma[x] == other and c != a:
                assert x in S
    out = flip_apply(inst, sigma, S, u, c)
    if out is not None:
        assert gibbs_weight(inst, out) > 0
        assert out[u] == c
    else:
        assert any((c if sigma[w] == a else a) not in inst.lists[w] for w in S)


def test_flip_apply_checks_component():
    inst = coloring(parse_graph_name("path3"), 3)
    with pytest.raises(ValueError):
        flip_apply(inst, [0, 1, 0], {0}, 0, 1)


def test_flip_step_and_sampler_frequencies():
    inst = coloring(parse_graph_name("cycle4"), 4)
    d = enumerate_gibbs(inst)
    params = FlipParameters.vigoda()
    T = flip_kernel(d, params)
    x = int(np.argmax(np.diff(T.P.indptr)))
    row = T.P[x].toarray().ravel()
    rng = RngStream(3).generator()
    out = [d.index_of(flip_step(inst, d.support[x], params, rng)[0][None])[0]
           for _ in range(20000)]
    assert chi2_pvalue(np.array(out), row) > 1e-4
    sampler = FlipSampler(inst, params)
    X, sizes = sampler.step(np.repeat(d.support[x][None], 100000, axis=0), rng)
    assert chi2_pvalue(d.index_of(X), row) > 1e-4
    assert set(np.unique(sizes)) <= set(range(params.J + 1))


def test_flip_stays_proper_over_a_run():
    inst = coloring(parse_graph_name("grid3x3"), 6)
    params = FlipParameters.cdmpp()
    trace = run_chain(lambda s, r: flip_step(inst, s, params, r), [0, 1, 0, 1, 0, 1, 0, 1, 0],
                      500, stride=50, rng=RngStream(4).generator())
    assert trace.times == list(range(0, 501, 50))
    assert all(gibbs_weight(inst, s) > 0 for s in trace.states)
    assert sum(trace.move_stats.values()) > 0


def test_down_up_frequencies(small_ising):
    d, _ = small_ising
    T = down_up_kernel(d)
    rng = RngStream(5).generator()
    x = 2
    S = frozenset(np.flatnonzero(d.onehot[x]).tolist())
    out = []
    for _ in range(10000):
        S2 = down_up_step(d, S, rng)
        out.append(d.index_of(np.array(d.universe.decode(S2))[None])[0])
    assert chi2_pvalue(np.array(out), T.P[x].toarray().ravel()) > 1e-4
    nxt = DownUpSampler(d).step(np.full(100000, x), rng)
    assert chi2_pvalue(nxt, T.P[x].toarray().ravel()) > 1e-4


def test_run_chain_trace(tmp_path):
    inst = ising(parse_graph_name("path3"), 0.2)
    tr = run_chain(lambda s, r: glauber_step(inst, s, r), [0, 0, 0], 10, stride=3)
    assert tr.times == [0, 3, 6, 9]
    tr.write_csv(tmp_path / "t.csv")
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "t,sigma"
    with pytest.raises(ValueError):
        run_chain(lambda s, r: s, [0, 0, 0], 5, stride=0)
