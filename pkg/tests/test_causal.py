import numpy as np
import pytest

from envsep.causal import (CausalGraph, CausalVarParams, causal_filter, causal_graph,
                           dot_export, fit_causalvar, select_orders)
from envsep.garch import GarchParams, fit_garch11, garch_filter, gaussian_loglik
from envsep.synth import gen_causalvar


def params_with(cross=None, N=3, q=1):
    alpha = np.zeros((N, N, q))
    alpha[np.arange(N), np.arange(N), 0] = 0.1
    for (i, j), v in (cross or {}).items():
        alpha[i, j, 0] = v
    return CausalVarParams(omega=np.full(N, 0.1), alpha=alpha, beta=np.full((N, 1), 0.8))


def test_reduces_to_univariate_filter(rng):
    E = rng.standard_normal((500, 3))
    p = CausalVarParams(np.array([0.1, 0.2, 0.3]),
                        np.diag([0.1, 0.2, 0.05])[:, :, None], np.array([[0.8], [0.5], [0.9]]))
    out = causal_filter(E, p)
    for i in range(3):
        ref = garch_filter(E[:, i], GarchParams(p.omega[i], p.alpha[i, i, 0], p.beta[i, 0]))
        assert np.abs(out[:, i] - ref).max() == 0.0


def test_spike_propagates_one_step():
    E = np.zeros((20, 2)) + 0.1
    E[10, 1] = 5.0
    base = CausalVarParams(np.array([0.1, 0.1]), np.zeros((2, 2, 1)), np.zeros((2, 1)))
    a = np.zeros((2, 2, 1))
    a[0, 1, 0] = 0.3
    p = CausalVarParams(np.array([0.1, 0.1]), a, np.zeros((2, 1)))
    jump = causal_filter(E, p)[11, 0] - causal_filter(E, base)[11, 0]
    assert jump == pytest.approx(0.3 * (25.0 - 0.01) + 0.3 * 0.01)


def test_generator_identity():
    p = params_with({(1, 0): 0.3})
    E, s2 = gen_causalvar(p, 3000, seed=1)
    out = causal_filter(E, p, init=s2[:1])
    assert np.abs(out - s2).max() <= 1e-12 * s2.max()


def test_params_validation():
    with pytest.raises(ValueError):
        CausalVarParams(np.ones(2), np.zeros((2, 3, 1)), np.zeros((2, 1)))
    with pytest.raises(ValueError):
        CausalVarParams(np.ones(1), np.full((1, 1, 1), 0.5), np.full((1, 1), 0.6))


@pytest.fixture(scope="module")
def edge_fit():
    E, _ = gen_causalvar(params_with({(1, 0): 0.3}), 8000, seed=3)
    return E, fit_causalvar(E)


def test_recovers_single_edge(edge_fit):
    _, fit = edge_fit
    off = fit.support[:, :, 0] & ~np.eye(3, dtype=bool)
    assert off[1, 0] and off.sum() == 1


def test_exact_zeros(edge_fit):
    _, fit = edge_fit
    a = fit.params.alpha[:, :, 0]
    mask = ~np.eye(3, dtype=bool) & ~fit.support[:, :, 0]
    assert np.all(a[mask] == 0.0)


def test_nesting(edge_fit):
    E, fit = edge_fit
    uni = sum(fit_garch11(E[:, i]).loglik for i in range(3))
    full = gaussian_loglik(E, causal_filter(E, fit.stage1))
    assert full >= uni - 1e-6
    assert fit.penalized_obj <= -full + fit.lam * 3 * 2 + 1e-6


def test_null_model_has_no_edges():
    E, _ = gen_causalvar(params_with(), 8000, seed=4)
    fit = fit_causalvar(E)
    assert not np.any(fit.support[:, :, 0] & ~np.eye(3, dtype=bool))


def test_select_orders():
    E, _ = gen_causalvar(params_with(N=2), 4000, seed=5)
    assert select_orders(E, [(1, 1)]) == ((1, 1), {})
    best, fits = select_orders(E, [(1, 1), (2, 3)])
    assert best == (1, 1) and set(fits) == {(1, 1), (2, 3)}


def test_graph_examples():
    def p(cross):
        return params_with(cross, N=3)

    assert causal_graph(p({})).edges == []
    g = causal_graph(p({(0, 1): 0.3}))
    assert len(g.edges) == 1
    e = g.edges[0]
    assert (e.source, e.target, e.sign, e.bidirected) == (1, 0, 1, False)
    g = causal_graph(p({(0, 1): 0.2, (1, 0): 0.25}))
    assert len(g.edges) == 1 and g.edges[0].bidirected and g.edges[0].sign == 1


def test_graph_deterministic():
    p = params_with({(0, 1): 0.2, (2, 0): 0.05})
    assert causal_graph(p) == causal_graph(p)


def test_dot_export(tmp_path):
    pydot = pytest.importorskip("pydot")
    empty = CausalGraph(nodes=["a", "b"])
    dot_export(empty, tmp_path / "e.dot")
    g = pydot.graph_from_dot_file(str(tmp_path / "e.dot"))[0]
    assert len(g.get_nodes()) == 2 and not g.get_edges()

    a = np.zeros((2, 2, 1))
    a[0, 1, 0] = -0.2
    graph = causal_graph(CausalVarParams(np.ones(2), a, np.zeros((2, 1))))
    dot_export(graph, tmp_path / "n.dot")
    text = (tmp_path / "n.dot").read_text()
    assert 'color="red"' in text
    parsed = pydot.graph_from_dot_data(text)[0]
    assert len(parsed.get_edges()) == 1
