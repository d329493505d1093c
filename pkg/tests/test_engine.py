import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dagt.checks import momentum_reduction_mismatch, tracking_identity_violation
from dagt.engine import (TRACE_COLUMNS, DivergenceError, SolverConfig, Trace, TraceRow, Variant, init_network,
                         mix, read_trace_csv, run, step, with_variant)
from dagt.graph import make_graph, metropolis_weights


def _stack(vals):
    return np.array(vals)


def test_variant_aliases():
    assert Variant.parse("hb") is Variant.HB
    assert Variant.parse("dagt_nes") is Variant.NES
    with pytest.raises(ValueError):
        Variant.parse("adam")
    assert with_variant(SolverConfig(), "NES").variant is Variant.NES


@pytest.mark.parametrize("kw", [dict(alpha=0), dict(beta=-0.1), dict(gamma=-1), dict(epsilon=0),
                                dict(k_max=0)])
def test_solver_config_validation(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_momentum_follows_variant():
    c = SolverConfig(alpha=0.1, beta=0.3, gamma=0.2)
    assert [with_variant(c, v).momentum for v in Variant] == [0.0, 0.3, 0.2]


def test_initialization(spec, x0, xm):
    net = init_network(spec, x0, xm)
    for ag, xi, xp in zip(net.agents, x0, xm):
        assert np.array_equal(ag.u, xi) and np.array_equal(ag.y, xi) and np.array_equal(ag.x_prev, xp)
        assert np.array_equal(ag.s, 2 * (ag.u - xi))


def _vector_step(spec, A, x, xp, y, u, s, alpha, beta, gamma, variant):
    """Stacked reference update written directly in matrix form."""
    W = A.entries
    pts = y if variant is Variant.NES else x
    grads = np.array([a.grad1(p, ui) + a.jac_phi(p) @ si for a, p, ui, si in zip(spec.agents, pts, u, s)])
    if variant is Variant.NES:
        xn = y - alpha * grads
        new = xn + gamma * (xn - x)
    else:
        xn = x - alpha * grads + beta * (x - xp)
        new = xn
    un = W @ u + np.array([a.phi(q) - a.phi(p) for a, p, q in zip(spec.agents, pts, new)])
    sn = W @ s + np.array([a.grad2(q, uq) - a.grad2(p, up)
                           for a, p, q, up, uq in zip(spec.agents, pts, new, u, un)])
    return xn, new, un, sn


@pytest.mark.parametrize("variant", list(Variant))
def test_step_matches_matrix_form(spec, A, x0, xm, variant):
    cfg = SolverConfig(variant, alpha=0.005, beta=0.28, gamma=0.25)
    net = init_network(spec, x0, xm)
    for _ in range(5):
        xn, yn, un, sn = _vector_step(spec, A, _stack(net.x), _stack(net.x_prev), _stack(net.y),
                                      _stack(net.u), _stack(net.s), 0.005, cfg.momentum, 0.25, variant)
        net = step(net, spec, A, cfg)
        for got, want in ((net.x, xn), (net.y, yn), (net.u, un), (net.s, sn)):
            assert np.allclose(_stack(got), want, rtol=0, atol=1e-12)


def test_exchange_reads_only_in_neighbors(spec, A, ring5, x0, xm):
    seen = []
    net = init_network(spec, x0, xm)
    for variant in Variant:
        step(net, spec, A, SolverConfig(variant, alpha=0.005, beta=0.28, gamma=0.25),
             observer=lambda i, j, ch: seen.append((i, j, ch)))
    assert seen
    for i, j, ch in seen:
        assert ch in ("u", "s")
        assert j == i or j in ring5.neighbors(i)
    assert {(i, j) for i, j, _ in seen} == {(i, j) for i in range(5) for j in A.in_neighbors(i)}


def test_mix_preserves_average(A, rng):
    vals = [rng.normal(size=3) for _ in range(5)]
    assert np.allclose(np.mean(mix(A, vals), axis=0), np.mean(vals, axis=0), atol=1e-14)


@pytest.mark.parametrize("variant", list(Variant))
def test_tracking_identities_on_nonlinear_aggregate(tanh_game, variant):
    A = metropolis_weights(make_graph("random", tanh_game.n_agents, seed=2))
    x0 = [np.full(n, 0.5) for n in tanh_game.agent_dims]
    cfg = SolverConfig(variant, alpha=0.05, beta=0.3, gamma=0.3)
    assert tracking_identity_violation(tanh_game, A, cfg, x0, steps=300) <= 1e-12


def test_zero_momentum_is_bitwise_dagt(spec, A, x0, xm):
    assert momentum_reduction_mismatch(spec, A, 0.005, x0, xm, steps=100) == 0


@settings(max_examples=25, deadline=None)
@given(alpha=st.floats(1e-4, 0.02), seed=st.integers(0, 1000))
def test_zero_momentum_reduction_property(tanh_game, alpha, seed):
    A = metropolis_weights(make_graph("random", tanh_game.n_agents, seed=seed))
    x0 = [np.linspace(-1, 1, n) for n in tanh_game.agent_dims]
    assert momentum_reduction_mismatch(tanh_game, A, alpha, x0, steps=20) == 0


def test_run_stops_on_gradient_norm(spec, ring5, x0, xm, optimum):
    tr = run(spec, ring5, SolverConfig(Variant.HB, alpha=0.005, beta=0.28, epsilon=1e-6), x0, xm, optimum)
    assert tr.stop_reason == "epsilon"
    g = tr.column("grad_norm")
    assert g[-1] < 1e-6 and np.all(g[:-1] >= 1e-6)
    assert [r.k for r in tr.rows] == list(range(tr.iterations + 1))


def test_run_stops_at_kmax(spec, ring5, x0):
    tr = run(spec, ring5, SolverConfig(Variant.DAGT, alpha=0.005, k_max=7), x0)
    assert tr.stop_reason == "k_max" and tr.iterations == 7
    assert all(math.isnan(v) for v in tr.column("state_err"))


def test_divergence_carries_partial_trace(spec, ring5, x0, xm):
    with pytest.raises(DivergenceError) as exc:
        run(spec, ring5, SolverConfig(Variant.HB, alpha=0.2, beta=0.5), x0, xm)
    tr = exc.value.trace
    assert tr.stop_reason == "diverged" and len(tr) == exc.value.iteration


def test_graph_size_mismatch(spec, x0):
    with pytest.raises(ValueError):
        run(spec, make_graph("ring", 4), SolverConfig(), x0)


def test_nesterov_ignores_previous_point_except_in_trace(spec, ring5, x0, xm, optimum):
    cfg = SolverConfig(Variant.NES, alpha=0.005, gamma=0.25, k_max=30)
    a = run(spec, ring5, cfg, x0, xm, optimum)
    b = run(spec, ring5, cfg, x0, None, optimum)
    assert a.column("state_err").tolist() == b.column("state_err").tolist()
    assert a.rows[0].state_diff > 0 and b.rows[0].state_diff == 0


def test_trace_csv_round_trip(tmp_path, spec, ring5, x0, xm, optimum):
    cfg = SolverConfig(Variant.HB, alpha=0.005, beta=0.28, k_max=40)
    tr = run(spec, ring5, cfg, x0, xm, optimum, record_agents=True)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    back = read_trace_csv(p)
    assert back.rows == tr.rows
    assert p.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
    tr.positions_to_csv(tmp_path / "a.csv")
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == "k,agent,x0,x1,u0,u1" and len(lines) == 1 + 5 * len(tr)


def test_missing_optimum_written_as_empty_cells(tmp_path, spec, ring5, x0):
    tr = run(spec, ring5, SolverConfig(k_max=3), x0)
    tr.to_csv(tmp_path / "t.csv")
    row = (tmp_path / "t.csv").read_text().splitlines()[1].split(",")
    assert row[1] == "" and row[5] == ""
    with pytest.raises(ValueError):
        tr.positions_to_csv(tmp_path / "a.csv")


def test_iterations_to_requires_staying_below():
    tr = Trace(SolverConfig())
    for k, v in enumerate([5, 0.5, 2, 0.5, 0.1]):
        tr.rows.append(TraceRow(k, v, 0, 0, 0, 0, 0))
    assert tr.iterations_to("state_err", 1.0) == 3
    assert tr.iterations_to("state_err", 10.0) == 0
    assert tr.iterations_to("state_err", 0.05) is None


def test_runs_are_bit_reproducible(tmp_path, spec, ring5, x0, xm, optimum):
    cfg = SolverConfig(Variant.NES, alpha=0.005, gamma=0.25)
    for name in ("a.csv", "b.csv"):
        run(spec, ring5, cfg, x0, xm, optimum).to_csv(tmp_path / name)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
