import numpy as np
import pytest

from dagt.engine import SolverConfig, Variant
from dagt.oracle import (displacement, fixed_state, placement_closed_form, solve, solve_centralized,
                         solve_placement_closed_form, verify_fixed_point)
from dagt.problem import global_grad, placement_instance

X_STAR = [(9.752380952, 4.123809524), (1.180952381, 3.171428571), (2.133333333, 6.980952381),
          (7.847619048, 9.838095238), (3.085714286, 8.885714286)]


def test_canonical_closed_form(optimum):
    assert optimum.method == "closed-form"
    assert np.allclose(optimum.x_star, X_STAR, atol=1e-8)
    assert np.allclose(optimum.u_star, [4.8, 6.6], atol=1e-12)
    assert optimum.residual <= 1e-10


def test_identical_anchors_place_everyone_there():
    spec = placement_instance([[3.0, -1.0]] * 4, weight=1.0)
    sol = solve(spec)
    assert np.allclose(sol.x_star, [[3.0, -1.0]] * 4)
    assert sol.f_star == pytest.approx(0.0)


@pytest.mark.parametrize("seed", range(5))
def test_descent_agrees_with_closed_form(seed):
    r = np.random.default_rng(seed)
    spec = placement_instance(r.uniform(0, 10, (6, 2)), weight=r.uniform(0.5, 30))
    cf = solve_placement_closed_form(spec)
    gd = solve_centralized(spec)
    assert gd.converged
    assert np.max(np.abs(np.concatenate(cf.x_star) - np.concatenate(gd.x_star))) <= 1e-9


def test_heterogeneous_weights_use_descent():
    spec = placement_instance([[0, 0], [4, 0], [0, 4]], weight=[1, 5, 10])
    sol = solve(spec)
    assert sol.method == "centralized-descent" and sol.residual <= 1e-10
    with pytest.raises(ValueError):
        placement_closed_form(spec.instance)


def test_descent_on_nonlinear_aggregate(tanh_game):
    sol = solve_centralized(tanh_game)
    assert sol.converged
    assert np.linalg.norm(np.concatenate(global_grad(tanh_game, sol.x_star))) <= 1e-10


def test_descent_step_validation(spec):
    with pytest.raises(ValueError):
        solve_centralized(spec, step=1.0)


def test_tracker_fixed_point_is_zero_for_placement(spec, optimum):
    assert np.allclose(optimum.tracker_fixed_point(spec), 0.0, atol=1e-12)


@pytest.mark.parametrize("variant", list(Variant))
def test_fixed_state_is_stationary(spec, A, optimum, variant):
    cfg = SolverConfig(variant, alpha=0.005, beta=0.28, gamma=0.25)
    assert verify_fixed_point(spec, A, optimum, cfg) <= 1e-10


def test_fixed_point_needs_accurate_solution(spec, A, optimum):
    from dataclasses import replace
    with pytest.raises(ValueError):
        verify_fixed_point(spec, A, replace(optimum, residual=1e-6), SolverConfig())


def test_displacement_measures_largest_move(spec, optimum):
    a = fixed_state(spec, optimum)
    assert displacement(a, a) == 0.0


def test_json_round_trip(optimum):
    import json
    d = json.loads(optimum.to_json())
    assert d["u_star"] == pytest.approx([4.8, 6.6]) and d["method"] == "closed-form"
