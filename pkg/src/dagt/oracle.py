"""Centralized ground truth for the distributed runs."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .engine import AgentState, NetworkState, step
from .problem import (PlacementInstance, ProblemSpec, aggregate, derive_constants,
                      global_grad, grad_norm, objective)

RESIDUAL_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class OracleSolution:
    x_star: list[np.ndarray]
    u_star: np.ndarray
    f_star: float
    method: str              # "closed-form" | "centralized-descent"
    residual: float          # ||grad f(x*)||
    iterations: int = 0
    converged: bool = True

    def tracker_fixed_point(self, spec: ProblemSpec) -> np.ndarray:
        """Consensus value of the gradient-sum tracker at the optimum."""
        return sum(a.grad2(xi, self.u_star) for a, xi in zip(spec.agents, self.x_star)) / spec.n_agents

    def to_json(self) -> str:
        return json.dumps({
            "method": self.method,
            "x_star": [[float(v) for v in xi] for xi in self.x_star],
            "u_star": [float(v) for v in self.u_star],
            "f_star": float(self.f_star),
            "residual": float(self.residual),
            "iterations": self.iterations,
            "converged": self.converged,
        }, indent=2)


def placement_closed_form(inst: PlacementInstance) -> list[np.ndarray]:
    """Stationarity ``w (x_i - r_i) + (x_i - xbar) = 0`` with uniform ``w`` gives
    ``xbar = rbar`` and ``x_i = (w r_i + rbar) / (1 + w)``."""
    w = inst.uniform_weight
    if w is None:
        raise ValueError("closed form requires a uniform placement weight")
    rbar = inst.anchors.mean(axis=0)
    return [(w * r + rbar) / (1.0 + w) for r in inst.anchors]


def solve_placement_closed_form(spec: ProblemSpec) -> OracleSolution:
    if spec.instance is None:
        raise ValueError("closed form only exists for placement problems (phi = identity)")
    x = placement_closed_form(spec.instance)
    return OracleSolution(x, aggregate(spec, x), objective(spec, x), "closed-form", grad_norm(spec, x))


def solve_centralized(spec: ProblemSpec, x_init=None, step: float | None = None,
                      tol: float = 1e-11, iter_cap: int = 100_000) -> OracleSolution:
    """Plain gradient descent on the global objective.

    The default step ``1/L1`` contracts the error by ``1 - m/L1`` per iteration.
    """
    constants = derive_constants(spec)
    if step is None:
        step = 1.0 / constants.L1
    if not 0 < step <= 1.0 / constants.L1 * (1 + 1e-12):
        raise ValueError(f"step {step} outside (0, 1/L1]")
    x = spec.check_state(x_init if x_init is not None else [np.zeros(n) for n in spec.agent_dims])
    k = 0
    g = global_grad(spec, x)
    res = float(np.linalg.norm(np.concatenate(g)))
    while res > tol and k < iter_cap:
        x = [xi - step * gi for xi, gi in zip(x, g)]
        g = global_grad(spec, x)
        res = float(np.linalg.norm(np.concatenate(g)))
        k += 1
    return OracleSolution(x, aggregate(spec, x), objective(spec, x), "centralized-descent",
                          res, iterations=k, converged=res <= tol)


def solve(spec: ProblemSpec) -> OracleSolution:
    if spec.instance is not None and spec.instance.uniform_weight is not None:
        return solve_placement_closed_form(spec)
    return solve_centralized(spec)


def fixed_state(spec: ProblemSpec, sol: OracleSolution) -> NetworkState:
    """Consensus network state at the optimum: ``u_i = u*``, ``s_i = mean_j grad2_j(x_j*, u*)``."""
    s_star = sol.tracker_fixed_point(spec)
    return NetworkState(tuple(AgentState(xi.copy(), xi.copy(), xi.copy(), sol.u_star.copy(), s_star.copy())
                              for xi in sol.x_star))


def verify_fixed_point(spec: ProblemSpec, A, sol: OracleSolution, config) -> float:
    """Largest coordinate move after one step of ``config.variant`` from the fixed state."""
    if sol.residual > RESIDUAL_TOL:
        raise ValueError(f"solution residual {sol.residual:.3g} exceeds {RESIDUAL_TOL}")
    before = fixed_state(spec, sol)
    after = step(before, spec, A, config)
    return displacement(before, after)


def displacement(before, after) -> float:
    worst = 0.0
    for a, b in zip(before.agents, after.agents):
        for name in ("x", "y", "u", "s"):
            worst = max(worst, float(np.max(np.abs(getattr(a, name) - getattr(b, name)))))
    return worst
