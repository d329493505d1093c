"""Aggregative optimization problems.

Each agent ``i`` owns a cost ``f_i(x_i, u)`` where ``u = (1/N) sum_j phi_j(x_j)``
is the network aggregate. A :class:`ProblemSpec` bundles the per-agent oracles
the distributed iterations need; the global quantities (aggregate, objective,
true gradient) are computed here for telemetry and ground truth only.

States are passed around as lists of per-agent 1-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# seed for every sampling-based property check in this package
CHECK_SEED = 20240527


@dataclass(frozen=True)
class AgentOracle:
    cost: Callable[[np.ndarray, np.ndarray], float]
    grad1: Callable[[np.ndarray, np.ndarray], np.ndarray]
    grad2: Callable[[np.ndarray, np.ndarray], np.ndarray]
    phi: Callable[[np.ndarray], np.ndarray]
    jac_phi: Callable[[np.ndarray], np.ndarray]  # shape (n_i, d)


@dataclass(frozen=True)
class SmoothnessConstants:
    m: float
    L1: float
    L2: float
    L3: float

    def __post_init__(self):
        for name in ("m", "L1", "L2", "L3"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.m > self.L1:
            raise ValueError(f"m={self.m} exceeds L1={self.L1}")


@dataclass(frozen=True, eq=False)
class PlacementInstance:
    """Optimal-placement data: fixed anchors ``r_i`` and per-agent weights ``w_i``."""

    anchors: np.ndarray          # (N, dim)
    weights: np.ndarray          # (N,)
    x0: np.ndarray | None = None
    x_minus1: np.ndarray | None = None

    @property
    def n_agents(self) -> int:
        return self.anchors.shape[0]

    @property
    def uniform_weight(self) -> float | None:
        w = self.weights
        return float(w[0]) if np.all(w == w[0]) else None


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    agents: tuple[AgentOracle, ...]
    agent_dims: tuple[int, ...]
    agg_dim: int
    constants: SmoothnessConstants | None = None
    instance: PlacementInstance | None = field(default=None, repr=False)

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    def check_state(self, x: Sequence[np.ndarray]) -> list[np.ndarray]:
        if len(x) != self.n_agents:
            raise ValueError(f"state has {len(x)} blocks, problem has {self.n_agents} agents")
        out = []
        for i, (xi, ni) in enumerate(zip(x, self.agent_dims)):
            xi = np.asarray(xi, dtype=float)
            if xi.shape != (ni,):
                raise ValueError(f"agent {i}: state shape {xi.shape}, expected ({ni},)")
            out.append(xi)
        return out

    def stack(self, x: Sequence[np.ndarray]) -> np.ndarray:
        return np.concatenate(self.check_state(x))

    def split(self, flat: np.ndarray) -> list[np.ndarray]:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (sum(self.agent_dims),):
            raise ValueError(f"flat state shape {flat.shape} does not match {sum(self.agent_dims)}")
        bounds = np.cumsum((0,) + self.agent_dims)
        return [flat[bounds[i]:bounds[i + 1]].copy() for i in range(self.n_agents)]


def placement_instance(anchors, weight, x0=None, x_minus1=None) -> ProblemSpec:
    """Optimal placement: ``f_i = w_i ||x_i - r_i||^2 + ||x_i - u||^2``, ``phi_i`` identity.

    ``weight`` may be a scalar (shared) or one value per agent.
    """
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    n, dim = anchors.shape
    weights = np.broadcast_to(np.asarray(weight, dtype=float), (n,)).copy()
    if np.any(weights <= 0):
        raise ValueError("placement weights must be positive")
    for name, pts in (("x0", x0), ("x_minus1", x_minus1)):
        if pts is not None and np.asarray(pts).shape != anchors.shape:
            raise ValueError(f"{name} shape {np.asarray(pts).shape} does not match anchors {anchors.shape}")
    inst = PlacementInstance(
        anchors, weights,
        None if x0 is None else np.asarray(x0, dtype=float),
        None if x_minus1 is None else np.asarray(x_minus1, dtype=float),
    )
    eye = np.eye(dim)
    agents = []
    for r, w in zip(anchors, weights):
        r, w = r.copy(), float(w)

        def cost(x, u, r=r, w=w):
            return w * float((x - r) @ (x - r)) + float((x - u) @ (x - u))

        def grad1(x, u, r=r, w=w):
            return 2.0 * w * (x - r) + 2.0 * (x - u)

        def grad2(x, u):
            return 2.0 * (u - x)

        agents.append(AgentOracle(cost, grad1, grad2, lambda x: x.copy(), lambda x: eye))
    return ProblemSpec(tuple(agents), (dim,) * n, dim, instance=inst)


def canonical_instance() -> ProblemSpec:
    """The five-entity planar placement example with its initial points."""
    return placement_instance(
        anchors=[(10, 4), (1, 3), (2, 7), (8, 10), (3, 9)],
        weight=20.0,
        x0=[(2, 9), (8, 6), (7, 3), (4, 7), (8, 3)],
        x_minus1=[(0, 11), (9, 8), (9, 1), (1, 4), (3, 1)],
    )


def aggregate(spec: ProblemSpec, x) -> np.ndarray:
    x = spec.check_state(x)
    return sum(a.phi(xi) for a, xi in zip(spec.agents, x)) / spec.n_agents


def objective(spec: ProblemSpec, x) -> float:
    x = spec.check_state(x)
    u = aggregate(spec, x)
    return float(sum(a.cost(xi, u) for a, xi in zip(spec.agents, x)))


def global_grad(spec: ProblemSpec, x) -> list[np.ndarray]:
    """Exact gradient of the global objective, block by block.

    Block ``i`` is ``grad1_i(x_i, u) + Jphi_i(x_i) @ mean_j grad2_j(x_j, u)`` at
    ``u = u(x)``. Centralized; used for stopping and telemetry only.
    """
    x = spec.check_state(x)
    u = aggregate(spec, x)
    g2 = sum(a.grad2(xi, u) for a, xi in zip(spec.agents, x)) / spec.n_agents
    return [a.grad1(xi, u) + a.jac_phi(xi) @ g2 for a, xi in zip(spec.agents, x)]


def grad_norm(spec: ProblemSpec, x) -> float:
    return float(np.linalg.norm(np.concatenate(global_grad(spec, x))))


def placement_hessian(inst: PlacementInstance) -> np.ndarray:
    """Per-coordinate Hessian ``2 diag(w) + 2 (I - K_N)`` of the placement objective."""
    n = inst.n_agents
    return 2.0 * np.diag(inst.weights) + 2.0 * (np.eye(n) - np.full((n, n), 1.0 / n))


def derive_constants(spec: ProblemSpec) -> SmoothnessConstants:
    """Smoothness and convexity constants.

    The placement family gets exact values (Hessian extremes, ``L2 = 2``,
    ``L3 = 1``). Other problems must carry user-supplied constants.
    """
    if spec.instance is not None:
        eig = np.linalg.eigvalsh(placement_hessian(spec.instance))
        # grad2_i = 2 (u - x_i): ||d grad2|| <= 2 (||dx|| + ||du||)
        return SmoothnessConstants(m=float(eig[0]), L1=float(eig[-1]), L2=2.0, L3=1.0)
    if spec.constants is not None:
        return spec.constants
    raise ValueError("constants for a non-placement problem must be supplied by the user")


def _random_state(spec, rng, scale):
    return [rng.uniform(-scale, scale, size=n) for n in spec.agent_dims]


@dataclass
class SampleCheck:
    name: str
    worst: float     # worst observed slack (negative means violated)
    passed: bool


def check_constants(spec: ProblemSpec, constants: SmoothnessConstants, n_pairs: int = 1000,
                    scale: float = 20.0, seed: int = CHECK_SEED) -> list[SampleCheck]:
    """Sampling checks of strong convexity, smoothness, Lipschitz ``phi`` and gradient-step contraction."""
    rng = np.random.default_rng(seed)
    m, L1, L3 = constants.m, constants.L1, constants.L3
    alpha = 1.0 / L1
    worst = {"strong_convexity": np.inf, "smoothness": np.inf,
             "phi_lipschitz": np.inf, "gradient_step_contraction": np.inf}
    for _ in range(n_pairs):
        x, y = _random_state(spec, rng, scale), _random_state(spec, rng, scale)
        fx, fy = spec.stack(x), spec.stack(y)
        gx, gy = np.concatenate(global_grad(spec, x)), np.concatenate(global_grad(spec, y))
        d = fx - fy
        nd = np.linalg.norm(d)
        tol = 1e-9 * max(1.0, nd * nd * L1)
        worst["strong_convexity"] = min(worst["strong_convexity"], d @ (gx - gy) - m * nd ** 2 + tol)
        worst["smoothness"] = min(worst["smoothness"], L1 * nd - np.linalg.norm(gx - gy) + tol)
        step = np.linalg.norm(d - alpha * (gx - gy))
        worst["gradient_step_contraction"] = min(worst["gradient_step_contraction"],
                                                 (1 - m * alpha) * nd - step + tol)
        for a, xi, yi in zip(spec.agents, x, y):
            gap = L3 * np.linalg.norm(xi - yi) - np.linalg.norm(a.phi(xi) - a.phi(yi))
            worst["phi_lipschitz"] = min(worst["phi_lipschitz"], gap + 1e-12)
    return [SampleCheck(k, float(v), bool(v >= 0)) for k, v in worst.items()]


def finite_diff_check(spec: ProblemSpec, x, h: float = 1e-6) -> float:
    """Worst relative error of ``grad1``, ``grad2``, ``jac_phi`` against central differences."""
    if not 0 < h <= 1e-3:
        raise ValueError("step h must lie in (0, 1e-3]")
    x = spec.check_state(x)
    u = aggregate(spec, x)
    worst = 0.0

    def rel(exact, approx):
        scale = max(np.linalg.norm(exact), np.linalg.norm(approx), 1.0)
        return float(np.linalg.norm(exact - approx) / scale)

    for a, xi in zip(spec.agents, x):
        g1 = np.array([(a.cost(xi + h * e, u) - a.cost(xi - h * e, u)) / (2 * h)
                       for e in np.eye(xi.size)])
        g2 = np.array([(a.cost(xi, u + h * e) - a.cost(xi, u - h * e)) / (2 * h)
                       for e in np.eye(u.size)])
        jac = np.array([(a.phi(xi + h * e) - a.phi(xi - h * e)) / (2 * h)
                        for e in np.eye(xi.size)])
        worst = max(worst, rel(a.grad1(xi, u), g1), rel(a.grad2(xi, u), g2),
                    rel(a.jac_phi(xi), jac))
    return worst


def global_grad_fd_error(spec: ProblemSpec, x, h: float = 1e-6) -> float:
    """Relative error of :func:`global_grad` against central differences of the objective."""
    flat = spec.stack(x)
    exact = np.concatenate(global_grad(spec, x))
    approx = np.empty_like(flat)
    for k in range(flat.size):
        e = np.zeros_like(flat)
        e[k] = h
        approx[k] = (objective(spec, spec.split(flat + e)) - objective(spec, spec.split(flat - e))) / (2 * h)
    return float(np.linalg.norm(exact - approx) / max(np.linalg.norm(exact), 1.0))
