"""Cross-module property suite run by ``dagt check``.

Each check returns a :class:`CheckResult` with the worst measured violation
and the tolerance it was held to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import build_matrix, check_lyapunov, estimate_rate, jury_stable, random_quartics
from .engine import SolverConfig, Trace, Variant, init_network, run, step
from .graph import contraction_factor, metropolis_weights, validate_mixing
from .oracle import solve, verify_fixed_point
from .problem import CHECK_SEED, aggregate, check_constants, finite_diff_check, global_grad_fd_error


@dataclass
class CheckResult:
    name: str
    passed: bool
    measured: float
    tolerance: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  {self.detail}" if self.detail else ""
        return f"{status}  {self.name:<34} measured={self.measured:.6g}  tol={self.tolerance:.3g}{extra}"


TRACKING_TOL = 1e-9
FIXED_POINT_TOL = 1e-10
LYAPUNOV_TOL = 1e-9
FD_TOL = 1e-5
COST_GAP_TOL = 1e-9
RATE_R2 = 0.99


def tracking_identity_violation(spec, A, config: SolverConfig, x0, x_minus1=None, steps: int = 2000) -> float:
    """Worst deviation of ``mean u`` from ``mean phi`` and ``mean s`` from ``mean grad2`` over ``steps`` iterations.

    ``phi`` and ``grad2`` are evaluated at ``y`` for the Nesterov variant and at
    ``x`` otherwise (``y = x`` there anyway).
    """
    net = init_network(spec, x0, x_minus1)
    worst = 0.0
    for k in range(steps + 1):
        pts = net.y
        mean_u = np.mean(net.u, axis=0)
        mean_phi = aggregate(spec, pts)
        mean_s = np.mean(net.s, axis=0)
        mean_g2 = np.mean([a.grad2(p, ag.u) for a, p, ag in zip(spec.agents, pts, net.agents)], axis=0)
        worst = max(worst, float(np.max(np.abs(mean_u - mean_phi))), float(np.max(np.abs(mean_s - mean_g2))))
        if k < steps:
            net = step(net, spec, A, config)
    return worst


def lyapunov_matrix(config: SolverConfig, constants, rho):
    """``P`` for DAGT/heavy ball (``beta = 0`` for DAGT), ``Q`` for Nesterov."""
    if config.variant is Variant.NES:
        return build_matrix("Q", config.alpha, config.gamma, constants, rho)
    return build_matrix("P", config.alpha, config.momentum, constants, rho)


def momentum_reduction_mismatch(spec, A, alpha: float, x0, x_minus1=None, steps: int = 100) -> int:
    """Number of agent-steps where a zero-momentum run differs bitwise from DAGT."""
    plain = SolverConfig(Variant.DAGT, alpha=alpha)
    hb = SolverConfig(Variant.HB, alpha=alpha, beta=0.0)
    nes = SolverConfig(Variant.NES, alpha=alpha, gamma=0.0)
    nets = [init_network(spec, x0, x_minus1) for _ in range(3)]
    mismatches = 0
    for _ in range(steps):
        nets = [step(n, spec, A, c) for n, c in zip(nets, (plain, hb, nes))]
        for other in nets[1:]:
            for a, b in zip(nets[0].agents, other.agents):
                same = all(np.array_equal(getattr(a, f), getattr(b, f)) for f in ("x", "u", "s"))
                mismatches += not same
    return mismatches


def jury_disagreements(n: int = 1000, seed: int = CHECK_SEED) -> int:
    bad = 0
    for q in random_quartics(n, seed):
        bad += jury_stable(q).stable != bool(np.all(np.abs(q.roots()) < 1.0))
    return bad


def tail_rate(trace: Trace, column: str = "state_err", upper: float = 1e-2, lower: float = 1e-10):
    """Rate fit on the rows where ``lower < column < upper``.

    The window starts at the first row below ``upper`` and ends before the
    first later row at or below ``lower``, where round-off takes over.
    """
    vals = trace.column(column)
    below = np.nonzero(vals < upper)[0]
    start = int(below[0]) if below.size else len(vals)
    stop = start
    while stop < len(vals) and vals[stop] > lower:
        stop += 1
    return estimate_rate(vals[start:stop])


def run_suite(cfg) -> list[CheckResult]:
    """Full property suite for an :class:`~dagt.config.ExperimentConfig`."""
    spec, graph = cfg.spec, cfg.graph
    A = metropolis_weights(graph)
    rho = contraction_factor(A.entries)
    constants = cfg.constants()
    sol = solve(spec)
    x0, xm = cfg.x0, cfg.x_minus1
    results = []

    rep = validate_mixing(A.entries, graph)
    results.append(CheckResult("mixing_matrix_valid", rep.ok and rho < 1, rho, 1.0,
                               ",".join(rep.failures())))

    rng = np.random.default_rng(CHECK_SEED)
    fd = 0.0
    for _ in range(100):
        pts = [rng.uniform(-20, 20, size=n) for n in spec.agent_dims]
        fd = max(fd, global_grad_fd_error(spec, pts), finite_diff_check(spec, pts))
    results.append(CheckResult("gradient_finite_difference", fd <= FD_TOL, fd, FD_TOL))

    for sc in check_constants(spec, constants):
        results.append(CheckResult(f"constants_{sc.name}", sc.passed, -sc.worst, 0.0))

    bad = jury_disagreements()
    results.append(CheckResult("jury_vs_companion_roots", bad == 0, bad, 0))

    alpha = cfg.solvers[0].alpha
    mism = momentum_reduction_mismatch(spec, A, alpha, x0, xm)
    results.append(CheckResult("zero_momentum_reduction_bitwise", mism == 0, mism, 0))

    for config in cfg.solvers:
        name = config.variant.value
        viol = tracking_identity_violation(spec, A, config, x0, xm)
        results.append(CheckResult(f"tracking_identities[{name}]", viol <= TRACKING_TOL, viol, TRACKING_TOL))

        disp = verify_fixed_point(spec, A, sol, config)
        results.append(CheckResult(f"fixed_point[{name}]", disp <= FIXED_POINT_TOL, disp, FIXED_POINT_TOL))

        try:
            trace = run(spec, A, config, x0, xm, optimum=sol)
        except Exception as exc:  # divergence is itself a failed property
            results.append(CheckResult(f"run[{name}]", False, math.inf, 0.0, str(exc)))
            continue
        M = lyapunov_matrix(config, constants, rho)
        lv = check_lyapunov(trace, M)
        results.append(CheckResult(f"lyapunov_{M.kind}[{name}]", lv <= LYAPUNOV_TOL, lv, LYAPUNOV_TOL))

        err, gap = trace.column("state_err"), trace.column("cost_gap")
        excess = float(np.max(gap - 0.5 * constants.L1 * err ** 2))
        results.append(CheckResult(f"cost_gap_bound[{name}]", excess <= COST_GAP_TOL, excess, COST_GAP_TOL))

        try:
            fit = tail_rate(trace)
            ok = fit.rate < 1 and fit.r_squared >= RATE_R2
            results.append(CheckResult(f"empirical_rate[{name}]", ok, fit.rate, 1.0,
                                       f"r2={fit.r_squared:.4f}"))
        except ValueError as exc:
            results.append(CheckResult(f"empirical_rate[{name}]", False, math.nan, 1.0, str(exc)))
    return results

