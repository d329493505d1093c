"""Acceptance gate: one pass/fail line per criterion, at the stated tolerances.

Lines are collected into the pytest terminal summary, which is also what
running this file as a script shows.
"""

import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dagt.analysis import check_lyapunov, conservative_bounds, jury_stable, random_quartics, sweep
from dagt.checks import (lyapunov_matrix, momentum_reduction_mismatch, tail_rate,
                         tracking_identity_violation)
from dagt.cli import grid_points
from dagt.engine import SolverConfig, Variant, run
from dagt.oracle import verify_fixed_point
from dagt.problem import CHECK_SEED, check_constants, derive_constants, global_grad_fd_error

ALPHA, BETA, GAMMA = 0.005, 0.28, 0.25
CONFIGS = {
    Variant.DAGT: SolverConfig(Variant.DAGT, alpha=ALPHA),
    Variant.HB: SolverConfig(Variant.HB, alpha=ALPHA, beta=BETA),
    Variant.NES: SolverConfig(Variant.NES, alpha=ALPHA, gamma=GAMMA),
}
# four-decimal reference optima; x2's first coordinate appears as 1.810 with a
# dropped digit and is read here as 1.1810
REFERENCE_X_STAR = np.array([(9.7524, 4.1248), (1.1810, 3.1714), (2.1333, 6.9810),
                            (7.8416, 9.8381), (3.0857, 8.8857)])
REFERENCE_X2_LITERAL = (1.810, 3.1714)


def report(n, name, passed, measured):
    ACCEPTANCE_LINES.append(f"[{'PASS' if passed else 'FAIL'}] {n:>2}. {name}: {measured}")
    assert passed, f"criterion {n} ({name}) failed: {measured}"


@pytest.fixture(scope="module")
def traces(spec, A, x0, xm, optimum):
    out, secs = {}, {}
    for v, cfg in CONFIGS.items():
        t0 = time.perf_counter()
        out[v] = run(spec, A, cfg, x0, xm, optimum)
        secs[v] = time.perf_counter() - t0
    return out, secs


@pytest.mark.parametrize("variant", [Variant.HB, Variant.NES])
def test_01_reproduction(traces, optimum, variant):
    trs, secs = traces
    tr = trs[variant]
    x = np.array(tr.final.x)
    u = np.array(tr.final.u)
    cf = float(np.max(np.abs(x - np.array(optimum.x_star))))
    ref = float(np.max(np.abs(x - REFERENCE_X_STAR)))
    u_err = float(np.max(np.abs(u - [4.8, 6.6])))
    literal_x2 = float(np.max(np.abs(x[1] - REFERENCE_X2_LITERAL)))
    ok = cf <= 1e-6 and ref <= 2e-2 and u_err <= 1e-3 and secs[variant] < 5.0
    report(1, f"reproduction {variant.value}", ok,
           f"|x-x*|={cf:.2e} |x-reference|={ref:.2e} (x2 literal: {literal_x2:.3f}) "
           f"|u-(4.8,6.6)|={u_err:.2e} time={secs[variant]:.3f}s")


def test_02_acceleration_ordering(traces):
    trs, _ = traces
    k = {v: trs[v].iterations_to("state_err", 1e-6) for v in Variant}
    ok = None not in k.values() and k[Variant.HB] < k[Variant.DAGT] and k[Variant.NES] < k[Variant.DAGT]
    report(2, "acceleration ordering", ok, ", ".join(f"{v.value}={n}" for v, n in k.items()))


@pytest.mark.parametrize("variant", list(Variant))
def test_03_tracking_identities(spec, A, x0, xm, variant):
    viol = tracking_identity_violation(spec, A, CONFIGS[variant], x0, xm, steps=2000)
    report(3, f"tracking identities {variant.value} (2000 steps)", viol <= 1e-9, f"max={viol:.2e}")


@pytest.mark.parametrize("variant", list(Variant))
def test_04_fixed_point(spec, A, optimum, variant):
    disp = verify_fixed_point(spec, A, optimum, CONFIGS[variant])
    report(4, f"fixed point {variant.value}", disp <= 1e-10, f"max displacement={disp:.2e}")


@pytest.mark.parametrize("variant", list(Variant))
def test_05_lyapunov(spec, A, traces, variant):
    c = derive_constants(spec)
    assert (round(c.m, 9), c.L2, c.L3) == (40.0, 2.0, 1.0)
    M = lyapunov_matrix(CONFIGS[variant], c, A.contraction)
    viol = check_lyapunov(traces[0][variant], M)
    report(5, f"Lyapunov V+ <= {M.kind} V ({variant.value})", viol <= 1e-9, f"max excess={viol:.2e}")


def test_06_jury():
    quartics = random_quartics(1000, CHECK_SEED)
    agree = sum(jury_stable(q).stable == bool(np.all(np.abs(q.roots()) < 1)) for q in quartics)
    hand = [jury_stable(c).stable for c in ([0, 0, 0, 0, 1], [-1, 0, 0, 0, 1], [0.0625, -0.5, 1.5, -2, 1])]
    ok = agree == 1000 and hand == [True, False, True]
    report(6, "Jury vs companion roots", ok, f"{agree}/1000 agree; hand examples {hand}")


@pytest.mark.parametrize("kind", ["HB", "NES"])
def test_07_region_soundness(spec, A, kind):
    c, rho = derive_constants(spec), A.contraction
    rows = sweep(kind, grid_points(0, 0.004, 50), grid_points(0, 0.4, 50), c, rho)
    members = [r for r in rows if r.member]
    worst_member = max((r.spectral_radius for r in members), default=0.0)

    box = conservative_bounds(kind, c, rho)
    excess = -np.inf
    for a in box.alpha_bar * np.arange(1, 51) / 51:
        for b in box.momentum_bound(a) * np.arange(1, 51) / 51:
            M = box.matrix(a, b)
            excess = max(excess, float(np.max(M @ box.z - box.z)))
    ok = members and worst_member < 1 and excess < 0
    report(7, f"region soundness {kind}", ok,
           f"{len(members)}/2500 members, max member radius={worst_member:.6f}; "
           f"box alpha_bar={box.alpha_bar:.3e}, max(Mz-z)={excess:.2e}")


def test_08_momentum_reduction(spec, A, x0, xm):
    mism = momentum_reduction_mismatch(spec, A, ALPHA, x0, xm, steps=100)
    report(8, "zero momentum reduces to DAGT bitwise (100 steps)", mism == 0, f"{mism} mismatches")


def test_09_gradient_correctness(spec):
    rng = np.random.default_rng(CHECK_SEED)
    fd = max(global_grad_fd_error(spec, [rng.uniform(-20, 20, 2) for _ in range(5)]) for _ in range(100))
    contraction = {c.name: c for c in check_constants(spec, derive_constants(spec), n_pairs=1000)}
    step_ok = contraction["gradient_step_contraction"]
    ok = fd <= 1e-5 and step_ok.passed
    report(9, "gradient FD and step contraction", ok,
           f"max FD rel err={fd:.2e}; contraction slack min={step_ok.worst:.3e} over 1000 pairs")


def test_10_cost_gap(spec, traces):
    L1 = derive_constants(spec).L1
    excess = max(float(np.max(tr.column("cost_gap") - 0.5 * L1 * tr.column("state_err") ** 2))
                 for tr in traces[0].values())
    report(10, "cost gap <= (L1/2) err^2", excess <= 1e-9, f"max excess={excess:.2e}")


@pytest.mark.parametrize("variant", list(Variant))
def test_11_empirical_rate(traces, variant):
    fit = tail_rate(traces[0][variant])
    ok = fit.rate < 1 and fit.r_squared >= 0.99
    report(11, f"empirical rate {variant.value}", ok,
           f"rate={fit.rate:.4f} R2={fit.r_squared:.4f} over {fit.n_points} points")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
