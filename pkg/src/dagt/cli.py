"""Command-line front end: ``dagt run | sweep | oracle | check``.

Exit codes: 0 success, 2 configuration error, 3 divergence, 4 property failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .analysis import conservative_bounds, sweep
from .checks import run_suite, tail_rate
from .config import ConfigError, ExperimentConfig, default_config_path, load_experiment, load_instance
from .engine import DivergenceError, SolverConfig, Variant, run
from .graph import metropolis_weights
from .oracle import solve, solve_centralized, solve_placement_closed_form

EXIT_OK, EXIT_CONFIG, EXIT_DIVERGED, EXIT_PROPERTY = 0, 2, 3, 4
STATE_ERR_MILESTONE = 1e-6


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v)).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    v = float(v)
    return "" if np.isnan(v) else format(v, ".17g")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if not isinstance(v, str) else v for v in r])


def _slug(variant: Variant) -> str:
    return variant.value.lower()


def parse_grid(text: str) -> tuple[int, int]:
    try:
        a, b = (int(v) for v in text.lower().split("x"))
    except ValueError:
        raise ConfigError(f"grid must look like AxB, got {text!r}") from None
    if a < 2 or b < 2:
        raise ConfigError(f"grid must be at least 2x2, got {a}x{b}")
    return a, b


def parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(v) for v in text.split(":"))
    except ValueError:
        raise ConfigError(f"range must look like LO:HI, got {text!r}") from None
    if lo < 0 or not hi > lo:
        raise ConfigError(f"range needs 0 <= LO < HI, got {text!r}")
    return lo, hi


def grid_points(lo: float, hi: float, n: int) -> np.ndarray:
    """``n`` points ending at ``hi``, spaced ``(hi - lo)/n``; ``lo`` itself is excluded."""
    return lo + (hi - lo) * np.arange(1, n + 1) / n


def load(args) -> ExperimentConfig:
    cfg = load_experiment(args.config or default_config_path(), seed=args.seed)
    if getattr(args, "instance", None):
        cfg = dataclasses.replace(cfg, spec=load_instance(args.instance))
    overrides = {k: v for k, v in (("alpha", args.alpha), ("beta", args.beta), ("gamma", args.gamma),
                                   ("epsilon", args.epsilon), ("k_max", args.kmax)) if v is not None}
    solvers = cfg.solvers
    if args.variant:
        try:
            wanted = [Variant.parse(v) for v in args.variant]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        base = solvers[0]
        solvers = [next((s for s in solvers if s.variant is w), dataclasses.replace(base, variant=w))
                   for w in wanted]
    try:
        solvers = [dataclasses.replace(s, **overrides) for s in solvers]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.out:
        cfg = dataclasses.replace(cfg, out_dir=Path(args.out))
    return dataclasses.replace(cfg, solvers=solvers)


def _run_one(cfg: ExperimentConfig, A, config: SolverConfig, optimum):
    try:
        return run(cfg.spec, A, config, cfg.x0, cfg.x_minus1, optimum=optimum, record_agents=True), None
    except DivergenceError as exc:
        return exc.trace, exc


def cmd_run(args) -> int:
    cfg = load(args)
    A = metropolis_weights(cfg.graph)
    optimum = solve(cfg.spec) if cfg.oracle else None
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        results = list(pool.map(lambda c: _run_one(cfg, A, c, optimum), cfg.solvers))

    summary, finals, diverged = [], [], False
    for config, (trace, err) in zip(cfg.solvers, results):
        slug = _slug(config.variant)
        trace.to_csv(out / f"trace_{slug}.csv")
        trace.positions_to_csv(out / f"agents_{slug}.csv")
        last = trace.rows[-1]
        rate = r2 = None
        if err is None:
            try:
                fit = tail_rate(trace, "state_err" if optimum is not None else "grad_norm")
                rate, r2 = fit.rate, fit.r_squared
            except ValueError:
                pass
        else:
            diverged = True
        summary.append([config.variant.value, "diverged" if err else "ok", trace.stop_reason,
                        trace.iterations, trace.iterations if trace.stop_reason == "epsilon" else None,
                        trace.iterations_to("state_err", STATE_ERR_MILESTONE) if optimum else None,
                        last.state_err, last.grad_norm, rate, r2])
        if err is None:
            for i, ag in enumerate(trace.final.agents):
                finals.append([config.variant.value, i + 1, *ag.x, *ag.u])

    _write_csv(out / "summary.csv",
               ["variant", "status", "stop_reason", "iterations", "iterations_to_epsilon",
                "iterations_to_state_err_1e-6", "final_state_err", "final_grad_norm", "rate", "rate_r2"],
               summary)
    n_x, n_u = cfg.spec.agent_dims[0], cfg.spec.agg_dim
    _write_csv(out / "final_agents.csv",
               ["variant", "agent"] + [f"x{c}" for c in range(n_x)] + [f"u{c}" for c in range(n_u)], finals)
    if optimum is not None:
        (out / "oracle.json").write_text(optimum.to_json() + "\n")

    for row in summary:
        print(f"{row[0]:<9} {row[1]:<8} stop={row[2]:<8} k={row[3]:<6} "
              f"k(err<1e-6)={_fmt(row[5]) or '-':<6} err={_fmt(row[6]) or '-'} rate={_fmt(row[8]) or '-'}")
    print(f"outputs written to {out}")
    return EXIT_DIVERGED if diverged else EXIT_OK


def cmd_sweep(args) -> int:
    cfg = load(args)
    na, nb = parse_grid(args.grid)
    alphas = grid_points(*parse_range(args.alpha_range), na)
    momenta = grid_points(*parse_range(args.momentum_range), nb)
    kind = args.kind.upper()
    constants = cfg.constants()
    rho = metropolis_weights(cfg.graph).contraction
    out = cfg.out_dir
    out.mkdir(parents=True, exist_ok=True)

    rows = sweep(kind, alphas, momenta, constants, rho)
    _write_csv(out / f"region_{kind.lower()}.csv",
               ["alpha", "momentum", "member", "spectral_radius", "jury_flags"],
               [[r.alpha, r.momentum, r.member, r.spectral_radius, r.jury_flags] for r in rows])

    box = conservative_bounds(kind, constants, rho)
    params = [["rho", rho], ["alpha_bar", box.alpha_bar], ["momentum_bar", box.momentum_bar]]
    params += [[f"z{i + 1}", v] for i, v in enumerate(box.z)]
    params += [[f"alpha_term_{k}", v] for k, v in box.alpha_terms.items()]
    _write_csv(out / f"box_{kind.lower()}.csv", ["name", "value"], params)
    curve_alphas = grid_points(0.0, box.alpha_bar, na) * (1 - 1e-9) if not box.empty else []
    _write_csv(out / f"box_curve_{kind.lower()}.csv", ["alpha", "momentum_bound"],
               [[a, box.momentum_bound(a)] for a in curve_alphas])

    n_member = sum(r.member for r in rows)
    print(f"{kind}: {n_member}/{len(rows)} grid points in the region; rho={_fmt(rho)}")
    print(f"conservative box: alpha_bar={_fmt(box.alpha_bar)} momentum_bar={_fmt(box.momentum_bar)}")
    print(f"outputs written to {out}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = load(args)
    spec = cfg.spec
    sol = solve(spec)
    print(f"method   {sol.method}")
    for i, xi in enumerate(sol.x_star):
        print(f"x{i + 1}*     ({', '.join(_fmt(v) for v in xi)})")
    print(f"u*       ({', '.join(_fmt(v) for v in sol.u_star)})")
    print(f"f*       {_fmt(sol.f_star)}")
    print(f"residual {_fmt(sol.residual)}")
    descent = solve_centralized(spec, x_init=cfg.x0)
    if sol.method == "closed-form":
        gap = float(np.max(np.abs(np.concatenate(sol.x_star) - np.concatenate(descent.x_star))))
        print(f"agreement closed-form vs descent: max |dx| = {_fmt(gap)} "
              f"({descent.iterations} descent iterations)")
    else:
        try:
            solve_placement_closed_form(spec)
        except ValueError as exc:
            print(f"agreement closed-form vs descent: closed form unavailable ({exc})")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "oracle.json").write_text(sol.to_json() + "\n")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = load(args)
    results = run_suite(cfg)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        _write_csv(out / "checks.csv", ["name", "passed", "measured", "tolerance", "detail"],
                   [[r.name, r.passed, r.measured, r.tolerance, r.detail] for r in results])
    print(f"{len(results) - len(failed)}/{len(results)} properties hold")
    return EXIT_PROPERTY if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment file (default: bundled five-agent ring)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--variant", action="append", help="DAGT, DAGT-HB or DAGT-NES; repeatable")
    common.add_argument("--alpha", type=float)
    common.add_argument("--beta", type=float)
    common.add_argument("--gamma", type=float)
    common.add_argument("--epsilon", type=float)
    common.add_argument("--kmax", type=int)
    common.add_argument("--seed", type=int, help="seed for generated graphs")

    p = argparse.ArgumentParser(prog="dagt", description="Distributed aggregative gradient tracking experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", parents=[common], help="run each configured variant and write traces")
    r.add_argument("--jobs", type=int, default=1, help="variants run concurrently")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", parents=[common], help="grid membership in the stability region")
    s.add_argument("--kind", choices=["HB", "NES", "hb", "nes"], default="HB")
    s.add_argument("--grid", default="50x50", help="AxB grid over (alpha, momentum)")
    s.add_argument("--alpha-range", default="0:0.004")
    s.add_argument("--momentum-range", default="0:0.4")
    s.set_defaults(func=cmd_sweep)

    o = sub.add_parser("oracle", parents=[common], help="centralized optimum")
    o.add_argument("--instance", type=Path, help="placement instance file (overrides the config)")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("check", parents=[common], help="run the property suite")
    c.set_defaults(func=cmd_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
