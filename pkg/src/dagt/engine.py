"""Synchronous simulation of DAGT, DAGT-HB and DAGT-NES.

One iteration is three barrier-separated phases over a frozen snapshot of
round ``k``:

1. every agent updates its state from its own ``x``/``y``, ``u``, ``s``;
2. a ``u`` exchange: agent ``i`` reads ``u_j`` from ``{j : a_ij > 0}`` and
   adds its local increment ``phi_i(new) - phi_i(old)``;
3. an ``s`` exchange, reading the round-``k`` ``s_j`` the same way and adding
   ``grad2_i(new, u_i^+) - grad2_i(old, u_i)``.

Neighbor sums run over ``j`` in increasing order so results are
bit-reproducible.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .graph import CommGraph, MixingMatrix, metropolis_weights
from .problem import ProblemSpec, aggregate, grad_norm, objective

Observer = Callable[[int, int, str], None]


class Variant(str, enum.Enum):
    DAGT = "DAGT"
    HB = "DAGT-HB"
    NES = "DAGT-NES"

    @classmethod
    def parse(cls, name: str) -> "Variant":
        key = name.strip().upper().replace("_", "-")
        aliases = {"DAGT": cls.DAGT, "HB": cls.HB, "DAGT-HB": cls.HB,
                   "NES": cls.NES, "DAGT-NES": cls.NES}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown variant {name!r}") from None


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, trace: "Trace | None" = None):
        self.iteration = iteration
        self.trace = trace
        super().__init__(f"non-finite iterate at iteration {iteration}")


@dataclass(frozen=True)
class SolverConfig:
    variant: Variant = Variant.HB
    alpha: float = 0.005
    beta: float = 0.0
    gamma: float = 0.0
    epsilon: float = 1e-8
    k_max: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(str(getattr(self.variant, "value", self.variant))))
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.beta < 0 or self.gamma < 0:
            raise ValueError("momentum coefficients must be nonnegative")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.k_max < 1:
            raise ValueError("k_max must be at least 1")

    @property
    def momentum(self) -> float:
        return {Variant.DAGT: 0.0, Variant.HB: self.beta, Variant.NES: self.gamma}[self.variant]


@dataclass(frozen=True, eq=False)
class AgentState:
    x: np.ndarray
    x_prev: np.ndarray
    y: np.ndarray
    u: np.ndarray
    s: np.ndarray

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in (self.x, self.y, self.u, self.s))


@dataclass(frozen=True, eq=False)
class NetworkState:
    agents: tuple[AgentState, ...]
    iteration: int = 0

    @property
    def x(self) -> list[np.ndarray]:
        return [a.x for a in self.agents]

    @property
    def x_prev(self) -> list[np.ndarray]:
        return [a.x_prev for a in self.agents]

    @property
    def y(self) -> list[np.ndarray]:
        return [a.y for a in self.agents]

    @property
    def u(self) -> list[np.ndarray]:
        return [a.u for a in self.agents]

    @property
    def s(self) -> list[np.ndarray]:
        return [a.s for a in self.agents]


def init_network(spec: ProblemSpec, x0, x_minus1=None) -> NetworkState:
    """``u_i = phi_i(x_i0)``, ``s_i = grad2_i(x_i0, u_i0)``; the lookahead starts at ``x0``."""
    x0 = spec.check_state(x0)
    xm = x0 if x_minus1 is None else spec.check_state(x_minus1)
    agents = []
    for a, xi, xp in zip(spec.agents, x0, xm):
        u = np.asarray(a.phi(xi), dtype=float)
        if u.shape != (spec.agg_dim,):
            raise ValueError(f"phi returned shape {u.shape}, expected ({spec.agg_dim},)")
        agents.append(AgentState(xi.copy(), xp.copy(), xi.copy(), u, np.asarray(a.grad2(xi, u), dtype=float)))
    return NetworkState(tuple(agents), 0)


def mix(A: MixingMatrix, values: Sequence[np.ndarray], channel: str = "",
        observer: Observer | None = None) -> list[np.ndarray]:
    """One synchronous exchange: agent ``i`` receives ``sum_j a_ij v_j`` over its in-neighbors."""
    w = A.entries
    out = []
    for i in range(A.n_agents):
        acc = np.zeros_like(values[i])
        for j in A.in_neighbors(i):
            if observer is not None:
                observer(i, j, channel)
            acc = acc + w[i, j] * values[j]
        out.append(acc)
    return out


def _track(net: NetworkState, spec: ProblemSpec, A: MixingMatrix, old_pts, new_pts,
           observer: Observer | None):
    mixed_u = mix(A, net.u, "u", observer)
    u_new = [mixed_u[i] + a.phi(new) - a.phi(old)
             for i, (a, old, new) in enumerate(zip(spec.agents, old_pts, new_pts))]
    mixed_s = mix(A, net.s, "s", observer)
    s_new = [mixed_s[i] + a.grad2(new, u_new[i]) - a.grad2(old, net.agents[i].u)
             for i, (a, old, new) in enumerate(zip(spec.agents, old_pts, new_pts))]
    return u_new, s_new


def _local_direction(a, pt, ag: AgentState) -> np.ndarray:
    return a.grad1(pt, ag.u) + a.jac_phi(pt) @ ag.s


def dagt_step(net: NetworkState, spec: ProblemSpec, A: MixingMatrix, alpha: float,
              observer: Observer | None = None) -> NetworkState:
    x_new = [ag.x - alpha * _local_direction(a, ag.x, ag) for a, ag in zip(spec.agents, net.agents)]
    u_new, s_new = _track(net, spec, A, net.x, x_new, observer)
    agents = tuple(AgentState(xn, ag.x, xn, un, sn)
                   for ag, xn, un, sn in zip(net.agents, x_new, u_new, s_new))
    return NetworkState(agents, net.iteration + 1)


def dagt_hb_step(net: NetworkState, spec: ProblemSpec, A: MixingMatrix, alpha: float, beta: float,
                 observer: Observer | None = None) -> NetworkState:
    x_new = [ag.x - alpha * _local_direction(a, ag.x, ag) + beta * (ag.x - ag.x_prev)
             for a, ag in zip(spec.agents, net.agents)]
    u_new, s_new = _track(net, spec, A, net.x, x_new, observer)
    agents = tuple(AgentState(xn, ag.x, xn, un, sn)
                   for ag, xn, un, sn in zip(net.agents, x_new, u_new, s_new))
    return NetworkState(agents, net.iteration + 1)


def dagt_nes_step(net: NetworkState, spec: ProblemSpec, A: MixingMatrix, alpha: float, gamma: float,
                  observer: Observer | None = None) -> NetworkState:
    x_new = [ag.y - alpha * _local_direction(a, ag.y, ag) for a, ag in zip(spec.agents, net.agents)]
    y_new = [xn + gamma * (xn - ag.x) for xn, ag in zip(x_new, net.agents)]
    u_new, s_new = _track(net, spec, A, net.y, y_new, observer)
    agents = tuple(AgentState(xn, ag.x, yn, un, sn)
                   for ag, xn, yn, un, sn in zip(net.agents, x_new, y_new, u_new, s_new))
    return NetworkState(agents, net.iteration + 1)


def step(net: NetworkState, spec: ProblemSpec, A: MixingMatrix, config: SolverConfig,
         observer: Observer | None = None) -> NetworkState:
    if config.variant is Variant.HB:
        return dagt_hb_step(net, spec, A, config.alpha, config.beta, observer)
    if config.variant is Variant.NES:
        return dagt_nes_step(net, spec, A, config.alpha, config.gamma, observer)
    return dagt_step(net, spec, A, config.alpha, observer)


def _consensus_error(vals: Sequence[np.ndarray]) -> float:
    v = np.asarray(vals)
    return float(np.linalg.norm(v - v.mean(axis=0)))


def tracking_residuals(net: NetworkState) -> tuple[float, float]:
    """Stacked distances of ``u`` and ``s`` from their network averages."""
    return _consensus_error(net.u), _consensus_error(net.s)


TRACE_COLUMNS = ("k", "state_err", "state_diff", "u_track_err", "s_track_err", "cost_gap", "grad_norm")


class TraceRow(NamedTuple):
    k: int
    state_err: float      # nan when no optimum was supplied
    state_diff: float
    u_track_err: float
    s_track_err: float
    cost_gap: float       # nan when no optimum was supplied
    grad_norm: float

    def lyapunov(self) -> np.ndarray:
        return np.array([self.state_err, self.state_diff, self.u_track_err, self.s_track_err])


@dataclass(eq=False)
class Trace:
    config: SolverConfig
    rows: list[TraceRow] = field(default_factory=list)
    final: NetworkState | None = None
    stop_reason: str = ""
    positions: list[np.ndarray] = field(default_factory=list)   # per k: (N, n_i) states
    aggregates: list[np.ndarray] = field(default_factory=list)  # per k: (N, d) trackers

    def __len__(self):
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = TRACE_COLUMNS.index(name)
        return np.array([r[idx] for r in self.rows], dtype=float)

    @property
    def iterations(self) -> int:
        return self.rows[-1].k if self.rows else 0

    def iterations_to(self, column: str, threshold: float) -> int | None:
        """First ``k`` from which ``column`` stays below ``threshold`` for the rest of the trace."""
        vals = self.column(column)
        above = np.nonzero(~(vals < threshold))[0]
        if above.size == 0:
            return int(self.rows[0].k)
        if above[-1] == len(vals) - 1:
            return None
        return int(self.rows[above[-1] + 1].k)

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(TRACE_COLUMNS)
            for r in self.rows:
                writer.writerow([r.k] + [_fmt(v) for v in r[1:]])

    def positions_to_csv(self, path: str | Path) -> None:
        if not self.positions:
            raise ValueError("trace was recorded without per-agent positions")
        n_x = self.positions[0].shape[1]
        n_u = self.aggregates[0].shape[1]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["k", "agent"] + [f"x{c}" for c in range(n_x)] + [f"u{c}" for c in range(n_u)])
            for row, xs, us in zip(self.rows, self.positions, self.aggregates):
                for i, (xi, ui) in enumerate(zip(xs, us)):
                    writer.writerow([row.k, i + 1] + [_fmt(v) for v in xi] + [_fmt(v) for v in ui])


def read_trace_csv(path: str | Path, config: SolverConfig | None = None) -> Trace:
    trace = Trace(config or SolverConfig())
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected header {header}")
        for rec in reader:
            trace.rows.append(TraceRow(int(rec[0]), *[float(v) if v else math.nan for v in rec[1:]]))
    return trace


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else format(float(v), ".17g")


def _row(net: NetworkState, spec: ProblemSpec, x_star, f_star) -> TraceRow:
    x = np.concatenate(net.x)
    u_err, s_err = tracking_residuals(net)
    if x_star is None:
        state_err = cost_gap = math.nan
    else:
        state_err = float(np.linalg.norm(x - x_star))
        cost_gap = objective(spec, net.x) - f_star
    diff = float(np.linalg.norm(x - np.concatenate(net.x_prev)))
    return TraceRow(net.iteration, state_err, diff, u_err, s_err, cost_gap, grad_norm(spec, net.x))


def run(spec: ProblemSpec, graph: CommGraph | MixingMatrix, config: SolverConfig, x0,
        x_minus1=None, optimum=None, callback: Callable[[NetworkState], None] | None = None,
        record_agents: bool = False) -> Trace:
    """Iterate until ``||grad f(x_k)|| < epsilon`` or ``k = k_max``.

    ``optimum`` is an :class:`~dagt.oracle.OracleSolution`; without it the
    state-error and cost-gap columns are left empty. Raises
    :class:`DivergenceError` (carrying the partial trace) on non-finite iterates.
    """
    A = graph if isinstance(graph, MixingMatrix) else metropolis_weights(graph)
    if A.n_agents != spec.n_agents:
        raise ValueError(f"graph has {A.n_agents} agents, problem has {spec.n_agents}")
    x_star = None if optimum is None else np.concatenate(optimum.x_star)
    f_star = None if optimum is None else optimum.f_star

    trace = Trace(config)
    net = init_network(spec, x0, x_minus1)

    def record(state):
        trace.rows.append(_row(state, spec, x_star, f_star))
        if record_agents:
            trace.positions.append(np.array(state.x))
            trace.aggregates.append(np.array(state.u))
        if callback is not None:
            callback(state)

    with np.errstate(over="ignore", invalid="ignore"):
        record(net)
        while net.iteration < config.k_max and trace.rows[-1].grad_norm >= config.epsilon:
            net = step(net, spec, A, config)
            if not all(ag.is_finite() for ag in net.agents):
                trace.final = net
                trace.stop_reason = "diverged"
                raise DivergenceError(net.iteration, trace)
            record(net)
    trace.final = net
    trace.stop_reason = "k_max" if trace.rows[-1].grad_norm >= config.epsilon else "epsilon"
    return trace


def with_variant(config: SolverConfig, variant: Variant | str) -> SolverConfig:
    return replace(config, variant=Variant.parse(str(getattr(variant, "value", variant))))
