"""Communication graphs and doubly-stochastic mixing matrices.

Agents are indexed from 0 inside the library. The plain-text edge-list
format used on disk is 1-indexed (first line ``N``, then one ``i j`` pair
per line) and is converted on read/write.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

STOCHASTIC_TOL = 1e-12


class GraphError(ValueError):
    """Invalid graph description (bad endpoints, self-loops, duplicates)."""


class DisconnectedGraphError(GraphError):
    def __init__(self, components: list[list[int]]):
        self.components = components
        listing = "; ".join("{" + ", ".join(str(i + 1) for i in c) + "}" for c in components)
        super().__init__(f"graph is disconnected; components (1-indexed): {listing}")


@dataclass(frozen=True)
class CommGraph:
    """Undirected communication graph on agents ``0..n_agents-1``.

    Edges are stored as sorted pairs ``(i, j)`` with ``i < j``. Self-weights
    live in the mixing matrix, so self-loops are rejected here.
    """

    n_agents: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.n_agents < 1:
            raise GraphError("n_agents must be positive")
        for i, j in self.edges:
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise GraphError(f"edge ({i}, {j}) has an endpoint outside 0..{self.n_agents - 1}")
            if i >= j:
                raise GraphError(f"edge ({i}, {j}) is not normalised as i < j")

    @classmethod
    def from_edges(cls, n_agents: int, edges: Iterable[tuple[int, int]]) -> "CommGraph":
        seen = set()
        for i, j in edges:
            i, j = int(i), int(j)
            if i == j:
                raise GraphError(f"self-loop on agent {i} (self-weights are implicit)")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise GraphError(f"duplicate edge {key}")
            seen.add(key)
        return cls(n_agents, frozenset(seen))

    def neighbors(self, i: int) -> list[int]:
        return sorted([b for a, b in self.edges if a == i] + [a for a, b in self.edges if b == i])

    def degree(self, i: int) -> int:
        return sum(1 for a, b in self.edges if i in (a, b))

    def adjacency(self) -> np.ndarray:
        adj = np.zeros((self.n_agents, self.n_agents))
        for i, j in self.edges:
            adj[i, j] = adj[j, i] = 1.0
        return adj

    def components(self) -> list[list[int]]:
        adj = {i: self.neighbors(i) for i in range(self.n_agents)}
        unseen = set(range(self.n_agents))
        comps = []
        while unseen:
            root = min(unseen)
            comp, queue = [], deque([root])
            unseen.discard(root)
            while queue:
                v = queue.popleft()
                comp.append(v)
                for w in adj[v]:
                    if w in unseen:
                        unseen.discard(w)
                        queue.append(w)
            comps.append(sorted(comp))
        return comps

    def is_connected(self) -> bool:
        return len(self.components()) == 1


def ring(n: int) -> CommGraph:
    if n == 1:
        return CommGraph(1)
    if n == 2:
        return CommGraph.from_edges(2, [(0, 1)])
    return CommGraph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def path(n: int) -> CommGraph:
    return CommGraph.from_edges(n, [(i, i + 1) for i in range(n - 1)])


def complete(n: int) -> CommGraph:
    return CommGraph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def random_connected(n: int, p: float = 0.5, seed: int = 0) -> CommGraph:
    """Erdos-Renyi graph on top of a random spanning tree, so always connected."""
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        edges.add((min(a, b), max(a, b)))
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < p:
                edges.add((i, j))
    return CommGraph.from_edges(n, sorted(edges))


GENERATORS = {"ring": ring, "path": path, "complete": complete}


def make_graph(name: str, n: int, seed: int = 0) -> CommGraph:
    if name == "random":
        return random_connected(n, seed=seed)
    try:
        return GENERATORS[name](n)
    except KeyError:
        raise GraphError(f"unknown graph generator {name!r}") from None


def read_edge_list(path_: str | Path) -> CommGraph:
    lines = [ln.split("#", 1)[0].strip() for ln in Path(path_).read_text().splitlines()]
    lines = [ln for ln in lines if ln]
    if not lines:
        raise GraphError(f"{path_}: empty edge list")
    n = int(lines[0])
    edges = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 2:
            raise GraphError(f"{path_}: malformed edge line {ln!r}")
        i, j = int(parts[0]), int(parts[1])
        if not (1 <= i <= n and 1 <= j <= n):
            raise GraphError(f"{path_}: edge ({i}, {j}) outside 1..{n}")
        edges.append((i - 1, j - 1))
    return CommGraph.from_edges(n, edges)


def write_edge_list(g: CommGraph, path_: str | Path) -> None:
    rows = [str(g.n_agents)] + [f"{i + 1} {j + 1}" for i, j in sorted(g.edges)]
    Path(path_).write_text("\n".join(rows) + "\n")


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """Doubly-stochastic weight matrix ``A`` on a graph, with its contraction factor."""

    entries: np.ndarray
    contraction: float
    graph: CommGraph

    @property
    def n_agents(self) -> int:
        return self.entries.shape[0]

    def in_neighbors(self, i: int) -> list[int]:
        """Agents ``j`` (including ``i``) with ``a_ij > 0``, in increasing order."""
        return [j for j in range(self.n_agents) if self.entries[i, j] > 0.0]

    def to_csv(self, path_: str | Path) -> None:
        with open(path_, "w", newline="") as fh:
            writer = csv.writer(fh)
            for row in self.entries:
                writer.writerow([format(v, ".17g") for v in row])


def metropolis_weights(g: CommGraph) -> MixingMatrix:
    """Metropolis-Hastings weights ``a_ij = 1 / (1 + max(d_i, d_j))``."""
    comps = g.components()
    if len(comps) > 1:
        raise DisconnectedGraphError(comps)
    n = g.n_agents
    deg = [g.degree(i) for i in range(n)]
    a = np.zeros((n, n))
    for i, j in g.edges:
        a[i, j] = a[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    for i in range(n):
        a[i, i] = 1.0 - (a[i].sum() - a[i, i])
    return MixingMatrix(a, contraction_factor(a), g)


@dataclass
class MixingReport:
    checks: dict[str, bool]
    details: dict[str, float]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]


def validate_mixing(a, g: CommGraph, tol: float = STOCHASTIC_TOL) -> MixingReport:
    """Check a candidate weight matrix against the graph. Never raises on failures."""
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] != g.n_agents:
        raise ValueError(f"matrix shape {a.shape} does not match {g.n_agents} agents")
    row_dev = float(np.max(np.abs(a.sum(axis=1) - 1.0)))
    col_dev = float(np.max(np.abs(a.sum(axis=0) - 1.0)))
    allowed = g.adjacency() + np.eye(g.n_agents)
    pattern_bad = np.logical_and(a != 0.0, allowed == 0.0)
    checks = {
        "row_sums": row_dev <= tol,
        "column_sums": col_dev <= tol,
        "nonnegative": bool(np.all(a >= 0.0)),
        "sparsity_pattern": not bool(pattern_bad.any()),
        "symmetric": bool(np.allclose(a, a.T, rtol=0.0, atol=tol)),
        "connected": g.is_connected(),
    }
    details = {"max_row_sum_dev": row_dev, "max_col_sum_dev": col_dev,
               "min_entry": float(a.min())}
    return MixingReport(checks, details)


def contraction_factor(a) -> float:
    """Operator 2-norm of ``A - (1/N) 11^T``."""
    a = np.asarray(a, dtype=float)
    n = a.shape[0]
    if (np.max(np.abs(a.sum(axis=1) - 1.0)) > STOCHASTIC_TOL
            or np.max(np.abs(a.sum(axis=0) - 1.0)) > STOCHASTIC_TOL):
        raise ValueError("contraction factor needs a doubly-stochastic matrix")
    return float(np.linalg.norm(a - np.full((n, n), 1.0 / n), 2))
