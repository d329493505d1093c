"""Plain-text experiment and instance configuration.

Instance file (``[placement]`` section)::

    [placement]
    anchors  = 10 4; 1 3; 2 7; 8 10; 3 9   # one point per agent, ';'-separated
    weight   = 20                          # scalar, or one value per agent
    x0       = 2 9; 8 6; 7 3; 4 7; 8 3
    x_minus1 = 0 11; 9 8; 9 1; 1 4; 3 1     # optional

Experiment file (``[experiment]`` section, optional ``[constants]``)::

    [experiment]
    instance  = placement.ini     # relative to this file, or "canonical"
    graph     = ring5.txt         # 1-indexed edge list, relative to this file; or generator=
    generator = ring              # ring | path | complete | random
    seed      = 0
    variants  = DAGT, DAGT-HB, DAGT-NES
    alpha     = 0.005
    beta      = 0.28
    gamma     = 0.25
    epsilon   = 1e-8
    k_max     = 10000
    oracle    = true
    out       = out               # relative to the working directory

    [constants]                   # overrides derived m / L1 / L2 / L3
    L1 = 10.5
"""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .engine import SolverConfig, Variant
from .graph import CommGraph, DisconnectedGraphError, GraphError, make_graph, read_edge_list
from .problem import ProblemSpec, SmoothnessConstants, canonical_instance, derive_constants, placement_instance


class ConfigError(ValueError):
    pass


def parse_points(text: str) -> np.ndarray:
    pts = []
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if chunk:
            pts.append([float(v) for v in re.split(r"[,\s]+", chunk.strip("() ")) if v])
    if not pts or len({len(p) for p in pts}) != 1:
        raise ConfigError(f"malformed point list {text!r}")
    return np.array(pts)


def format_points(pts) -> str:
    return "; ".join(" ".join(format(float(v), ".17g") for v in p) for p in np.asarray(pts))


def _reader(path: Path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";;"))
    cp.optionxform = str
    try:
        with open(path) as fh:
            cp.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cp


def load_instance(path: str | Path) -> ProblemSpec:
    path = Path(path)
    cp = _reader(path)
    if "placement" not in cp:
        raise ConfigError(f"{path}: missing [placement] section")
    sec = cp["placement"]
    try:
        anchors = parse_points(sec["anchors"])
        weights = [float(v) for v in re.split(r"[,;\s]+", sec.get("weight", "1").strip()) if v]
        weight = weights[0] if len(weights) == 1 else weights
        x0 = parse_points(sec["x0"]) if "x0" in sec else None
        xm = parse_points(sec["x_minus1"]) if "x_minus1" in sec else None
        return placement_instance(anchors, weight, x0, xm)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_instance(spec: ProblemSpec, path: str | Path) -> None:
    inst = spec.instance
    lines = ["[placement]", f"anchors = {format_points(inst.anchors)}",
             "weight = " + " ".join(format(float(w), ".17g") for w in inst.weights)]
    if inst.x0 is not None:
        lines.append(f"x0 = {format_points(inst.x0)}")
    if inst.x_minus1 is not None:
        lines.append(f"x_minus1 = {format_points(inst.x_minus1)}")
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class ExperimentConfig:
    spec: ProblemSpec
    graph: CommGraph
    solvers: list[SolverConfig]
    out_dir: Path = Path("out")
    oracle: bool = True
    seed: int = 0
    constants_override: dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if not self.solvers:
            raise ConfigError("at least one solver configuration is required")
        if self.graph.n_agents != self.spec.n_agents:
            raise ConfigError(f"graph has {self.graph.n_agents} agents, instance has {self.spec.n_agents}")

    @property
    def x0(self):
        inst = self.spec.instance
        if inst is None or inst.x0 is None:
            return [np.zeros(n) for n in self.spec.agent_dims]
        return list(inst.x0)

    @property
    def x_minus1(self):
        inst = self.spec.instance
        return None if inst is None or inst.x_minus1 is None else list(inst.x_minus1)

    def constants(self) -> SmoothnessConstants:
        c = derive_constants(self.spec)
        if self.constants_override:
            c = dataclasses.replace(c, **self.constants_override)
        return c


def _float(sec, key, default):
    try:
        return float(sec.get(key, default))
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc


def load_experiment(path: str | Path, seed: int | None = None) -> ExperimentConfig:
    """Parse an experiment file; ``seed`` overrides the file's graph seed."""
    path = Path(path)
    cp = _reader(path)
    if "experiment" not in cp:
        raise ConfigError(f"{path}: missing [experiment] section")
    sec = cp["experiment"]
    base = path.parent

    inst_ref = sec.get("instance", "canonical").strip()
    if inst_ref == "canonical":
        spec = canonical_instance()
    else:
        inst_path = base / inst_ref
        if not inst_path.exists():
            raise ConfigError(f"instance file {inst_path} does not exist")
        spec = load_instance(inst_path)

    try:
        seed = int(sec.get("seed", "0")) if seed is None else seed
    except ValueError as exc:
        raise ConfigError(f"seed: {exc}") from exc
    try:
        if "graph" in sec:
            gpath = base / sec["graph"].strip()
            if not gpath.exists():
                raise ConfigError(f"graph file {gpath} does not exist")
            graph = read_edge_list(gpath)
        else:
            graph = make_graph(sec.get("generator", "ring").strip(), spec.n_agents, seed)
        if not graph.is_connected():
            raise DisconnectedGraphError(graph.components())
    except GraphError as exc:
        raise ConfigError(str(exc)) from exc

    names = [v for v in re.split(r"[,\s]+", sec.get("variants", "DAGT-HB")) if v]
    try:
        solvers = [SolverConfig(Variant.parse(v), alpha=_float(sec, "alpha", 0.005),
                                beta=_float(sec, "beta", 0.28), gamma=_float(sec, "gamma", 0.25),
                                epsilon=_float(sec, "epsilon", 1e-8), k_max=int(sec.get("k_max", "10000")))
                   for v in names]
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    override = {}
    if "constants" in cp:
        for key, val in cp["constants"].items():
            if key not in ("m", "L1", "L2", "L3"):
                raise ConfigError(f"unknown constant {key!r}")
            override[key] = float(val)

    cfg = ExperimentConfig(spec, graph, solvers, out_dir=Path(sec.get("out", "out").strip()),
                           oracle=sec.get("oracle", "true").strip().lower() in ("1", "true", "yes", "on"),
                           seed=seed, constants_override=override)
    try:
        cfg.constants()
    except ValueError as exc:
        raise ConfigError(f"constants: {exc}") from exc
    return cfg


def default_config_path() -> Path:
    return Path(str(resources.files("dagt") / "data" / "experiment.ini"))
