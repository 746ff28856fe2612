"""
Experiment configuration.

An experiment file is YAML with the sections mdp, graph, features, policy,
run, output and (optionally) validate and consensus. Each input section
either points at a serialized artifact with `path` or asks for an inline
generator with `kind`. Relative paths resolve against the config file.

Defaults for the output directory and the worker pool size may come from
a .env file at the project root (PSAC_OUTPUT_DIR, PSAC_N_JOBS).
"""

import os
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import yaml
from dotenv import load_dotenv

from ..algo.config import RunConfig
from ..env.features import FeatureMap, generate_features, load_features
from ..env.mdp import NetworkedMDP, generate_garnet, load_mdp
from ..graph import topology
from ..graph.topology import DirectedGraph, load_edge_list
from ..policy.softmax import DEFAULT_THETA_MAX, PolicyParams, SoftmaxPolicy, load_params

# Load environment variables from project root
project_root = Path(__file__).parent.parent.parent
load_dotenv(project_root / ".env")

DEFAULT_OUTPUT_DIR = "results"
SECTIONS = ("mdp", "graph", "features", "policy", "run", "output", "validate", "consensus")
RUN_FIELDS = {f.name for f in fields(RunConfig)}

GRAPH_KINDS = {
    "cycle": lambda n, spec: topology.directed_cycle(n),
    "complete": lambda n, spec: topology.complete(n),
    "path": lambda n, spec: topology.path(n),
    "star": lambda n, spec: topology.star(n, center=int(spec.get("center", 0))),
    "random-digraph": lambda n, spec: topology.random_strongly_connected(
        n, edge_prob=float(spec.get("edge_prob", 0.3)), seed=spec.get("seed")
    ),
    "random-undirected": lambda n, spec: topology.random_connected_undirected(
        n, edge_prob=float(spec.get("edge_prob", 0.4)), seed=spec.get("seed")
    ),
}


@dataclass
class ExperimentConfig:
    """Parsed experiment file plus resolved output settings."""

    mdp: Dict[str, Any]
    graph: Dict[str, Any]
    features: Dict[str, Any]
    policy: Dict[str, Any]
    run: RunConfig
    output_dir: Path
    n_seeds: int = 1
    master_seed: int = 0
    n_jobs: int = 1
    attach_oracle: bool = False
    validate: Dict[str, Any] = field(default_factory=dict)
    consensus: Dict[str, Any] = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    def _resolve(self, path_value: Union[str, Path]) -> Path:
        path_ = Path(path_value)
        return path_ if path_.is_absolute() else self.base_dir / path_

    def build_mdp(self) -> NetworkedMDP:
        spec = self.mdp
        if "path" in spec:
            return load_mdp(self._resolve(spec["path"]))
        kind = spec.get("kind", "garnet")
        if kind != "garnet":
            raise ValueError(f"Unknown mdp kind {kind!r}; valid kinds: garnet")
        return generate_garnet(
            n_states=int(spec["n_states"]),
            action_sizes=[int(a) for a in spec["action_sizes"]],
            branching=int(spec.get("branching", min(3, int(spec["n_states"])))),
            reward_scale=float(spec.get("reward_scale", 1.0)),
            seed=spec.get("seed"),
            reward_noise=float(spec.get("reward_noise", 0.0)),
        )

    def build_graph(self, n_agents: Optional[int] = None) -> DirectedGraph:
        spec = self.graph
        if "path" in spec:
            return load_edge_list(self._resolve(spec["path"]))
        n = spec.get("n_agents", n_agents)
        if n is None:
            raise ValueError("graph.n_agents is required when no MDP fixes the number of agents")
        kind = spec.get("kind", "cycle")
        if kind not in GRAPH_KINDS:
            raise ValueError(f"Unknown graph kind {kind!r}; valid kinds: {', '.join(GRAPH_KINDS)}")
        graph = GRAPH_KINDS[kind](int(n), spec)
        return topology.symmetrize(graph) if spec.get("symmetrize", False) else graph

    def build_features(self, mdp: NetworkedMDP) -> FeatureMap:
        spec = self.features
        if "path" in spec:
            return load_features(self._resolve(spec["path"]))
        kind = spec.get("kind", "random")
        if kind != "random":
            raise ValueError(f"Unknown features kind {kind!r}; valid kinds: random")
        return generate_features(mdp, int(spec["n_features"]), seed=spec.get("seed"))

    def build_policy(self, mdp: NetworkedMDP) -> Tuple[SoftmaxPolicy, PolicyParams]:
        spec = self.policy
        theta_max = float(spec.get("theta_max", DEFAULT_THETA_MAX))
        policy = SoftmaxPolicy.tabular(mdp.n_states, mdp.action_sizes, theta_max)
        if "path" in spec:
            return policy, load_params(self._resolve(spec["path"]))
        kind = spec.get("kind", "zeros")
        if kind == "zeros":
            return policy, policy.zeros()
        if kind == "random":
            return policy, policy.random(seed=spec.get("seed"), scale=float(spec.get("scale", 1.0)))
        raise ValueError(f"Unknown policy kind {kind!r}; valid kinds: zeros, random")

    def instance_seeds(self) -> list:
        """Per-instance run seeds derived from the master seed."""
        children = np.random.SeedSequence(self.master_seed).spawn(self.n_seeds)
        return [int(child.generate_state(1)[0]) for child in children]


def _run_config(section: Dict[str, Any]) -> Tuple[RunConfig, bool]:
    section = dict(section)
    attach_oracle = bool(section.pop("oracle", False))
    for key in list(section):
        if key not in RUN_FIELDS:
            warnings.warn(f"Ignoring unknown run key {key!r}")
            section.pop(key)
    if section.get("selection_probs") is not None:
        section["selection_probs"] = np.asarray(section["selection_probs"], dtype=float)
    return RunConfig(**section), attach_oracle


def parse_experiment_config(data: Optional[Dict[str, Any]], base_dir: Optional[Path] = None) -> ExperimentConfig:
    """
    Build an ExperimentConfig from a parsed YAML mapping.

    Precedence for output_dir and n_jobs: config value, then environment,
    then built-in default. Command-line overrides are applied by the CLI.
    """
    data = data or {}
    if not isinstance(data, dict):
        raise ValueError("Experiment config must be a mapping of sections")
    for key in data:
        if key not in SECTIONS:
            warnings.warn(f"Ignoring unknown config section {key!r}")

    run, attach_oracle = _run_config(data.get("run") or {})
    output = data.get("output") or {}
    output_dir = output.get("dir") or os.getenv("PSAC_OUTPUT_DIR") or DEFAULT_OUTPUT_DIR
    n_jobs = int(output.get("n_jobs") or os.getenv("PSAC_N_JOBS") or 1)
    config = ExperimentConfig(
        mdp=data.get("mdp") or {},
        graph=data.get("graph") or {},
        features=data.get("features") or {},
        policy=data.get("policy") or {},
        run=run,
        output_dir=Path(output_dir),
        n_seeds=int(output.get("seeds", 1)),
        master_seed=int(output.get("master_seed", 0)),
        n_jobs=n_jobs,
        attach_oracle=attach_oracle,
        validate=data.get("validate") or {},
        consensus=data.get("consensus") or {},
        base_dir=base_dir or Path.cwd(),
    )
    if config.n_seeds < 1:
        raise ValueError(f"output.seeds must be at least 1, got {config.n_seeds}")
    return config


def load_experiment_config(path_: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment config from YAML.

    Raises:
        FileNotFoundError: if the file does not exist
        ValueError: if the file is not valid YAML or has invalid values
    """
    path_ = Path(path_)
    if not path_.exists():
        raise FileNotFoundError(f"Config file not found at {path_}")
    try:
        data = yaml.safe_load(path_.read_text())
    except yaml.YAMLError as e:
        raise ValueError(f"Could not parse {path_}: {e}") from e
    return parse_experiment_config(data, base_dir=path_.parent)
