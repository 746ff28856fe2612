"""
Directed communication graphs.

An edge (i, j) means agent i transmits to agent j. Every node carries an
implicit self-loop that is never stored in the edge set and never counted
in the out-degree.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Tuple, Union

import networkx as nx
import numpy as np


Edge = Tuple[int, int]


@dataclass(frozen=True)
class DirectedGraph:
    """Agent communication topology."""

    n_agents: int
    edges: FrozenSet[Edge]

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError(f"n_agents must be positive, got {self.n_agents}")
        for i, j in self.edges:
            if not (0 <= i < self.n_agents and 0 <= j < self.n_agents):
                raise ValueError(f"Edge ({i}, {j}) outside node range [0, {self.n_agents})")
            if i == j:
                raise ValueError(f"Self-loop ({i}, {j}) must not be listed; self-loops are implicit")

    @classmethod
    def from_edges(cls, n_agents: int, edges: Iterable[Edge]) -> "DirectedGraph":
        """
        Build a graph from an iterable of (sender, receiver) pairs.

        Raises:
            ValueError: on duplicate edges or out-of-range nodes.
        """
        edge_list = [(int(i), int(j)) for i, j in edges]
        edge_set = frozenset(edge_list)
        if len(edge_set) != len(edge_list):
            raise ValueError("Duplicate edges in edge list")
        return cls(n_agents=int(n_agents), edges=edge_set)

    def sorted_edges(self) -> List[Edge]:
        return sorted(self.edges)

    def out_neighbors(self, j: int) -> List[int]:
        return sorted(i for src, i in self.edges if src == j)

    def in_neighbors(self, i: int) -> List[int]:
        return sorted(j for j, dst in self.edges if dst == i)

    def out_degree(self, j: int) -> int:
        return sum(1 for src, _ in self.edges if src == j)

    def out_degrees(self) -> np.ndarray:
        degrees = np.zeros(self.n_agents, dtype=int)
        for j, _ in self.edges:
            degrees[j] += 1
        return degrees

    def edge_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (senders, receivers) as integer arrays in sorted edge order."""
        ordered = self.sorted_edges()
        if not ordered:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        senders, receivers = zip(*ordered)
        return np.asarray(senders, dtype=int), np.asarray(receivers, dtype=int)

    def is_symmetric(self) -> bool:
        return all((j, i) in self.edges for i, j in self.edges)

    def undirected_edges(self) -> List[Edge]:
        """Unordered pairs (i < j) of a symmetric graph."""
        return sorted((i, j) for i, j in self.edges if i < j)

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.n_agents))
        g.add_edges_from(self.edges)
        return g


def is_strongly_connected(g: DirectedGraph) -> bool:
    """True iff every node reaches every other node along directed edges."""
    if g.n_agents == 1:
        return True
    return nx.is_strongly_connected(g.to_networkx())


def is_connected_undirected(g: DirectedGraph) -> bool:
    """Connectivity of a symmetric graph, ignoring direction."""
    if g.n_agents == 1:
        return True
    return nx.is_weakly_connected(g.to_networkx())


def directed_cycle(n_agents: int) -> DirectedGraph:
    """0 -> 1 -> ... -> n-1 -> 0."""
    if n_agents == 1:
        return DirectedGraph.from_edges(1, [])
    return DirectedGraph.from_edges(n_agents, [(i, (i + 1) % n_agents) for i in range(n_agents)])


def complete(n_agents: int) -> DirectedGraph:
    return DirectedGraph.from_edges(
        n_agents, [(i, j) for i in range(n_agents) for j in range(n_agents) if i != j]
    )


def path(n_agents: int) -> DirectedGraph:
    """Undirected path 0 - 1 - ... - n-1 (both directions listed)."""
    edges = []
    for i in range(n_agents - 1):
        edges.extend([(i, i + 1), (i + 1, i)])
    return DirectedGraph.from_edges(n_agents, edges)


def star(n_agents: int, center: int = 0) -> DirectedGraph:
    """Center transmits to every other node (one-way)."""
    return DirectedGraph.from_edges(n_agents, [(center, j) for j in range(n_agents) if j != center])


def symmetrize(g: DirectedGraph) -> DirectedGraph:
    return DirectedGraph.from_edges(g.n_agents, g.edges | {(j, i) for i, j in g.edges})


def random_strongly_connected(
    n_agents: int,
    edge_prob: float = 0.3,
    seed: Optional[int] = None,
    max_attempts: int = 1000,
) -> DirectedGraph:
    """
    Sample a strongly connected Erdos-Renyi digraph.

    Resamples until strongly connected. If every attempt fails, a directed
    Hamiltonian cycle over a random permutation is added to the last sample.

    Args:
        n_agents: Number of nodes
        edge_prob: Independent probability of each ordered edge
        seed: Seed for reproducible sampling
        max_attempts: Resampling budget

    Returns:
        Strongly connected DirectedGraph
    """
    rng = np.random.default_rng(seed)
    sample = None
    for _ in range(max_attempts):
        nx_graph = nx.gnp_random_graph(n_agents, edge_prob, seed=int(rng.integers(2**31)), directed=True)
        sample = DirectedGraph.from_edges(n_agents, nx_graph.edges())
        if is_strongly_connected(sample):
            return sample
    order = rng.permutation(n_agents)
    cycle = {(int(order[k]), int(order[(k + 1) % n_agents])) for k in range(n_agents)} if n_agents > 1 else set()
    return DirectedGraph.from_edges(n_agents, sample.edges | cycle)


def random_connected_undirected(
    n_agents: int,
    edge_prob: float = 0.4,
    seed: Optional[int] = None,
    max_attempts: int = 1000,
) -> DirectedGraph:
    """Sample a connected undirected graph (stored with both edge directions)."""
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        nx_graph = nx.gnp_random_graph(n_agents, edge_prob, seed=int(rng.integers(2**31)))
        if n_agents == 1 or nx.is_connected(nx_graph):
            edges = [(int(i), int(j)) for i, j in nx_graph.edges()]
            return DirectedGraph.from_edges(n_agents, edges + [(j, i) for i, j in edges])
    raise ValueError(
        f"Could not sample a connected graph with n_agents={n_agents}, edge_prob={edge_prob} "
        f"in {max_attempts} attempts"
    )


def format_edge_list(g: DirectedGraph) -> str:
    """Edge-list text: first line N, then one 'i j' line per edge."""
    lines = [str(g.n_agents)] + [f"{i} {j}" for i, j in g.sorted_edges()]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> DirectedGraph:
    rows = [line.split() for line in text.splitlines() if line.strip()]
    if not rows:
        raise ValueError("Empty edge list")
    if len(rows[0]) != 1:
        raise ValueError(f"First line must hold the node count, got {rows[0]}")
    n_agents = int(rows[0][0])
    edges = []
    for row in rows[1:]:
        if len(row) != 2:
            raise ValueError(f"Edge line must be 'i j', got {' '.join(row)!r}")
        edges.append((int(row[0]), int(row[1])))
    return DirectedGraph.from_edges(n_agents, edges)


def save_edge_list(g: DirectedGraph, path_: Union[str, Path]) -> None:
    Path(path_).write_text(format_edge_list(g))


def load_edge_list(path_: Union[str, Path]) -> DirectedGraph:
    path_ = Path(path_)
    if not path_.exists():
        raise FileNotFoundError(f"Graph file not found at {path_}")
    return parse_edge_list(path_.read_text())
