"""
Mixing-matrix construction.

Push-sum matrices are column stochastic and indexed [receiver, sender];
Metropolis matrices are symmetric and doubly stochastic. Block matrices
aggregate K per-entry matrices into the NK x NK operator acting on the
agent-major stacked parameter vector.
"""

from typing import Dict, List, Sequence, Tuple, Union

import numpy as np

from .topology import DirectedGraph, is_strongly_connected


# Type aliases; matrices are plain numpy arrays.
WeightMatrix = np.ndarray
BlockWeightMatrix = np.ndarray

POWER_ITERATION_TOL = 1e-10
POWER_ITERATION_MAX_ITER = 10_000


def build_push_sum_weights(g: DirectedGraph) -> WeightMatrix:
    """
    Column-stochastic push-sum matrix B with b(i, j) = 1 / (1 + d_j).

    Args:
        g: Strongly connected graph

    Returns:
        N x N matrix, entry (i, j) nonzero iff j transmits to i or i == j

    Raises:
        ValueError: if g is not strongly connected
    """
    if not is_strongly_connected(g):
        raise ValueError("Push-sum weights require a strongly connected graph")
    share = 1.0 / (1.0 + g.out_degrees())
    weights = np.diag(share)
    senders, receivers = g.edge_arrays()
    weights[receivers, senders] = share[senders]
    return weights


def selection_mask(selections: Union[Sequence[int], np.ndarray], n_agents: int, n_entries: int) -> np.ndarray:
    """
    Normalize entry selections to an N x K boolean mask.

    Accepts one entry index per agent or an N x K boolean mask (several
    entries per agent).
    """
    arr = np.asarray(selections)
    if arr.ndim == 2:
        if arr.shape != (n_agents, n_entries):
            raise ValueError(f"Selection mask must have shape {(n_agents, n_entries)}, got {arr.shape}")
        return arr.astype(bool)
    if arr.shape != (n_agents,):
        raise ValueError(f"Expected one selection per agent ({n_agents}), got {arr.shape}")
    if np.any(arr < 0) or np.any(arr >= n_entries):
        bad = arr[(arr < 0) | (arr >= n_entries)]
        raise ValueError(f"Selection index out of range [0, {n_entries}): {bad.tolist()}")
    mask = np.zeros((n_agents, n_entries), dtype=bool)
    mask[np.arange(n_agents), arr.astype(int)] = True
    return mask


def entrywise_push_stack(g: DirectedGraph, mask: np.ndarray) -> np.ndarray:
    """
    Stacked per-entry push matrices, shape (K, N, N).

    For entry k, a sender j that selected k splits its mass 1/(1+d_j) to
    itself and each out-neighbor; a sender that did not select k keeps all
    of it (self-weight 1).
    """
    n_agents, n_entries = mask.shape
    share = 1.0 / (1.0 + g.out_degrees())
    stack = np.broadcast_to(np.eye(n_agents), (n_entries, n_agents, n_agents)).copy()

    agent_idx, entry_idx = np.nonzero(mask)
    stack[entry_idx, agent_idx, agent_idx] = share[agent_idx]

    senders, receivers = g.edge_arrays()
    if senders.size:
        edge_idx, edge_entry = np.nonzero(mask[senders])
        stack[edge_entry, receivers[edge_idx], senders[edge_idx]] = share[senders[edge_idx]]
    return stack


def build_entrywise_push_weights(
    g: DirectedGraph,
    selections: Union[Sequence[int], np.ndarray],
    n_entries: int,
) -> List[WeightMatrix]:
    """
    Per-entry push matrices B^0..B^{K-1} for sender-side entry selection.

    Args:
        g: Communication graph
        selections: Entry index per agent, or an N x K boolean mask
        n_entries: Number of parameter entries K

    Returns:
        List of K column-stochastic N x N matrices
    """
    mask = selection_mask(selections, g.n_agents, n_entries)
    return list(entrywise_push_stack(g, mask))


def build_metropolis_weights(g: DirectedGraph) -> WeightMatrix:
    """
    Metropolis weights w(i, j) = 1 / (1 + max(deg_i, deg_j)) on a symmetric graph.

    Isolated nodes get an identity row, so the construction also applies to
    the disconnected subgraphs used by entry-wise consensus.

    Raises:
        ValueError: if the edge set is not symmetric
    """
    if not g.is_symmetric():
        raise ValueError("Metropolis weights require a symmetric edge set")
    degrees = g.out_degrees()
    weights = np.zeros((g.n_agents, g.n_agents))
    for i, j in g.edges:
        weights[i, j] = 1.0 / (1.0 + max(degrees[i], degrees[j]))
    weights[np.diag_indices(g.n_agents)] = 1.0 - weights.sum(axis=1)
    return weights


def build_block_matrix(mats: Sequence[WeightMatrix]) -> BlockWeightMatrix:
    """
    Sum over k of C^k kron e_k e_k^T.

    Entry (i*K + k, j*K + k) equals C^k(i, j); all cross-entry positions
    are zero.
    """
    if len(mats) == 0:
        raise ValueError("Need at least one matrix")
    shapes = {np.shape(m) for m in mats}
    if len(shapes) != 1:
        raise ValueError(f"Dimension mismatch among factor matrices: {sorted(shapes)}")
    n_agents, n_cols = shapes.pop()
    if n_agents != n_cols:
        raise ValueError(f"Factor matrices must be square, got {(n_agents, n_cols)}")
    n_entries = len(mats)
    block = np.zeros((n_agents * n_entries, n_agents * n_entries))
    for k, mat in enumerate(mats):
        block[k::n_entries, k::n_entries] = mat
    return block


def spectral_norm(
    m: np.ndarray,
    tol: float = POWER_ITERATION_TOL,
    max_iter: int = POWER_ITERATION_MAX_ITER,
) -> float:
    """
    Largest eigenvalue magnitude of a symmetric nonnegative-definite matrix.

    Symmetric power iteration from a fixed pseudo-random start vector,
    stopped when the eigen-residual ||Mv - lambda v|| falls below
    tol * lambda.
    """
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"spectral_norm needs a square matrix, got shape {m.shape}")
    if not np.any(m):
        return 0.0

    v = np.random.default_rng(0).uniform(0.5, 1.5, size=m.shape[0])
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iter):
        w = m @ v
        value = float(v @ w)
        norm_w = np.linalg.norm(w)
        if norm_w == 0.0:
            return 0.0
        if np.linalg.norm(w - value * v) <= tol * abs(value):
            break
        v = w / norm_w
    return abs(value)


def consensus_quadratic_form(c: WeightMatrix) -> np.ndarray:
    """C^T (I - 11^T / N) C."""
    n_agents = c.shape[0]
    centering = np.eye(n_agents) - np.ones((n_agents, n_agents)) / n_agents
    return c.T @ centering @ c


def coordinate_edge_entries(g: DirectedGraph, proposals: np.ndarray) -> Dict[Tuple[int, int], int]:
    """
    Entry exchanged on every undirected edge: the smaller of the two
    endpoints' proposals.
    """
    return {(i, j): int(min(proposals[i], proposals[j])) for i, j in g.undirected_edges()}


def build_entrywise_consensus_weights(
    g: DirectedGraph,
    proposals: np.ndarray,
    n_entries: int,
) -> Tuple[List[WeightMatrix], np.ndarray]:
    """
    Per-entry Metropolis matrices for coordinated entry-wise consensus.

    C^k is the Metropolis matrix of the subgraph of edges that exchange
    entry k; agents outside that subgraph keep their value.

    Args:
        g: Symmetric communication graph
        proposals: Entry proposed by each agent this round
        n_entries: Number of entries K

    Returns:
        (list of K matrices, number of distinct entries each agent transmits)
    """
    if not g.is_symmetric():
        raise ValueError("Entry-wise consensus requires a symmetric edge set")
    proposals = np.asarray(proposals, dtype=int)
    if np.any(proposals < 0) or np.any(proposals >= n_entries):
        raise ValueError(f"Entry proposals out of range [0, {n_entries}): {proposals.tolist()}")

    exchanged = coordinate_edge_entries(g, proposals)
    edges_by_entry: List[List[Tuple[int, int]]] = [[] for _ in range(n_entries)]
    sent = [set() for _ in range(g.n_agents)]
    for (i, j), k in exchanged.items():
        edges_by_entry[k].extend([(i, j), (j, i)])
        sent[i].add(k)
        sent[j].add(k)

    mats = [
        build_metropolis_weights(DirectedGraph.from_edges(g.n_agents, edges))
        for edges in edges_by_entry
    ]
    return mats, np.array([len(entries) for entries in sent], dtype=int)
