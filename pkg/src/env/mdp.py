"""
Finite networked multi-agent MDPs.

All agents observe the global state, each picks its own action, and each
receives a private reward. Joint actions are encoded as a single index in
row-major (agent 0 most significant) order over the per-agent action sizes.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union
import warnings

import networkx as nx
import numpy as np


PROB_TOL = 1e-12
APERIODIC_SELF_LOOP = 0.01


@dataclass(eq=False)
class NetworkedMDP:
    """
    Finite MDP with a global state, per-agent actions and per-agent rewards.

    Attributes:
        n_states: |S|
        action_sizes: |A^i| per agent
        transition: P[s, a, s'] over joint actions a
        rewards: R[i, s, a], deterministic given (s, a)
        reward_noise: half-width of optional additive uniform reward noise
    """

    n_states: int
    action_sizes: Tuple[int, ...]
    transition: np.ndarray
    rewards: np.ndarray
    reward_noise: float = 0.0
    _cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.action_sizes = tuple(int(a) for a in self.action_sizes)
        self.transition = np.asarray(self.transition, dtype=float)
        self.rewards = np.asarray(self.rewards, dtype=float)
        errors = validate_mdp_tables(self.n_states, self.action_sizes, self.transition, self.rewards)
        if errors:
            raise ValueError("Invalid MDP: " + "; ".join(errors))
        if self.reward_noise < 0:
            raise ValueError(f"reward_noise must be nonnegative, got {self.reward_noise}")
        self._cdf = np.cumsum(self.transition, axis=2)

    @property
    def n_agents(self) -> int:
        return len(self.action_sizes)

    @property
    def n_joint_actions(self) -> int:
        return int(np.prod(self.action_sizes))

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.rewards))) + self.reward_noise

    @property
    def mean_reward(self) -> np.ndarray:
        """Team-average reward table R_bar[s, a] = mean_i R^i(s, a)."""
        return self.rewards.mean(axis=0)

    def joint_actions(self) -> np.ndarray:
        """(|A|, N) table of per-agent actions for every joint index."""
        return np.stack(np.unravel_index(np.arange(self.n_joint_actions), self.action_sizes), axis=1)

    def joint_index(self, actions: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(int(a) for a in actions), self.action_sizes))

    def split_action(self, a: int) -> Tuple[int, ...]:
        return tuple(int(x) for x in np.unravel_index(int(a), self.action_sizes))

    def swap_tables(self) -> List[np.ndarray]:
        """
        Per agent i, an (|A|, |A^i|) table whose entry [a, b] is the joint
        index of a with agent i's action replaced by b.
        """
        table = self.joint_actions()
        swaps = []
        for i, size in enumerate(self.action_sizes):
            variants = np.repeat(table[:, None, :], size, axis=1)
            variants[:, :, i] = np.arange(size)[None, :]
            swaps.append(np.ravel_multi_index(tuple(np.moveaxis(variants, 2, 0)), self.action_sizes))
        return swaps


@dataclass
class TransitionSample:
    """One environment step (s_t, a_t, s_{t+1}, r_{t+1})."""

    state: int
    joint_action: int
    next_state: int
    rewards: np.ndarray


def validate_mdp_tables(
    n_states: int,
    action_sizes: Sequence[int],
    transition: np.ndarray,
    rewards: np.ndarray,
) -> List[str]:
    """
    Validate MDP tables.

    Returns:
        List of validation error messages (empty if valid)
    """
    errors = []
    if n_states < 1:
        errors.append(f"n_states must be positive, got {n_states}")
    if len(action_sizes) < 1 or any(a < 1 for a in action_sizes):
        errors.append(f"action sizes must be positive, got {list(action_sizes)}")
    if errors:
        return errors

    n_joint = int(np.prod(action_sizes))
    if transition.shape != (n_states, n_joint, n_states):
        errors.append(f"transition shape {transition.shape} != {(n_states, n_joint, n_states)}")
    if rewards.shape != (len(action_sizes), n_states, n_joint):
        errors.append(f"rewards shape {rewards.shape} != {(len(action_sizes), n_states, n_joint)}")
    if errors:
        return errors

    if np.any(transition < 0):
        errors.append("transition has negative entries")
    row_dev = np.max(np.abs(transition.sum(axis=2) - 1.0))
    if row_dev > PROB_TOL:
        errors.append(f"transition rows do not sum to 1 (max deviation {row_dev:.3e})")
    if not np.all(np.isfinite(rewards)):
        errors.append("rewards must be finite")
    return errors


def step(mdp: NetworkedMDP, s: int, joint_action: int, rng: np.random.Generator) -> TransitionSample:
    """
    Sample s' ~ P(. | s, a) and return the agents' rewards R^i(s, a).

    Raises:
        ValueError: if s or joint_action is out of range
    """
    if not 0 <= s < mdp.n_states:
        raise ValueError(f"State {s} out of range [0, {mdp.n_states})")
    if not 0 <= joint_action < mdp.n_joint_actions:
        raise ValueError(f"Joint action {joint_action} out of range [0, {mdp.n_joint_actions})")
    next_state = int(np.searchsorted(mdp._cdf[s, joint_action], rng.random(), side="right"))
    next_state = min(next_state, mdp.n_states - 1)
    rewards = mdp.rewards[:, s, joint_action].copy()
    if mdp.reward_noise > 0:
        rewards += rng.uniform(-mdp.reward_noise, mdp.reward_noise, size=mdp.n_agents)
    return TransitionSample(state=s, joint_action=joint_action, next_state=next_state, rewards=rewards)


def induced_chain(mdp: NetworkedMDP, policy_table: np.ndarray) -> np.ndarray:
    """
    State chain P_theta(s' | s) = sum_a pi(s, a) P(s' | s, a).

    Args:
        mdp: The MDP
        policy_table: (|S|, |A|) joint-action distribution per state
    """
    return np.einsum("sa,sat->st", policy_table, mdp.transition)


def support_graph(chain: np.ndarray) -> nx.DiGraph:
    """Directed graph with an edge s -> s' wherever P(s' | s) > 0 (self-loops kept)."""
    return nx.from_numpy_array((np.asarray(chain) > 0).astype(int), create_using=nx.DiGraph)


def is_irreducible(chain: np.ndarray) -> bool:
    """Single communicating class over the positive entries."""
    return nx.is_strongly_connected(support_graph(chain))


def is_primitive(chain: np.ndarray) -> bool:
    """Irreducible and aperiodic."""
    g = support_graph(chain)
    return nx.is_strongly_connected(g) and nx.is_aperiodic(g)


def validate_ergodicity(mdp: NetworkedMDP, policy_table: np.ndarray) -> bool:
    """True iff the induced chain is irreducible and aperiodic."""
    chain = induced_chain(mdp, policy_table)
    return is_irreducible(chain) and is_primitive(chain)


def uniform_policy_table(mdp: NetworkedMDP) -> np.ndarray:
    return np.full((mdp.n_states, mdp.n_joint_actions), 1.0 / mdp.n_joint_actions)


def generate_garnet(
    n_states: int,
    action_sizes: Sequence[int],
    branching: int,
    reward_scale: float,
    seed: Optional[int] = None,
    reward_noise: float = 0.0,
    max_attempts: int = 200,
) -> NetworkedMDP:
    """
    Generate a random Garnet MDP that is ergodic under the uniform policy.

    Each (s, a) moves to `branching` distinct uniformly chosen successors
    with Dirichlet(1) probabilities; rewards are i.i.d. uniform on
    [0, reward_scale]. Irreducibility is obtained by resampling; a
    periodic chain gets a small self-transition mass on every state.

    Args:
        n_states: Number of states
        action_sizes: Per-agent action counts
        branching: Successors per (s, a)
        reward_scale: Upper end of the reward range
        seed: Seed for reproducibility
        reward_noise: Half-width of additive reward noise used by step()
        max_attempts: Resampling budget for irreducibility

    Returns:
        NetworkedMDP
    """
    action_sizes = tuple(int(a) for a in action_sizes)
    if n_states < 1 or not action_sizes or any(a < 1 for a in action_sizes):
        raise ValueError(f"Infeasible sizes: n_states={n_states}, action_sizes={list(action_sizes)}")
    if not 1 <= branching <= n_states:
        raise ValueError(f"branching must be in [1, n_states={n_states}], got {branching}")
    if reward_scale <= 0:
        raise ValueError(f"reward_scale must be positive, got {reward_scale}")

    rng = np.random.default_rng(seed)
    n_joint = int(np.prod(action_sizes))
    uniform = np.full((n_states, n_joint), 1.0 / n_joint)

    transition = None
    for _ in range(max_attempts):
        transition = np.zeros((n_states, n_joint, n_states))
        for s in range(n_states):
            for a in range(n_joint):
                successors = rng.choice(n_states, size=branching, replace=False)
                probs = rng.dirichlet(np.ones(branching))
                transition[s, a, successors] = probs / probs.sum()
        if is_irreducible(np.einsum("sa,sat->st", uniform, transition)):
            break
    else:
        warnings.warn(
            f"Garnet resampling did not yield an irreducible chain in {max_attempts} attempts; "
            f"mixing in {APERIODIC_SELF_LOOP} mass along a state cycle"
        )
        cycle = np.roll(np.eye(n_states), 1, axis=1)
        transition = (1 - APERIODIC_SELF_LOOP) * transition + APERIODIC_SELF_LOOP * cycle[:, None, :]

    if not is_primitive(np.einsum("sa,sat->st", uniform, transition)):
        transition = (1 - APERIODIC_SELF_LOOP) * transition + APERIODIC_SELF_LOOP * np.eye(n_states)[:, None, :]

    transition /= transition.sum(axis=2, keepdims=True)
    rewards = rng.uniform(0.0, reward_scale, size=(len(action_sizes), n_states, n_joint))
    return NetworkedMDP(
        n_states=n_states,
        action_sizes=action_sizes,
        transition=transition,
        rewards=rewards,
        reward_noise=reward_noise,
    )


def format_mdp(mdp: NetworkedMDP) -> str:
    """Structured text: dimension header, then row-major tables at 17 significant digits."""
    lines = [
        "# networked-mdp",
        f"n_states {mdp.n_states}",
        "action_sizes " + " ".join(str(a) for a in mdp.action_sizes),
        f"reward_noise {mdp.reward_noise:.17g}",
        "transition",
    ]
    for row in mdp.transition.reshape(-1, mdp.n_states):
        lines.append(" ".join(f"{x:.17g}" for x in row))
    lines.append("rewards")
    for row in mdp.rewards.reshape(-1, mdp.n_joint_actions):
        lines.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def parse_mdp(text: str) -> NetworkedMDP:
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    header = {}
    idx = 0
    while lines[idx] != "transition":
        key, *values = lines[idx].split()
        header[key] = values
        idx += 1
    n_states = int(header["n_states"][0])
    action_sizes = tuple(int(a) for a in header["action_sizes"])
    reward_noise = float(header.get("reward_noise", ["0"])[0])
    n_joint = int(np.prod(action_sizes))

    t_start = idx + 1
    t_rows = lines[t_start:t_start + n_states * n_joint]
    r_start = t_start + n_states * n_joint
    if lines[r_start] != "rewards":
        raise ValueError(f"Expected 'rewards' section, got {lines[r_start]!r}")
    r_rows = lines[r_start + 1:r_start + 1 + len(action_sizes) * n_states]

    transition = np.array([[float(x) for x in row.split()] for row in t_rows]).reshape(n_states, n_joint, n_states)
    rewards = np.array([[float(x) for x in row.split()] for row in r_rows]).reshape(len(action_sizes), n_states, n_joint)
    return NetworkedMDP(
        n_states=n_states,
        action_sizes=action_sizes,
        transition=transition,
        rewards=rewards,
        reward_noise=reward_noise,
    )


def save_mdp(mdp: NetworkedMDP, path: Union[str, Path]) -> None:
    Path(path).write_text(format_mdp(mdp))


def load_mdp(path: Union[str, Path]) -> NetworkedMDP:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"MDP file not found at {path}")
    return parse_mdp(path.read_text())
