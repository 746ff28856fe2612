"""
Softmax policies over per-agent policy features.

Agent i acts with pi^i(a^i | s) proportional to exp(theta^i . x^i(s, a^i)),
where x^i is agent i's own policy feature table (independent of the
critic's features). The joint policy is the product over agents.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np


DEFAULT_THETA_MAX = 10.0


def one_hot_policy_features(n_states: int, action_size: int) -> np.ndarray:
    """Tabular features: x(s, a) = e_{s * |A^i| + a}, shape (S, A_i, S * A_i)."""
    return np.eye(n_states * action_size).reshape(n_states, action_size, n_states * action_size)


def action_probs(theta_i: np.ndarray, features_i: np.ndarray, s: int) -> np.ndarray:
    """Softmax distribution over agent i's actions at state s."""
    logits = features_i[s] @ theta_i
    logits = logits - logits.max()
    weights = np.exp(logits)
    return weights / weights.sum()


def score(theta_i: np.ndarray, features_i: np.ndarray, s: int, a_i: int) -> np.ndarray:
    """Gradient of log pi^i(a_i | s) w.r.t. theta^i: x(s, a_i) - E_pi[x(s, .)]."""
    probs = action_probs(theta_i, features_i, s)
    return features_i[s, a_i] - probs @ features_i[s]


def project(theta_i: np.ndarray, theta_max: float = DEFAULT_THETA_MAX) -> np.ndarray:
    """Euclidean projection onto the box [-theta_max, theta_max]^m (a clamp)."""
    return np.clip(theta_i, -theta_max, theta_max)


@dataclass
class PolicyParams:
    """Per-agent parameter blocks theta^i with a shared box bound."""

    blocks: List[np.ndarray]
    theta_max: float = DEFAULT_THETA_MAX

    def __post_init__(self):
        self.blocks = [np.asarray(b, dtype=float) for b in self.blocks]
        for i, block in enumerate(self.blocks):
            if np.any(np.abs(block) > self.theta_max):
                raise ValueError(f"theta^{i} leaves the box [-{self.theta_max}, {self.theta_max}]")

    @property
    def n_agents(self) -> int:
        return len(self.blocks)

    def copy(self) -> "PolicyParams":
        return PolicyParams([b.copy() for b in self.blocks], self.theta_max)

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks) if self.blocks else np.zeros(0)


class SoftmaxPolicy:
    """
    Product of per-agent softmax policies.

    Holds the policy feature tables; parameters are passed in as
    PolicyParams so one policy object serves any theta.
    """

    def __init__(self, features: Sequence[np.ndarray], theta_max: float = DEFAULT_THETA_MAX):
        self.features = [np.asarray(f, dtype=float) for f in features]
        if not self.features:
            raise ValueError("Need policy features for at least one agent")
        n_states = {f.shape[0] for f in self.features}
        if len(n_states) != 1:
            raise ValueError(f"Policy feature tables disagree on n_states: {sorted(n_states)}")
        self.n_states = n_states.pop()
        self.theta_max = theta_max

    @classmethod
    def tabular(cls, n_states: int, action_sizes: Sequence[int], theta_max: float = DEFAULT_THETA_MAX) -> "SoftmaxPolicy":
        return cls([one_hot_policy_features(n_states, a) for a in action_sizes], theta_max)

    @property
    def n_agents(self) -> int:
        return len(self.features)

    @property
    def action_sizes(self) -> List[int]:
        return [f.shape[1] for f in self.features]

    @property
    def param_sizes(self) -> List[int]:
        return [f.shape[2] for f in self.features]

    def zeros(self) -> PolicyParams:
        return PolicyParams([np.zeros(m) for m in self.param_sizes], self.theta_max)

    def random(self, seed: Optional[int] = None, scale: float = 1.0) -> PolicyParams:
        """Uniform [-scale, scale] parameters, clamped to the box."""
        rng = np.random.default_rng(seed)
        return PolicyParams(
            [project(rng.uniform(-scale, scale, size=m), self.theta_max) for m in self.param_sizes],
            self.theta_max,
        )

    def action_probs(self, params: PolicyParams, i: int, s: int) -> np.ndarray:
        return action_probs(params.blocks[i], self.features[i], s)

    def agent_table(self, params: PolicyParams, i: int) -> np.ndarray:
        """(S, A_i) table of pi^i(a^i | s)."""
        logits = self.features[i] @ params.blocks[i]
        logits = logits - logits.max(axis=1, keepdims=True)
        weights = np.exp(logits)
        return weights / weights.sum(axis=1, keepdims=True)

    def joint_table(self, params: PolicyParams) -> np.ndarray:
        """(S, |A|) table of pi_theta(s, a), joint actions in row-major order."""
        table = self.agent_table(params, 0)
        for i in range(1, self.n_agents):
            agent = self.agent_table(params, i)
            table = (table[:, :, None] * agent[:, None, :]).reshape(self.n_states, -1)
        return table

    def joint_prob(self, params: PolicyParams, s: int, actions: Sequence[int]) -> float:
        return joint_prob(self, params, s, actions)

    def sample_actions(self, params: PolicyParams, s: int, rng: np.random.Generator) -> np.ndarray:
        """Per-agent actions by inverse CDF, one uniform draw per agent."""
        u = rng.random(self.n_agents)
        actions = np.empty(self.n_agents, dtype=int)
        for i in range(self.n_agents):
            cdf = np.cumsum(self.action_probs(params, i, s))
            actions[i] = min(int(np.searchsorted(cdf, u[i], side="right")), len(cdf) - 1)
        return actions

    def score(self, params: PolicyParams, i: int, s: int, a_i: int) -> np.ndarray:
        return score(params.blocks[i], self.features[i], s, a_i)

    def project(self, params: PolicyParams) -> PolicyParams:
        return PolicyParams([project(b, self.theta_max) for b in params.blocks], self.theta_max)


def joint_prob(policy: SoftmaxPolicy, params: PolicyParams, s: int, actions: Sequence[int]) -> float:
    """pi_theta(s, a) = prod_i pi^i(a^i | s)."""
    prob = 1.0
    for i, a_i in enumerate(actions):
        prob *= float(policy.action_probs(params, i, s)[a_i])
    return prob


def format_params(params: PolicyParams) -> str:
    """Flat decimal vectors per agent, each preceded by an 'agent i m_i' index line."""
    lines = ["# policy-params", f"theta_max {params.theta_max:.17g}"]
    for i, block in enumerate(params.blocks):
        lines.append(f"agent {i} {block.size}")
        lines.append(" ".join(f"{x:.17g}" for x in block))
    return "\n".join(lines) + "\n"


def parse_params(text: str) -> PolicyParams:
    lines = [line.rstrip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    theta_max = float(lines[0].split()[1])
    blocks = []
    idx = 1
    while idx < len(lines):
        _, _, size = lines[idx].split()
        values = lines[idx + 1].split() if int(size) > 0 and idx + 1 < len(lines) else []
        blocks.append(np.array([float(x) for x in values]))
        idx += 2 if int(size) > 0 else 1
    return PolicyParams(blocks, theta_max)


def save_params(params: PolicyParams, path: Union[str, Path]) -> None:
    Path(path).write_text(format_params(params))


def load_params(path: Union[str, Path]) -> PolicyParams:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Policy parameter file not found at {path}")
    return parse_params(path.read_text())
