"""
Single communication rounds of the decentralized critic and the actor step.

Each critic round runs the local TD half-step (mu update and omega tilde)
followed by one mixing step. The push-sum variants also mix the weights y
and refresh z = omega / y; the consensus baselines mix omega directly and
use z = omega.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from ..critic.linear import NetworkCriticState, local_advantage_sample, mu_update, td_error
from ..env.features import FeatureMap
from ..env.mdp import TransitionSample
from ..policy.softmax import PolicyParams, SoftmaxPolicy, project


@dataclass
class TDInput:
    """Feature rows and rewards one TD half-step needs."""

    phi_cur: np.ndarray
    phi_next: np.ndarray
    rewards: np.ndarray

    @classmethod
    def from_sample(cls, sample: TransitionSample, next_action: int, features: FeatureMap) -> "TDInput":
        return cls(
            phi_cur=features.phi[sample.state, sample.joint_action],
            phi_next=features.phi[sample.next_state, next_action],
            rewards=sample.rewards,
        )


def network_average(stacked: np.ndarray) -> np.ndarray:
    """Mean across agents of an (N, K) array."""
    return np.mean(stacked, axis=0)


def sample_selections(probs: np.ndarray, rng: np.random.Generator, entries_per_round: int = 1) -> np.ndarray:
    """
    Draw each agent's transmitted entries for one round.

    Args:
        probs: (N, K) selection probabilities p^{ik}
        rng: Communication stream
        entries_per_round: Distinct entries per agent (without replacement)

    Returns:
        (N,) entry indices when entries_per_round == 1, else an (N, K) mask
    """
    n_agents, n_entries = probs.shape
    if entries_per_round == 1:
        cdf = np.cumsum(probs, axis=1)
        u = rng.random(n_agents)
        picks = np.sum(cdf <= u[:, None], axis=1)
        return np.minimum(picks, n_entries - 1)

    mask = np.zeros((n_agents, n_entries), dtype=bool)
    for i in range(n_agents):
        chosen = rng.choice(n_entries, size=entries_per_round, replace=False, p=probs[i])
        mask[i, chosen] = True
    return mask


def _td_half_step(
    states: NetworkCriticState,
    td: Optional[TDInput],
    beta_omega: float,
    estimate: np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Return (omega tilde, mu_{t+1}); TD errors use mu_t and the given estimate."""
    if beta_omega == 0.0:
        return states.omega.copy(), states.mu.copy()
    if td is None:
        raise ValueError("A TD input is required when beta_omega > 0")
    q_cur = estimate @ td.phi_cur
    q_next = estimate @ td.phi_next
    delta = td_error(td.rewards, states.mu, q_next, q_cur)
    omega_tilde = states.omega + beta_omega * delta[:, None] * td.phi_cur[None, :]
    return omega_tilde, mu_update(states.mu, td.rewards, beta_omega)


def critic_round_push_entrywise(
    states: NetworkCriticState,
    weights: Union[np.ndarray, Sequence[np.ndarray]],
    beta_omega: float,
    td: Optional[TDInput] = None,
    entries_sent: int = 1,
) -> Tuple[NetworkCriticState, np.ndarray]:
    """
    Push-sum round with a separate column-stochastic matrix B^k per entry.

    Args:
        states: Current critic states
        weights: B^0..B^{K-1} as a list or a (K, N, N) stack
        beta_omega: Critic stepsize (0 freezes learning)
        td: TD input for this round
        entries_sent: Entries each agent transmitted this round

    Returns:
        (new states, scalars sent per agent)
    """
    stack = np.asarray(weights)
    omega_tilde, mu_next = _td_half_step(states, td, beta_omega, states.z)
    new = NetworkCriticState(
        omega=np.einsum("kij,jk->ik", stack, omega_tilde),
        y=np.einsum("kij,jk->ik", stack, states.y),
        z=states.z,
        mu=mu_next,
    )
    new.refresh_ratio()
    return new, np.full(states.n_agents, 2 * entries_sent, dtype=int)


def critic_round_push_full(
    states: NetworkCriticState,
    weights: np.ndarray,
    beta_omega: float,
    td: Optional[TDInput] = None,
) -> Tuple[NetworkCriticState, np.ndarray]:
    """Push-sum round mixing the whole vector with one matrix B; K + 1 scalars per agent."""
    omega_tilde, mu_next = _td_half_step(states, td, beta_omega, states.z)
    new = NetworkCriticState(
        omega=weights @ omega_tilde,
        y=weights @ states.y,
        z=states.z,
        mu=mu_next,
    )
    new.refresh_ratio()
    return new, np.full(states.n_agents, states.n_features + 1, dtype=int)


def critic_round_consensus_entrywise(
    states: NetworkCriticState,
    weights: Union[np.ndarray, Sequence[np.ndarray]],
    beta_omega: float,
    td: Optional[TDInput] = None,
) -> NetworkCriticState:
    """Consensus round with a row-stochastic matrix C^k per entry; no push-sum weights."""
    stack = np.asarray(weights)
    omega_tilde, mu_next = _td_half_step(states, td, beta_omega, states.omega)
    omega = np.einsum("kij,jk->ik", stack, omega_tilde)
    return NetworkCriticState(omega=omega, y=states.y, z=omega, mu=mu_next)


def critic_round_consensus_full(
    states: NetworkCriticState,
    weights: np.ndarray,
    beta_omega: float,
    td: Optional[TDInput] = None,
) -> Tuple[NetworkCriticState, np.ndarray]:
    """Consensus round mixing the whole vector with one Metropolis matrix; K scalars per agent."""
    omega_tilde, mu_next = _td_half_step(states, td, beta_omega, states.omega)
    omega = weights @ omega_tilde
    new = NetworkCriticState(omega=omega, y=states.y, z=omega, mu=mu_next)
    return new, np.full(states.n_agents, states.n_features, dtype=int)


def actor_step(
    policy: SoftmaxPolicy,
    params: PolicyParams,
    z: np.ndarray,
    sample: TransitionSample,
    features: FeatureMap,
    swaps: List[np.ndarray],
    actions: Sequence[int],
    beta_theta: float,
) -> PolicyParams:
    """
    theta^i <- Proj(theta^i + beta_theta * A^i_t * psi^i_t) for every agent.

    Args:
        policy: Joint softmax policy
        params: Current theta
        z: (N, K) critic estimates used by the actors
        sample: Transition (s_t, a_t, ...)
        features: Critic feature map
        swaps: Per-agent swap tables from NetworkedMDP.swap_tables()
        actions: Per-agent actions making up a_t
        beta_theta: Actor stepsize
    """
    if beta_theta == 0.0:
        return params.copy()
    s, a = sample.state, sample.joint_action
    phi_s = features.phi[s]
    blocks = []
    for i, theta_i in enumerate(params.blocks):
        x_i = policy.features[i][s]
        probs = policy.action_probs(params, i, s)
        advantage = local_advantage_sample(z[i], probs, phi_s, a, swaps[i][a])
        psi = x_i[actions[i]] - probs @ x_i
        blocks.append(project(theta_i + beta_theta * advantage * psi, params.theta_max))
    return PolicyParams(blocks, params.theta_max)
