"""
Linear critic: Q(s, a; z) = z^T phi(s, a), TD errors, sampled local
advantages, and the per-agent push-sum state (omega, y, z, mu).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np


Y_UNDERFLOW = 1e-14


@dataclass
class CriticState:
    """
    One agent's critic variables.

    omega is the push-sum numerator, y the per-entry push-sum weights,
    z = omega / y the ratio estimate fed to the actor, mu the long-run
    reward tracker.
    """

    omega: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mu: float


@dataclass
class NetworkCriticState:
    """All agents' critic variables stacked agent-major: arrays of shape (N, K)."""

    omega: np.ndarray
    y: np.ndarray
    z: np.ndarray
    mu: np.ndarray

    @classmethod
    def initial(cls, n_agents: int, n_features: int) -> "NetworkCriticState":
        """omega = 0, y = 1, mu = 0."""
        omega = np.zeros((n_agents, n_features))
        return cls(omega=omega, y=np.ones((n_agents, n_features)), z=omega.copy(), mu=np.zeros(n_agents))

    @classmethod
    def from_omega(cls, omega: np.ndarray) -> "NetworkCriticState":
        omega = np.array(omega, dtype=float)
        return cls(omega=omega, y=np.ones_like(omega), z=omega.copy(), mu=np.zeros(omega.shape[0]))

    @property
    def n_agents(self) -> int:
        return self.omega.shape[0]

    @property
    def n_features(self) -> int:
        return self.omega.shape[1]

    def copy(self) -> "NetworkCriticState":
        return NetworkCriticState(self.omega.copy(), self.y.copy(), self.z.copy(), self.mu.copy())

    def agent(self, i: int) -> CriticState:
        return CriticState(self.omega[i].copy(), self.y[i].copy(), self.z[i].copy(), float(self.mu[i]))

    def refresh_ratio(self) -> None:
        """Recompute z = omega / y.

        Raises:
            FloatingPointError: if any push-sum weight underflows
        """
        if np.min(self.y) < Y_UNDERFLOW:
            i, k = np.unravel_index(np.argmin(self.y), self.y.shape)
            raise FloatingPointError(f"Push-sum weight y[{i}, {k}] = {self.y[i, k]:.3e} underflowed")
        self.z = self.omega / self.y


def q_value(z: np.ndarray, phi_sa: np.ndarray) -> float:
    """Q(s, a; z) = z^T phi(s, a)."""
    if np.shape(z) != np.shape(phi_sa):
        raise ValueError(f"Dimension mismatch: z {np.shape(z)} vs phi {np.shape(phi_sa)}")
    return float(np.dot(z, phi_sa))


def td_error(r, mu, q_next, q_cur):
    """r - mu + Q(s', a') - Q(s, a); elementwise for arrays."""
    return r - mu + q_next - q_cur


def mu_update(mu, r, beta: float):
    """(1 - beta) * mu + beta * r."""
    if not 0.0 < beta <= 1.0:
        raise ValueError(f"beta must be in (0, 1], got {beta}")
    return (1.0 - beta) * mu + beta * r


def local_advantage_sample(
    z_i: np.ndarray,
    action_probs_i: np.ndarray,
    phi_s: np.ndarray,
    a: int,
    alternatives: np.ndarray,
) -> float:
    """
    A^i = Q(s, a; z) - sum_b pi^i(b | s) Q(s, (b, a^{-i}); z).

    Args:
        z_i: Agent i's critic estimate
        action_probs_i: pi^i(. | s)
        phi_s: Feature rows phi(s, .) for all joint actions, shape (|A|, K)
        a: Joint action taken
        alternatives: Joint indices of a with agent i's action replaced by each b
    """
    q = phi_s @ z_i
    return float(q[a] - action_probs_i @ q[alternatives])


def format_critic_states(states: NetworkCriticState) -> str:
    """Per-agent omega, y and mu at 17 significant digits."""
    lines = ["# critic-states", f"shape {states.n_agents} {states.n_features}"]
    for i in range(states.n_agents):
        lines.append(f"agent {i} mu {states.mu[i]:.17g}")
        lines.append("omega " + " ".join(f"{x:.17g}" for x in states.omega[i]))
        lines.append("y " + " ".join(f"{x:.17g}" for x in states.y[i]))
    return "\n".join(lines) + "\n"


def parse_critic_states(text: str) -> NetworkCriticState:
    lines = [line.split() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    n_agents, n_features = int(lines[0][1]), int(lines[0][2])
    omega = np.zeros((n_agents, n_features))
    y = np.ones((n_agents, n_features))
    mu = np.zeros(n_agents)
    for idx in range(n_agents):
        header, omega_row, y_row = lines[1 + 3 * idx: 4 + 3 * idx]
        i = int(header[1])
        mu[i] = float(header[3])
        omega[i] = [float(x) for x in omega_row[1:]]
        y[i] = [float(x) for x in y_row[1:]]
    states = NetworkCriticState(omega=omega, y=y, z=omega.copy(), mu=mu)
    states.refresh_ratio()
    return states


def save_critic_states(states: NetworkCriticState, path: Union[str, Path]) -> None:
    Path(path).write_text(format_critic_states(states))
