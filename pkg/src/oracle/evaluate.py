"""
Exact policy evaluation.

Ground truth for every quantity the learners estimate: stationary
distribution, averaged return J(theta), relative action-values, local
advantages, policy gradients and the linear TD fixed point. All linear
systems are solved by dense LU with partial pivoting; instances are
limited to |S||A| <= MAX_STATE_ACTIONS.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..env.features import FeatureMap
from ..env.mdp import NetworkedMDP, induced_chain, is_irreducible
from ..policy.softmax import PolicyParams, SoftmaxPolicy, project


MAX_STATE_ACTIONS = 10_000
SINGULAR_COND = 1e12
FIXED_POINT_TOL = 1e-10


@dataclass
class PolicyEvaluation:
    """Exact evaluation of one joint policy."""

    d_theta: np.ndarray
    J: float
    Q: np.ndarray
    D: np.ndarray
    omega_theta: Optional[np.ndarray] = None


def _check_size(mdp: NetworkedMDP) -> None:
    n_rows = mdp.n_states * mdp.n_joint_actions
    if n_rows > MAX_STATE_ACTIONS:
        raise ValueError(f"Oracle limited to |S||A| <= {MAX_STATE_ACTIONS}, got {n_rows}")


def stationary_distribution(chain: np.ndarray) -> np.ndarray:
    """
    Unique d with d^T P = d^T and sum(d) = 1.

    Solved as (P^T - I) d = 0 with the last equation replaced by the
    normalization row.

    Raises:
        ValueError: if the chain is reducible
    """
    chain = np.asarray(chain, dtype=float)
    if not is_irreducible(chain):
        raise ValueError("Stationary distribution requires an irreducible chain")
    n = chain.shape[0]
    system = chain.T - np.eye(n)
    system[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    d = lu_solve(lu_factor(system), rhs)
    d = np.clip(d, 0.0, None)
    return d / d.sum()


def state_action_chain(mdp: NetworkedMDP, policy_table: np.ndarray) -> np.ndarray:
    """P_sa[(s, a), (s', a')] = P(s' | s, a) * pi(s', a')."""
    n_rows = mdp.n_states * mdp.n_joint_actions
    step = mdp.transition.reshape(n_rows, mdp.n_states)
    return (step[:, :, None] * policy_table[None, :, :]).reshape(n_rows, n_rows)


def _occupancy(mdp: NetworkedMDP, policy_table: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    d_theta = stationary_distribution(induced_chain(mdp, policy_table))
    weights = d_theta[:, None] * policy_table
    return d_theta, weights, float(np.sum(weights * mdp.mean_reward))


def _relative_q(mdp: NetworkedMDP, policy_table: np.ndarray, weights: np.ndarray, J: float) -> np.ndarray:
    """
    Solve (I - P_sa) Q = R_bar - J 1 with sum(D * Q) = 0.

    Uses the nonsingular system (I - P_sa + 1 D^T) Q = R_bar - J 1, whose
    solution automatically satisfies the normalization.
    """
    n_rows = mdp.n_states * mdp.n_joint_actions
    p_sa = state_action_chain(mdp, policy_table)
    rhs = mdp.mean_reward.reshape(-1) - J
    system = np.eye(n_rows) - p_sa + np.outer(np.ones(n_rows), weights.reshape(-1))
    if np.linalg.cond(system) > SINGULAR_COND:
        raise ValueError("Poisson system is singular beyond its constant kernel")
    q = lu_solve(lu_factor(system), rhs)
    return q.reshape(mdp.n_states, mdp.n_joint_actions)


def averaged_return(mdp: NetworkedMDP, policy: SoftmaxPolicy, params: PolicyParams) -> float:
    """J(theta) = sum_{s,a} d(s) pi(s, a) R_bar(s, a)."""
    _, _, J = _occupancy(mdp, policy.joint_table(params))
    return J


def relative_q(mdp: NetworkedMDP, policy: SoftmaxPolicy, params: PolicyParams) -> np.ndarray:
    """Relative action-values Q_theta, normalized to zero stationary mean."""
    _check_size(mdp)
    table = policy.joint_table(params)
    _, weights, J = _occupancy(mdp, table)
    return _relative_q(mdp, table, weights, J)


def local_advantage_table(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    i: int,
    q: Optional[np.ndarray] = None,
) -> np.ndarray:
    """(S, |A|) table of A^i(s, a) = Q(s, a) - sum_b pi^i(b | s) Q(s, (b, a^{-i}))."""
    if q is None:
        q = relative_q(mdp, policy, params)
    probs = policy.agent_table(params, i)
    swaps = mdp.swap_tables()[i]
    baseline = np.einsum("sb,sab->sa", probs, q[:, swaps])
    return q - baseline


def local_advantage_exact(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    i: int,
    s: int,
    a: int,
) -> float:
    return float(local_advantage_table(mdp, policy, params, i)[s, a])


def global_advantage_table(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    q: Optional[np.ndarray] = None,
) -> np.ndarray:
    """A(s, a) = Q(s, a) - V(s), V(s) = sum_a pi(s, a) Q(s, a)."""
    if q is None:
        q = relative_q(mdp, policy, params)
    table = policy.joint_table(params)
    return q - np.sum(table * q, axis=1, keepdims=True)


def _score_table(mdp: NetworkedMDP, policy: SoftmaxPolicy, params: PolicyParams, i: int) -> np.ndarray:
    """(S, |A|, m_i) table of psi^i(s, a^i) broadcast over joint actions."""
    x = policy.features[i]
    probs = policy.agent_table(params, i)
    psi = x - np.einsum("sb,sbm->sm", probs, x)[:, None, :]
    own_actions = mdp.joint_actions()[:, i]
    return psi[:, own_actions, :]


def policy_gradient(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    i: int,
    use_global_advantage: bool = False,
) -> np.ndarray:
    """
    Exact gradient of J w.r.t. theta^i:
    sum_{s,a} d(s) pi(s, a) psi^i(s, a^i) A(s, a), with either the local
    advantage A^i (default) or the global advantage A.
    """
    return all_policy_gradients(mdp, policy, params, use_global_advantage)[i]


def all_policy_gradients(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    use_global_advantage: bool = False,
) -> List[np.ndarray]:
    """Gradients for every agent from a single Poisson solve."""
    _check_size(mdp)
    table = policy.joint_table(params)
    _, weights, J = _occupancy(mdp, table)
    q = _relative_q(mdp, table, weights, J)
    grads = []
    for i in range(policy.n_agents):
        if use_global_advantage:
            adv = q - np.sum(table * q, axis=1, keepdims=True)
        else:
            adv = local_advantage_table(mdp, policy, params, i, q=q)
        grads.append(np.einsum("sa,sam->m", weights * adv, _score_table(mdp, policy, params, i)))
    return grads


def finite_difference_gradient(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    i: int,
    step: float = 1e-5,
) -> np.ndarray:
    """Central finite differences of J(theta) w.r.t. theta^i."""
    base = [b.copy() for b in params.blocks]
    grad = np.zeros_like(base[i])
    for m in range(grad.size):
        plus = [b.copy() for b in base]
        minus = [b.copy() for b in base]
        plus[i][m] += step
        minus[i][m] -= step
        j_plus = averaged_return(mdp, policy, PolicyParams(plus, theta_max=np.inf))
        j_minus = averaged_return(mdp, policy, PolicyParams(minus, theta_max=np.inf))
        grad[m] = (j_plus - j_minus) / (2.0 * step)
    return grad


def _td_system(
    mdp: NetworkedMDP,
    policy_table: np.ndarray,
    features: FeatureMap,
    weights: np.ndarray,
    J: float,
) -> Tuple[np.ndarray, np.ndarray]:
    phi = features.matrix
    p_sa = state_action_chain(mdp, policy_table)
    weighted_phi = phi * weights.reshape(-1, 1)
    a_mat = weighted_phi.T @ (phi - p_sa @ phi)
    b_vec = weighted_phi.T @ (mdp.mean_reward.reshape(-1) - J)
    return a_mat, b_vec


def td_fixed_point(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    features: FeatureMap,
) -> np.ndarray:
    """
    omega_theta solving Phi^T D (I - P_sa) Phi omega = Phi^T D (R_bar - J 1).

    Raises:
        ValueError: if the K x K system is singular, i.e. the features
            violate Assumption 5 (full column rank, no constant direction)
    """
    _check_size(mdp)
    table = policy.joint_table(params)
    _, weights, J = _occupancy(mdp, table)
    a_mat, b_vec = _td_system(mdp, table, features, weights, J)
    if not np.all(np.isfinite(a_mat)) or np.linalg.cond(a_mat) > SINGULAR_COND:
        raise ValueError(
            "TD fixed-point system is singular: features violate Assumption 5 "
            "(full column rank and Phi u != 1)"
        )
    omega = lu_solve(lu_factor(a_mat), b_vec)
    residual = float(np.linalg.norm(b_vec - a_mat @ omega))
    if residual > FIXED_POINT_TOL * max(1.0, float(np.linalg.norm(b_vec))):
        raise ValueError(f"TD fixed-point residual {residual:.3e} exceeds {FIXED_POINT_TOL}")
    return omega


def equilibrium_residual(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    features: FeatureMap,
    mu: float,
    omega: np.ndarray,
) -> Tuple[float, np.ndarray]:
    """
    Drift of the averaged critic dynamics at (mu, omega):
    (J - mu, Phi^T D (R_bar - mu 1 + P_sa Phi omega - Phi omega)).
    Both vanish exactly at (J(theta), omega_theta).
    """
    table = policy.joint_table(params)
    _, weights, J = _occupancy(mdp, table)
    phi = features.matrix
    p_sa = state_action_chain(mdp, policy_table=table)
    values = phi @ omega
    target = mdp.mean_reward.reshape(-1) - mu + p_sa @ values
    omega_drift = (phi * weights.reshape(-1, 1)).T @ (target - values)
    return J - mu, omega_drift


def evaluate_policy(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    features: Optional[FeatureMap] = None,
) -> PolicyEvaluation:
    """Compute d_theta, J, Q, D and (when features are given) omega_theta."""
    _check_size(mdp)
    table = policy.joint_table(params)
    d_theta, weights, J = _occupancy(mdp, table)
    q = _relative_q(mdp, table, weights, J)
    omega = None
    if features is not None:
        omega = td_fixed_point(mdp, policy, params, features)
    return PolicyEvaluation(d_theta=d_theta, J=J, Q=q, D=weights, omega_theta=omega)


def projected_gradient_norm(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    step_size: float = 1.0,
) -> float:
    """Norm of the gradient mapping theta - Proj(theta + step * grad J)."""
    grads = all_policy_gradients(mdp, policy, params)
    gaps = [b - project(b + step_size * g, params.theta_max) for b, g in zip(params.blocks, grads)]
    return float(np.linalg.norm(np.concatenate(gaps))) / step_size


def projected_gradient_ascent(
    mdp: NetworkedMDP,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    step_size: float = 1.0,
    max_iters: int = 5000,
    tol: float = 1e-10,
) -> Tuple[PolicyParams, float]:
    """
    Exact projected gradient ascent on J(theta) from params.

    Stops when the gradient-mapping norm drops below tol.

    Returns:
        (final params, J at the final params)
    """
    current = params.copy()
    for _ in range(max_iters):
        grads = all_policy_gradients(mdp, policy, current)
        updated = PolicyParams(
            [project(b + step_size * g, current.theta_max) for b, g in zip(current.blocks, grads)],
            current.theta_max,
        )
        gap = np.linalg.norm(updated.flat() - current.flat()) / step_size
        current = updated
        if gap < tol:
            break
    return current, averaged_return(mdp, policy, current)


def format_report(
    evaluation: PolicyEvaluation,
    gradients: Optional[List[np.ndarray]] = None,
) -> str:
    """Plain-text report at 17 significant digits."""
    def row(values: np.ndarray) -> str:
        return " ".join(f"{x:.17g}" for x in np.ravel(values))

    lines = ["# policy-evaluation", f"J {evaluation.J:.17g}", f"d_theta {row(evaluation.d_theta)}"]
    if evaluation.omega_theta is not None:
        lines.append(f"omega_theta {row(evaluation.omega_theta)}")
    for i, grad in enumerate(gradients or []):
        lines.append(f"policy_gradient {i} {row(grad)}")
    return "\n".join(lines) + "\n"
