"""
Unit tests for exact policy evaluation.
"""

import numpy as np
import pytest

from src.env.features import FeatureMap
from src.env.mdp import NetworkedMDP, generate_garnet, induced_chain
from src.oracle.evaluate import (
    all_policy_gradients,
    averaged_return,
    equilibrium_residual,
    evaluate_policy,
    finite_difference_gradient,
    format_report,
    global_advantage_table,
    local_advantage_exact,
    local_advantage_table,
    policy_gradient,
    projected_gradient_ascent,
    projected_gradient_norm,
    relative_q,
    state_action_chain,
    stationary_distribution,
    td_fixed_point,
)
from src.policy.softmax import SoftmaxPolicy

from .conftest import constant_reward_mdp


def test_stationary_two_state_chain():
    d = stationary_distribution(np.array([[0.9, 0.1], [0.5, 0.5]]))
    np.testing.assert_allclose(d, [5 / 6, 1 / 6], atol=1e-12)


def test_stationary_doubly_stochastic_is_uniform():
    chain = np.array([[0.2, 0.5, 0.3], [0.5, 0.3, 0.2], [0.3, 0.2, 0.5]])
    np.testing.assert_allclose(stationary_distribution(chain), np.full(3, 1 / 3), atol=1e-12)


def test_stationary_is_invariant(small_mdp, small_policy):
    chain = induced_chain(small_mdp, small_policy.joint_table(small_policy.random(seed=1)))
    d = stationary_distribution(chain)
    np.testing.assert_allclose(d @ chain, d, atol=1e-12)
    assert d.sum() == pytest.approx(1.0, abs=1e-12)


def test_stationary_rejects_reducible_chain():
    with pytest.raises(ValueError):
        stationary_distribution(np.eye(2))


def test_state_action_chain_rows(small_mdp, small_policy):
    table = small_policy.joint_table(small_policy.random(seed=2))
    chain = state_action_chain(small_mdp, table)
    assert chain.shape == (12, 12)
    np.testing.assert_allclose(chain.sum(axis=1), np.ones(12))


def test_constant_rewards():
    """Test J = c and Q = 0 when every reward equals c."""
    mdp = constant_reward_mdp(0.7)
    policy = SoftmaxPolicy.tabular(mdp.n_states, mdp.action_sizes)
    params = policy.random(seed=0)
    assert averaged_return(mdp, policy, params) == pytest.approx(0.7, abs=1e-12)
    np.testing.assert_allclose(relative_q(mdp, policy, params), 0.0, atol=1e-12)


def test_averaged_return_is_linear_in_rewards(small_mdp, small_policy):
    params = small_policy.random(seed=4)
    scaled = NetworkedMDP(small_mdp.n_states, small_mdp.action_sizes, small_mdp.transition, 3.0 * small_mdp.rewards)
    assert averaged_return(scaled, small_policy, params) == pytest.approx(
        3.0 * averaged_return(small_mdp, small_policy, params), rel=1e-12
    )


def test_relative_q_poisson_and_normalization(small_mdp, small_policy):
    params = small_policy.random(seed=5)
    evaluation = evaluate_policy(small_mdp, small_policy, params)
    table = small_policy.joint_table(params)
    chain = state_action_chain(small_mdp, table)
    q = evaluation.Q.reshape(-1)
    residual = q - (small_mdp.mean_reward.reshape(-1) - evaluation.J + chain @ q)
    assert np.max(np.abs(residual)) < 1e-9
    assert np.sum(evaluation.D * evaluation.Q) == pytest.approx(0.0, abs=1e-12)

    # state values satisfy the state Poisson equation
    values = np.sum(table * evaluation.Q, axis=1)
    r_state = np.sum(table * small_mdp.mean_reward, axis=1)
    state_chain = induced_chain(small_mdp, table)
    assert np.max(np.abs(values - (r_state - evaluation.J + state_chain @ values))) < 1e-9


def test_reward_shift_leaves_q_unchanged(small_mdp, small_policy):
    params = small_policy.random(seed=6)
    shifted = NetworkedMDP(small_mdp.n_states, small_mdp.action_sizes, small_mdp.transition, small_mdp.rewards + 2.0)
    np.testing.assert_allclose(
        relative_q(shifted, small_policy, params), relative_q(small_mdp, small_policy, params), atol=1e-10
    )
    assert averaged_return(shifted, small_policy, params) == pytest.approx(
        averaged_return(small_mdp, small_policy, params) + 2.0, abs=1e-12
    )


def test_local_advantage_centering(small_mdp, small_policy):
    params = small_policy.random(seed=7)
    adv = local_advantage_table(small_mdp, small_policy, params, 1)
    swaps = small_mdp.swap_tables()[1]
    for s in range(small_mdp.n_states):
        probs = small_policy.action_probs(params, 1, s)
        for a in range(small_mdp.n_joint_actions):
            assert probs @ adv[s, swaps[a]] == pytest.approx(0.0, abs=1e-12)


def test_local_advantage_single_action_agent():
    mdp = generate_garnet(3, [1, 2], branching=2, reward_scale=1.0, seed=1)
    policy = SoftmaxPolicy.tabular(3, [1, 2])
    params = policy.random(seed=0)
    for s in range(3):
        for a in range(2):
            assert local_advantage_exact(mdp, policy, params, 0, s, a) == 0.0


def test_local_advantage_equals_global_for_one_agent():
    mdp = generate_garnet(4, [3], branching=2, reward_scale=1.0, seed=2)
    policy = SoftmaxPolicy.tabular(4, [3])
    params = policy.random(seed=1)
    np.testing.assert_allclose(
        local_advantage_table(mdp, policy, params, 0), global_advantage_table(mdp, policy, params), atol=1e-12
    )


def test_gradient_forms_agree(small_mdp, small_policy):
    """Test the local-advantage and global-advantage gradient forms agree."""
    params = small_policy.random(seed=8, scale=2.0)
    for i in range(small_mdp.n_agents):
        local = policy_gradient(small_mdp, small_policy, params, i)
        global_form = policy_gradient(small_mdp, small_policy, params, i, use_global_advantage=True)
        np.testing.assert_allclose(local, global_form, atol=1e-10)


def test_gradient_matches_finite_differences(small_mdp, small_policy):
    params = small_policy.random(seed=9)
    for i in range(small_mdp.n_agents):
        exact = policy_gradient(small_mdp, small_policy, params, i)
        numeric = finite_difference_gradient(small_mdp, small_policy, params, i)
        assert np.linalg.norm(exact - numeric) <= 1e-5 * np.linalg.norm(exact)


def test_near_tabular_td_fixed_point(small_mdp, small_policy):
    """Test that identity features minus one column recover Q up to a constant."""
    params = small_policy.random(seed=10)
    phi = np.delete(np.eye(12), 5, axis=1).reshape(3, 4, 11)
    omega = td_fixed_point(small_mdp, small_policy, params, FeatureMap(phi))
    q = relative_q(small_mdp, small_policy, params).reshape(-1)
    gap = phi.reshape(12, 11) @ omega - q
    np.testing.assert_allclose(gap, np.full(12, gap[0]), atol=1e-9)
    assert gap[0] == pytest.approx(-q[5], abs=1e-9)


def test_td_fixed_point_constant_rewards():
    mdp = constant_reward_mdp(0.3)
    policy = SoftmaxPolicy.tabular(mdp.n_states, mdp.action_sizes)
    params = policy.random(seed=2)
    phi = np.random.default_rng(0).uniform(-1, 1, (4, 4, 3))
    np.testing.assert_allclose(td_fixed_point(mdp, policy, params, FeatureMap(phi)), 0.0, atol=1e-12)


def test_td_fixed_point_singular_features(small_mdp, small_policy, small_features):
    phi = small_features.phi.copy()
    phi[:, :, 2] = phi[:, :, 1]
    with pytest.raises(ValueError, match="Assumption 5"):
        td_fixed_point(small_mdp, small_policy, small_policy.zeros(), FeatureMap(phi))


def test_equilibrium_residual_vanishes(small_mdp, small_policy, small_features):
    """Test (J, omega_theta) zeroes the averaged critic drift."""
    params = small_policy.random(seed=11)
    evaluation = evaluate_policy(small_mdp, small_policy, params, small_features)
    mu_drift, omega_drift = equilibrium_residual(
        small_mdp, small_policy, params, small_features, evaluation.J, evaluation.omega_theta
    )
    assert mu_drift == pytest.approx(0.0, abs=1e-12)
    assert np.max(np.abs(omega_drift)) < 1e-10
    _, off_drift = equilibrium_residual(
        small_mdp, small_policy, params, small_features, evaluation.J, evaluation.omega_theta + 0.1
    )
    assert np.max(np.abs(off_drift)) > 1e-6


def test_projected_gradient_ascent_improves(small_mdp, small_policy):
    params = small_policy.zeros()
    start = averaged_return(small_mdp, small_policy, params)
    final, J_star = projected_gradient_ascent(small_mdp, small_policy, params, step_size=2.0, max_iters=300)
    assert J_star > start
    assert projected_gradient_norm(small_mdp, small_policy, final) < projected_gradient_norm(
        small_mdp, small_policy, params
    )
    assert np.max(np.abs(final.flat())) <= small_policy.theta_max


def test_all_gradients_match_single_agent_calls(small_mdp, small_policy):
    params = small_policy.random(seed=12)
    grads = all_policy_gradients(small_mdp, small_policy, params)
    for i, grad in enumerate(grads):
        np.testing.assert_allclose(grad, policy_gradient(small_mdp, small_policy, params, i), atol=1e-14)


def test_report_is_deterministic(small_mdp, small_policy, small_features):
    params = small_policy.random(seed=13)
    first = format_report(evaluate_policy(small_mdp, small_policy, params, small_features))
    second = format_report(evaluate_policy(small_mdp, small_policy, params, small_features))
    assert first == second
    assert first.splitlines()[1].startswith("J ")


@pytest.mark.slow
def test_averaged_return_matches_long_trajectory(small_mdp, small_policy):
    """Test J against the empirical average of a long simulated trajectory."""
    params = small_policy.random(seed=14)
    table = small_policy.joint_table(params)
    chain = induced_chain(small_mdp, table)
    state_reward = np.sum(table * small_mdp.mean_reward, axis=1)
    rng = np.random.default_rng(0)
    cdf = np.cumsum(chain, axis=1)
    draws = rng.random(1_000_000)
    s, total = 0, 0.0
    for u in draws:
        total += state_reward[s]
        s = min(int(np.searchsorted(cdf[s], u, side="right")), small_mdp.n_states - 1)
    assert total / draws.size == pytest.approx(averaged_return(small_mdp, small_policy, params), abs=5e-3)
