"""
Long-running end-to-end checks against the exact oracle.

Marked slow; deselect with `pytest -m "not slow"`.
"""

import numpy as np
import pytest

from src.algo.config import RunConfig
from src.algo.engine import CommunicationScheme, TrainingEngine, consensus_benchmark
from src.algo.rounds import TDInput, network_average
from src.env.features import generate_features
from src.env.mdp import generate_garnet, step
from src.graph.topology import directed_cycle, random_connected_undirected, random_strongly_connected
from src.graph.validator import BlockSampler, FiniteSupportSampler, block_spectral_identity, check_weight_assumptions
from src.graph.weights import build_metropolis_weights
from src.oracle.evaluate import (
    averaged_return,
    finite_difference_gradient,
    policy_gradient,
    projected_gradient_ascent,
    td_fixed_point,
)
from src.policy.softmax import SoftmaxPolicy

pytestmark = pytest.mark.slow

SEEDS = range(5)


@pytest.fixture(scope="module")
def garnet_instance():
    """N=3 agents, |S|=5, binary actions, K=4, fixed random policy, directed 3-cycle."""
    mdp = generate_garnet(n_states=5, action_sizes=[2, 2, 2], branching=3, reward_scale=1.0, seed=2024)
    features = generate_features(mdp, n_features=4, seed=2025)
    policy = SoftmaxPolicy.tabular(mdp.n_states, mdp.action_sizes)
    params = policy.random(seed=2026)
    return mdp, features, policy, params, directed_cycle(3)


def test_static_push_sum_averaging():
    graph = random_strongly_connected(10, seed=0)
    omega0 = np.random.default_rng(0).uniform(-1.0, 1.0, size=(10, 8))
    trace = consensus_benchmark("push-full", graph, omega0, max_rounds=200, tol=1e-9)
    assert trace.rounds_to_tol is not None
    assert trace.rounds_to_tol <= 200


@pytest.mark.parametrize("seed", SEEDS)
def test_entrywise_push_sum_averaging(seed):
    graph = random_strongly_connected(10, seed=seed)
    omega0 = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(10, 8))
    trace = consensus_benchmark("push-entrywise", graph, omega0, max_rounds=20_000, tol=1e-6, seed=seed)
    assert trace.rounds_to_tol is not None
    assert trace.errors[-1] < 1e-6


@pytest.mark.parametrize("algorithm", ["push-entrywise", "push-full"])
def test_critic_tracks_oracle(garnet_instance, algorithm):
    """Test mu and z against J(theta) and omega_theta under a frozen policy."""
    mdp, features, policy, params, graph = garnet_instance
    J = averaged_return(mdp, policy, params)
    omega_theta = td_fixed_point(mdp, policy, params, features)

    passed = 0
    for seed in SEEDS:
        config = RunConfig(algorithm=algorithm, horizon=200_000, freeze_actor=True, seed=seed, log_every=10_000)
        try:
            result = TrainingEngine(config, mdp, graph, features, policy=policy, params=params).run()
        except FloatingPointError:
            continue
        mu_gap = abs(np.mean(result.states.mu) - J) / abs(J)
        z_gap = np.max(np.linalg.norm(result.states.z - omega_theta, axis=1)) / np.linalg.norm(omega_theta)
        passed += mu_gap < 0.05 and z_gap < 0.10
    assert passed >= 4


def test_full_push_critic_stays_bounded(garnet_instance):
    mdp, features, policy, params, graph = garnet_instance
    for seed in SEEDS:
        config = RunConfig(algorithm="push-full", horizon=200_000, freeze_actor=True, seed=seed, log_every=10_000)
        result = TrainingEngine(config, mdp, graph, features, policy=policy, params=params).run()
        assert result.z_max < 1e3
        assert result.omega_max < 1e3
        assert result.alpha > 0.0


ENTRYWISE_WEIGHT_COLLAPSE = (
    "an agent that keeps selecting entry k while its in-neighbour does not halves y^{ik} each time; "
    "minimum weights near 1e-5 amplify numerator increments in z = omega / y"
)


@pytest.mark.parametrize(
    "algorithm",
    [
        "push-full",
        pytest.param("push-entrywise", marks=pytest.mark.xfail(reason=ENTRYWISE_WEIGHT_COLLAPSE, strict=False)),
    ],
)
def test_disagreement_decays(garnet_instance, algorithm):
    """Test max_i ||z^i - <omega>|| shrinks from T/10 to T, averaged over seeds and a window of log points."""
    mdp, features, policy, params, graph = garnet_instance
    horizon = 200_000
    early, late = [], []
    for seed in SEEDS:
        config = RunConfig(algorithm=algorithm, horizon=horizon, freeze_actor=True, seed=seed, log_every=1000)
        frame = TrainingEngine(config, mdp, graph, features, policy=policy, params=params).run().metrics.to_frame()
        early.append(frame.loc[frame["t"].between(horizon // 10 - 2000, horizon // 10 + 2000), "consensus_err"].mean())
        late.append(frame.loc[frame["t"] >= horizon - 4000, "consensus_err"].mean())
    # disagreement scales with beta_omega, which falls by 10 ** -nu_omega over this span
    assert np.mean(late) < 0.5 * np.mean(early)


def test_policy_gradient_theorem():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        n_agents = int(rng.integers(1, 4))
        mdp = generate_garnet(
            n_states=int(rng.integers(2, 5)),
            action_sizes=rng.integers(2, 4, size=n_agents).tolist(),
            branching=2,
            reward_scale=1.0,
            seed=seed,
        )
        policy = SoftmaxPolicy.tabular(mdp.n_states, mdp.action_sizes)
        params = policy.random(seed=seed)
        for i in range(n_agents):
            exact = policy_gradient(mdp, policy, params, i)
            numeric = finite_difference_gradient(mdp, policy, params, i)
            assert np.linalg.norm(exact - numeric) <= 1e-5 * np.linalg.norm(exact)
            global_form = policy_gradient(mdp, policy, params, i, use_global_advantage=True)
            np.testing.assert_allclose(exact, global_form, atol=1e-10)


def test_block_matrix_assumptions():
    """Test Metropolis-derived per-entry samplers and the block norm identity."""
    rng = np.random.default_rng(7)
    for trial in range(20):
        n_agents = int(rng.integers(2, 6))
        n_entries = int(rng.integers(1, 5))
        graph = random_connected_undirected(n_agents, seed=trial)
        metropolis = build_metropolis_weights(graph)
        factors = [
            FiniteSupportSampler([metropolis, np.eye(n_agents)], [p, 1.0 - p])
            for p in rng.uniform(0.1, 1.0, size=n_entries)
        ]
        report = check_weight_assumptions(
            BlockSampler(factors), n_samples=20, eta=1.0 / (n_agents + 1), tol=1e-9, seed=trial, graph=graph
        )
        assert report.passed, report.checks()
        block_norm, factor_norm = block_spectral_identity(factors)
        assert block_norm == pytest.approx(factor_norm, abs=1e-9)

        random_factors = [
            FiniteSupportSampler(
                [rng.dirichlet(np.ones(n_agents), size=n_agents), rng.dirichlet(np.ones(n_agents), size=n_agents).T],
                [p, 1.0 - p],
            )
            for p in rng.uniform(0.1, 0.9, size=n_entries)
        ]
        block_norm, factor_norm = block_spectral_identity(random_factors)
        assert block_norm == pytest.approx(factor_norm, abs=1e-9)


@pytest.mark.parametrize("algorithm,expected", [("push-entrywise", 2), ("push-full", 5)])
def test_communication_accounting_long_run(garnet_instance, algorithm, expected):
    mdp, features, policy, params, graph = garnet_instance
    config = RunConfig(algorithm=algorithm, horizon=10_000, freeze_actor=True, log_every=1000)
    result = TrainingEngine(config, mdp, graph, features, policy=policy, params=params).run()
    np.testing.assert_array_equal(result.scalars_sent, np.full(3, expected * 10_000))
    assert list(result.metrics.to_frame()["scalars_per_agent"]) == [expected * t for t in range(1000, 10_001, 1000)]


def test_conservation_over_training(garnet_instance):
    """Test weight-sum conservation, the average update identity and 0 < y <= N every round."""
    mdp, features, policy, params, graph = garnet_instance
    config = RunConfig(algorithm="push-entrywise", freeze_actor=True)
    env_rng = np.random.default_rng(0)
    policy_rng = np.random.default_rng(1)
    scheme = CommunicationScheme(
        config.algorithm, graph, features.n_features,
        config.resolved_selection_probs(3, features.n_features), np.random.default_rng(2),
    )
    states = scheme.initial_states()
    alpha = 1.0
    s = int(env_rng.integers(mdp.n_states))
    actions = policy.sample_actions(params, s, policy_rng)
    for t in range(100_000):
        sample = step(mdp, s, mdp.joint_index(actions), env_rng)
        next_actions = policy.sample_actions(params, sample.next_state, policy_rng)
        td = TDInput.from_sample(sample, mdp.joint_index(next_actions), features)
        beta = config.critic_schedule(t)

        delta = td.rewards - states.mu + states.z @ td.phi_next - states.z @ td.phi_cur
        expected = network_average(states.omega) + beta * delta.mean() * td.phi_cur
        states, _, _ = scheme.round(states, beta, td)

        np.testing.assert_allclose(states.y.sum(axis=0), np.full(features.n_features, 3.0), atol=1e-9)
        assert states.y.max() <= 3.0 + 1e-9
        np.testing.assert_allclose(network_average(states.omega), expected, atol=1e-10)
        alpha = min(alpha, float(states.y.min()))
        assert alpha > 0.0
        s, actions = sample.next_state, next_actions
    print(f"observed alpha = {alpha:.6e}")


def test_actor_improves_return(garnet_instance):
    """Test the actor closes at least half the gap to projected-ascent J*."""
    mdp, features, policy, params, graph = garnet_instance
    J0 = averaged_return(mdp, policy, params)
    _, J_star = projected_gradient_ascent(mdp, policy, params)
    assert J_star > J0

    passed = 0
    for seed in SEEDS:
        config = RunConfig(algorithm="push-entrywise", horizon=500_000, seed=seed, log_every=50_000)
        try:
            result = TrainingEngine(config, mdp, graph, features, policy=policy, params=params, oracle=True).run()
        except FloatingPointError:
            continue
        passed += result.final_J >= J0 + 0.5 * (J_star - J0)
    assert passed >= 3
