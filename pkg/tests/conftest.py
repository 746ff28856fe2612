"""
Shared fixtures and markers.
"""

import numpy as np
import pytest

from src.env.features import generate_features
from src.env.mdp import NetworkedMDP, generate_garnet
from src.graph.topology import directed_cycle
from src.policy.softmax import SoftmaxPolicy


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: long-running acceptance checks (deselect with -m 'not slow')")


@pytest.fixture
def small_mdp():
    """Two agents, three states, two actions each."""
    return generate_garnet(n_states=3, action_sizes=[2, 2], branching=2, reward_scale=1.0, seed=7)


@pytest.fixture
def small_features(small_mdp):
    """Three random critic features on the small MDP."""
    return generate_features(small_mdp, n_features=3, seed=11)


@pytest.fixture
def small_policy(small_mdp):
    """Tabular softmax policy on the small MDP."""
    return SoftmaxPolicy.tabular(small_mdp.n_states, small_mdp.action_sizes)


@pytest.fixture
def cycle3():
    """Directed 3-cycle."""
    return directed_cycle(3)


def constant_reward_mdp(value: float = 0.7, seed: int = 3) -> NetworkedMDP:
    """Garnet transitions with every reward equal to value."""
    base = generate_garnet(n_states=4, action_sizes=[2, 2], branching=2, reward_scale=1.0, seed=seed)
    return NetworkedMDP(
        n_states=base.n_states,
        action_sizes=base.action_sizes,
        transition=base.transition,
        rewards=np.full_like(base.rewards, value),
    )
