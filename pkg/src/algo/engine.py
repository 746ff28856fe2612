"""
Training engine.

Runs the decentralized actor-critic loop on a networked MDP: sample the
joint action, step the environment, run one critic communication round,
then move the actors. Each run is single-threaded and fully determined by
its seed, which is split into independent environment, policy and
communication streams.
"""

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..critic.linear import NetworkCriticState
from ..env.features import FeatureMap, validate_feature_map
from ..env.mdp import NetworkedMDP, step, validate_ergodicity
from ..graph.topology import DirectedGraph, is_connected_undirected, is_strongly_connected
from ..graph.weights import (
    build_entrywise_consensus_weights,
    build_metropolis_weights,
    build_push_sum_weights,
    entrywise_push_stack,
    selection_mask,
)
from ..oracle.evaluate import averaged_return, td_fixed_point
from ..policy.softmax import PolicyParams, SoftmaxPolicy
from .config import ALGORITHMS, CONSENSUS_ALGORITHMS, PUSH_ALGORITHMS, RunConfig
from .rounds import (
    TDInput,
    actor_step,
    critic_round_consensus_entrywise,
    critic_round_consensus_full,
    critic_round_push_entrywise,
    critic_round_push_full,
    network_average,
    sample_selections,
)


METRIC_COLUMNS = [
    "t",
    "mu_mean",
    "consensus_err",
    "critic_err",
    "J_theta",
    "scalars_per_agent",
    "y_min",
    "y_max",
]


@dataclass
class RunMetrics:
    """Logged metric rows, one per logging point."""

    rows: List[Dict[str, float]] = field(default_factory=list)

    def record(self, **values: float) -> None:
        self.rows.append({col: values.get(col, np.nan) for col in METRIC_COLUMNS})

    def __len__(self) -> int:
        return len(self.rows)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.rows, columns=METRIC_COLUMNS)
        if not frame.empty:
            frame["t"] = frame["t"].astype(int)
            frame["scalars_per_agent"] = frame["scalars_per_agent"].astype(int)
        return frame

    def write_csv(self, path: Union[str, Path]) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")


@dataclass
class RunResult:
    """Outcome of one training run."""

    metrics: RunMetrics
    states: NetworkCriticState
    params: PolicyParams
    scalars_sent: np.ndarray
    coordination_overhead: np.ndarray
    alpha: float
    y_max: float
    z_max: float
    omega_max: float
    iterations: int
    wall_time: float
    final_J: Optional[float] = None

    def summary(self) -> Dict[str, object]:
        return {
            "iterations": self.iterations,
            "mu_mean": float(np.mean(self.states.mu)),
            "J_theta": self.final_J,
            "alpha": self.alpha,
            "y_max": self.y_max,
            "z_max": self.z_max,
            "omega_max": self.omega_max,
            "scalars_sent_per_agent": self.scalars_sent.tolist(),
            "total_scalars_sent": int(self.scalars_sent.sum()),
            "coordination_overhead_per_agent": self.coordination_overhead.tolist(),
        }


def consensus_error(states: NetworkCriticState, reference: Optional[np.ndarray] = None) -> float:
    """max_i ||z^i - <omega>||_inf; reference defaults to the current network average."""
    if reference is None:
        reference = network_average(states.omega)
    return float(np.max(np.abs(states.z - reference[None, :])))


def critic_error(states: NetworkCriticState, omega_theta: np.ndarray) -> float:
    """max_i ||z^i - omega_theta||_2."""
    return float(np.max(np.linalg.norm(states.z - omega_theta[None, :], axis=1)))


class CommunicationScheme:
    """
    One algorithm's mixing step: draws the round's selections from the
    communication stream, builds the round's weights and applies them.
    """

    def __init__(
        self,
        algorithm: str,
        graph: DirectedGraph,
        n_features: int,
        selection_probs: np.ndarray,
        rng: np.random.Generator,
        entries_per_round: int = 1,
    ):
        if algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {algorithm!r}; valid tags: {', '.join(ALGORITHMS)}")
        self.algorithm = algorithm
        self.graph = graph
        self.n_features = n_features
        self.selection_probs = selection_probs
        self.rng = rng
        self.entries_per_round = entries_per_round

        self._push = build_push_sum_weights(graph) if algorithm in PUSH_ALGORITHMS else None
        self._metropolis = build_metropolis_weights(graph) if algorithm == "consensus-full" else None

    def initial_states(self, omega0: Optional[np.ndarray] = None) -> NetworkCriticState:
        if omega0 is None:
            return NetworkCriticState.initial(self.graph.n_agents, self.n_features)
        return NetworkCriticState.from_omega(omega0)

    def round(
        self,
        states: NetworkCriticState,
        beta_omega: float,
        td: Optional[TDInput] = None,
    ) -> Tuple[NetworkCriticState, np.ndarray, np.ndarray]:
        """
        Returns:
            (new states, scalars sent per agent, coordination overhead per agent)
        """
        no_overhead = np.zeros(states.n_agents, dtype=int)
        if self.algorithm == "push-full":
            new, sent = critic_round_push_full(states, self._push, beta_omega, td)
            return new, sent, no_overhead
        if self.algorithm == "consensus-full":
            new, sent = critic_round_consensus_full(states, self._metropolis, beta_omega, td)
            return new, sent, no_overhead
        if self.algorithm == "push-entrywise":
            picks = sample_selections(self.selection_probs, self.rng, self.entries_per_round)
            stack = entrywise_push_stack(self.graph, selection_mask(picks, states.n_agents, self.n_features))
            new, sent = critic_round_push_entrywise(states, stack, beta_omega, td, self.entries_per_round)
            return new, sent, no_overhead

        proposals = sample_selections(self.selection_probs, self.rng)
        mats, distinct = build_entrywise_consensus_weights(self.graph, proposals, self.n_features)
        new = critic_round_consensus_entrywise(states, mats, beta_omega, td)
        sent = np.minimum(distinct, 1)
        return new, sent, distinct - sent


def _check_finite(states: NetworkCriticState, params: PolicyParams, t: int) -> None:
    if not (np.all(np.isfinite(states.omega)) and np.all(np.isfinite(states.mu))):
        raise FloatingPointError(f"Non-finite critic state at iteration {t}")
    if not np.all(np.isfinite(params.flat())):
        raise FloatingPointError(f"Non-finite actor parameters at iteration {t}")


def _max_row_norm(stacked: np.ndarray) -> float:
    """max_i ||x^i||_2 over an (N, K) array."""
    return float(np.max(np.linalg.norm(stacked, axis=1)))


def _check_bounded(z_max: float, bound: Optional[float], alpha: float, t: int) -> None:
    if bound is not None and z_max > bound:
        raise FloatingPointError(
            f"Critic diverged at iteration {t}: max_i ||z^i|| = {z_max:.3e} exceeds {bound:g} "
            f"(smallest push-sum weight so far {alpha:.3e})"
        )


class TrainingEngine:
    """
    Engine for decentralized actor-critic training runs.

    Validates the problem once at construction, then each call to run()
    executes config.horizon iterations from the initial state.
    """

    def __init__(
        self,
        config: RunConfig,
        mdp: NetworkedMDP,
        graph: DirectedGraph,
        features: FeatureMap,
        policy: Optional[SoftmaxPolicy] = None,
        params: Optional[PolicyParams] = None,
        oracle: bool = False,
    ):
        """
        Initialize the engine.

        Args:
            config: Run configuration
            mdp: Environment
            graph: Communication graph over the agents
            features: Critic feature map
            policy: Joint softmax policy; tabular one-hot policy features by default
            params: Initial theta; zeros by default
            oracle: Attach the exact oracle (J(theta_t) and omega_theta) to the metrics
        """
        self.config = config
        self.mdp = mdp
        self.graph = graph
        self.features = features
        self.policy = policy or SoftmaxPolicy.tabular(mdp.n_states, mdp.action_sizes)
        self.params = params if params is not None else self.policy.zeros()
        self.oracle = oracle
        self._validate_inputs()

    def _validate_inputs(self) -> None:
        errors = self.config.validation_errors(self.mdp.n_agents, self.features.n_features)
        if self.graph.n_agents != self.mdp.n_agents:
            errors.append(f"graph has {self.graph.n_agents} agents, MDP has {self.mdp.n_agents}")
        if tuple(self.policy.action_sizes) != self.mdp.action_sizes or self.policy.n_states != self.mdp.n_states:
            errors.append("policy features do not match the MDP's states and action sizes")
        if self.params.n_agents != self.policy.n_agents:
            errors.append(f"params have {self.params.n_agents} blocks, policy has {self.policy.n_agents} agents")
        errors.extend(f"Assumption 5: {e}" for e in validate_feature_map(self.features, self.mdp))

        if self.config.algorithm in PUSH_ALGORITHMS and not is_strongly_connected(self.graph):
            errors.append(f"{self.config.algorithm} requires a strongly connected graph")
        if self.config.algorithm in CONSENSUS_ALGORITHMS:
            if not self.graph.is_symmetric():
                errors.append(f"{self.config.algorithm} requires a symmetric edge set")
            elif not is_connected_undirected(self.graph):
                errors.append(f"{self.config.algorithm} requires a connected graph")
        if errors:
            raise ValueError("; ".join(errors))

        if not validate_ergodicity(self.mdp, self.policy.joint_table(self.params)):
            raise ValueError(
                "Assumption 1: MDP is not ergodic under the initial policy "
                f"(theta = {np.array2string(self.params.flat(), precision=4)})"
            )

    def _oracle_values(self, params: PolicyParams) -> Tuple[float, np.ndarray]:
        return (
            averaged_return(self.mdp, self.policy, params),
            td_fixed_point(self.mdp, self.policy, params, self.features),
        )

    def run(self, progress: bool = False, desc: str = "train") -> RunResult:
        """
        Execute the training loop.

        Args:
            progress: Show a tqdm progress bar
            desc: Progress bar label

        Returns:
            RunResult with the metric stream and final states
        """
        config = self.config
        mdp, policy, features = self.mdp, self.policy, self.features
        n_agents, n_features = mdp.n_agents, features.n_features

        env_seq, policy_seq, comm_seq = np.random.SeedSequence(config.seed).spawn(3)
        env_rng = np.random.default_rng(env_seq)
        policy_rng = np.random.default_rng(policy_seq)
        comm_rng = np.random.default_rng(comm_seq)

        scheme = CommunicationScheme(
            config.algorithm,
            self.graph,
            n_features,
            config.resolved_selection_probs(n_agents, n_features),
            comm_rng,
            config.entries_per_round,
        )
        critic_schedule, actor_schedule = config.critic_schedule, config.actor_schedule
        swaps = mdp.swap_tables()

        states = scheme.initial_states()
        params = self.params.copy()
        metrics = RunMetrics()
        scalars_sent = np.zeros(n_agents, dtype=int)
        overhead = np.zeros(n_agents, dtype=int)
        alpha, y_max = float(np.min(states.y)), float(np.max(states.y))
        z_max, omega_max = 0.0, 0.0

        cached_oracle = None
        if self.oracle and config.freeze_actor:
            cached_oracle = self._oracle_values(params)

        start = time.time()
        s = int(env_rng.integers(mdp.n_states))
        actions = policy.sample_actions(params, s, policy_rng)

        for t in tqdm(range(config.horizon), desc=desc, disable=not progress):
            a = mdp.joint_index(actions)
            sample = step(mdp, s, a, env_rng)
            next_actions = policy.sample_actions(params, sample.next_state, policy_rng)
            td = TDInput.from_sample(sample, mdp.joint_index(next_actions), features)

            beta_omega = 0.0 if config.freeze_critic_learning else critic_schedule(t)
            z_t = states.z
            states, sent, extra = scheme.round(states, beta_omega, td)
            scalars_sent += sent
            overhead += extra
            alpha = min(alpha, float(np.min(states.y)))
            y_max = max(y_max, float(np.max(states.y)))
            z_max = max(z_max, _max_row_norm(states.z))
            omega_max = max(omega_max, _max_row_norm(states.omega))
            _check_bounded(z_max, config.divergence_bound, alpha, t)

            if not config.freeze_actor:
                params = actor_step(
                    policy, params, z_t, sample, features, swaps, actions, actor_schedule(t)
                )
            _check_finite(states, params, t)

            if (t + 1) % config.log_every == 0:
                row = dict(
                    t=t + 1,
                    mu_mean=float(np.mean(states.mu)),
                    consensus_err=consensus_error(states),
                    scalars_per_agent=int(np.max(scalars_sent)),
                    y_min=float(np.min(states.y)),
                    y_max=float(np.max(states.y)),
                )
                if self.oracle:
                    J, omega_theta = cached_oracle or self._oracle_values(params)
                    row.update(J_theta=J, critic_err=critic_error(states, omega_theta))
                metrics.record(**row)

            s, actions = sample.next_state, next_actions

        final_J = None
        if self.oracle:
            final_J = cached_oracle[0] if cached_oracle else averaged_return(mdp, policy, params)
        return RunResult(
            metrics=metrics,
            states=states,
            params=params,
            scalars_sent=scalars_sent,
            coordination_overhead=overhead,
            alpha=alpha,
            y_max=y_max,
            z_max=z_max,
            omega_max=omega_max,
            iterations=config.horizon,
            wall_time=time.time() - start,
            final_J=final_J,
        )


def run(
    config: RunConfig,
    mdp: NetworkedMDP,
    graph: DirectedGraph,
    features: FeatureMap,
    policy: Optional[SoftmaxPolicy] = None,
    params: Optional[PolicyParams] = None,
    oracle: bool = False,
    progress: bool = False,
) -> RunResult:
    """Validate the inputs and execute one training run."""
    engine = TrainingEngine(config, mdp, graph, features, policy=policy, params=params, oracle=oracle)
    return engine.run(progress=progress)


@dataclass
class ConsensusTrace:
    """Frozen-learning averaging benchmark for one algorithm."""

    algorithm: str
    errors: np.ndarray
    rounds_to_tol: Optional[int]
    scalars_per_agent: int
    coordination_overhead: int


def consensus_benchmark(
    algorithm: str,
    graph: DirectedGraph,
    omega0: np.ndarray,
    max_rounds: int,
    tol: float = 1e-9,
    seed: int = 0,
    selection_probs: Optional[np.ndarray] = None,
    entries_per_round: int = 1,
) -> ConsensusTrace:
    """
    Mix a fixed omega0 with learning frozen until every agent's estimate
    is within tol (infinity norm) of the initial network average.

    Args:
        algorithm: One of ALGORITHMS
        graph: Communication graph
        omega0: (N, K) initial values
        max_rounds: Round budget
        tol: Consensus tolerance
        seed: Seed of the communication stream
        selection_probs: (N, K) or (K,) p^{ik}; uniform by default
        entries_per_round: Entries per agent per round (push-entrywise)

    Returns:
        ConsensusTrace; errors[r] is the error after r rounds and
        rounds_to_tol is None if the budget ran out
    """
    omega0 = np.asarray(omega0, dtype=float)
    n_agents, n_features = omega0.shape
    config = RunConfig(
        algorithm=algorithm,
        selection_probs=selection_probs,
        entries_per_round=entries_per_round,
        freeze_actor=True,
        freeze_critic_learning=True,
    )
    config.validate(n_agents, n_features)
    comm_seq = np.random.SeedSequence(seed).spawn(3)[2]
    scheme = CommunicationScheme(
        algorithm,
        graph,
        n_features,
        config.resolved_selection_probs(n_agents, n_features),
        np.random.default_rng(comm_seq),
        entries_per_round,
    )
    target = network_average(omega0)
    states = scheme.initial_states(omega0)
    errors = [consensus_error(states, target)]
    sent = np.zeros(n_agents, dtype=int)
    overhead = np.zeros(n_agents, dtype=int)
    rounds_to_tol = 0 if errors[0] < tol else None

    r = 0
    while rounds_to_tol is None and r < max_rounds:
        r += 1
        states, round_sent, extra = scheme.round(states, 0.0)
        sent += round_sent
        overhead += extra
        errors.append(consensus_error(states, target))
        if errors[-1] < tol:
            rounds_to_tol = r

    return ConsensusTrace(
        algorithm=algorithm,
        errors=np.asarray(errors),
        rounds_to_tol=rounds_to_tol,
        scalars_per_agent=int(np.max(sent)),
        coordination_overhead=int(np.max(overhead)),
    )
