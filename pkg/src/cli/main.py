"""
Command-line entry point.

Usage:
    python -m src.cli.main run --config experiment.yaml [--seeds 5] [--out-dir results]
    python -m src.cli.main oracle --config experiment.yaml
    python -m src.cli.main validate --config experiment.yaml
    python -m src.cli.main consensus-test --config experiment.yaml

Exit codes: 0 success, 2 validation failure, 3 numeric failure.
"""

import argparse
import dataclasses
import json
import sys
import warnings
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from ..algo.config import ALGORITHMS, CONSENSUS_ALGORITHMS, PUSH_ALGORITHMS, RunConfig
from ..algo.engine import TrainingEngine, consensus_benchmark
from ..algo.rounds import sample_selections
from ..critic.linear import save_critic_states
from ..env.features import FeatureMap, validate_feature_map
from ..env.mdp import NetworkedMDP, induced_chain, validate_ergodicity
from ..graph.topology import DirectedGraph, is_connected_undirected, is_strongly_connected
from ..graph.validator import (
    CallableSampler,
    FiniteSupportSampler,
    FixedSampler,
    block_spectral_identity,
    check_weight_assumptions,
)
from ..graph.weights import (
    build_block_matrix,
    build_entrywise_consensus_weights,
    build_metropolis_weights,
    build_push_sum_weights,
)
from ..oracle.evaluate import all_policy_gradients, evaluate_policy, format_report, stationary_distribution
from ..policy.softmax import PolicyParams, SoftmaxPolicy, save_params
from .config import ExperimentConfig, load_experiment_config


EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERIC = 3
BLOCK_NORM_TOL = 1e-9


class Reporter:
    """Prefixed stdout messages, silenced by --quiet."""

    def __init__(self, command: str, quiet: bool = False):
        self.command = command
        self.quiet = quiet

    def __call__(self, message: str) -> None:
        if not self.quiet:
            print(f"[{self.command}] {message}")


def _apply_overrides(config: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    """Command-line flags take precedence over config and environment values."""
    if args.out_dir is not None:
        config.output_dir = Path(args.out_dir)
    if args.seeds is not None:
        if args.seeds < 1:
            raise ValueError(f"--seeds must be at least 1, got {args.seeds}")
        config.n_seeds = args.seeds
    if args.log_every is not None:
        config.run = dataclasses.replace(config.run, log_every=args.log_every)
    return config


def _build_problem(config: ExperimentConfig) -> Tuple[NetworkedMDP, DirectedGraph, FeatureMap, SoftmaxPolicy, PolicyParams]:
    mdp = config.build_mdp()
    graph = config.build_graph(mdp.n_agents)
    features = config.build_features(mdp)
    policy, params = config.build_policy(mdp)
    return mdp, graph, features, policy, params


def _run_seed(
    index: int,
    seed: int,
    run_config: RunConfig,
    mdp: NetworkedMDP,
    graph: DirectedGraph,
    features: FeatureMap,
    policy: SoftmaxPolicy,
    params: PolicyParams,
    attach_oracle: bool,
    out_dir: Path,
    progress: bool,
) -> Dict[str, object]:
    """Run one seed and write its metrics, final states and summary."""
    engine = TrainingEngine(
        dataclasses.replace(run_config, seed=seed),
        mdp,
        graph,
        features,
        policy=policy,
        params=params,
        oracle=attach_oracle,
    )
    result = engine.run(progress=progress, desc=f"seed {index}")
    result.metrics.write_csv(out_dir / f"metrics_seed{index}.csv")
    save_critic_states(result.states, out_dir / f"critic_seed{index}.txt")
    save_params(result.params, out_dir / f"policy_seed{index}.txt")
    summary = {"seed_index": index, "seed": seed, "algorithm": run_config.algorithm, **result.summary()}
    (out_dir / f"summary_seed{index}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return {**summary, "wall_time_s": result.wall_time}


def cmd_run(config: ExperimentConfig, say: Reporter) -> int:
    mdp, graph, features, policy, params = _build_problem(config)
    # Validation precedes execution: constructing the engine checks every input.
    TrainingEngine(config.run, mdp, graph, features, policy=policy, params=params, oracle=config.attach_oracle)

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    seeds = config.instance_seeds()
    say(
        f"algorithm={config.run.algorithm} N={mdp.n_agents} |S|={mdp.n_states} "
        f"K={features.n_features} T={config.run.horizon} seeds={len(seeds)} n_jobs={config.n_jobs}"
    )

    show_progress = not say.quiet and config.n_jobs == 1
    summaries = Parallel(n_jobs=config.n_jobs)(
        delayed(_run_seed)(
            k, seed, config.run, mdp, graph, features, policy, params,
            config.attach_oracle, out_dir, show_progress,
        )
        for k, seed in enumerate(seeds)
    )
    for summary in summaries:
        J = summary["J_theta"]
        J_text = f" J={J:.6f}" if J is not None else ""
        say(
            f"seed={summary['seed_index']} mu_mean={summary['mu_mean']:.6f}{J_text} "
            f"alpha={summary['alpha']:.3e} z_max={summary['z_max']:.3e} time={summary['wall_time_s']:.1f}s"
        )
    say(f"Wrote outputs for {len(summaries)} seed(s) to {out_dir}")
    return EXIT_OK


def cmd_oracle(config: ExperimentConfig, say: Reporter) -> int:
    mdp, _, features, policy, params = _build_problem(config)
    table = policy.joint_table(params)
    if not validate_ergodicity(mdp, table):
        raise ValueError(
            "Assumption 1: MDP is not ergodic under the policy "
            f"theta = {np.array2string(params.flat(), precision=4)}"
        )
    errors = validate_feature_map(features, mdp)
    if errors:
        raise ValueError("Assumption 5: " + "; ".join(errors))

    evaluation = evaluate_policy(mdp, policy, params, features)
    report = format_report(evaluation, all_policy_gradients(mdp, policy, params))

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "oracle_report.txt").write_text(report)
    say(f"J={evaluation.J:.17g}")
    say(f"Wrote {out_dir / 'oracle_report.txt'}")
    return EXIT_OK


def _assumption_two_sampler(config: ExperimentConfig, graph: DirectedGraph, n_features: int):
    """Weight sampler named by validate.sampler; 'auto' follows the run's algorithm."""
    kind = config.validate.get("sampler", "auto")
    if kind == "auto":
        kind = {
            "consensus-full": "metropolis",
            "consensus-entrywise": "entrywise-metropolis",
        }.get(config.run.algorithm)
    if kind is None:
        return None
    n_agents = graph.n_agents
    if kind == "identity":
        return FixedSampler(np.eye(n_agents * n_features), n_entries=n_features)
    if kind == "metropolis":
        metropolis = build_metropolis_weights(graph)
        return FixedSampler(build_block_matrix([metropolis] * n_features), n_entries=n_features)
    if kind == "entrywise-metropolis":
        probs = config.run.resolved_selection_probs(n_agents, n_features)

        def draw(rng: np.random.Generator) -> np.ndarray:
            mats, _ = build_entrywise_consensus_weights(graph, sample_selections(probs, rng), n_features)
            return build_block_matrix(mats)

        return CallableSampler(draw, n_agents, n_entries=n_features)
    raise ValueError(
        f"Unknown validate.sampler {kind!r}; valid: auto, identity, metropolis, entrywise-metropolis"
    )


def _per_entry_factors(config: ExperimentConfig, graph: DirectedGraph, n_features: int):
    """
    Per-entry matrices for the block norm check: the coordinated draws of
    entry-wise consensus, else independent mix-or-keep Metropolis factors.
    """
    probs = config.run.resolved_selection_probs(graph.n_agents, n_features)
    if config.run.algorithm == "consensus-entrywise":
        def draw(rng: np.random.Generator) -> List[np.ndarray]:
            mats, _ = build_entrywise_consensus_weights(graph, sample_selections(probs, rng), n_features)
            return mats

        return draw
    metropolis = build_metropolis_weights(graph)
    identity = np.eye(graph.n_agents)
    return [FiniteSupportSampler([metropolis, identity], [p, 1.0 - p]) for p in probs.mean(axis=0)]


def cmd_validate(config: ExperimentConfig, say: Reporter) -> int:
    checks: List[Tuple[str, str, bool]] = []

    def record(name: str, detail: str, passed: bool) -> None:
        checks.append((name, detail, passed))

    run_errors = config.run.validation_errors()
    record("run config", "; ".join(run_errors) or "ok", not run_errors)

    mdp, graph, features, policy, params = _build_problem(config)

    # Assumption 1
    table = policy.joint_table(params)
    ergodic = validate_ergodicity(mdp, table)
    detail = f"min pi(s, a) = {table.min():.3e}"
    if ergodic:
        d_theta = stationary_distribution(induced_chain(mdp, table))
        detail += f", min d_theta(s) = {d_theta.min():.3e}"
    record("Assumption 1: ergodic under initial policy", detail, ergodic)

    # Communication graph
    algorithm = config.run.algorithm
    if algorithm in PUSH_ALGORITHMS or algorithm not in ALGORITHMS:
        connected = is_strongly_connected(graph)
        record("graph strongly connected", f"N = {graph.n_agents}, |E| = {len(graph.edges)}", connected)
        if connected:
            push = build_push_sum_weights(graph)
            deviation = float(np.max(np.abs(push.sum(axis=0) - 1.0)))
            record("push-sum weights column stochastic", f"max |col sum - 1| = {deviation:.3e}", deviation <= 1e-12)
    if algorithm in CONSENSUS_ALGORITHMS:
        symmetric = graph.is_symmetric()
        record("graph symmetric", f"|E| = {len(graph.edges)}", symmetric)
        record("graph connected", f"N = {graph.n_agents}", symmetric and is_connected_undirected(graph))

    # Assumption 2
    n_features = features.n_features
    if graph.is_symmetric():
        sampler = _assumption_two_sampler(config, graph, n_features)
        if sampler is not None:
            report = check_weight_assumptions(
                sampler,
                n_samples=int(config.validate.get("n_samples", 200)),
                eta=float(config.validate.get("eta", 1.0 / (graph.n_agents + 1))),
                tol=float(config.validate.get("tol", 1e-9)),
                seed=config.master_seed,
                graph=graph,
            )
            for name, value, passed in report.checks():
                record(f"Assumption 2: {name}", f"{value:.3e}", passed)

        block_norm, factor_norm = block_spectral_identity(
            _per_entry_factors(config, graph, n_features),
            n_samples=int(config.validate.get("n_samples", 200)),
            seed=config.master_seed,
        )
        record(
            "block norm equals max per-entry norm",
            f"{block_norm:.12f} vs {factor_norm:.12f}",
            abs(block_norm - factor_norm) <= BLOCK_NORM_TOL,
        )

    # Assumption 5
    feature_errors = validate_feature_map(features, mdp)
    rank = np.linalg.matrix_rank(features.matrix)
    record("Assumption 5: feature rank and constant direction", "; ".join(feature_errors) or f"rank {rank}", not feature_errors)

    for name, detail, passed in checks:
        say(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
    all_passed = all(passed for _, _, passed in checks)
    say("all checks passed" if all_passed else "validation failed")
    return EXIT_OK if all_passed else EXIT_VALIDATION


def cmd_consensus_test(config: ExperimentConfig, say: Reporter) -> int:
    spec = config.consensus
    n_agents = config.graph.get("n_agents")
    if n_agents is None and config.mdp:
        n_agents = config.build_mdp().n_agents
    graph = config.build_graph(n_agents)
    n_features = int(spec.get("n_features", config.features.get("n_features", 8)))
    max_rounds = int(spec.get("max_rounds", 20_000))
    tol = float(spec.get("tol", 1e-9))
    seed = int(spec.get("seed", config.master_seed))
    algorithms = spec.get("algorithms") or list(ALGORITHMS)

    rng = np.random.default_rng(seed)
    omega0 = rng.uniform(-1.0, 1.0, size=(graph.n_agents, n_features))

    rows = []
    for algorithm in algorithms:
        if algorithm in CONSENSUS_ALGORITHMS and not graph.is_symmetric():
            warnings.warn(f"Skipping {algorithm}: it needs a symmetric graph")
            continue
        trace = consensus_benchmark(
            algorithm,
            graph,
            omega0,
            max_rounds=max_rounds,
            tol=tol,
            seed=seed,
            selection_probs=config.run.selection_probs,
        )
        rows.append({
            "algorithm": algorithm,
            "rounds_to_tol": trace.rounds_to_tol if trace.rounds_to_tol is not None else -1,
            "scalars_per_agent": trace.scalars_per_agent,
            "coordination_overhead": trace.coordination_overhead,
            "final_error": float(trace.errors[-1]),
        })
        reached = f"{trace.rounds_to_tol} rounds" if trace.rounds_to_tol is not None else "not reached"
        say(
            f"{algorithm}: {reached}, {trace.scalars_per_agent} scalars/agent, "
            f"overhead {trace.coordination_overhead}, final error {trace.errors[-1]:.3e}"
        )

    out_dir = config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows).to_csv(out_dir / "consensus_test.csv", index=False, float_format="%.17g")
    say(f"Wrote {out_dir / 'consensus_test.csv'}")
    return EXIT_OK


COMMANDS = {
    "run": cmd_run,
    "oracle": cmd_oracle,
    "validate": cmd_validate,
    "consensus-test": cmd_consensus_test,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML experiment file")
    common.add_argument("--out-dir", default=None, help="Output directory (default: output.dir, $PSAC_OUTPUT_DIR, results)")
    common.add_argument("--seeds", type=int, default=None, help="Number of seeds (default: output.seeds or 1)")
    common.add_argument("--log-every", type=int, default=None, help="Metric logging cadence (default: run.log_every or 100)")
    common.add_argument("--quiet", action="store_true", help="Suppress progress output")

    parser = argparse.ArgumentParser(
        prog="python -m src.cli.main",
        description="Decentralized push-sum actor-critic experiments",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    subparsers.add_parser("run", parents=[common], help="Train and write metrics per seed")
    subparsers.add_parser("oracle", parents=[common], help="Exact policy evaluation report")
    subparsers.add_parser("validate", parents=[common], help="Check the modelling assumptions")
    subparsers.add_parser("consensus-test", parents=[common], help="Frozen-learning averaging benchmark")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    say = Reporter(args.command, quiet=args.quiet)
    try:
        config = _apply_overrides(load_experiment_config(args.config), args)
        return COMMANDS[args.command](config, say)
    except (ValueError, FileNotFoundError) as e:
        print(f"[{args.command}] error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except FloatingPointError as e:
        print(f"[{args.command}] numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
