"""
Validation of random weight-matrix sequences.

Checks the four conditions a consensus weight sequence must satisfy:
row stochasticity, a uniform lower bound on positive entries, column
stochasticity of the mean, and contraction of the mean consensus
quadratic form. Conditional independence from rewards is structural
(samplers only ever see their own random stream) and is not sampled.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple, Union
import itertools
import warnings

import numpy as np

from .topology import DirectedGraph
from .weights import build_block_matrix, consensus_quadratic_form, spectral_norm


FactorDraw = Callable[[np.random.Generator], Sequence[np.ndarray]]
MAX_ENUMERATED_SUPPORT = 4096


class WeightSampler:
    """I.i.d. source of weight matrices driven by a caller-supplied stream."""

    n_agents: int
    n_entries: int = 1

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def exact_mean(self) -> Optional[np.ndarray]:
        """E[C] when known in closed form, else None."""
        return None

    def exact_quadratic_mean(self) -> Optional[np.ndarray]:
        """E[C^T ((I - 11^T/N) kron I_K) C] when known in closed form, else None."""
        return None


def centering_operator(n_agents: int, n_entries: int = 1) -> np.ndarray:
    centering = np.eye(n_agents) - np.ones((n_agents, n_agents)) / n_agents
    return np.kron(centering, np.eye(n_entries))


class FixedSampler(WeightSampler):
    """Deterministic sequence C_t = C."""

    def __init__(self, matrix: np.ndarray, n_entries: int = 1):
        self.matrix = np.asarray(matrix, dtype=float)
        self.n_entries = n_entries
        self.n_agents = self.matrix.shape[0] // n_entries

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.matrix

    def exact_mean(self) -> np.ndarray:
        return self.matrix

    def exact_quadratic_mean(self) -> np.ndarray:
        centering = centering_operator(self.n_agents, self.n_entries)
        return self.matrix.T @ centering @ self.matrix


class FiniteSupportSampler(WeightSampler):
    """Draws one of a fixed list of matrices with given probabilities."""

    def __init__(self, matrices: Sequence[np.ndarray], probs: Optional[Sequence[float]] = None, n_entries: int = 1):
        self.matrices = [np.asarray(m, dtype=float) for m in matrices]
        if not self.matrices:
            raise ValueError("FiniteSupportSampler needs at least one matrix")
        if probs is None:
            probs = np.full(len(self.matrices), 1.0 / len(self.matrices))
        self.probs = np.asarray(probs, dtype=float)
        if self.probs.shape != (len(self.matrices),) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be a distribution over the support matrices")
        self.n_entries = n_entries
        self.n_agents = self.matrices[0].shape[0] // n_entries

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return self.matrices[int(rng.choice(len(self.matrices), p=self.probs))]

    def exact_mean(self) -> np.ndarray:
        return sum(p * m for p, m in zip(self.probs, self.matrices))

    def exact_quadratic_mean(self) -> np.ndarray:
        centering = centering_operator(self.n_agents, self.n_entries)
        return sum(p * (m.T @ centering @ m) for p, m in zip(self.probs, self.matrices))


class CallableSampler(WeightSampler):
    """Wraps a user function rng -> matrix; means are estimated by sampling."""

    def __init__(self, fn: Callable[[np.random.Generator], np.ndarray], n_agents: int, n_entries: int = 1):
        self.fn = fn
        self.n_agents = n_agents
        self.n_entries = n_entries

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return np.asarray(self.fn(rng), dtype=float)


class BlockSampler(WeightSampler):
    """
    Draws K independent per-entry matrices and returns their block matrix.

    Exact means are available whenever every factor sampler provides them.
    """

    def __init__(self, factor_samplers: Sequence[WeightSampler]):
        if not factor_samplers:
            raise ValueError("BlockSampler needs at least one factor sampler")
        self.factors = list(factor_samplers)
        self.n_agents = self.factors[0].n_agents
        self.n_entries = len(self.factors)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return build_block_matrix([f.sample(rng) for f in self.factors])

    def exact_mean(self) -> Optional[np.ndarray]:
        means = [f.exact_mean() for f in self.factors]
        if any(m is None for m in means):
            return None
        return build_block_matrix(means)

    def exact_quadratic_mean(self) -> Optional[np.ndarray]:
        forms = [f.exact_quadratic_mean() for f in self.factors]
        if any(q is None for q in forms):
            return None
        return build_block_matrix(forms)


@dataclass
class AssumptionReport:
    """Outcome of check_weight_assumptions."""

    row_sum_deviation: float
    min_positive_entry: float
    eta: float
    mean_column_sum_deviation: float
    quadratic_form_norm: float
    tol: float
    support_violations: int = 0
    exact_mean_used: bool = False
    notes: List[str] = field(default_factory=list)

    @property
    def row_stochastic(self) -> bool:
        return self.row_sum_deviation <= self.tol

    @property
    def entries_bounded_below(self) -> bool:
        return self.min_positive_entry >= self.eta - self.tol

    @property
    def mean_column_stochastic(self) -> bool:
        return self.mean_column_sum_deviation <= self.tol

    @property
    def contracts(self) -> bool:
        return self.quadratic_form_norm <= 1.0 - self.tol

    @property
    def respects_graph(self) -> bool:
        return self.support_violations == 0

    @property
    def passed(self) -> bool:
        return (
            self.row_stochastic
            and self.entries_bounded_below
            and self.mean_column_stochastic
            and self.contracts
            and self.respects_graph
        )

    def checks(self) -> List[Tuple[str, float, bool]]:
        """(name, measured statistic, passed) per condition."""
        return [
            ("row stochastic (max |row sum - 1|)", self.row_sum_deviation, self.row_stochastic),
            (f"min positive entry >= eta={self.eta:g}", self.min_positive_entry, self.entries_bounded_below),
            ("mean column stochastic (max |col sum - 1|)", self.mean_column_sum_deviation, self.mean_column_stochastic),
            ("spectral norm of mean consensus form < 1", self.quadratic_form_norm, self.contracts),
            ("respects communication graph (violations)", float(self.support_violations), self.respects_graph),
        ]


def _support_violations(matrix: np.ndarray, graph: DirectedGraph, n_entries: int) -> int:
    """Positive off-diagonal agent weights (i, j) without an edge j -> i."""
    n_agents = graph.n_agents
    count = 0
    for i in range(n_agents):
        for j in range(n_agents):
            if i == j or (j, i) in graph.edges:
                continue
            block = matrix[i * n_entries:(i + 1) * n_entries, j * n_entries:(j + 1) * n_entries]
            if np.any(block > 0):
                count += 1
    return count


def check_weight_assumptions(
    sampler: WeightSampler,
    n_samples: int,
    eta: float,
    tol: float,
    seed: int = 0,
    graph: Optional[DirectedGraph] = None,
) -> AssumptionReport:
    """
    Check the weight-sequence conditions on samples from a sampler.

    Args:
        sampler: Matrix source; exact means are used when it registers them
        n_samples: Number of i.i.d. samples to draw
        eta: Required lower bound on positive entries
        tol: Tolerance for the stochasticity and contraction checks
        seed: Seed of the sampling stream
        graph: Optional graph the samples must respect

    Returns:
        AssumptionReport with the measured statistics
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be at least 1, got {n_samples}")

    rng = np.random.default_rng(seed)
    n_entries = sampler.n_entries
    centering = centering_operator(sampler.n_agents, n_entries)

    row_dev = 0.0
    min_pos = np.inf
    violations = 0
    mean_acc = None
    quad_acc = None
    for _ in range(n_samples):
        c = sampler.sample(rng)
        row_dev = max(row_dev, float(np.max(np.abs(c.sum(axis=1) - 1.0))))
        positive = c[c > 0]
        if positive.size:
            min_pos = min(min_pos, float(positive.min()))
        if graph is not None:
            violations += _support_violations(c, graph, n_entries)
        mean_acc = c.copy() if mean_acc is None else mean_acc + c
        quad = c.T @ centering @ c
        quad_acc = quad if quad_acc is None else quad_acc + quad

    notes = []
    mean = sampler.exact_mean()
    quad_mean = sampler.exact_quadratic_mean()
    exact = mean is not None and quad_mean is not None
    if mean is None:
        mean = mean_acc / n_samples
        notes.append("E[C] estimated by sample mean")
    if quad_mean is None:
        quad_mean = quad_acc / n_samples
        notes.append("E[C^T (I - 11^T/N) C] estimated by sample mean")
    if not exact and n_samples == 1:
        warnings.warn("Sampler has no exact mean and only one sample was drawn")

    return AssumptionReport(
        row_sum_deviation=row_dev,
        min_positive_entry=float(min_pos),
        eta=eta,
        mean_column_sum_deviation=float(np.max(np.abs(mean.sum(axis=0) - 1.0))),
        quadratic_form_norm=spectral_norm(0.5 * (quad_mean + quad_mean.T)),
        tol=tol,
        support_violations=violations,
        exact_mean_used=exact,
        notes=notes,
    )


def _factor_draws(
    factors: Union[Sequence[WeightSampler], FactorDraw],
    n_samples: int,
    seed: int,
) -> List[Tuple[float, List[np.ndarray]]]:
    """
    Weighted joint draws of the K per-entry matrices.

    Independent finite-support factors are enumerated exactly when the
    product support is small; everything else is sampled.
    """
    if callable(factors):
        rng = np.random.default_rng(seed)
        return [(1.0 / n_samples, [np.asarray(m, dtype=float) for m in factors(rng)]) for _ in range(n_samples)]

    factors = list(factors)
    if not factors:
        raise ValueError("Need at least one factor sampler")
    if all(isinstance(f, FiniteSupportSampler) for f in factors):
        support = int(np.prod([len(f.matrices) for f in factors]))
        if support <= MAX_ENUMERATED_SUPPORT:
            return [
                (float(np.prod([f.probs[c] for f, c in zip(factors, choice)])),
                 [f.matrices[c] for f, c in zip(factors, choice)])
                for choice in itertools.product(*(range(len(f.matrices)) for f in factors))
            ]
    rng = np.random.default_rng(seed)
    return [(1.0 / n_samples, [f.sample(rng) for f in factors]) for _ in range(n_samples)]


def _symmetric_norm(m: np.ndarray) -> float:
    return float(np.linalg.norm(0.5 * (m + m.T), 2))


def block_spectral_identity(
    factors: Union[Sequence[WeightSampler], FactorDraw],
    n_samples: int = 200,
    seed: int = 0,
) -> Tuple[float, float]:
    """
    Compare the block consensus form with the per-entry forms.

    The block side is E[Cbar^T ((I - 11^T/N) kron I_K) Cbar] with Cbar built
    by build_block_matrix from each joint draw; the factor side is
    max_k ||E[(C^k)^T (I - 11^T/N) C^k]||. Both use the same draws, so the
    factors may be drawn jointly (coordinated entry choices) as well as
    independently.

    Args:
        factors: Per-entry samplers drawn independently, or a function
            rng -> K per-entry matrices drawn jointly
        n_samples: Draws used when the support is not enumerated
        seed: Seed of the sampling stream

    Returns:
        (block norm, max factor norm)
    """
    if n_samples < 1:
        raise ValueError(f"n_samples must be at least 1, got {n_samples}")
    draws = _factor_draws(factors, n_samples, seed)
    n_agents, n_entries = draws[0][1][0].shape[0], len(draws[0][1])
    centering = centering_operator(n_agents, n_entries)

    block_form = np.zeros((n_agents * n_entries, n_agents * n_entries))
    factor_forms = [np.zeros((n_agents, n_agents)) for _ in range(n_entries)]
    for weight, mats in draws:
        block = build_block_matrix(mats)
        block_form += weight * (block.T @ centering @ block)
        for k, mat in enumerate(mats):
            factor_forms[k] += weight * consensus_quadratic_form(mat)
    return _symmetric_norm(block_form), max(_symmetric_norm(f) for f in factor_forms)
