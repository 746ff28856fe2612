"""
Run configuration for the training loops.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .schedules import StepSchedule, validate_two_timescale


ALGORITHMS = ("consensus-full", "consensus-entrywise", "push-full", "push-entrywise")
PUSH_ALGORITHMS = ("push-full", "push-entrywise")
CONSENSUS_ALGORITHMS = ("consensus-full", "consensus-entrywise")
PROB_SUM_TOL = 1e-12


@dataclass
class RunConfig:
    """
    Parameters of one training run.

    Attributes:
        algorithm: One of ALGORITHMS
        c_omega, c_theta: Stepsize constants
        nu_omega, nu_theta: Stepsize exponents
        horizon: Number of iterations T
        selection_probs: p^{ik}, shape (K,) shared by all agents or (N, K);
            None means uniform
        entries_per_round: Entries each agent selects per round (push-entrywise)
        freeze_actor: Keep theta fixed
        freeze_critic_learning: Skip TD and mu updates (pure mixing)
        seed: Master seed of the run
        log_every: Metric logging cadence in iterations
        divergence_bound: Abort once some agent's critic norm ||z^i|| exceeds
            this value; None disables the check
    """

    algorithm: str = "push-entrywise"
    c_omega: float = 1.0
    c_theta: float = 1.0
    nu_omega: float = 0.65
    nu_theta: float = 0.85
    horizon: int = 10_000
    selection_probs: Optional[np.ndarray] = field(default=None, repr=False)
    entries_per_round: int = 1
    freeze_actor: bool = False
    freeze_critic_learning: bool = False
    seed: int = 0
    log_every: int = 100
    divergence_bound: Optional[float] = 1e6

    @property
    def critic_schedule(self) -> StepSchedule:
        return StepSchedule(self.c_omega, self.nu_omega)

    @property
    def actor_schedule(self) -> StepSchedule:
        return StepSchedule(self.c_theta, self.nu_theta)

    def resolved_selection_probs(self, n_agents: int, n_features: int) -> np.ndarray:
        """p^{ik} as an (N, K) array."""
        if self.selection_probs is None:
            return np.full((n_agents, n_features), 1.0 / n_features)
        probs = np.asarray(self.selection_probs, dtype=float)
        if probs.ndim == 1:
            probs = np.broadcast_to(probs, (n_agents, probs.size)).copy()
        return probs

    def validation_errors(self, n_agents: Optional[int] = None, n_features: Optional[int] = None) -> List[str]:
        """
        Validate the configuration, optionally against problem dimensions.

        Returns:
            List of validation error messages (empty if valid)
        """
        errors = []
        if self.algorithm not in ALGORITHMS:
            errors.append(f"unknown algorithm {self.algorithm!r}; valid tags: {', '.join(ALGORITHMS)}")
        errors.extend(validate_two_timescale(self.critic_schedule, self.actor_schedule))
        if self.horizon < 0:
            errors.append(f"horizon must be nonnegative, got {self.horizon}")
        if self.log_every < 1:
            errors.append(f"log_every must be positive, got {self.log_every}")
        if self.divergence_bound is not None and not self.divergence_bound > 0:
            errors.append(f"divergence_bound must be positive or null, got {self.divergence_bound}")
        if self.entries_per_round < 1:
            errors.append(f"entries_per_round must be positive, got {self.entries_per_round}")
        elif self.entries_per_round > 1 and self.algorithm != "push-entrywise":
            errors.append("entries_per_round > 1 is only supported by push-entrywise")

        if self.selection_probs is not None:
            probs = np.asarray(self.selection_probs, dtype=float)
            if probs.ndim not in (1, 2):
                errors.append(f"selection_probs must be 1- or 2-dimensional, got shape {probs.shape}")
            elif np.any(probs <= 0):
                errors.append("selection probabilities must be positive")
            else:
                deviation = np.max(np.abs(probs.sum(axis=-1) - 1.0))
                if deviation > PROB_SUM_TOL:
                    errors.append(f"selection probabilities must sum to 1 (deviation {deviation:.3e})")

        if n_features is not None:
            if self.entries_per_round > n_features:
                errors.append(f"entries_per_round={self.entries_per_round} exceeds K={n_features}")
            if self.selection_probs is not None:
                shape = np.shape(self.selection_probs)
                expected = [(n_features,)]
                if n_agents is not None:
                    expected.append((n_agents, n_features))
                if shape not in expected:
                    errors.append(f"selection_probs shape {shape} does not match {expected}")
        return errors

    def validate(self, n_agents: Optional[int] = None, n_features: Optional[int] = None) -> None:
        errors = self.validation_errors(n_agents, n_features)
        if errors:
            raise ValueError("Invalid run config: " + "; ".join(errors))
