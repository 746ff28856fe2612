"""
Diminishing stepsize schedules beta_t = c / (t + 1)^nu.
"""

from dataclasses import dataclass
from typing import List

import numpy as np


@dataclass(frozen=True)
class StepSchedule:
    constant: float = 1.0
    exponent: float = 0.65

    def __call__(self, t: int) -> float:
        return self.constant / (t + 1) ** self.exponent

    def sequence(self, horizon: int) -> np.ndarray:
        """beta_0 .. beta_{horizon-1}."""
        return self.constant / np.arange(1, horizon + 1, dtype=float) ** self.exponent


def validate_two_timescale(critic: StepSchedule, actor: StepSchedule) -> List[str]:
    """
    Check the critic/actor pair: sum beta = inf, sum beta^2 < inf and
    beta_theta = o(beta_omega).

    Returns:
        List of validation error messages (empty if valid)
    """
    errors = []
    if not 0.5 < critic.exponent < actor.exponent <= 1.0:
        errors.append(
            f"stepsize exponents must satisfy 0.5 < nu_omega < nu_theta <= 1, "
            f"got nu_omega={critic.exponent}, nu_theta={actor.exponent}"
        )
    if not 0.0 < critic.constant <= 1.0:
        errors.append(f"c_omega must be in (0, 1], got {critic.constant}")
    if actor.constant <= 0.0:
        errors.append(f"c_theta must be positive, got {actor.constant}")
    return errors
