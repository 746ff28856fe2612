"""
Linear feature map for the critic, Q(s, a; z) = z^T phi(s, a).
"""

from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Union

import numpy as np

from .mdp import NetworkedMDP


CONSTANT_RESIDUAL_TOL = 1e-6


@dataclass(eq=False)
class FeatureMap:
    """
    Feature table phi[s, a] in R^K over states and joint actions.

    The flattened (|S||A|, K) matrix must have full column rank and must not
    span the all-ones vector.
    """

    phi: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        if self.phi.ndim != 3:
            raise ValueError(f"phi must have shape (n_states, n_joint_actions, K), got {self.phi.shape}")

    @property
    def n_features(self) -> int:
        return self.phi.shape[2]

    @property
    def matrix(self) -> np.ndarray:
        """Phi as an (|S||A|, K) matrix, rows in (s, a) row-major order."""
        return self.phi.reshape(-1, self.n_features)

    @property
    def max_norm(self) -> float:
        return float(np.max(np.abs(self.phi))) if self.phi.size else 0.0


def constant_residual(matrix: np.ndarray) -> float:
    """Least-squares residual norm of Phi u = 1."""
    ones = np.ones(matrix.shape[0])
    u, *_ = np.linalg.lstsq(matrix, ones, rcond=None)
    return float(np.linalg.norm(matrix @ u - ones))


def validate_feature_map(features: FeatureMap, mdp: Optional[NetworkedMDP] = None) -> List[str]:
    """
    Check rank and constant-direction conditions on the feature matrix.

    Returns:
        List of validation error messages (empty if valid)
    """
    errors = []
    if mdp is not None and features.phi.shape[:2] != (mdp.n_states, mdp.n_joint_actions):
        errors.append(
            f"feature table covers {features.phi.shape[:2]} (state, action) pairs, "
            f"MDP has {(mdp.n_states, mdp.n_joint_actions)}"
        )
        return errors
    if not np.all(np.isfinite(features.phi)):
        errors.append("features must be finite")
        return errors

    matrix = features.matrix
    rank = np.linalg.matrix_rank(matrix)
    if rank < features.n_features:
        errors.append(f"feature matrix has rank {rank} < K={features.n_features}")
    residual = constant_residual(matrix)
    if residual <= CONSTANT_RESIDUAL_TOL:
        errors.append(f"feature matrix spans the constant vector (residual {residual:.3e})")
    return errors


def generate_features(
    mdp: NetworkedMDP,
    n_features: int,
    seed: Optional[int] = None,
    max_attempts: int = 100,
) -> FeatureMap:
    """
    Draw uniform [-1, 1] features until the rank and constant-direction
    conditions hold.

    Raises:
        ValueError: if K >= |S||A| or no valid draw is found
    """
    n_rows = mdp.n_states * mdp.n_joint_actions
    if not 1 <= n_features < n_rows:
        raise ValueError(f"Need 1 <= K < |S||A| = {n_rows}, got K={n_features}")

    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        phi = rng.uniform(-1.0, 1.0, size=(mdp.n_states, mdp.n_joint_actions, n_features))
        features = FeatureMap(phi)
        if not validate_feature_map(features, mdp):
            return features
    raise ValueError(f"No valid feature map found in {max_attempts} attempts")


def format_features(features: FeatureMap) -> str:
    n_states, n_joint, n_features = features.phi.shape
    lines = ["# feature-map", f"shape {n_states} {n_joint} {n_features}"]
    for row in features.matrix:
        lines.append(" ".join(f"{x:.17g}" for x in row))
    return "\n".join(lines) + "\n"


def parse_features(text: str) -> FeatureMap:
    lines = [line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#")]
    key, *dims = lines[0].split()
    if key != "shape":
        raise ValueError(f"Expected 'shape' header, got {lines[0]!r}")
    shape = tuple(int(d) for d in dims)
    values = np.array([[float(x) for x in row.split()] for row in lines[1:]])
    return FeatureMap(values.reshape(shape))


def save_features(features: FeatureMap, path: Union[str, Path]) -> None:
    Path(path).write_text(format_features(features))


def load_features(path: Union[str, Path]) -> FeatureMap:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Feature file not found at {path}")
    return parse_features(path.read_text())
