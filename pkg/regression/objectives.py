"""
objectives.py

Training objectives. Each objective evaluates per-sample losses of head
outputs (n, K) and their derivatives in the outputs, and knows which head it
can train.
"""

import numpy as np

from scoring.domain import ScoreSpec, check_probability
from scoring.exceptions import ConfigurationError, DomainError
from scoring.scores import bregman_loss, bregman_loss_gradient, composite_score_arrays, mean_bregman_loss
from scoring.serializers import ScoreSpecSerializer

from .network import HeadType


class PinballObjective:
    """
    Weighted sum of pinball losses, sum_j eta_j L_{tau_j}(y; Q_j).

    Attributes:
        levels (tuple[float]): Levels of the quantile head.
        weights (np.ndarray | None): eta_j; None until resolved by training.
    """

    name = "pinball"

    def __init__(self, levels, weights=None):
        self.levels = tuple(check_probability(t, "level") for t in levels)
        self.weights = None if weights is None else np.asarray(weights, dtype=float).reshape(-1)
        if self.weights is not None:
            if self.weights.size != len(self.levels):
                raise DomainError(f"{self.weights.size} weights for {len(self.levels)} levels")
            if not np.all(self.weights > 0):
                raise DomainError("pinball weights must be positive")

    def with_weights(self, weights):
        return PinballObjective(self.levels, weights)

    def check(self, cfg):
        if not cfg.head.is_quantile:
            raise ConfigurationError(f"pinball objective cannot train a {cfg.head.value} head")
        if tuple(cfg.levels) != self.levels:
            raise ConfigurationError(f"objective levels {self.levels} differ from head levels {cfg.levels}")

    def _weights(self):
        return np.ones(len(self.levels)) if self.weights is None else self.weights

    def level_losses(self, y, outputs):
        """Unweighted pinball losses, (n, K)."""
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        taus = np.array(self.levels)
        return (y - outputs) * (taus - (y <= outputs))

    def losses_and_gradient(self, y, outputs):
        y = np.asarray(y, dtype=float).reshape(-1, 1)
        taus = np.array(self.levels)
        below = (y <= outputs).astype(float)
        weights = self._weights()
        losses = ((y - outputs) * (taus - below)) @ weights
        return losses, weights * (below - taus)

    def losses(self, y, outputs):
        return self.losses_and_gradient(y, outputs)[0]

    def loss(self, y, outputs):
        return float(np.mean(self.losses(y, outputs)))

    def describe(self):
        return {
            "objective": self.name,
            "levels": list(self.levels),
            "weights": None if self.weights is None else self.weights.tolist(),
        }


class CompositeObjective:
    """Composite score of the triplet head outputs (e-, v, e+)."""

    name = "composite"

    def __init__(self, spec: ScoreSpec):
        if not isinstance(spec, ScoreSpec):
            raise DomainError("composite objective needs a ScoreSpec")
        self.spec = spec

    def check(self, cfg):
        if cfg.head != HeadType.COMPOSITE_ADDITIVE:
            raise ConfigurationError(f"composite objective cannot train a {cfg.head.value} head")
        if cfg.tau != self.spec.tau:
            raise ConfigurationError(f"score level {self.spec.tau} differs from head level {cfg.tau}")

    def losses_and_gradient(self, y, outputs):
        y = np.asarray(y, dtype=float).reshape(-1)
        losses, d_minus, d_v, d_plus = composite_score_arrays(
            y, outputs[:, 0], outputs[:, 1], outputs[:, 2], self.spec, with_gradient=True
        )
        return losses, np.column_stack([d_minus, d_v, d_plus])

    def losses(self, y, outputs):
        y = np.asarray(y, dtype=float).reshape(-1)
        return composite_score_arrays(y, outputs[:, 0], outputs[:, 1], outputs[:, 2], self.spec)

    def loss(self, y, outputs):
        return float(np.mean(self.losses(y, outputs)))

    def describe(self):
        return {"objective": self.name, **self.spec.describe()}


class BregmanObjective:
    """Bregman divergence of phi_b (Tweedie deviance, gamma deviance for b = 0) of a mean head."""

    name = "bregman"

    def __init__(self, b=0.0):
        self.b = float(b)

    def check(self, cfg):
        if cfg.head != HeadType.MEAN:
            raise ConfigurationError(f"bregman objective cannot train a {cfg.head.value} head")

    def losses_and_gradient(self, y, outputs):
        y = np.asarray(y, dtype=float).reshape(-1)
        mu = outputs[:, 0]
        return bregman_loss(y, mu, self.b), bregman_loss_gradient(y, mu, self.b)[:, None]

    def losses(self, y, outputs):
        return bregman_loss(np.asarray(y, dtype=float).reshape(-1), outputs[:, 0], self.b)

    def loss(self, y, outputs):
        return mean_bregman_loss(y, outputs[:, 0], self.b)

    def describe(self):
        return {"objective": self.name, "b": self.b}


def objective_from_dict(data):
    """Rebuild an objective from its `describe()` output (model files)."""
    kind = data.get("objective")
    if kind == PinballObjective.name:
        return PinballObjective(data["levels"], data.get("weights"))
    if kind == BregmanObjective.name:
        return BregmanObjective(data["b"])
    if kind == CompositeObjective.name:
        serializer = ScoreSpecSerializer(data={k: v for k, v in data.items() if k != "objective" and v is not None})
        serializer.is_valid(raise_exception=True)
        return CompositeObjective(serializer.validated_data["spec"])
    raise ConfigurationError(f"unknown objective {kind!r}")
