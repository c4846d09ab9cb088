"""Losses, l2-ball constrained linear models, and per-group empirical risk."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional

import numpy as np

__all__ = [
    "LossKind",
    "LinearModel",
    "RiskVector",
    "loss_value",
    "losses",
    "loss_derivative",
    "loss_subgradient",
    "project_l2_ball",
    "group_risks",
]


class LossKind(enum.Enum):
    HINGE = "hinge"
    LOGISTIC = "logistic"
    ZERO_ONE = "zero_one"
    SQUARE = "square"

    @property
    def convex(self) -> bool:
        return self is not LossKind.ZERO_ONE

    @classmethod
    def parse(cls, value) -> "LossKind":
        if isinstance(value, cls):
            return value
        key = str(value).lower()
        aliases = {"logisticce": "logistic", "log": "logistic", "01": "zero_one",
                   "0-1": "zero_one", "zero-one": "zero_one",
                   "zeroone": "zero_one"}
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class LinearModel:
    theta: np.ndarray
    lam: float
    loss: LossKind = LossKind.HINGE

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float).ravel()
        if self.lam <= 0:
            raise ValueError("ball radius must be positive")
        if np.linalg.norm(theta) > self.lam * (1 + 1e-9):
            raise ValueError("theta lies outside the l2 ball")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def decision(self, X) -> np.ndarray:
        return np.asarray(X, dtype=float) @ self.theta

    def predict(self, X) -> np.ndarray:
        return np.where(self.decision(X) > 0, 1, -1)

    def to_dict(self) -> dict:
        return {"theta": self.theta.tolist(), "lambda": self.lam,
                "loss": self.loss.value}


@dataclass(frozen=True)
class RiskVector:
    per_group: np.ndarray
    bias_weights: Optional[np.ndarray] = None

    def __post_init__(self):
        if (self.bias_weights is not None
                and len(self.bias_weights) != len(self.per_group)):
            raise ValueError("bias weights must match the group count")


def losses(kind: LossKind, y, yhat) -> np.ndarray:
    """Elementwise loss for labels in {-1, +1} and real scores."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    margin = y * yhat
    if kind is LossKind.HINGE:
        return np.maximum(0.0, 1.0 - margin)
    if kind is LossKind.LOGISTIC:
        return np.log1p(np.exp(-np.abs(margin))) + np.maximum(0.0, -margin)
    if kind is LossKind.ZERO_ONE:
        # sgn(0) is a misclassification for either label
        return (margin <= 0).astype(float)
    if kind is LossKind.SQUARE:
        return (y - yhat) ** 2
    raise ValueError(f"unknown loss {kind!r}")


def loss_value(kind: LossKind, y: int, yhat: float) -> float:
    if y not in (-1, 1):
        raise ValueError("labels must be -1 or +1")
    return float(losses(kind, y, yhat))


def loss_derivative(kind: LossKind, y, yhat) -> np.ndarray:
    """d loss / d yhat, choosing 0 at the hinge kink."""
    y = np.asarray(y, dtype=float)
    yhat = np.asarray(yhat, dtype=float)
    margin = y * yhat
    if kind is LossKind.HINGE:
        return np.where(margin < 1, -y, 0.0)
    if kind is LossKind.LOGISTIC:
        # -y * sigmoid(-margin), written to avoid overflow
        z = np.exp(-np.abs(margin))
        sig = np.where(margin >= 0, z / (1 + z), 1 / (1 + z))
        return -y * sig
    if kind is LossKind.SQUARE:
        return 2 * (yhat - y)
    raise ValueError(f"{kind.value} loss has no subgradient")


def loss_subgradient(kind: LossKind, y: int, x, theta) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return float(loss_derivative(kind, y, x @ np.asarray(theta, float))) * x


def project_l2_ball(theta, lam: float) -> np.ndarray:
    theta = np.asarray(theta, dtype=float)
    norm = np.linalg.norm(theta)
    if norm <= lam:
        return theta.copy()
    return theta * (lam / norm)


def group_risks(model: LinearModel, dataset, kind: Optional[LossKind] = None,
                bias_weight: bool = False) -> RiskVector:
    """Per-group mean loss, scaled by 1/b_i when ``bias_weight`` is set.

    Groups with no rows get NaN risk.
    """
    kind = model.loss if kind is None else kind
    point_loss = losses(kind, dataset.labels, model.decision(dataset.features))
    g = dataset.g
    # bincount sums each group sequentially in row order
    sums = np.bincount(dataset.group_ids, weights=point_loss, minlength=g)
    counts = dataset.group_counts()
    with np.errstate(invalid="ignore", divide="ignore"):
        risks = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    bias = None
    if bias_weight:
        bias = dataset.bias_factors()
        risks = risks * bias
    return RiskVector(per_group=risks, bias_weights=bias)
