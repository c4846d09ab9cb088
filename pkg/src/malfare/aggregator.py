"""Weighted power means over finite populations.

Welfare aggregates desirable per-group quantities (utilities), malfare
aggregates undesirable ones (risks). Both are the weighted power mean

    M_p(S; w) = (sum_i w_i S_i^p)^(1/p)

with the geometric mean at p = 0 and min / max at p = -inf / +inf.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "Sense",
    "SentimentProfile",
    "PowerSpec",
    "parse_p",
    "format_p",
    "power_mean",
    "malfare",
    "welfare",
    "cas_mean",
    "generalized_f_mean",
    "affine_shift_mean",
]

# beyond this |p| the finite-p mean is replaced by the exact min / max
_EXTREME_P = 700.0
_RENORMALIZE_TOL = 1e-9


class Sense(enum.Enum):
    WELFARE = "welfare"
    MALFARE = "malfare"


@dataclass(frozen=True)
class SentimentProfile:
    """Nonnegative per-group values paired with a full-support probability vector."""

    values: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        weights = np.array(self.weights, dtype=float).ravel()
        if values.size < 1:
            raise ValueError("profile needs at least one group")
        if weights.shape != values.shape:
            raise ValueError(
                f"got {values.size} values but {weights.size} weights")
        if np.isnan(values).any() or np.isnan(weights).any():
            raise ValueError("profile contains NaN")
        if not np.isfinite(values).all() or (values < 0).any():
            raise ValueError("values must be finite and nonnegative")
        if not np.isfinite(weights).all() or (weights <= 0).any():
            raise ValueError("weights must be strictly positive (full support)")
        total = weights.sum()
        if abs(total - 1.0) > _RENORMALIZE_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")
        weights = weights / total
        values.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, values: Sequence[float]) -> "SentimentProfile":
        values = np.asarray(values, dtype=float).ravel()
        return cls(values, np.full(values.size, 1.0 / max(values.size, 1)))

    @property
    def g(self) -> int:
        return self.values.size

    def with_values(self, values) -> "SentimentProfile":
        return SentimentProfile(values, self.weights)


@dataclass(frozen=True)
class PowerSpec:
    """Aggregation power ``p`` (a float; +/-inf allowed) and its sense.

    With ``fair=True`` the power is restricted to the range where the
    aggregator respects the (anti-)Pigou-Dalton principle: p >= 1 for
    malfare, p <= 1 for welfare.
    """

    p: float
    sense: Sense = Sense.MALFARE
    fair: bool = False

    def __post_init__(self):
        p = float(self.p)
        if math.isnan(p):
            raise ValueError("p must not be NaN")
        object.__setattr__(self, "p", p)
        if self.fair:
            if self.sense is Sense.MALFARE and p < 1:
                raise ValueError(f"fair malfare requires p >= 1, got {p}")
            if self.sense is Sense.WELFARE and p > 1:
                raise ValueError(f"fair welfare requires p <= 1, got {p}")


def parse_p(text: str | float) -> float:
    """Parse ``"inf"``, ``"-inf"`` or a decimal into an extended real."""
    if isinstance(text, (int, float)):
        p = float(text)
    else:
        token = text.strip().lower()
        if token in ("inf", "+inf", "infinity", "+infinity"):
            return math.inf
        if token in ("-inf", "-infinity"):
            return -math.inf
        p = float(token)
    if math.isnan(p):
        raise ValueError("p must not be NaN")
    return p


def format_p(p: float) -> str:
    if math.isinf(p):
        return "inf" if p > 0 else "-inf"
    return repr(float(p))


def _pmean(values: np.ndarray, weights: np.ndarray, p: float) -> float:
    """Unchecked power mean; ``values``/``weights`` already validated."""
    if p == math.inf or p > _EXTREME_P:
        return float(values.max())
    if p == -math.inf or p < -_EXTREME_P:
        return float(values.min())
    if p == 0.0:
        if (values == 0).any():
            return 0.0
        return float(math.exp(np.dot(weights, np.log(values))))
    if p == 1.0:
        return float(np.dot(weights, values))
    if p < 0 and (values == 0).any():
        # right limit of M_p(S + eps) as eps -> 0+
        return 0.0
    if abs(p) >= 1.0:
        # scale by max (p > 0) or min (p < 0) so every ratio**p lies in [0, 1]
        anchor = values.max() if p > 0 else values.min()
        if anchor == 0:
            return 0.0
        with np.errstate(over="ignore"):
            # p < 0 with a subnormal min: inf ** p = 0 is the right value
            inner = float(np.dot(weights, (values / anchor) ** p))
        return float(anchor * inner ** (1.0 / p))
    top = values.max()
    if top == 0:
        return 0.0
    with np.errstate(divide="ignore"):
        logs = p * np.log(values / top)
    if np.abs(logs[np.isfinite(logs)]).max(initial=0.0) < 1.0:
        # small |p ln S|: expm1/log1p keep the p -> 0 limit accurate
        inner = math.log1p(float(np.dot(weights, np.expm1(logs))))
    else:
        shift = logs.max()
        inner = shift + math.log(float(np.dot(weights, np.exp(logs - shift))))
    return float(top * math.exp(inner / p))


def power_mean(profile: SentimentProfile, p: float) -> float:
    """Weighted power mean M_p(S; w) for any extended real ``p``."""
    p = parse_p(p)
    return _pmean(profile.values, profile.weights, p)


def malfare(profile: SentimentProfile, spec: PowerSpec) -> float:
    if spec.sense is not Sense.MALFARE:
        raise ValueError("malfare() needs a malfare PowerSpec")
    return _pmean(profile.values, profile.weights, spec.p)


def welfare(profile: SentimentProfile, spec: PowerSpec) -> float:
    if spec.sense is not Sense.WELFARE:
        raise ValueError("welfare() needs a welfare PowerSpec")
    return _pmean(profile.values, profile.weights, spec.p)


def cas_mean(profile: SentimentProfile, p: float) -> float:
    """Canonical additively separable form: sum_i w_i f_p(S_i).

    f_0 = ln and f_p(x) = sgn(p) x^p otherwise, taking right limits at
    zero, so the result is -inf when a zero meets p <= 0.
    """
    p = float(p)
    if not math.isfinite(p):
        raise ValueError("cas_mean requires a finite p")
    values, weights = profile.values, profile.weights
    if p <= 0 and (values == 0).any():
        return -math.inf
    if p == 0:
        return float(np.dot(weights, np.log(values)))
    return float(math.copysign(1.0, p) * np.dot(weights, values ** p))


def generalized_f_mean(profile: SentimentProfile,
                       f: Callable[[np.ndarray], np.ndarray],
                       f_inv: Callable[[np.ndarray], np.ndarray],
                       rtol: float = 1e-9) -> float:
    """Kolmogorov mean f^-1(sum_i w_i f(S_i)).

    ``f_inv`` must invert ``f`` on the profile values; this is checked by
    a round trip at every value.
    """
    values = profile.values
    mapped = np.asarray(f(values), dtype=float)
    back = np.asarray(f_inv(mapped), dtype=float)
    if not np.allclose(back, values, rtol=rtol, atol=rtol):
        raise ValueError("f_inv does not invert f on the profile values")
    return float(f_inv(np.dot(profile.weights, mapped)))


def affine_shift_mean(profile: SentimentProfile, p: float, beta: float) -> float:
    """M_p(S + beta; w) - beta; tends to M_1(S; w) as beta grows."""
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    shifted = profile.values + beta
    return _pmean(shifted, profile.weights, parse_p(p)) - beta
