"""Plug-in malfare estimation with finite-sample confidence brackets.

For losses bounded in [0, r] and m samples per group, a union bound over
the g groups of a two-sided concentration inequality gives per-group
deviations eps_i such that, with probability at least 1 - delta,

    M_p(0 v (S_hat - eps); w) <= M_p(S; w) <= M_p(S_hat + eps; w)

for any aggregator that is monotone in its arguments.
"""

from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .aggregator import PowerSpec, Sense, _pmean, SentimentProfile

__all__ = [
    "BoundMethod",
    "BoundReport",
    "plugin_malfare",
    "hoeffding_epsilon",
    "bennett_epsilon",
    "malfare_bracket",
    "bracket_from_estimates",
    "uc_sample_complexity",
    "nsw_hardness_bound",
    "nsw_hardness_simulate",
    "weighted_nsw",
]


class BoundMethod(enum.Enum):
    HOEFFDING = "hoeffding"
    BENNETT = "bennett"


@dataclass
class BoundReport:
    estimate: float
    lower: float
    upper: float
    epsilon_per_group: list
    method: BoundMethod
    delta: float
    m: int
    r: float
    seed: Optional[int] = None
    # set when Bennett ran on empirical rather than known variances
    heuristic: bool = False
    p: float = 1.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.lower <= self.estimate <= self.upper:
            raise ValueError("bracket must contain the estimate")
        if self.lower < 0:
            raise ValueError("lower bracket must be nonnegative")

    def to_dict(self) -> dict:
        out = asdict(self)
        out["method"] = self.method.value
        out["p"] = _json_p(self.p)
        extra = out.pop("extra")
        if out["seed"] is None:
            del out["seed"]
        out.update(extra)
        return out


def _json_p(p):
    if math.isinf(p):
        return "inf" if p > 0 else "-inf"
    return p


def _check_delta(delta):
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def _group_means(samples: Sequence[Sequence[float]], r: Optional[float]):
    means = []
    for i, s in enumerate(samples):
        s = np.asarray(s, dtype=float)
        if s.size == 0:
            raise ValueError(f"group {i} has no samples")
        if r is not None and ((s < 0).any() or (s > r).any()):
            raise ValueError(f"group {i} has losses outside [0, {r}]")
        means.append(s.mean())
    return np.array(means)


def plugin_malfare(samples, weights, spec: PowerSpec,
                   r: Optional[float] = None) -> float:
    """Power mean of the per-group empirical means."""
    means = _group_means(samples, r)
    profile = SentimentProfile(means, weights)
    return _pmean(profile.values, profile.weights, spec.p)


def hoeffding_epsilon(r: float, g: int, delta: float, m: int) -> float:
    """r * sqrt(ln(2g/delta) / (2m)), uniform across groups."""
    if r <= 0:
        raise ValueError("r must be positive")
    if g < 1 or m < 1:
        raise ValueError("g and m must be at least 1")
    _check_delta(delta)
    return r * math.sqrt(math.log(2 * g / delta) / (2 * m))


def bennett_epsilon(r: float, g: int, delta: float, m: int,
                    variances: Sequence[float]) -> np.ndarray:
    """Per-group r ln(2g/delta)/(3m) + sqrt(2 Var_i ln(2g/delta) / m)."""
    if r <= 0:
        raise ValueError("r must be positive")
    if g < 1 or m < 1:
        raise ValueError("g and m must be at least 1")
    _check_delta(delta)
    variances = np.asarray(variances, dtype=float).ravel()
    if variances.size != g:
        raise ValueError(f"expected {g} variances, got {variances.size}")
    if (variances < 0).any() or (variances > r * r / 4 * (1 + 1e-12)).any():
        raise ValueError("variances must lie in [0, r^2/4]")
    log_term = math.log(2 * g / delta)
    return r * log_term / (3 * m) + np.sqrt(2 * variances * log_term / m)


def bracket_from_estimates(estimates, epsilons, weights, p: float):
    """(lower, estimate, upper) for per-group estimates and deviations."""
    estimates = np.asarray(estimates, dtype=float)
    epsilons = np.broadcast_to(np.asarray(epsilons, dtype=float),
                               estimates.shape)
    weights = SentimentProfile(estimates, weights).weights
    est = _pmean(estimates, weights, p)
    lower = _pmean(np.maximum(estimates - epsilons, 0.0), weights, p)
    upper = _pmean(estimates + epsilons, weights, p)
    return lower, est, upper


def malfare_bracket(samples, weights, spec: PowerSpec,
                    method: BoundMethod | str, delta: float, r: float,
                    variances: Optional[Sequence[float]] = None,
                    seed: Optional[int] = None) -> BoundReport:
    """Plug-in malfare with its (1 - delta)-confidence bracket.

    ``variances=None`` with Bennett is an error; pass ``"empirical"`` to
    plug in sample variances, which flags the report as heuristic.
    """
    method = BoundMethod(method)
    if spec.sense is not Sense.MALFARE or spec.p < 1:
        raise ValueError("malfare_bracket needs a fair malfare spec (p >= 1)")
    means = _group_means(samples, r)
    g = means.size
    sizes = {len(s) for s in samples}
    if len(sizes) != 1:
        raise ValueError("all groups need the same sample count m")
    m = sizes.pop()
    heuristic = False
    if method is BoundMethod.HOEFFDING:
        eps = np.full(g, hoeffding_epsilon(r, g, delta, m))
    else:
        if variances is None:
            raise ValueError("Bennett bracket needs variances")
        if isinstance(variances, str):
            if variances != "empirical":
                raise ValueError(f"unknown variance source {variances!r}")
            variances = np.minimum(
                [np.var(np.asarray(s, dtype=float)) for s in samples],
                r * r / 4)
            heuristic = True
        eps = bennett_epsilon(r, g, delta, m, variances)
    lower, est, upper = bracket_from_estimates(means, eps, weights, spec.p)
    return BoundReport(estimate=est, lower=lower, upper=upper,
                       epsilon_per_group=[float(e) for e in eps],
                       method=method, delta=delta, m=m, r=r, seed=seed,
                       heuristic=heuristic, p=spec.p)


def uc_sample_complexity(ell_inf: float, g: int, delta: float, eps: float,
                         log_covering: Callable[[float], float]) -> int:
    """ceil(8 |l|^2 ln((2g/delta)^(1/4) N(eps/4)) / eps^2).

    ``log_covering(gamma)`` returns ln N of the loss class at resolution
    ``gamma``.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if ell_inf <= 0 or g < 1:
        raise ValueError("need ell_inf > 0 and g >= 1")
    _check_delta(delta)
    log_term = 0.25 * math.log(2 * g / delta) + log_covering(eps / 4)
    return math.ceil(8 * ell_inf ** 2 * log_term / eps ** 2)


def nsw_hardness_bound(p_bias: float, delta: float) -> int:
    """Smallest m with (1 - p_bias)^m <= delta."""
    if not 0 < p_bias <= 1:
        raise ValueError("p_bias must lie in (0, 1]")
    _check_delta(delta)
    if p_bias == 1:
        return 1
    m = math.ceil(math.log(delta) / math.log1p(-p_bias))
    # guard the ceiling against rounding in the log ratio
    while m > 1 and (1 - p_bias) ** (m - 1) <= delta:
        m -= 1
    while (1 - p_bias) ** m > delta:
        m += 1
    return max(m, 1)


def nsw_hardness_simulate(p_bias: float, m: int, trials: int, seed: int,
                          chunk: int = 10_000) -> float:
    """Monte-Carlo frequency of an all-zero Bernoulli(p_bias) sample of size m."""
    if trials < 1 or m < 1:
        raise ValueError("trials and m must be at least 1")
    if not 0 <= p_bias <= 1:
        raise ValueError("p_bias must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    zeros = 0
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        draws = rng.random((n, m)) < p_bias
        zeros += int((~draws.any(axis=1)).sum())
        done += n
    return zeros / trials


def weighted_nsw(p_bias: float, w: float) -> float:
    """Nash welfare p^w of Bernoulli(1) and Bernoulli(p) groups, weights (1-w, w)."""
    if not 0 < w < 1:
        raise ValueError("w must lie in (0, 1)")
    return _pmean(np.array([1.0, p_bias]), np.array([1 - w, w]), 0.0)
