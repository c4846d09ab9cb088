"""Atkinson inequality index and its identity with power-mean welfare."""

from __future__ import annotations

from dataclasses import dataclass

from .aggregator import SentimentProfile, _pmean

__all__ = ["AtkinsonReport", "atkinson_index", "atkinson_report",
           "welfare_via_atkinson"]


@dataclass(frozen=True)
class AtkinsonReport:
    index: float
    eps: float
    # eps outside [0, 1]: the index is still defined but may exceed 1
    extended_range: bool


def atkinson_index(profile: SentimentProfile, eps: float) -> float:
    """1 - M_{1-eps}(S; w) / M_1(S; w)."""
    mean = _pmean(profile.values, profile.weights, 1.0)
    if mean == 0:
        raise ValueError("Atkinson index undefined for an all-zero profile")
    if eps == 0:
        return 0.0
    return 1.0 - _pmean(profile.values, profile.weights, 1.0 - eps) / mean


def atkinson_report(profile: SentimentProfile, eps: float) -> AtkinsonReport:
    return AtkinsonReport(index=atkinson_index(profile, eps), eps=float(eps),
                          extended_range=not 0.0 <= eps <= 1.0)


def welfare_via_atkinson(profile: SentimentProfile, p: float) -> float:
    """M_1(S; w) * (1 - ATK_{1-p}(S; w)), which equals M_p(S; w)."""
    mean = _pmean(profile.values, profile.weights, 1.0)
    return mean * (1.0 - atkinson_index(profile, 1.0 - p))
