import math

import numpy as np
import pytest

from malfare.aggregator import SentimentProfile, power_mean
from malfare.inequality import atkinson_index, atkinson_report, welfare_via_atkinson


def test_atkinson_examples():
    s = SentimentProfile.uniform((1, 3))
    assert atkinson_index(s, 1) == pytest.approx(1 - math.sqrt(3) / 2)
    assert atkinson_index(s, 1) == pytest.approx(0.133975, abs=1e-6)
    assert atkinson_index(s, 0) == 0.0
    assert atkinson_index(SentimentProfile.uniform((2.5, 2.5, 2.5)), 0.7) == \
        pytest.approx(0.0, abs=1e-15)


def test_atkinson_rejects_all_zero():
    with pytest.raises(ValueError):
        atkinson_index(SentimentProfile.uniform((0, 0)), 0.5)


def test_welfare_via_atkinson_examples():
    assert welfare_via_atkinson(SentimentProfile.uniform((1, 3)), 0) == \
        pytest.approx(math.sqrt(3))
    assert welfare_via_atkinson(SentimentProfile.uniform((4, 4)), -2.5) == \
        pytest.approx(4.0)
    assert welfare_via_atkinson(SentimentProfile.uniform((1, 2, 3)), 1) == 2.0


def test_identity_and_range():
    rng = np.random.default_rng(5)
    for _ in range(300):
        g = rng.integers(1, 8)
        s = SentimentProfile(rng.uniform(0.01, 5, g), rng.dirichlet(np.ones(g)))
        p = rng.uniform(-3, 1)
        m1 = power_mean(s, 1)
        assert abs(welfare_via_atkinson(s, p) - power_mean(s, p)) <= 1e-10 * max(1, m1)
        eps = rng.uniform(0, 1)
        assert 0 <= atkinson_index(s, eps) <= 1


def test_extended_range_flag():
    s = SentimentProfile.uniform((1, 3))
    assert not atkinson_report(s, 0.5).extended_range
    rep = atkinson_report(s, 3.0)
    assert rep.extended_range
    assert rep.index == atkinson_index(s, 3.0)
