from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from lean_consensus.distributions import (
    FIGURE_DISTRIBUTIONS, DistributionError, Exponential, Geometric, Pathological, ShiftedExponential,
    TruncatedNormal, TwoPoint, Uniform, parse_distribution, sample_delay)
from lean_consensus.rng import RngStream


def gen(seed=0):
    return RngStream(seed).generator


def test_truncated_normal_inside_open_interval():
    x = TruncatedNormal(1.0, 0.2, 0.0, 2.0).sample(gen(), 10**6)
    assert x.min() > 0.0 and x.max() < 2.0


def test_two_point_frequency():
    x = TwoPoint(2 / 3, 4 / 3, 0.5).sample(gen(1), 10**5)
    assert set(np.unique(x)) == {2 / 3, 4 / 3}
    assert abs((x == 2 / 3).mean() - 0.5) <= 0.01


def test_exponential_mean():
    assert abs(Exponential(1.0).sample(gen(2), 10**5).mean() - 1.0) <= 0.02


def test_geometric_support_starts_at_one():
    x = Geometric(0.5).sample(gen(3), 10**5)
    assert x.min() == 1 and abs(x.mean() - 2.0) < 0.03


def test_shifted_exponential_and_uniform():
    x = ShiftedExponential(0.5, 0.5).sample(gen(4), 10**5)
    assert x.min() >= 0.5 and abs(x.mean() - 1.0) < 0.02
    u = Uniform(0.0, 2.0).sample(gen(5), 10**5)
    assert u.min() >= 0.0 and u.max() < 2.0


def test_pathological_values_and_cap():
    d = Pathological(cap=5)
    x = d.sample(gen(6), 10**5)
    assert set(np.unique(x)) <= {2.0 ** (k * k) for k in range(1, 6)}
    assert np.isfinite(Pathological().sample(gen(7), 10**5)).all()


@pytest.mark.parametrize("bad", [
    lambda: TwoPoint(1.0, 1.0), lambda: TruncatedNormal(1.0, 0.0, 0.0, 2.0), lambda: Uniform(1.0, 1.0),
    lambda: Exponential(0.0), lambda: Geometric(1.0), lambda: Pathological(cap=40),
    lambda: TwoPoint(-1.0, 1.0)])
def test_degenerate_or_negative_rejected(bad):
    with pytest.raises(DistributionError):
        bad()


def test_parse_figure_tokens():
    for token, dist in FIGURE_DISTRIBUTIONS.items():
        assert parse_distribution(token) == dist
    assert parse_distribution("twopoint:2/3,4/3,0.5").v1 == float(Fraction(2, 3))


@pytest.mark.parametrize("token", ["bogus:1", "exp", "exp:x", "normal:1,2", ""])
def test_parse_errors_name_token(token):
    with pytest.raises(DistributionError):
        parse_distribution(token)


@given(seed=st.integers(0, 2**32), idx=st.sampled_from(sorted(FIGURE_DISTRIBUTIONS)))
def test_samples_finite_nonnegative(seed, idx):
    x = FIGURE_DISTRIBUTIONS[idx].sample(gen(seed), 64)
    assert np.isfinite(x).all() and (x >= 0).all()
    assert sample_delay(FIGURE_DISTRIBUTIONS[idx], RngStream(seed)) >= 0
