import io
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from lean_consensus.distributions import Exponential, Geometric, TwoPoint, Uniform
from lean_consensus.protocol import ConfigurationError
from lean_consensus.race import (
    ALL_DEAD, CAP_HIT, RACE_HEADER, WON, RaceConfig, estimate_expected_R, exactly_one_probability,
    lower_bound_closed_form, lower_bound_fraction, run_race_sweep, simulate_race, unique_leader_probability,
    verify_race_outcome, write_race_csv)


def test_single_process_wins_round_one():
    o = simulate_race(RaceConfig(1, 2, Exponential()), 3)
    assert (o.status, o.R, o.winner) == (WON, 1, 0)


def test_all_dead_at_round_one():
    o = simulate_race(RaceConfig(4, 2, Exponential(), failure_rate=1.0), 3)
    assert (o.status, o.R, o.winner) == (ALL_DEAD, 1, None)


def test_two_point_race_reproducible_and_verifiable():
    cfg = RaceConfig(2, 2, TwoPoint(1.0, 2.0))
    a, b = simulate_race(cfg, 8), simulate_race(cfg, 8)
    assert (a.status, a.R, a.winner) == (b.status, b.R, b.winner)
    assert verify_race_outcome(a)
    w = a.winner
    assert a.times[w, a.R + 1] < a.times[1 - w, a.R - 1]


def test_cap_hit():
    o = simulate_race(RaceConfig(64, 3, TwoPoint(1.0, 1.01), round_cap=1), 1)
    assert o.status in (CAP_HIT, WON) and verify_race_outcome(o)


@settings(max_examples=80, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 20), c=st.integers(1, 4),
       failure=st.sampled_from([0.0, 0.1]), per_op=st.booleans())
def test_winner_predicate_verifiable(seed, n, c, failure, per_op):
    o = simulate_race(RaceConfig(n, c, Geometric(0.5), per_op=per_op, failure_rate=failure), seed)
    assert verify_race_outcome(o)


def test_estimate_single_process():
    est = estimate_expected_R(RaceConfig(1, 2, Exponential()), 100, 0)
    assert est.mean_R == 1.0


def test_estimate_requires_trials():
    with pytest.raises(ConfigurationError):
        estimate_expected_R(RaceConfig(2, 2, Exponential()), 99)


def test_estimate_grows_and_tail_decays():
    small = estimate_expected_R(RaceConfig(2, 2, Exponential()), 500, 1)
    big = estimate_expected_R(RaceConfig(64, 2, Exponential()), 500, 1)
    assert big.mean_R > small.mean_R
    m = big.median_R
    assert big.tail(m) >= big.tail(2 * m) >= big.tail(4 * m)


def test_race_config_validation():
    with pytest.raises(ConfigurationError):
        RaceConfig(2, 0, Exponential())
    with pytest.raises(ConfigurationError):
        RaceConfig(0, 1, Exponential())


def test_exactly_one_two_fair_events():
    r = exactly_one_probability([0.5, 0.5])
    assert r.p_exact == Fraction(1, 2) and r.x == Fraction(1, 4)
    assert math.isclose(r.bound, 0.34657359, rel_tol=1e-7) and r.holds


def test_exactly_one_never_occurring():
    r = exactly_one_probability([1.0, 1.0])
    assert r.p_exact == 0 and r.x == 1 and r.bound == 0 and r.holds


def test_exactly_one_five_events():
    r = exactly_one_probability([0.9] * 5)
    assert math.isclose(float(r.p_exact), 0.32805, rel_tol=1e-12)
    assert math.isclose(r.bound, 0.31107, abs_tol=1e-5) and r.holds


def test_exactly_one_zero_entry():
    r = exactly_one_probability([0.0, 0.5])
    assert r.x == 0 and r.bound == 0 and r.p_exact == Fraction(1, 2)


def test_exactly_one_near_one_is_decided():
    # p_exact and -x ln x agree to first order as q -> 1
    r = exactly_one_probability([1 - 1e-12] * 3)
    assert r.holds


@given(st.lists(st.fractions(min_value=Fraction(1, 1000), max_value=1), min_size=1, max_size=8))
def test_exactly_one_matches_enumeration(q):
    r = exactly_one_probability(q)
    brute = Fraction(0)
    for i in range(len(q)):
        term = 1 - q[i]
        for j in range(len(q)):
            if j != i:
                term *= q[j]
        brute += term
    assert r.p_exact == brute and r.holds


def test_unique_leader_uniform():
    _, p = unique_leader_probability(Uniform(0.0, 2.0), 16, 10**5, seed=2)
    assert p >= 0.20 - 0.01


def test_unique_leader_single_process():
    t, p = unique_leader_probability(Exponential(), 1, 1000, seed=3)
    assert p == 1.0


def test_unique_leader_two_point_pair():
    t, p = unique_leader_probability(TwoPoint(1.0, 2.0), 2, 10**5, seed=4)
    assert t == 1.0 and abs(p - 0.5) <= 0.01


def test_lower_bound_pair():
    assert lower_bound_closed_form(2) == 0.25
    assert abs(lower_bound_fraction(2, 10**5, seed=1) - 0.25) <= 0.01


def test_lower_bound_errors():
    with pytest.raises(ConfigurationError):
        lower_bound_fraction(3, 100)
    with pytest.raises(ConfigurationError):
        lower_bound_fraction(4, 0)


def test_race_csv():
    rows = run_race_sweep([2, 4], [("exp:1", Exponential())], 2, 100, 0)
    buf = io.StringIO()
    write_race_csv(rows, buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "n,c,distribution,trials,mean_R,median_R,cap_hits,p_tail_2x,p_tail_4x"
    assert tuple(lines[0].split(",")) == RACE_HEADER and len(lines) == 3
