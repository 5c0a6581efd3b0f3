import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lean_consensus.distributions import FIGURE_DISTRIBUTIONS, Exponential, TwoPoint, Uniform
from lean_consensus.noisy import (
    HALT, SWEEP_HEADER, DeltaPolicy, NoiseModel, OpTimes, heap_event_loop, make_inputs, next_op_time,
    result_of, run_noisy_trial, run_sweep, run_uniform_schedule_trial, write_sweep_csv)
from lean_consensus.protocol import ConfigurationError, Execution
from lean_consensus.rng import RngStream, derive_trial_seed
from lean_consensus.validation import validate_trace


def test_next_op_time_halts_when_failure_certain():
    model = NoiseModel.simple(Exponential(), failure_rate=1.0)
    assert next_op_time(0.0, "read", model, RngStream(1)) == HALT


def test_next_op_time_two_point_support():
    model = NoiseModel.simple(TwoPoint(1.0, 2.0))
    rng = RngStream(2)
    assert {next_op_time(5.0, "read", model, rng) for _ in range(200)} == {6.0, 7.0}


def test_next_op_time_constant_delay():
    model = NoiseModel.simple(Uniform(0.0, 2.0), M=3.0, delta_policy=DeltaPolicy("constant", 3.0))
    rng = RngStream(3)
    for _ in range(200):
        t = next_op_time(1.0, "write", model, rng)
        assert 4.0 <= t < 6.0


def test_delay_above_bound_rejected():
    with pytest.raises(ConfigurationError):
        NoiseModel.simple(Exponential(), M=1.0, delta_policy=DeltaPolicy("constant", 2.0))
    with pytest.raises(ConfigurationError):
        NoiseModel.simple(Exponential(), failure_rate=1.5)


@pytest.mark.parametrize("label", sorted(FIGURE_DISTRIBUTIONS))
def test_single_process_eight_ops(label):
    model = NoiseModel.simple(FIGURE_DISTRIBUTIONS[label])
    res, trace = run_noisy_trial((1,), model, 11, keep_trace=True)
    assert res.decision == 1 and res.first_decision_round == 2 and res.ops_executed == (8,)
    assert validate_trace(trace).ok


def test_all_halted_when_failure_certain():
    model = NoiseModel.simple(Exponential(), failure_rate=1.0)
    for keep in (False, True):
        res, _ = run_noisy_trial((0, 1, 1), model, 4, keep_trace=keep)
        assert res.outcome == "all_halted" and res.decision is None and res.halted == 3


def test_trial_deterministic():
    model = NoiseModel.simple(Exponential())
    a, ta = run_noisy_trial((0, 1, 0, 1), model, 99, keep_trace=True)
    b, tb = run_noisy_trial((0, 1, 0, 1), model, 99, keep_trace=True)
    assert a == b and ta.to_text() == tb.to_text()


def test_op_cap_reports_non_terminated():
    res, _ = run_noisy_trial((0, 1) * 8, NoiseModel.simple(Exponential()), 1, op_cap=20)
    assert res.non_terminated and res.outcome == "non_terminated" and res.total_ops == 20


def _heap_result(inputs, model, seed, op_cap):
    ex = Execution(inputs, keep_trace=False)
    n = len(inputs)
    heap_event_loop(ex, OpTimes(model, n, RngStream(seed).generator), op_cap)
    return result_of(ex, op_cap)


@pytest.mark.parametrize("label", sorted(FIGURE_DISTRIBUTIONS))
@pytest.mark.parametrize("failure", [0.0, 0.05])
def test_batched_path_matches_heap_loop(label, failure):
    dist = FIGURE_DISTRIBUTIONS[label]
    delays = DeltaPolicy("per_process", values=tuple(0.1 * (i % 3) for i in range(24)))
    model = NoiseModel.simple(dist, M=0.2, failure_rate=failure, delta_policy=delays)
    for seed in range(15):
        n = 1 + seed % 24
        inputs = make_inputs(n, "half")
        for cap in (10**6, 37):
            fast, _ = run_noisy_trial(inputs, model, RngStream(seed), cap)
            assert fast == _heap_result(inputs, model, seed, cap), (label, seed, cap)


def test_mixed_input_traces_valid():
    model = NoiseModel.simple(Exponential())
    for t in range(10_000):
        _, trace = run_noisy_trial((0, 0, 1, 1), model, derive_trial_seed(5, t), keep_trace=True)
        report = validate_trace(trace)
        assert report.ok, (t, report.summary())


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32), n=st.integers(1, 12),
       label=st.sampled_from(sorted(FIGURE_DISTRIBUTIONS)), failure=st.sampled_from([0.0, 0.02]))
def test_event_times_ordered(seed, n, label, failure):
    model = NoiseModel.simple(FIGURE_DISTRIBUTIONS[label], failure_rate=failure)
    res, trace = run_noisy_trial(make_inputs(n, "half"), model, seed, keep_trace=True)
    times = [op.time for op in trace.ops]
    assert all(a <= b for a, b in zip(times, times[1:]))
    last = {}
    for op in trace.ops:
        assert op.time > last.get(op.pid, -math.inf)
        last[op.pid] = op.time
    assert validate_trace(trace).ok
    if failure == 0.0:
        assert res.outcome == "decided" and all(d == res.decision for d in res.decisions)


def test_exponential_matches_uniform_selection():
    # Exp(1) races are memoryless, so the next process to move is uniform
    # among the running ones; compare mean first-decision rounds at n=16.
    inputs = make_inputs(16, "half")
    model = NoiseModel.simple(Exponential(1.0))
    k = 3000
    a = np.array([run_noisy_trial(inputs, model, derive_trial_seed(21, t))[0].first_decision_round
                  for t in range(k)], float)
    b = np.array([run_uniform_schedule_trial(inputs, derive_trial_seed(22, t))[0].first_decision_round
                  for t in range(k)], float)
    se = math.sqrt(a.var(ddof=1) / k + b.var(ddof=1) / k)
    assert abs(a.mean() - b.mean()) <= 3 * se


def test_sweep_unanimous_pair_round_two():
    rows = run_sweep([2], list(FIGURE_DISTRIBUTIONS.items()), 50, "zeros", 3)
    assert all(r.mean_first_round == 2.0 and r.mean_ops == 8.0 for r in rows)


def test_sweep_grows_with_n():
    rows = run_sweep([2, 512], [Exponential()], 300, "half", 4)
    assert rows[1].mean_first_round > rows[0].mean_first_round


def test_sweep_deterministic_and_job_independent():
    args = ([2, 8], [("exp:1", Exponential())], 600, "half", 5)
    a, b, c = run_sweep(*args), run_sweep(*args), run_sweep(*args, jobs=2)
    assert a == b == c


def test_sweep_csv_header():
    buf = io.StringIO()
    write_sweep_csv(run_sweep([2], [Exponential()], 5), buf)
    assert buf.getvalue().splitlines()[0] == ",".join(SWEEP_HEADER)
    assert buf.getvalue().splitlines()[0] == ("distribution,n,trials,mean_first_round,mean_last_round,"
                                              "mean_ops,halted_fraction,nonterminated_fraction")


def test_make_inputs():
    assert make_inputs(4, "half") == (0, 0, 1, 1)
    assert make_inputs(3, "half") == (0, 1, 1)
    assert make_inputs(3, "101") == (1, 0, 1)
    with pytest.raises(ConfigurationError):
        make_inputs(3, "10")
