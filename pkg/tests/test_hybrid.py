import pytest

from lean_consensus.hybrid import (
    HybridConfig, Scripted, Segment, StrategyError, run_hybrid_trial, search_worst_case, weak_orderings)
from lean_consensus.protocol import ConfigurationError
from lean_consensus.validation import validate_trace


def test_single_process_trivial_strategy():
    res, trace = run_hybrid_trial((0,), HybridConfig(quantum=8))
    assert res.decision == 0 and res.ops_executed == (8,)


def test_preempt_before_first_write_priority():
    cfg = HybridConfig(quantum=8, priorities=(0, 1))
    res, trace = run_hybrid_trial((0, 1), cfg, Scripted.of((0, 2), (1, None), (0, None)))
    assert res.decisions == (1, 1)
    assert res.ops_executed[1] <= 12 and res.ops_executed[0] <= 12
    assert validate_trace(trace).ok


def test_preempt_before_first_write_exhausted_quantum():
    # P0 had used 6 of its 8 ops on other work, so P1 may take over after two reads
    cfg = HybridConfig(quantum=8, initial_quantum_used=(6, 0))
    res, _ = run_hybrid_trial((0, 1), cfg, Scripted.of((0, 2), (1, None), (0, None)))
    assert res.decisions == (1, 1) and max(res.ops_executed) <= 12


def test_early_equal_priority_preemption_rejected():
    with pytest.raises(StrategyError) as err:
        run_hybrid_trial((0, 1), HybridConfig(quantum=8), Scripted.of((0, 3), (1, None)))
    assert err.value.segment == 1


def test_lower_priority_cannot_preempt():
    cfg = HybridConfig(quantum=2, priorities=(1, 0))
    with pytest.raises(StrategyError) as err:
        run_hybrid_trial((0, 1), cfg, Scripted.of((0, 5), (1, 1)))
    assert "lower priority" in str(err.value)


def test_decided_process_cannot_be_dispatched():
    with pytest.raises(StrategyError):
        run_hybrid_trial((0,), HybridConfig(), Scripted.of((0, None), (0, 1)))


def test_script_text_roundtrip():
    s = Scripted((Segment(0, 2), Segment(1, None), Segment(0, 5)))
    assert Scripted.from_text(s.to_text()) == s


def test_config_validation():
    with pytest.raises(ConfigurationError):
        HybridConfig(quantum=0)
    with pytest.raises(ConfigurationError):
        HybridConfig(quantum=4, initial_quantum_used=(4,))


@pytest.mark.parametrize("q", [1, 3, 8])
def test_single_process_search(q):
    assert search_worst_case(1, HybridConfig(quantum=q)).max_ops_to_decide == 8


def test_pair_quantum_eight():
    rep = search_worst_case(2, HybridConfig(quantum=8))
    assert rep.max_ops_to_decide == 12 and not rep.both_round1_set
    assert rep.safe and rep.chain_holds and rep.open_branches == 0
    assert sum(v.chain_checks for v in rep.vectors) > 0


def test_pair_quantum_two_sets_both_round_bits():
    rep = search_worst_case(2, HybridConfig(quantum=2))
    assert rep.both_round1_set and rep.safe
    for v in rep.vectors:
        if v.counterexample is not None:
            _, trace = run_hybrid_trial(v.inputs, v.counterexample_config, v.counterexample)
            written = {(op.array, op.slot) for op in trace.ops if op.kind == "write"}
            assert {(0, 1), (1, 1)} <= written and not trace.decisions
    assert "counterexample" in rep.to_text()


def test_larger_quantum_keeps_bound():
    rep = search_worst_case(2, HybridConfig(quantum=11))
    assert rep.max_ops_to_decide == 12 and not rep.both_round1_set


def test_triple_quantum_eight_chain_and_safety():
    rep = search_worst_case(3, HybridConfig(quantum=8))
    assert rep.max_ops_to_decide == 12 and not rep.both_round1_set
    assert rep.safe and rep.chain_holds and rep.open_branches == 0
    assert sum(v.chain_checks for v in rep.vectors) > 0


def test_weak_orderings_count():
    assert len(weak_orderings(2)) == 3 and len(weak_orderings(3)) == 13


def test_search_bounds():
    with pytest.raises(ConfigurationError):
        search_worst_case(5, HybridConfig())
