from hypothesis import given, strategies as st

from lean_consensus.rng import RngStream, derive_trial_seed, mix_seed, stream_seed


def test_distinct_indices_differ():
    assert derive_trial_seed(42, 0).next_u64() != derive_trial_seed(42, 1).next_u64()


def test_same_pair_identical():
    a, b = derive_trial_seed(42, 5), derive_trial_seed(42, 5)
    assert [a.next_u64() for _ in range(5)] == [b.next_u64() for _ in range(5)]


def test_master_seed_sensitivity():
    assert derive_trial_seed(41, 0).next_u64() != derive_trial_seed(42, 0).next_u64()


def test_mix_seed_labels():
    assert mix_seed(1, "exp:1", 8) != mix_seed(1, "exp:1", 16)
    assert mix_seed(1, "exp:1", 8) == mix_seed(1, "exp:1", 8)


@given(m=st.integers(0, 2**64 - 1), i=st.integers(0, 2**64 - 1))
def test_stream_seed_is_64_bit(m, i):
    s = stream_seed(m, i)
    assert 0 <= s < 2**64
    assert RngStream(m, i).stream_index == i
