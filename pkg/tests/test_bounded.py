import pytest

from lean_consensus.bounded import BackupProtocol, CombinedConfig, OracleBackup, compute_rmax, run_combined
from lean_consensus.distributions import Exponential
from lean_consensus.noisy import NoiseModel
from lean_consensus.protocol import ConfigurationError
from lean_consensus.validation import validate_trace


def test_compute_rmax():
    assert compute_rmax(256, 10, 4) == 320
    assert compute_rmax(2, 1, 1) == 2
    assert compute_rmax(1024, 7, 3) == 210
    with pytest.raises(ConfigurationError):
        compute_rmax(1, 1, 1)


def test_unanimous_never_uses_backup():
    cfg = CombinedConfig(r_max=4, schedule=[0, 1, 2] * 20)
    res = run_combined((0, 0, 0), cfg)
    assert res.result.decisions == (0, 0, 0) and res.backup_calls == 0
    assert set(res.decided_via) == {"lean"}


def test_lockstep_enters_backup():
    res = run_combined((0, 1), CombinedConfig(r_max=6, schedule=[0, 1] * 100), keep_trace=True)
    assert res.backup_calls == 2 and res.result.agreement
    assert res.max_index_touched <= 6
    used = {(op.array, op.slot) for op in res.trace.ops}
    assert len({cell for cell in used if cell[1] > 0}) <= 2 * 6
    assert validate_trace(res.trace).ok


def test_mixed_paths_agree():
    # p0 decides in the lean phase; p1 would loop, but must adopt p0's value
    sched = [0] * 12 + [1] * 200
    res = run_combined((0, 1), CombinedConfig(r_max=2, schedule=sched))
    assert res.result.agreement


def test_noisy_backup_rare():
    noise = NoiseModel.simple(Exponential())
    used = 0
    for seed in range(500):
        res = run_combined((0, 1), CombinedConfig(r_max=320, noise=noise), seed)
        used += res.backup_calls > 0
        assert res.result.agreement and res.max_index_touched <= 320
    assert used / 500 < 0.01


class Broken(BackupProtocol):
    def propose(self, pid, bit):
        return None


def test_backup_contract_violation_reported():
    res = run_combined((0, 1), CombinedConfig(r_max=2, schedule=[0, 1] * 50, backup_factory=Broken))
    assert res.result.contract_violation is not None


def test_oracle_first_wins():
    b = OracleBackup()
    assert b.propose(0, 1) == 1 and b.propose(1, 0) == 1 and b.calls == 2


def test_config_requires_one_scheduler():
    with pytest.raises(ConfigurationError):
        CombinedConfig(r_max=4)
    with pytest.raises(ConfigurationError):
        CombinedConfig(r_max=1, schedule=[0])
