"""Bounded-space lean-consensus with a backup protocol.

Processes run the ordinary protocol on arrays of exactly ``r_max``
slots.  A process that completes round ``r_max`` without deciding
(i.e. its final read of round ``r_max`` saw a 1) proposes its current
preference to the backup protocol and adopts whatever it returns.
"""

from __future__ import annotations

import abc
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .noisy import NoiseModel, TrialResult, collect_trials, result_of, run_noisy_trial
from .protocol import ConfigurationError, DEFAULT_OP_CAP, Execution, drive_schedule

MIN_RMAX = 2


class BackupProtocol(abc.ABC):
    """Consensus object used after round ``r_max``.

    Must satisfy agreement and validity under any scheduling: if every
    proposal is ``b`` then every call returns ``b``.
    """

    @abc.abstractmethod
    def propose(self, pid: int, bit: int) -> int: ...


class OracleBackup(BackupProtocol):
    """Decide-once cell: the first proposal wins.

    A simulation oracle, not a register-only protocol.  Atomic by
    virtue of the single-threaded event loop.
    """

    def __init__(self):
        self.value: Optional[int] = None
        self.calls = 0

    def propose(self, pid: int, bit: int) -> int:
        self.calls += 1
        if self.value is None:
            self.value = bit
        return self.value


def compute_rmax(n: int, T_scale: int, c_exponent: int) -> int:
    """``T_scale * c_exponent * ceil(log2 n)``, at least 2."""
    if n < 2:
        raise ConfigurationError("compute_rmax needs n >= 2")
    if T_scale < 1 or c_exponent < 1:
        raise ConfigurationError("T_scale and c_exponent must be >= 1")
    return max(MIN_RMAX, T_scale * c_exponent * math.ceil(math.log2(n)))


@dataclass
class CombinedConfig:
    r_max: int
    backup_factory: type = OracleBackup
    noise: Optional[NoiseModel] = None  # drive with noisy scheduling ...
    schedule: Optional[Sequence[int]] = None  # ... or replay this interleaving
    op_cap: int = DEFAULT_OP_CAP

    def __post_init__(self):
        if self.r_max < MIN_RMAX:
            raise ConfigurationError(f"r_max must be >= {MIN_RMAX}")
        if (self.noise is None) == (self.schedule is None):
            raise ConfigurationError("give exactly one of noise or schedule")


@dataclass(frozen=True)
class CombinedResult:
    result: TrialResult
    backup_calls: int
    max_index_touched: int
    trace: object = None

    @property
    def decided_via(self) -> tuple:
        return self.result.decided_via


def run_combined(inputs: Sequence[int], config: CombinedConfig, seed=0, *,
                 keep_trace: bool = False) -> CombinedResult:
    """One trial of the combined protocol under the configured scheduler.

    ``decided_via`` of the result records, per process, whether it
    decided inside lean-consensus or through the backup.  A backup that
    returns something other than a bit is reported in
    ``result.contract_violation``.
    """
    backup = config.backup_factory()
    if config.schedule is not None:
        ex = Execution(inputs, keep_trace=keep_trace, r_max=config.r_max, backup=backup)
        if config.op_cap <= 0:
            raise ConfigurationError("op_cap must be positive")
        drive_schedule(ex, config.schedule, config.op_cap)
        result, trace, touched = result_of(ex, config.op_cap), ex.trace, ex.regs.max_touched
    else:
        result, trace = run_noisy_trial(inputs, config.noise, seed, config.op_cap, keep_trace=True,
                                        r_max=config.r_max, backup=backup)
        touched = max((op.slot for op in trace.ops), default=0)
        if not keep_trace:
            trace = None
    return CombinedResult(result, getattr(backup, "calls", 0), touched, trace)


def backup_fraction(inputs, noise: NoiseModel, r_max: int, master_seed: int, trials: int, *, jobs: int = 1) -> float:
    """Fraction of noisy trials in which some process reaches the backup."""
    summaries = collect_trials(inputs, noise, master_seed, trials, r_max=r_max, jobs=jobs)
    return sum(s.backup_used for s in summaries) / trials
