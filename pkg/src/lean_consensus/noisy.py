"""Noisy scheduling: adversarial delays perturbed by random noise.

Process ``i``'s ``j``-th operation happens at

    S'_ij = start_i + sum_{k <= j} (delta_ik + X_ik + H_ik)

where ``delta_ik`` in [0, M] is fixed in advance by the adversary, ``X_ik``
is drawn from the delay distribution of the operation's type (read or
write), and ``H_ik`` is infinite with probability ``failure_rate`` (the
process halts before that operation).  Start times get a uniform dither
so simultaneous operations have probability zero; exact float ties are
broken by (pid, seq).
"""

from __future__ import annotations

import csv
import heapq
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from ._parallel import chunk_ranges, parallel_map
from .distributions import DelayDistribution
from .protocol import WRITE, ConfigurationError, DEFAULT_OP_CAP, Execution
from .rng import RngStream, as_generator, derive_trial_seed, mix_seed

HALT = math.inf
DEFAULT_DITHER = (0.0, 1e-8)


@dataclass(frozen=True)
class DeltaPolicy:
    """Oblivious adversary delays ``delta_ij`` for j >= 1.

    kinds: ``zero``; ``constant`` (``value``); ``per_process``
    (``values[i]``); ``table`` (``table[i][j-1]``, last entry repeats).
    """

    kind: str = "zero"
    value: float = 0.0
    values: tuple = ()
    table: tuple = ()

    def __post_init__(self):
        if self.kind not in ("zero", "constant", "per_process", "table"):
            raise ConfigurationError(f"unknown delta policy {self.kind!r}")
        if self.kind == "table" and any(len(row) == 0 for row in self.table):
            raise ConfigurationError("delta table rows must be non-empty")

    def delta(self, pid: int, j: int) -> float:
        kind = self.kind
        if kind == "zero":
            return 0.0
        if kind == "constant":
            return self.value
        if kind == "per_process":
            return self.values[pid]
        row = self.table[pid]
        return row[min(j, len(row)) - 1]

    def max_value(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        if self.kind == "per_process":
            return max(self.values, default=0.0)
        return max((max(row) for row in self.table), default=0.0)

    def min_value(self) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "constant":
            return self.value
        if self.kind == "per_process":
            return min(self.values, default=0.0)
        return min((min(row) for row in self.table), default=0.0)

    def covers(self, n: int) -> bool:
        if self.kind == "per_process":
            return len(self.values) >= n
        if self.kind == "table":
            return len(self.table) >= n
        return True


@dataclass(frozen=True)
class NoiseModel:
    dist_read: DelayDistribution
    dist_write: DelayDistribution
    M: float = 0.0
    delta_policy: DeltaPolicy = field(default_factory=DeltaPolicy)
    delta0: Optional[tuple] = None  # explicit start offsets; default all 0
    failure_rate: float = 0.0
    dither: Optional[tuple] = DEFAULT_DITHER

    def __post_init__(self):
        if not self.M >= 0:
            raise ConfigurationError("M must be non-negative")
        if self.delta_policy.min_value() < 0 or self.delta_policy.max_value() > self.M:
            raise ConfigurationError(f"adversary delays must lie in [0, M={self.M}]")
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ConfigurationError("failure rate must be in [0, 1]")
        if self.dither is not None:
            lo, hi = self.dither
            if not 0 <= lo < hi:
                raise ConfigurationError("dither must be a non-empty interval [lo, hi) with lo >= 0")

    @classmethod
    def simple(cls, dist: DelayDistribution, **kw) -> "NoiseModel":
        """Same distribution for reads and writes."""
        return cls(dist_read=dist, dist_write=dist, **kw)

    def start_times(self, n: int, gen: np.random.Generator) -> list:
        base = list(self.delta0) if self.delta0 is not None else [0.0] * n
        if len(base) < n:
            raise ConfigurationError(f"delta0 lists {len(base)} offsets for {n} processes")
        if self.dither is not None:
            jitter = gen.uniform(self.dither[0], self.dither[1], n)
            return [base[i] + float(jitter[i]) for i in range(n)]
        return [float(b) for b in base[:n]]


def next_op_time(prev: float, op_kind: str, model: NoiseModel, rng, *, pid: int = 0, j: int = 1) -> float:
    """Time of the next operation, or HALT (infinity) if the process fails first."""
    gen = as_generator(rng)
    if model.failure_rate and gen.random() < model.failure_rate:
        return HALT
    dist = model.dist_write if op_kind == WRITE else model.dist_read
    return prev + model.delta_policy.delta(pid, j) + float(dist.sample(gen, 1)[0])


class OpTimes:
    """Operation times of every process, generated in blocks.

    Column ``j - 1`` of row ``i`` holds ``S'_ij``.  Because the adversary
    is oblivious, these times do not depend on the execution; the
    op type of operation ``j`` is fixed by the round structure (the
    third operation of every round is the write).  Blocks double in
    length, and each block draws reads, then writes, then failure coins,
    for all processes at once.  Infinite entries mean the process halted.
    """

    def __init__(self, model: NoiseModel, n: int, gen: np.random.Generator, first_block: int = 16):
        self.model = model
        self.n = n
        self.gen = gen
        self.start = np.asarray(model.start_times(n, gen), dtype=float)
        self.times = np.empty((n, 0))
        self._next_block = first_block
        self.extend()

    @property
    def length(self) -> int:
        return self.times.shape[1]

    def extend(self) -> None:
        n, lo, size = self.n, self.length, self._next_block
        self._next_block *= 2
        m = self.model
        gen = self.gen
        x = m.dist_read.sample(gen, n * size).reshape(n, size)
        x[:, 2::4] = m.dist_write.sample(gen, n * (size // 4)).reshape(n, size // 4)
        if m.failure_rate > 0:
            x[gen.random((n, size)) < m.failure_rate] = math.inf
        policy = m.delta_policy
        if policy.kind == "constant":
            x += policy.value
        elif policy.kind == "per_process":
            x += np.asarray(policy.values[:n], dtype=float)[:, None]
        elif policy.kind == "table":
            x += np.array([[policy.delta(i, j) for j in range(lo + 1, lo + size + 1)] for i in range(n)])
        base = self.times[:, -1:] if lo else self.start[:, None]
        block = base + np.cumsum(x, axis=1)
        self.times = np.hstack([self.times, block]) if lo else block

    def time(self, pid: int, j: int) -> float:
        while j > self.length:
            self.extend()
        return float(self.times[pid, j - 1])


@dataclass(frozen=True)
class TrialResult:
    decision: Optional[int]  # the common decision; None if nobody decided or deciders disagree
    first_decision_round: Optional[int]
    last_decision_round: Optional[int]
    ops_executed: tuple
    halted: int
    non_terminated: bool
    total_ops: int
    decided_via: tuple = ()
    contract_violation: Optional[str] = None
    decisions: tuple = ()

    @property
    def agreement(self) -> bool:
        return len({d for d in self.decisions if d is not None}) <= 1

    @property
    def outcome(self) -> str:
        if self.non_terminated:
            return "non_terminated"
        if all(d is None for d in self.decisions):
            return "all_halted"
        return "decided"

    @property
    def backup_used(self) -> bool:
        return "backup" in self.decided_via

    @property
    def n(self) -> int:
        return len(self.ops_executed)


def result_of(ex: Execution, op_cap: int) -> TrialResult:
    rounds = [r for r in ex.decision_rounds if r is not None]
    decided = [p.decided for p in ex.procs if p.decided is not None]
    non_terminated = not ex.finished and ex.ops >= op_cap
    return TrialResult(
        decision=decided[0] if decided and len(set(decided)) == 1 else None,
        first_decision_round=min(rounds) if rounds else None,
        last_decision_round=max(rounds) if rounds else None,
        ops_executed=tuple(p.ops_executed for p in ex.procs),
        halted=sum(p.halted for p in ex.procs),
        non_terminated=non_terminated,
        total_ops=ex.ops,
        decided_via=tuple(ex.via),
        contract_violation=ex.contract_violation,
        decisions=tuple(p.decided for p in ex.procs),
    )


def _as_stream(seed) -> RngStream | np.random.Generator:
    if isinstance(seed, (RngStream, np.random.Generator)):
        return seed
    return RngStream(int(seed))


def run_noisy_trial(inputs: Sequence[int], model: NoiseModel, seed, op_cap: int = DEFAULT_OP_CAP,
                    *, keep_trace: bool = False, r_max: Optional[int] = None, backup=None):
    """One trial under noisy scheduling; returns (TrialResult, Trace or None).

    The event loop pops the least (time, pid, seq) key, performs that
    process's next protocol operation and schedules its following one.
    It stops when every process has decided or halted, or after
    ``op_cap`` operations (reported as non_terminated).

    Trials without a trace or bounded registers use :func:`_merged_trial`,
    which processes the same events in the same order in numpy-sorted
    batches instead of one heap operation at a time.
    """
    if op_cap <= 0:
        raise ConfigurationError("op_cap must be positive")
    n = len(inputs)
    if not model.delta_policy.covers(n):
        raise ConfigurationError(f"delta policy does not cover {n} processes")
    gen = as_generator(_as_stream(seed))
    if not keep_trace and r_max is None:
        return _merged_trial(inputs, model, gen, op_cap), None
    ex = Execution(inputs, keep_trace=keep_trace, r_max=r_max, backup=backup)
    heap_event_loop(ex, OpTimes(model, n, gen), op_cap)
    return result_of(ex, op_cap), ex.trace


def heap_event_loop(ex: Execution, table: OpTimes, op_cap: int) -> None:
    """Priority-queue loop over EventKey = (time, pid, seq)."""
    heap = []
    for pid in range(len(ex.procs)):
        t = table.time(pid, 1)
        if t == HALT:
            ex.halt(pid)
        else:
            heap.append((t, pid, 1))
    heapq.heapify(heap)
    procs = ex.procs
    while heap and ex.ops < op_cap:
        t, pid, seq = heap[0]
        ex.step(pid, t)
        if procs[pid].done:
            heapq.heappop(heap)
            continue
        seq += 1
        t = table.time(pid, seq)
        if t == HALT:
            ex.halt(pid)
            heapq.heappop(heap)
        else:
            heapq.heapreplace(heap, (t, pid, seq))


def _merged_trial(inputs, model: NoiseModel, gen, op_cap: int) -> TrialResult:
    # The lean-consensus round on flat per-process lists, fed by a sorted
    # window of events: every still-running process has generated times
    # past the window bound, so no unseen event can sort inside it.
    bits = []
    for b in inputs:
        if b not in (0, 1) or isinstance(b, float):
            raise ConfigurationError(f"input must be 0 or 1, got {b!r}")
        bits.append(int(b))
    n = len(bits)
    if n == 0:
        raise ConfigurationError("no processes")
    table = OpTimes(model, n, gen)

    pref = list(bits)
    rnd = [1] * n
    pc = [0] * n
    seen = [0] * n
    decided = [None] * n
    halted = [False] * n
    nxt = np.zeros(n, dtype=np.int64)  # 0-based index of each process's next op
    size = 64
    a0 = bytearray(size)  # slot r stored at index r; slot 0 reads 1
    a1 = bytearray(size)
    a0[0] = a1[0] = 1
    arrays = (a0, a1)
    running = list(range(n))
    total = 0

    while running and total < op_cap:
        times = table.times
        length = times.shape[1]
        rows = np.asarray(running)
        sub = times[rows]
        last = sub[:, -1]
        bound = last.min()  # inf when every running process halts inside the table
        cols = np.arange(length)
        mask = (cols[None, :] >= nxt[rows][:, None]) & (sub < bound if bound < HALT else np.isfinite(sub))
        ri, cj = np.nonzero(mask)
        order = np.lexsort((cj, rows[ri], sub[ri, cj]))
        events = rows[ri][order]
        pids = events.tolist()
        stop = len(pids)
        for k, pid in enumerate(pids):
            if decided[pid] is not None:
                continue
            if total >= op_cap:
                stop = k
                break
            c = pc[pid]
            r = rnd[pid]
            total += 1
            if c == 0:
                seen[pid] = a0[r] if r < size else 0
                pc[pid] = 1
            elif c == 1:
                v = a1[r] if r < size else 0
                if v != seen[pid]:
                    pref[pid] = 0 if seen[pid] else 1
                pc[pid] = 2
            elif c == 2:
                if r >= size:
                    a0.extend(bytes(size))
                    a1.extend(bytes(size))
                    size *= 2
                arrays[pref[pid]][r] = 1
                pc[pid] = 3
            else:
                p = pref[pid]
                if arrays[1 - p][r - 1] == 0:
                    decided[pid] = p
                else:
                    rnd[pid] = r + 1
                    pc[pid] = 0
        nxt += np.bincount(events[:stop], minlength=n)
        still = []
        for pid in running:
            if decided[pid] is not None:
                continue
            j = int(nxt[pid])
            if j < length and times[pid, j] == HALT:
                halted[pid] = True
                continue
            still.append(pid)
        running = still
        if running and total < op_cap and bound < HALT:
            table.extend()
        elif running and total < op_cap:
            # every remaining process halts within the table
            for pid in running:
                halted[pid] = True
            running = []

    # decided processes stopped at pc 3 of their decision round
    ops = [4 * (rnd[i] - 1) + pc[i] + (decided[i] is not None) for i in range(n)]
    rounds = [rnd[i] for i in range(n) if decided[i] is not None]
    values = {x for x in decided if x is not None}
    return TrialResult(
        decision=next(iter(values)) if len(values) == 1 else None,
        first_decision_round=min(rounds) if rounds else None,
        last_decision_round=max(rounds) if rounds else None,
        ops_executed=tuple(ops),
        halted=sum(halted),
        non_terminated=bool(running) and total >= op_cap,
        total_ops=total,
        decided_via=tuple("lean" if x is not None else None for x in decided),
        decisions=tuple(decided),
    )


def run_uniform_schedule_trial(inputs: Sequence[int], seed, op_cap: int = DEFAULT_OP_CAP,
                               *, keep_trace: bool = False):
    """Each step runs a process chosen uniformly among those still running."""
    ex = Execution(inputs, keep_trace=keep_trace)
    gen = as_generator(_as_stream(seed))
    live = list(range(len(ex.procs)))
    coins: list = []
    procs = ex.procs
    while live and ex.ops < op_cap:
        if not coins:
            coins = gen.random(2048).tolist()
        k = int(coins.pop() * len(live))
        pid = live[k]
        ex.step(pid, float(ex.ops))
        if procs[pid].done:
            live.pop(k)
    return result_of(ex, op_cap), ex.trace


# ---------------------------------------------------------------------------
# sweeps


def make_inputs(n: int, policy) -> tuple:
    """``half`` (first n//2 zeros), ``zeros``, ``ones``, or an explicit bit list."""
    if isinstance(policy, str):
        if policy == "half":
            return tuple([0] * (n // 2) + [1] * (n - n // 2))
        if policy == "zeros":
            return (0,) * n
        if policy == "ones":
            return (1,) * n
        if set(policy) <= {"0", "1"} and len(policy) == n:
            return tuple(int(c) for c in policy)
        raise ConfigurationError(f"bad inputs policy {policy!r} for n={n}")
    bits = tuple(int(b) for b in policy)
    if len(bits) != n:
        raise ConfigurationError(f"{len(bits)} inputs given for n={n}")
    return bits


class TrialSummary(NamedTuple):
    first_round: float  # nan when nobody decided
    last_round: float
    mean_ops: float
    halted_fraction: float
    non_terminated: bool
    backup_used: bool


def summarize(result: TrialResult) -> TrialSummary:
    n = result.n
    return TrialSummary(
        float(result.first_decision_round) if result.first_decision_round is not None else math.nan,
        float(result.last_decision_round) if result.last_decision_round is not None else math.nan,
        result.total_ops / n,
        result.halted / n,
        result.non_terminated,
        result.backup_used,
    )


@dataclass(frozen=True)
class TrialBatch:
    inputs: tuple
    model: NoiseModel
    master_seed: int
    lo: int
    hi: int
    op_cap: int = DEFAULT_OP_CAP
    r_max: Optional[int] = None


def run_batch(batch: TrialBatch) -> list:
    from .bounded import OracleBackup  # bounded imports this module

    out = []
    for t in range(batch.lo, batch.hi):
        backup = OracleBackup() if batch.r_max is not None else None
        res, _ = run_noisy_trial(batch.inputs, batch.model, derive_trial_seed(batch.master_seed, t),
                                 batch.op_cap, r_max=batch.r_max, backup=backup)
        out.append(summarize(res))
    return out


CHUNK = 250


def collect_trials(inputs, model: NoiseModel, master_seed: int, trials: int, *,
                   op_cap: int = DEFAULT_OP_CAP, r_max: Optional[int] = None, jobs: int = 1) -> list:
    """Per-trial summaries in trial-index order; independent of ``jobs``."""
    batches = [TrialBatch(tuple(inputs), model, master_seed, lo, hi, op_cap, r_max)
               for lo, hi in chunk_ranges(trials, CHUNK)]
    out = []
    for part in parallel_map(run_batch, batches, jobs):
        out.extend(part)
    return out


SWEEP_HEADER = ("distribution", "n", "trials", "mean_first_round", "mean_last_round", "mean_ops",
                "halted_fraction", "nonterminated_fraction")


@dataclass(frozen=True)
class SweepRow:
    distribution: str
    n: int
    trials: int
    mean_first_round: float
    mean_last_round: float
    mean_ops: float
    halted_fraction: float
    nonterminated_fraction: float
    backup_fraction: Optional[float] = None

    def cells(self, with_backup: bool = False) -> list:
        out = [self.distribution, str(self.n), str(self.trials)] + [
            _fmt(v) for v in (self.mean_first_round, self.mean_last_round, self.mean_ops,
                              self.halted_fraction, self.nonterminated_fraction)]
        if with_backup:
            out.append(_fmt(self.backup_fraction if self.backup_fraction is not None else 0.0))
        return out


def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else f"{x:.6f}"


def _mean(values) -> float:
    values = [v for v in values if not math.isnan(v)]
    return math.fsum(values) / len(values) if values else math.nan


def aggregate(label: str, n: int, summaries: list) -> SweepRow:
    k = len(summaries)
    return SweepRow(
        distribution=label,
        n=n,
        trials=k,
        mean_first_round=_mean(s.first_round for s in summaries),
        mean_last_round=_mean(s.last_round for s in summaries),
        mean_ops=_mean(s.mean_ops for s in summaries),
        halted_fraction=_mean(s.halted_fraction for s in summaries),
        nonterminated_fraction=sum(s.non_terminated for s in summaries) / k,
        backup_fraction=sum(s.backup_used for s in summaries) / k,
    )


def cell_seed(master_seed: int, label: str, n: int, inputs_policy) -> int:
    return mix_seed(master_seed, label, n, inputs_policy)


def run_sweep(ns: Sequence[int], dists, trials: int, inputs_policy="half", master_seed: int = 0, *,
              M: float = 0.0, failure_rate: float = 0.0, op_cap: int = DEFAULT_OP_CAP,
              r_max_for=None, jobs: int = 1) -> list:
    """Mean termination statistics for every (distribution, n) cell.

    ``dists`` holds DelayDistribution objects or (label, distribution)
    pairs.  Trial ``t`` of a cell uses stream ``t`` of a seed derived
    from (master_seed, label, n, inputs_policy), so every row can be
    regenerated alone.  ``r_max_for(n)`` switches to the bounded
    combined protocol.
    """
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    rows = []
    for item in dists:
        label, dist = item if isinstance(item, tuple) else (item.token(), item)
        model = NoiseModel.simple(dist, M=M, failure_rate=failure_rate)
        for n in ns:
            inputs = make_inputs(n, inputs_policy)
            r_max = r_max_for(n) if r_max_for is not None else None
            summaries = collect_trials(inputs, model, cell_seed(master_seed, label, n, str(inputs_policy)),
                                       trials, op_cap=op_cap, r_max=r_max, jobs=jobs)
            rows.append(aggregate(label, n, summaries))
    return rows


def write_sweep_csv(rows, stream, *, with_backup: bool = False) -> None:
    writer = csv.writer(stream, lineterminator="\n")  # quotes labels such as normal:1,0.2,0,2
    writer.writerow(list(SWEEP_HEADER) + (["backup_fraction"] if with_backup else []))
    for row in rows:
        writer.writerow(row.cells(with_backup))
