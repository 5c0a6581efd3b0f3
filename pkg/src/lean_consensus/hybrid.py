"""Hybrid quantum and priority scheduling on a uniprocessor.

Rules, applied at operation boundaries:

* a higher-priority process may pre-empt the running one at any time;
* an equal-priority process may pre-empt it only once its quantum is
  used up;
* a lower-priority process never pre-empts;
* when the running process has decided (or nothing has run yet) the
  adversary may dispatch any undecided process.

A process dispatched by pre-emption, or resumed after having been
pre-empted, starts a fresh quantum.  A process that starts the protocol
on a free CPU may already have used part of its quantum on other work
(``initial_quantum_used``).  There are no failures in this model.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .noisy import result_of
from .protocol import ConfigurationError, Execution, Pc, ProcessState, RegisterFile

DEFAULT_OP_CAP = 10_000
MAX_SEARCH_PROCESSES = 4


class StrategyError(ValueError):
    """A scripted strategy breaks the pre-emption rules."""

    def __init__(self, segment: int, reason: str):
        super().__init__(f"segment {segment}: {reason}")
        self.segment = segment
        self.reason = reason


@dataclass(frozen=True)
class HybridConfig:
    quantum: int = 8
    priorities: Optional[tuple] = None  # None: all equal (search: every ordering)
    initial_quantum_used: Optional[tuple] = None  # None: zeros (search: every value)
    op_cap: int = DEFAULT_OP_CAP

    def __post_init__(self):
        if self.quantum < 1:
            raise ConfigurationError("quantum must be >= 1")
        if self.initial_quantum_used is not None:
            if any(not 0 <= u < self.quantum for u in self.initial_quantum_used):
                raise ConfigurationError("initial quantum used must lie in [0, quantum)")

    def priority(self, pid: int) -> int:
        return 0 if self.priorities is None else self.priorities[pid]

    def used(self, pid: int) -> int:
        return 0 if self.initial_quantum_used is None else self.initial_quantum_used[pid]

    def check_size(self, n: int) -> None:
        for name in ("priorities", "initial_quantum_used"):
            value = getattr(self, name)
            if value is not None and len(value) != n:
                raise ConfigurationError(f"{name} has {len(value)} entries for {n} processes")


@dataclass(frozen=True)
class Segment:
    pid: int
    ops: Optional[int] = None  # None: run until the process decides


@dataclass(frozen=True)
class Scripted:
    """Adversary as an explicit list of (process, op count) segments.

    A segment ends early if its process decides.
    """

    segments: tuple

    @classmethod
    def of(cls, *pairs) -> "Scripted":
        return cls(tuple(Segment(*p) if isinstance(p, tuple) else Segment(p) for p in pairs))

    @classmethod
    def run_to_completion(cls, n: int) -> "Scripted":
        return cls(tuple(Segment(i) for i in range(n)))

    def to_text(self) -> str:
        return "".join(f"{s.pid} {'*' if s.ops is None else s.ops}\n" for s in self.segments)

    @classmethod
    def from_text(cls, text: str) -> "Scripted":
        segs = []
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            pid, _, count = line.partition(" ")
            count = count.strip()
            segs.append(Segment(int(pid), None if count in ("", "*") else int(count)))
        return cls(tuple(segs))


class Uniprocessor:
    """Tracks the running process and its remaining quantum."""

    def __init__(self, config: HybridConfig, n: int):
        self.config = config
        self.current: Optional[int] = None
        self.remaining = 0
        self.started = [False] * n

    def dispatch_error(self, pid: int, procs) -> Optional[str]:
        cur = self.current
        if procs[pid].done:
            return f"process {pid} has already decided"
        if pid == cur or cur is None or procs[cur].done:
            return None
        mine, theirs = self.config.priority(pid), self.config.priority(cur)
        if mine > theirs:
            return None
        if mine == theirs:
            if self.remaining == 0:
                return None
            return (f"process {pid} cannot pre-empt equal-priority process {cur} "
                    f"with {self.remaining} op(s) of quantum left")
        return f"process {pid} has lower priority than running process {cur}"

    def dispatch(self, pid: int, procs) -> None:
        cur = self.current
        if pid == cur and not procs[cur].done:
            return
        free = cur is None or procs[cur].done
        q = self.config.quantum
        self.remaining = q - self.config.used(pid) if free and not self.started[pid] else q
        self.started[pid] = True
        self.current = pid

    def tick(self) -> None:
        if self.remaining:
            self.remaining -= 1


def _execute(inputs, config: HybridConfig, strategy: Scripted, keep_trace: bool):
    ex = Execution(inputs, keep_trace=keep_trace)
    config.check_size(len(ex.procs))
    cpu = Uniprocessor(config, len(ex.procs))
    for k, seg in enumerate(strategy.segments):
        if not 0 <= seg.pid < len(ex.procs):
            raise StrategyError(k, f"unknown process {seg.pid}")
        if seg.ops is not None and seg.ops < 1:
            raise StrategyError(k, "segment must run at least one op")
        error = cpu.dispatch_error(seg.pid, ex.procs)
        if error:
            raise StrategyError(k, error)
        cpu.dispatch(seg.pid, ex.procs)
        count = 0
        p = ex.procs[seg.pid]
        while not p.done and (seg.ops is None or count < seg.ops) and ex.ops < config.op_cap:
            ex.step(seg.pid, float(ex.ops))
            cpu.tick()
            count += 1
    return ex


def run_hybrid_trial(inputs: Sequence[int], config: HybridConfig, strategy: Optional[Scripted] = None,
                     *, keep_trace: bool = True):
    """Run ``strategy`` on one simulated CPU; returns (TrialResult, Trace).

    The whole script is checked against the pre-emption rules before
    anything is reported; an illegal segment raises StrategyError.
    """
    if strategy is None:
        strategy = Scripted.run_to_completion(len(inputs))
    _execute(inputs, config, strategy, keep_trace=False)  # dry run: legality
    ex = _execute(inputs, config, strategy, keep_trace=keep_trace)
    return result_of(ex, config.op_cap), ex.trace


# ---------------------------------------------------------------------------
# exhaustive adversary search


@dataclass
class VectorReport:
    inputs: tuple
    max_ops_to_decide: int = 0
    both_round1_set: bool = False  # a0[1] and a1[1] both set before any decision
    open_branches: int = 0  # depth cap hit with undecided processes
    states: int = 0
    safety_violations: list = field(default_factory=list)
    chain_checks: int = 0  # pre-emptions between a round-1 read and the write
    chain_violations: int = 0
    counterexample: Optional[Scripted] = None
    counterexample_config: Optional[HybridConfig] = None


@dataclass
class SearchReport:
    n: int
    quantum: int
    vectors: list = field(default_factory=list)

    @property
    def max_ops_to_decide(self) -> int:
        return max((v.max_ops_to_decide for v in self.vectors), default=0)

    @property
    def both_round1_set(self) -> bool:
        return any(v.both_round1_set for v in self.vectors)

    @property
    def safe(self) -> bool:
        return all(not v.safety_violations for v in self.vectors)

    @property
    def chain_holds(self) -> bool:
        return all(v.chain_violations == 0 for v in self.vectors)

    @property
    def open_branches(self) -> int:
        return sum(v.open_branches for v in self.vectors)

    def to_text(self) -> str:
        lines = [f"# hybrid search n={self.n} quantum={self.quantum}",
                 "inputs max_ops both_round1_set open_branches states"]
        for v in self.vectors:
            bits = "".join(map(str, v.inputs))
            lines.append(f"{bits} {v.max_ops_to_decide} {int(v.both_round1_set)} {v.open_branches} {v.states}")
        for v in self.vectors:
            if v.counterexample is not None:
                cfg = v.counterexample_config
                lines.append(f"# counterexample inputs={''.join(map(str, v.inputs))} "
                             f"priorities={','.join(map(str, cfg.priorities))} "
                             f"initial_quantum_used={','.join(map(str, cfg.initial_quantum_used))}")
                lines.append(v.counterexample.to_text().rstrip("\n"))
        return "\n".join(lines) + "\n"


def weak_orderings(n: int) -> list:
    """Every priority assignment up to order-preserving relabelling."""
    seen = set()
    out = []
    for prio in itertools.product(range(n), repeat=n):
        ranks = sorted(set(prio))
        canon = tuple(ranks.index(p) for p in prio)
        if canon not in seen:
            seen.add(canon)
            out.append(canon)
    return out


def search_worst_case(n: int, config: HybridConfig, depth_cap: Optional[int] = None) -> SearchReport:
    """Explore every legal adversary for every input vector.

    ``config.priorities = None`` explores every priority ordering and
    ``config.initial_quantum_used = None`` every amount of quantum already
    used when a process starts on a free CPU.  States are deduplicated.
    Reports, per input vector, the most operations any process needs to
    decide and whether a0[1] and a1[1] can both be set before the first
    decision.
    """
    if not 1 <= n <= MAX_SEARCH_PROCESSES:
        raise ConfigurationError(f"search supports 1..{MAX_SEARCH_PROCESSES} processes")
    config.check_size(n)
    if depth_cap is None:
        depth_cap = 16 * n
    if not 1 <= depth_cap <= 64 * n:
        raise ConfigurationError("depth cap out of range")
    report = SearchReport(n=n, quantum=config.quantum)
    orderings = [config.priorities] if config.priorities is not None else weak_orderings(n)
    for inputs in itertools.product((0, 1), repeat=n):
        vec = VectorReport(inputs=inputs)
        for prio in orderings:
            _search_one(inputs, prio, config, depth_cap, vec)
        report.vectors.append(vec)
    return report


def _search_one(inputs, prio, config: HybridConfig, depth_cap: int, vec: VectorReport) -> None:
    n = len(inputs)
    q = config.quantum
    if config.initial_quantum_used is not None:
        first_slices = [(q - config.initial_quantum_used[i],) for i in range(n)]
    else:
        first_slices = [tuple(range(q, 0, -1))] * n
    unanimous = inputs[0] if len(set(inputs)) == 1 else None
    procs0 = tuple(ProcessState(i, b, b) for i, b in enumerate(inputs))
    regs0 = RegisterFile()
    # state: procs, regs, current, remaining, started mask, watch, run length
    # watch: process pre-empted between its round-1 reads and its write, or -1
    start = (procs0, regs0, -1, 0, 0, -1, 0)
    visited = set()
    stack = [(start, [])]

    def key(state):
        procs, regs, cur, rem, started, watch, run = state
        return (tuple(p.key() for p in procs), regs.prefix(), cur, rem, started, watch, run)

    while stack:
        state, path = stack.pop()
        k = key(state)
        if k in visited:
            continue
        visited.add(k)
        vec.states += 1
        procs, regs, cur, rem, started, watch, run = state
        live = [i for i in range(n) if not procs[i].done]
        if not live:
            continue
        if sum(p.ops_executed for p in procs) >= depth_cap:
            vec.open_branches += 1
            continue
        running = cur >= 0 and not procs[cur].done
        moves = []  # (pid, remaining quantum after dispatch, preempted?)
        if running:
            moves.append((cur, rem, False))
        for x in live:
            if x == cur and running:
                continue
            if running:
                if prio[x] > prio[cur] or (prio[x] == prio[cur] and rem == 0):
                    moves.append((x, q, True))
            elif started >> x & 1:
                moves.append((x, q, False))
            else:
                for slice_ in first_slices[x]:
                    moves.append((x, slice_, False))
        for x, slice_, preempt in moves:
            nprocs = list(procs)
            p = procs[x].copy()
            nprocs[x] = p
            nregs = regs.copy()
            nwatch, nrun = watch, run
            if watch >= 0 and x == watch and cur != watch:
                # resumed before anyone ran a full quantum or decided
                vec.chain_violations += 1
                nwatch, nrun = -1, 0
            if preempt and nwatch < 0:
                v = procs[cur]
                if v.round == 1 and v.pc == Pc.WRITE_PREF:
                    nwatch, nrun = cur, 0
                    vec.chain_checks += 1
            p.step(nregs)
            nrem = max(0, slice_ - 1)
            first = not running and not started >> x & 1
            new_path = path + [(x, q - slice_ if first else None)]
            decided_now = p.decided is not None
            if nwatch >= 0 and x != nwatch:
                nrun = nrun + 1 if x == cur else 1
                if nrun >= q or decided_now:
                    nwatch, nrun = -1, 0
            if decided_now:
                vec.max_ops_to_decide = max(vec.max_ops_to_decide, p.ops_executed)
                for other in procs:
                    if other.decided is not None and other.decided != p.decided:
                        vec.safety_violations.append(("agreement", _segments(new_path)))
                if unanimous is not None and p.decided != unanimous:
                    vec.safety_violations.append(("validity", _segments(new_path)))
            elif not vec.both_round1_set and nregs.get(0, 1) and nregs.get(1, 1) \
                    and all(o.decided is None for o in nprocs):
                vec.both_round1_set = True
                vec.counterexample = _segments(new_path)
                used = {pid: u for pid, u in new_path if u is not None}
                vec.counterexample_config = HybridConfig(
                    quantum=q, priorities=tuple(prio),
                    initial_quantum_used=tuple(used.get(i, 0) for i in range(n)))
            stack.append(((tuple(nprocs), nregs, x, nrem, started | (1 << x), nwatch, nrun), new_path))


def _segments(path) -> Scripted:
    segs = []
    for pid, group in itertools.groupby(step[0] for step in path):
        segs.append(Segment(pid, len(list(group))))
    return Scripted(tuple(segs))
