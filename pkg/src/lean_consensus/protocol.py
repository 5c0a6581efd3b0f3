"""The lean-consensus state machine.

Shared state is two monotone bit arrays ``a0`` and ``a1``.  Every round
a process performs exactly four register operations, in this order:

1. read ``a0[r]``
2. read ``a1[r]``; if exactly one of the two bits was 1, adopt that side
3. write 1 to ``a_p[r]``
4. read ``a_{1-p}[r-1]``; on 0 decide ``p``, otherwise go to round r+1

Index 0 of both arrays is a virtual slot that always reads 1.  None of
the operations may be skipped, even when its outcome looks predictable.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, NamedTuple, Optional, Sequence

READ = "read"
WRITE = "write"

DEFAULT_OP_CAP = 10**6


class ConfigurationError(ValueError):
    """Bad parameters supplied by the caller."""


class ProtocolError(RuntimeError):
    """An operation was requested that the protocol cannot perform.

    Raised for harness bugs, e.g. stepping a process that already decided.
    """


class Pc(IntEnum):
    READ_A0 = 0
    READ_A1 = 1
    WRITE_PREF = 2
    READ_BEHIND = 3


_A0, _A1, _WRITE, _BEHIND = Pc


class RegisterFile:
    """The arrays ``a0`` and ``a1``.

    Unbounded mode grows the backing storage by doubling.  Bounded mode
    (``capacity`` set) fixes the number of slots; touching an index
    above it raises ProtocolError.
    """

    __slots__ = ("bits", "capacity", "highest", "max_touched")

    def __init__(self, capacity: Optional[int] = None):
        if capacity is not None and capacity < 1:
            raise ConfigurationError("register capacity must be positive")
        size = capacity if capacity is not None else 8
        self.bits = [bytearray(size), bytearray(size)]
        self.capacity = capacity
        self.highest = 0
        self.max_touched = 0

    def _check(self, index: int) -> None:
        if index < 0:
            raise ProtocolError(f"negative register index {index}")
        if index > self.max_touched:
            if self.capacity is not None and index > self.capacity:
                raise ProtocolError(f"register index {index} exceeds capacity {self.capacity}")
            self.max_touched = index

    def read(self, array: int, index: int) -> int:
        self._check(index)
        if index == 0:
            return 1
        bits = self.bits[array]
        return bits[index - 1] if index <= len(bits) else 0

    def write(self, array: int, index: int) -> None:
        """Set ``a_array[index]`` to 1; there is no way to write a 0."""
        if index == 0:
            raise ProtocolError("slot 0 is read-only")
        self._check(index)
        bits = self.bits[array]
        if index > len(bits):
            grow = len(bits)
            while len(bits) + grow < index:
                grow *= 2
            self.bits[0].extend(bytes(grow))
            self.bits[1].extend(bytes(grow))
            bits = self.bits[array]
        bits[index - 1] = 1
        if index > self.highest:
            self.highest = index

    def get(self, array: int, index: int) -> int:
        """Peek without recording the access."""
        if index == 0:
            return 1
        bits = self.bits[array]
        return bits[index - 1] if index <= len(bits) else 0

    def prefix(self) -> tuple[bytes, bytes]:
        """Both arrays up to the highest written index (canonical form)."""
        hi = self.highest
        return bytes(self.bits[0][:hi]), bytes(self.bits[1][:hi])

    def copy(self) -> "RegisterFile":
        other = RegisterFile.__new__(RegisterFile)
        other.bits = [bytearray(self.bits[0]), bytearray(self.bits[1])]
        other.capacity = self.capacity
        other.highest = self.highest
        other.max_touched = self.max_touched
        return other


@dataclass(slots=True)
class ProcessState:
    pid: int
    input: int
    preference: int
    round: int = 1
    pc: Pc = Pc.READ_A0
    seen0: int = 0  # value read from a0[r] earlier in this round
    decided: Optional[int] = None
    ops_executed: int = 0
    halted: bool = False

    @property
    def done(self) -> bool:
        return self.decided is not None or self.halted

    def key(self) -> tuple:
        return (self.preference, self.round, int(self.pc), self.seen0, self.decided,
                self.ops_executed, self.halted)

    def copy(self) -> "ProcessState":
        return type(self)(self.pid, self.input, self.preference, self.round, self.pc,
                          self.seen0, self.decided, self.ops_executed, self.halted)

    def step(self, regs: RegisterFile) -> tuple[str, int, int, int]:
        """Perform the next register operation; returns (kind, array, index, value)."""
        pc = self.pc
        r = self.round
        if pc == 0:
            v = regs.read(0, r)
            self.seen0 = v
            self.pc = _A1
            rec = (READ, 0, r, v)
        elif pc == 1:
            v = regs.read(1, r)
            if v != self.seen0:
                self.preference = 0 if self.seen0 else 1
            self.pc = _WRITE
            rec = (READ, 1, r, v)
        elif pc == 2:
            p = self.preference
            regs.write(p, r)
            self.pc = _BEHIND
            rec = (WRITE, p, r, 1)
        else:
            other = 1 - self.preference
            v = regs.read(other, r - 1)
            if v == 0:
                self.decided = self.preference
            else:
                self.round = r + 1
                self.pc = _A0
            rec = (READ, other, r - 1, v)
        self.ops_executed += 1
        return rec


def _check_bit(value, what: str) -> int:
    if value not in (0, 1) or isinstance(value, float):
        raise ConfigurationError(f"{what} must be 0 or 1, got {value!r}")
    return int(value)


def init_process(pid: int, input: int, registry: Optional[set] = None) -> ProcessState:
    """Fresh process at round 1 preferring its input.

    ``registry`` collects ids already in use within a trial.
    """
    bit = _check_bit(input, "input")
    if registry is not None:
        if pid in registry:
            raise ConfigurationError(f"duplicate process id {pid}")
        registry.add(pid)
    return ProcessState(pid=pid, input=bit, preference=bit)


def apply_next_op(state: ProcessState, regs: RegisterFile):
    """Execute one operation of ``state``; returns (state, regs, decision).

    Both ``state`` and ``regs`` are updated in place and returned.
    ``decision`` is the decided bit when this operation was the deciding
    read, else None.
    """
    if state.done:
        raise ProtocolError(f"process {state.pid} is {'halted' if state.halted else 'decided'}")
    state.step(regs)
    return state, regs, state.decided


class OpRecord(NamedTuple):
    step: int
    pid: int
    round: int
    kind: str
    array: int
    slot: int
    value: int
    time: float


class DecisionRecord(NamedTuple):
    pid: int
    round: int
    value: int
    ops: int
    via: str  # "lean" or "backup"
    step: int


@dataclass
class Trace:
    inputs: tuple
    ops: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    halted: list = field(default_factory=list)

    def schedule(self) -> list[int]:
        return [op.pid for op in self.ops]

    def to_text(self) -> str:
        lines = ["inputs " + "".join(str(b) for b in self.inputs)]
        for op in self.ops:
            lines.append(f"op {op.step} p{op.pid} r{op.round} {op.kind} a{op.array}[{op.slot}]"
                         f"={op.value} t={op.time!r}")
        for d in self.decisions:
            lines.append(f"decide p{d.pid} r{d.round} v{d.value} ops{d.ops} {d.via} @{d.step}")
        for pid in self.halted:
            lines.append(f"halt p{pid}")
        return "\n".join(lines) + "\n"


class Execution:
    """One run of the protocol: processes, registers and the trace.

    Schedulers drive it by calling :meth:`step` with a process id. With
    ``r_max`` set the registers are bounded and a process that finishes
    round ``r_max`` without deciding hands its preference to ``backup``.
    """

    def __init__(self, inputs: Sequence[int], *, keep_trace: bool = True,
                 r_max: Optional[int] = None, backup=None, process_cls=ProcessState):
        if len(inputs) == 0:
            raise ConfigurationError("no processes")
        registry: set = set()
        self.procs = []
        for pid, b in enumerate(inputs):
            p = init_process(pid, b, registry)
            if process_cls is not ProcessState:
                p = process_cls(p.pid, p.input, p.preference)
            self.procs.append(p)
        self.inputs = tuple(p.input for p in self.procs)
        if r_max is not None and backup is None:
            raise ConfigurationError("bounded registers need a backup protocol")
        self.r_max = r_max
        self.backup = backup
        self.regs = RegisterFile(capacity=r_max)
        self.trace = Trace(self.inputs) if keep_trace else None
        self.ops = 0
        self.live = len(self.procs)
        self.via = [None] * len(self.procs)
        self.decision_rounds = [None] * len(self.procs)
        self.contract_violation: Optional[str] = None

    def step(self, pid: int, time: float = 0.0) -> Optional[int]:
        """Run one operation of process ``pid``; returns its decision, if any."""
        p = self.procs[pid]
        if p.done:
            raise ProtocolError(f"process {pid} is {'halted' if p.halted else 'decided'}")
        rnd = p.round
        kind, array, slot, value = p.step(self.regs)
        step = self.ops
        self.ops += 1
        if self.trace is not None:
            self.trace.ops.append(OpRecord(step, pid, rnd, kind, array, slot, value, time))
        if p.decided is not None:
            self._finish(p, p.round, "lean", step)
            return p.decided
        if self.r_max is not None and p.pc == 0 and p.round > self.r_max:
            return self._enter_backup(p, step)
        return None

    def _enter_backup(self, p: ProcessState, step: int) -> Optional[int]:
        value = self.backup.propose(p.pid, p.preference)
        if value not in (0, 1):
            self.contract_violation = f"backup returned {value!r} to process {p.pid}"
            p.halted = True
            self.live -= 1
            if self.trace is not None:
                self.trace.halted.append(p.pid)
            return None
        p.decided = int(value)
        self._finish(p, p.round, "backup", step)
        return p.decided

    def _finish(self, p: ProcessState, rnd: int, via: str, step: int) -> None:
        self.live -= 1
        self.via[p.pid] = via
        self.decision_rounds[p.pid] = rnd
        if self.trace is not None:
            self.trace.decisions.append(DecisionRecord(p.pid, rnd, p.decided, p.ops_executed, via, step))

    def halt(self, pid: int) -> None:
        p = self.procs[pid]
        if p.done:
            raise ProtocolError(f"process {pid} already finished")
        p.halted = True
        self.live -= 1
        if self.trace is not None:
            self.trace.halted.append(pid)

    @property
    def finished(self) -> bool:
        return self.live == 0


@dataclass(frozen=True)
class Outcome:
    decisions: tuple  # per process: bit or None
    decision_rounds: tuple
    ops_executed: tuple
    total_ops: int
    non_terminated: bool = False  # op cap reached with undecided processes
    schedule_exhausted: bool = False  # schedule ended with undecided processes
    decided_via: tuple = ()

    @property
    def all_decided(self) -> bool:
        return all(d is not None for d in self.decisions)

    @property
    def decision_values(self) -> set:
        return {d for d in self.decisions if d is not None}


def outcome_of(ex: Execution, *, non_terminated=False, exhausted=False) -> Outcome:
    return Outcome(
        decisions=tuple(p.decided for p in ex.procs),
        decision_rounds=tuple(ex.decision_rounds),
        ops_executed=tuple(p.ops_executed for p in ex.procs),
        total_ops=ex.ops,
        non_terminated=non_terminated,
        schedule_exhausted=exhausted,
        decided_via=tuple(ex.via),
    )


def drive_schedule(ex: Execution, schedule: Iterable[int], op_cap: int) -> None:
    """Feed ``schedule`` to ``ex`` until it finishes, the schedule ends, or the cap is hit.

    Entries naming a process that has already decided or halted are
    skipped and consume no operation.
    """
    n = len(ex.procs)
    for pid in schedule:
        if ex.finished or ex.ops >= op_cap:
            break
        if not 0 <= pid < n:
            raise ConfigurationError(f"schedule names unknown process {pid}")
        if ex.procs[pid].done:
            continue
        ex.step(pid, float(ex.ops))


def run_with_schedule(inputs: Sequence[int], schedule: Iterable[int], op_cap: int = DEFAULT_OP_CAP,
                      *, r_max: Optional[int] = None, backup=None, keep_trace: bool = True):
    """Replay an explicit interleaving; returns (Outcome, Trace).

    The schedule may be infinite (e.g. ``itertools.cycle``); the run
    stops when every process is done, the schedule ends, or ``op_cap``
    operations have executed.  Trace times are global op indices.
    """
    if op_cap <= 0:
        raise ConfigurationError("op_cap must be positive")
    ex = Execution(inputs, keep_trace=keep_trace, r_max=r_max, backup=backup)
    drive_schedule(ex, schedule, op_cap)
    out = outcome_of(ex, non_terminated=not ex.finished and ex.ops >= op_cap,
                     exhausted=not ex.finished and ex.ops < op_cap)
    return out, ex.trace


def round_robin(n: int):
    """Infinite strict alternation 0, 1, ..., n-1, 0, 1, ..."""
    return itertools.cycle(range(n))


def format_schedule(schedule: Iterable[int]) -> str:
    """One process id per line."""
    return "".join(f"{pid}\n" for pid in schedule)


def parse_schedule(text: str) -> list[int]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            out.append(int(line))
        except ValueError:
            raise ConfigurationError(f"line {lineno}: not a process id: {line!r}") from None
    return out
