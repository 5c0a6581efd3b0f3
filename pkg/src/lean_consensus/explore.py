"""Exhaustive interleaving exploration for small instances.

Breadth-first search over every interleaving of the processes, each
limited to ``per_process_op_cap`` operations.  States are deduplicated
on (process states in id order, register prefix up to the highest
written index).  Every safety check depends only on the source state
and the transition taken, so checking every transition out of every
visited state covers every interleaving.  Breadth-first order makes
each reported counterexample schedule a shortest one.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

from .protocol import ConfigurationError, Pc, ProcessState, RegisterFile, Execution

MAX_PROCESSES = 4
MAX_OPS_PER_PROCESS = 24


@dataclass(frozen=True)
class ExploreViolation:
    code: str
    message: str
    schedule: tuple


@dataclass
class ExplorationReport:
    inputs: tuple
    per_process_op_cap: int
    states_visited: int = 0
    transitions: int = 0
    max_frontier: int = 0
    terminal_leaves: int = 0  # every process decided
    open_leaves: int = 0  # op cap reached with someone undecided
    decision_values: set = field(default_factory=set)
    max_ops_to_decide: int = 0
    violations: list = field(default_factory=list)
    open_witness: Optional[tuple] = None

    @property
    def ok(self) -> bool:
        return not self.violations


def _state_key(procs, regs: RegisterFile):
    return tuple(p.key() for p in procs), regs.prefix()


def explore_all_schedules(inputs, per_process_op_cap: int, *, process_cls=ProcessState,
                          max_violations: int = 16) -> ExplorationReport:
    """Check agreement, validity and the round-structure invariants on every interleaving.

    Executions stopped by the op cap are counted as open leaves; they are
    possible non-termination, never safety violations.  ``process_cls``
    substitutes a protocol variant (used to test the checker itself).
    """
    n = len(inputs)
    if not 1 <= n <= MAX_PROCESSES:
        raise ConfigurationError(f"exploration supports 1..{MAX_PROCESSES} processes, got {n}")
    if not 1 <= per_process_op_cap <= MAX_OPS_PER_PROCESS:
        raise ConfigurationError(f"per-process cap must be in 1..{MAX_OPS_PER_PROCESS}")
    start = Execution(inputs, keep_trace=False, process_cls=process_cls)
    inputs = start.inputs
    input_values = set(inputs)
    unanimous = inputs[0] if len(input_values) == 1 else None
    cap = per_process_op_cap

    report = ExplorationReport(inputs=tuple(inputs), per_process_op_cap=cap)
    root = _state_key(start.procs, start.regs)
    parent: dict = {root: None}
    queue = deque([(start.procs, start.regs, root)])

    def path_to(key) -> list:
        out = []
        while parent[key] is not None:
            key, pid = parent[key]
            out.append(pid)
        out.reverse()
        return out

    def flag(code, message, key, pid):
        if len(report.violations) < max_violations:
            report.violations.append(ExploreViolation(code, message, tuple(path_to(key) + [pid])))

    while queue:
        report.max_frontier = max(report.max_frontier, len(queue))
        procs, regs, key = queue.popleft()
        report.states_visited += 1
        enabled = [i for i, p in enumerate(procs) if not p.done and p.ops_executed < cap]
        if not enabled:
            if all(p.done for p in procs):
                report.terminal_leaves += 1
            else:
                report.open_leaves += 1
                if report.open_witness is None:
                    report.open_witness = tuple(path_to(key))
            continue
        for i in enabled:
            report.transitions += 1
            p = procs[i].copy()
            nregs = regs.copy()
            if p.pc == Pc.WRITE_PREF:
                b, r = p.preference, p.round
                if not nregs.get(b, r):
                    if r == 1 and b not in input_values:
                        flag("V3", f"a{b}[1] set but no process has input {b}", key, i)
                    if r > 1 and not nregs.get(b, r - 1):
                        flag("V3", f"a{b}[{r}] set before a{b}[{r - 1}]", key, i)
                for q in procs:
                    if q.decided == 1 - b and q.round == r:
                        flag("V4", f"p{i} writes a{b}[{r}] after p{q.pid} decided {q.decided} "
                                   f"at round {r}", key, i)
            p.step(nregs)
            nprocs = list(procs)
            nprocs[i] = p
            if p.decided is not None:
                d, rd = p.decided, p.round
                report.decision_values.add(d)
                report.max_ops_to_decide = max(report.max_ops_to_decide, p.ops_executed)
                if nregs.get(1 - d, rd):
                    flag("V4", f"p{i} decides {d} at round {rd} but a{1 - d}[{rd}] is set", key, i)
                if unanimous is not None and d != unanimous:
                    flag("V2", f"p{i} decides {d}, every input is {unanimous}", key, i)
                for q in procs:
                    if q.decided is None:
                        continue
                    if q.decided != d:
                        flag("V1", f"p{i} decides {d}, p{q.pid} decided {q.decided}", key, i)
                    if abs(q.round - rd) > 1:
                        flag("V4", f"decision rounds {q.round} and {rd} differ by more than 1", key, i)
            nkey = _state_key(nprocs, nregs)
            if nkey in parent:
                continue
            parent[nkey] = (key, i)
            queue.append((nprocs, nregs, nkey))
    return report
