"""Safety checks over a finished trace.

Codes:

``V0``  reads return the last preceding write (interleaving semantics)
``V1``  agreement: all decisions equal
``V2``  validity: unanimous input b forces every decision to b
``V3``  monotone structure: only 1s are written, and a_b[r] is first set
        only if r == 1 and b is some input, or a_b[r-1] is already set
``V4``  a decision of b at round r rules out any write to a_{1-b}[r],
        and every decision happens by round r + 1
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .protocol import READ, WRITE, Trace


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    step: int | None = None


@dataclass
class ValidationReport:
    violations: list = field(default_factory=list)
    checked_ops: int = 0
    checked_decisions: int = 0

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set:
        return {v.code for v in self.violations}

    def add(self, code: str, message: str, step=None) -> None:
        self.violations.append(Violation(code, message, step))

    def summary(self) -> str:
        if self.ok:
            return f"ok ({self.checked_ops} ops, {self.checked_decisions} decisions)"
        return "; ".join(f"{v.code}@{v.step}: {v.message}" for v in self.violations)


def validate_trace(trace: Trace) -> ValidationReport:
    report = ValidationReport(checked_ops=len(trace.ops), checked_decisions=len(trace.decisions))
    inputs = set(trace.inputs)
    bits = ({}, {})  # array -> {slot: 1}

    for op in trace.ops:
        cell = bits[op.array]
        if op.kind == READ:
            expect = 1 if op.slot == 0 else cell.get(op.slot, 0)
            if op.value != expect:
                report.add("V0", f"p{op.pid} read a{op.array}[{op.slot}]={op.value}, last write gives {expect}",
                           op.step)
        elif op.kind == WRITE:
            if op.value != 1:
                report.add("V3", f"p{op.pid} wrote {op.value} to a{op.array}[{op.slot}]", op.step)
                continue
            if op.slot < 1:
                report.add("V3", f"p{op.pid} wrote read-only slot a{op.array}[{op.slot}]", op.step)
                continue
            if op.slot not in cell:
                if op.slot == 1 and op.array not in inputs:
                    report.add("V3", f"a{op.array}[1] set but no process has input {op.array}", op.step)
                if op.slot > 1 and (op.slot - 1) not in bits[op.array]:
                    report.add("V3", f"a{op.array}[{op.slot}] set before a{op.array}[{op.slot - 1}]", op.step)
                cell[op.slot] = 1
        else:
            report.add("V0", f"unknown op kind {op.kind!r}", op.step)

    decisions = trace.decisions
    values = {d.value for d in decisions}
    if len(values) > 1:
        report.add("V1", "conflicting decisions: " +
                   ", ".join(f"p{d.pid}={d.value}@r{d.round}" for d in decisions))
    if len(inputs) == 1:
        (b,) = inputs
        for d in decisions:
            if d.value != b:
                report.add("V2", f"p{d.pid} decided {d.value} but every input is {b}", d.step)

    written = {}
    for op in trace.ops:
        if op.kind == WRITE:
            written.setdefault((op.array, op.slot), op.step)
    lean = [d for d in decisions if d.via == "lean"]
    for d in lean:
        other = 1 - d.value
        if (other, d.round) in written:
            report.add("V4", f"p{d.pid} decided {d.value} at round {d.round} "
                             f"but a{other}[{d.round}] is written", written[other, d.round])
    if lean:
        first = min(lean, key=lambda d: d.round)
        for e in decisions:
            if e.round > first.round + 1:
                report.add("V4", f"p{e.pid} decided at round {e.round}, "
                                 f"more than one round after p{first.pid} (round {first.round})", e.step)
    return report
