"""Command-line harness: experiment specs, dispatch and CSV output.

Exit codes: 0 success, 1 usage error, 2 verification failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import itertools
import json
import os
import random
import sys
from dataclasses import dataclass
from typing import Optional, Sequence

from .bounded import CombinedConfig, compute_rmax, run_combined
from .distributions import FIGURE_DISTRIBUTIONS, DistributionError, Uniform, parse_distribution
from .explore import explore_all_schedules
from .hybrid import HybridConfig, search_worst_case
from .noisy import NoiseModel, make_inputs, run_noisy_trial, run_sweep, write_sweep_csv
from .protocol import ConfigurationError
from .race import (exactly_one_probability, lower_bound_closed_form, lower_bound_fraction,
                   run_race_sweep, unique_leader_probability, write_race_csv)
from .rng import derive_trial_seed, mix_seed
from .validation import validate_trace

COMMANDS = ("trial", "sweep", "verify", "hybrid", "race", "lemmas", "combined")
FIGURE_NS = tuple(2 ** k for k in range(1, 11))
DESK_TRIALS = 1000
FULL_TRIALS = 10_000

EXIT_OK, EXIT_USAGE, EXIT_VERIFY = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class ExperimentSpec:
    command: str
    n: tuple = (2,)
    dist: tuple = ()  # distribution tokens, e.g. "exp:1"
    trials: Optional[int] = None  # None: desk or full scale default
    seed: int = 0
    inputs: str = "half"
    M: float = 0.0
    failure_rate: float = 0.0
    quantum: int = 8
    rmax: Optional[int] = None
    c: int = 2
    op_cap: Optional[int] = None
    out: Optional[str] = None
    jobs: int = 1
    keep_traces: bool = False
    paper_scale: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigurationError(f"unknown command {self.command!r}")
        if any(k < 1 for k in self.n):
            raise ConfigurationError("every n must be >= 1")
        for token in self.dist:
            parse_distribution(token)
        if self.trials is not None and self.trials < 1:
            raise ConfigurationError("trials must be >= 1")
        if self.jobs < 1:
            raise ConfigurationError("jobs must be >= 1")
        if self.op_cap is not None and self.op_cap < 1:
            raise ConfigurationError("op cap must be >= 1")

    @property
    def trial_count(self) -> int:
        if self.trials is not None:
            return self.trials
        return FULL_TRIALS if self.paper_scale else DESK_TRIALS

    def distributions(self) -> list:
        return [(token, parse_distribution(token)) for token in self.dist]

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentSpec":
        data = json.loads(text)
        data["n"] = tuple(data["n"])
        data["dist"] = tuple(data["dist"])
        return cls(**data)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> tuple:
    try:
        values = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("empty list")
    return values


def _dist_token(text: str) -> str:
    try:
        parse_distribution(text)
    except DistributionError as exc:
        raise argparse.ArgumentTypeError(str(exc))
    return text


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lean-consensus", description="Lean-consensus simulator and checkers.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--n", type=_int_list, default=None, help="process count(s), comma separated")
        p.add_argument("--dist", type=_dist_token, action="append", default=None,
                       help="name:params, repeatable (normal, twopoint, shiftexp, geom, uniform, exp, patho)")
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--inputs", default="half", help="half, zeros, ones or a bit string")
        p.add_argument("--M", type=float, default=0.0)
        p.add_argument("--failure-rate", type=float, default=0.0)
        p.add_argument("--quantum", type=int, default=8)
        p.add_argument("--rmax", type=int, default=None)
        p.add_argument("--c", type=int, default=2)
        p.add_argument("--op-cap", type=int, default=None)
        p.add_argument("--out", default=None)
        p.add_argument("--jobs", type=int, default=1)
        p.add_argument("--keep-traces", action="store_true")
        p.add_argument("--paper-scale", action="store_true")
    return parser


def parse_cli(argv: Sequence[str]) -> ExperimentSpec:
    args = build_parser().parse_args(list(argv))
    default_n = (64,) if args.command == "lemmas" else (2,)
    try:
        return ExperimentSpec(
            command=args.command, n=args.n or default_n, dist=tuple(args.dist or ()),
            trials=args.trials, seed=args.seed, inputs=args.inputs, M=args.M,
            failure_rate=args.failure_rate, quantum=args.quantum, rmax=args.rmax, c=args.c,
            op_cap=args.op_cap, out=args.out, jobs=args.jobs, keep_traces=args.keep_traces,
            paper_scale=args.paper_scale)
    except (ConfigurationError, DistributionError) as exc:
        raise UsageError(str(exc))


# ---------------------------------------------------------------------------
# figure experiment


def figure_plot_script(csv_name: str) -> str:
    lines = [
        f"# gnuplot script for {csv_name}",
        'set datafile separator ","',
        "set logscale x 2",
        'set xlabel "n (processes)"',
        'set ylabel "mean first decision round"',
        "set key left top",
        "plot \\",
    ]
    labels = list(FIGURE_DISTRIBUTIONS)
    for k, label in enumerate(labels):
        tail = ", \\" if k < len(labels) - 1 else ""
        lines.append(f'  "{csv_name}" using 2:(strcol(1) eq "{label}" ? $4 : NaN) '
                     f'with linespoints title "{label}"{tail}')
    return "\n".join(lines) + "\n"


def run_figure_experiment(master_seed: int, trials: int = DESK_TRIALS, out: Optional[str] = None, *,
                          jobs: int = 1, ns: Sequence[int] = FIGURE_NS) -> str:
    """Mean first-decision round for every figure distribution and n.

    Half-zero, half-one inputs, no failures, no adversary delay.  With
    ``out`` the CSV goes to that path and a gnuplot script next to it
    (``<out>.gp``).  Returns the CSV text.
    """
    if trials < 100:
        raise ConfigurationError("the figure experiment needs at least 100 trials")
    rows = run_sweep(ns, list(FIGURE_DISTRIBUTIONS.items()), trials, "half", master_seed, jobs=jobs)
    buf = io.StringIO()
    write_sweep_csv(rows, buf)
    text = buf.getvalue()
    if out is not None:
        with open(out, "w", newline="") as fh:
            fh.write(text)
        with open(out + ".gp", "w") as fh:
            fh.write(figure_plot_script(os.path.basename(out)))
    return text


# ---------------------------------------------------------------------------
# commands


def _emit(spec: ExperimentSpec, text: str, stdout) -> None:
    if spec.out is None:
        stdout.write(text)
    else:
        with open(spec.out, "w", newline="") as fh:
            fh.write(text)


def _single_dist(spec: ExperimentSpec):
    if len(spec.dist) > 1:
        raise UsageError(f"{spec.command} takes a single --dist")
    return spec.distributions()[0][1] if spec.dist else parse_distribution("exp:1")


def _model(spec: ExperimentSpec, dist) -> NoiseModel:
    return NoiseModel.simple(dist, M=spec.M, failure_rate=spec.failure_rate)


def cmd_trial(spec, stdout) -> int:
    n = spec.n[0]
    model = _model(spec, _single_dist(spec))
    inputs = make_inputs(n, spec.inputs)
    kwargs = {"op_cap": spec.op_cap} if spec.op_cap else {}
    res, trace = run_noisy_trial(inputs, model, spec.seed, keep_trace=spec.keep_traces, **kwargs)
    text = (f"outcome={res.outcome} decision={res.decision} first_round={res.first_decision_round} "
            f"last_round={res.last_decision_round} total_ops={res.total_ops} halted={res.halted}\n")
    status = EXIT_OK
    if trace is not None:
        report = validate_trace(trace)
        text += trace.to_text() + f"# {report.summary()}\n"
        status = EXIT_OK if report.ok else EXIT_VERIFY
    _emit(spec, text, stdout)
    return status


def cmd_sweep(spec, stdout) -> int:
    if not spec.dist:
        ns = spec.n if len(spec.n) > 1 else FIGURE_NS
        text = run_figure_experiment(spec.seed, spec.trial_count, spec.out, jobs=spec.jobs, ns=ns)
        if spec.out is None:
            stdout.write(text)
        return EXIT_OK
    r_max_for = (lambda n: spec.rmax) if spec.rmax is not None else None
    kwargs = {"op_cap": spec.op_cap} if spec.op_cap else {}
    rows = run_sweep(spec.n, spec.distributions(), spec.trial_count, spec.inputs, spec.seed,
                     M=spec.M, failure_rate=spec.failure_rate, r_max_for=r_max_for, jobs=spec.jobs, **kwargs)
    buf = io.StringIO()
    write_sweep_csv(rows, buf, with_backup=spec.rmax is not None)
    _emit(spec, buf.getvalue(), stdout)
    return EXIT_OK


def cmd_verify(spec, stdout) -> int:
    """Exhaustive exploration, then validation of traced noisy trials."""
    lines = []
    failed = False
    cap = spec.op_cap or 24
    for n in spec.n:
        if n > 4:
            raise UsageError("verify explores at most 4 processes")
        for inputs in itertools.product((0, 1), repeat=n):
            rep = explore_all_schedules(inputs, min(cap, 24))
            failed |= not rep.ok
            lines.append(f"explore inputs={''.join(map(str, inputs))} cap={rep.per_process_op_cap} "
                         f"states={rep.states_visited} violations={len(rep.violations)} "
                         f"decisions={sorted(rep.decision_values)} open_leaves={rep.open_leaves}")
            for v in rep.violations:
                lines.append(f"  {v.code} {v.message} schedule={','.join(map(str, v.schedule))}")
    trials = spec.trials if spec.trials is not None else 100
    for token, dist in spec.distributions() or [("exp:1", parse_distribution("exp:1"))]:
        model = _model(spec, dist)
        master = mix_seed(spec.seed, "verify", token)
        bad = 0
        for t in range(trials):
            n = spec.n[t % len(spec.n)]
            _, trace = run_noisy_trial(make_inputs(n, spec.inputs), model, derive_trial_seed(master, t),
                                       keep_trace=True)
            bad += not validate_trace(trace).ok
        failed |= bad > 0
        lines.append(f"traces dist={token} trials={trials} invalid={bad}")
    lines.append("FAIL" if failed else "PASS")
    _emit(spec, "\n".join(lines) + "\n", stdout)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_hybrid(spec, stdout) -> int:
    out = []
    for n in spec.n:
        report = search_worst_case(n, HybridConfig(quantum=spec.quantum), depth_cap=spec.op_cap)
        out.append(report.to_text())
        out.append(f"# max_ops_to_decide={report.max_ops_to_decide} "
                   f"both_round1_set={int(report.both_round1_set)} safe={int(report.safe)} "
                   f"chain_holds={int(report.chain_holds)} open_branches={report.open_branches}\n")
    _emit(spec, "".join(out), stdout)
    return EXIT_OK


def cmd_race(spec, stdout) -> int:
    dists = spec.distributions() or [("exp:1", parse_distribution("exp:1"))]
    rows = run_race_sweep(spec.n, dists, spec.c, spec.trial_count, spec.seed,
                          failure_rate=spec.failure_rate, jobs=spec.jobs)
    buf = io.StringIO()
    write_race_csv(rows, buf)
    _emit(spec, buf.getvalue(), stdout)
    return EXIT_OK


LOWER_BOUND_TOLERANCE = 0.03
UNIQUE_LEADER_FLOOR = 0.19


def cmd_lemmas(spec, stdout) -> int:
    """Exact one-vs-zero check on random vectors, unique-leader and lower-bound experiments."""
    trials = spec.trial_count
    rnd = random.Random(spec.seed)
    bound_failures = 0
    for _ in range(trials):
        q = [1.0 - rnd.random() for _ in range(rnd.randint(1, 20))]  # entries in (0, 1]
        bound_failures += not exactly_one_probability(q).holds
    lines = [f"exactly_one vectors={trials} failures={bound_failures}"]
    failed = bound_failures > 0
    t, p = unique_leader_probability(Uniform(0.0, 2.0), 16, 10 * trials, seed=spec.seed)
    failed |= p < UNIQUE_LEADER_FLOOR
    lines.append(f"unique_leader dist=uniform:0,2 n=16 best_t={t:.6f} p_unique={p:.6f}")
    for n in spec.n:
        if n < 2 or n % 2:
            raise UsageError("lower bound needs even n >= 2")
        frac = lower_bound_fraction(n, 10 * trials, seed=spec.seed)
        closed = lower_bound_closed_form(n)
        failed |= abs(frac - closed) > LOWER_BOUND_TOLERANCE
        lines.append(f"lower_bound n={n} fraction={frac:.6f} closed_form={closed:.6f}")
    lines.append("FAIL" if failed else "PASS")
    _emit(spec, "\n".join(lines) + "\n", stdout)
    return EXIT_VERIFY if failed else EXIT_OK


def cmd_combined(spec, stdout) -> int:
    dist = _single_dist(spec)
    out = ["n,r_max,trials,backup_fraction,agreement_failures,max_index_touched"]
    failed = False
    for n in spec.n:
        r_max = spec.rmax if spec.rmax is not None else compute_rmax(max(n, 2), 10, 4)
        cfg = CombinedConfig(r_max=r_max, noise=_model(spec, dist))
        trials = spec.trial_count
        used = disagree = touched = 0
        inputs = make_inputs(n, spec.inputs)
        master = mix_seed(spec.seed, "combined", n)
        for t in range(trials):
            res = run_combined(inputs, cfg, derive_trial_seed(master, t))
            used += res.backup_calls > 0
            disagree += not res.result.agreement
            touched = max(touched, res.max_index_touched)
        failed |= disagree > 0 or touched > r_max
        out.append(f"{n},{r_max},{trials},{used / trials:.6f},{disagree},{touched}")
    _emit(spec, "\n".join(out) + "\n", stdout)
    return EXIT_VERIFY if failed else EXIT_OK


HANDLERS = {"trial": cmd_trial, "sweep": cmd_sweep, "verify": cmd_verify, "hybrid": cmd_hybrid,
            "race": cmd_race, "lemmas": cmd_lemmas, "combined": cmd_combined}


def run_spec(spec: ExperimentSpec, stdout=None) -> int:
    return HANDLERS[spec.command](spec, stdout or sys.stdout)


def main(argv: Optional[Sequence[str]] = None, stdout=None, stderr=None) -> int:
    stderr = stderr or sys.stderr
    try:
        spec = parse_cli(sys.argv[1:] if argv is None else argv)
        return run_spec(spec, stdout)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (ConfigurationError, DistributionError) as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
