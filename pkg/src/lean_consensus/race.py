"""Races between delayed renewal processes, and exact/Monte Carlo checks.

The per-round abstraction: process ``i`` finishes round ``r`` at

    S'_ir = delta_i0 + sum_{k<=r} (delta_ik + Y_ik + H_ik)

with ``Y`` the per-round noise (one draw, or three reads plus one write
when bridging from per-operation delays) and ``H`` zero or infinite.
Process ``i`` wins at round ``R`` with lead ``c`` when
``S'_{i,R+c} < S'_{i',R}`` for every rival ``i'``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import mpmath
import numpy as np

from ._parallel import chunk_ranges, parallel_map
from .distributions import DelayDistribution, TwoPoint
from .noisy import DEFAULT_DITHER, DeltaPolicy
from .protocol import ConfigurationError
from .rng import as_generator, derive_trial_seed, mix_seed

WON, ALL_DEAD, CAP_HIT = "won", "all_dead", "cap_hit"
DEFAULT_ROUND_CAP = 10_000


@dataclass(frozen=True)
class RaceConfig:
    n: int
    c: int
    dist: DelayDistribution
    per_op: bool = False  # round noise = 3 reads + 1 write drawn from dist
    M: float = 0.0
    delta_policy: DeltaPolicy = field(default_factory=DeltaPolicy)
    failure_rate: float = 0.0  # per round
    round_cap: int = DEFAULT_ROUND_CAP
    dither: Optional[tuple] = DEFAULT_DITHER

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("n must be >= 1")
        if self.c < 1:
            raise ConfigurationError("lead c must be >= 1")
        if self.round_cap < 1:
            raise ConfigurationError("round cap must be >= 1")
        if not 0.0 <= self.failure_rate <= 1.0:
            raise ConfigurationError("failure rate must be in [0, 1]")
        if self.delta_policy.min_value() < 0 or self.delta_policy.max_value() > self.M:
            raise ConfigurationError(f"adversary delays must lie in [0, M={self.M}]")
        if not self.delta_policy.covers(self.n):
            raise ConfigurationError("delta policy does not cover every process")
        if isinstance(self.dist, TwoPoint) and self.dist.v1 == self.dist.v2:
            raise ConfigurationError("distribution is degenerate")


@dataclass
class RaceOutcome:
    status: str
    R: int  # round of the win; round cap for CAP_HIT; first all-dead round for ALL_DEAD
    winner: Optional[int]
    times: np.ndarray  # column r-1 holds S'_ir
    c: int

    @property
    def won(self) -> bool:
        return self.status == WON


def _round_increments(config: RaceConfig, gen: np.random.Generator, lo: int, size: int) -> np.ndarray:
    n = config.n
    if config.per_op:
        y = config.dist.sample(gen, n * size * 4).reshape(n, size, 4).sum(axis=2)
    else:
        y = config.dist.sample(gen, n * size).reshape(n, size)
    if config.failure_rate > 0:
        y[gen.random((n, size)) < config.failure_rate] = math.inf
    policy = config.delta_policy
    if policy.kind != "zero":
        y += np.array([[policy.delta(i, r) for r in range(lo + 1, lo + size + 1)] for i in range(n)])
    return y


def _first_event(s: np.ndarray, c: int, offset: int):
    """First column R (1-based, counting from ``offset``) that is all-dead or has a winner."""
    head, lead = s[:, : s.shape[1] - c], s[:, c:]
    dead = np.isinf(head).all(axis=0)
    if s.shape[0] == 1:
        win = np.isfinite(lead[0])
        best = np.zeros(lead.shape[1], dtype=int)
    else:
        best = lead.argmin(axis=0)
        cols = np.arange(head.shape[1])
        lowest = head.argmin(axis=0)
        two = np.partition(head, 1, axis=0)
        rival = np.where(lowest == best, two[1], two[0])
        win = lead[best, cols] < rival
    hits = np.flatnonzero(dead | win)
    if hits.size == 0:
        return None
    k = int(hits[0])
    return offset + k + 1, (ALL_DEAD if dead[k] else WON), int(best[k])


def simulate_race(config: RaceConfig, seed) -> RaceOutcome:
    """Scan rounds in order and stop at the first win (or when all are dead)."""
    gen = as_generator(seed)
    n, c, cap = config.n, config.c, config.round_cap
    if config.dither is not None:
        start = gen.uniform(config.dither[0], config.dither[1], n)
    else:
        start = np.zeros(n)
    times = np.empty((n, 0))
    size = 32
    checked = 0  # rounds 1..checked are known not to be events
    while True:
        block = _round_increments(config, gen, times.shape[1], size)
        base = times[:, -1:] if times.shape[1] else start[:, None]
        times = np.hstack([times, base + np.cumsum(block, axis=1)])
        size *= 2
        usable = min(times.shape[1] - c, cap)
        if usable > checked:
            event = _first_event(times[:, checked: usable + c], c, checked)
            if event is not None:
                R, status, who = event
                return RaceOutcome(status, R, who if status == WON else None, times[:, : R + c], c)
            checked = usable
        if checked >= cap:
            return RaceOutcome(CAP_HIT, cap, None, times[:, : cap + c], c)


def verify_race_outcome(outcome: RaceOutcome) -> bool:
    """Recompute the outcome from the stored completion times alone."""
    s, c = outcome.times, outcome.c
    n = s.shape[0]

    def event_at(r):
        col = s[:, r - 1]
        if all(math.isinf(v) for v in col):
            return ALL_DEAD, None
        for i in range(n):
            rival = min((col[k] for k in range(n) if k != i), default=math.inf)
            if s[i, r + c - 1] < rival:
                return WON, i
        return None

    for r in range(1, outcome.R):
        if event_at(r) is not None:
            return False
    found = event_at(outcome.R)
    if outcome.status == CAP_HIT:
        return found is None
    return found == (outcome.status, outcome.winner)


@dataclass(frozen=True)
class RaceEstimate:
    trials: int
    mean_R: float
    median_R: float
    cap_hits: int
    all_dead: int
    rounds: tuple  # per-trial R, in trial order (all-dead trials excluded)

    def tail(self, k: float) -> float:
        """Empirical P[R > k]."""
        if not self.rounds:
            return math.nan
        return sum(r > k for r in self.rounds) / len(self.rounds)

    def tail_profile(self, ks: Sequence[int]) -> list:
        return [self.tail(k) for k in ks]


@dataclass(frozen=True)
class _RaceBatch:
    config: RaceConfig
    master_seed: int
    lo: int
    hi: int


def _race_batch(batch: _RaceBatch) -> list:
    out = []
    for t in range(batch.lo, batch.hi):
        o = simulate_race(batch.config, derive_trial_seed(batch.master_seed, t))
        out.append((o.status, o.R))
    return out


def estimate_expected_R(config: RaceConfig, trials: int, master_seed: int = 0, *, jobs: int = 1) -> RaceEstimate:
    """Monte Carlo mean and tail of R.  Cap hits count at the cap."""
    if trials < 100:
        raise ConfigurationError("estimate_expected_R needs at least 100 trials")
    results = []
    for part in parallel_map(_race_batch, [_RaceBatch(config, master_seed, lo, hi)
                                           for lo, hi in chunk_ranges(trials, 250)], jobs):
        results.extend(part)
    rounds = tuple(r for status, r in results if status != ALL_DEAD)
    cap_hits = sum(status == CAP_HIT for status, _ in results)
    mean = math.fsum(rounds) / len(rounds) if rounds else math.nan
    median = float(np.median(rounds)) if rounds else math.nan
    return RaceEstimate(trials, mean, median, cap_hits, len(results) - len(rounds), rounds)


RACE_HEADER = ("n", "c", "distribution", "trials", "mean_R", "median_R", "cap_hits", "p_tail_2x", "p_tail_4x")


def run_race_sweep(ns: Sequence[int], dists, c: int, trials: int, master_seed: int = 0, *,
                   per_op: bool = False, failure_rate: float = 0.0, jobs: int = 1) -> list:
    rows = []
    for item in dists:
        label, dist = item if isinstance(item, tuple) else (item.token(), item)
        for n in ns:
            cfg = RaceConfig(n=n, c=c, dist=dist, per_op=per_op, failure_rate=failure_rate)
            est = estimate_expected_R(cfg, trials, mix_seed(master_seed, "race", label, n, c), jobs=jobs)
            rows.append((n, c, label, trials, est.mean_R, est.median_R, est.cap_hits,
                         est.tail(2 * est.median_R), est.tail(4 * est.median_R)))
    return rows


def write_race_csv(rows, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(RACE_HEADER)
    for n, c, label, trials, mean, median, caps, t2, t4 in rows:
        writer.writerow([n, c, label, trials, f"{mean:.6f}", f"{median:.6f}", caps, f"{t2:.6f}", f"{t4:.6f}"])


# ---------------------------------------------------------------------------
# exactly one of n independent events


@dataclass(frozen=True)
class ExactlyOne:
    p_exact: Fraction
    x: Fraction  # probability that no event occurs
    bound: float  # -x ln x, rounded for display
    holds: bool  # p_exact >= -x ln x, decided without rounding error


def _neg_x_log_x_interval(x: Fraction, prec: int):
    ctx = mpmath.iv
    ctx.prec = prec
    xi = ctx.mpf(x.numerator) / ctx.mpf(x.denominator)
    return -xi * ctx.log(xi)


def exactly_one_probability(q: Sequence) -> ExactlyOne:
    """P[exactly one event] for events with non-occurrence probabilities ``q``.

    ``p_exact`` is a rational computed from the exact values of ``q``;
    the comparison with ``-x ln x`` uses interval arithmetic, refined
    until the sign of the difference is certain.
    """
    qs = [Fraction(v) for v in q]
    if not qs:
        raise ConfigurationError("q must be non-empty")
    if any(not 0 <= v <= 1 for v in qs):
        raise ConfigurationError("each q_i must lie in [0, 1]")
    x = math.prod(qs, start=Fraction(1))
    prefix = [Fraction(1)]
    for v in qs:
        prefix.append(prefix[-1] * v)
    suffix = [Fraction(1)]
    for v in reversed(qs):
        suffix.append(suffix[-1] * v)
    suffix.reverse()
    p = sum(((1 - v) * prefix[i] * suffix[i + 1] for i, v in enumerate(qs)), Fraction(0))
    if x == 0 or x == 1:
        return ExactlyOne(p, x, 0.0, p >= 0)
    prec = 64
    while True:
        bound = _neg_x_log_x_interval(x, prec)
        pi = mpmath.iv.mpf(p.numerator) / mpmath.iv.mpf(p.denominator)
        if pi.a >= bound.b:
            holds = True
            break
        if pi.b < bound.a:
            holds = False
            break
        if prec > 1 << 14:
            raise ArithmeticError("could not separate p_exact from the bound")  # they are equal
        prec *= 4
    xf = float(x)
    return ExactlyOne(p, x, -xf * math.log(xf), holds)


# ---------------------------------------------------------------------------
# unique leader and the lower-bound construction


def unique_leader_probability(dist: DelayDistribution, n: int, trials: int, t_grid_size: int = 256, seed=0):
    """Best threshold ``t`` and the estimate of P[exactly one of n draws <= t].

    Thresholds are empirical quantiles of the minimum of the n draws.
    Returns ``(best_t, p_unique)``.
    """
    if n < 1 or trials < 1 or t_grid_size < 1:
        raise ConfigurationError("n, trials and t_grid_size must be >= 1")
    gen = as_generator(seed)
    draws = dist.sample(gen, trials * n).reshape(trials, n)
    if not np.isfinite(draws).all():
        raise ConfigurationError("distribution produced non-finite values")
    if n == 1:
        s0, s1 = draws[:, 0], np.full(trials, math.inf)
    else:
        two = np.partition(draws, 1, axis=1)
        s0, s1 = two[:, 0], two[:, 1]
    grid = np.unique(np.quantile(s0, np.linspace(0.0, 1.0, t_grid_size), method="lower"))
    s0.sort()
    s1.sort()
    # s0 <= s1, so P[s0 <= t < s1] = P[s0 <= t] - P[s1 <= t]
    p = (np.searchsorted(s0, grid, side="right") - np.searchsorted(s1, grid, side="right")) / trials
    k = int(p.argmax())
    return float(grid[k]), float(p[k])


def lower_bound_k(n: int) -> int:
    return max(1, math.ceil(math.log2(n)))


def lower_bound_closed_form(n: int) -> float:
    """(1 - (1 - 2^-k)^(n/2))^2 with k = ceil(log2 n)."""
    k = lower_bound_k(n)
    miss = (1.0 - 2.0 ** -k) ** (n // 2)
    return (1.0 - miss) ** 2


def lower_bound_fraction(n: int, trials: int, seed=0) -> float:
    """Fraction of trials in which some 0-input and some 1-input process
    both run their first ceil(log2 n) operations at speed 1.

    Every operation delay is TwoPoint(1, 2), start offsets are dithered
    and inputs are half zeros, half ones.  Dithering shifts every
    operation of a process equally, so it cannot change which delays are
    1; it is drawn anyway to keep the construction literal.
    """
    if n < 2 or n % 2:
        raise ConfigurationError("lower_bound_fraction needs an even n >= 2")
    if trials < 1:
        raise ConfigurationError("trials must be >= 1")
    gen = as_generator(seed)
    dist = TwoPoint(1.0, 2.0, 0.5)
    k = lower_bound_k(n)
    half = n // 2
    hits = 0
    for lo, hi in chunk_ranges(trials, 4096):
        m = hi - lo
        gen.uniform(DEFAULT_DITHER[0], DEFAULT_DITHER[1], m * n)
        fast = (dist.sample(gen, m * n * k).reshape(m, n, k) == 1.0).all(axis=2)
        zeros_ok = fast[:, :half].any(axis=1)
        ones_ok = fast[:, half:].any(axis=1)
        hits += int((zeros_ok & ones_ok).sum())
    return hits / trials
