"""Operation delay distributions.

All samples are finite and non-negative, and no distribution may be
concentrated on a single point; degenerate parameters are rejected when
the distribution is built.  Times are in abstract simulation units.

Distributions are written on the command line as ``name:p1,p2,...``::

    normal:1,0.2,0,2     truncated normal (mean, sd, lo, hi)
    twopoint:2/3,4/3,0.5 v1 or v2, v1 with the given probability
    shiftexp:0.5,0.5     shift + exponential(mean)
    geom:0.5             geometric on {1, 2, ...}
    uniform:0,2          uniform on (lo, hi)
    exp:1                exponential(mean)
    patho:30             2**(k*k) with probability 2**-k, k capped at K
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .rng import as_generator


class DistributionError(ValueError):
    """Invalid distribution parameters or specification string."""


def _fmt(x: float) -> str:
    if float(x).is_integer():
        return str(int(x))
    return repr(float(x))


class DelayDistribution:
    """Base class; subclasses implement ``sample`` and ``params``."""

    kind = ""

    def sample(self, gen: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> tuple:
        raise NotImplementedError

    def token(self) -> str:
        return f"{self.kind}:" + ",".join(_fmt(p) for p in self.params())

    def mean(self) -> float:
        raise NotImplementedError


@dataclass(frozen=True)
class TruncatedNormal(DelayDistribution):
    mean_: float
    sd: float
    lo: float
    hi: float

    kind = "normal"

    def __post_init__(self):
        if not self.sd > 0:
            raise DistributionError(f"normal: sd must be positive, got {self.sd}")
        if not 0 <= self.lo < self.hi or not math.isfinite(self.hi):
            raise DistributionError(f"normal: need 0 <= lo < hi < inf, got ({self.lo}, {self.hi})")
        if self.acceptance() < 1e-6:
            raise DistributionError("normal: almost no mass inside (lo, hi)")

    def acceptance(self) -> float:
        def cdf(x):
            return 0.5 * (1.0 + math.erf((x - self.mean_) / (self.sd * math.sqrt(2.0))))

        return cdf(self.hi) - cdf(self.lo)

    def params(self):
        return (self.mean_, self.sd, self.lo, self.hi)

    def sample(self, gen, size):
        # rejection against the open interval (lo, hi)
        out = np.empty(size)
        filled = 0
        while filled < size:
            need = size - filled
            draw = gen.normal(self.mean_, self.sd, int(need / self.acceptance()) + 8)
            draw = draw[(draw > self.lo) & (draw < self.hi)][:need]
            out[filled : filled + draw.size] = draw
            filled += draw.size
        return out

    def mean(self):
        a = (self.lo - self.mean_) / self.sd
        b = (self.hi - self.mean_) / self.sd
        phi = lambda z: math.exp(-z * z / 2) / math.sqrt(2 * math.pi)  # noqa: E731
        return self.mean_ + self.sd * (phi(a) - phi(b)) / self.acceptance()


@dataclass(frozen=True)
class TwoPoint(DelayDistribution):
    v1: float
    v2: float
    p1: float = 0.5

    kind = "twopoint"

    def __post_init__(self):
        if self.v1 < 0 or self.v2 < 0 or not (math.isfinite(self.v1) and math.isfinite(self.v2)):
            raise DistributionError("twopoint: values must be finite and non-negative")
        if self.v1 == self.v2:
            raise DistributionError("twopoint: v1 == v2 is concentrated on a point")
        if not 0 < self.p1 < 1:
            raise DistributionError(f"twopoint: probability must be in (0, 1), got {self.p1}")

    def params(self):
        return (self.v1, self.v2, self.p1)

    def sample(self, gen, size):
        return np.where(gen.random(size) < self.p1, self.v1, self.v2)

    def mean(self):
        return self.p1 * self.v1 + (1 - self.p1) * self.v2


@dataclass(frozen=True)
class ShiftedExponential(DelayDistribution):
    shift: float
    mean_: float

    kind = "shiftexp"

    def __post_init__(self):
        if not (self.shift >= 0 and math.isfinite(self.shift)):
            raise DistributionError("shiftexp: shift must be finite and non-negative")
        if not (self.mean_ > 0 and math.isfinite(self.mean_)):
            raise DistributionError("shiftexp: mean must be positive")

    def params(self):
        return (self.shift, self.mean_)

    def sample(self, gen, size):
        return self.shift + gen.exponential(self.mean_, size)

    def mean(self):
        return self.shift + self.mean_


@dataclass(frozen=True)
class Geometric(DelayDistribution):
    """Number of Bernoulli(p) trials up to the first success; support {1, 2, ...}."""

    p: float

    kind = "geom"

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise DistributionError(f"geom: p must be in (0, 1), got {self.p}")

    def params(self):
        return (self.p,)

    def sample(self, gen, size):
        return gen.geometric(self.p, size).astype(float)

    def mean(self):
        return 1.0 / self.p


@dataclass(frozen=True)
class Uniform(DelayDistribution):
    lo: float
    hi: float

    kind = "uniform"

    def __post_init__(self):
        if not 0 <= self.lo < self.hi or not math.isfinite(self.hi):
            raise DistributionError(f"uniform: need 0 <= lo < hi < inf, got ({self.lo}, {self.hi})")

    def params(self):
        return (self.lo, self.hi)

    def sample(self, gen, size):
        return gen.uniform(self.lo, self.hi, size)

    def mean(self):
        return (self.lo + self.hi) / 2


@dataclass(frozen=True)
class Exponential(DelayDistribution):
    mean_: float = 1.0

    kind = "exp"

    def __post_init__(self):
        if not (self.mean_ > 0 and math.isfinite(self.mean_)):
            raise DistributionError("exp: mean must be positive")

    def params(self):
        return (self.mean_,)

    def sample(self, gen, size):
        return gen.exponential(self.mean_, size)

    def mean(self):
        return self.mean_


# 2**(31*31) is the largest value of this family that fits in a double.
MAX_PATHOLOGICAL_CAP = 31


@dataclass(frozen=True)
class Pathological(DelayDistribution):
    """Heavy-tailed family with infinite mean.

    Takes value ``2**(k*k)`` with probability ``2**-k``; the mass beyond
    ``k = cap`` is folded onto ``2**(cap*cap)`` so samples stay finite.
    """

    cap: int = 30

    kind = "patho"

    def __post_init__(self):
        if int(self.cap) != self.cap or not 2 <= self.cap <= MAX_PATHOLOGICAL_CAP:
            raise DistributionError(f"patho: cap must be an integer in [2, {MAX_PATHOLOGICAL_CAP}]")

    def params(self):
        return (self.cap,)

    def sample(self, gen, size):
        k = np.minimum(gen.geometric(0.5, size), int(self.cap)).astype(float)
        return np.exp2(k * k)

    def mean(self):
        cap = int(self.cap)
        total = sum(2.0 ** (k * k - k) for k in range(1, cap))
        return total + 2.0 ** (cap * cap - (cap - 1))


_KINDS = {
    "normal": (TruncatedNormal, 4),
    "twopoint": (TwoPoint, 3),
    "shiftexp": (ShiftedExponential, 2),
    "geom": (Geometric, 1),
    "uniform": (Uniform, 2),
    "exp": (Exponential, 1),
    "patho": (Pathological, 1),
}


def _number(text: str) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        raise DistributionError(f"malformed number {text!r}") from None


def parse_distribution(token: str) -> DelayDistribution:
    """Parse ``name:p1,p2,...``; raises DistributionError naming the bad token."""
    name, _, rest = token.partition(":")
    name = name.strip().lower()
    if name not in _KINDS:
        raise DistributionError(f"unknown distribution {name!r} in {token!r}")
    cls, arity = _KINDS[name]
    values = [_number(v) for v in rest.split(",")] if rest.strip() else []
    if len(values) != arity:
        raise DistributionError(f"{name} takes {arity} parameter(s), got {len(values)} in {token!r}")
    if cls is Pathological:
        if not values[0].is_integer():
            raise DistributionError(f"patho: cap must be an integer in {token!r}")
        values = [int(values[0])]
    return cls(*values)


# The six interarrival distributions of the published simulation study.
FIGURE_DISTRIBUTIONS: dict[str, DelayDistribution] = {
    "normal:1,0.2,0,2": TruncatedNormal(1.0, 0.2, 0.0, 2.0),
    "twopoint:2/3,4/3,0.5": TwoPoint(2 / 3, 4 / 3, 0.5),
    "shiftexp:0.5,0.5": ShiftedExponential(0.5, 0.5),
    "geom:0.5": Geometric(0.5),
    "uniform:0,2": Uniform(0.0, 2.0),
    "exp:1": Exponential(1.0),
}


def sample_delay(dist: DelayDistribution, rng) -> float:
    """Draw a single delay."""
    return float(dist.sample(as_generator(rng), 1)[0])
