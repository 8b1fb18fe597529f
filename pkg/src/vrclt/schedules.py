"""Batch-size schedules ``N_k`` and their cumulative oracle cost."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from decimal import ROUND_CEILING, Decimal, localcontext
from fractions import Fraction
from functools import lru_cache

from .errors import InadmissibleParameter, ScheduleOverflow

INT_LIMIT = 2**63 - 1


class AlgorithmKind(str, enum.Enum):
    VR_SGD = "vr_sgd"
    VR_ACCELERATED = "vr_accelerated"
    VR_HEAVY_BALL = "vr_heavy_ball"
    BASELINE_SGD = "baseline_sgd"

    @classmethod
    def parse(cls, name: "str | AlgorithmKind") -> "AlgorithmKind":
        if isinstance(name, cls):
            return name
        key = str(name).strip().lower().replace("-", "_")
        aliases = {
            "vrsgd": cls.VR_SGD,
            "sgd": cls.VR_SGD,
            "vraccelerated": cls.VR_ACCELERATED,
            "accelerated": cls.VR_ACCELERATED,
            "acc": cls.VR_ACCELERATED,
            "vrheavyball": cls.VR_HEAVY_BALL,
            "heavy_ball": cls.VR_HEAVY_BALL,
            "hb": cls.VR_HEAVY_BALL,
            "baselinesgd": cls.BASELINE_SGD,
            "baseline": cls.BASELINE_SGD,
        }
        try:
            return cls(key)
        except ValueError:
            if key.replace("_", "") in aliases:
                return aliases[key.replace("_", "")]
            if key in aliases:
                return aliases[key]
            raise ValueError(f"unknown algorithm {name!r}") from None


VR_KINDS = (AlgorithmKind.VR_SGD, AlgorithmKind.VR_ACCELERATED, AlgorithmKind.VR_HEAVY_BALL)


@dataclass(frozen=True)
class Geometric:
    """``N_k = ceil(rho^-(k+1))``.

    ``rho`` may be a float or a :class:`~fractions.Fraction`; the ceiling is
    taken on the exact rational value of whatever was given.
    """

    rho: float | Fraction
    cap: int | None = None

    def __post_init__(self):
        if not 0 < self.rho < 1:
            raise InadmissibleParameter(f"geometric rho must lie in (0, 1), got {self.rho}")
        _check_cap(self.cap)

    @property
    def kind(self) -> str:
        return "geometric"


@dataclass(frozen=True)
class Polynomial:
    """``N_k = ceil((k+1)^v)``."""

    v: float
    cap: int | None = None

    def __post_init__(self):
        if not self.v > 0:
            raise InadmissibleParameter(f"polynomial exponent v must be positive, got {self.v}")
        _check_cap(self.cap)

    @property
    def kind(self) -> str:
        return "polynomial"


BatchSchedule = Geometric | Polynomial


def _check_cap(cap):
    if cap is not None and (int(cap) != cap or cap < 1):
        raise InadmissibleParameter(f"cap must be a positive integer, got {cap}")


@lru_cache(maxsize=1 << 16)
def _geometric_exact(rho: Fraction, k: int) -> int:
    inv = Fraction(1) / rho
    return math.ceil(inv ** (k + 1))


@lru_cache(maxsize=1 << 16)
def _polynomial_exact(v: float, k: int) -> int:
    if float(v).is_integer():
        return (k + 1) ** int(v)
    with localcontext() as ctx:
        ctx.prec = 60
        val = Decimal(k + 1) ** Decimal(repr(float(v)))
        return int(val.to_integral_value(rounding=ROUND_CEILING))


def uncapped_batch_size(s: BatchSchedule, k: int) -> int:
    if k < 0:
        raise ValueError("k must be non-negative")
    if isinstance(s, Geometric):
        return _geometric_exact(Fraction(s.rho), k)
    return _polynomial_exact(float(s.v), k)


def batch_size(s: BatchSchedule, k: int) -> int:
    """Exact ``N_k``, clipped at the schedule cap when one is set."""
    n = uncapped_batch_size(s, k)
    if s.cap is not None and n > s.cap:
        return int(s.cap)
    if n > INT_LIMIT:
        raise ScheduleOverflow(f"N_{k} = {n} exceeds the 64-bit integer range")
    return n


def cap_binds(s: BatchSchedule, k: int) -> bool:
    return s.cap is not None and uncapped_batch_size(s, k) > s.cap


def cumulative_oracle_calls(s: BatchSchedule, K: int) -> int:
    """``sum_{k<K} N_k``."""
    if K < 0:
        raise ValueError("K must be non-negative")
    total = sum(batch_size(s, k) for k in range(K))
    if total > INT_LIMIT:
        raise ScheduleOverflow(f"cumulative oracle calls {total} exceed the 64-bit integer range")
    return total


def steps_for_budget(s: BatchSchedule, n_max: int) -> int:
    """Smallest ``K`` whose cumulative oracle calls reach ``n_max``.

    The last batch is spent in full, so actual usage may overshoot ``n_max``.
    """
    if n_max < 1:
        raise ValueError("n_max must be positive")
    total, k = 0, 0
    while total < n_max:
        total += batch_size(s, k)
        k += 1
    return k


def _kappa(eta: float, lip: float) -> float:
    if not 0 < eta <= lip:
        raise InadmissibleParameter(f"need 0 < eta <= L, got eta={eta}, L={lip}")
    return lip / eta


def default_rho(kind: AlgorithmKind | str, eta: float, lip: float) -> float:
    """Geometric growth factor used with the default step sizes of each method."""
    kind = AlgorithmKind.parse(kind)
    kappa = _kappa(eta, lip)
    if kind is AlgorithmKind.VR_SGD:
        return (kappa / (kappa + 1.0)) ** 2
    if kind is AlgorithmKind.VR_ACCELERATED:
        return 1.0 - 1.0 / (2.0 * math.sqrt(kappa))
    if kind is AlgorithmKind.VR_HEAVY_BALL:
        return (1.0 - 1.0 / (math.sqrt(kappa) + 1.0)) ** 2
    raise InadmissibleParameter("the decreasing-step baseline has no batch schedule")


def describe(s: BatchSchedule) -> dict:
    out = {"kind": s.kind}
    if isinstance(s, Geometric):
        out["rho"] = float(s.rho)
    else:
        out["v"] = float(s.v)
    if s.cap is not None:
        out["cap"] = int(s.cap)
    return out
