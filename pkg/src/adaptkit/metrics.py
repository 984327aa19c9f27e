"""Regret series, reference bound curves, the instantaneous-bound checker,
and the SR/NPS/CS scorecard arithmetic.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence

from .errors import InputError
from .refine import RefineTrace

_F_OPT_SLACK = 1e-12


@dataclass(frozen=True)
class RegretReport:
    """Cumulative and simple regret series against a known optimum."""

    cumulative: tuple[float, ...]
    simple: tuple[float, ...]
    f_opt: float
    actual_iterations: int


@dataclass(frozen=True)
class Scorecard:
    sr: float
    nps: float
    cs: float
    iterations: int
    raw_value: float
    scale_max: float


def _check_f_opt(values: Sequence[float], f_opt: float) -> None:
    if not values:
        raise InputError("empty value series")
    worst = max(values)
    if f_opt < worst - _F_OPT_SLACK:
        raise InputError(f"f_opt {f_opt} lies below an observed value {worst}")


def cumulative_regret(values: Sequence[float], f_opt: float) -> list[float]:
    """Running sum of per-step gaps to the optimum; non-decreasing."""
    _check_f_opt(values, f_opt)
    out, total = [], 0.0
    for v in values:
        total += f_opt - v
        out.append(total)
    return out


def simple_regret(values: Sequence[float], f_opt: float) -> list[float]:
    """Gap between the optimum and the running best; non-increasing."""
    _check_f_opt(values, f_opt)
    out, best = [], -math.inf
    for v in values:
        best = max(best, v)
        out.append(f_opt - best)
    return out


def regret_report(values: Sequence[float], f_opt: float) -> RegretReport:
    return RegretReport(
        cumulative=tuple(cumulative_regret(values, f_opt)),
        simple=tuple(simple_regret(values, f_opt)),
        f_opt=f_opt,
        actual_iterations=len(values),
    )


def regret_bound_curve(t_a: int, f_a: float = 1.0, c: float = 1.0) -> float:
    """Reference envelope C * sqrt(T_a ln^2 T_a) for plotting against the
    measured cumulative regret; T_a is the actual-evaluation count and the
    total iteration count is F_a * T_a."""
    if f_a < 1.0:
        raise InputError(f"augmentation factor must be >= 1, got {f_a}")
    if c < 0.0:
        raise InputError(f"constant must be >= 0, got {c}")
    if f_a * t_a < 3:
        raise InputError(f"F_a * T_a must be >= 3, got {f_a * t_a}")
    return c * math.sqrt(t_a * math.log(t_a) ** 2)


def min_iterations(epsilon: float, f_a: float = 1.0) -> float:
    """Actual-evaluation floor ln^2(1/eps) / (F_a eps^2) for driving the
    simple regret below eps (unit constant)."""
    if not (0.0 < epsilon < 1.0):
        raise InputError(f"epsilon must lie in (0, 1), got {epsilon}")
    if f_a < 1.0:
        raise InputError(f"augmentation factor must be >= 1, got {f_a}")
    return math.log(1.0 / epsilon) ** 2 / (f_a * epsilon**2)


def check_instantaneous_bound(trace: RefineTrace, f_opt: float) -> float:
    """Fraction of selection rounds whose gap to the optimum exceeds twice
    the recorded confidence radius: f_opt - value > 2 sqrt(beta) sigma + 1e-9.

    Warm-up draws carry no posterior and are excluded; a trace without any
    selection records (or with incomplete ones) is an error.
    """
    rounds = [r for r in trace.records if r.phase == "ucb"]
    if not rounds:
        raise InputError("trace has no selection records to check")
    violations = 0
    for r in rounds:
        if r.mu is None or r.sigma is None or r.beta is None:
            raise InputError(f"record {r.index} is missing posterior state")
        if f_opt - r.value > 2.0 * math.sqrt(r.beta) * r.sigma + 1e-9:
            violations += 1
    return violations / len(rounds)


# ---------------------------------------------------------------------------
# Scorecard arithmetic
# ---------------------------------------------------------------------------

def sr(iterations: int) -> float:
    """Success rate 1 / (1 + corrective iterations)."""
    if iterations < 0:
        raise InputError(f"iterations must be >= 0, got {iterations}")
    return 1.0 / (1.0 + iterations)


def nps(raw: float, scale_max: float) -> float:
    """Normalized performance score raw / scale_max with implicit floor 0."""
    if scale_max <= 0:
        raise InputError(f"scale_max must be > 0, got {scale_max}")
    if not (0.0 <= raw <= scale_max):
        raise InputError(f"raw value {raw} outside [0, {scale_max}]")
    return raw / scale_max


def cs(sr_value: float, nps_value: float) -> float:
    """Comprehensive score: the midpoint of SR and NPS."""
    for name, v in (("sr", sr_value), ("nps", nps_value)):
        if not (0.0 <= v <= 1.0):
            raise InputError(f"{name} must lie in [0, 1], got {v}")
    return 0.5 * (sr_value + nps_value)


def make_scorecard(iterations: int, raw: float, scale_max: float) -> Scorecard:
    s = sr(iterations)
    n = nps(raw, scale_max)
    return Scorecard(sr=s, nps=n, cs=cs(s, n), iterations=iterations, raw_value=raw, scale_max=scale_max)


# ---------------------------------------------------------------------------
# CSV export (RFC 4180 via the csv module)
# ---------------------------------------------------------------------------

REGRET_COLUMNS = ("t", "value", "incumbent", "simple_regret", "cumulative_regret")


def regret_csv(values: Sequence[float], f_opt: float) -> str:
    cum = cumulative_regret(values, f_opt)
    simple = simple_regret(values, f_opt)
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(REGRET_COLUMNS)
    best = -math.inf
    for t, v in enumerate(values, start=1):
        best = max(best, v)
        writer.writerow([t, repr(v), repr(best), repr(simple[t - 1]), repr(cum[t - 1])])
    return buf.getvalue()


SCORECARD_COLUMNS = ("iterations", "raw_value", "scale_max", "sr", "nps", "cs")


def scorecard_csv(cards: Sequence[Scorecard]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(SCORECARD_COLUMNS)
    for card in cards:
        writer.writerow(
            [card.iterations, repr(card.raw_value), repr(card.scale_max),
             repr(card.sr), repr(card.nps), repr(card.cs)]
        )
    return buf.getvalue()
