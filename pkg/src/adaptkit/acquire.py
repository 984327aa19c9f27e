"""Acquisition machinery: confidence schedule, UCB/EI scores, multi-start
box-constrained quasi-Newton ascent, and the decaying-epsilon sampler that
stands in for an in-context advisor when none is configured.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import minimize

from . import gp
from .errors import ConfigError, InputError, NumericalError
from .space import ParamAssignment, SearchSpace, sample_uniform

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class BetaConfig:
    """Inputs of the time-growing confidence schedule.

    ``a`` and ``b`` are concentration constants with no canonical value; both
    default to 1 and are configurable. ``r`` is the domain side length, 1 for
    the unit box.
    """

    delta: float
    d: int
    r: float = 1.0
    a: float = 1.0
    b: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.delta < 1.0):
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if self.d < 1:
            raise ConfigError(f"d must be a positive integer, got {self.d}")
        if self.r <= 0 or self.a <= 0 or self.b <= 0:
            raise ConfigError("r, a, b must be positive")


def beta_schedule(t: int, cfg: BetaConfig) -> float:
    """Confidence multiplier at round t:

        2 ln(2 t^2 pi^2 / (3 delta)) + 2 d ln(t^2 d b r sqrt(ln(4 d a / delta)))

    Strictly increasing in t; shrinking delta widens the band.
    """
    if t < 1:
        raise InputError(f"t must be >= 1, got {t}")
    inner = math.log(4.0 * cfg.d * cfg.a / cfg.delta)
    if inner <= 0.0:
        raise ConfigError(
            f"ln(4 d a / delta) = {inner:.4g} <= 0; increase d*a or decrease delta"
        )
    first = 2.0 * math.log(2.0 * t**2 * math.pi**2 / (3.0 * cfg.delta))
    second = 2.0 * cfg.d * math.log(t**2 * cfg.d * cfg.b * cfg.r * math.sqrt(inner))
    return first + second


def ucb_score(m: gp.GPModel, x: np.ndarray, beta: float) -> float:
    """Posterior mean plus sqrt(beta) posterior standard deviations."""
    if beta < 0:
        raise InputError(f"beta must be >= 0, got {beta}")
    mean, var = gp.posterior(m, x)
    return mean + math.sqrt(beta) * math.sqrt(var)


def ei_score(m: gp.GPModel, x: np.ndarray, f_plus: float) -> float:
    """Expected improvement over the incumbent f_plus; max(0, mean - f_plus)
    in the degenerate zero-variance case."""
    mean, var = gp.posterior(m, x)
    sigma = math.sqrt(var)
    if sigma == 0.0:
        return max(0.0, mean - f_plus)
    z = (mean - f_plus) / sigma
    cdf = 0.5 * (1.0 + math.erf(z / SQRT2))
    pdf = math.exp(-0.5 * z * z) / SQRT2PI
    return max(0.0, (mean - f_plus) * cdf + sigma * pdf)


def ucb_with_gradient(m: gp.GPModel, x: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    """UCB value and its analytic gradient, with the std floored at 1e-12 so
    the gradient stays finite at interpolated points."""
    mean, var, dmean, dvar = gp.posterior_with_gradient(m, x)
    sigma = math.sqrt(max(var, 0.0))
    value = mean + math.sqrt(beta) * sigma
    dsigma = dvar / (2.0 * max(sigma, 1e-12))
    return value, dmean + math.sqrt(beta) * dsigma


def optimize_ucb(
    m: gp.GPModel,
    beta: float,
    starts: Sequence[np.ndarray],
    max_iters: int = 100,
    grad_tol: float = 1e-6,
) -> list[np.ndarray]:
    """Quasi-Newton UCB ascent (memory 10) from every start, box-constrained
    to the closed unit box. Each returned point scores at least as high as
    its start, up to 1e-9.
    """
    if not len(starts):
        raise InputError("optimize_ucb needs at least one start")
    results: list[np.ndarray] = []
    for idx, start in enumerate(starts):
        x0 = np.clip(np.asarray(start, dtype=float), 0.0, 1.0)
        d = len(x0)

        def negated(x, _idx=idx):
            value, grad = ucb_with_gradient(m, x, beta)
            if not (math.isfinite(value) and np.all(np.isfinite(grad))):
                raise NumericalError(f"non-finite UCB or gradient at start {_idx}")
            return -value, -grad

        res = minimize(
            negated,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=[(0.0, 1.0)] * d,
            options={"maxcor": 10, "maxiter": max_iters, "gtol": grad_tol},
        )
        candidate = np.clip(res.x, 0.0, 1.0)
        if ucb_score(m, candidate, beta) >= ucb_score(m, x0, beta):
            results.append(candidate)
        else:
            results.append(x0)
    return results


class ScoredCandidate(NamedTuple):
    assignment: ParamAssignment
    ucb: float


@dataclass
class SamplerPolicy:
    """Epsilon-greedy selection with decay epsilon_t = min(1, c/t).

    An optional advisor (text-completion client) may pick among the
    candidates; replies outside the list fall back to the policy choice.
    """

    c: float = 1.0
    seed: int = 0
    advisor: object | None = None

    def __post_init__(self):
        if self.c <= 0:
            raise ConfigError(f"decay numerator c must be > 0, got {self.c}")

    def epsilon(self, t: int) -> float:
        return min(1.0, self.c / t)


def _advisor_choice(policy: SamplerPolicy, candidates: Sequence[ScoredCandidate]) -> int | None:
    payload = json.dumps(
        {
            "candidates": [
                {"index": i, "assignment": c.assignment.values, "ucb": c.ucb}
                for i, c in enumerate(candidates)
            ],
            "reply_format": {"choice": "<index>"},
        }
    )
    try:
        reply = policy.advisor.complete(payload)
        obj = json.loads(reply)
    except Exception:
        return None
    if isinstance(obj, dict) and isinstance(obj.get("choice"), int):
        idx = obj["choice"]
        if 0 <= idx < len(candidates):
            return idx
    return None


def select_next(
    candidates: Sequence[ScoredCandidate],
    s: SearchSpace,
    t: int,
    policy: SamplerPolicy,
    evaluated: set[ParamAssignment] | frozenset[ParamAssignment] = frozenset(),
) -> ParamAssignment:
    """Pick the next point to evaluate.

    Exploits the top-scored candidate with probability 1 - epsilon_t, else
    samples uniformly from the space. Already-evaluated picks fall back to
    the next-best unevaluated candidate, then to a fresh uniform sample.
    Deterministic given (t, seed, candidates, evaluated).
    """
    if not candidates:
        raise InputError("select_next needs at least one candidate")
    if t < 1:
        raise InputError(f"t must be >= 1, got {t}")
    rng = np.random.default_rng([policy.seed, t])
    explore = rng.random() < policy.epsilon(t)
    explore_seed = int(rng.integers(0, 2**31 - 1))
    fallback_seed = int(rng.integers(0, 2**31 - 1))

    order = sorted(range(len(candidates)), key=lambda i: (-candidates[i].ucb, i))
    if explore:
        chosen = sample_uniform(s, explore_seed)
    else:
        chosen = candidates[order[0]].assignment

    if policy.advisor is not None:
        idx = _advisor_choice(policy, candidates)
        if idx is not None:
            chosen = candidates[idx].assignment

    if chosen not in evaluated:
        return chosen
    for i in order:
        if candidates[i].assignment not in evaluated:
            return candidates[i].assignment
    return sample_uniform(s, fallback_seed)
