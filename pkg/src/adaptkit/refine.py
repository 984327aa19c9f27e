"""The refinement driver: seeded warm-up, per-axis trend augmentation, GP
fit, multi-start UCB ascent, epsilon-guarded selection, repeat to budget.

Also houses coreset selection and a finite-grid pure-UCB runner used by the
regret experiments (the theory statements live on a finite discretization of
the relaxed box).
"""

from __future__ import annotations

import json
import math
import time
import zlib
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import acquire, augment, gp
from .errors import ConfigError, InputError, ObjectiveError
from .space import ParamAssignment, SearchSpace, discretize, embed, sample_uniform


def derive_seed(seed: int, label: str, *extra: int) -> int:
    """Stable named sub-stream seed: one master seed, independent components."""
    return int(
        np.random.SeedSequence([seed, zlib.crc32(label.encode("utf-8")), *extra]).generate_state(1)[0]
    )


# ---------------------------------------------------------------------------
# Coreset selection
# ---------------------------------------------------------------------------

def select_coreset(
    n_items: int,
    fraction: float,
    method: str = "random",
    features: Sequence | None = None,
    seed: int = 0,
) -> list[int]:
    """Pick ceil(fraction * n) distinct item indices, sorted ascending.

    ``random`` draws uniformly without replacement (seed-deterministic);
    ``kcenter`` starts at index 0 and greedily adds the item farthest from
    the selected set (lowest index on ties).
    """
    if n_items <= 0:
        raise InputError("select_coreset needs a non-empty item list")
    if not (0.0 < fraction <= 1.0):
        raise InputError(f"fraction must lie in (0, 1], got {fraction}")
    k = math.ceil(fraction * n_items)
    if method == "random":
        rng = np.random.default_rng(seed)
        picked = rng.choice(n_items, size=k, replace=False)
        return sorted(int(i) for i in picked)
    if method == "kcenter":
        if features is None:
            raise InputError("kcenter selection requires features")
        feats = np.asarray(features, dtype=float)
        if feats.ndim == 1:
            feats = feats[:, None]
        if len(feats) != n_items:
            raise InputError("features length must match n_items")
        selected = [0]
        dist = np.linalg.norm(feats - feats[0], axis=1)
        while len(selected) < k:
            nxt = int(np.argmax(dist))  # argmax returns the lowest index on ties
            selected.append(nxt)
            dist = np.minimum(dist, np.linalg.norm(feats - feats[nxt], axis=1))
        return sorted(selected)
    raise InputError(f"unknown coreset method {method!r}")


# ---------------------------------------------------------------------------
# Trace
# ---------------------------------------------------------------------------

@dataclass
class TraceRecord:
    """One actual evaluation: what was picked, what it scored, and the
    posterior state at selection time (absent for warm-up draws)."""

    index: int
    phase: str  # "init" | "ucb"
    assignment: ParamAssignment
    point: np.ndarray
    value: float
    incumbent: float
    mu: float | None = None
    sigma: float | None = None
    beta: float | None = None
    pseudo_count: int = 0
    wall_time: float = 0.0

    def to_obj(self) -> dict:
        return {
            "index": self.index,
            "phase": self.phase,
            "assignment": self.assignment.values,
            "point": [float(c) for c in self.point],
            "value": self.value,
            "incumbent": self.incumbent,
            "mu": self.mu,
            "sigma": self.sigma,
            "beta": self.beta,
            "pseudo_count": self.pseudo_count,
            "wall_time": self.wall_time,
        }

    @staticmethod
    def from_obj(obj: dict) -> "TraceRecord":
        return TraceRecord(
            index=obj["index"],
            phase=obj["phase"],
            assignment=ParamAssignment(obj["assignment"]),
            point=np.asarray(obj["point"], dtype=float),
            value=obj["value"],
            incumbent=obj["incumbent"],
            mu=obj.get("mu"),
            sigma=obj.get("sigma"),
            beta=obj.get("beta"),
            pseudo_count=obj.get("pseudo_count", 0),
            wall_time=obj.get("wall_time", 0.0),
        )


@dataclass
class RefineTrace:
    records: list[TraceRecord] = field(default_factory=list)

    @property
    def actual_count(self) -> int:
        return len(self.records)

    def values(self) -> list[float]:
        return [r.value for r in self.records]

    def incumbents(self) -> list[float]:
        return [r.incumbent for r in self.records]

    def final_augmentation_factor(self) -> float:
        if not self.records:
            return 1.0
        last = self.records[-1]
        return (last.pseudo_count + self.actual_count) / self.actual_count

    def to_jsonl(self) -> str:
        return "\n".join(json.dumps(r.to_obj()) for r in self.records) + "\n"

    @staticmethod
    def from_jsonl(text: str) -> "RefineTrace":
        records = [TraceRecord.from_obj(json.loads(line)) for line in text.splitlines() if line.strip()]
        return RefineTrace(records)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class RefineConfig:
    """Everything the driver needs; budget counts warm-up evaluations too."""

    budget_b: int
    n_init: int = 3
    seed: int = 0
    coreset_fraction: float = 0.1
    coreset_method: str = "random"
    gp: gp.GPFitConfig = field(default_factory=gp.GPFitConfig)
    beta: acquire.BetaConfig | None = None
    augment: augment.AugmentConfig | None = field(default_factory=augment.AugmentConfig)
    predictor: object | None = None
    sampler_c: float = 1.0
    advisor: object | None = None

    def __post_init__(self):
        if self.n_init < 1:
            raise ConfigError(f"n_init must be >= 1, got {self.n_init}")
        if self.budget_b < self.n_init + 1:
            raise ConfigError(
                f"budget_b must be >= n_init + 1 ({self.n_init + 1}), got {self.budget_b}"
            )
        if not (0.0 < self.coreset_fraction <= 1.0):
            raise ConfigError(f"coreset_fraction must lie in (0, 1], got {self.coreset_fraction}")


Objective = Callable[[ParamAssignment], float]


def _evaluate(objective: Objective, a: ParamAssignment, trace: RefineTrace) -> float:
    value = objective(a)
    try:
        value = float(value)
    except (TypeError, ValueError):
        value = float("nan")
    if not math.isfinite(value):
        raise ObjectiveError(
            f"objective returned non-finite value {value!r} at {a.values}",
            assignment=a,
            trace=trace,
        )
    return value


def run_autorefine(
    objective: Objective, s: SearchSpace, cfg: RefineConfig
) -> tuple[ParamAssignment, RefineTrace]:
    """Run the surrogate-augmented refinement loop to its evaluation budget.

    Deterministic given cfg.seed and a deterministic objective/predictor.
    Returns the best assignment found (first occurrence on ties) and the
    full per-iteration trace.
    """
    d = s.dim
    if d == 0:
        raise ConfigError("no free parameters to optimize")
    beta_cfg = cfg.beta or acquire.BetaConfig(delta=0.1, d=d)
    predictor = cfg.predictor or augment.Linear1DTrend()
    policy = acquire.SamplerPolicy(
        c=cfg.sampler_c, seed=derive_seed(cfg.seed, "sampler"), advisor=cfg.advisor
    )

    trace = RefineTrace()
    actual: list[gp.Observation] = []
    evaluated: set[ParamAssignment] = set()
    best_value = -math.inf

    def record(phase, a, point, value, mu=None, sigma=None, beta=None, pseudo=0, t0=0.0):
        nonlocal best_value
        best_value = max(best_value, value)
        trace.records.append(
            TraceRecord(
                index=len(trace.records) + 1,
                phase=phase,
                assignment=a,
                point=point,
                value=value,
                incumbent=best_value,
                mu=mu,
                sigma=sigma,
                beta=beta,
                pseudo_count=pseudo,
                wall_time=time.perf_counter() - t0,
            )
        )

    for i in range(cfg.n_init):
        t0 = time.perf_counter()
        a = sample_uniform(s, derive_seed(cfg.seed, "init", i))
        value = _evaluate(objective, a, trace)
        point = embed(a, s)
        actual.append(gp.Observation(point, value, cfg.gp.base_noise_var))
        evaluated.add(a)
        record("init", a, point, value, t0=t0)

    t = 0
    while len(actual) < cfg.budget_b:
        t += 1
        t0 = time.perf_counter()
        pseudo = (
            augment.predict_trends(actual, s, cfg.augment, predictor, cfg.gp.base_noise_var)
            if cfg.augment is not None
            else []
        )
        # Hyperparameters are estimated from actual evaluations only; trend
        # points in the MLE collapse the lengthscale when the trend model is
        # misspecified. The union still forms the conditioning set.
        hyper = gp.fit(actual, cfg.gp)
        model = gp.fit(
            list(actual) + pseudo,
            gp.GPFitConfig(
                optimize=False,
                signal_var=hyper.signal_var,
                lengthscale=hyper.lengthscale,
                base_noise_var=cfg.gp.base_noise_var,
                standardize=cfg.gp.standardize,
                jitter=cfg.gp.jitter,
            ),
        )
        beta = acquire.beta_schedule(t, beta_cfg)
        starts = [o.point for o in actual]
        optima = acquire.optimize_ucb(model, beta, starts)

        candidates: list[acquire.ScoredCandidate] = []
        seen: set[ParamAssignment] = set()
        explore = sample_uniform(s, derive_seed(cfg.seed, "explore", t))
        for point in optima + [embed(explore, s)]:
            a = discretize(point, s)
            if a in seen:
                continue
            seen.add(a)
            candidates.append(
                acquire.ScoredCandidate(a, acquire.ucb_score(model, embed(a, s), beta))
            )

        chosen = acquire.select_next(candidates, s, t, policy, evaluated)
        chosen_point = embed(chosen, s)
        mu, var = gp.posterior(model, chosen_point)
        value = _evaluate(objective, chosen, trace)
        actual.append(gp.Observation(chosen_point, value, cfg.gp.base_noise_var))
        evaluated.add(chosen)
        record(
            "ucb", chosen, chosen_point, value,
            mu=mu, sigma=math.sqrt(var), beta=beta, pseudo=len(pseudo), t0=t0,
        )

    best_idx = max(range(len(trace.records)), key=lambda i: (trace.records[i].value, -i))
    return trace.records[best_idx].assignment, trace


# ---------------------------------------------------------------------------
# Finite-grid pure-UCB runner (theory experiments)
# ---------------------------------------------------------------------------

def run_gp_ucb_grid(
    objective_fn: Callable[[np.ndarray], float],
    d: int,
    budget: int,
    seed: int,
    beta_cfg: acquire.BetaConfig,
    signal_var: float,
    lengthscale: float,
    noise_var: float = 1e-8,
    n_init: int = 3,
    grid_size: int = 256,
) -> tuple[RefineTrace, float]:
    """Pure GP-UCB over a fixed finite grid of the unit box.

    The model runs with known hyperparameters and no target standardization,
    matching the setting of the confidence-bound analysis. Returns the trace
    and the grid optimum (the reference value for regret).
    """
    if d != 1:
        raise InputError("the grid runner currently supports d=1")
    grid = np.linspace(0.0, 1.0, grid_size)[:, None]
    f_grid = np.array([float(objective_fn(x)) for x in grid])
    f_opt = float(np.max(f_grid))
    rng = np.random.default_rng(seed)

    cfg = gp.GPFitConfig(
        optimize=False,
        signal_var=signal_var,
        lengthscale=lengthscale,
        base_noise_var=noise_var,
        standardize=False,
    )
    trace = RefineTrace()
    obs: list[gp.Observation] = []
    best = -math.inf

    def push(phase, idx, mu=None, sigma=None, beta=None):
        nonlocal best
        value = f_grid[idx]
        best = max(best, value)
        obs.append(gp.Observation(grid[idx], value, noise_var))
        trace.records.append(
            TraceRecord(
                index=len(trace.records) + 1,
                phase=phase,
                assignment=ParamAssignment({"x": float(grid[idx, 0])}),
                point=grid[idx].copy(),
                value=float(value),
                incumbent=float(best),
                mu=mu,
                sigma=sigma,
                beta=beta,
            )
        )

    for idx in rng.choice(grid_size, size=min(n_init, budget), replace=False):
        push("init", int(idx))

    t = 0
    while len(obs) < budget:
        t += 1
        model = gp.fit(obs, cfg)
        beta = acquire.beta_schedule(t, beta_cfg)
        means, variances = gp.posterior_batch(model, grid)
        scores = means + math.sqrt(beta) * np.sqrt(variances)
        idx = int(np.argmax(scores))
        push("ucb", idx, mu=float(means[idx]), sigma=float(math.sqrt(variances[idx])), beta=beta)

    return trace, f_opt
