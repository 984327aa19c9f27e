"""Synthetic benchmark objectives with known optima, plus the child-process
hook for real evaluation jobs.

Each builtin exposes a default search space and its optimum value so regret
can be computed without extra bookkeeping.
"""

from __future__ import annotations

import json
import math
import subprocess
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .space import Categorical, FloatRange, ParamAssignment, SearchSpace

BRANIN_MIN = 0.39788735772973816  # at (pi, 2.275) and the two mirror points


@dataclass(frozen=True)
class QuadBowl:
    """Negated squared distance to a center; optimum 0 at the center."""

    center: tuple[float, ...] = (0.6,)

    def space(self) -> SearchSpace:
        return SearchSpace({f"x{i}": FloatRange(0.0, 1.0) for i in range(len(self.center))})

    @property
    def optimum_value(self) -> float:
        return 0.0

    def __call__(self, a: ParamAssignment) -> float:
        return -sum((a[f"x{i}"] - c) ** 2 for i, c in enumerate(self.center))


def branin(x1: float, x2: float) -> float:
    a = 1.0
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1.0 - t) * math.cos(x1) + s


@dataclass(frozen=True)
class BraninCat:
    """Negated Branin surface with a categorical branch shifting the first
    input; every branch attains the same optimum value."""

    shifts: tuple[float, ...] = (0.0, 2.5, -2.5)

    def space(self) -> SearchSpace:
        return SearchSpace(
            {
                "x1": FloatRange(-5.0, 10.0),
                "x2": FloatRange(0.0, 15.0),
                "branch": Categorical(list(range(len(self.shifts)))),
            }
        )

    @property
    def optimum_value(self) -> float:
        return -BRANIN_MIN

    def __call__(self, a: ParamAssignment) -> float:
        shift = self.shifts[int(a["branch"])]
        return -branin(a["x1"] - shift, a["x2"])


@dataclass(frozen=True)
class Lipschitz1D:
    """A line slope * x on [0, 1]; global Lipschitz constant |slope|."""

    slope: float = 1.0

    def space(self) -> SearchSpace:
        return SearchSpace({"x": FloatRange(0.0, 1.0)})

    @property
    def optimum_value(self) -> float:
        return max(0.0, self.slope)

    def __call__(self, a: ParamAssignment) -> float:
        return self.slope * a["x"]


class GpSample:
    """A fixed-seed smooth draw: anchor values sampled from a squared-
    exponential prior, evaluated everywhere through its own noiseless
    interpolant. Deterministic per seed."""

    def __init__(self, seed: int = 0, d: int = 1, signal_var: float = 1.0,
                 lengthscale: float = 0.2, n_anchors: int = 48):
        self.seed = seed
        self.d = d
        self.signal_var = signal_var
        self.lengthscale = lengthscale
        rng = np.random.default_rng(seed)
        self._anchors = rng.random((n_anchors, d))
        sq = (
            np.sum(self._anchors**2, axis=1)[:, None]
            + np.sum(self._anchors**2, axis=1)[None, :]
            - 2.0 * self._anchors @ self._anchors.T
        )
        np.maximum(sq, 0.0, out=sq)
        k = signal_var * np.exp(-sq / (2.0 * lengthscale**2))
        k += 1e-10 * np.eye(n_anchors)
        y = np.linalg.cholesky(k) @ rng.normal(size=n_anchors)
        self._weights = np.linalg.solve(k, y)

    def value_at(self, point: np.ndarray) -> float:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        sq = np.sum((self._anchors - point[None, :]) ** 2, axis=1)
        kx = self.signal_var * np.exp(-sq / (2.0 * self.lengthscale**2))
        return float(kx @ self._weights)

    def space(self) -> SearchSpace:
        return SearchSpace({f"x{i}": FloatRange(0.0, 1.0) for i in range(self.d)})

    @property
    def optimum_value(self) -> float:
        return self.grid_optimum()

    def grid_optimum(self, per_dim: int = 2001) -> float:
        if self.d != 1:
            raise InputError("grid optimum implemented for d=1")
        grid = np.linspace(0.0, 1.0, per_dim)
        sq = (grid[:, None] - self._anchors[:, 0][None, :]) ** 2
        kx = self.signal_var * np.exp(-sq / (2.0 * self.lengthscale**2))
        return float(np.max(kx @ self._weights))

    def __call__(self, a: ParamAssignment) -> float:
        return self.value_at(np.array([a[f"x{i}"] for i in range(self.d)]))


@dataclass
class ExternalObjective:
    """Runs a child process per evaluation: the assignment goes to stdin as
    JSON, the process answers {"value": <real>} on stdout."""

    command: Sequence[str]
    timeout: float = 600.0

    def __call__(self, a: ParamAssignment) -> float:
        proc = subprocess.run(
            list(self.command),
            input=json.dumps({"assignment": a.values}),
            capture_output=True,
            text=True,
            timeout=self.timeout,
        )
        if proc.returncode != 0:
            raise InputError(
                f"external objective exited {proc.returncode}: {proc.stderr.strip()[:200]}"
            )
        try:
            return float(json.loads(proc.stdout)["value"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"malformed objective reply: {proc.stdout[:200]!r}") from exc


BUILTINS = {
    "quad_bowl": QuadBowl,
    "branin_cat": BraninCat,
    "lipschitz_1d": Lipschitz1D,
    "gp_sample": GpSample,
}


def make_builtin(name: str, params: dict | None = None):
    if name not in BUILTINS:
        raise InputError(
            f"unknown builtin objective {name!r}; available: {sorted(BUILTINS)}"
        )
    params = dict(params or {})
    if name == "quad_bowl" and "center" in params:
        params["center"] = tuple(params["center"])
    if name == "branin_cat" and "shifts" in params:
        params["shifts"] = tuple(params["shifts"])
    return BUILTINS[name](**params)


def eval_builtin(obj, a: ParamAssignment) -> float:
    """Evaluate a builtin objective, checking the assignment carries every
    coordinate it needs."""
    try:
        return float(obj(a))
    except KeyError as exc:
        raise InputError(f"assignment is missing parameter {exc.args[0]!r}") from exc
