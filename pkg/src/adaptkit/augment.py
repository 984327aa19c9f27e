"""Per-axis trend prediction and pseudo-observation bookkeeping.

Each round, the history of actual evaluations is projected onto every
relaxed axis; a trend model predicts values along an evenly spaced grid on
that axis (other coordinates pinned at the incumbent point) and the
predictions enter the GP as pseudo observations with kappa-inflated noise.
"""

from __future__ import annotations

import json
import logging
import string
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, InputError
from .gp import Observation, Source
from .space import SearchSpace

log = logging.getLogger(__name__)

TREND_TEMPLATE_PATH = Path(__file__).parent / "templates" / "trend_predictor.txt"


@dataclass
class AugmentConfig:
    """Grid resolution and noise inflation for pseudo observations."""

    grid_size: int = 5
    inflation_kappa: float = 10.0

    def __post_init__(self):
        if self.grid_size < 2:
            raise ConfigError(f"grid_size must be >= 2, got {self.grid_size}")
        if self.inflation_kappa <= 1.0:
            raise ConfigError(f"inflation_kappa must be > 1, got {self.inflation_kappa}")


class Linear1DTrend:
    """Ordinary least squares on (axis coordinate, value) pairs.

    The weakest model honoring a per-axis trend; degenerate inputs (all
    coordinates equal) fall back to the mean value.
    """

    def predict_axis(
        self,
        history_coords: np.ndarray,
        history_values: np.ndarray,
        grid_coords: np.ndarray,
        axis_name: str,
    ) -> np.ndarray | None:
        x = np.asarray(history_coords, dtype=float)
        y = np.asarray(history_values, dtype=float)
        var = float(np.var(x))
        if var < 1e-18:
            slope = 0.0
        else:
            slope = float(np.cov(x, y, bias=True)[0, 1]) / var
        intercept = float(np.mean(y)) - slope * float(np.mean(x))
        return intercept + slope * np.asarray(grid_coords, dtype=float)


class ExternalTrend:
    """Trend prediction delegated to a text-completion client.

    Replies must be a JSON object {"predictions": [..]} with exactly one
    finite number per grid coordinate; anything else discards the axis
    (never fabricated values).
    """

    def __init__(self, client, template_path: Path = TREND_TEMPLATE_PATH):
        self.client = client
        self.template = string.Template(template_path.read_text(encoding="utf-8"))

    def predict_axis(self, history_coords, history_values, grid_coords, axis_name):
        prompt = self.template.safe_substitute(
            axis_name=axis_name,
            history=json.dumps(
                [[float(c), float(v)] for c, v in zip(history_coords, history_values)]
            ),
            grid=json.dumps([float(c) for c in grid_coords]),
        )
        try:
            reply = self.client.complete(prompt)
            obj = json.loads(reply)
        except Exception as exc:
            log.warning("trend predictor failed on axis %s: %s", axis_name, exc)
            return None
        preds = obj.get("predictions") if isinstance(obj, dict) else None
        if (
            not isinstance(preds, list)
            or len(preds) != len(grid_coords)
            or not all(isinstance(p, (int, float)) and not isinstance(p, bool) for p in preds)
        ):
            log.warning("discarding malformed trend reply on axis %s", axis_name)
            return None
        arr = np.asarray(preds, dtype=float)
        if not np.all(np.isfinite(arr)):
            log.warning("discarding non-finite trend reply on axis %s", axis_name)
            return None
        return arr


def axis_grid(s: SearchSpace, axis: int, anchor: np.ndarray, grid_size: int) -> list[np.ndarray]:
    """Points equal to ``anchor`` except coordinate ``axis``, which sweeps
    grid_size evenly spaced values over [0, 1]."""
    d = s.dim
    if not (0 <= axis < d):
        raise InputError(f"axis {axis} out of range for a {d}-dimensional space")
    if grid_size < 2:
        raise InputError(f"grid_size must be >= 2, got {grid_size}")
    anchor = np.asarray(anchor, dtype=float)
    if anchor.shape != (d,):
        raise InputError(f"anchor has shape {anchor.shape}, expected ({d},)")
    points = []
    for value in np.linspace(0.0, 1.0, grid_size):
        p = anchor.copy()
        p[axis] = value
        points.append(p)
    return points


def predict_trends(
    history: Sequence[Observation],
    s: SearchSpace,
    cfg: AugmentConfig,
    predictor,
    base_noise_var: float = 1e-4,
) -> list[Observation]:
    """Pseudo observations along every axis grid, anchored at the incumbent.

    Grid points coinciding with an actual point (within 1e-9 in relaxed
    coordinates) are skipped; predictor failures drop their axis.
    """
    actual = [o for o in history if o.source is Source.ACTUAL]
    if not actual:
        raise InputError("predict_trends needs at least one actual observation")
    incumbent = max(range(len(actual)), key=lambda i: (actual[i].value, -i))
    anchor = actual[incumbent].point
    free_names = s.free_names()
    pseudo: list[Observation] = []
    values = np.array([o.value for o in actual])
    points = np.stack([o.point for o in actual])
    for axis in range(s.dim):
        grid = axis_grid(s, axis, anchor, cfg.grid_size)
        preds = predictor.predict_axis(points[:, axis], values, np.array([g[axis] for g in grid]), free_names[axis])
        if preds is None:
            continue
        for point, value in zip(grid, preds):
            if np.any(np.max(np.abs(points - point[None, :]), axis=1) <= 1e-9):
                continue
            pseudo.append(
                Observation(
                    point=point,
                    value=float(value),
                    noise_var=cfg.inflation_kappa * base_noise_var,
                    source=Source.PSEUDO,
                )
            )
    return pseudo


def augmentation_factor(history: Sequence[Observation]) -> float:
    """(actual + pseudo) / actual over the GP training set; >= 1."""
    n_actual = sum(1 for o in history if o.source is Source.ACTUAL)
    n_pseudo = sum(1 for o in history if o.source is Source.PSEUDO)
    if n_actual == 0:
        raise InputError("augmentation factor undefined without actual observations")
    return (n_actual + n_pseudo) / n_actual
