"""Gaussian-process regression with a squared-exponential kernel and
per-observation (heteroscedastic) noise.

Trend-predicted pseudo points enter the training set as ordinary
observations with inflated noise variance, so they inform the posterior
mean without over-confidently shrinking the posterior spread. Targets are
standardized before fitting and predictions are mapped back.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from .errors import ConfigError, InputError, NumericalError, StateError

LOG2PI = math.log(2.0 * math.pi)


class Source(enum.Enum):
    ACTUAL = "actual"
    PSEUDO = "pseudo"


@dataclass(frozen=True)
class Observation:
    """One evaluated (or trend-predicted) point in relaxed coordinates."""

    point: np.ndarray
    value: float
    noise_var: float
    source: Source = Source.ACTUAL

    def __post_init__(self):
        object.__setattr__(self, "point", np.asarray(self.point, dtype=float))
        if not math.isfinite(self.noise_var) or self.noise_var < 0:
            raise InputError(f"noise_var must be finite and >= 0, got {self.noise_var}")


@dataclass
class GPFitConfig:
    """Fitting controls.

    The ascent over (log signal_var, log lengthscale) is capped at
    ``max_iters`` steps. With ``optimize=False`` the initial hyperparameters
    are used as-is, which is what the theory experiments need (known kernel).
    """

    max_iters: int = 50
    base_noise_var: float = 1e-4
    optimize: bool = True
    signal_var: float | None = None
    lengthscale: float | None = None
    standardize: bool = True
    jitter: float = 1e-8
    grad_tol: float = 1e-6

    def __post_init__(self):
        if self.max_iters < 0:
            raise ConfigError("max_iters must be >= 0")
        if self.base_noise_var < 0:
            raise ConfigError("base_noise_var must be >= 0")
        if not self.optimize and (self.signal_var is None or self.lengthscale is None):
            raise ConfigError("optimize=False requires explicit signal_var and lengthscale")


@dataclass(frozen=True)
class GPModel:
    """A fitted GP: kernel hyperparameters plus the cached factorization.

    Immutable after construction; posterior queries are safe to run
    concurrently. Internal arrays live in standardized target units.
    """

    signal_var: float
    lengthscale: float
    base_noise_var: float
    observations: tuple[Observation, ...]
    x_train: np.ndarray          # (n, d)
    chol: np.ndarray | None      # lower factor of K + diag(noise) + jitter
    alpha: np.ndarray | None     # (K + noise)^-1 z
    z_train: np.ndarray | None   # standardized targets
    noise_z: np.ndarray | None   # standardized per-point noise
    y_mean: float
    y_scale: float
    jitter_used: float

    @property
    def n(self) -> int:
        return len(self.observations)

    @property
    def dim(self) -> int:
        return self.x_train.shape[1] if self.x_train.size else 0

    @staticmethod
    def prior(signal_var: float, lengthscale: float, dim: int, base_noise_var: float = 1e-4) -> "GPModel":
        """Model with no observations: posterior equals the prior."""
        return GPModel(
            signal_var=signal_var,
            lengthscale=lengthscale,
            base_noise_var=base_noise_var,
            observations=(),
            x_train=np.zeros((0, dim)),
            chol=None,
            alpha=None,
            z_train=None,
            noise_z=None,
            y_mean=0.0,
            y_scale=1.0,
            jitter_used=0.0,
        )


def se_kernel(x: np.ndarray, x2: np.ndarray, signal_var: float, lengthscale: float) -> float:
    """Squared-exponential covariance sigma_f^2 exp(-|x-x'|^2 / (2 l^2))."""
    if signal_var <= 0 or lengthscale <= 0:
        raise InputError("signal_var and lengthscale must be positive")
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(x2))):
        raise InputError("non-finite kernel inputs")
    sq = float(np.sum((x - x2) ** 2))
    return signal_var * math.exp(-sq / (2.0 * lengthscale**2))


def _kernel_matrix(xa: np.ndarray, xb: np.ndarray, signal_var: float, lengthscale: float) -> np.ndarray:
    sq = np.sum(xa**2, axis=1)[:, None] + np.sum(xb**2, axis=1)[None, :] - 2.0 * xa @ xb.T
    np.maximum(sq, 0.0, out=sq)
    return signal_var * np.exp(-sq / (2.0 * lengthscale**2))


def _factorize(k_noisy: np.ndarray, signal_var: float, jitter0: float) -> tuple[np.ndarray, float]:
    """Cholesky with escalating diagonal jitter (x10 per retry, up to 1e-2)."""
    jit = jitter0
    n = k_noisy.shape[0]
    while jit <= 1e-2 + 1e-15:
        try:
            L = cholesky(k_noisy + jit * signal_var * np.eye(n), lower=True)
            return L, jit
        except np.linalg.LinAlgError:
            jit *= 10.0
        except Exception:
            jit *= 10.0
    raise NumericalError("covariance not positive definite even at jitter 1e-2")


def _lml_and_grad(x: np.ndarray, z: np.ndarray, noise: np.ndarray, log_sv: float, log_ls: float, jitter0: float):
    """Log marginal likelihood and its gradient wrt (log sigma_f^2, log l)."""
    sv, ls = math.exp(log_sv), math.exp(log_ls)
    n = len(z)
    k_se = _kernel_matrix(x, x, sv, ls)
    k_noisy = k_se + np.diag(noise)
    L, jit = _factorize(k_noisy, sv, jitter0)
    alpha = cho_solve((L, True), z)
    lml = -0.5 * float(z @ alpha) - float(np.sum(np.log(np.diag(L)))) - 0.5 * n * LOG2PI

    k_inv = cho_solve((L, True), np.eye(n))
    inner = np.outer(alpha, alpha) - k_inv
    sq = np.sum(x**2, axis=1)[:, None] + np.sum(x**2, axis=1)[None, :] - 2.0 * x @ x.T
    np.maximum(sq, 0.0, out=sq)
    dk_dlog_sv = k_se + jit * sv * np.eye(n)
    dk_dlog_ls = k_se * (sq / ls**2)
    grad = np.array(
        [0.5 * float(np.sum(inner * dk_dlog_sv)), 0.5 * float(np.sum(inner * dk_dlog_ls))]
    )
    return lml, grad


def fit(observations: Sequence[Observation], config: GPFitConfig | None = None) -> GPModel:
    """Fit hyperparameters by capped gradient ascent on the log marginal
    likelihood and cache the training factorization.

    Deterministic given the observations and config; invariant to the order
    of the observations up to float rounding.
    """
    config = config or GPFitConfig()
    obs = tuple(observations)
    if not obs:
        raise InputError("fit requires at least one observation")
    dims = {o.point.shape for o in obs}
    if len(dims) != 1:
        raise InputError(f"observations have mixed dimensions: {sorted(dims)}")
    y = np.array([o.value for o in obs], dtype=float)
    if not np.all(np.isfinite(y)):
        raise InputError("observation values must be finite")
    x = np.stack([o.point for o in obs])
    noise = np.array([o.noise_var for o in obs], dtype=float)

    if config.standardize:
        y_mean = float(np.mean(y))
        y_scale = float(np.std(y))
        if y_scale < 1e-12:
            y_scale = 1.0
    else:
        y_mean, y_scale = 0.0, 1.0
    z = (y - y_mean) / y_scale
    noise_z = noise / y_scale**2

    log_sv = math.log(config.signal_var) if config.signal_var is not None else math.log(max(float(np.var(z)), 1e-8))
    log_ls = math.log(config.lengthscale) if config.lengthscale is not None else math.log(0.5)

    if config.optimize and len(obs) >= 2:
        theta = np.array([log_sv, log_ls])
        lml, grad = _lml_and_grad(x, z, noise_z, theta[0], theta[1], config.jitter)
        step = 0.1
        for _ in range(config.max_iters):
            if float(np.max(np.abs(grad))) < config.grad_tol:
                break
            trial = np.clip(theta + step * grad, [-20.0, math.log(1e-3)], [20.0, math.log(1e3)])
            try:
                lml_t, grad_t = _lml_and_grad(x, z, noise_z, trial[0], trial[1], config.jitter)
            except NumericalError:
                step *= 0.5
                continue
            if lml_t > lml:
                theta, lml, grad = trial, lml_t, grad_t
                step *= 1.5
            else:
                step *= 0.5
        log_sv, log_ls = float(theta[0]), float(theta[1])

    sv, ls = math.exp(log_sv), math.exp(log_ls)
    k_noisy = _kernel_matrix(x, x, sv, ls) + np.diag(noise_z)
    L, jit = _factorize(k_noisy, sv, config.jitter)
    alpha = cho_solve((L, True), z)
    return GPModel(
        signal_var=sv,
        lengthscale=ls,
        base_noise_var=config.base_noise_var,
        observations=obs,
        x_train=x,
        chol=L,
        alpha=alpha,
        z_train=z,
        noise_z=noise_z,
        y_mean=y_mean,
        y_scale=y_scale,
        jitter_used=jit,
    )


def _check_fitted(m: GPModel) -> None:
    if m.n > 0 and m.chol is None:
        raise StateError("model has observations but no cached factorization")


def posterior(m: GPModel, x_star: np.ndarray) -> tuple[float, float]:
    """Posterior mean and variance at one point, in original target units."""
    means, variances = posterior_batch(m, np.asarray(x_star, dtype=float)[None, :])
    return float(means[0]), float(variances[0])


def posterior_batch(m: GPModel, x_query: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized posterior over a (m, d) batch of query points."""
    _check_fitted(m)
    x_query = np.asarray(x_query, dtype=float)
    if m.n == 0:
        means = np.full(len(x_query), m.y_mean)
        variances = np.full(len(x_query), m.signal_var * m.y_scale**2)
        return means, variances
    k_star = _kernel_matrix(x_query, m.x_train, m.signal_var, m.lengthscale)  # (q, n)
    mean_z = k_star @ m.alpha
    v = solve_triangular(m.chol, k_star.T, lower=True)  # (n, q)
    var_z = m.signal_var - np.sum(v * v, axis=0)
    var_z = np.maximum(var_z, 0.0)
    return m.y_mean + m.y_scale * mean_z, m.y_scale**2 * var_z


def posterior_with_gradient(m: GPModel, x_star: np.ndarray):
    """Posterior (mean, var) plus their gradients wrt the query point.

    Used by the acquisition ascent; gradients are in original target units.
    """
    _check_fitted(m)
    x_star = np.asarray(x_star, dtype=float)
    d = m.dim if m.n else len(x_star)
    if m.n == 0:
        return m.y_mean, m.signal_var * m.y_scale**2, np.zeros(d), np.zeros(d)
    k_star = _kernel_matrix(x_star[None, :], m.x_train, m.signal_var, m.lengthscale)[0]  # (n,)
    mean_z = float(k_star @ m.alpha)
    w = cho_solve((m.chol, True), k_star)  # (n,)
    var_z = float(m.signal_var - k_star @ w)
    var_z = max(var_z, 0.0)
    # d k_i / d x = k_i (x_i - x) / l^2
    dk = (m.x_train - x_star[None, :]) * (k_star / m.lengthscale**2)[:, None]  # (n, d)
    dmean_z = dk.T @ m.alpha
    dvar_z = -2.0 * dk.T @ w
    mean = m.y_mean + m.y_scale * mean_z
    var = m.y_scale**2 * var_z
    return mean, var, m.y_scale * dmean_z, m.y_scale**2 * dvar_z


def log_marginal_likelihood(m: GPModel) -> float:
    """-1/2 z^T (K+S)^-1 z - 1/2 log det(K+S) - n/2 log 2pi on standardized targets."""
    _check_fitted(m)
    if m.n == 0:
        raise StateError("log marginal likelihood needs at least one observation")
    data_fit = -0.5 * float(m.z_train @ m.alpha)
    log_det = float(np.sum(np.log(np.diag(m.chol))))
    return data_fit - log_det - 0.5 * m.n * LOG2PI
