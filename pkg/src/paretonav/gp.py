"""Gaussian-process regression per objective with the optimistic UCB acquisition.

Zero-mean GPs with a squared-exponential kernel, one shared length-scale per
objective chosen by log marginal likelihood over a fixed log grid. Predictions
come from a cached Cholesky factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular
from scipy.spatial.distance import cdist

from .config import GpConfig
from .errors import InvalidArgumentError


def _sq_exp(X1: np.ndarray, X2: np.ndarray, length_scale: float, signal_var: float) -> np.ndarray:
    d2 = cdist(X1 / length_scale, X2 / length_scale, metric="sqeuclidean")
    return signal_var * np.exp(-0.5 * d2)


class GPModel:
    """Exact GP posterior for a single objective."""

    def __init__(
        self,
        X: np.ndarray,
        y: np.ndarray,
        length_scale: float,
        signal_var: float = 1.0,
        noise_var: float = 1e-6,
        jitter: float = 1e-8,
    ):
        self.X = np.atleast_2d(np.asarray(X, dtype=float))
        self.y = np.asarray(y, dtype=float)
        if self.X.shape[0] != self.y.shape[0] or self.X.shape[0] == 0:
            raise InvalidArgumentError("need matching, nonempty inputs and targets")
        self.length_scale = float(length_scale)
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        K = _sq_exp(self.X, self.X, self.length_scale, self.signal_var)
        K[np.diag_indices_from(K)] += self.noise_var
        self._cho, self._log_det = _robust_cholesky(K, jitter)
        self.alpha = cho_solve(self._cho, self.y)

    def log_marginal_likelihood(self) -> float:
        n = self.y.shape[0]
        return float(
            -0.5 * self.y @ self.alpha - 0.5 * self._log_det - 0.5 * n * math.log(2.0 * math.pi)
        )

    def predict(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation at rows of X."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        k_star = _sq_exp(X, self.X, self.length_scale, self.signal_var)
        mean = k_star @ self.alpha
        L = self._cho[0]
        v = solve_triangular(L, k_star.T, lower=self._cho[1], check_finite=False)
        var = self.signal_var - np.einsum("ij,ij->j", v, v)
        var = np.clip(var, 0.0, None)
        return mean, np.sqrt(var)

    def mean_gradient(self, x: np.ndarray) -> np.ndarray:
        """Analytic gradient of the posterior mean at a single point."""
        x = np.asarray(x, dtype=float)
        k_star = _sq_exp(x[None, :], self.X, self.length_scale, self.signal_var)[0]
        diff = (self.X - x) / self.length_scale**2  # d k / d x = k * (x_i - x) / l^2
        return (k_star * self.alpha) @ diff


def _robust_cholesky(K: np.ndarray, jitter: float):
    """Cholesky, adding jitter on failure and doubling it up to 6 times."""
    add = 0.0
    for attempt in range(8):
        try:
            c, lower = cho_factor(K + add * np.eye(K.shape[0]), lower=True)
            log_det = 2.0 * np.log(np.diag(c)).sum()
            return (c, lower), log_det
        except np.linalg.LinAlgError:
            if attempt == 7:
                raise
            add = jitter if add == 0.0 else 2.0 * add
    raise np.linalg.LinAlgError("cholesky failed")  # unreachable


def _lengthscale_grid(cfg: GpConfig) -> np.ndarray:
    return np.geomspace(cfg.lengthscale_min, cfg.lengthscale_max, cfg.lengthscale_grid_size)


def fit_objective_gps(
    X: np.ndarray,
    Y: np.ndarray,
    cfg: GpConfig | None = None,
    noise_var: float | None = None,
) -> list[GPModel]:
    """Fit one GP per objective column of Y, grid-selecting each length-scale."""
    cfg = cfg or GpConfig()
    noise = cfg.noise_variance if noise_var is None else noise_var
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    if Y.shape[0] != X.shape[0]:
        raise InvalidArgumentError("X and Y row counts differ")
    models = []
    for col in range(Y.shape[1]):
        y = Y[:, col]
        best = None
        for ls in _lengthscale_grid(cfg):
            model = GPModel(X, y, ls, cfg.signal_variance, noise, cfg.jitter)
            lml = model.log_marginal_likelihood()
            if best is None or lml > best[0]:
                best = (lml, model)
        models.append(best[1])
    return models


def ucb_beta(t: int) -> float:
    """Exploration coefficient at acquisition step t >= 1."""
    if t < 1:
        raise InvalidArgumentError(f"t must be >= 1, got {t}")
    return math.sqrt(0.125 * math.log(2.0 * t + 1.0))


class SurrogateState:
    """Accumulated observations plus the fitted per-objective GPs.

    Before any observation arrives, predictions fall back to the prior
    (mean 0, standard deviation 1) so acquisition is purely bounds-driven.
    """

    def __init__(self, input_dim: int, num_objectives: int, cfg: GpConfig | None = None):
        self.input_dim = input_dim
        self.num_objectives = num_objectives
        self.cfg = cfg or GpConfig()
        self.X: list[np.ndarray] = []
        self.Y: list[np.ndarray] = []
        self.models: list[GPModel] | None = None

    def __len__(self) -> int:
        return len(self.X)

    def add(self, x: np.ndarray, y_norm: np.ndarray, refit: bool = True) -> None:
        self.X.append(np.asarray(x, dtype=float))
        self.Y.append(np.asarray(y_norm, dtype=float))
        if refit:
            self.refit()

    def refit(self) -> None:
        if not self.X:
            self.models = None
            return
        self.models = fit_objective_gps(np.array(self.X), np.array(self.Y), self.cfg)

    def predict_batch(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Means and stds, each (n, L)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.models is None:
            shape = (X.shape[0], self.num_objectives)
            return np.zeros(shape), np.ones(shape)
        means = np.empty((X.shape[0], self.num_objectives))
        stds = np.empty_like(means)
        for i, m in enumerate(self.models):
            means[:, i], stds[:, i] = m.predict(X)
        return means, stds


def ucb_objective_vector(state: SurrogateState, x: np.ndarray, t: int) -> np.ndarray:
    """Optimistic objective vector mean + ucb_beta(t) * std, clamped to [0, 1]."""
    mean, std = state.predict_batch(np.asarray(x, dtype=float)[None, :])
    return np.clip(mean[0] + ucb_beta(t) * std[0], 0.0, 1.0)


def ucb_matrix(state: SurrogateState, X: np.ndarray, t: int) -> np.ndarray:
    """Batched ucb_objective_vector over rows of X."""
    mean, std = state.predict_batch(X)
    return np.clip(mean + ucb_beta(t) * std, 0.0, 1.0)
