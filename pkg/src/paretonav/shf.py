"""Soft-hard utility functions, Chebyshev scalarization, and the utility ratio.

Every objective value is mapped through a piecewise utility curve anchored
at a hard bound (utility 0, negative-infinity penalty below) and a soft
bound (utility 1, saturating gains above). Utility vectors are collapsed
to a scalar with an augmented Chebyshev scalarization, and candidate sets
are scored against a reference optimum as a ratio in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateReferenceError, InvalidArgumentError, InvalidBoundsError

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class SHFParams:
    """Shape parameters of the soft-hard utility curve.

    beta is the fraction of the hard-to-soft utility slope retained between
    the soft bound and the saturation point; zeta places the saturation
    point at hard + zeta * (soft - hard). utility_floor is the finite
    stand-in for the unbounded penalty below the hard bound.
    """

    beta: float = 0.25
    zeta: float = 2.0
    utility_floor: float = -1.0e12

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise InvalidArgumentError(f"beta must be in [0, 1], got {self.beta}")
        if self.zeta <= 1.0:
            raise InvalidArgumentError(f"zeta must be > 1, got {self.zeta}")

    @property
    def saturation_value(self) -> float:
        """Utility ceiling reached at and beyond the saturation point."""
        return 1.0 + 2.0 * self.beta * (0.5 * self.zeta - 0.5)


@dataclass(frozen=True)
class SoftHardBounds:
    """Per-objective soft and hard thresholds in normalized objective units."""

    soft: np.ndarray
    hard: np.ndarray

    def __post_init__(self):
        soft = np.asarray(self.soft, dtype=float)
        hard = np.asarray(self.hard, dtype=float)
        object.__setattr__(self, "soft", soft)
        object.__setattr__(self, "hard", hard)
        if soft.shape != hard.shape or soft.ndim != 1:
            raise InvalidBoundsError("soft and hard must be 1-d vectors of equal length")
        if not np.all(hard < soft):
            raise InvalidBoundsError(
                f"hard bound must be strictly below soft bound; hard={hard}, soft={soft}"
            )

    @property
    def num_objectives(self) -> int:
        return self.soft.shape[0]


def shf_normalize(z: float, hard: float, soft: float) -> float:
    """Map a value into bound-relative units: hard -> 0, soft -> 0.5."""
    if hard >= soft:
        raise InvalidBoundsError(f"hard={hard} must be < soft={soft}")
    return (z - hard) / (soft - hard) * 0.5


def shf_utility(f_value: float, hard: float, soft: float, params: SHFParams) -> float:
    """Piecewise soft-hard utility of a single objective value.

    Below the hard bound the utility is params.utility_floor; at the hard
    bound 0; linear up to 1 at the soft bound; then a beta-damped linear
    segment up to the saturation point, constant beyond it.
    """
    if hard >= soft:
        raise InvalidBoundsError(f"hard={hard} must be < soft={soft}")
    if f_value < hard:
        return params.utility_floor
    tau = hard + params.zeta * (soft - hard)
    if f_value >= tau:
        return params.saturation_value
    f_tilde = shf_normalize(f_value, hard, soft)
    if f_tilde <= 0.5:  # hard..soft segment; hits exactly 1.0 at the soft bound
        return 2.0 * f_tilde
    return 1.0 + 2.0 * params.beta * (f_tilde - 0.5)


def shf_vector(y: np.ndarray, bounds: SoftHardBounds, params: SHFParams) -> np.ndarray:
    """Componentwise soft-hard utility of an objective vector."""
    y = np.asarray(y, dtype=float)
    if y.shape != bounds.soft.shape:
        raise InvalidArgumentError(
            f"objective vector has shape {y.shape}, bounds expect {bounds.soft.shape}"
        )
    return shf_matrix(y[None, :], bounds, params)[0]


def shf_matrix(Y: np.ndarray, bounds: SoftHardBounds, params: SHFParams) -> np.ndarray:
    """Vectorized shf_utility over rows of Y, shape (n, L) -> (n, L)."""
    Y = np.asarray(Y, dtype=float)
    hard = bounds.hard
    soft = bounds.soft
    span = soft - hard
    f_tilde = (Y - hard) / span * 0.5
    low = 2.0 * f_tilde
    high = 1.0 + 2.0 * params.beta * (f_tilde - 0.5)
    out = np.where(f_tilde <= 0.5, low, np.minimum(high, params.saturation_value))
    out = np.where(Y < hard, params.utility_floor, out)
    return out


@dataclass(frozen=True)
class Scalarizer:
    """Augmented Chebyshev scalarization with preference weights on the simplex."""

    weights: np.ndarray
    ideal_point: np.ndarray
    gamma: float = 0.05

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        z = np.asarray(self.ideal_point, dtype=float)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "ideal_point", z)
        if w.ndim != 1 or z.shape != w.shape:
            raise InvalidArgumentError("weights and ideal_point must be matching 1-d vectors")
        if np.any(w < -SIMPLEX_TOL) or abs(w.sum() - 1.0) > SIMPLEX_TOL:
            raise InvalidArgumentError(f"weights must lie on the simplex, got {w}")


def default_ideal_point(num_objectives: int, params: SHFParams) -> np.ndarray:
    """Ideal point in utility space: the per-dimension saturation ceiling."""
    return np.full(num_objectives, params.saturation_value)


def scalarize(u: np.ndarray, scal: Scalarizer, floor: float = -1.0e12) -> float:
    """Augmented Chebyshev value of a utility vector; floor dominates.

    Any component at or below the floor marks the point infeasible and the
    whole scalarization collapses to the floor.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u <= floor):
        return floor
    dev = np.abs(u - scal.ideal_point)
    return float(-(np.max(scal.weights * dev)) - scal.gamma * dev.sum())


def scalarize_matrix(U: np.ndarray, scal: Scalarizer, floor: float = -1.0e12) -> np.ndarray:
    """Vectorized scalarize over rows of U, shape (n, L) -> (n,)."""
    U = np.asarray(U, dtype=float)
    dev = np.abs(U - scal.ideal_point)
    vals = -(dev * scal.weights).max(axis=1) - scal.gamma * dev.sum(axis=1)
    infeasible = (U <= floor).any(axis=1)
    return np.where(infeasible, floor, vals)


def utility_ratio(
    candidate_utilities: np.ndarray,
    reference_best: float,
    scal: Scalarizer,
    floor: float = -1.0e12,
    shift: float = 0.0,
) -> float:
    """Fraction of the reference optimum captured by a candidate set.

    candidate_utilities is an (n, L) array of SHF utility vectors.
    reference_best must already carry the positivity shift; the same shift
    is subtracted from the candidates' scalarized values here. Infeasible
    candidates are ignored; an all-infeasible (or empty) set scores 0.
    """
    if reference_best <= 0.0:
        raise DegenerateReferenceError(
            f"reference_best must be positive, got {reference_best}"
        )
    candidate_utilities = np.atleast_2d(np.asarray(candidate_utilities, dtype=float))
    if candidate_utilities.size == 0:
        return 0.0
    vals = scalarize_matrix(candidate_utilities, scal, floor)
    feasible = vals > floor
    if not feasible.any():
        return 0.0
    best = float(vals[feasible].max()) - shift
    return float(np.clip(best / reference_best, 0.0, 1.0))
