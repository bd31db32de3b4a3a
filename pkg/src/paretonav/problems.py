"""Multi-objective benchmark problems and the hidden ground-truth decision-maker.

All problems follow a maximization convention: published minimization
objectives are negated. Objective vectors are normalized per dimension to
[0, 1] using frozen output ranges so every run shares the same scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.stats import qmc

from .errors import InvalidArgumentError, UnknownProblemError
from .shf import (
    Scalarizer,
    SHFParams,
    SoftHardBounds,
    default_ideal_point,
    scalarize_matrix,
    shf_matrix,
)

# Frozen output ranges for Branin-Currin (maximization convention), estimated
# once from a 10,000-point Sobol scan of the unit box padded by 1% of the span
# on each side; see scripts/estimate_output_ranges.py. Frozen so that every
# run normalizes identically.
_BRANIN_CURRIN_RANGE = np.array(
    [
        [-311.2063513962939, 2.67369784180738],
        [-13.924142332183047, -1.1213520582455898],
    ]
)


@dataclass(frozen=True)
class ObjectiveProblem:
    """An immutable multi-objective black-box problem.

    evaluate_batch maps an (n, d) array of inputs inside input_box to an
    (n, L) array of raw objective values (maximization convention).
    output_range holds the frozen per-objective [min, max] used to
    normalize raw values into [0, 1].
    """

    name: str
    input_dim: int
    num_objectives: int
    input_box: np.ndarray  # (d, 2) columns [lo, hi]
    output_range: np.ndarray  # (L, 2) columns [min, max]
    evaluate_batch: Callable[[np.ndarray], np.ndarray]

    def evaluate(self, x: np.ndarray) -> np.ndarray:
        """Raw objective vector (maximization convention) at one point."""
        x = np.asarray(x, dtype=float)
        return self.evaluate_batch(x[None, :])[0]

    def normalize(self, y: np.ndarray) -> np.ndarray:
        """Map raw objective values into [0, 1] per dimension (clipped)."""
        y = np.asarray(y, dtype=float)
        lo = self.output_range[:, 0]
        hi = self.output_range[:, 1]
        return np.clip((y - lo) / (hi - lo), 0.0, 1.0)

    def evaluate_normalized(self, x: np.ndarray) -> np.ndarray:
        return self.normalize(self.evaluate(x))

    def evaluate_normalized_batch(self, X: np.ndarray) -> np.ndarray:
        return self.normalize(self.evaluate_batch(np.asarray(X, dtype=float)))


def _branin_raw(X: np.ndarray) -> np.ndarray:
    """Classic Branin on its native box, X given in [0,1]^2."""
    x1 = 15.0 * X[:, 0] - 5.0
    x2 = 15.0 * X[:, 1]
    a = 1.0
    b = 5.1 / (4.0 * math.pi**2)
    c = 5.0 / math.pi
    r = 6.0
    s = 10.0
    t = 1.0 / (8.0 * math.pi)
    return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1.0 - t) * np.cos(x1) + s


def _currin_raw(X: np.ndarray) -> np.ndarray:
    """Currin exponential function on [0,1]^2."""
    x1 = X[:, 0]
    x2 = X[:, 1]
    with np.errstate(divide="ignore"):
        factor = 1.0 - np.exp(-1.0 / (2.0 * x2))
    factor = np.where(x2 == 0.0, 1.0, factor)
    num = 2300.0 * x1**3 + 1900.0 * x1**2 + 2092.0 * x1 + 60.0
    den = 100.0 * x1**3 + 500.0 * x1**2 + 4.0 * x1 + 20.0
    return factor * num / den


def branin_currin() -> ObjectiveProblem:
    """Two-objective Branin-Currin on [0,1]^2, both negated to maximization."""

    def batch(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.stack([-_branin_raw(X), -_currin_raw(X)], axis=1)

    return ObjectiveProblem(
        name="branin_currin",
        input_dim=2,
        num_objectives=2,
        input_box=np.array([[0.0, 1.0], [0.0, 1.0]]),
        output_range=_BRANIN_CURRIN_RANGE.copy(),
        evaluate_batch=batch,
    )


def dtlz2(num_objectives: int) -> ObjectiveProblem:
    """DTLZ2 with d = L + 1 inputs, negated to maximization.

    The published minimization problem has its Pareto frontier on the unit
    hypersphere (g = 0). With two tail variables the raw objectives lie in
    [0, 1.5], giving an exact normalization range of [-1.5, 0] after
    negation.
    """
    if num_objectives < 2:
        raise InvalidArgumentError(f"dtlz2 needs at least 2 objectives, got {num_objectives}")
    L = num_objectives
    d = L + 1

    def batch(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        g = ((X[:, L - 1 :] - 0.5) ** 2).sum(axis=1)
        theta = X[:, : L - 1] * (math.pi / 2.0)
        f = np.empty((X.shape[0], L))
        for i in range(L):
            val = 1.0 + g
            for j in range(L - 1 - i):
                val = val * np.cos(theta[:, j])
            if i > 0:
                val = val * np.sin(theta[:, L - 1 - i])
            f[:, i] = val
        return -f

    k_tail = d - L + 1
    hi_raw = 1.0 + 0.25 * k_tail
    out_range = np.tile([-hi_raw, 0.0], (L, 1))
    return ObjectiveProblem(
        name=f"dtlz2_{L}",
        input_dim=d,
        num_objectives=L,
        input_box=np.tile([0.0, 1.0], (d, 1)),
        output_range=out_range,
        evaluate_batch=batch,
    )


def four_bar_truss() -> ObjectiveProblem:
    """Four bar truss design: structural volume and joint displacement.

    Four member-area variables; both objectives are monotone per variable,
    so exact output ranges follow from the box corners.
    """
    F = 10.0
    sigma = 10.0
    E = 2.0e5
    L_len = 200.0
    a = F / sigma
    lo = np.array([a, math.sqrt(2.0) * a, math.sqrt(2.0) * a, a])
    hi = np.array([3.0 * a, 3.0 * a, 3.0 * a, 3.0 * a])

    def raw(X: np.ndarray) -> np.ndarray:
        x1, x2, x3, x4 = X[:, 0], X[:, 1], X[:, 2], X[:, 3]
        f1 = L_len * (2.0 * x1 + math.sqrt(2.0) * x2 + np.sqrt(x3) + x4)
        f2 = (F * L_len / E) * (
            2.0 / x1 + 2.0 * math.sqrt(2.0) / x2 - 2.0 * math.sqrt(2.0) / x3 + 2.0 / x4
        )
        return np.stack([f1, f2], axis=1)

    def batch(X: np.ndarray) -> np.ndarray:
        return -raw(np.asarray(X, dtype=float))

    # volume rises with every area; displacement falls with x1, x2, x4 and
    # rises with x3 -- extremes sit at the corresponding box corners
    f_at = lambda x: raw(np.asarray(x, dtype=float)[None, :])[0]
    vol_min, vol_max = f_at(lo)[0], f_at(hi)[0]
    disp_max = f_at([lo[0], lo[1], hi[2], lo[3]])[1]
    disp_min = f_at([hi[0], hi[1], lo[2], hi[3]])[1]
    out_range = np.array([[-vol_max, -vol_min], [-disp_max, -disp_min]])
    return ObjectiveProblem(
        name="four_bar_truss",
        input_dim=4,
        num_objectives=2,
        input_box=np.stack([lo, hi], axis=1),
        output_range=out_range,
        evaluate_batch=batch,
    )


def get_problem(name: str) -> ObjectiveProblem:
    """Benchmark registry addressable by string name."""
    if name == "branin_currin":
        return branin_currin()
    if name == "four_bar_truss":
        return four_bar_truss()
    if name.startswith("dtlz2_"):
        try:
            L = int(name.split("_")[-1])
        except ValueError:
            raise UnknownProblemError(f"malformed dtlz2 name: {name!r}") from None
        return dtlz2(L)
    if name == "brachytherapy":
        raise UnknownProblemError(
            "the brachytherapy case needs clinical DICOM data and an external "
            "epsilon-constraint solver; it is not available in this package"
        )
    raise UnknownProblemError(
        f"unknown problem {name!r}; available: branin_currin, dtlz2_<L>, four_bar_truss"
    )


_GRID_CACHE: dict[tuple[str, int], tuple[np.ndarray, np.ndarray]] = {}


def reference_grid(problem: ObjectiveProblem, grid_pow: int = 12) -> tuple[np.ndarray, np.ndarray]:
    """Fixed Sobol scan of the input box: (inputs (n, d), normalized objectives (n, L)).

    Unscrambled Sobol, so the grid is identical across runs and processes.
    """
    key = (problem.name, grid_pow)
    if key not in _GRID_CACHE:
        sampler = qmc.Sobol(d=problem.input_dim, scramble=False)
        unit = sampler.random_base2(m=grid_pow)
        lo = problem.input_box[:, 0]
        hi = problem.input_box[:, 1]
        X = lo + unit * (hi - lo)
        Y = problem.evaluate_normalized_batch(X)
        _GRID_CACHE[key] = (X, Y)
    return _GRID_CACHE[key]


class GridReference:
    """Scalarization statistics over the reference grid for fixed (weights, bounds).

    Precomputes the positivity shift (the worst feasible scalarized value on
    the grid) and the shifted optimum used as the utility-ratio denominator.
    """

    def __init__(
        self,
        problem: ObjectiveProblem,
        weights: np.ndarray,
        bounds: SoftHardBounds,
        params: SHFParams,
        gamma: float = 0.05,
        grid_pow: int = 12,
    ):
        self.problem = problem
        self.bounds = bounds
        self.params = params
        self.scalarizer = Scalarizer(
            weights=np.asarray(weights, dtype=float),
            ideal_point=default_ideal_point(problem.num_objectives, params),
            gamma=gamma,
        )
        X, Y = reference_grid(problem, grid_pow)
        utils = shf_matrix(Y, bounds, params)
        vals = scalarize_matrix(utils, self.scalarizer, params.utility_floor)
        feasible = vals > params.utility_floor
        self.num_feasible = int(feasible.sum())
        if self.num_feasible == 0:
            self.shift = 0.0
            self.reference_best = 0.0
            self.best_index = -1
        else:
            self.shift = float(vals[feasible].min())
            self.reference_best = float(vals[feasible].max()) - self.shift
            best = np.where(feasible, vals, -np.inf)
            self.best_index = int(np.argmax(best))
        self.grid_inputs = X
        self.grid_objectives = Y

    @property
    def usable(self) -> bool:
        return self.reference_best > 0.0

    def best_point(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid input and normalized objective vector attaining the optimum."""
        return self.grid_inputs[self.best_index], self.grid_objectives[self.best_index]

    def ratio_of_objectives(self, Y_norm: np.ndarray) -> float:
        """Utility ratio of a set of normalized objective vectors."""
        from .shf import utility_ratio

        Y_norm = np.atleast_2d(np.asarray(Y_norm, dtype=float))
        if Y_norm.size == 0:
            return 0.0
        utils = shf_matrix(Y_norm, self.bounds, self.params)
        return utility_ratio(
            utils,
            self.reference_best,
            self.scalarizer,
            floor=self.params.utility_floor,
            shift=self.shift,
        )


@dataclass(frozen=True)
class GroundTruthDM:
    """Hidden preferences of a simulated decision-maker.

    y_star is the normalized objective vector of the implied ideal point:
    the grid maximizer of the scalarized soft-hard utility under
    (lambda_star, alpha_star).
    """

    lambda_star: np.ndarray
    alpha_star_soft: np.ndarray
    alpha_star_hard: np.ndarray
    y_star: np.ndarray
    feedback_noise_sigma: float

    def bounds(self) -> SoftHardBounds:
        return SoftHardBounds(soft=self.alpha_star_soft, hard=self.alpha_star_hard)


def sample_ground_truth(
    problem: ObjectiveProblem,
    seed: int,
    params: SHFParams | None = None,
    gamma: float = 0.05,
    noise_sigma: float = 0.05,
    grid_pow: int = 12,
    max_attempts: int = 100,
) -> GroundTruthDM:
    """Draw a hidden decision-maker consistent with the problem's frontier.

    Hard bounds are uniform on [0, 0.95]; soft bounds uniform on
    [min(hard + 0.5, 1), 1], which keeps the utility saturation point above
    the normalized objective range so no two distinct points tie at the
    ceiling. Preference weights come from per-dimension normal draws
    centered on the soft bounds, L1-normalized. Draws whose bounds leave
    the reference grid without a usable feasible region are rejected and
    resampled, so the implied ideal point always exists.
    """
    params = params or SHFParams()
    L = problem.num_objectives
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        hard = rng.uniform(0.0, 0.95, size=L)
        soft_lo = np.minimum(hard + 0.5, 1.0)
        soft = rng.uniform(soft_lo, 1.0)
        u = rng.normal(loc=soft, scale=np.abs(hard - soft) / 3.0)
        u = np.maximum(u, 1e-6)
        lam = u / u.sum()
        bounds = SoftHardBounds(soft=soft, hard=hard)
        ref = GridReference(problem, lam, bounds, params, gamma=gamma, grid_pow=grid_pow)
        if ref.usable:
            _, y_star = ref.best_point()
            return GroundTruthDM(
                lambda_star=lam,
                alpha_star_soft=soft,
                alpha_star_hard=hard,
                y_star=y_star.copy(),
                feedback_noise_sigma=noise_sigma,
            )
    raise InvalidArgumentError(
        f"could not sample a feasible ground truth for {problem.name} "
        f"in {max_attempts} attempts (seed {seed})"
    )
