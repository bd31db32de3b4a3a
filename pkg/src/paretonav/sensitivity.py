"""Sensitivity analysis: expected-improvement search under relaxed hard bounds.

For each perturbed objective, the hard bound is loosened by a small epsilon
and the surrogates are searched for points promising improvement in other
objectives. Survivors of a realized-value filter are shown to the
decision-maker as evidence of tradeoffs just beyond the current bounds, and
aggregate into a per-objective-pair activity matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .config import RunConfig
from .errors import InvalidArgumentError
from .gp import SurrogateState
from .problems import ObjectiveProblem
from .query import DenseSet, Evaluation, QueryPoint, acq_maximize, dedupe_indices
from .shf import SoftHardBounds


def expected_improvement(mean: float, std: float, incumbent: float) -> float:
    """Closed-form Gaussian expected improvement over an incumbent value."""
    if std < 0:
        raise InvalidArgumentError(f"std must be >= 0, got {std}")
    if std == 0.0:
        return max(mean - incumbent, 0.0)
    z = (mean - incumbent) / std
    return float(std * (z * norm.cdf(z) + norm.pdf(z)))


@dataclass(frozen=True)
class AdjacentCandidate:
    """A point that improves one objective once another's hard bound is relaxed."""

    x: np.ndarray
    predicted: np.ndarray
    realized: np.ndarray
    realized_raw: np.ndarray
    perturbed_dimension: int
    improved_dimension: int
    ei_value: float
    realized_improvement: float


def feasible_incumbents(
    evaluated_objectives: np.ndarray, bounds: SoftHardBounds
) -> np.ndarray:
    """Best realized value per objective among points meeting all hard bounds."""
    Y = np.atleast_2d(np.asarray(evaluated_objectives, dtype=float))
    L = bounds.num_objectives
    if Y.size == 0:
        return np.full(L, -np.inf)
    feasible = (Y >= bounds.hard).all(axis=1)
    if not feasible.any():
        return np.full(L, -np.inf)
    return Y[feasible].max(axis=0)


def find_adjacent(
    problem: ObjectiveProblem,
    surrogate: SurrogateState,
    bounds: SoftHardBounds,
    incumbents: np.ndarray,
    perturb_dim: int,
    epsilon: float,
    seed,
    restarts: int = 10,
    per_dim_cap: int = 2,
    refine_steps: int = 20,
    duplicate_tol: float = 1e-9,
) -> tuple[list[AdjacentCandidate], list[Evaluation]]:
    """Search for improvers of each other objective under a relaxed hard bound.

    Maximizes the constrained expected improvement from several restarts,
    keeps candidates with positive predicted improvement, evaluates the true
    objectives there, and filters on realized values: all unperturbed hard
    bounds met, the relaxed bound met, and a strict improvement over the
    incumbent. Returns the surviving candidates (capped per improvement
    dimension) plus every true evaluation performed.
    """
    L = problem.num_objectives
    if not 0 <= perturb_dim < L:
        raise InvalidArgumentError(f"perturb_dim {perturb_dim} out of range")
    if epsilon <= 0:
        raise InvalidArgumentError(f"epsilon must be > 0, got {epsilon}")
    relaxed_hard = bounds.hard.copy()
    relaxed_hard[perturb_dim] -= epsilon
    survivors: list[AdjacentCandidate] = []
    evaluations: list[Evaluation] = []
    for improve_dim in range(L):
        if improve_dim == perturb_dim:
            continue
        incumbent = incumbents[improve_dim]

        def constrained_ei(X: np.ndarray) -> np.ndarray:
            means, stds = surrogate.predict_batch(X)
            ok = (means >= relaxed_hard).all(axis=1)
            s = stds[:, improve_dim]
            safe = np.where(s > 0, s, 1.0)
            z = (means[:, improve_dim] - incumbent) / safe
            ei = np.where(
                s > 0,
                s * (z * norm.cdf(z) + norm.pdf(z)),
                np.maximum(means[:, improve_dim] - incumbent, 0.0),
            )
            return np.where(ok, ei, 0.0)

        rng = np.random.default_rng([*_as_seed(seed), perturb_dim, improve_dim])
        candidates = _multistart_maximize(
            constrained_ei, problem.input_box, rng, restarts, refine_steps
        )
        if not candidates:
            continue
        X_cand = np.array([c[0] for c in candidates])
        keep = dedupe_indices(X_cand, duplicate_tol)
        scored: list[AdjacentCandidate] = []
        for i in keep:
            x, ei = candidates[i]
            if ei <= 0.0:
                continue
            y_raw = problem.evaluate(x)
            y_norm = problem.normalize(y_raw)
            evaluations.append(Evaluation(x=x, y_raw=y_raw, y_norm=y_norm, t=len(surrogate)))
            unperturbed_ok = all(
                y_norm[j] >= bounds.hard[j] for j in range(L) if j != perturb_dim
            )
            relaxed_ok = y_norm[perturb_dim] >= relaxed_hard[perturb_dim]
            improvement = y_norm[improve_dim] - incumbent
            if unperturbed_ok and relaxed_ok and improvement > 0.0:
                means, _ = surrogate.predict_batch(x[None, :])
                scored.append(
                    AdjacentCandidate(
                        x=x,
                        predicted=means[0],
                        realized=y_norm,
                        realized_raw=y_raw,
                        perturbed_dimension=perturb_dim,
                        improved_dimension=improve_dim,
                        ei_value=float(ei),
                        realized_improvement=float(improvement),
                    )
                )
        scored.sort(key=lambda c: -c.realized_improvement)
        survivors.extend(scored[:per_dim_cap])
    return survivors, evaluations


def _as_seed(seed) -> list[int]:
    return list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]


def _multistart_maximize(fn, box, rng, restarts, refine_steps) -> list[tuple[np.ndarray, float]]:
    """Coordinate refinement from the top Sobol starts; returns (point, value) pairs."""
    from scipy.stats import qmc

    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]
    X = lo + qmc.Sobol(d=d, scramble=True, seed=rng).random_base2(m=9) * (hi - lo)
    vals = np.asarray(fn(X), dtype=float)
    top = np.argsort(-vals, kind="stable")[:restarts]
    out = []
    for origin in top:
        x = X[origin].copy()
        val = vals[origin]
        step = 0.25 * (hi - lo)
        for _ in range(refine_steps):
            probes = np.repeat(x[None, :], 2 * d, axis=0)
            for j in range(d):
                probes[2 * j, j] = min(x[j] + step[j], hi[j])
                probes[2 * j + 1, j] = max(x[j] - step[j], lo[j])
            pvals = np.asarray(fn(probes), dtype=float)
            k = int(np.argmax(pvals))
            if pvals[k] > val:
                x = probes[k]
                val = pvals[k]
            step = step * 0.5
        out.append((x, float(val)))
    return out


@dataclass
class ActivityReport:
    """Pairwise objective activity: does relaxing one bound free up another."""

    active: np.ndarray  # (L, L) bool, [perturbed, improved], diagonal undefined
    best_improvement: np.ndarray  # (L, L) float

    def to_dict(self) -> dict:
        return {
            "active": self.active.tolist(),
            "best_improvement": self.best_improvement.tolist(),
        }


def activity_report(candidates: list[AdjacentCandidate], num_objectives: int) -> ActivityReport:
    """Aggregate surviving candidates into the activity matrix."""
    active = np.zeros((num_objectives, num_objectives), dtype=bool)
    best = np.zeros((num_objectives, num_objectives))
    for c in candidates:
        i, j = c.perturbed_dimension, c.improved_dimension
        active[i, j] = True
        best[i, j] = max(best[i, j], c.realized_improvement)
    return ActivityReport(active=active, best_improvement=best)


def tmosh_adjacent_points(
    problem: ObjectiveProblem,
    surrogate: SurrogateState,
    bounds: SoftHardBounds,
    dense: DenseSet,
    cfg: RunConfig,
    seed,
) -> tuple[list[QueryPoint], list[Evaluation], ActivityReport]:
    """Adjacent points for the round's query: all perturbed dimensions, capped at 2L."""
    L = problem.num_objectives
    incumbents = feasible_incumbents(
        dense.objectives() if len(dense) else np.empty((0, L)), bounds
    )
    all_candidates: list[AdjacentCandidate] = []
    all_evals: list[Evaluation] = []
    for perturb_dim in range(L):
        cands, evals = find_adjacent(
            problem,
            surrogate,
            bounds,
            incumbents,
            perturb_dim,
            cfg.sensitivity.epsilon,
            seed,
            restarts=cfg.sensitivity.restarts,
            per_dim_cap=cfg.sensitivity.per_dim_cap,
        )
        all_candidates.extend(cands)
        all_evals.extend(evals)
    all_candidates.sort(key=lambda c: -c.realized_improvement)
    points = [
        QueryPoint(
            x=c.x,
            y_raw=c.realized_raw,
            y_norm=c.realized,
            tag="tmosh_adjacent",
            perturbed_dimension=c.perturbed_dimension,
            epsilon=cfg.sensitivity.epsilon,
        )
        for c in all_candidates[: 2 * L]
    ]
    return points, all_evals, activity_report(all_candidates, L)
