"""Per-round query construction: dense frontier sampling then sparsification.

Each round draws preference/bound samples from the posteriors, runs a batch
of optimistic acquisition steps against the true objectives, and compresses
the accumulated evaluations into a small query set via robust submodular
partial cover, so the displayed points stay valuable under every plausible
preference draw.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .config import QueryConfig, RunConfig
from .errors import InvalidArgumentError
from .gp import SurrogateState, ucb_matrix
from .preferences import BoundsPosterior, PreferenceState, sample_preferences
from .problems import ObjectiveProblem
from .shf import (
    Scalarizer,
    SHFParams,
    SoftHardBounds,
    default_ideal_point,
    scalarize_matrix,
    shf_matrix,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Evaluation:
    """One true objective evaluation."""

    x: np.ndarray
    y_raw: np.ndarray
    y_norm: np.ndarray
    t: int


@dataclass
class DenseSet:
    """Accumulated true evaluations available for sparsification."""

    entries: list[Evaluation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)

    def inputs(self) -> np.ndarray:
        return np.array([e.x for e in self.entries])

    def objectives(self) -> np.ndarray:
        return np.array([e.y_norm for e in self.entries])


@dataclass(frozen=True)
class QueryPoint:
    x: np.ndarray
    y_raw: np.ndarray
    y_norm: np.ndarray
    tag: str = "dense"  # or "tmosh_adjacent"
    perturbed_dimension: int = -1
    epsilon: float = 0.0

    def to_dict(self) -> dict:
        return {
            "x": self.x.tolist(),
            "y_raw": self.y_raw.tolist(),
            "y_norm": self.y_norm.tolist(),
            "tag": self.tag,
            "perturbed_dimension": self.perturbed_dimension,
            "epsilon": self.epsilon,
        }


@dataclass
class QuerySet:
    points: list[QueryPoint]
    round_index: int

    def __len__(self) -> int:
        return len(self.points)

    def values(self) -> np.ndarray:
        """Normalized objective vectors, shape (K, L)."""
        return np.array([p.y_norm for p in self.points])

    def to_dict(self) -> dict:
        return {"round": self.round_index, "points": [p.to_dict() for p in self.points]}


def acq_maximize(
    acq,
    box: np.ndarray,
    rng: np.random.Generator,
    n_candidates: int = 512,
    n_refiners: int = 8,
    refine_steps: int = 20,
    floor: float = -1.0e12,
    violation=None,
) -> np.ndarray:
    """Maximize a batch-callable acquisition over the input box.

    Scores a scrambled-Sobol candidate set, then runs coordinate-wise
    step-halving refinements from the top candidates. Ties keep the
    lowest-index candidate. If every candidate sits at the utility floor,
    falls back to the candidate with the smallest bound-violation magnitude
    (when a violation callable is supplied).
    """
    box = np.asarray(box, dtype=float)
    d = box.shape[0]
    lo, hi = box[:, 0], box[:, 1]
    sampler = qmc.Sobol(d=d, scramble=True, seed=rng)
    X = lo + sampler.random_base2(m=int(math.ceil(math.log2(n_candidates)))) * (hi - lo)
    X = X[:n_candidates]
    vals = np.asarray(acq(X), dtype=float)
    if vals.max() <= floor:
        if violation is not None:
            return X[int(np.argmin(np.asarray(violation(X))))].copy()
        return X[0].copy()

    best_idx = int(np.argmax(vals))
    best_x = X[best_idx].copy()
    best_val = vals[best_idx]
    top = np.argsort(-vals, kind="stable")[:n_refiners]
    for origin in top:
        x = X[origin].copy()
        val = vals[origin]
        step = 0.25 * (hi - lo)
        for _ in range(refine_steps):
            probes = np.repeat(x[None, :], 2 * d, axis=0)
            for j in range(d):
                probes[2 * j, j] = min(x[j] + step[j], hi[j])
                probes[2 * j + 1, j] = max(x[j] - step[j], lo[j])
            pvals = np.asarray(acq(probes), dtype=float)
            k = int(np.argmax(pvals))
            if pvals[k] > val:
                x = probes[k]
                val = pvals[k]
            step = step * 0.5
        if val > best_val:
            best_val = val
            best_x = x.copy()
    return best_x


def make_acquisition(
    surrogate: SurrogateState,
    weights: np.ndarray,
    bounds: SoftHardBounds,
    t: int,
    params: SHFParams,
    gamma: float,
):
    """Acquisition closure: scalarized SHF utility of the optimistic objectives."""
    scal = Scalarizer(
        weights=weights,
        ideal_point=default_ideal_point(len(weights), params),
        gamma=gamma,
    )

    def acq(X: np.ndarray) -> np.ndarray:
        opt = ucb_matrix(surrogate, X, t)
        return scalarize_matrix(shf_matrix(opt, bounds, params), scal, params.utility_floor)

    def violation(X: np.ndarray) -> np.ndarray:
        opt = ucb_matrix(surrogate, X, t)
        return np.maximum(bounds.hard - opt, 0.0).sum(axis=1)

    return acq, violation


def dense_sample(
    problem: ObjectiveProblem,
    surrogate: SurrogateState,
    pref_state: PreferenceState,
    bounds_post: BoundsPosterior,
    T: int,
    seed,
    cfg: RunConfig,
) -> list[Evaluation]:
    """Run T acquisition steps, each under a fresh posterior draw.

    Every step samples (weights, bounds), maximizes the optimistic scalarized
    utility, evaluates the true objectives at the argmax, and refits the
    surrogates. The step index continues from the surrogate's observation
    count so exploration pressure keeps growing across rounds.
    """
    if T < 1:
        raise InvalidArgumentError(f"T must be >= 1, got {T}")
    params = SHFParams(cfg.shf.beta, cfg.shf.zeta, cfg.shf.utility_floor)
    out: list[Evaluation] = []
    for i in range(T):
        t = len(surrogate) + 1
        rng = np.random.default_rng([seed, t, 11])
        weights, bounds = sample_preferences(pref_state, bounds_post, rng, cfg.bounds.min_gap)
        acq, violation = make_acquisition(
            surrogate, weights, bounds, t, params, cfg.shf.chebyshev_gamma
        )
        x = acq_maximize(
            acq,
            problem.input_box,
            rng,
            n_candidates=cfg.query.acq_candidates,
            n_refiners=cfg.query.acq_refiners,
            refine_steps=cfg.query.acq_refine_steps,
            floor=params.utility_floor,
            violation=violation,
        )
        try:
            y_raw = problem.evaluate(x)
        except Exception:  # noqa: BLE001 - objective failures skip the step
            logger.exception("objective evaluation failed at step %d; skipping", t)
            continue
        y_norm = problem.normalize(y_raw)
        surrogate.add(x, y_norm, refit=True)
        out.append(Evaluation(x=x, y_raw=y_raw, y_norm=y_norm, t=t))
    return out


def submodular_value(
    candidate_objectives: np.ndarray,
    weights: np.ndarray,
    bounds: SoftHardBounds,
    reference_objectives: np.ndarray,
    params: SHFParams | None = None,
    gamma: float = 0.05,
) -> float:
    """Coverage value F of a candidate subset against the full dense set.

    The positivity shift is the worst feasible scalarized value over the
    reference set; the denominator is the shifted reference optimum. Empty
    or all-infeasible candidate sets score 0; the full reference scores 1.
    """
    params = params or SHFParams()
    W = _weight_row(np.atleast_2d(reference_objectives), weights, bounds, params, gamma)
    if W is None:
        return 0.0
    candidate_objectives = np.atleast_2d(np.asarray(candidate_objectives, dtype=float))
    if candidate_objectives.size == 0:
        return 0.0
    # score candidates on the same shifted scale
    scal = Scalarizer(
        weights=np.asarray(weights, dtype=float),
        ideal_point=default_ideal_point(candidate_objectives.shape[1], params),
        gamma=gamma,
    )
    ref_vals = scalarize_matrix(
        shf_matrix(np.atleast_2d(reference_objectives), bounds, params), scal, params.utility_floor
    )
    feas_ref = ref_vals > params.utility_floor
    shift = ref_vals[feas_ref].min()
    denom = ref_vals[feas_ref].max() - shift
    cand_vals = scalarize_matrix(
        shf_matrix(candidate_objectives, bounds, params), scal, params.utility_floor
    )
    feas = cand_vals > params.utility_floor
    if not feas.any():
        return 0.0
    if denom <= 0.0:
        return 1.0  # every feasible point already attains the degenerate optimum
    return float(np.clip((cand_vals[feas].max() - shift) / denom, 0.0, 1.0))


def _weight_row(
    reference_objectives: np.ndarray,
    weights: np.ndarray,
    bounds: SoftHardBounds,
    params: SHFParams,
    gamma: float,
) -> np.ndarray | None:
    """Per-point shifted coverage weights for one preference draw, or None if degenerate."""
    scal = Scalarizer(
        weights=np.asarray(weights, dtype=float),
        ideal_point=default_ideal_point(reference_objectives.shape[1], params),
        gamma=gamma,
    )
    vals = scalarize_matrix(
        shf_matrix(reference_objectives, bounds, params), scal, params.utility_floor
    )
    feasible = vals > params.utility_floor
    if not feasible.any():
        return None
    shift = vals[feasible].min()
    denom = vals[feasible].max() - shift
    if denom <= 0.0:
        return np.where(feasible, 1.0, 0.0)
    w = np.clip((vals - shift) / denom, 0.0, 1.0)
    return np.where(feasible, w, 0.0)


def lambda_weight_matrix(
    dense_objectives: np.ndarray,
    lambda_draws: np.ndarray,
    bounds: SoftHardBounds,
    params: SHFParams,
    gamma: float,
) -> np.ndarray:
    """Stack coverage-weight rows for each preference draw, dropping degenerate ones."""
    rows = []
    for lam in np.atleast_2d(lambda_draws):
        row = _weight_row(np.atleast_2d(dense_objectives), lam, bounds, params, gamma)
        if row is not None:
            rows.append(row)
    return np.array(rows) if rows else np.empty((0, np.atleast_2d(dense_objectives).shape[0]))


def gpc_cover(W: np.ndarray, q: float, tol: float = 1e-12) -> list[int]:
    """Greedy partial cover of the truncated average objective up to level q."""
    m, n = W.shape
    chosen: list[int] = []
    cur = np.zeros(m)
    available = np.ones(n, dtype=bool)
    current_val = 0.0
    while current_val < q - tol and available.any():
        cand_vals = np.minimum(np.maximum(cur[:, None], W[:, available]), q).mean(axis=0)
        local = int(np.argmax(cand_vals))
        gain = cand_vals[local] - current_val
        if gain <= tol:
            break
        idx = int(np.flatnonzero(available)[local])
        chosen.append(idx)
        available[idx] = False
        cur = np.maximum(cur, W[:, idx])
        current_val = float(np.minimum(cur, q).mean())
    return chosen


def sparsify_indices(
    W: np.ndarray, k: int, gap: float | None = None
) -> tuple[list[int], float]:
    """Bisection over the saturation level, returning the best accepted cover.

    Covers larger than psi * k reject the probed level. gap defaults to
    1e-6 / m; the classic 1/m gap can be passed explicitly.
    """
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    m, n = W.shape
    if n == 0 or m == 0:
        return [], 1.0
    if k >= n:
        return list(range(n)), _psi(W)
    psi = _psi(W)
    cap = psi * k
    if gap is None:
        gap = 1e-6 / m
    q_min = 0.0
    q_max = float(W.max(axis=1).min())  # every F_i(D) is its row maximum
    best: list[int] = []
    while q_max - q_min >= gap:
        q = 0.5 * (q_min + q_max)
        cover = gpc_cover(W, q)
        if len(cover) > cap:
            q_max = q
        else:
            q_min = q
            best = cover
    if not best:
        # degenerate range (e.g. all-zero weights): fall back to the top-k columns
        order = np.argsort(-W.mean(axis=0), kind="stable")
        best = [int(i) for i in order[: min(k, n)]]
    return best, psi


def _psi(W: np.ndarray) -> float:
    col_sums = W.sum(axis=0)
    top = float(col_sums.max()) if col_sums.size else 0.0
    if top <= 0.0:
        return 1.0
    return 1.0 + math.log(top)


def dedupe_indices(X: np.ndarray, tol: float = 1e-9) -> list[int]:
    """Indices of first occurrences, treating rows within tol as duplicates."""
    kept: list[int] = []
    for i, x in enumerate(X):
        if all(np.max(np.abs(x - X[j])) > tol for j in kept):
            kept.append(i)
    return kept


def sparsify(
    dense: DenseSet,
    lambda_draws: np.ndarray,
    bounds: SoftHardBounds,
    k: int,
    params: SHFParams,
    gamma: float,
    duplicate_tol: float = 1e-9,
    gap: float | None = None,
    round_index: int = 0,
) -> QuerySet:
    """Compress the dense set into at most psi * k display points."""
    if len(dense) == 0:
        raise InvalidArgumentError("cannot sparsify an empty dense set")
    X = dense.inputs()
    keep = dedupe_indices(X, duplicate_tol)
    objs = dense.objectives()[keep]
    W = lambda_weight_matrix(objs, lambda_draws, bounds, params, gamma)
    if W.shape[0] == 0:
        # no preference draw sees a feasible point; show the first k unique entries
        chosen_local = list(range(min(k, len(keep))))
    else:
        chosen_local, _ = sparsify_indices(W, k, gap)
    points = []
    for local in chosen_local:
        e = dense.entries[keep[local]]
        points.append(QueryPoint(x=e.x, y_raw=e.y_raw, y_norm=e.y_norm, tag="dense"))
    return QuerySet(points=points, round_index=round_index)


def build_query(
    problem: ObjectiveProblem,
    surrogate: SurrogateState,
    pref_state: PreferenceState,
    bounds_post: BoundsPosterior,
    dense: DenseSet,
    cfg: RunConfig,
    round_index: int,
    seed,
) -> tuple[QuerySet, list[Evaluation], "ActivityReport | None"]:
    """One full query round: dense sampling, sparsification, adjacent points.

    Returns the query set, every new true evaluation made this round (dense
    acquisition steps and any sensitivity-analysis candidates), and the
    sensitivity activity report when it ran.
    """
    params = SHFParams(cfg.shf.beta, cfg.shf.zeta, cfg.shf.utility_floor)
    new_evals = dense_sample(
        problem, surrogate, pref_state, bounds_post,
        cfg.query.dense_iterations, [seed, round_index], cfg,
    )
    dense.entries.extend(new_evals)
    rng = np.random.default_rng([seed, round_index, 23])
    m = cfg.query.lambda_samples
    idx = rng.choice(len(pref_state.weights), size=m, p=pref_state.weights)
    lambda_draws = pref_state.particles[idx]
    _, alpha = sample_preferences(pref_state, bounds_post, rng, cfg.bounds.min_gap)
    query = sparsify(
        dense,
        lambda_draws,
        alpha,
        cfg.query.display_budget,
        params,
        cfg.shf.chebyshev_gamma,
        cfg.query.duplicate_tol,
        gap=cfg.query.saturate_gap / m,
        round_index=round_index,
    )
    activity = None
    if cfg.sensitivity.enabled and len(surrogate) > 0:
        from .sensitivity import tmosh_adjacent_points

        adjacent, adj_evals, activity = tmosh_adjacent_points(
            problem, surrogate, bounds_post.mean_bounds(), dense, cfg, [seed, round_index, 31]
        )
        for e in adj_evals:
            surrogate.add(e.x, e.y_norm, refit=False)
        if adj_evals:
            surrogate.refit()
            dense.entries.extend(adj_evals)
        new_evals = new_evals + adj_evals
        for pt in adjacent:
            if len(query.points) and any(
                np.max(np.abs(pt.x - p.x)) <= cfg.query.duplicate_tol for p in query.points
            ):
                continue
            query.points.append(pt)
    return query, new_evals, activity
