"""Simulated decision-makers, baseline query strategies, and experiment loops.

Feedback simulators implement the rule set for bound adjustments (driven by
the hidden ideal point) and noisy-utility choice feedback for pairwise and
ranking baselines. Interaction units price each mechanism's cognitive cost so
mechanisms compare on equal budgets.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .config import DmConfig, RunConfig
from .errors import BudgetExhaustedError, InvalidArgumentError
from .preferences import FeedbackEvent, PreferenceState
from .problems import GroundTruthDM, GridReference, ObjectiveProblem
from .query import QueryPoint, QuerySet
from .shf import (
    Scalarizer,
    SHFParams,
    SoftHardBounds,
    default_ideal_point,
    scalarize_matrix,
    shf_matrix,
)

MECHANISMS = ("active_mosh", "active_tmosh", "pairwise", "full_ranking", "partial_ranking", "random")
BOUND_MECHANISMS = ("active_mosh", "active_tmosh")
QUERYING_STRATEGIES = ("native", "info_gain", "random")
PARTIAL_RANK_LENGTH = 3


def validate_combination(mechanism: str, querying: str) -> None:
    if mechanism not in MECHANISMS:
        raise InvalidArgumentError(f"unknown mechanism {mechanism!r}")
    if querying not in QUERYING_STRATEGIES:
        raise InvalidArgumentError(f"unknown querying strategy {querying!r}")
    if mechanism in BOUND_MECHANISMS and querying == "info_gain":
        raise InvalidArgumentError(
            "information-gain querying requires choice feedback; "
            f"{mechanism} provides bound feedback"
        )
    if mechanism == "random" and querying != "random":
        raise InvalidArgumentError("the random baseline always uses random querying")


def event_cost(mechanism: str, query_size: int, uniform_units: bool) -> int:
    """Interaction units charged for one completed feedback action."""
    if uniform_units:
        return 1
    if mechanism in ("pairwise", "random"):
        return 1
    if mechanism in BOUND_MECHANISMS:
        return 2
    if mechanism == "full_ranking":
        return query_size
    if mechanism == "partial_ranking":
        return min(PARTIAL_RANK_LENGTH, query_size)
    raise InvalidArgumentError(f"unknown mechanism {mechanism!r}")


@dataclass
class InteractionBudget:
    """Running account of interaction units against a fixed total."""

    total_units: int = 10
    uniform_units: bool = False
    spent: int = 0

    @property
    def remaining(self) -> int:
        return self.total_units - self.spent

    def can_afford(self, cost: int) -> bool:
        return cost <= self.remaining

    def spend(self, cost: int) -> None:
        if not self.can_afford(cost):
            raise BudgetExhaustedError(
                f"cost {cost} exceeds remaining {self.remaining} of {self.total_units} units"
            )
        self.spent += cost


def simulate_bounds_feedback(
    query: QuerySet,
    truth: GroundTruthDM,
    soft_means: np.ndarray,
    hard_means: np.ndarray,
    cfg: DmConfig,
    rng: np.random.Generator,
    min_gap: float = 0.02,
) -> FeedbackEvent:
    """One bound adjustment by the simulated decision-maker.

    If the ideal point violates any current hard bound, the most-violated
    bound is relaxed toward it, referenced against the closest displayed
    point; otherwise the bound furthest below the ideal is tightened,
    referenced against the furthest point. When the chosen dimension's
    soft-hard gap is already small, the soft bound is fine-tuned instead.
    Magnitudes are step * N(|reference - ideal|, sigma) and never move the
    bound past the ideal coordinate; a helpful adjacent point boosts the
    magnitude by the configured confidence factor.
    """
    y_star = truth.y_star
    Y = query.values()
    noisy = Y + rng.normal(0.0, cfg.observation_noise, size=Y.shape)
    violations = hard_means - y_star
    if np.any(violations > 0):
        dim = int(np.argmax(violations))
        ref_idx = int(np.argmin(np.linalg.norm(noisy - y_star, axis=1)))
        tighten = False
    else:
        dim = int(np.argmax(y_star - hard_means))
        ref_idx = int(np.argmax(np.linalg.norm(noisy - y_star, axis=1)))
        tighten = True

    weight = rng.normal(abs(noisy[ref_idx, dim] - y_star[dim]), cfg.weight_std)
    weight = max(weight, 0.0)
    use_soft = (soft_means[dim] - hard_means[dim]) < cfg.proximity_threshold
    step = cfg.soft_step if use_soft else cfg.hard_step
    magnitude = step * weight
    if _helpful_adjacent_shown(query, y_star):
        magnitude *= 1.0 + cfg.confidence_boost

    if use_soft:
        old = soft_means[dim]
        if y_star[dim] >= old:
            new = min(old + magnitude, y_star[dim])
        else:
            new = max(old - magnitude, y_star[dim])
        new = float(np.clip(new, hard_means[dim] + min_gap, 1.0))
        kind = "soft_adjusted"
    else:
        old = hard_means[dim]
        if tighten:
            new = min(old + magnitude, y_star[dim])
            new = float(np.clip(new, 0.0, soft_means[dim] - min_gap))
            kind = "hard_tightened"
        else:
            new = max(old - magnitude, y_star[dim])
            new = float(np.clip(new, 0.0, soft_means[dim] - min_gap))
            kind = "hard_relaxed"
    if abs(new - old) < 1e-12:
        return FeedbackEvent(kind="no_change")
    return FeedbackEvent(kind=kind, dimension=dim, old_value=float(old), new_value=new)


def _helpful_adjacent_shown(query: QuerySet, y_star: np.ndarray) -> bool:
    """An adjacent point counts as helpful when it beats every dense point's distance to the ideal."""
    adj = [p for p in query.points if p.tag == "tmosh_adjacent"]
    dense = [p for p in query.points if p.tag != "tmosh_adjacent"]
    if not adj or not dense:
        return False
    adj_best = min(np.linalg.norm(p.y_norm - y_star) for p in adj)
    dense_best = min(np.linalg.norm(p.y_norm - y_star) for p in dense)
    return adj_best < dense_best


def simulate_choice_feedback(
    kind: str,
    query: QuerySet,
    truth: GroundTruthDM,
    rng: np.random.Generator,
    params: SHFParams | None = None,
    gamma: float = 0.05,
) -> FeedbackEvent:
    """Noisy-utility choice feedback: pairwise pick, full or partial ranking."""
    params = params or SHFParams()
    if kind not in ("pairwise_choice", "full_ranking", "partial_ranking"):
        raise InvalidArgumentError(f"not a choice feedback kind: {kind!r}")
    Y = query.values()
    K = Y.shape[0]
    if K < 2:
        raise InvalidArgumentError(f"choice feedback needs >= 2 points, got {K}")
    if kind == "pairwise_choice" and K != 2:
        raise InvalidArgumentError(f"pairwise feedback needs exactly 2 points, got {K}")
    scal = Scalarizer(
        weights=truth.lambda_star,
        ideal_point=default_ideal_point(Y.shape[1], params),
        gamma=gamma,
    )
    utils = scalarize_matrix(shf_matrix(Y, truth.bounds(), params), scal, params.utility_floor)
    noisy = utils + rng.normal(0.0, truth.feedback_noise_sigma, size=K)
    order = tuple(int(i) for i in np.argsort(-noisy, kind="stable"))
    if kind == "partial_ranking":
        order = order[: min(PARTIAL_RANK_LENGTH, K)]
    return FeedbackEvent(kind=kind, ranking=order)


@dataclass
class CandidatePool:
    """Pre-evaluated Sobol pool used by non-native querying strategies."""

    inputs: np.ndarray  # (n, d)
    raw: np.ndarray  # (n, L)
    values: np.ndarray  # (n, L) normalized

    def __len__(self) -> int:
        return len(self.inputs)

    def query_points(self, indices) -> list[QueryPoint]:
        return [
            QueryPoint(x=self.inputs[i], y_raw=self.raw[i], y_norm=self.values[i], tag="dense")
            for i in indices
        ]


def build_pool(problem: ObjectiveProblem, size: int, seed) -> CandidatePool:
    from scipy.stats import qmc

    rng = np.random.default_rng([*_seed_list(seed), 101])
    sampler = qmc.Sobol(d=problem.input_dim, scramble=True, seed=rng)
    m = int(np.ceil(np.log2(max(size, 2))))
    unit = sampler.random_base2(m=m)[:size]
    lo, hi = problem.input_box[:, 0], problem.input_box[:, 1]
    X = lo + unit * (hi - lo)
    raw = problem.evaluate_batch(X)
    return CandidatePool(inputs=X, raw=raw, values=problem.normalize(raw))


def _seed_list(seed) -> list[int]:
    return list(seed) if isinstance(seed, (list, tuple)) else [int(seed)]


def info_gain_query(
    pool_values: np.ndarray,
    state: PreferenceState,
    bounds: SoftHardBounds,
    kind: str,
    K: int,
    rng: np.random.Generator,
    params: SHFParams | None = None,
    gamma: float = 0.05,
    mi_particles: int = 128,
) -> list[int]:
    """Greedy mutual-information selection of K pool points.

    Outcome distributions come from the Plackett-Luce model per preference
    particle; the score is the entropy of the mixture outcome distribution
    minus the mean per-particle entropy. Single-point sets carry no
    information, so the first pick falls back to index order.
    """
    params = params or SHFParams()
    n = pool_values.shape[0]
    if n < K:
        raise InvalidArgumentError(f"pool of {n} cannot supply {K} points")
    m = min(mi_particles, len(state.weights))
    idx = rng.choice(len(state.weights), size=m, p=state.weights)
    particles = state.particles[idx]
    utils = shf_matrix(pool_values, bounds, params)
    ideal = default_ideal_point(pool_values.shape[1], params)
    dev = np.abs(utils - ideal)  # (n, L)
    infeasible = (utils <= params.utility_floor).any(axis=1)
    # scores per particle: (P, n)
    S = -np.max(dev[None, :, :] * particles[:, None, :], axis=2) - gamma * dev.sum(axis=1)[None, :]
    S = np.where(infeasible[None, :], params.utility_floor, S)

    selected: list[int] = []
    for _ in range(K):
        best_idx, best_mi = -1, -1.0
        for c in range(n):
            if c in selected:
                continue
            cand = selected + [c]
            mi = 0.0 if len(cand) == 1 else _ranking_mutual_information(S[:, cand], kind)
            if mi > best_mi + 1e-15:
                best_mi, best_idx = mi, c
        selected.append(best_idx)
    return selected


def _ranking_mutual_information(scores: np.ndarray, kind: str) -> float:
    """MI between the feedback outcome and the preference particle index.

    scores has shape (P, s). Outcomes are full orderings for pairwise/full
    feedback and ordered top-3 prefixes for partial feedback.
    """
    P, s = scores.shape
    depth = s if kind != "partial_ranking" else min(PARTIAL_RANK_LENGTH, s)
    outcomes = list(itertools.permutations(range(s), depth))
    log_probs = np.zeros((P, len(outcomes)))
    for o, perm in enumerate(outcomes):
        remaining = np.ones(s, dtype=bool)
        for item in perm:
            pool = scores[:, remaining]
            log_probs[:, o] += scores[:, item] - logsumexp(pool, axis=1)
            remaining[item] = False
    probs = np.exp(log_probs)
    probs /= probs.sum(axis=1, keepdims=True)
    mixture = probs.mean(axis=0)
    h_mix = -(mixture * np.log(np.clip(mixture, 1e-300, None))).sum()
    h_each = -(probs * np.log(np.clip(probs, 1e-300, None))).sum(axis=1)
    return float(h_mix - h_each.mean())


def random_query(pool: CandidatePool, K: int, rng: np.random.Generator) -> list[int]:
    if len(pool) < K:
        raise InvalidArgumentError(f"pool of {len(pool)} cannot supply {K} points")
    return [int(i) for i in rng.choice(len(pool), size=K, replace=False)]


@dataclass
class SessionResult:
    """Per-seed outcome of one simulated session."""

    mechanism: str
    querying: str
    seed: int
    trace: list[tuple[int, float]]  # (interaction units spent, utility ratio)
    good_rounds: list[bool]  # per completed feedback round
    num_events: int
    log_records: list[dict] = field(default_factory=list)

    def final_ratio(self) -> float:
        return self.trace[-1][1] if self.trace else 0.0


def run_session(
    problem: ObjectiveProblem,
    mechanism: str,
    querying: str,
    cfg: RunConfig,
    seed: int,
) -> SessionResult:
    """One simulated decision-making session under a fixed unit budget."""
    from .session import SessionEngine

    validate_combination(mechanism, querying)
    truth = sample_truth_for(problem, cfg, seed)
    params = SHFParams(cfg.shf.beta, cfg.shf.zeta, cfg.shf.utility_floor)
    ref = GridReference(
        problem, truth.lambda_star, truth.bounds(), params,
        gamma=cfg.shf.chebyshev_gamma, grid_pow=cfg.reference_grid_pow,
    )
    engine = SessionEngine(problem, cfg, mechanism=mechanism, querying=querying, seed=seed)
    trace: list[tuple[int, float]] = []
    good_rounds: list[bool] = []
    good_cut = (1.0 - cfg.metrics.good_delta)
    while engine.status == "awaiting_feedback":
        query = engine.current_query
        rng = np.random.default_rng([seed, engine.round_index, 51])
        if mechanism in BOUND_MECHANISMS:
            event = simulate_bounds_feedback(
                query, truth,
                engine.bounds_posterior.soft_mean, engine.bounds_posterior.hard_mean,
                cfg.dm, rng, cfg.bounds.min_gap,
            )
        else:
            kind = "pairwise_choice" if mechanism in ("pairwise", "random") else (
                "full_ranking" if mechanism == "full_ranking" else "partial_ranking"
            )
            event = simulate_choice_feedback(
                kind, query, truth, rng, params, cfg.shf.chebyshev_gamma
            )
        engine.submit_feedback(event)
        observed = engine.observed_values()
        ratio = ref.ratio_of_objectives(observed) if len(observed) else 0.0
        trace.append((engine.budget.spent, ratio))
        good_rounds.append(
            bool(any(ref.ratio_of_objectives(y[None, :]) >= good_cut for y in observed))
        )
    return SessionResult(
        mechanism=mechanism,
        querying=querying,
        seed=seed,
        trace=trace,
        good_rounds=good_rounds,
        num_events=len(trace),
        log_records=engine.log_records,
    )


def sample_truth_for(problem: ObjectiveProblem, cfg: RunConfig, seed: int) -> GroundTruthDM:
    from .problems import sample_ground_truth

    params = SHFParams(cfg.shf.beta, cfg.shf.zeta, cfg.shf.utility_floor)
    return sample_ground_truth(
        problem, seed,
        params=params,
        gamma=cfg.shf.chebyshev_gamma,
        noise_sigma=cfg.dm.choice_noise,
        grid_pow=cfg.reference_grid_pow,
    )


def run_experiment(
    problem: ObjectiveProblem,
    mechanism: str,
    querying: str,
    cfg: RunConfig,
    seeds: list[int],
) -> list[SessionResult]:
    """Run one (mechanism, querying) cell across seeds."""
    validate_combination(mechanism, querying)
    return [run_session(problem, mechanism, querying, cfg, s) for s in seeds]
