"""Posteriors over preference weights and soft/hard bounds.

Bound adjustments become implicit rankings over the displayed query points;
rankings feed a Plackett-Luce likelihood whose product with a flat Dirichlet
prior is sampled by Metropolis-Hastings. Bounds keep independent Gaussian
posteriors per dimension with conjugate mean updates.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .config import BoundsConfig, PreferenceConfig
from .errors import InvalidArgumentError
from .shf import (
    Scalarizer,
    SHFParams,
    SoftHardBounds,
    default_ideal_point,
    scalarize_matrix,
    shf_matrix,
)

logger = logging.getLogger(__name__)

BOUND_KINDS = ("hard_tightened", "hard_relaxed", "soft_adjusted")
RANKING_KINDS = ("pairwise_choice", "full_ranking", "partial_ranking")
ALL_KINDS = BOUND_KINDS + RANKING_KINDS + ("no_change",)


@dataclass(frozen=True)
class FeedbackEvent:
    """One decision-maker action: a single bound change, a ranking, or a pass."""

    kind: str
    dimension: int = -1
    old_value: float = float("nan")
    new_value: float = float("nan")
    ranking: tuple[int, ...] = ()
    interaction_units: int = 1

    def __post_init__(self):
        if self.kind not in ALL_KINDS:
            raise InvalidArgumentError(f"unknown feedback kind {self.kind!r}")
        if self.kind in BOUND_KINDS and self.dimension < 0:
            raise InvalidArgumentError(f"{self.kind} requires a dimension")

    @property
    def is_bound_kind(self) -> bool:
        return self.kind in BOUND_KINDS

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "old_value": self.old_value,
            "new_value": self.new_value,
            "ranking": list(self.ranking),
            "interaction_units": self.interaction_units,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeedbackEvent":
        return cls(
            kind=d["kind"],
            dimension=d.get("dimension", -1),
            old_value=d.get("old_value", float("nan")),
            new_value=d.get("new_value", float("nan")),
            ranking=tuple(d.get("ranking", ())),
            interaction_units=d.get("interaction_units", 1),
        )


def interpret_feedback(event: FeedbackEvent, query_values: np.ndarray) -> tuple[int, ...]:
    """Ranking over query points implied by a bound adjustment.

    query_values is the (K, L) array of normalized objective vectors shown
    this round. Hard-bound events put points satisfying the new bound first
    (closest to the bound leading, on-bound points ahead of equal-distance
    strict satisfiers), violators after by ascending violation. Soft events
    rank purely by distance to the new target. A no-change event yields an
    empty ranking: it signals a variance-shrink update instead.
    """
    Y = np.atleast_2d(np.asarray(query_values, dtype=float))
    if event.kind == "no_change":
        return ()
    if not event.is_bound_kind:
        raise InvalidArgumentError(f"cannot interpret '{event.kind}' as a bound adjustment")
    if not 0 <= event.dimension < Y.shape[1]:
        raise InvalidArgumentError(
            f"dimension {event.dimension} out of range for {Y.shape[1]} objectives"
        )
    col = Y[:, event.dimension]
    v = event.new_value
    if event.kind == "soft_adjusted":
        order = sorted(range(len(col)), key=lambda i: (abs(col[i] - v), i))
        return tuple(order)
    satisfying = [i for i in range(len(col)) if col[i] >= v]
    violating = [i for i in range(len(col)) if col[i] < v]
    satisfying.sort(key=lambda i: (abs(col[i] - v), 0 if col[i] == v else 1, i))
    violating.sort(key=lambda i: (v - col[i], i))
    return tuple(satisfying + violating)


def plackett_luce_likelihood(
    ranking: Sequence[int],
    query_values: np.ndarray,
    bounds: SoftHardBounds,
    weights: np.ndarray,
    params: SHFParams | None = None,
    gamma: float = 0.05,
) -> float:
    """Probability of a ranking under the Plackett-Luce choice model.

    Scores are scalarized soft-hard utilities of the ranked points; the
    product of per-stage softmax terms is computed in log space with
    max-subtraction, so infeasible (floor-utility) points contribute
    essentially zero mass at every stage they survive to.
    """
    params = params or SHFParams()
    ranking = tuple(ranking)
    if len(ranking) == 0:
        return 1.0
    Y = np.atleast_2d(np.asarray(query_values, dtype=float))
    utils = shf_matrix(Y, bounds, params)
    scal = Scalarizer(
        weights=np.asarray(weights, dtype=float),
        ideal_point=default_ideal_point(Y.shape[1], params),
        gamma=gamma,
    )
    scores = scalarize_matrix(utils, scal, params.utility_floor)
    return float(np.exp(_pl_log_prob(np.asarray(ranking), scores)))


def _pl_log_prob(ranking: np.ndarray, scores: np.ndarray) -> float:
    s = scores[ranking]
    total = 0.0
    for j in range(len(s)):
        total += s[j] - logsumexp(s[j:])
    return total


@dataclass(frozen=True)
class LikelihoodFactor:
    """One recorded feedback event, prepared for fast likelihood evaluation.

    Utilities are frozen at the bounds snapshot active when the feedback
    arrived; only the preference weights vary during posterior sampling.
    """

    query_values: np.ndarray  # (K, L) normalized objectives
    ranking: tuple[int, ...]
    bounds_snapshot: SoftHardBounds
    deviations: np.ndarray = field(init=False)  # |u - z*|, (K, L)
    aug_term: np.ndarray = field(init=False)  # gamma * sum dev, (K,)
    infeasible: np.ndarray = field(init=False)  # (K,)
    params: SHFParams = field(default_factory=SHFParams)
    gamma: float = 0.05

    def __post_init__(self):
        Y = np.atleast_2d(np.asarray(self.query_values, dtype=float))
        object.__setattr__(self, "query_values", Y)
        utils = shf_matrix(Y, self.bounds_snapshot, self.params)
        ideal = default_ideal_point(Y.shape[1], self.params)
        dev = np.abs(utils - ideal)
        object.__setattr__(self, "deviations", dev)
        object.__setattr__(self, "aug_term", self.gamma * dev.sum(axis=1))
        object.__setattr__(self, "infeasible", (utils <= self.params.utility_floor).any(axis=1))

    def log_likelihood(self, weights: np.ndarray) -> float:
        if len(self.ranking) == 0:
            return 0.0
        scores = -(self.deviations * weights).max(axis=1) - self.aug_term
        scores = np.where(self.infeasible, self.params.utility_floor, scores)
        return _pl_log_prob(np.asarray(self.ranking), scores)


@dataclass(frozen=True)
class PreferenceState:
    """Weighted particle approximation of the preference posterior."""

    particles: np.ndarray  # (N, L) simplex points
    weights: np.ndarray  # (N,) nonnegative, sum 1
    history: tuple[LikelihoodFactor, ...] = ()

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.particles, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        object.__setattr__(self, "particles", P)
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def num_objectives(self) -> int:
        return self.particles.shape[1]

    def mean(self) -> np.ndarray:
        return self.weights @ self.particles


def prior_preference_state(num_objectives: int, n_particles: int, rng: np.random.Generator) -> PreferenceState:
    particles = rng.dirichlet(np.ones(num_objectives), size=n_particles)
    return PreferenceState(particles=particles, weights=np.full(n_particles, 1.0 / n_particles))


def _log_dirichlet_pdf(x: np.ndarray, alpha: np.ndarray) -> float:
    x = np.clip(x, 1e-300, None)
    return float(((alpha - 1.0) * np.log(x)).sum() + gammaln(alpha.sum()) - gammaln(alpha).sum())


class _FactorBatch:
    """Same-shape likelihood factors stacked for one-shot evaluation.

    The chain evaluates the log posterior hundreds of times; stacking factors
    with equal (num points, ranking length) removes the per-factor Python
    overhead from that hot loop.
    """

    def __init__(self, factors: list[LikelihoodFactor]):
        self.dev = np.stack([f.deviations for f in factors])  # (F, K, L)
        self.aug = np.stack([f.aug_term for f in factors])  # (F, K)
        self.infeasible = np.stack([f.infeasible for f in factors])  # (F, K)
        self.ranks = np.stack([np.asarray(f.ranking) for f in factors])  # (F, R)
        self.floor = factors[0].params.utility_floor

    def log_likelihood(self, weights: np.ndarray) -> float:
        scores = -(self.dev * weights).max(axis=2) - self.aug
        scores = np.where(self.infeasible, self.floor, scores)
        ranked = np.take_along_axis(scores, self.ranks, axis=1)  # (F, R)
        tail = np.logaddexp.accumulate(ranked[:, ::-1], axis=1)[:, ::-1]
        return float((ranked - tail).sum())


def _batch_factors(history: tuple[LikelihoodFactor, ...]) -> list[_FactorBatch]:
    groups: dict[tuple[int, int], list[LikelihoodFactor]] = {}
    for f in history:
        if len(f.ranking) == 0:
            continue
        groups.setdefault((f.deviations.shape[0], len(f.ranking)), []).append(f)
    return [_FactorBatch(fs) for fs in groups.values()]


def update_lambda_posterior(
    state: PreferenceState,
    factor: Optional[LikelihoodFactor],
    cfg: PreferenceConfig,
    rng: np.random.Generator,
) -> PreferenceState:
    """Append a likelihood factor and refresh the particle set by MCMC.

    The chain targets prior x product of all ranking likelihoods, proposing
    from a Dirichlet centered at the current point. Burn-in is fixed; every
    post-burn-in state is retained as a particle. Deterministic for a given
    generator state.
    """
    history = state.history + (factor,) if factor is not None else state.history
    L = state.num_objectives
    n = cfg.particles
    batches = _batch_factors(history)
    if not batches:
        return prior_preference_state(L, n, rng)

    def log_post(lam: np.ndarray) -> float:
        return sum(b.log_likelihood(lam) for b in batches)  # flat prior adds a constant

    # start at the best current particle so the chain opens near the mode
    particle_lps = np.array([log_post(p) for p in state.particles])
    start = state.particles[int(np.argmax(particle_lps))]
    current = np.clip(start, 1e-4, None)
    current = current / current.sum()
    lp_current = log_post(current)
    if not np.isfinite(lp_current):
        logger.warning("preference posterior numerically vanished; falling back to the prior")
        return prior_preference_state(L, n, rng)

    conc = cfg.proposal_concentration
    draws = np.empty((n, L))
    for step in range(cfg.burn_in + n):
        alpha_fwd = conc * np.clip(current, 1e-4, None)
        proposal = rng.dirichlet(alpha_fwd)
        proposal = np.clip(proposal, 1e-12, None)
        proposal = proposal / proposal.sum()
        alpha_rev = conc * np.clip(proposal, 1e-4, None)
        lp_proposal = log_post(proposal)
        log_accept = (
            lp_proposal
            - lp_current
            + _log_dirichlet_pdf(current, alpha_rev)
            - _log_dirichlet_pdf(proposal, alpha_fwd)
        )
        if np.log(rng.uniform()) < log_accept:
            current, lp_current = proposal, lp_proposal
        if step >= cfg.burn_in:
            draws[step - cfg.burn_in] = current
    return PreferenceState(
        particles=draws, weights=np.full(n, 1.0 / n), history=history
    )


@dataclass(frozen=True)
class BoundsPosterior:
    """Independent Gaussian posteriors over each soft and hard bound."""

    soft_mean: np.ndarray
    hard_mean: np.ndarray
    soft_var: np.ndarray
    hard_var: np.ndarray

    def __post_init__(self):
        for name in ("soft_mean", "hard_mean", "soft_var", "hard_var"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if np.any(self.soft_var <= 0) or np.any(self.hard_var <= 0):
            raise InvalidArgumentError("bound variances must stay positive")
        if not np.all(self.hard_mean < self.soft_mean):
            raise InvalidArgumentError("hard means must stay below soft means")

    @property
    def num_objectives(self) -> int:
        return self.soft_mean.shape[0]

    def mean_bounds(self) -> SoftHardBounds:
        return SoftHardBounds(soft=self.soft_mean, hard=self.hard_mean)

    def to_dict(self) -> dict:
        return {
            "soft_mean": self.soft_mean.tolist(),
            "hard_mean": self.hard_mean.tolist(),
            "soft_var": self.soft_var.tolist(),
            "hard_var": self.hard_var.tolist(),
        }


def initial_bounds_posterior(
    soft: np.ndarray, hard: np.ndarray, cfg: BoundsConfig
) -> BoundsPosterior:
    soft = np.asarray(soft, dtype=float)
    hard = np.asarray(hard, dtype=float)
    L = soft.shape[0]
    return BoundsPosterior(
        soft_mean=soft,
        hard_mean=hard,
        soft_var=np.full(L, cfg.prior_var),
        hard_var=np.full(L, cfg.prior_var),
    )


def update_bounds_posterior(
    post: BoundsPosterior, event: FeedbackEvent, cfg: BoundsConfig
) -> BoundsPosterior:
    """Conjugate Gaussian update from a bound event; shrink on no-change.

    The stated new value acts as a Gaussian observation of the modified
    bound with fixed observation variance. No-change multiplies every
    variance by the shrink factor. Means are projected afterwards so hard
    stays below soft by at least the configured gap.
    """
    if event.kind == "no_change":
        return replace(
            post,
            soft_var=post.soft_var * cfg.no_change_shrink,
            hard_var=post.hard_var * cfg.no_change_shrink,
        )
    if not event.is_bound_kind:
        raise InvalidArgumentError(f"cannot update bounds from '{event.kind}'")
    d = event.dimension
    soft_mean = post.soft_mean.copy()
    hard_mean = post.hard_mean.copy()
    soft_var = post.soft_var.copy()
    hard_var = post.hard_var.copy()
    if event.kind == "soft_adjusted":
        mean, var = _gaussian_update(soft_mean[d], soft_var[d], event.new_value, cfg.observation_var)
        soft_mean[d] = np.clip(mean, hard_mean[d] + cfg.min_gap, 1.0)
        soft_var[d] = var
    else:
        mean, var = _gaussian_update(hard_mean[d], hard_var[d], event.new_value, cfg.observation_var)
        hard_mean[d] = np.clip(mean, 0.0, soft_mean[d] - cfg.min_gap)
        hard_var[d] = var
    return BoundsPosterior(
        soft_mean=soft_mean, hard_mean=hard_mean, soft_var=soft_var, hard_var=hard_var
    )


def _gaussian_update(mu: float, var: float, obs: float, obs_var: float) -> tuple[float, float]:
    new_var = var * obs_var / (var + obs_var)
    new_mu = (obs_var * mu + var * obs) / (var + obs_var)
    return new_mu, new_var


def sample_preferences(
    state: PreferenceState,
    post: BoundsPosterior,
    rng: np.random.Generator,
    min_gap: float = 0.02,
) -> tuple[np.ndarray, SoftHardBounds]:
    """One joint draw: a particle by weight, bounds from their posteriors.

    Bound draws are truncated to [0, 1] and projected to keep hard below
    soft by min_gap.
    """
    idx = rng.choice(len(state.weights), p=state.weights)
    lam = state.particles[idx]
    soft = rng.normal(post.soft_mean, np.sqrt(post.soft_var))
    hard = rng.normal(post.hard_mean, np.sqrt(post.hard_var))
    soft = np.clip(soft, min_gap, 1.0)
    hard = np.clip(hard, 0.0, soft - min_gap)
    return lam, SoftHardBounds(soft=soft, hard=hard)
