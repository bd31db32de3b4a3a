"""Session engine: the interactive loop behind both the CLI and the service.

A session owns the posteriors, surrogates, accumulated evaluations, and the
interaction budget. Every random draw derives from (seed, round, purpose)
integers, so a session is a pure function of its config, seed, and feedback
sequence; replaying a log reproduces every query byte for byte.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .config import RunConfig
from .errors import (
    BudgetExhaustedError,
    InvalidArgumentError,
    SessionConflictError,
)
from .gp import SurrogateState
from .preferences import (
    BoundsPosterior,
    FeedbackEvent,
    LikelihoodFactor,
    PreferenceState,
    initial_bounds_posterior,
    interpret_feedback,
    prior_preference_state,
    update_bounds_posterior,
    update_lambda_posterior,
)
from .problems import ObjectiveProblem, get_problem
from .query import DenseSet, QueryPoint, QuerySet, build_query
from .shf import SHFParams


class SessionEngine:
    """One decision-making session: query rounds, feedback, posterior updates."""

    def __init__(
        self,
        problem: ObjectiveProblem,
        cfg: RunConfig,
        mechanism: str = "active_tmosh",
        querying: str = "native",
        seed: int = 0,
        initial_soft: Optional[np.ndarray] = None,
        initial_hard: Optional[np.ndarray] = None,
    ):
        from .simulate import build_pool, validate_combination

        validate_combination(mechanism, querying)
        self.problem = problem
        self.cfg = cfg
        self.mechanism = mechanism
        self.querying = querying
        self.seed = seed
        self.params = SHFParams(cfg.shf.beta, cfg.shf.zeta, cfg.shf.utility_floor)
        L = problem.num_objectives
        soft0 = np.asarray(
            initial_soft if initial_soft is not None else np.full(L, cfg.bounds.initial_soft),
            dtype=float,
        )
        hard0 = np.asarray(
            initial_hard if initial_hard is not None else np.full(L, cfg.bounds.initial_hard),
            dtype=float,
        )
        if soft0.shape != (L,) or hard0.shape != (L,):
            raise InvalidArgumentError(f"initial bounds must have length {L}")
        if not np.all(hard0 < soft0):
            raise InvalidArgumentError("initial hard bounds must be strictly below soft bounds")
        self.pref_state: PreferenceState = prior_preference_state(
            L, cfg.preference.particles, np.random.default_rng([seed, 7])
        )
        self.bounds_posterior: BoundsPosterior = initial_bounds_posterior(
            soft0, hard0, cfg.bounds
        )
        self.surrogate = SurrogateState(problem.input_dim, L, cfg.gp)
        self.dense = DenseSet()
        self.pool = (
            build_pool(problem, cfg.baseline.pool_size, seed) if querying != "native" else None
        )
        from .simulate import InteractionBudget

        self.budget = InteractionBudget(cfg.budget.total_units, cfg.budget.uniform_units)
        self.round_index = 0
        self.observed: list[QueryPoint] = []
        self.current_query: Optional[QuerySet] = None
        self.last_activity = None
        self.status = "computing"
        self.log_records: list[dict] = [
            {
                "type": "config",
                "problem": problem.name,
                "mechanism": mechanism,
                "querying": querying,
                "seed": seed,
                "initial_soft": soft0.tolist(),
                "initial_hard": hard0.tolist(),
                "config": cfg.to_dict(),
            }
        ]
        self._advance()

    # ---------------------------------------------------------------- queries

    def _nominal_query_size(self) -> int:
        if self.mechanism in ("pairwise", "random"):
            return 2
        return self.cfg.query.display_budget

    def _min_event_cost(self) -> int:
        from .simulate import event_cost

        return event_cost(self.mechanism, 2, self.cfg.budget.uniform_units)

    def _advance(self) -> None:
        """Build the next round's query, or stop when the budget is spent."""
        from .simulate import event_cost

        if not self.budget.can_afford(self._min_event_cost()):
            self.status = "finalization_required"
            self.current_query = None
            return
        self.round_index += 1
        query = self._build_round_query()
        cost = event_cost(self.mechanism, len(query), self.cfg.budget.uniform_units)
        if not self.budget.can_afford(cost):
            self.round_index -= 1
            self.status = "finalization_required"
            self.current_query = None
            return
        self.current_query = query
        self.observed.extend(query.points)
        self.status = "awaiting_feedback"
        self.log_records.append(
            {"type": "query", "round": self.round_index, "cost": cost, "query": query.to_dict()}
        )

    def _build_round_query(self) -> QuerySet:
        if self.querying == "native":
            cfg = self.cfg
            if self.mechanism != "active_tmosh" and cfg.sensitivity.enabled:
                cfg = dataclasses.replace(
                    cfg, sensitivity=dataclasses.replace(cfg.sensitivity, enabled=False)
                )
            k = self._nominal_query_size()
            if k != cfg.query.display_budget:
                cfg = dataclasses.replace(
                    cfg, query=dataclasses.replace(cfg.query, display_budget=k)
                )
            query, _, activity = build_query(
                self.problem,
                self.surrogate,
                self.pref_state,
                self.bounds_posterior,
                self.dense,
                cfg,
                self.round_index,
                self.seed,
            )
            if activity is not None:
                self.last_activity = activity
            if self.mechanism in ("pairwise", "random") and len(query.points) > 2:
                query.points = query.points[:2]
            return query
        rng = np.random.default_rng([self.seed, self.round_index, 61])
        K = self._nominal_query_size()
        if self.querying == "info_gain":
            from .simulate import info_gain_query

            kind = {
                "pairwise": "pairwise_choice",
                "full_ranking": "full_ranking",
                "partial_ranking": "partial_ranking",
            }[self.mechanism]
            indices = info_gain_query(
                self.pool.values,
                self.pref_state,
                self.bounds_posterior.mean_bounds(),
                kind,
                K,
                rng,
                self.params,
                self.cfg.shf.chebyshev_gamma,
                self.cfg.baseline.mi_particles,
            )
        else:
            from .simulate import random_query

            indices = random_query(self.pool, K, rng)
        return QuerySet(points=self.pool.query_points(indices), round_index=self.round_index)

    # --------------------------------------------------------------- feedback

    def submit_feedback(self, event: FeedbackEvent) -> None:
        from .simulate import event_cost

        if self.status == "finalization_required":
            raise BudgetExhaustedError("interaction budget exhausted; finalize the session")
        if self.status != "awaiting_feedback":
            raise SessionConflictError(f"cannot accept feedback while {self.status}")
        query = self.current_query
        cost = event_cost(self.mechanism, len(query), self.cfg.budget.uniform_units)
        if not self.budget.can_afford(cost):
            self.status = "finalization_required"
            raise BudgetExhaustedError("interaction budget exhausted; finalize the session")
        event = dataclasses.replace(event, interaction_units=cost)
        self._validate_event(event, query)
        self.status = "computing"
        ranking: tuple[int, ...]
        if event.kind == "no_change":
            self.bounds_posterior = update_bounds_posterior(
                self.bounds_posterior, event, self.cfg.bounds
            )
            ranking = ()
        elif event.is_bound_kind:
            ranking = interpret_feedback(event, query.values())
            self.bounds_posterior = update_bounds_posterior(
                self.bounds_posterior, event, self.cfg.bounds
            )
        else:
            ranking = tuple(event.ranking)
        if len(ranking) >= 2:
            factor = LikelihoodFactor(
                query_values=query.values(),
                ranking=ranking,
                bounds_snapshot=self.bounds_posterior.mean_bounds(),
                params=self.params,
                gamma=self.cfg.shf.chebyshev_gamma,
            )
            self.pref_state = update_lambda_posterior(
                self.pref_state,
                factor,
                self.cfg.preference,
                np.random.default_rng([self.seed, self.round_index, 41]),
            )
        self.budget.spend(cost)
        self.log_records.append(
            {"type": "feedback", "round": self.round_index, "event": event.to_dict()}
        )
        self.log_records.append(
            {
                "type": "posterior",
                "round": self.round_index,
                "lambda_mean": self.pref_state.mean().tolist(),
                "bounds": self.bounds_posterior.to_dict(),
                "units_spent": self.budget.spent,
            }
        )
        self._advance()

    def _validate_event(self, event: FeedbackEvent, query: QuerySet) -> None:
        L = self.problem.num_objectives
        if event.is_bound_kind:
            if self.mechanism not in ("active_mosh", "active_tmosh"):
                raise InvalidArgumentError(
                    f"mechanism {self.mechanism} expects choice feedback, not bound feedback"
                )
            if not 0 <= event.dimension < L:
                raise InvalidArgumentError(f"dimension {event.dimension} out of range")
            if not np.isfinite(event.new_value) or not 0.0 <= event.new_value <= 1.0:
                raise InvalidArgumentError(f"new bound value {event.new_value} outside [0, 1]")
        elif event.kind != "no_change":
            if self.mechanism in ("active_mosh", "active_tmosh"):
                raise InvalidArgumentError(
                    f"mechanism {self.mechanism} expects bound feedback, not {event.kind}"
                )
            if len(event.ranking) == 0:
                raise InvalidArgumentError("ranking feedback carries an empty ranking")
            if sorted(set(event.ranking)) != sorted(event.ranking) or any(
                not 0 <= i < len(query) for i in event.ranking
            ):
                raise InvalidArgumentError(f"invalid ranking {event.ranking}")

    # --------------------------------------------------------------- outcomes

    def observed_values(self) -> np.ndarray:
        if not self.observed:
            return np.empty((0, self.problem.num_objectives))
        return np.array([p.y_norm for p in self.observed])

    def finalize(self, chosen_index: int) -> dict:
        """Seal the session on one of the observed points.

        The closing utility ratio and first-good-round come from the current
        posterior means; a live session's hidden truth is never available.
        """
        if self.status == "finalized":
            raise SessionConflictError("session already finalized")
        if not 0 <= chosen_index < len(self.observed):
            raise InvalidArgumentError(f"chosen index {chosen_index} is not an observed point")
        chosen = self.observed[chosen_index]
        from .problems import GridReference

        ref = GridReference(
            self.problem,
            self.pref_state.mean(),
            self.bounds_posterior.mean_bounds(),
            self.params,
            gamma=self.cfg.shf.chebyshev_gamma,
            grid_pow=self.cfg.reference_grid_pow,
        )
        ratio = (
            ref.ratio_of_objectives(chosen.y_norm[None, :]) if ref.usable else float("nan")
        )
        rounds_completed = sum(1 for r in self.log_records if r["type"] == "feedback")
        first_good = None
        if ref.usable:
            cut = 1.0 - self.cfg.metrics.good_delta
            for rec in self.log_records:
                if rec["type"] != "query":
                    continue
                pts = np.array([p["y_norm"] for p in rec["query"]["points"]])
                if any(ref.ratio_of_objectives(y[None, :]) >= cut for y in pts):
                    first_good = rec["round"]
                    break
        summary = {
            "type": "finalize",
            "chosen_index": chosen_index,
            "chosen": chosen.to_dict(),
            "utility_ratio_posterior": ratio,
            "rounds_completed": rounds_completed,
            "first_good_round_posterior": first_good,
            "units_spent": self.budget.spent,
            "num_observed": len(self.observed),
        }
        self.status = "finalized"
        self.log_records.append(summary)
        return summary


# ------------------------------------------------------------------ log files


def write_session_log(records: list[dict], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")


def read_session_log(path: str | Path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def replay_session_log(path: str | Path) -> list[str]:
    """Re-execute a recorded session; return human-readable diffs (empty = identical)."""
    records = read_session_log(path)
    if not records or records[0].get("type") != "config":
        return ["log does not start with a config record"]
    head = records[0]
    cfg = RunConfig.from_dict(head["config"])
    problem = get_problem(head["problem"])
    engine = SessionEngine(
        problem,
        cfg,
        mechanism=head["mechanism"],
        querying=head["querying"],
        seed=head["seed"],
        initial_soft=np.array(head["initial_soft"]),
        initial_hard=np.array(head["initial_hard"]),
    )
    diffs: list[str] = []
    for rec in records[1:]:
        if rec["type"] == "query":
            if engine.status != "awaiting_feedback":
                diffs.append(f"round {rec['round']}: engine is {engine.status}, log has a query")
                break
            got = json.dumps(engine.current_query.to_dict(), sort_keys=True)
            want = json.dumps(rec["query"], sort_keys=True)
            if got != want:
                diffs.append(f"round {rec['round']}: query mismatch")
        elif rec["type"] == "feedback":
            engine.submit_feedback(FeedbackEvent.from_dict(rec["event"]))
        elif rec["type"] == "posterior":
            got = json.dumps(engine.log_records[-1], sort_keys=True)
            want = json.dumps(rec, sort_keys=True)
            if got != want:
                diffs.append(f"round {rec['round']}: posterior mismatch")
        elif rec["type"] == "finalize":
            summary = engine.finalize(rec["chosen_index"])
            got = json.dumps(summary, sort_keys=True)
            want = json.dumps(rec, sort_keys=True)
            if got != want:
                diffs.append("finalize mismatch")
    return diffs
