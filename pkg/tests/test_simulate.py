"""Simulated decision-makers, unit accounting, and query baselines."""

import numpy as np
import pytest

from paretonav.config import DmConfig, RunConfig
from paretonav.errors import BudgetExhaustedError, InvalidArgumentError
from paretonav.preferences import prior_preference_state
from paretonav.problems import GroundTruthDM
from paretonav.query import QueryPoint, QuerySet
from paretonav.shf import SHFParams, SoftHardBounds
from paretonav.simulate import (
    InteractionBudget,
    build_pool,
    event_cost,
    info_gain_query,
    random_query,
    simulate_bounds_feedback,
    simulate_choice_feedback,
    validate_combination,
)

PARAMS = SHFParams()


def make_truth(y_star, lam=None, soft=None, hard=None, noise=0.0):
    L = len(y_star)
    return GroundTruthDM(
        lambda_star=np.asarray(lam if lam is not None else np.full(L, 1.0 / L)),
        alpha_star_soft=np.asarray(soft if soft is not None else np.full(L, 0.9)),
        alpha_star_hard=np.asarray(hard if hard is not None else np.full(L, 0.2)),
        y_star=np.asarray(y_star, dtype=float),
        feedback_noise_sigma=noise,
    )


def make_query(Y, tags=None):
    Y = np.asarray(Y, dtype=float)
    tags = tags or ["dense"] * len(Y)
    pts = [
        QueryPoint(x=np.array([0.1 * i, 0.2]), y_raw=y, y_norm=y, tag=t)
        for i, (y, t) in enumerate(zip(Y, tags))
    ]
    return QuerySet(points=pts, round_index=1)


class TestValidation:
    def test_bounds_mechanism_rejects_info_gain(self):
        with pytest.raises(InvalidArgumentError):
            validate_combination("active_mosh", "info_gain")

    def test_random_mechanism_requires_random_querying(self):
        with pytest.raises(InvalidArgumentError):
            validate_combination("random", "info_gain")

    def test_valid_pairs_accepted(self):
        validate_combination("active_tmosh", "native")
        validate_combination("pairwise", "info_gain")
        validate_combination("full_ranking", "native")
        validate_combination("active_mosh", "random")


class TestUnitSchedule:
    def test_costs(self):
        assert event_cost("pairwise", 2, False) == 1
        assert event_cost("random", 2, False) == 1
        assert event_cost("active_mosh", 7, False) == 2
        assert event_cost("active_tmosh", 7, False) == 2
        assert event_cost("full_ranking", 5, False) == 5
        assert event_cost("partial_ranking", 5, False) == 3

    def test_uniform_units_flag(self):
        for mech in ("pairwise", "active_mosh", "full_ranking", "partial_ranking"):
            assert event_cost(mech, 5, True) == 1

    def test_budget_accounting(self):
        b = InteractionBudget(total_units=10)
        for _ in range(5):
            b.spend(2)
        assert b.spent == 10
        with pytest.raises(BudgetExhaustedError):
            b.spend(2)

    def test_no_straddling(self):
        b = InteractionBudget(total_units=10)
        b.spend(3)
        b.spend(3)
        b.spend(3)
        assert not b.can_afford(3)
        assert b.remaining == 1


class TestBoundsFeedback:
    def setup_method(self):
        self.cfg = DmConfig(observation_noise=0.0, weight_std=0.0)

    def test_violated_hard_bound_relaxed_on_worst_dimension(self):
        # ideal sits below both hard means, dimension 1 violated more
        truth = make_truth([0.5, 0.1])
        soft = np.array([0.9, 0.9])
        hard = np.array([0.55, 0.45])
        ev = simulate_bounds_feedback(
            make_query([[0.6, 0.5], [0.8, 0.7]]), truth, soft, hard, self.cfg,
            np.random.default_rng(0),
        )
        assert ev.kind == "hard_relaxed"
        assert ev.dimension == 1
        assert ev.new_value < 0.45

    def test_inside_bounds_tightens_furthest_dimension(self):
        truth = make_truth([0.9, 0.6])
        soft = np.array([0.95, 0.95])
        hard = np.array([0.1, 0.4])  # dim 0 is 0.8 below ideal, dim 1 only 0.2
        ev = simulate_bounds_feedback(
            make_query([[0.6, 0.5], [0.8, 0.7]]), truth, soft, hard, self.cfg,
            np.random.default_rng(0),
        )
        assert ev.kind == "hard_tightened"
        assert ev.dimension == 0
        assert 0.1 < ev.new_value <= 0.9

    def test_small_gap_switches_to_soft_fine_tuning(self):
        truth = make_truth([0.9, 0.6])
        soft = np.array([0.2, 0.95])  # dim 0 gap = 0.1 < threshold 0.15
        hard = np.array([0.1, 0.4])
        ev = simulate_bounds_feedback(
            make_query([[0.6, 0.5], [0.8, 0.7]]), truth, soft, hard, self.cfg,
            np.random.default_rng(0),
        )
        assert ev.kind == "soft_adjusted"
        assert ev.dimension == 0

    def test_adjacent_point_boosts_magnitude_five_percent(self):
        truth = make_truth([0.5, 0.1])
        soft = np.array([0.9, 0.9])
        hard = np.array([0.55, 0.45])
        cfg = DmConfig(observation_noise=0.0, weight_std=0.0)
        base_query = make_query([[0.6, 0.5], [0.8, 0.7]])
        # adjacent point strictly closer to the ideal than any dense point
        boosted_query = make_query(
            [[0.6, 0.5], [0.8, 0.7], [0.52, 0.12]], tags=["dense", "dense", "tmosh_adjacent"]
        )
        ev_base = simulate_bounds_feedback(
            base_query, truth, soft, hard, cfg, np.random.default_rng(5)
        )
        ev_boost = simulate_bounds_feedback(
            boosted_query, truth, soft, hard, cfg, np.random.default_rng(5)
        )
        base_mag = abs(ev_base.new_value - ev_base.old_value)
        boost_mag = abs(ev_boost.new_value - ev_boost.old_value)
        assert boost_mag == pytest.approx(1.05 * base_mag, rel=1e-9)

    def test_never_moves_past_ideal(self):
        truth = make_truth([0.5, 0.1])
        soft = np.array([0.9, 0.9])
        hard = np.array([0.55, 0.12])
        cfg = DmConfig(observation_noise=0.0, weight_std=0.3)
        for seed in range(20):
            ev = simulate_bounds_feedback(
                make_query([[0.6, 0.5], [0.8, 0.7]]), truth, soft, hard, cfg,
                np.random.default_rng(seed),
            )
            if ev.kind == "hard_relaxed":
                assert ev.new_value >= truth.y_star[ev.dimension] - 1e-12


class TestChoiceFeedback:
    def test_noiseless_pairwise_picks_higher_utility(self):
        truth = make_truth([0.9, 0.9], lam=[0.5, 0.5], soft=[0.95, 0.95], hard=[0.1, 0.1])
        q = make_query([[0.9, 0.9], [0.4, 0.4]])
        ev = simulate_choice_feedback("pairwise_choice", q, truth, np.random.default_rng(0))
        assert ev.ranking == (0, 1)

    def test_equal_utilities_split_fifty_fifty(self):
        truth = make_truth([0.9, 0.9], lam=[0.5, 0.5], noise=0.1)
        q = make_query([[0.6, 0.6], [0.6, 0.6]])
        rng = np.random.default_rng(1)
        wins = sum(
            simulate_choice_feedback("pairwise_choice", q, truth, rng).ranking[0] == 0
            for _ in range(10_000)
        )
        se = np.sqrt(0.25 / 10_000)
        assert abs(wins / 10_000 - 0.5) <= 3 * se

    def test_partial_ranking_returns_three(self):
        truth = make_truth([0.9, 0.9])
        q = make_query([[0.6, 0.6], [0.5, 0.5], [0.7, 0.7], [0.4, 0.4], [0.8, 0.8]])
        ev = simulate_choice_feedback("partial_ranking", q, truth, np.random.default_rng(0))
        assert len(ev.ranking) == 3

    def test_full_ranking_orders_by_utility(self):
        truth = make_truth([0.9, 0.9], lam=[0.5, 0.5], soft=[0.95, 0.95], hard=[0.1, 0.1])
        q = make_query([[0.5, 0.5], [0.9, 0.9], [0.7, 0.7]])
        ev = simulate_choice_feedback("full_ranking", q, truth, np.random.default_rng(0))
        assert ev.ranking == (1, 2, 0)

    def test_pairwise_requires_two_points(self):
        truth = make_truth([0.9, 0.9])
        q = make_query([[0.5, 0.5], [0.9, 0.9], [0.7, 0.7]])
        with pytest.raises(InvalidArgumentError):
            simulate_choice_feedback("pairwise_choice", q, truth, np.random.default_rng(0))


class TestInfoGain:
    def test_single_particle_gives_index_order(self):
        state = prior_preference_state(2, 1, np.random.default_rng(0))
        bounds = SoftHardBounds(soft=np.array([0.9, 0.9]), hard=np.array([0.1, 0.1]))
        pool = np.random.default_rng(1).uniform(0.2, 1.0, (8, 2))
        got = info_gain_query(pool, state, bounds, "pairwise_choice", 2,
                              np.random.default_rng(2))
        assert got == [0, 1]

    def test_discriminating_pair_selected(self):
        """Two opposing particles: the pair they disagree on carries the information."""
        from paretonav.preferences import PreferenceState

        particles = np.array([[0.9, 0.1], [0.1, 0.9]])
        state = PreferenceState(particles=particles, weights=np.array([0.5, 0.5]))
        bounds = SoftHardBounds(soft=np.array([0.5, 0.5]), hard=np.array([0.1, 0.1]))
        # pool: points 0/1 trade off objectives (discriminating pair);
        # points 2/3 are one-sided copies (agreeing pair)
        pool = np.array([[0.9, 0.3], [0.3, 0.9], [0.45, 0.4], [0.45, 0.41]])
        got = info_gain_query(pool, state, bounds, "pairwise_choice", 2,
                              np.random.default_rng(0))
        assert set(got) == {0, 1}

    def test_deterministic(self):
        state = prior_preference_state(2, 32, np.random.default_rng(0))
        bounds = SoftHardBounds(soft=np.array([0.9, 0.9]), hard=np.array([0.1, 0.1]))
        pool = np.random.default_rng(1).uniform(0.2, 1.0, (12, 2))
        a = info_gain_query(pool, state, bounds, "full_ranking", 4, np.random.default_rng(2))
        b = info_gain_query(pool, state, bounds, "full_ranking", 4, np.random.default_rng(2))
        assert a == b

    def test_pool_too_small(self):
        state = prior_preference_state(2, 4, np.random.default_rng(0))
        bounds = SoftHardBounds(soft=np.array([0.9, 0.9]), hard=np.array([0.1, 0.1]))
        with pytest.raises(InvalidArgumentError):
            info_gain_query(np.ones((2, 2)) * 0.5, state, bounds, "full_ranking", 3,
                            np.random.default_rng(1))


class TestPool:
    def test_pool_evaluated_and_sized(self):
        from paretonav.problems import branin_currin

        pool = build_pool(branin_currin(), 32, 0)
        assert len(pool) == 32
        assert pool.values.shape == (32, 2)
        assert np.all(pool.values >= 0) and np.all(pool.values <= 1)

    def test_random_query_without_replacement(self):
        from paretonav.problems import branin_currin

        pool = build_pool(branin_currin(), 16, 0)
        idx = random_query(pool, 5, np.random.default_rng(1))
        assert len(set(idx)) == 5
