"""Feedback interpretation, ranking likelihood, and posterior updates."""

from itertools import permutations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from paretonav.config import BoundsConfig, PreferenceConfig
from paretonav.errors import InvalidArgumentError
from paretonav.preferences import (
    BoundsPosterior,
    FeedbackEvent,
    LikelihoodFactor,
    PreferenceState,
    initial_bounds_posterior,
    interpret_feedback,
    plackett_luce_likelihood,
    prior_preference_state,
    sample_preferences,
    update_bounds_posterior,
    update_lambda_posterior,
)
from paretonav.shf import (
    Scalarizer,
    SHFParams,
    SoftHardBounds,
    default_ideal_point,
    scalarize_matrix,
    shf_matrix,
)

PARAMS = SHFParams()
BOUNDS2 = SoftHardBounds(soft=np.array([0.8, 0.8]), hard=np.array([0.2, 0.2]))


def pl_sample(scores, rng):
    """Sequential sampling from the ranking model the likelihood assumes."""
    idx = list(range(len(scores)))
    out = []
    s = np.asarray(scores, dtype=float)
    while idx:
        logits = s[idx] - max(s[idx])
        p = np.exp(logits)
        p /= p.sum()
        out.append(idx.pop(int(rng.choice(len(idx), p=p))))
    return tuple(out)


class TestInterpretFeedback:
    def test_soft_adjust_ranks_by_distance(self):
        ev = FeedbackEvent(kind="soft_adjusted", dimension=0, old_value=0.5, new_value=0.7)
        Y = np.array([[0.68, 0.1], [0.50, 0.1], [0.71, 0.1]])
        assert interpret_feedback(ev, Y) == (2, 0, 1)

    def test_hard_tighten_puts_satisfiers_first(self):
        ev = FeedbackEvent(kind="hard_tightened", dimension=0, old_value=0.3, new_value=0.5)
        Y = np.array([[0.45, 0.1], [0.55, 0.1], [0.80, 0.1], [0.49, 0.1]])
        # satisfiers 0.55 (d=.05), 0.80 (d=.30); violators 0.49 (v=.01), 0.45 (v=.05)
        assert interpret_feedback(ev, Y) == (1, 2, 3, 0)

    def test_hard_relax_orders_by_distance_to_new_bound(self):
        ev = FeedbackEvent(kind="hard_relaxed", dimension=1, old_value=0.6, new_value=0.4)
        Y = np.array([[0.1, 0.45], [0.1, 0.70], [0.1, 0.35]])
        assert interpret_feedback(ev, Y) == (0, 1, 2)

    def test_on_bound_point_ranks_first(self):
        ev = FeedbackEvent(kind="hard_tightened", dimension=0, old_value=0.3, new_value=0.5)
        Y = np.array([[0.5, 0.1], [0.5 + 1e-12, 0.1]])
        ranking = interpret_feedback(ev, Y)
        assert ranking[0] == 0

    def test_single_point_query(self):
        ev = FeedbackEvent(kind="soft_adjusted", dimension=0, old_value=0.4, new_value=0.6)
        assert interpret_feedback(ev, np.array([[0.3, 0.2]])) == (0,)

    def test_no_change_yields_empty_ranking(self):
        assert interpret_feedback(FeedbackEvent(kind="no_change"), np.array([[0.3, 0.2]])) == ()

    def test_dimension_out_of_range(self):
        ev = FeedbackEvent(kind="soft_adjusted", dimension=5, old_value=0.4, new_value=0.6)
        with pytest.raises(InvalidArgumentError):
            interpret_feedback(ev, np.array([[0.3, 0.2]]))


class TestPlackettLuce:
    def test_single_item_probability_one(self):
        Y = np.array([[0.5, 0.5]])
        assert plackett_luce_likelihood((0,), Y, BOUNDS2, np.array([0.5, 0.5])) == 1.0

    def test_two_equal_points_give_half(self):
        Y = np.array([[0.5, 0.6], [0.5, 0.6]])
        got = plackett_luce_likelihood((0, 1), Y, BOUNDS2, np.array([0.3, 0.7]))
        assert got == pytest.approx(0.5, abs=1e-12)

    @pytest.mark.parametrize("K", [2, 3, 4, 5])
    def test_sums_to_one_over_permutations(self, K):
        rng = np.random.default_rng(K)
        Y = rng.uniform(0.25, 1.0, (K, 2))
        lam = np.array([0.6, 0.4])
        total = sum(
            plackett_luce_likelihood(p, Y, BOUNDS2, lam) for p in permutations(range(K))
        )
        assert total == pytest.approx(1.0, abs=1e-10)

    def test_shift_invariance(self):
        """Adding a constant to all scalarized utilities leaves the likelihood unchanged."""
        rng = np.random.default_rng(9)
        Y = rng.uniform(0.25, 1.0, (4, 2))
        lam = np.array([0.5, 0.5])
        scal = Scalarizer(weights=lam, ideal_point=default_ideal_point(2, PARAMS))
        scores = scalarize_matrix(shf_matrix(Y, BOUNDS2, PARAMS), scal, PARAMS.utility_floor)
        from paretonav.preferences import _pl_log_prob

        base = _pl_log_prob(np.array([2, 0, 3, 1]), scores)
        for c in (-3.0, 0.7, 10.0):
            shifted = _pl_log_prob(np.array([2, 0, 3, 1]), scores + c)
            assert np.exp(shifted) == pytest.approx(np.exp(base), abs=1e-10)

    def test_infeasible_point_ranked_first_gets_near_zero(self):
        Y = np.array([[0.1, 0.5], [0.5, 0.5]])  # first point violates hard bound 0.2
        got = plackett_luce_likelihood((0, 1), Y, BOUNDS2, np.array([0.5, 0.5]))
        assert got < 1e-100


@settings(max_examples=50, deadline=None)
@given(c=st.floats(-5.0, 5.0))
def test_pl_shift_invariance_property(c):
    scores = np.array([-0.2, -0.9, -0.5])
    from paretonav.preferences import _pl_log_prob

    base = _pl_log_prob(np.array([1, 0, 2]), scores)
    shifted = _pl_log_prob(np.array([1, 0, 2]), scores + c)
    assert abs(np.exp(base) - np.exp(shifted)) < 1e-10


class TestLambdaPosterior:
    def test_no_feedback_matches_dirichlet_prior_mean(self):
        cfg = PreferenceConfig(particles=2000)
        state = prior_preference_state(2, 10, np.random.default_rng(0))
        new = update_lambda_posterior(state, None, cfg, np.random.default_rng(1))
        assert np.abs(new.mean() - 0.5).sum() * 2 < 0.05

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(5)
        Y = rng.uniform(0.25, 1.0, (4, 2))
        factor = LikelihoodFactor(
            query_values=Y, ranking=(2, 0, 1, 3), bounds_snapshot=BOUNDS2
        )
        state = prior_preference_state(2, 64, np.random.default_rng(0))
        cfg = PreferenceConfig(particles=64)
        a = update_lambda_posterior(state, factor, cfg, np.random.default_rng(11))
        b = update_lambda_posterior(state, factor, cfg, np.random.default_rng(11))
        assert np.array_equal(a.particles, b.particles)

    def test_recovers_known_preference(self):
        lam_star = np.array([0.7, 0.3])
        bounds = SoftHardBounds(soft=np.full(2, 0.5), hard=np.full(2, 0.2))
        scal = Scalarizer(weights=lam_star, ideal_point=default_ideal_point(2, PARAMS))
        rng = np.random.default_rng(43)
        factors = []
        for _ in range(50):
            Yq = np.full((12, 2), 0.9)
            for i in range(12):
                Yq[i, i % 2] = rng.uniform(0.22, 0.7)
            scores = scalarize_matrix(shf_matrix(Yq, bounds, PARAMS), scal, PARAMS.utility_floor)
            factors.append(
                LikelihoodFactor(query_values=Yq, ranking=pl_sample(scores, rng), bounds_snapshot=bounds)
            )
        state = prior_preference_state(2, 512, np.random.default_rng(1))
        state = PreferenceState(state.particles, state.weights, tuple(factors[:-1]))
        new = update_lambda_posterior(state, factors[-1], PreferenceConfig(), np.random.default_rng(7))
        assert np.abs(new.mean() - lam_star).sum() <= 0.15


class TestBoundsPosterior:
    def test_conjugate_update_hand_values(self):
        post = BoundsPosterior(
            soft_mean=np.array([0.9]),
            hard_mean=np.array([0.5]),
            soft_var=np.array([0.04]),
            hard_var=np.array([0.04]),
        )
        ev = FeedbackEvent(kind="hard_tightened", dimension=0, old_value=0.5, new_value=0.7)
        cfg = BoundsConfig(observation_var=0.04)
        new = update_bounds_posterior(post, ev, cfg)
        assert new.hard_mean[0] == pytest.approx(0.6, abs=1e-12)
        assert new.hard_var[0] == pytest.approx(0.02, abs=1e-12)

    def test_no_change_shrinks_all_variances(self):
        post = initial_bounds_posterior(np.array([0.9, 0.8]), np.array([0.2, 0.1]), BoundsConfig())
        new = update_bounds_posterior(post, FeedbackEvent(kind="no_change"), BoundsConfig())
        assert new.soft_var == pytest.approx(post.soft_var * 0.9)
        assert new.hard_var == pytest.approx(post.hard_var * 0.9)
        assert np.array_equal(new.soft_mean, post.soft_mean)

    def test_unmodified_dimensions_unchanged(self):
        post = initial_bounds_posterior(np.array([0.9, 0.8]), np.array([0.2, 0.1]), BoundsConfig())
        ev = FeedbackEvent(kind="soft_adjusted", dimension=0, old_value=0.9, new_value=0.7)
        new = update_bounds_posterior(post, ev, BoundsConfig())
        assert new.soft_mean[1] == post.soft_mean[1]
        assert new.hard_mean[0] == post.hard_mean[0]

    def test_projection_keeps_hard_below_soft(self):
        cfg = BoundsConfig(observation_var=1e-6)
        post = initial_bounds_posterior(np.array([0.5]), np.array([0.3]), cfg)
        ev = FeedbackEvent(kind="hard_tightened", dimension=0, old_value=0.3, new_value=0.9)
        new = update_bounds_posterior(post, ev, cfg)
        assert new.hard_mean[0] < new.soft_mean[0]
        assert new.hard_mean[0] == pytest.approx(0.5 - cfg.min_gap)


@settings(max_examples=100, deadline=None)
@given(
    soft=st.floats(0.2, 1.0),
    gap=st.floats(0.05, 0.5),
    obs=st.floats(0.0, 1.0),
    which=st.sampled_from(["soft_adjusted", "hard_tightened", "hard_relaxed"]),
)
def test_projection_property(soft, gap, obs, which):
    hard = max(soft - gap, 0.0)
    if hard >= soft:
        return
    cfg = BoundsConfig()
    post = initial_bounds_posterior(np.array([soft]), np.array([hard]), cfg)
    ev = FeedbackEvent(kind=which, dimension=0, old_value=0.0, new_value=obs)
    new = update_bounds_posterior(post, ev, cfg)
    assert np.all(new.hard_mean < new.soft_mean)


class TestSamplePreferences:
    def test_single_particle_always_returned(self):
        state = PreferenceState(particles=np.array([[0.4, 0.6]]), weights=np.array([1.0]))
        post = initial_bounds_posterior(np.array([0.9, 0.9]), np.array([0.1, 0.1]), BoundsConfig())
        lam, _ = sample_preferences(state, post, np.random.default_rng(0))
        assert np.array_equal(lam, [0.4, 0.6])

    def test_zero_variance_returns_means(self):
        post = BoundsPosterior(
            soft_mean=np.array([0.9]),
            hard_mean=np.array([0.2]),
            soft_var=np.array([1e-300]),
            hard_var=np.array([1e-300]),
        )
        state = PreferenceState(particles=np.array([[1.0]]), weights=np.array([1.0]))
        _, bounds = sample_preferences(state, post, np.random.default_rng(0))
        assert bounds.soft[0] == pytest.approx(0.9, abs=1e-9)
        assert bounds.hard[0] == pytest.approx(0.2, abs=1e-9)

    def test_sampling_frequencies_match_weights(self):
        particles = np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]])
        weights = np.array([0.5, 0.3, 0.2])
        state = PreferenceState(particles=particles, weights=weights)
        post = initial_bounds_posterior(np.array([0.9, 0.9]), np.array([0.1, 0.1]), BoundsConfig())
        rng = np.random.default_rng(123)
        counts = np.zeros(3)
        n = 10_000
        for _ in range(n):
            lam, _ = sample_preferences(state, post, rng)
            counts[int(np.argmax([np.allclose(lam, p) for p in particles]))] += 1
        freq = counts / n
        se = np.sqrt(weights * (1 - weights) / n)
        assert np.all(np.abs(freq - weights) <= 3 * se)

    def test_projected_gap_maintained(self):
        post = BoundsPosterior(
            soft_mean=np.array([0.5]),
            hard_mean=np.array([0.48]),
            soft_var=np.array([0.05]),
            hard_var=np.array([0.05]),
        )
        state = PreferenceState(particles=np.array([[1.0]]), weights=np.array([1.0]))
        rng = np.random.default_rng(3)
        for _ in range(200):
            _, bounds = sample_preferences(state, post, rng)
            assert bounds.hard[0] <= bounds.soft[0] - 0.02 + 1e-12
