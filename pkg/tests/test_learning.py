import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import ConfigurationError, ParameterError, UtilityRangeError
from src.learning import (
    BANDIT,
    FACTORED,
    Exp3Learner,
    HedgeLearner,
    LearnerSpec,
    default_step,
    empirical_distribution,
    evaluate_rounds,
    hedge_regret,
    hedge_update,
    max_fixed_action_regret,
    point_distribution,
    product_deviation,
    regret_against,
    run_repeated,
    verify_oblivious_cce,
)
from src.mechanisms import BidProfile


class TestHedge:
    def test_uniform_start(self):
        learner = HedgeLearner(4, 1.0, 0.1)
        np.testing.assert_allclose(learner.probabilities(), np.full(4, 0.25))

    def test_update_favours_better_action(self):
        learner = HedgeLearner(2, 1.0, 0.5).update([1.0, -1.0])
        p = learner.probabilities()
        assert p[0] > p[1]
        assert p.sum() == pytest.approx(1.0)

    def test_out_of_range_utility(self):
        with pytest.raises(UtilityRangeError):
            HedgeLearner(2, 1.0, 0.1).update([2.0, 0.0])

    def test_bad_parameters(self):
        with pytest.raises(ParameterError):
            HedgeLearner(0, 1.0, 0.1)
        with pytest.raises(ParameterError):
            HedgeLearner(2, 0.0, 0.1)
        with pytest.raises(ConfigurationError):
            HedgeLearner(2, 1.0, 0.1).update([0.0, 0.0, 0.0])

    def test_hedge_update_scales_by_range(self):
        learner = HedgeLearner(2, 2.0, 1.0)
        assert hedge_update(learner, [2.0, 0.0]) is learner
        assert learner.probabilities()[0] == pytest.approx(math.e / (math.e + 1.0))

    def test_single_action_has_no_step(self):
        assert default_step(1, 100) == 0.0

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**31 - 1), st.integers(min_value=2, max_value=6))
    def test_average_regret_vanishes(self, seed, actions):
        rows = np.random.default_rng(seed).uniform(-1.0, 1.0, size=(400, actions))
        bound = 2.0 * math.sqrt(math.log(actions) / 400)
        assert hedge_regret(rows, utility_range=1.0) <= bound

    def test_regret_against_switching_adversary(self):
        # best action flips halfway through the horizon
        rows = np.zeros((1000, 2))
        rows[:500, 0] = 1.0
        rows[500:, 1] = 1.0
        assert hedge_regret(rows, utility_range=1.0) <= 2.0 * math.sqrt(math.log(2) / 1000)


class TestExp3:
    def test_exploration_floor(self):
        learner = Exp3Learner(3, 1.0, 100, exploration=0.3)
        for _ in range(20):
            learner.observe(0, 1.0)
        p = learner.probabilities()
        assert p.sum() == pytest.approx(1.0)
        assert p.min() >= 0.1 - 1e-12

    def test_range_checked(self):
        with pytest.raises(UtilityRangeError):
            Exp3Learner(2, 1.0, 10).observe(0, 3.0)


class TestRepeatedPlay:
    def test_shapes_and_determinism(self, eon_scenario):
        spec = LearnerSpec()
        a = run_repeated(eon_scenario, spec, 60, seed=11)
        b = run_repeated(eon_scenario, spec, 60, seed=11)
        assert a.bid_idx.shape == (60, 2, 2)
        np.testing.assert_array_equal(a.bid_idx, b.bid_idx)
        np.testing.assert_array_equal(a.availability, b.availability)
        np.testing.assert_allclose(a.utilities, b.utilities)
        assert len(list(a.rows())) == 60 * 4

    def test_bids_ignore_current_availability(self, eon_scenario):
        T = 40
        base = np.ones((T, 2, 2), dtype=np.int8)
        perturbed = base.copy()
        perturbed[-1] = 0
        a = run_repeated(eon_scenario, LearnerSpec(), T, seed=3, availability_override=base)
        b = run_repeated(eon_scenario, LearnerSpec(), T, seed=3, availability_override=perturbed)
        np.testing.assert_array_equal(a.bid_idx, b.bid_idx)

    def test_unavailable_rounds_sell_nothing(self, eon_scenario):
        trace = run_repeated(eon_scenario, LearnerSpec(), 80, seed=5)
        masked = trace.availability == 0
        assert (trace.outcomes[masked] == 0).all()
        assert (trace.payments[masked] == 0).all()

    def test_cube_and_direct_paths_agree(self, eon_scenario):
        fast = run_repeated(eon_scenario, LearnerSpec(), 50, seed=9)
        slow = run_repeated(eon_scenario, LearnerSpec(cube_budget=0), 50, seed=9)
        np.testing.assert_array_equal(fast.bid_idx, slow.bid_idx)

    @pytest.mark.parametrize("kind", [FACTORED, BANDIT])
    def test_other_learners_run(self, independent_scenario, kind):
        trace = run_repeated(independent_scenario, LearnerSpec(kind=kind), 40, seed=2)
        assert trace.bid_idx.shape == (40, 2, 2)
        assert not trace.flags

    def test_non_oblivious_bidders_are_flagged(self, eon_scenario):
        trace = run_repeated(eon_scenario, LearnerSpec(non_oblivious=(1,)), 20, seed=4)
        assert trace.flags

    def test_invalid_runs(self, eon_scenario):
        with pytest.raises(ParameterError):
            run_repeated(eon_scenario, LearnerSpec(), 0, seed=1)
        with pytest.raises(ConfigurationError):
            run_repeated(eon_scenario, LearnerSpec(non_oblivious=(5,)), 10, seed=1)
        with pytest.raises(ConfigurationError):
            run_repeated(eon_scenario, LearnerSpec(), 10, seed=1, availability_override=np.ones((3, 2, 2)))
        with pytest.raises(ConfigurationError):
            LearnerSpec(kind="fictitious")


class TestRandomTieRuns:
    def test_ties_are_recorded_and_seeded(self, random_tie_scenario):
        a = run_repeated(random_tie_scenario, LearnerSpec(), 50, seed=13)
        b = run_repeated(random_tie_scenario, LearnerSpec(), 50, seed=13)
        assert a.ties.shape == (50, 2)
        assert set(np.unique(a.ties)) <= {0, 1}
        np.testing.assert_array_equal(a.ties, b.ties)
        np.testing.assert_array_equal(a.bid_idx, b.bid_idx)

    def test_stored_utilities_use_the_drawn_ties(self, random_tie_scenario):
        trace = run_repeated(random_tie_scenario, LearnerSpec(), 40, seed=6)
        *_, utilities = evaluate_rounds(random_tie_scenario, trace.bid_idx, trace.availability, trace.ties)
        np.testing.assert_allclose(utilities, trace.utilities)

    def test_deterministic_runs_store_no_ties(self, eon_scenario):
        assert run_repeated(eon_scenario, LearnerSpec(), 10, seed=1).ties is None

    @pytest.mark.parametrize("kind", [FACTORED, BANDIT])
    def test_other_learners_run(self, random_tie_scenario, kind):
        trace = run_repeated(random_tie_scenario, LearnerSpec(kind=kind), 30, seed=2)
        assert trace.ties.shape == (30, 2)

    def test_non_oblivious_bidders_use_expected_ties(self, random_tie_scenario):
        trace = run_repeated(random_tie_scenario, LearnerSpec(non_oblivious=(0,)), 20, seed=4)
        assert trace.flags
        assert trace.ties.shape == (20, 2)

    def test_regret_audit_runs(self, random_tie_scenario):
        trace = run_repeated(random_tie_scenario, LearnerSpec(), 300, seed=17)
        regret, action = max_fixed_action_regret(trace, 0)
        assert np.isfinite(regret)
        assert regret == pytest.approx(regret_against(trace, 0, [(action, 1.0)]))

    def test_matching_top_bids_is_a_cce(self, random_tie_scenario):
        # both win each item half the time at price 2, so no deviation gains
        dist = point_distribution(random_tie_scenario, BidProfile(((2.0, 2.0), (2.0, 2.0))))
        report = verify_oblivious_cce(dist, epsilon=0.0, mode="exact")
        assert report.ok


class TestAudits:
    def test_fixed_action_regret_is_small(self, eon_scenario):
        trace = run_repeated(eon_scenario, LearnerSpec(), 2000, seed=21)
        for i in range(2):
            regret, action = max_fixed_action_regret(trace, i)
            assert regret <= 1.5
            assert regret == pytest.approx(regret_against(trace, i, [(action, 1.0)]))

    def test_empirical_distribution_sums_to_one(self, eon_scenario):
        dist = empirical_distribution(run_repeated(eon_scenario, LearnerSpec(), 100, seed=8))
        assert dist.frequencies.sum() == pytest.approx(1.0)
        assert len(dist.support) == len(dist.profiles)

    def test_product_deviation(self):
        joint = product_deviation([[(0.0, 0.5), (1.0, 0.5)], [(2.0, 1.0)]])
        assert joint == [((0.0, 2.0), 0.5), ((1.0, 2.0), 0.5)]

    def test_everyone_bidding_high_is_a_cce(self, eon_scenario):
        dist = point_distribution(eon_scenario, BidProfile(((2.0, 2.0), (2.0, 2.0))))
        report = verify_oblivious_cce(dist, epsilon=0.0, mode="exact")
        assert report.ok
        assert report.mode == "exact"

    def test_everyone_bidding_zero_is_not(self, eon_scenario):
        dist = point_distribution(eon_scenario, BidProfile(((0.0, 0.0), (0.0, 0.0))))
        report = verify_oblivious_cce(dist, epsilon=0.1, mode="exact")
        assert not report.ok
        assert max(g["gain"] for g in report.gains if g["bidder"] == 0) == pytest.approx(1.0)

    def test_monte_carlo_audit_reports_radius(self, eon_scenario):
        dist = point_distribution(eon_scenario, BidProfile(((0.0, 0.0), (0.0, 0.0))))
        report = verify_oblivious_cce(dist, epsilon=0.1, samples=4000, seed=1, mode="mc")
        assert report.mode == "mc"
        assert all("radius" in g for g in report.gains)
