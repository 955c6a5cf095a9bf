import math

import pytest

from src.availability import EVERYBODY_OR_NOBODY, INDEPENDENT
from src.errors import BudgetExceededError, ParameterError
from src.experiments import (
    EON_COROLLARY,
    FULL_GROUPS,
    INDEPENDENT_COROLLARY,
    LOWER_BOUND_SWEEP,
    MAX_UNRESTRICTED_K,
    STRUCTURED,
    UNRESTRICTED,
    ObliviousBidSearch,
    corollary_bound,
    empirical_poa,
    expected_opt_welfare,
    lb_best_oblivious,
    lb_optimal_value,
    lower_bound_scenario,
    lower_bound_sweep,
    ratio_regimes,
    regret_slack,
    run_replicates,
    theorem_bound,
    unit_demand_scenario,
    welfare_of_trace,
)
from src.learning import LearnerSpec, run_repeated
from src.smoothness import E_GAP, SmoothnessParams

HALF = SmoothnessParams(0.5, 1.0)


class TestBounds:
    def test_theorem_bound_per_admission_model(self):
        assert theorem_bound(HALF, INDEPENDENT) == pytest.approx(2.0 * E_GAP)
        assert theorem_bound(HALF, EVERYBODY_OR_NOBODY) == pytest.approx(16.0 * E_GAP)
        assert theorem_bound(HALF, "always") == pytest.approx(2.0)

    def test_corollary_constants(self):
        assert corollary_bound(INDEPENDENT) == pytest.approx(INDEPENDENT_COROLLARY)
        assert corollary_bound(EVERYBODY_OR_NOBODY) == pytest.approx(EON_COROLLARY)
        assert INDEPENDENT_COROLLARY == pytest.approx(2.5027, abs=1e-4)

    def test_regret_slack(self):
        bound = theorem_bound(HALF, INDEPENDENT)
        assert regret_slack(bound, HALF, 4.0, 2, 0.0) == pytest.approx(0.0)
        assert regret_slack(bound, HALF, 4.0, 2, 0.1) > 0.0
        assert math.isinf(regret_slack(bound, HALF, 4.0, 2, 100.0))


class TestExpectedOptimum:
    def test_unit_demand_scenario(self):
        scenario = unit_demand_scenario([[(2.0, 0.5), (0.0, 0.5)]], [0.0, 1.0, 2.0])
        assert scenario.m == 2
        assert scenario.availability.probs.tolist() == [[0.5, 1.0]]
        assert expected_opt_welfare(scenario) == pytest.approx(1.0)

    def test_lower_bound_scenario_optimum(self):
        assert expected_opt_welfare(lower_bound_scenario(2)) == pytest.approx(lb_optimal_value(2))

    def test_lower_bound_scenario_size_guard(self):
        with pytest.raises(ParameterError):
            lower_bound_scenario(5)


class TestLowerBound:
    def test_optimal_value(self):
        assert lb_optimal_value(1) == pytest.approx(2.0)
        assert lb_optimal_value(2) == pytest.approx(2.75)

    @pytest.mark.parametrize("k", [0, 65])
    def test_k_range(self, k):
        with pytest.raises(ParameterError):
            lb_optimal_value(k)

    def test_evaluate_empty_bid(self):
        assert ObliviousBidSearch(3).evaluate((0, 0, 0)) == (0.0, 0.0)

    @pytest.mark.parametrize("k", [2, 3, 4, 5])
    def test_reduced_searches_match_unrestricted(self, k):
        full = lb_best_oblivious(k, search=UNRESTRICTED)
        assert full.mode == UNRESTRICTED
        for search in (FULL_GROUPS, STRUCTURED):
            result = lb_best_oblivious(k, search=search)
            assert result.mode == search
            assert result.expected_utility == pytest.approx(full.expected_utility, abs=1e-12)
            assert result.expected_value <= lb_optimal_value(k) + 1e-12

    @pytest.mark.parametrize("k", range(2, 9))
    def test_structured_space_agrees_with_full_groups(self, k):
        groups = lb_best_oblivious(k)
        structured = lb_best_oblivious(k, search=STRUCTURED)
        assert structured.expected_utility == pytest.approx(groups.expected_utility, abs=1e-12)
        assert structured.k_prime == groups.k_prime

    def test_structured_partitions_in_a_pool(self):
        serial = ObliviousBidSearch(7).structured()
        assert ObliviousBidSearch(7).structured(workers=2) == serial

    def test_structured_partitions_cover_the_space(self):
        search = ObliviousBidSearch(6)
        assert sum(1 for _ in search.structured_vectors()) == search.structured_count()

    def test_full_groups_bids_on_whole_groups(self):
        r = ObliviousBidSearch(16).full_groups()
        assert r == (16, 16) + (0,) * 14

    def test_structured_over_budget(self):
        with pytest.raises(BudgetExceededError):
            lb_best_oblivious(5, search=STRUCTURED, budget=1)

    def test_search_guards(self):
        with pytest.raises(ParameterError):
            lb_best_oblivious(MAX_UNRESTRICTED_K + 1, search=UNRESTRICTED)
        with pytest.raises(ParameterError):
            lb_best_oblivious(4, search="local")

    def test_sweep_rows(self):
        rows = lower_bound_sweep([2, 4, 9])
        assert [row["k"] for row in rows] == [2, 4, 9]
        for row in rows:
            assert row["best_oblivious_value"] <= row["opt_value"] + 1e-12
            assert row["ratio"] >= 1.0 - 1e-12
            assert row["mode"] == FULL_GROUPS

    def test_sweep_falls_back_to_full_groups(self):
        rows = lower_bound_sweep([3, 7], search=UNRESTRICTED)
        assert [row["mode"] for row in rows] == [UNRESTRICTED, FULL_GROUPS]
        rows = lower_bound_sweep([4], search=STRUCTURED, budget=1)
        assert rows[0]["mode"] == FULL_GROUPS

    def test_sweep_in_a_pool_matches_serial(self):
        assert lower_bound_sweep([2, 4, 9], workers=2) == lower_bound_sweep([2, 4, 9])


class TestLowerBoundSweep:
    @pytest.fixture(scope="class")
    def rows(self):
        return lower_bound_sweep(LOWER_BOUND_SWEEP)

    def test_every_k_is_covered(self, rows):
        assert [row["k"] for row in rows] == list(LOWER_BOUND_SWEEP)

    def test_best_response_stays_below_the_cap(self, rows):
        assert all(row["best_oblivious_value"] < 17.0 for row in rows)

    def test_one_group_then_two(self, rows):
        assert [row["k_prime"] for row in rows] == [1, 1, 2, 2, 2, 2, 2]
        assert rows[1]["best_oblivious_value"] == pytest.approx(2.0)
        assert rows[1]["r_vector"] == "9"

    def test_optimum_grows(self, rows):
        opts = [row["opt_value"] for row in rows]
        assert all(b > a for a, b in zip(opts, opts[1:]))

    def test_ratio_is_monotone_within_each_group_count(self, rows):
        assert ratio_regimes(rows) == {1: True, 2: True}
        ratios = {row["k"]: row["ratio"] for row in rows}
        assert ratios[4] <= ratios[9]
        assert all(ratios[a] <= ratios[b] for a, b in zip((16, 25, 36, 49), (25, 36, 49, 64)))

    def test_ratio_drops_where_a_second_group_pays_off(self, rows):
        ratios = {row["k"]: row["ratio"] for row in rows}
        assert ratios[16] < ratios[9]
        assert ratios[9] == pytest.approx(2.529, abs=1e-3)
        assert ratios[16] == pytest.approx(1.960, abs=1e-3)

    def test_ratio_regimes_flag_a_drop(self):
        rows = [{"k": 4, "k_prime": 1, "ratio": 2.0}, {"k": 9, "k_prime": 1, "ratio": 1.5}]
        assert ratio_regimes(rows) == {1: False}


class TestEmpiricalPoA:
    def test_welfare_of_trace_matches_stored_values(self, eon_scenario):
        trace = run_repeated(eon_scenario, LearnerSpec(), 50, seed=6)
        welfare = welfare_of_trace(eon_scenario, trace)
        assert welfare == pytest.approx(trace.values.sum(axis=1).mean())
        assert 0.0 <= welfare <= 4.0 + 1e-9

    def test_replicates_follow_seed_order(self, eon_scenario):
        results = run_replicates(eon_scenario, LearnerSpec(), 30, [5, 3])
        assert [r.seed for r in results] == [5, 3]
        assert all(r.epsilon >= 0.0 for r in results)

    def test_report(self, eon_scenario):
        report = empirical_poa(eon_scenario, LearnerSpec(), 300, [1, 2], params=HALF)
        data = report.to_dict()
        assert report.mode == "exact"
        assert report.availability == EVERYBODY_OR_NOBODY
        assert report.theorem_bound == pytest.approx(16.0 * E_GAP)
        assert len(data["replicates"]) == 2
        assert report.within_bound

    @pytest.mark.slow
    def test_independent_admission_long_run(self, independent_scenario):
        report = empirical_poa(independent_scenario, LearnerSpec(), 5000, [1, 2, 3], params=HALF)
        assert report.within_bound
        assert report.ratio >= 0.9
