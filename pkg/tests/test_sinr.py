import numpy as np
import pytest

from src.availability import AvailabilityModel
from src.errors import BudgetExceededError, InvalidInstanceError
from src.sinr import (
    SUCCESS_VALUE,
    ChannelAccessMechanism,
    SinrInstance,
    channel_scenario,
    channel_utilities,
    empirical_c,
    interference_matrix,
    is_feasible,
    max_feasible_set,
    random_instance,
    sinr_feasible,
    verify_channel_smoothness,
)

CO_LOCATED = [[0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
FAR_APART = [[0.0, 0.0, 1.0, 0.0], [1000.0, 0.0, 1001.0, 0.0]]


class TestInstance:
    def test_zero_length_link(self):
        with pytest.raises(InvalidInstanceError):
            SinrInstance(np.array([[1.0, 1.0, 1.0, 1.0]]))

    def test_bad_constants(self):
        with pytest.raises(InvalidInstanceError):
            SinrInstance(np.array(FAR_APART), beta=0.0)
        with pytest.raises(InvalidInstanceError):
            SinrInstance(np.array(FAR_APART), nu=-1.0)

    def test_distances(self):
        d = SinrInstance(np.array(FAR_APART)).distances()
        assert d[0, 0] == pytest.approx(1.0)
        assert d[1, 0] == pytest.approx(999.0)

    def test_random_instances_are_seeded(self):
        a = random_instance(6, 17)
        b = random_instance(6, 17)
        np.testing.assert_array_equal(a.links, b.links)
        assert a.n == 6


class TestFeasibility:
    def test_co_located_links_fail_together(self):
        instance = SinrInstance(np.array(CO_LOCATED), beta=1.5)
        assert sinr_feasible(instance, [0, 1]).tolist() == [False, False]
        assert channel_utilities(instance, [1, 1]).tolist() == [-1, -1]
        assert max_feasible_set(instance) == (0,)

    def test_equal_ratio_meets_threshold(self):
        instance = SinrInstance(np.array(CO_LOCATED), beta=1.0)
        assert sinr_feasible(instance, [0, 1]).tolist() == [True, True]

    def test_silent_links_never_succeed(self):
        instance = SinrInstance(np.array(FAR_APART))
        assert sinr_feasible(instance, [0]).tolist() == [True, False]
        assert channel_utilities(instance, [1, 0]).tolist() == [1, 0]
        assert is_feasible(instance, [])

    def test_far_links_coexist(self):
        instance = SinrInstance(np.array(FAR_APART))
        assert max_feasible_set(instance) == (0, 1)
        assert empirical_c(instance) < 1e-6

    def test_noise_makes_links_degenerate(self):
        instance = SinrInstance(np.array([[0.0, 0.0, 10.0, 0.0], [500.0, 0.0, 501.0, 0.0]]), nu=0.01)
        matrix = interference_matrix(instance)
        assert matrix.degenerate == [0]
        assert matrix.a[:, 0].tolist() == [0.0, 1.0]
        assert np.diag(matrix.a).tolist() == [0.0, 0.0]
        assert not is_feasible(instance, [0])

    def test_enumeration_budgets(self):
        with pytest.raises(BudgetExceededError):
            empirical_c(random_instance(13, 1))
        with pytest.raises(BudgetExceededError):
            max_feasible_set(random_instance(21, 1))


class TestChannelSmoothness:
    def test_random_instances_hold(self):
        streams = np.random.SeedSequence(2024).spawn(50)
        for stream in streams:
            channel, certificate = verify_channel_smoothness(random_instance(8, stream))
            assert channel.holds, channel.counterexample
            assert channel.checked == 2 ** 8
            assert certificate.verified

    def test_crowded_instance_holds(self):
        channel, certificate = verify_channel_smoothness(random_instance(6, 5, side=5.0))
        assert channel.holds
        assert certificate.verified
        assert len(channel.max_feasible_set) >= 1

    def test_parameters_are_reported_in_both_units(self):
        channel, certificate = verify_channel_smoothness(random_instance(6, 11))
        C = channel.empirical_c
        report = channel.to_dict()
        assert report["params"] == {"lambda": 1.0, "mu1": pytest.approx(2.0 * C), "mu2": 0.0}
        assert report["mechanism_form"]["success_value"] == SUCCESS_VALUE
        assert report["mechanism_form"]["params"]["lambda"] == pytest.approx(1.0 / SUCCESS_VALUE)
        assert certificate.params == channel.mechanism_params()
        assert certificate.params.mu1 == pytest.approx(2.0 * C)

    def test_mechanism_masks_silence(self):
        mech = ChannelAccessMechanism(SinrInstance(np.array(FAR_APART)))
        assert mech.evaluate((1.0, 0.0)) == ((1, 0), (1.0, 0.0))
        assert mech.evaluate((0.0, 0.0)) == ((0, 0), (0.0, 0.0))
        assert mech.deviation(1, [np.array([0.0, 2.0]), np.array([0.0, 2.0])]) == [(1.0, 1.0)]

    def test_channel_scenario(self):
        instance = SinrInstance(np.array(FAR_APART))
        scenario = channel_scenario(instance, 2, AvailabilityModel.always(2, 2))
        assert scenario.n == 2 and scenario.m == 2
        _, value = scenario.optimal_outcome(np.ones((2, 2)))
        assert value == pytest.approx(4.0)
