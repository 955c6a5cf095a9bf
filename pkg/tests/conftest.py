"""Shared scenarios for the test suite."""
import numpy as np
import pytest

from src.availability import AvailabilityModel
from src.lattice import ProductLattice, SetFunctionValuation, XOSValuation, BudgetAdditiveSetFunction
from src.mechanisms import RANDOM_TIE, ComposedScenario, first_price_auction

SMALL_GRID = [0.0, 1.0, 2.0]


def additive_xos(values):
    """Single-clause XOS valuation giving values[j] for winning item j."""
    lattice = ProductLattice.boolean(len(values))
    return XOSValuation(lattice, [[[0.0, float(v)] for v in values]])


def unit_demand_xos(values):
    lattice = ProductLattice.boolean(len(values))
    family = [
        [[0.0, float(v)] if j == k else [0.0, 0.0] for j in range(len(values))]
        for k, v in enumerate(values)
    ]
    return XOSValuation(lattice, family)


def fpa_scenario(valuations, availability, grid=SMALL_GRID):
    m = valuations[0].lattice.m
    mechanisms = [first_price_auction([0.0] * len(valuations), grid) for _ in range(m)]
    return ComposedScenario(mechanisms, valuations, availability)


@pytest.fixture
def fpa_pair():
    """Two bidders, one discrete first-price auction, bids {0, 1, 2}."""
    return first_price_auction([2.0, 2.0], SMALL_GRID)


@pytest.fixture
def eon_scenario():
    """Two bidders, two first-price auctions, everybody-or-nobody with q = 1/2."""
    valuations = [additive_xos([2.0, 2.0]), unit_demand_xos([2.0, 2.0])]
    return fpa_scenario(valuations, AvailabilityModel.everybody_or_nobody(2, [0.5, 0.5]))


@pytest.fixture
def independent_scenario():
    lattice = ProductLattice.boolean(2)
    valuations = [
        SetFunctionValuation(lattice, BudgetAdditiveSetFunction([2.0, 2.0], 3.0)),
        additive_xos([2.0, 2.0]),
    ]
    return fpa_scenario(valuations, AvailabilityModel.independent(np.full((2, 2), 0.5)))


@pytest.fixture
def random_tie_scenario():
    """Two bidders valuing each of two random-tie first-price items at 2, always admitted."""
    mechanisms = [first_price_auction([0.0, 0.0], SMALL_GRID, tie_rule=RANDOM_TIE) for _ in range(2)]
    valuations = [additive_xos([2.0, 2.0]), additive_xos([2.0, 2.0])]
    return ComposedScenario(mechanisms, valuations, AvailabilityModel.always(2, 2))
