import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from src.errors import BudgetExceededError, ConfigurationError, InvalidOutcomeError, InvalidValuationError
from src.lattice import (
    AdditiveSetFunction,
    BudgetAdditiveSetFunction,
    CoverageSetFunction,
    OutcomeLattice,
    ProductLattice,
    SetFunctionValuation,
    TableValuation,
    XOSValuation,
    check_dmr,
    check_monotone,
    check_submodular,
    compare_submodularity,
    eval_xos,
    join,
    meet,
    supporting_tables,
)


def diamond():
    return OutcomeLattice.from_covering(["0", "a", "b", "1"], [("0", "a"), ("0", "b"), ("a", "1"), ("b", "1")])


def pentagon():
    return OutcomeLattice.from_covering(
        ["0", "a", "c", "b", "1"], [("0", "a"), ("a", "c"), ("c", "1"), ("0", "b"), ("b", "1")]
    )


def chain_products():
    return st.lists(st.integers(min_value=1, max_value=3), min_size=1, max_size=4).map(
        lambda sizes: ProductLattice(tuple(OutcomeLattice.chain([str(k) for k in range(s)]) for s in sizes))
    )


@st.composite
def lattice_with_points(draw, count=3):
    lattice = draw(chain_products())
    points = [
        tuple(draw(st.integers(min_value=0, max_value=f.size - 1)) for f in lattice.factors)
        for _ in range(count)
    ]
    return lattice, points


class TestOutcomeLattice:
    def test_chain_join_meet(self):
        chain = OutcomeLattice.chain(["low", "mid", "high"])
        assert chain.join(0, 2) == 2
        assert chain.meet(1, 2) == 1
        assert chain.bottom == 0
        assert chain.is_distributive()

    def test_covering_closure(self):
        lat = pentagon()
        assert lat.leq[lat.index("0"), lat.index("1")]
        assert lat.leq[lat.index("a"), lat.index("1")]
        assert not lat.leq[lat.index("a"), lat.index("b")]

    def test_diamond_is_distributive(self):
        lat = diamond()
        assert lat.join(lat.index("a"), lat.index("b")) == lat.index("1")
        assert lat.meet(lat.index("a"), lat.index("b")) == lat.index("0")
        assert lat.is_distributive()

    def test_pentagon_is_not_distributive(self):
        assert not pentagon().is_distributive()

    def test_unknown_label(self):
        with pytest.raises(InvalidOutcomeError):
            diamond().index("z")

    def test_missing_bottom_rejected(self):
        with pytest.raises(ConfigurationError):
            OutcomeLattice.from_covering(["a", "b"], [])

    def test_non_lattice_rejected(self):
        # two incomparable upper bounds for a and b
        with pytest.raises(ConfigurationError):
            OutcomeLattice.from_covering(
                ["0", "a", "b", "c", "d"],
                [("0", "a"), ("0", "b"), ("a", "c"), ("b", "c"), ("a", "d"), ("b", "d")],
            )

    def test_round_trip_through_covers(self):
        lat = pentagon()
        data = lat.to_dict()
        rebuilt = OutcomeLattice.from_covering(data["elements"], [tuple(p) for p in data["covers"]])
        assert rebuilt == lat


class TestProductLattice:
    def test_componentwise(self):
        lattice = ProductLattice((OutcomeLattice.chain(["0", "1", "2"]), diamond()))
        a, b = diamond().index("a"), diamond().index("b")
        assert join(lattice, (0, a), (2, b)) == (2, diamond().index("1"))
        assert meet(lattice, (1, a), (2, b)) == (1, diamond().index("0"))

    def test_out_of_range_component(self):
        lattice = ProductLattice.boolean(2)
        with pytest.raises(InvalidOutcomeError):
            lattice.join((0, 2), (0, 0))
        with pytest.raises(InvalidOutcomeError):
            lattice.meet((0,), (0, 0))

    @given(lattice_with_points())
    def test_lattice_laws(self, case):
        lattice, (x, y, z) = case
        assert lattice.join(x, y) == lattice.join(y, x)
        assert lattice.meet(x, y) == lattice.meet(y, x)
        assert lattice.join(x, x) == x
        assert lattice.join(x, lattice.meet(x, y)) == x
        assert lattice.meet(x, lattice.join(x, y)) == x
        assert lattice.join(lattice.join(x, y), z) == lattice.join(x, lattice.join(y, z))
        assert lattice.leq(x, lattice.join(x, y))
        assert lattice.leq(lattice.meet(x, y), y)

    @settings(max_examples=25, deadline=None)
    @given(chain_products())
    def test_index_tables_match_pointwise(self, lattice):
        joins = lattice.join_index_table()
        for x, y in itertools.product(lattice.elements(), repeat=2):
            expected = lattice.flat_index(lattice.join(x, y))
            assert joins[lattice.flat_index(x), lattice.flat_index(y)] == expected


class TestValuations:
    def test_xos_smallest_maximizing_clause(self):
        lattice = ProductLattice.boolean(2)
        v = XOSValuation(lattice, [[[0, 1], [0, 1]], [[0, 2], [0, 0]], [[0, 2], [0, 0]]])
        assert eval_xos(v, (1, 0)) == (2.0, 1)
        assert eval_xos(v, (1, 1)) == (2.0, 0)
        assert eval_xos(v, (0, 0)) == (0.0, 0)

    def test_eval_xos_rejects_other_kinds(self):
        v = SetFunctionValuation(ProductLattice.boolean(1), AdditiveSetFunction([1.0]))
        with pytest.raises(InvalidValuationError):
            eval_xos(v, (1,))

    def test_xos_dense_table(self):
        lattice = ProductLattice.boolean(2)
        v = XOSValuation(lattice, [[[0, 1], [0, 1]], [[0, 3], [0, 0]]])
        dense = v.as_array()
        for x in lattice.elements():
            assert dense[x] == pytest.approx(v.value(x))

    def test_xos_rejects_empty_and_negative(self):
        lattice = ProductLattice.boolean(1)
        with pytest.raises(InvalidValuationError):
            XOSValuation(lattice, [])
        with pytest.raises(InvalidValuationError):
            XOSValuation(lattice, [[[0, -1]]])
        with pytest.raises(InvalidValuationError):
            XOSValuation(lattice, [[[1, 2]]])

    def test_table_valuation_must_be_complete_and_normalized(self):
        lattice = ProductLattice.boolean(1)
        with pytest.raises(InvalidValuationError):
            TableValuation(lattice, {(1,): 1.0})
        with pytest.raises(InvalidValuationError):
            TableValuation(lattice, {(0,): 1.0, (1,): 2.0})
        broken = TableValuation(lattice, {(0,): 1.0, (1,): 2.0}, normalized=False)
        assert broken.value((1,)) == 2.0

    def test_scaling_keeps_kind(self):
        lattice = ProductLattice.boolean(2)
        v = SetFunctionValuation(lattice, BudgetAdditiveSetFunction([2, 2], 3))
        w = v.scaled(0.5)
        assert w.kind == v.kind
        assert w.value((1, 1)) == pytest.approx(1.5)
        x = XOSValuation(lattice, [[[0, 2], [0, 1]]]).scaled(2.0)
        assert x.value((1, 1)) == pytest.approx(6.0)

    @pytest.mark.parametrize("x", [(0, 0), (1, 0), (0, 1), (1, 1)])
    def test_supporting_tables_add_up(self, x):
        lattice = ProductLattice.boolean(2)
        v = SetFunctionValuation(lattice, CoverageSetFunction([[0, 1], [1, 2]]))
        _, tables = supporting_tables(v, x)
        assert sum(t[c] for t, c in zip(tables, x)) == pytest.approx(v.value(x))
        for y in lattice.elements():
            assert sum(t[c] for t, c in zip(tables, y)) <= v.value(y) + 1e-9

    def test_supporting_tables_of_xos_is_the_clause(self):
        lattice = ProductLattice.boolean(2)
        v = XOSValuation(lattice, [[[0, 1], [0, 1]], [[0, 3], [0, 0]]])
        index, tables = supporting_tables(v, (1, 0))
        assert index == 1
        assert tables[0].tolist() == [0.0, 3.0]


class TestPropertyCheckers:
    def test_coverage_is_dmr(self):
        v = SetFunctionValuation(ProductLattice.boolean(3), CoverageSetFunction([[0], [0, 1], [2]]))
        assert check_dmr(v).ok
        assert check_submodular(v).ok
        assert check_monotone(v).ok

    def test_complements_violate_dmr(self):
        lattice = ProductLattice.boolean(2)
        v = TableValuation(lattice, {(0, 0): 0, (1, 0): 0, (0, 1): 0, (1, 1): 2})
        result = check_dmr(v)
        assert not result.ok
        assert result.counterexample is not None
        assert not check_submodular(v).ok

    def test_decreasing_table_is_not_monotone(self):
        lattice = ProductLattice.boolean(1)
        v = TableValuation(lattice, {(0,): 1.0, (1,): 0.0}, normalized=False)
        assert not check_monotone(v).ok

    def test_budget_guard(self):
        v = SetFunctionValuation(ProductLattice.boolean(4), AdditiveSetFunction([1, 1, 1, 1]))
        with pytest.raises(BudgetExceededError) as err:
            check_dmr(v, budget=100)
        assert err.value.budget == 100
        assert check_dmr(v, samples=200, seed=1).mode == "sampled"

    @settings(max_examples=60, deadline=None)
    @given(
        weights=st.lists(st.floats(min_value=0, max_value=5, allow_nan=False), min_size=1, max_size=4),
        cap=st.floats(min_value=0.5, max_value=10, allow_nan=False),
    )
    def test_budget_additive_agrees_on_both_formulations(self, weights, cap):
        v = SetFunctionValuation(ProductLattice.boolean(len(weights)), BudgetAdditiveSetFunction(weights, cap))
        report = compare_submodularity(v)
        assert report["distributive"]
        assert report["agree"]
        assert report["dmr"]["ok"]

    def test_chain_factor_dmr(self):
        chain = OutcomeLattice.chain(["0", "1", "2"])
        lattice = ProductLattice((chain, chain))
        concave = TableValuation.from_function(lattice, lambda x: float(np.sqrt(x[0] + x[1])))
        convex = TableValuation.from_function(lattice, lambda x: float((x[0] + x[1]) ** 2))
        assert check_dmr(concave).ok
        assert not check_dmr(convex).ok

    def test_equal_lattice_objects_are_accepted(self):
        v = SetFunctionValuation(ProductLattice.boolean(2), AdditiveSetFunction([1, 2]))
        assert check_dmr(v, ProductLattice.boolean(2)).ok
        assert check_monotone(v, v.lattice).ok

    @pytest.mark.parametrize("checker", [check_dmr, check_submodular, check_monotone])
    def test_mismatched_lattice_is_rejected(self, checker):
        v = SetFunctionValuation(ProductLattice.boolean(2), AdditiveSetFunction([1, 2]))
        with pytest.raises(ConfigurationError, match="does not match"):
            checker(v, ProductLattice.boolean(3))

    def test_same_shape_different_order_is_rejected(self):
        chain = OutcomeLattice.chain(["0", "a", "b", "1"])
        v = TableValuation.from_function(ProductLattice((chain,)), lambda x: float(x[0]))
        with pytest.raises(ConfigurationError):
            check_dmr(v, ProductLattice((diamond(),)))
