"""
Finite outcome lattices, their products, and valuation functions over outcome vectors.

Outcome vectors are plain tuples of element indices, one per lattice factor.
Valuation tables are keyed by these canonical index tuples.
"""
import itertools
import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.errors import (
    BudgetExceededError,
    ConfigurationError,
    InvalidOutcomeError,
    InvalidValuationError,
)

logger = logging.getLogger(__name__)

TOL = 1e-9
DEFAULT_CHECK_BUDGET = 10**7

OutcomeVector = Tuple[int, ...]


class OutcomeLattice:
    """A finite lattice stored as a reflexive-transitive comparison table."""

    def __init__(self, elements: Sequence[str], leq: np.ndarray, bottom: int = 0):
        self.elements: Tuple[str, ...] = tuple(str(e) for e in elements)
        self.leq = np.array(leq, dtype=bool)
        self.bottom = int(bottom)
        self.leq.setflags(write=False)
        self._validate_order()
        self._join_table, self._meet_table = self._bound_tables()

    # --- constructors ---

    @classmethod
    def chain(cls, labels: Sequence[str]) -> "OutcomeLattice":
        """Totally ordered lattice, first label is bottom."""
        size = len(labels)
        leq = np.tril(np.ones((size, size), dtype=bool)).T
        return cls(labels, leq, bottom=0)

    @classmethod
    def boolean(cls, lose: str = "lose", win: str = "win") -> "OutcomeLattice":
        """The 2-element win/lose lattice every single-item auction uses."""
        return cls.chain([lose, win])

    @classmethod
    def from_covering(
        cls, elements: Sequence[str], covers: Sequence[Tuple[str, str]]
    ) -> "OutcomeLattice":
        """Build from a covering relation given as (lower, upper) label pairs."""
        index = {label: pos for pos, label in enumerate(elements)}
        size = len(elements)
        leq = np.eye(size, dtype=bool)
        for lower, upper in covers:
            if lower not in index or upper not in index:
                raise ConfigurationError(f"covering pair ({lower}, {upper}) names an unknown element")
            leq[index[lower], index[upper]] = True
        # Warshall closure
        for k in range(size):
            leq |= leq[:, [k]] & leq[[k], :]
        minimal = [a for a in range(size) if leq[a, :].all()]
        if len(minimal) != 1:
            raise ConfigurationError("lattice has no unique bottom element")
        return cls(elements, leq, bottom=minimal[0])

    # --- structure ---

    @property
    def size(self) -> int:
        return len(self.elements)

    def index(self, label: str) -> int:
        try:
            return self.elements.index(label)
        except ValueError:
            raise InvalidOutcomeError(f"unknown outcome label {label!r}") from None

    def _validate_order(self):
        size = self.size
        if self.leq.shape != (size, size) or size == 0:
            raise ConfigurationError("comparison table must be square and non-empty")
        if not self.leq.diagonal().all():
            raise ConfigurationError("order is not reflexive")
        if (self.leq & self.leq.T & ~np.eye(size, dtype=bool)).any():
            raise ConfigurationError("order is not antisymmetric")
        closure = (self.leq.astype(np.int64) @ self.leq.astype(np.int64)) > 0
        if (closure & ~self.leq).any():
            raise ConfigurationError("order is not transitive")
        if not self.leq[self.bottom, :].all():
            raise ConfigurationError(f"{self.elements[self.bottom]!r} is not below every element")

    def _bound_tables(self) -> Tuple[np.ndarray, np.ndarray]:
        size = self.size
        join = np.empty((size, size), dtype=np.int64)
        meet = np.empty((size, size), dtype=np.int64)
        for a in range(size):
            for b in range(size):
                join[a, b] = self._least(np.flatnonzero(self.leq[a, :] & self.leq[b, :]), a, b, upper=True)
                meet[a, b] = self._least(np.flatnonzero(self.leq[:, a] & self.leq[:, b]), a, b, upper=False)
        join.setflags(write=False)
        meet.setflags(write=False)
        return join, meet

    def _least(self, bounds: np.ndarray, a: int, b: int, upper: bool) -> int:
        for c in bounds:
            below = self.leq[c, bounds] if upper else self.leq[bounds, c]
            if below.all():
                return int(c)
        kind = "join" if upper else "meet"
        raise ConfigurationError(
            f"elements {self.elements[a]!r} and {self.elements[b]!r} have no unique {kind}"
        )

    def join(self, a: int, b: int) -> int:
        return int(self._join_table[a, b])

    def meet(self, a: int, b: int) -> int:
        return int(self._meet_table[a, b])

    @property
    def join_table(self) -> np.ndarray:
        return self._join_table

    @property
    def meet_table(self) -> np.ndarray:
        return self._meet_table

    def is_distributive(self) -> bool:
        j, m = self._join_table, self._meet_table
        for a, b, c in itertools.product(range(self.size), repeat=3):
            if j[a, m[b, c]] != m[j[a, b], j[a, c]]:
                return False
        return True

    def covering_pairs(self) -> List[Tuple[str, str]]:
        """Covering relation as label pairs (used for serialization)."""
        pairs = []
        for a, b in itertools.permutations(range(self.size), 2):
            if not self.leq[a, b]:
                continue
            between = self.leq[a, :] & self.leq[:, b]
            between[[a, b]] = False
            if not between.any():
                pairs.append((self.elements[a], self.elements[b]))
        return pairs

    def to_dict(self) -> Dict:
        return {"elements": list(self.elements), "covers": [list(p) for p in self.covering_pairs()]}

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, OutcomeLattice)
            and self.elements == other.elements
            and self.bottom == other.bottom
            and np.array_equal(self.leq, other.leq)
        )

    def __hash__(self) -> int:
        return hash((self.elements, self.bottom, self.leq.tobytes()))

    def __repr__(self) -> str:
        return f"OutcomeLattice({list(self.elements)})"


@dataclass(frozen=True)
class ProductLattice:
    """Componentwise product of outcome lattices."""

    factors: Tuple[OutcomeLattice, ...]

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))

    @classmethod
    def boolean(cls, m: int) -> "ProductLattice":
        return cls(tuple(OutcomeLattice.boolean() for _ in range(m)))

    @property
    def m(self) -> int:
        return len(self.factors)

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(f.size for f in self.factors)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape, dtype=np.int64)) if self.factors else 1

    def bottom(self) -> OutcomeVector:
        return tuple(f.bottom for f in self.factors)

    def validate(self, x: Sequence[int]) -> OutcomeVector:
        if len(x) != self.m:
            raise InvalidOutcomeError(f"outcome vector has {len(x)} components, lattice has {self.m}")
        for j, (component, factor) in enumerate(zip(x, self.factors)):
            if not 0 <= int(component) < factor.size:
                raise InvalidOutcomeError(f"component {j} = {component} is not an element of its factor")
        return tuple(int(c) for c in x)

    def join(self, x: Sequence[int], y: Sequence[int]) -> OutcomeVector:
        x, y = self.validate(x), self.validate(y)
        return tuple(f.join(a, b) for f, a, b in zip(self.factors, x, y))

    def meet(self, x: Sequence[int], y: Sequence[int]) -> OutcomeVector:
        x, y = self.validate(x), self.validate(y)
        return tuple(f.meet(a, b) for f, a, b in zip(self.factors, x, y))

    def leq(self, x: Sequence[int], y: Sequence[int]) -> bool:
        return all(bool(f.leq[a, b]) for f, a, b in zip(self.factors, x, y))

    def matches(self, other: "ProductLattice") -> bool:
        """Same factor sizes, orders and bottoms; factor objects may differ."""
        return self.shape == other.shape and all(
            f.bottom == g.bottom and np.array_equal(f.leq, g.leq) for f, g in zip(self.factors, other.factors)
        )

    def elements(self):
        return itertools.product(*(range(f.size) for f in self.factors))

    def flat_index(self, x: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(x), self.shape)) if self.factors else 0

    def coordinates(self) -> np.ndarray:
        """Every element as a row of component indices, in flat-index order."""
        if not self.factors:
            return np.zeros((1, 0), dtype=np.int64)
        grids = np.indices(self.shape).reshape(self.m, -1).T
        return grids.astype(np.int64)

    def _pairwise(self, tables: Sequence[np.ndarray]) -> np.ndarray:
        coords = self.coordinates()
        parts = [table[coords[:, j][:, None], coords[:, j][None, :]] for j, table in enumerate(tables)]
        return np.ravel_multi_index(tuple(parts), self.shape) if self.factors else np.zeros((1, 1), dtype=np.int64)

    def join_index_table(self) -> np.ndarray:
        return self._pairwise([f.join_table for f in self.factors])

    def meet_index_table(self) -> np.ndarray:
        return self._pairwise([f.meet_table for f in self.factors])

    def leq_table(self) -> np.ndarray:
        coords = self.coordinates()
        result = np.ones((self.size, self.size), dtype=bool)
        for j, f in enumerate(self.factors):
            result &= f.leq[coords[:, j][:, None], coords[:, j][None, :]]
        return result

    def is_distributive(self) -> bool:
        return all(f.is_distributive() for f in self.factors)


def join(lattice: ProductLattice, x: Sequence[int], y: Sequence[int]) -> OutcomeVector:
    return lattice.join(x, y)


def meet(lattice: ProductLattice, x: Sequence[int], y: Sequence[int]) -> OutcomeVector:
    return lattice.meet(x, y)


# ---------------------------------------------------------------------------
# Valuations
# ---------------------------------------------------------------------------


class Valuation(ABC):
    """Monotone, normalized valuation over the outcome vectors of one bidder."""

    kind: str = "abstract"

    def __init__(self, lattice: ProductLattice):
        self.lattice = lattice
        self._dense: Optional[np.ndarray] = None

    @abstractmethod
    def value(self, x: OutcomeVector) -> float:
        ...

    @abstractmethod
    def scaled(self, factor: float) -> "Valuation":
        ...

    @abstractmethod
    def to_dict(self) -> Dict:
        ...

    def __call__(self, x: Sequence[int]) -> float:
        return self.value(tuple(int(c) for c in x))

    def as_array(self) -> np.ndarray:
        """Dense table over the lattice shape; cached, read-only."""
        if self._dense is None:
            dense = np.zeros(self.lattice.shape, dtype=float)
            for x in self.lattice.elements():
                dense[x] = self.value(x)
            dense.setflags(write=False)
            self._dense = dense
        return self._dense

    def max_value(self) -> float:
        return float(self.as_array().max())

    def _check_normalized(self):
        if abs(self.value(self.lattice.bottom())) > TOL:
            raise InvalidValuationError("valuation must be 0 on the bottom vector")


class TableValuation(Valuation):
    """Explicit value table keyed by canonical component-index tuples."""

    kind = "table"

    def __init__(
        self, lattice: ProductLattice, table: Mapping[Tuple[int, ...], float], normalized: bool = True
    ):
        super().__init__(lattice)
        entries = {}
        for key, val in table.items():
            key = lattice.validate(key)
            if val < 0:
                raise InvalidValuationError(f"negative value {val} at {key}")
            entries[key] = float(val)
        missing = lattice.size - len(entries)
        if missing:
            raise InvalidValuationError(f"table is missing {missing} outcome vectors")
        self.table: Dict[OutcomeVector, float] = entries
        # checkers need to load deliberately broken tables
        if normalized:
            self._check_normalized()

    @classmethod
    def from_function(cls, lattice: ProductLattice, fn: Callable[[OutcomeVector], float]) -> "TableValuation":
        return cls(lattice, {x: fn(x) for x in lattice.elements()})

    def value(self, x: OutcomeVector) -> float:
        return self.table[x]

    def scaled(self, factor: float) -> "TableValuation":
        return TableValuation(self.lattice, {x: factor * v for x, v in self.table.items()})

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "table": [{"outcome": list(x), "value": v} for x, v in sorted(self.table.items())],
        }


class XOSValuation(Valuation):
    """Pointwise maximum of additive clauses v^k(x) = sum_j v^k_j(x_j)."""

    kind = "xos"

    def __init__(self, lattice: ProductLattice, family: Sequence[Sequence[Sequence[float]]]):
        super().__init__(lattice)
        if not family:
            raise InvalidValuationError("XOS family is empty")
        clauses = []
        for k, clause in enumerate(family):
            if len(clause) != lattice.m:
                raise InvalidValuationError(f"clause {k} has {len(clause)} components, expected {lattice.m}")
            arrays = []
            for j, (table, factor) in enumerate(zip(clause, lattice.factors)):
                arr = np.asarray(table, dtype=float)
                if arr.shape != (factor.size,):
                    raise InvalidValuationError(f"clause {k} component {j} must list {factor.size} values")
                if (arr < 0).any():
                    raise InvalidValuationError(f"clause {k} component {j} has a negative entry")
                if arr[factor.bottom] != 0:
                    raise InvalidValuationError(f"clause {k} component {j} is nonzero at bottom")
                arrays.append(arr)
            clauses.append(tuple(arrays))
        self.family: Tuple[Tuple[np.ndarray, ...], ...] = tuple(clauses)

    def evaluate(self, x: OutcomeVector) -> Tuple[float, int]:
        best, best_index = -np.inf, 0
        for k, clause in enumerate(self.family):
            total = float(sum(clause[j][c] for j, c in enumerate(x)))
            # strict comparison keeps the smallest maximizing index
            if total > best + TOL:
                best, best_index = total, k
        return best, best_index

    def value(self, x: OutcomeVector) -> float:
        return self.evaluate(x)[0]

    def as_array(self) -> np.ndarray:
        if self._dense is None:
            dense = np.full(self.lattice.shape, -np.inf)
            for clause in self.family:
                total = np.zeros(self.lattice.shape)
                for j, arr in enumerate(clause):
                    shape = [1] * self.lattice.m
                    shape[j] = arr.size
                    total = total + arr.reshape(shape)
                dense = np.maximum(dense, total)
            dense.setflags(write=False)
            self._dense = dense
        return self._dense

    def scaled(self, factor: float) -> "XOSValuation":
        return XOSValuation(self.lattice, [[factor * arr for arr in clause] for clause in self.family])

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "family": [[arr.tolist() for arr in clause] for clause in self.family],
        }


# --- named set functions for the set-function adapter ---


class SetFunction(ABC):
    """Picklable set function over item indices."""

    name: str = "abstract"

    @abstractmethod
    def __call__(self, items: FrozenSet[int]) -> float:
        ...

    @abstractmethod
    def params(self) -> Dict:
        ...

    def scaled(self, factor: float) -> "SetFunction":
        return ScaledSetFunction(self, factor)


class AdditiveSetFunction(SetFunction):
    name = "additive"

    def __init__(self, weights: Sequence[float]):
        self.weights = tuple(float(w) for w in weights)

    def __call__(self, items):
        return float(sum(self.weights[j] for j in items))

    def params(self):
        return {"weights": list(self.weights)}


class BudgetAdditiveSetFunction(SetFunction):
    """min(cap, sum of weights), submodular."""

    name = "budget_additive"

    def __init__(self, weights: Sequence[float], cap: float):
        self.weights = tuple(float(w) for w in weights)
        self.cap = float(cap)

    def __call__(self, items):
        return min(self.cap, float(sum(self.weights[j] for j in items)))

    def params(self):
        return {"weights": list(self.weights), "cap": self.cap}


class UnitDemandSetFunction(SetFunction):
    name = "unit_demand"

    def __init__(self, weights: Sequence[float]):
        self.weights = tuple(float(w) for w in weights)

    def __call__(self, items):
        return max((self.weights[j] for j in items), default=0.0)

    def params(self):
        return {"weights": list(self.weights)}


class CoverageSetFunction(SetFunction):
    """Weighted coverage: item j covers ground elements covers[j]."""

    name = "coverage"

    def __init__(self, covers: Sequence[Sequence[int]], weights: Optional[Sequence[float]] = None):
        self.covers = tuple(frozenset(int(e) for e in c) for c in covers)
        ground = sorted(set().union(*self.covers)) if self.covers else []
        if weights is None:
            weights = [1.0] * (max(ground) + 1 if ground else 0)
        self.weights = tuple(float(w) for w in weights)

    def __call__(self, items):
        covered = set()
        for j in items:
            covered |= self.covers[j]
        return float(sum(self.weights[e] for e in covered))

    def params(self):
        return {"covers": [sorted(c) for c in self.covers], "weights": list(self.weights)}


class ScaledSetFunction(SetFunction):
    name = "scaled"

    def __init__(self, base: SetFunction, factor: float):
        self.base = base
        self.factor = float(factor)

    def __call__(self, items):
        return self.factor * self.base(items)

    def params(self):
        return {"base": {"name": self.base.name, **self.base.params()}, "factor": self.factor}


SET_FUNCTIONS = {
    cls.name: cls
    for cls in (AdditiveSetFunction, BudgetAdditiveSetFunction, UnitDemandSetFunction, CoverageSetFunction)
}


class SetFunctionValuation(Valuation):
    """Adapter turning a set function into a valuation on a boolean product lattice."""

    kind = "set_function"

    def __init__(self, lattice: ProductLattice, fn: SetFunction):
        super().__init__(lattice)
        if any(f.size != 2 for f in lattice.factors):
            raise InvalidValuationError("set-function valuations need 2-element factors")
        self.fn = fn
        self._check_normalized()

    def items(self, x: OutcomeVector) -> FrozenSet[int]:
        return frozenset(j for j, (c, f) in enumerate(zip(x, self.lattice.factors)) if c != f.bottom)

    def value(self, x: OutcomeVector) -> float:
        val = float(self.fn(self.items(x)))
        if val < -TOL:
            raise InvalidValuationError(f"set function returned negative value {val}")
        return val

    def scaled(self, factor: float) -> "SetFunctionValuation":
        return SetFunctionValuation(self.lattice, self.fn.scaled(factor))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "function": self.fn.name, **self.fn.params()}


def eval_xos(v: Valuation, x: Sequence[int]) -> Tuple[float, int]:
    """Value and smallest maximizing clause index of an XOS valuation."""
    if not isinstance(v, XOSValuation):
        raise InvalidValuationError(f"eval_xos needs an XOS valuation, got kind {v.kind!r}")
    return v.evaluate(v.lattice.validate(x))


def supporting_tables(v: Valuation, x: Sequence[int]) -> Tuple[int, List[np.ndarray]]:
    """
    Additive support of v at x: per-component tables a_j with sum_j a_j(x_j) = v(x).

    XOS valuations return their maximizing clause; every other kind returns the
    telescoping marginals a_j(y) = v(x_<j, y ^ x_j, bottom) - v(x_<j, bottom).
    """
    lattice = v.lattice
    x = lattice.validate(x)
    if isinstance(v, XOSValuation):
        _, index = v.evaluate(x)
        return index, [arr.copy() for arr in v.family[index]]
    bottom = lattice.bottom()
    tables = []
    for j, factor in enumerate(lattice.factors):
        prefix = x[:j]
        base = v.value(prefix + bottom[j:])
        table = np.zeros(factor.size)
        for y in range(factor.size):
            point = prefix + (factor.meet(y, x[j]),) + bottom[j + 1:]
            table[y] = v.value(point) - base
        tables.append(table)
    return 0, tables


# ---------------------------------------------------------------------------
# Property checkers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CheckResult:
    ok: bool
    counterexample: Optional[Tuple[OutcomeVector, ...]] = None
    checked: int = 0
    mode: str = "exact"

    def __bool__(self) -> bool:
        return self.ok

    def to_dict(self) -> Dict:
        return {
            "ok": self.ok,
            "counterexample": [list(c) for c in self.counterexample] if self.counterexample else None,
            "checked": self.checked,
            "mode": self.mode,
        }


def _coords(lattice: ProductLattice, flat: int) -> OutcomeVector:
    return tuple(int(c) for c in np.unravel_index(int(flat), lattice.shape)) if lattice.factors else ()


def _checked_lattice(what: str, v: Valuation, lattice: Optional[ProductLattice]) -> ProductLattice:
    if lattice is not None and not lattice.matches(v.lattice):
        raise ConfigurationError(
            f"{what}: lattice of shape {lattice.shape} does not match the valuation's lattice {v.lattice.shape}"
        )
    return v.lattice


def _guard(what: str, required: int, budget: int):
    if required > budget:
        raise BudgetExceededError(what, required, budget, hint="use sampled checking")


def check_dmr(
    v: Valuation,
    lattice: Optional[ProductLattice] = None,
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: Optional[int] = None,
    seed: Optional[int] = None,
) -> CheckResult:
    """
    Diminishing marginal returns: for z >= y and any t,
    v(t v y) - v(y) >= v(t v z) - v(z).

    With ``samples`` set, random triples are checked instead of the full
    enumeration (the only way past the budget).
    """
    lattice = _checked_lattice("check_dmr", v, lattice)
    values = v.as_array().ravel()
    size = lattice.size
    if samples is not None:
        return _check_dmr_sampled(values, lattice, samples, seed)
    _guard("check_dmr", size**3, budget)
    joins = lattice.join_index_table()
    order = lattice.leq_table()
    checked = 0
    for y in range(size):
        gain_y = values[joins[:, y]] - values[y]
        zs = np.flatnonzero(order[y, :])
        gain_z = values[joins[:, zs]] - values[zs][None, :]
        bad = gain_y[:, None] < gain_z - TOL
        checked += bad.size
        if bad.any():
            t, zi = np.argwhere(bad)[0]
            example = (_coords(lattice, zs[zi]), _coords(lattice, y), _coords(lattice, t))
            logger.debug("DMR violated at z=%s y=%s t=%s", *example)
            return CheckResult(False, example, checked)
    return CheckResult(True, None, checked)


def _check_dmr_sampled(values: np.ndarray, lattice: ProductLattice, samples: int, seed: Optional[int]) -> CheckResult:
    rng = np.random.Generator(np.random.Philox(seed))
    for n in range(samples):
        y = tuple(int(rng.integers(f.size)) for f in lattice.factors)
        up = tuple(int(rng.integers(f.size)) for f in lattice.factors)
        t = tuple(int(rng.integers(f.size)) for f in lattice.factors)
        z = lattice.join(y, up)
        val = lambda x: values[lattice.flat_index(x)]
        lhs = val(lattice.join(t, y)) - val(y)
        rhs = val(lattice.join(t, z)) - val(z)
        if lhs < rhs - TOL:
            return CheckResult(False, (z, y, t), n + 1, mode="sampled")
    return CheckResult(True, None, samples, mode="sampled")


def check_submodular(
    v: Valuation, lattice: Optional[ProductLattice] = None, budget: int = DEFAULT_CHECK_BUDGET
) -> CheckResult:
    """v(x v y) + v(x ^ y) <= v(x) + v(y) over all pairs."""
    lattice = _checked_lattice("check_submodular", v, lattice)
    values = v.as_array().ravel()
    _guard("check_submodular", lattice.size**2, budget)
    joins = lattice.join_index_table()
    meets = lattice.meet_index_table()
    lhs = values[joins] + values[meets]
    rhs = values[:, None] + values[None, :]
    bad = lhs > rhs + TOL
    if bad.any():
        x, y = np.argwhere(bad)[0]
        return CheckResult(False, (_coords(lattice, x), _coords(lattice, y)), int(bad.size))
    return CheckResult(True, None, int(bad.size))


def compare_submodularity(v: Valuation, budget: int = DEFAULT_CHECK_BUDGET) -> Dict:
    """Run both formulations; on distributive lattices they should agree."""
    dmr = check_dmr(v, budget=budget)
    sub = check_submodular(v, budget=budget)
    agree = dmr.ok == sub.ok
    if not agree:
        logger.warning(
            "DMR (%s) and lattice submodularity (%s) disagree (distributive=%s)",
            dmr.ok, sub.ok, v.lattice.is_distributive(),
        )
    return {"dmr": dmr.to_dict(), "submodular": sub.to_dict(), "agree": agree,
            "distributive": v.lattice.is_distributive()}


def check_monotone(
    v: Valuation, lattice: Optional[ProductLattice] = None, budget: int = DEFAULT_CHECK_BUDGET
) -> CheckResult:
    """x <= y implies v(x) <= v(y) over all comparable pairs."""
    lattice = _checked_lattice("check_monotone", v, lattice)
    _guard("check_monotone", lattice.size**2, budget)
    values = v.as_array().ravel()
    order = lattice.leq_table()
    bad = order & (values[:, None] > values[None, :] + TOL)
    if bad.any():
        x, y = np.argwhere(bad)[0]
        return CheckResult(False, (_coords(lattice, x), _coords(lattice, y)), int(order.sum()))
    return CheckResult(True, None, int(order.sum()))
