"""
Single mechanisms over finite bid grids and their simultaneous composition
under availability masking.
"""
import itertools
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from src.availability import AvailabilityModel, AvailabilityRealization, make_rng
from src.errors import (
    BudgetExceededError,
    ConfigurationError,
    InvalidGridError,
    InvalidOutcomeError,
    ParameterError,
)
from src.lattice import OutcomeLattice, ProductLattice, Valuation, TOL

logger = logging.getLogger(__name__)

LOWEST_INDEX = "lowest_index"
RANDOM_TIE = "random"

DEFAULT_OPTIMUM_BUDGET = 10**6
MAX_RANDOM_TIE_BIDDERS = 6

Bid = float
BidDistribution = List[Tuple[Bid, float]]
MechanismOutcome = Tuple[int, ...]


def _check_grid(grid: Sequence[float]) -> Tuple[float, ...]:
    values = tuple(float(b) for b in grid)
    if 0.0 not in values:
        raise InvalidGridError(f"bid grid {list(values)} must contain the bid 0")
    if any(b < 0 for b in values):
        raise InvalidGridError("bids must be nonnegative")
    if list(values) != sorted(set(values)):
        raise InvalidGridError("bid grid must be strictly increasing")
    return values


class Mechanism(ABC):
    """
    Outcome function and payments over per-bidder bid grids.

    Every grid starts with the bid 0; bidding 0 yields the bottom outcome and
    payment 0 for that bidder. Subclasses also register the smoothness
    deviation rule used by the verification code.
    """

    kind: str = "abstract"
    randomized: bool = False

    def __init__(self, grids: Sequence[Sequence[float]], factors: Sequence[OutcomeLattice]):
        if len(grids) != len(factors):
            raise ConfigurationError("one bid grid and one outcome lattice per bidder")
        self.grids: Tuple[Tuple[float, ...], ...] = tuple(_check_grid(g) for g in grids)
        self.factors: Tuple[OutcomeLattice, ...] = tuple(factors)
        self._tables: Dict[int, Tuple[np.ndarray, np.ndarray]] = {}
        self._h_cache: Dict[Tuple[int, float, MechanismOutcome], float] = {}

    @property
    def n(self) -> int:
        return len(self.grids)

    @property
    def grid_sizes(self) -> Tuple[int, ...]:
        return tuple(len(g) for g in self.grids)

    def bottom(self) -> MechanismOutcome:
        return tuple(f.bottom for f in self.factors)

    @abstractmethod
    def _evaluate(self, bids: Tuple[float, ...], rng) -> Tuple[MechanismOutcome, Tuple[float, ...]]:
        ...

    @abstractmethod
    def deviation(self, i: int, values: Sequence[np.ndarray]) -> BidDistribution:
        """
        Registered smoothness deviation of bidder i when bidder k values its
        own outcomes by values[k] (an array over factor k, zero at bottom).
        """

    @abstractmethod
    def to_dict(self) -> Dict:
        ...

    def validate_bids(self, bids: Sequence[float]) -> Tuple[float, ...]:
        if len(bids) != self.n:
            raise ConfigurationError(f"expected {self.n} bids, got {len(bids)}")
        bids = tuple(float(b) for b in bids)
        for i, (b, grid) in enumerate(zip(bids, self.grids)):
            if b not in grid:
                raise InvalidGridError(f"bid {b} of bidder {i} is not on its grid")
        return bids

    def evaluate(self, bids: Sequence[float], seed=None) -> Tuple[MechanismOutcome, Tuple[float, ...]]:
        bids = self.validate_bids(bids)
        rng = make_rng(seed) if self.randomized else None
        return self._evaluate(bids, rng)

    def outcome(self, bids: Sequence[float], seed=None) -> MechanismOutcome:
        return self.evaluate(bids, seed)[0]

    def payments(self, bids: Sequence[float], seed=None) -> Tuple[float, ...]:
        return self.evaluate(bids, seed)[1]

    def bid_profiles(self, available: Optional[Sequence[int]] = None):
        """All bid vectors; unavailable bidders are restricted to the bid 0."""
        grids = [
            g if available is None or available[i] else (0.0,)
            for i, g in enumerate(self.grids)
        ]
        return itertools.product(*grids)

    def realization_weights(self) -> np.ndarray:
        """
        Probabilities of the deterministic mechanisms a randomized mechanism
        mixes over; a deterministic mechanism is its own single realization.
        """
        return np.ones(1)

    @property
    def realization_count(self) -> int:
        return len(self.realization_weights())

    def _realize(self, bids: Tuple[float, ...], realization: int) -> Tuple[MechanismOutcome, Tuple[float, ...]]:
        return self._evaluate(bids, None)

    def table(self, realization: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """
        Outcome indices and payments for every bid-index profile, arrays of
        shape grid_sizes + (n,). Randomized mechanisms need the realization.
        """
        if realization is None:
            if self.randomized:
                raise ConfigurationError(
                    f"{self.kind} mechanism is randomized; its outcome table needs a realization index"
                )
            realization = 0
        if not 0 <= realization < self.realization_count:
            raise ConfigurationError(f"realization {realization} out of range for {self.kind} mechanism")
        if realization not in self._tables:
            shape = self.grid_sizes + (self.n,)
            outcomes = np.zeros(shape, dtype=np.int64)
            pays = np.zeros(shape, dtype=float)
            for index in itertools.product(*(range(s) for s in self.grid_sizes)):
                bids = tuple(self.grids[i][k] for i, k in enumerate(index))
                out, pay = self._realize(bids, realization)
                outcomes[index] = out
                pays[index] = pay
            outcomes.setflags(write=False)
            pays.setflags(write=False)
            self._tables[realization] = (outcomes, pays)
        return self._tables[realization]

    def stacked_table(self) -> Tuple[np.ndarray, np.ndarray]:
        """Tables of every realization stacked on a leading axis."""
        tables = [self.table(r) for r in range(self.realization_count)]
        return np.stack([t[0] for t in tables]), np.stack([t[1] for t in tables])

    def bid_index(self, i: int, bid: float) -> int:
        try:
            return self.grids[i].index(float(bid))
        except ValueError:
            raise InvalidGridError(f"bid {bid} of bidder {i} is not on its grid") from None

    def achievable_outcomes(self, available: Optional[Sequence[int]] = None) -> List[MechanismOutcome]:
        """Outcomes some bid vector produces, in descending canonical order."""
        seen = {
            self._realize(bids, r)[0]
            for bids in self.bid_profiles(available)
            for r in range(self.realization_count)
        }
        return sorted(seen, reverse=True)

    def welfare_values(self, values: Sequence[np.ndarray], outcome: MechanismOutcome) -> float:
        return float(sum(values[k][x] for k, x in enumerate(outcome)))


class FirstPriceAuction(Mechanism):
    """Single item, highest bid wins and pays its bid; all-zero bids sell nothing."""

    kind = "first_price"

    def __init__(self, grids: Sequence[Sequence[float]], values: Optional[Sequence[float]] = None,
                 tie_rule: str = LOWEST_INDEX):
        super().__init__(grids, [OutcomeLattice.boolean() for _ in grids])
        if tie_rule not in (LOWEST_INDEX, RANDOM_TIE):
            raise ConfigurationError(f"unknown tie rule {tie_rule!r}")
        self.tie_rule = tie_rule
        self.randomized = tie_rule == RANDOM_TIE
        self.values = tuple(float(v) for v in values) if values is not None else None
        self._orders: List[Tuple[int, ...]] = []
        if self.randomized:
            if self.n > MAX_RANDOM_TIE_BIDDERS:
                raise ConfigurationError(
                    f"random tie-breaking supports at most {MAX_RANDOM_TIE_BIDDERS} bidders, got {self.n}"
                )
            # a uniform priority order picks a uniform winner among any set of leaders
            self._orders = list(itertools.permutations(range(self.n)))

    def realization_weights(self) -> np.ndarray:
        if not self.randomized:
            return np.ones(1)
        return np.full(math.factorial(self.n), 1.0 / math.factorial(self.n))

    def _award(self, bids, pick) -> Tuple[MechanismOutcome, Tuple[float, ...]]:
        top = max(bids)
        outcome = [0] * self.n
        pays = [0.0] * self.n
        if top <= 0:
            return tuple(outcome), tuple(pays)
        winner = pick([i for i, b in enumerate(bids) if b == top])
        outcome[winner] = 1
        pays[winner] = top
        return tuple(outcome), tuple(pays)

    def _evaluate(self, bids, rng):
        if rng is None:
            return self._award(bids, lambda leaders: leaders[0])
        return self._award(bids, lambda leaders: leaders[int(rng.integers(len(leaders)))])

    def _realize(self, bids, realization):
        if not self.randomized:
            return self._evaluate(bids, None)
        order = self._orders[realization]
        return self._award(bids, lambda leaders: min(leaders, key=order.index))

    def deviation(self, i: int, values: Sequence[np.ndarray]) -> BidDistribution:
        # half of the value of the winning outcome, snapped to the grid
        target = float(values[i][1]) / 2.0
        grid = np.array(self.grids[i])
        pos = int(np.argmin(np.abs(grid - target)))
        return [(float(grid[pos]), 1.0)]

    def to_dict(self) -> Dict:
        data = {"kind": self.kind, "grid": list(self.grids[0]), "tie_rule": self.tie_rule}
        if any(g != self.grids[0] for g in self.grids):
            data["grids"] = [list(g) for g in self.grids]
        if self.values is not None:
            data["values"] = list(self.values)
        return data


def first_price_auction(values: Sequence[float], grid: Sequence[float],
                        tie_rule: str = LOWEST_INDEX) -> FirstPriceAuction:
    if any(v < 0 for v in values):
        raise ParameterError("values must be nonnegative")
    return FirstPriceAuction([grid] * len(values), values=values, tie_rule=tie_rule)


class TableMechanism(Mechanism):
    """Mechanism given by an explicit table bid vector -> (outcomes, payments)."""

    kind = "custom_table"

    def __init__(
        self,
        grids: Sequence[Sequence[float]],
        factors: Sequence[OutcomeLattice],
        entries: Mapping[Tuple[float, ...], Tuple[Sequence[int], Sequence[float]]],
        deviation_bids: Optional[Sequence[float]] = None,
    ):
        super().__init__(grids, factors)
        self.entries = {}
        for bids, (out, pay) in entries.items():
            bids = self.validate_bids(bids)
            out = tuple(int(x) for x in out)
            pay = tuple(float(p) for p in pay)
            if len(out) != self.n or len(pay) != self.n:
                raise ConfigurationError(f"table entry {bids} must list {self.n} outcomes and payments")
            for k, x in enumerate(out):
                if not 0 <= x < self.factors[k].size:
                    raise InvalidOutcomeError(f"table entry {bids}: outcome {x} not in factor {k}")
            if any(p < 0 for p in pay):
                raise ConfigurationError(f"table entry {bids} has a negative payment")
            self.entries[bids] = (out, pay)
        missing = int(np.prod(self.grid_sizes)) - len(self.entries)
        if missing:
            raise ConfigurationError(f"custom table is missing {missing} bid vectors")
        self.deviation_bids = tuple(float(b) for b in deviation_bids) if deviation_bids else (0.0,) * self.n
        violation = check_masking(self)
        if violation is not None:
            raise ConfigurationError(f"custom table breaks the zero-bid rule at {violation}")

    def _evaluate(self, bids, rng):
        return self.entries[bids]

    def deviation(self, i: int, values: Sequence[np.ndarray]) -> BidDistribution:
        return [(self.deviation_bids[i], 1.0)]

    def to_dict(self) -> Dict:
        return {
            "kind": self.kind,
            "grids": [list(g) for g in self.grids],
            "lattices": [f.to_dict() for f in self.factors],
            "entries": [
                {"bids": list(b), "outcomes": list(o), "payments": list(p)}
                for b, (o, p) in sorted(self.entries.items())
            ],
            "deviation_bids": list(self.deviation_bids),
        }


def check_masking(mech: Mechanism) -> Optional[Tuple[int, Tuple[float, ...]]]:
    """First (bidder, bid vector) where bidding 0 does not give (bottom, 0), else None."""
    for i in range(mech.n):
        grids = [g if k != i else (0.0,) for k, g in enumerate(mech.grids)]
        for bids in itertools.product(*grids):
            out, pay = mech._evaluate(bids, None)
            if out[i] != mech.factors[i].bottom or pay[i] != 0:
                return i, bids
    return None


def willingness_to_pay(mech: Mechanism, i: int, b_i: float, x_j: Sequence[int]) -> float:
    """
    Largest payment bidder i can face with bid b_i among opponent bids that
    produce the outcome x_j; 0 when no opponent bid vector produces it.
    """
    x_j = tuple(int(c) for c in x_j)
    key = (i, float(b_i), x_j)
    if key in mech._h_cache:
        return mech._h_cache[key]
    mech.bid_index(i, b_i)
    best = None
    grids = [g if k != i else (float(b_i),) for k, g in enumerate(mech.grids)]
    for bids in itertools.product(*grids):
        for r in range(mech.realization_count):
            out, pay = mech._realize(bids, r)
            if out == x_j:
                best = pay[i] if best is None else max(best, pay[i])
    result = 0.0 if best is None else float(best)
    mech._h_cache[key] = result
    return result


# ---------------------------------------------------------------------------
# Composition
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BidProfile:
    """n x m table of bids, bids[i][j] is bidder i's bid in mechanism j."""

    bids: Tuple[Tuple[float, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "bids", tuple(tuple(float(b) for b in row) for row in self.bids))

    @classmethod
    def zeros(cls, n: int, m: int) -> "BidProfile":
        return cls(tuple((0.0,) * m for _ in range(n)))

    def column(self, j: int) -> Tuple[float, ...]:
        return tuple(row[j] for row in self.bids)

    def replace(self, i: int, own: Sequence[float]) -> "BidProfile":
        rows = list(self.bids)
        rows[i] = tuple(float(b) for b in own)
        return BidProfile(tuple(rows))

    def __eq__(self, other) -> bool:
        return isinstance(other, BidProfile) and self.bids == other.bids

    def __hash__(self) -> int:
        return hash(self.bids)


class ComposedScenario:
    """n bidders, m simultaneous mechanisms, bidder valuations and admission model."""

    def __init__(
        self,
        mechanisms: Sequence[Mechanism],
        valuations: Sequence[Valuation],
        availability: AvailabilityModel,
        optimum_budget: int = DEFAULT_OPTIMUM_BUDGET,
    ):
        self.mechanisms: Tuple[Mechanism, ...] = tuple(mechanisms)
        self.valuations: Tuple[Valuation, ...] = tuple(valuations)
        self.availability = availability
        self.optimum_budget = optimum_budget
        if not self.mechanisms:
            raise ConfigurationError("scenario needs at least one mechanism")
        n = self.mechanisms[0].n
        if any(mech.n != n for mech in self.mechanisms):
            raise ConfigurationError("all mechanisms must have the same bidder count")
        if len(self.valuations) != n:
            raise ConfigurationError(f"expected {n} valuations, got {len(self.valuations)}")
        if (availability.n, availability.m) != (n, self.m):
            raise ConfigurationError(
                f"availability is {availability.n} x {availability.m}, scenario is {n} x {self.m}"
            )
        for i, v in enumerate(self.valuations):
            expected = self.bidder_lattice(i)
            if v.lattice.factors != expected.factors:
                raise ConfigurationError(f"valuation of bidder {i} does not match the mechanisms' outcome spaces")
        self._achievable: Dict[Tuple[int, Tuple[int, ...]], List[MechanismOutcome]] = {}

    @property
    def n(self) -> int:
        return self.mechanisms[0].n

    @property
    def m(self) -> int:
        return len(self.mechanisms)

    def with_availability(self, availability: AvailabilityModel) -> "ComposedScenario":
        return ComposedScenario(self.mechanisms, self.valuations, availability, self.optimum_budget)

    def bidder_lattice(self, i: int) -> ProductLattice:
        return ProductLattice(tuple(mech.factors[i] for mech in self.mechanisms))

    def validate_profile(self, b: BidProfile) -> BidProfile:
        if len(b.bids) != self.n or any(len(row) != self.m for row in b.bids):
            raise ConfigurationError(f"bid profile must be {self.n} x {self.m}")
        for j, mech in enumerate(self.mechanisms):
            mech.validate_bids(b.column(j))
        return b

    def _matrix(self, A) -> np.ndarray:
        matrix = A.matrix if isinstance(A, AvailabilityRealization) else np.asarray(A)
        if matrix.shape != (self.n, self.m):
            raise ConfigurationError(f"availability realization must be {self.n} x {self.m}")
        return matrix

    def own_actions(self, i: int) -> List[Tuple[float, ...]]:
        """Full product of bidder i's per-mechanism grids."""
        return list(itertools.product(*(mech.grids[i] for mech in self.mechanisms)))

    def utility_range(self, i: int) -> float:
        """Bound on |u_i|: largest value plus largest total payment."""
        max_pay = sum(float(mech.stacked_table()[1][..., i].max()) for mech in self.mechanisms)
        return max(self.valuations[i].max_value() + max_pay, 1e-12)

    # --- one-shot evaluation ---

    def apply(self, b: BidProfile, A, seed=None) -> Tuple[List[Tuple[int, ...]], np.ndarray]:
        b = self.validate_profile(b)
        matrix = self._matrix(A)
        outcomes = np.zeros((self.n, self.m), dtype=np.int64)
        pays = np.zeros((self.n, self.m))
        seeds = np.random.SeedSequence(seed).spawn(self.m) if seed is not None else [None] * self.m
        for j, mech in enumerate(self.mechanisms):
            effective = tuple(bid if matrix[i, j] else 0.0 for i, bid in enumerate(b.column(j)))
            out, pay = mech.evaluate(effective, seeds[j])
            outcomes[:, j] = out
            pays[:, j] = pay
        return [tuple(int(x) for x in row) for row in outcomes], pays

    def h(self, i: int, b: BidProfile, A, seed=None) -> float:
        """Composed willingness to pay, sum over mechanisms at the effective bids."""
        outcomes, _ = self.apply(b, A, seed)
        matrix = self._matrix(A)
        total = 0.0
        for j, mech in enumerate(self.mechanisms):
            effective = tuple(bid if matrix[k, j] else 0.0 for k, bid in enumerate(b.column(j)))
            total += willingness_to_pay(mech, i, effective[i], tuple(outcomes[k][j] for k in range(self.n)))
        return total

    def welfare(self, outcomes: Sequence[Sequence[int]]) -> float:
        return float(sum(v.value(tuple(outcomes[i])) for i, v in enumerate(self.valuations)))

    # --- optimum ---

    def achievable(self, j: int, column: Sequence[int]) -> List[MechanismOutcome]:
        key = (j, tuple(int(a) for a in column))
        if key not in self._achievable:
            self._achievable[key] = self.mechanisms[j].achievable_outcomes(key[1])
        return self._achievable[key]

    def optimal_outcome(self, A) -> Tuple[Tuple[MechanismOutcome, ...], float]:
        """
        Welfare-maximizing joint outcome among those some bid profile reaches
        under availability A. Ties keep the first candidate in descending
        canonical order, which favors lower bidder indices.
        """
        matrix = self._matrix(A)
        options = [self.achievable(j, matrix[:, j]) for j in range(self.m)]
        count = int(np.prod([len(o) for o in options], dtype=np.float64))
        if count > self.optimum_budget:
            raise BudgetExceededError("optimal_outcome", count, self.optimum_budget)
        dense = [v.as_array() for v in self.valuations]
        best, best_value = None, -np.inf
        for joint in itertools.product(*options):
            total = 0.0
            for i in range(self.n):
                total += dense[i][tuple(joint[j][i] for j in range(self.m))]
            if total > best_value + TOL:
                best, best_value = joint, float(total)
        return tuple(best), best_value

    # --- vectorized helpers for learning ---

    @property
    def randomized(self) -> bool:
        return any(mech.randomized for mech in self.mechanisms)

    def tie_profiles(self) -> List[Tuple[Tuple[int, ...], float]]:
        """Every joint choice of per-mechanism realizations with its probability."""
        choices = [list(enumerate(mech.realization_weights())) for mech in self.mechanisms]
        return [
            (tuple(r for r, _ in combo), float(np.prod([w for _, w in combo])))
            for combo in itertools.product(*choices)
        ]

    def draw_ties(self, rounds: int, rng: np.random.Generator) -> np.ndarray:
        """Realization index per round and mechanism, shape (rounds, m)."""
        ties = np.zeros((rounds, self.m), dtype=np.int64)
        for j, mech in enumerate(self.mechanisms):
            if mech.randomized:
                weights = mech.realization_weights()
                ties[:, j] = rng.choice(len(weights), size=rounds, p=weights)
        return ties

    def own_component_tables(self, i: int, bid_idx: np.ndarray, matrix: np.ndarray,
                             ties: Optional[Sequence[int]] = None):
        """
        For each mechanism, bidder i's outcome index and payment for every own
        grid bid, holding the others at bid_idx (n x m grid indices) and
        masking with availability matrix (n x m). ties picks the realization
        of each randomized mechanism.
        """
        outs, pays = [], []
        for j, mech in enumerate(self.mechanisms):
            table_out, table_pay = mech.table(None if ties is None else int(ties[j]))
            eff = [int(bid_idx[k, j]) * int(matrix[k, j]) for k in range(self.n)]
            size = mech.grid_sizes[i]
            own = np.arange(size) * int(matrix[i, j])
            index = tuple(own if k == i else np.full(size, eff[k]) for k in range(self.n))
            outs.append(table_out[index + (i,)])
            pays.append(table_pay[index + (i,)])
        return outs, pays

    def component_batch(self, i: int, own_idx: np.ndarray, bid_idx: np.ndarray, matrix: np.ndarray,
                        ties: Optional[np.ndarray] = None):
        """
        Bidder i's outcome index and payment in every mechanism over many
        rows: own_idx (T, m) grid indices of bidder i, bid_idx (T, n, m)
        everyone's indices, matrix (T, n, m), ties (T, m) realization indices.
        Returns two (T, m) arrays.
        """
        matrix = np.asarray(matrix)
        eff = np.asarray(bid_idx) * matrix
        eff[:, i, :] = np.asarray(own_idx) * matrix[:, i, :]
        outs = np.zeros(eff.shape[::2], dtype=np.int64)
        pays = np.zeros(eff.shape[::2])
        for j, mech in enumerate(self.mechanisms):
            index = tuple(eff[:, k, j] for k in range(self.n)) + (i,)
            if ties is None:
                table_out, table_pay = mech.table()
            else:
                table_out, table_pay = mech.stacked_table()
                index = (np.asarray(ties)[:, j],) + index
            outs[:, j] = table_out[index]
            pays[:, j] = table_pay[index]
        return outs, pays

    def utility_batch(self, i: int, own_idx: np.ndarray, bid_idx: np.ndarray, matrix: np.ndarray,
                      ties: Optional[np.ndarray] = None) -> np.ndarray:
        """
        Utilities of bidder i over many rows, same shapes as component_batch.
        Without ties, randomized mechanisms contribute their expected utility.
        """
        dense = self.valuations[i].as_array()
        if ties is not None or not self.randomized:
            outs, pays = self.component_batch(i, own_idx, bid_idx, matrix, ties)
            return dense[tuple(outs.T)] - pays.sum(axis=1)
        rows = np.asarray(own_idx).shape[0]
        total = np.zeros(rows)
        for profile, weight in self.tie_profiles():
            fixed = np.broadcast_to(np.array(profile, dtype=np.int64), (rows, self.m))
            outs, pays = self.component_batch(i, own_idx, bid_idx, matrix, fixed)
            total += weight * (dense[tuple(outs.T)] - pays.sum(axis=1))
        return total

    def profile_indices(self, b: BidProfile) -> np.ndarray:
        return np.array(
            [[self.mechanisms[j].bid_index(i, b.bids[i][j]) for j in range(self.m)] for i in range(self.n)],
            dtype=np.int64,
        )

    def describe(self) -> Dict:
        return {
            "n": self.n,
            "m": self.m,
            "mechanisms": [mech.to_dict() for mech in self.mechanisms],
            "valuations": [v.to_dict() for v in self.valuations],
            "availability": self.availability.to_dict(),
        }


def apply_composed(scenario: ComposedScenario, b: BidProfile, A, seed=None):
    return scenario.apply(b, A, seed)


def utility(scenario: ComposedScenario, i: int, b: BidProfile, A, seed=None) -> float:
    outcomes, pays = scenario.apply(b, A, seed)
    return scenario.valuations[i].value(outcomes[i]) - float(pays[i].sum())
