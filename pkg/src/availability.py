"""
Stochastic admission models: which (bidder, mechanism) pairs may bid in a round.
"""
import itertools
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.errors import BudgetExceededError, ConfigurationError, ParameterError

logger = logging.getLogger(__name__)

INDEPENDENT = "independent"
EVERYBODY_OR_NOBODY = "everybody_or_nobody"
FIXED = "fixed"
KINDS = (INDEPENDENT, EVERYBODY_OR_NOBODY, FIXED)

DEFAULT_SUPPORT_BUDGET = 2**20
MAX_UNIT_DEMAND_COPIES = 8


def make_rng(seed) -> np.random.Generator:
    """Counter-based generator used for every stochastic operation."""
    if isinstance(seed, np.random.SeedSequence):
        return np.random.Generator(np.random.Philox(seed))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


@dataclass(frozen=True, eq=False)
class AvailabilityRealization:
    """One n x m 0/1 admission matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=np.int8)
        if matrix.ndim != 2 or not np.isin(matrix, (0, 1)).all():
            raise ConfigurationError("availability realization must be a 0/1 matrix")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def m(self) -> int:
        return self.matrix.shape[1]

    def key(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(int(a) for a in row) for row in self.matrix)

    def __eq__(self, other) -> bool:
        return isinstance(other, AvailabilityRealization) and np.array_equal(self.matrix, other.matrix)

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"AvailabilityRealization({self.key()})"


@dataclass(frozen=True, eq=False)
class AvailabilityModel:
    """
    Independent: probs is an n x m table q[i, j].
    EverybodyOrNobody: probs is a length-m vector q[j], copied to every bidder.
    Fixed: probs is an explicit 0/1 n x m matrix.
    """

    kind: str
    n: int
    m: int
    probs: np.ndarray

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown availability kind {self.kind!r}")
        probs = np.asarray(self.probs, dtype=float)
        expected = (self.m,) if self.kind == EVERYBODY_OR_NOBODY else (self.n, self.m)
        if probs.shape != expected:
            raise ConfigurationError(f"{self.kind} availability needs probabilities of shape {expected}, got {probs.shape}")
        if ((probs < 0) | (probs > 1)).any():
            raise ParameterError("availability probabilities must lie in [0, 1]")
        if self.kind == FIXED and not np.isin(probs, (0.0, 1.0)).all():
            raise ParameterError("fixed availability must be a 0/1 matrix")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def independent(cls, probs) -> "AvailabilityModel":
        probs = np.atleast_2d(np.asarray(probs, dtype=float))
        return cls(INDEPENDENT, probs.shape[0], probs.shape[1], probs)

    @classmethod
    def everybody_or_nobody(cls, n: int, probs) -> "AvailabilityModel":
        probs = np.asarray(probs, dtype=float).reshape(-1)
        return cls(EVERYBODY_OR_NOBODY, n, probs.size, probs)

    @classmethod
    def fixed(cls, matrix) -> "AvailabilityModel":
        matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
        return cls(FIXED, matrix.shape[0], matrix.shape[1], matrix)

    @classmethod
    def always(cls, n: int, m: int) -> "AvailabilityModel":
        return cls.fixed(np.ones((n, m)))

    def entry_probs(self) -> np.ndarray:
        """Marginal Pr[A_ij = 1] as an n x m table."""
        if self.kind == EVERYBODY_OR_NOBODY:
            return np.tile(self.probs, (self.n, 1))
        return np.array(self.probs)

    def column_probs(self) -> np.ndarray:
        """Pr[mechanism j is available to at least one bidder]."""
        if self.kind == EVERYBODY_OR_NOBODY:
            return np.array(self.probs)
        return 1.0 - np.prod(1.0 - self.probs, axis=0)

    def support_size(self) -> int:
        free = self._free_entries()
        return 2 ** int(free.sum())

    def _free_entries(self) -> np.ndarray:
        if self.kind == FIXED:
            return np.zeros((self.n, self.m), dtype=bool)
        return (self.probs > 0) & (self.probs < 1)

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "n": self.n, "m": self.m, "probs": self.probs.tolist()}


def sample(model: AvailabilityModel, seed) -> AvailabilityRealization:
    rng = seed if isinstance(seed, np.random.Generator) else make_rng(seed)
    return AvailabilityRealization(sample_many(model, 1, rng)[0])


def sample_many(model: AvailabilityModel, rounds: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized draws for a whole run, shape (rounds, n, m)."""
    if model.kind == FIXED:
        return np.broadcast_to(model.probs.astype(np.int8), (rounds, model.n, model.m)).copy()
    if model.kind == EVERYBODY_OR_NOBODY:
        columns = (rng.random((rounds, model.m)) < model.probs).astype(np.int8)
        return np.repeat(columns[:, None, :], model.n, axis=1)
    return (rng.random((rounds, model.n, model.m)) < model.probs).astype(np.int8)


def enumerate_support(
    model: AvailabilityModel, budget: int = DEFAULT_SUPPORT_BUDGET
) -> List[Tuple[AvailabilityRealization, float]]:
    """All realizations with positive probability, in a fixed order."""
    if model.kind == FIXED:
        return [(AvailabilityRealization(model.probs), 1.0)]
    size = model.support_size()
    if size > budget:
        raise BudgetExceededError("enumerate_support", size, budget, hint="sample instead")

    if model.kind == EVERYBODY_OR_NOBODY:
        probs = model.probs
        cells = [(j,) for j in range(model.m)]
    else:
        probs = model.probs
        cells = [(i, j) for i in range(model.n) for j in range(model.m)]

    choices = []
    for cell in cells:
        q = float(probs[cell])
        if q == 1.0:
            choices.append(((1, 1.0),))
        elif q == 0.0:
            choices.append(((0, 1.0),))
        else:
            choices.append(((1, q), (0, 1.0 - q)))

    support = []
    for combo in itertools.product(*choices):
        prob = float(np.prod([p for _, p in combo]))
        bits = np.array([a for a, _ in combo], dtype=np.int8)
        if model.kind == EVERYBODY_OR_NOBODY:
            matrix = np.tile(bits, (model.n, 1))
        else:
            matrix = bits.reshape(model.n, model.m)
        support.append((AvailabilityRealization(matrix), prob))
    return support


def conditional_support(
    model: AvailabilityModel, i: int, j: int, budget: int = DEFAULT_SUPPORT_BUDGET
) -> List[Tuple[AvailabilityRealization, float]]:
    """Support of an independent model conditioned on A_ij = 1."""
    if model.kind != INDEPENDENT:
        raise ConfigurationError("conditioning on a single entry needs independent availability")
    probs = np.array(model.probs)
    probs[i, j] = 1.0
    return enumerate_support(AvailabilityModel.independent(probs), budget=budget)


# ---------------------------------------------------------------------------
# Changing unit-demand values as availability of item copies
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ItemCopy:
    item: int
    copy: int
    value: float
    prob: float

    @property
    def never_available(self) -> bool:
        return self.prob == 0.0


@dataclass(frozen=True)
class UnitDemandFragment:
    """K copies per item with fixed values and independent availability."""

    copies: Tuple[ItemCopy, ...]

    def copies_of(self, item: int) -> List[ItemCopy]:
        return [c for c in self.copies if c.item == item]

    def availability_row(self) -> np.ndarray:
        return np.array([c.prob for c in self.copies])

    def valuation(self):
        """Unit-demand valuation over the copies, one XOS clause per copy."""
        from src.lattice import ProductLattice, XOSValuation

        lattice = ProductLattice.boolean(len(self.copies))
        family = []
        for pos, c in enumerate(self.copies):
            clause = [[0.0, 0.0] for _ in self.copies]
            clause[pos] = [0.0, c.value]
            family.append(clause)
        return XOSValuation(lattice, family)

    def max_value_distribution(self, item: int) -> Dict[float, float]:
        """Distribution of the best available copy value of one item."""
        copies = self.copies_of(item)
        dist: Dict[float, float] = {}
        for pattern in itertools.product((0, 1), repeat=len(copies)):
            prob = 1.0
            best = 0.0
            for bit, c in zip(pattern, copies):
                prob *= c.prob if bit else 1.0 - c.prob
                if bit:
                    best = max(best, c.value)
            if prob > 0:
                dist[best] = dist.get(best, 0.0) + prob
        return dist


def unit_demand_transform(value_dists: Sequence[Sequence[Tuple[float, float]]]) -> UnitDemandFragment:
    """
    Turn per-item value distributions into copies: copy k of item j keeps value
    v^(k) and is available with probability q^(k) / sum_{k' >= k} q^(k').
    """
    copies: List[ItemCopy] = []
    for item, dist in enumerate(value_dists):
        merged: Dict[float, float] = {}
        for value, prob in dist:
            if value < 0 or not 0 <= prob <= 1:
                raise ParameterError(f"item {item}: values must be nonnegative and probabilities in [0, 1]")
            merged[float(value)] = merged.get(float(value), 0.0) + float(prob)
        if abs(sum(merged.values()) - 1.0) > 1e-9:
            raise ParameterError(f"item {item}: probabilities sum to {sum(merged.values())}, expected 1")
        if len(merged) > MAX_UNIT_DEMAND_COPIES:
            raise ParameterError(f"item {item}: {len(merged)} distinct values, at most {MAX_UNIT_DEMAND_COPIES} allowed")
        ordered = sorted(merged.items(), key=lambda kv: -kv[0])
        residual = sum(p for _, p in ordered)
        for k, (value, prob) in enumerate(ordered):
            copy_prob = prob / residual if residual > 1e-15 else 0.0
            if residual <= 1e-15:
                logger.debug("item %d copy %d has no residual mass, marked never available", item, k)
            copies.append(ItemCopy(item, k, value, min(1.0, copy_prob)))
            residual -= prob
    return UnitDemandFragment(tuple(copies))
