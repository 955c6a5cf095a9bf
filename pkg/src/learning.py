"""
Repeated availability-oblivious learning: Hedge-style learners, the round
loop, empirical play distributions and regret audits.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.availability import enumerate_support, make_rng, sample_many
from src.errors import BudgetExceededError, ConfigurationError, ParameterError, UtilityRangeError
from src.lattice import TOL
from src.mechanisms import BidProfile, ComposedScenario

logger = logging.getLogger(__name__)

FULL_JOINT = "full_joint"
FACTORED = "factored"
BANDIT = "bandit"
LEARNER_KINDS = (FULL_JOINT, FACTORED, BANDIT)

DEFAULT_CUBE_BUDGET = 4 * 10**6
DEFAULT_AUDIT_BUDGET = 10**7
CONFIDENCE_Z = 1.96

JointBid = Tuple[float, ...]
Deviation = List[Tuple[JointBid, float]]


def default_step(actions: int, rounds: int) -> float:
    """Fixed-horizon Hedge step on range-normalized utilities."""
    if actions <= 1:
        return 0.0
    return math.sqrt(8.0 * math.log(actions) / rounds)


class HedgeLearner:
    """Multiplicative weights over a finite action list, kept in log space."""

    def __init__(self, actions: int, utility_range: float, step: float):
        if actions < 1:
            raise ParameterError("a learner needs at least one action")
        if utility_range <= 0:
            raise ParameterError("utility range must be positive")
        if step < 0:
            raise ParameterError("step size must be nonnegative")
        self.actions = actions
        self.utility_range = float(utility_range)
        self.step = float(step)
        self.log_weights = np.zeros(actions)

    def probabilities(self) -> np.ndarray:
        shifted = np.exp(self.log_weights - self.log_weights.max())
        return shifted / shifted.sum()

    def sample(self, uniform: float) -> int:
        cdf = np.cumsum(self.probabilities())
        return min(int(np.searchsorted(cdf, uniform * cdf[-1], side="right")), self.actions - 1)

    def _check_range(self, utilities: np.ndarray):
        if np.abs(utilities).max(initial=0.0) > self.utility_range + TOL:
            raise UtilityRangeError(
                f"utility {np.abs(utilities).max():.6g} outside declared range {self.utility_range:.6g}"
            )

    def update(self, utilities: Sequence[float]) -> "HedgeLearner":
        utilities = np.asarray(utilities, dtype=float)
        if utilities.shape != (self.actions,):
            raise ConfigurationError(f"expected {self.actions} utilities, got shape {utilities.shape}")
        self._check_range(utilities)
        self.log_weights += self.step * utilities / self.utility_range
        self.log_weights -= self.log_weights.max()
        return self


class Exp3Learner(HedgeLearner):
    """Importance-weighted Hedge fed only the utility of the played action."""

    def __init__(self, actions: int, utility_range: float, rounds: int, exploration: Optional[float] = None):
        if exploration is None:
            exploration = 1.0 if actions <= 1 else min(
                1.0, math.sqrt(actions * math.log(actions) / ((math.e - 1.0) * rounds))
            )
        super().__init__(actions, utility_range, exploration / actions)
        self.exploration = exploration

    def probabilities(self) -> np.ndarray:
        base = super().probabilities()
        return (1.0 - self.exploration) * base + self.exploration / self.actions

    def observe(self, action: int, utility: float) -> "Exp3Learner":
        self._check_range(np.array([utility]))
        # rewards rescaled to [0, 1]
        reward = (utility + self.utility_range) / (2.0 * self.utility_range)
        estimate = reward / self.probabilities()[action]
        self.log_weights[action] += self.step * estimate
        self.log_weights -= self.log_weights.max()
        return self


def hedge_update(learner: HedgeLearner, utilities: Sequence[float]) -> HedgeLearner:
    return learner.update(utilities)


def hedge_regret(utility_rows: np.ndarray, step: Optional[float] = None, utility_range: Optional[float] = None) -> float:
    """
    Average external regret of Hedge with expected play on a fixed utility
    sequence of shape (T, K), against the best fixed action.
    """
    utility_rows = np.asarray(utility_rows, dtype=float)
    rounds, actions = utility_rows.shape
    utility_range = utility_range or max(float(np.abs(utility_rows).max()), 1e-12)
    learner = HedgeLearner(actions, utility_range, default_step(actions, rounds) if step is None else step)
    earned = 0.0
    for row in utility_rows:
        earned += float(learner.probabilities() @ row)
        learner.update(row)
    return float(utility_rows.sum(axis=0).max() - earned) / rounds


@dataclass(frozen=True)
class LearnerSpec:
    """How every bidder learns; bidders listed in non_oblivious best-respond to their availability."""

    kind: str = FULL_JOINT
    step: Optional[float] = None
    non_oblivious: Tuple[int, ...] = ()
    cube_budget: int = DEFAULT_CUBE_BUDGET

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise ConfigurationError(f"unknown learner kind {self.kind!r}")
        object.__setattr__(self, "non_oblivious", tuple(int(i) for i in self.non_oblivious))

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "step": self.step, "non_oblivious": list(self.non_oblivious)}


@dataclass
class LearningTrace:
    """Per-round record of a run; bids are stored as grid indices."""

    scenario: ComposedScenario
    bid_idx: np.ndarray
    availability: np.ndarray
    outcomes: np.ndarray
    payments: np.ndarray
    values: np.ndarray
    utilities: np.ndarray
    ties: Optional[np.ndarray] = None
    seed: Optional[int] = None
    spec: LearnerSpec = field(default_factory=LearnerSpec)
    flags: List[str] = field(default_factory=list)

    @property
    def T(self) -> int:
        return self.bid_idx.shape[0]

    def bids(self) -> np.ndarray:
        """Bid values, shape (T, n, m)."""
        out = np.zeros(self.bid_idx.shape)
        for j, mech in enumerate(self.scenario.mechanisms):
            for i in range(self.scenario.n):
                out[:, i, j] = np.asarray(mech.grids[i])[self.bid_idx[:, i, j]]
        return out

    def profile(self, t: int) -> BidProfile:
        return BidProfile(tuple(tuple(row) for row in self.bids()[t]))

    def rows(self) -> Iterator[Dict]:
        """Row per (round, bidder, mechanism) for CSV export."""
        bids = self.bids()
        for t in range(self.T):
            for i in range(self.scenario.n):
                for j in range(self.scenario.m):
                    yield {
                        "round": t,
                        "bidder": i,
                        "mechanism": j,
                        "bid": float(bids[t, i, j]),
                        "available": int(self.availability[t, i, j]),
                        "outcome": int(self.outcomes[t, i, j]),
                        "payment": float(self.payments[t, i, j]),
                        "utility": float(self.utilities[t, i]),
                    }


# ---------------------------------------------------------------------------
# Round loop
# ---------------------------------------------------------------------------


def _action_grid_indices(scenario: ComposedScenario, i: int) -> np.ndarray:
    """Joint action a of bidder i -> per-mechanism grid indices, shape (K, m)."""
    sizes = tuple(mech.grid_sizes[i] for mech in scenario.mechanisms)
    return np.array(list(itertools.product(*(range(s) for s in sizes))), dtype=np.int64).reshape(-1, scenario.m)


def availability_codes(availability: np.ndarray) -> np.ndarray:
    rounds = availability.shape[0]
    flat = availability.reshape(rounds, -1).astype(np.int64)
    return flat @ (1 << np.arange(flat.shape[1], dtype=np.int64))


def payoff_cube(scenario: ComposedScenario, i: int, actions: Sequence[np.ndarray], budget: int) -> Optional[np.ndarray]:
    """
    Utility of bidder i for every joint-action profile and availability code,
    shape (K_0, ..., K_{n-1}, 2**(n*m)); None when it would exceed budget.
    """
    counts = [len(a) for a in actions]
    codes = 2 ** (scenario.n * scenario.m)
    size = int(np.prod(counts, dtype=np.float64)) * codes
    if size > budget:
        return None
    profiles = np.array(list(itertools.product(*(range(c) for c in counts))), dtype=np.int64)
    bid_idx = np.stack([actions[k][profiles[:, k]] for k in range(scenario.n)], axis=1)
    cube = np.zeros((len(profiles), codes))
    bits = np.arange(scenario.n * scenario.m)
    for code in range(codes):
        matrix = ((code >> bits) & 1).reshape(scenario.n, scenario.m)
        matrix = np.broadcast_to(matrix, bid_idx.shape)
        cube[:, code] = scenario.utility_batch(i, bid_idx[:, i, :], bid_idx, matrix)
    return cube.reshape(tuple(counts) + (codes,))


def counterfactual_utilities(scenario: ComposedScenario, i: int, bid_idx: np.ndarray, matrix: np.ndarray,
                             ties: Optional[Sequence[int]] = None) -> np.ndarray:
    """Bidder i's utility for every own joint action against fixed opponents, in product order."""
    outs, pays = scenario.own_component_tables(i, bid_idx, matrix, ties)
    dense = scenario.valuations[i].as_array()
    values = dense[np.ix_(*outs)]
    total_pay = np.zeros(values.shape)
    for j, pay in enumerate(pays):
        shape = [1] * scenario.m
        shape[j] = len(pay)
        total_pay = total_pay + pay.reshape(shape)
    return (values - total_pay).reshape(-1)


def _factored_utilities(scenario: ComposedScenario, i: int, bid_idx: np.ndarray, matrix: np.ndarray,
                        ties: Optional[Sequence[int]] = None) -> List[np.ndarray]:
    """Per mechanism, utilities over own grid with own bids elsewhere held at their realized values."""
    outs, pays = scenario.own_component_tables(i, bid_idx, matrix, ties)
    dense = scenario.valuations[i].as_array()
    realized_out = [int(outs[j][bid_idx[i, j]]) for j in range(scenario.m)]
    realized_pay = [float(pays[j][bid_idx[i, j]]) for j in range(scenario.m)]
    result = []
    for j in range(scenario.m):
        index = tuple(outs[j] if k == j else realized_out[k] for k in range(scenario.m))
        others = sum(realized_pay) - realized_pay[j]
        result.append(dense[index] - pays[j] - others)
    return result


def evaluate_rounds(scenario: ComposedScenario, bid_idx: np.ndarray, availability: np.ndarray,
                    ties: Optional[np.ndarray] = None):
    """
    Batch outcomes, payments, values and utilities for stored bids and
    availabilities; ties (T, m) holds the realization of each randomized
    mechanism per round.
    """
    eff = bid_idx * availability
    rounds = bid_idx.shape[0]
    outcomes = np.zeros(bid_idx.shape, dtype=np.int64)
    payments = np.zeros(bid_idx.shape)
    for j, mech in enumerate(scenario.mechanisms):
        index = tuple(eff[:, k, j] for k in range(scenario.n))
        if ties is None:
            table_out, table_pay = mech.table()
        else:
            table_out, table_pay = mech.stacked_table()
            index = (np.asarray(ties)[:, j],) + index
        outcomes[:, :, j] = table_out[index]
        payments[:, :, j] = table_pay[index]
    values = np.zeros((rounds, scenario.n))
    for i, v in enumerate(scenario.valuations):
        values[:, i] = v.as_array()[tuple(outcomes[:, i, j] for j in range(scenario.m))]
    utilities = values - payments.sum(axis=2)
    return outcomes, payments, values, utilities


def run_repeated(
    scenario: ComposedScenario,
    spec: LearnerSpec,
    T: int,
    seed: int,
    availability_override: Optional[np.ndarray] = None,
) -> LearningTrace:
    """
    Play T rounds. Each oblivious bidder draws its joint bid from its learner
    before the round's availability is revealed, then receives feedback for
    the realized round regardless of its availability.
    """
    if T < 1:
        raise ParameterError("T must be at least 1")
    n, m = scenario.n, scenario.m
    if any(not 0 <= i < n for i in spec.non_oblivious):
        raise ConfigurationError(f"non-oblivious bidders {spec.non_oblivious} out of range")

    streams = np.random.SeedSequence(seed).spawn(n + 2)
    bidder_rngs = [make_rng(s) for s in streams[:n]]
    if availability_override is not None:
        availability = np.asarray(availability_override, dtype=np.int8)
        if availability.shape != (T, n, m):
            raise ConfigurationError(f"availability override must have shape {(T, n, m)}")
    else:
        availability = sample_many(scenario.availability, T, make_rng(streams[n]))
    ties = scenario.draw_ties(T, make_rng(streams[n + 1])) if scenario.randomized else None

    actions = [_action_grid_indices(scenario, i) for i in range(n)]
    width = m if spec.kind == FACTORED else 1
    uniforms = [rng.random((T, width)) for rng in bidder_rngs]

    learners = []
    for i in range(n):
        u_range = scenario.utility_range(i)
        if spec.kind == FULL_JOINT:
            k = len(actions[i])
            learners.append(HedgeLearner(k, u_range, spec.step if spec.step is not None else default_step(k, T)))
        elif spec.kind == BANDIT:
            learners.append(Exp3Learner(len(actions[i]), u_range, T))
        else:
            learners.append([
                HedgeLearner(size, u_range, spec.step if spec.step is not None else default_step(size, T))
                for size in (mech.grid_sizes[i] for mech in scenario.mechanisms)
            ])

    cubes = None
    if spec.kind != FACTORED and not scenario.randomized:
        cubes = [payoff_cube(scenario, i, actions, spec.cube_budget) for i in range(n)]
        if any(c is None for c in cubes):
            cubes = None
            logger.debug("payoff cube over budget, evaluating rounds directly")
    codes = availability_codes(availability)

    flags = []
    if spec.non_oblivious:
        flags.append(f"non-oblivious bidders {list(spec.non_oblivious)} best-respond to realized availability")

    bid_idx = np.zeros((T, n, m), dtype=np.int64)
    chosen = np.zeros(n, dtype=np.int64)
    previous = np.zeros((n, m), dtype=np.int64)
    for t in range(T):
        matrix = availability[t]
        tie = None if ties is None else ties[t]
        for i in range(n):
            if i in spec.non_oblivious:
                snapshot = previous.copy()
                utilities = _own_utilities(scenario, i, snapshot, matrix, cubes, actions, chosen, codes[t], prior=True)
                chosen[i] = int(np.argmax(utilities))
                bid_idx[t, i] = actions[i][chosen[i]]
            elif spec.kind == FACTORED:
                bid_idx[t, i] = [h.sample(uniforms[i][t, j]) for j, h in enumerate(learners[i])]
            else:
                chosen[i] = learners[i].sample(uniforms[i][t, 0])
                bid_idx[t, i] = actions[i][chosen[i]]

        for i in range(n):
            if i in spec.non_oblivious:
                continue
            if spec.kind == FACTORED:
                for h, utilities in zip(learners[i], _factored_utilities(scenario, i, bid_idx[t], matrix, tie)):
                    h.update(utilities)
            elif spec.kind == BANDIT:
                utilities = _own_utilities(scenario, i, bid_idx[t], matrix, cubes, actions, chosen, codes[t], tie)
                learners[i].observe(int(chosen[i]), float(utilities[chosen[i]]))
            else:
                learners[i].update(_own_utilities(scenario, i, bid_idx[t], matrix, cubes, actions, chosen, codes[t], tie))
        previous = bid_idx[t]

    outcomes, payments, values, utilities = evaluate_rounds(scenario, bid_idx, availability, ties)
    logger.debug("run seed=%s T=%d mean welfare %.6f", seed, T, values.sum(axis=1).mean())
    return LearningTrace(
        scenario=scenario,
        bid_idx=bid_idx,
        availability=availability,
        outcomes=outcomes,
        payments=payments,
        values=values,
        utilities=utilities,
        ties=ties,
        seed=seed,
        spec=spec,
        flags=flags,
    )


def _own_utilities(scenario, i, bid_idx, matrix, cubes, actions, chosen, code, tie=None, prior=False):
    if cubes is not None and not prior:
        index = tuple(slice(None) if k == i else int(chosen[k]) for k in range(scenario.n)) + (int(code),)
        return cubes[i][index]
    if prior and scenario.randomized:
        # the round's tie-breaking is not known before bidding
        return sum(
            weight * counterfactual_utilities(scenario, i, bid_idx, matrix, profile)
            for profile, weight in scenario.tie_profiles()
        )
    return counterfactual_utilities(scenario, i, bid_idx, matrix, tie)


# ---------------------------------------------------------------------------
# Audits
# ---------------------------------------------------------------------------


@dataclass
class EmpiricalDistribution:
    """Frequencies of observed bid profiles; profiles are stored as grid indices."""

    scenario: ComposedScenario
    profiles: np.ndarray
    frequencies: np.ndarray

    @property
    def support(self) -> List[Tuple[BidProfile, float]]:
        result = []
        for idx, freq in zip(self.profiles, self.frequencies):
            bids = tuple(
                tuple(self.scenario.mechanisms[j].grids[i][idx[i, j]] for j in range(self.scenario.m))
                for i in range(self.scenario.n)
            )
            result.append((BidProfile(bids), float(freq)))
        return result

    def to_dict(self) -> Dict:
        return {
            "support": [
                {"bids": [list(row) for row in profile.bids], "frequency": freq}
                for profile, freq in self.support
            ]
        }


def empirical_distribution(trace: LearningTrace) -> EmpiricalDistribution:
    if trace.T < 1:
        raise ParameterError("empty trace")
    n, m = trace.scenario.n, trace.scenario.m
    flat = trace.bid_idx.reshape(trace.T, n * m)
    profiles, counts = np.unique(flat, axis=0, return_counts=True)
    return EmpiricalDistribution(
        scenario=trace.scenario,
        profiles=profiles.reshape(-1, n, m),
        frequencies=counts / counts.sum(),
    )


def point_distribution(scenario: ComposedScenario, profile: BidProfile) -> EmpiricalDistribution:
    return EmpiricalDistribution(scenario, scenario.profile_indices(profile)[None], np.array([1.0]))


def _deviation_indices(scenario: ComposedScenario, i: int, deviation: Deviation) -> List[Tuple[np.ndarray, float]]:
    total = sum(p for _, p in deviation)
    if abs(total - 1.0) > 1e-9:
        raise ParameterError(f"deviation probabilities sum to {total}, expected 1")
    return [
        (np.array([mech.bid_index(i, b) for mech, b in zip(scenario.mechanisms, bids)], dtype=np.int64), p)
        for bids, p in deviation
    ]


def product_deviation(per_mechanism: Sequence[Sequence[Tuple[float, float]]]) -> Deviation:
    """Joint deviation whose mechanism components are drawn independently."""
    joint = []
    for combo in itertools.product(*per_mechanism):
        prob = float(np.prod([p for _, p in combo]))
        if prob > 0:
            joint.append((tuple(b for b, _ in combo), prob))
    return joint


def fixed_actions(scenario: ComposedScenario, i: int) -> List[Deviation]:
    return [[(bids, 1.0)] for bids in scenario.own_actions(i)]


def regret_against(trace: LearningTrace, i: int, deviation: Deviation) -> float:
    """Average gain of bidder i from replaying the trace with its bids drawn from deviation."""
    scenario = trace.scenario
    gain = 0.0
    for own, prob in _deviation_indices(scenario, i, deviation):
        own_rows = np.broadcast_to(own, (trace.T, scenario.m))
        utilities = scenario.utility_batch(i, own_rows, trace.bid_idx, trace.availability, trace.ties)
        gain += prob * float(utilities.mean())
    return gain - float(trace.utilities[:, i].mean())


def max_fixed_action_regret(trace: LearningTrace, i: int) -> Tuple[float, JointBid]:
    """Largest regret of bidder i against any single fixed joint bid."""
    best, best_action = -np.inf, None
    for action in trace.scenario.own_actions(i):
        r = regret_against(trace, i, [(action, 1.0)])
        if r > best:
            best, best_action = r, action
    return best, best_action


@dataclass
class CCEReport:
    epsilon: float
    mode: str
    gains: List[Dict]
    samples: Optional[int] = None
    seed: Optional[int] = None

    @property
    def flagged(self) -> List[Dict]:
        return [g for g in self.gains if g["flagged"]]

    @property
    def ok(self) -> bool:
        return not self.flagged

    def to_dict(self) -> Dict:
        return {
            "epsilon": self.epsilon,
            "mode": self.mode,
            "samples": self.samples,
            "seed": self.seed,
            "ok": self.ok,
            "gains": self.gains,
        }


def verify_oblivious_cce(
    dist: EmpiricalDistribution,
    epsilon: float,
    deviations: Optional[Dict[int, List[Deviation]]] = None,
    budget: int = DEFAULT_AUDIT_BUDGET,
    samples: int = 100_000,
    seed: Optional[int] = None,
    mode: str = "auto",
) -> CCEReport:
    """
    Expected gain of each (bidder, deviation) when bids follow dist and the
    availability is drawn independently from the scenario's model.
    """
    scenario = dist.scenario
    if deviations is None:
        deviations = {i: fixed_actions(scenario, i) for i in range(scenario.n)}

    support = None
    if mode != "mc":
        try:
            support = enumerate_support(scenario.availability, budget=budget)
            size = len(support) * len(dist.profiles)
            if size > budget:
                raise BudgetExceededError("verify_oblivious_cce", size, budget)
        except BudgetExceededError as exc:
            if mode == "exact":
                raise
            logger.warning("%s, falling back to Monte Carlo with %d samples", exc, samples)
            support = None

    if support is not None:
        bid_idx = np.repeat(dist.profiles, len(support), axis=0)
        matrices = np.tile(np.stack([a.matrix for a, _ in support]), (len(dist.profiles), 1, 1))
        weights = np.outer(dist.frequencies, [p for _, p in support]).reshape(-1)
        radius = None
        run_mode, count = "exact", None
    else:
        rng = make_rng(seed)
        picks = rng.choice(len(dist.profiles), size=samples, p=dist.frequencies)
        bid_idx = dist.profiles[picks]
        matrices = sample_many(scenario.availability, samples, rng)
        weights = np.full(samples, 1.0 / samples)
        run_mode, count = "mc", samples

    gains = []
    for i, devs in sorted(deviations.items()):
        base = scenario.utility_batch(i, bid_idx[:, i, :], bid_idx, matrices)
        for d, deviation in enumerate(devs):
            diff = np.zeros(len(weights))
            for own, prob in _deviation_indices(scenario, i, deviation):
                own_rows = np.broadcast_to(own, (len(weights), scenario.m))
                diff += prob * scenario.utility_batch(i, own_rows, bid_idx, matrices)
            diff -= base
            gain = float(weights @ diff)
            entry = {"bidder": i, "deviation": d, "gain": gain, "flagged": gain > epsilon + TOL}
            if run_mode == "mc":
                radius = CONFIDENCE_Z * float(diff.std(ddof=1)) / math.sqrt(len(diff)) if len(diff) > 1 else 0.0
                entry["radius"] = radius
            gains.append(entry)
            if entry["flagged"]:
                logger.info("bidder %d deviation %d gains %.6g > epsilon %.6g", i, d, gain, epsilon)
    return CCEReport(epsilon=epsilon, mode=run_mode, gains=gains, samples=count, seed=seed)
