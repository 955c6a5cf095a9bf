"""
End-to-end experiments: expected optimum, empirical price of anarchy of
oblivious learning against the composition bounds, and the XOS lower-bound
instance.
"""
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import binom

from src.availability import (
    EVERYBODY_OR_NOBODY,
    INDEPENDENT,
    AvailabilityModel,
    unit_demand_transform,
)
from src.errors import BudgetExceededError, ParameterError
from src.lattice import DEFAULT_CHECK_BUDGET, TOL, ProductLattice, XOSValuation
from src.learning import LearnerSpec, LearningTrace, evaluate_rounds, max_fixed_action_regret, run_repeated
from src.mechanisms import ComposedScenario, first_price_auction
from src.smoothness import DEFAULT_SAMPLES, E_GAP, SmoothnessParams, optimum_scan

logger = logging.getLogger(__name__)

FIRST_PRICE_GRID_PARAMS = SmoothnessParams(lam=0.5, mu1=1.0, mu2=0.0)
INDEPENDENT_COROLLARY = 1.0 / (1.0 - 1.0 / math.e) ** 2
EON_COROLLARY = 4.0 / (1.0 - 1.0 / math.e) ** 3
MAX_LOWER_BOUND_K = 64
LOWER_BOUND_SWEEP = (4, 9, 16, 25, 36, 49, 64)
MAX_UNRESTRICTED_K = 6
DEFAULT_SEARCH_BUDGET = 2 * 10**5

FULL_GROUPS = "full_groups"
STRUCTURED = "structured"
UNRESTRICTED = "unrestricted"
SEARCH_MODES = (FULL_GROUPS, STRUCTURED, UNRESTRICTED)


def expected_opt_welfare(
    scenario: ComposedScenario,
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed=None,
    mode: str = "auto",
) -> float:
    return optimum_scan(scenario, budget, samples, seed, mode).expected_welfare()


def welfare_of_trace(scenario: ComposedScenario, trace: LearningTrace) -> float:
    """Time-averaged total value, recomputed from the stored bids and availabilities."""
    _, _, values, _ = evaluate_rounds(scenario, trace.bid_idx, trace.availability, trace.ties)
    return float(values.sum(axis=1).mean())


def theorem_bound(params: SmoothnessParams, availability_kind: str, gamma: float = E_GAP) -> float:
    """Price-of-anarchy bound of the composition for the given admission model."""
    base = max(1.0, params.mu1) + params.mu2
    if availability_kind == INDEPENDENT:
        return gamma * base / params.lam
    if availability_kind == EVERYBODY_OR_NOBODY:
        return 4.0 * E_GAP * base / params.lam ** 2
    return base / params.lam


def corollary_bound(availability_kind: str) -> float:
    """First-price bounds with continuous bids and submodular valuations."""
    if availability_kind == EVERYBODY_OR_NOBODY:
        return EON_COROLLARY
    if availability_kind == INDEPENDENT:
        return INDEPENDENT_COROLLARY
    return 1.0 / (1.0 - 1.0 / math.e)


def regret_slack(bound: float, params: SmoothnessParams, opt: float, n: int, epsilon: float) -> float:
    """
    Extra ratio allowed by epsilon regret: with welfare >= (kappa OPT - n eps) / c
    where c = max(1, mu1) + mu2 and kappa = c / bound, the ratio is at most
    c OPT / (kappa OPT - n eps).
    """
    c = max(1.0, params.mu1) + params.mu2
    kappa = c / bound
    denominator = kappa * opt - n * max(epsilon, 0.0)
    if denominator <= 0:
        return math.inf
    return c * opt / denominator - bound


@dataclass
class ReplicateResult:
    seed: int
    welfare: float
    epsilon: float
    flags: List[str] = field(default_factory=list)


@dataclass
class PoAReport:
    expected_opt_welfare: float
    empirical_welfare: float
    ratio: float
    theorem_bound: float
    regret_slack: float
    mode: str
    corollary_bound: float
    corollary_slack: float
    params: SmoothnessParams
    T: int
    seeds: List[int]
    replicates: List[ReplicateResult]
    availability: str
    within_bound: bool = True
    within_corollary: bool = True
    flags: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "expected_opt_welfare": self.expected_opt_welfare,
            "empirical_welfare": self.empirical_welfare,
            "ratio": _finite(self.ratio),
            "theorem_bound": self.theorem_bound,
            "regret_slack": _finite(self.regret_slack),
            "corollary_bound": self.corollary_bound,
            "corollary_slack": _finite(self.corollary_slack),
            "within_bound": self.within_bound,
            "within_corollary": self.within_corollary,
            "mode": self.mode,
            "params": self.params.to_dict(),
            "availability": self.availability,
            "T": self.T,
            "seeds": self.seeds,
            "replicates": [
                {
                    "seed": r.seed,
                    "welfare": r.welfare,
                    "epsilon": r.epsilon,
                    "ratio": _finite(_ratio(self.expected_opt_welfare, r.welfare)),
                }
                for r in self.replicates
            ],
            "flags": self.flags,
        }


def _finite(x: float):
    return x if math.isfinite(x) else "inf"


def _ratio(opt: float, welfare: float) -> float:
    if welfare > 0:
        return opt / welfare
    return 1.0 if opt <= TOL else math.inf


def _replicate(args) -> ReplicateResult:
    scenario, spec, T, seed = args
    trace = run_repeated(scenario, spec, T, seed)
    epsilon = max(max_fixed_action_regret(trace, i)[0] for i in range(scenario.n))
    return ReplicateResult(seed=seed, welfare=welfare_of_trace(scenario, trace), epsilon=max(epsilon, 0.0),
                           flags=list(trace.flags))


def run_replicates(scenario: ComposedScenario, spec: LearnerSpec, T: int, seeds: Sequence[int],
                   workers: int = 1) -> List[ReplicateResult]:
    """One learning run per seed; results come back in seed order."""
    jobs = [(scenario, spec, T, int(s)) for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_replicate, jobs))
    return [_replicate(job) for job in jobs]


def empirical_poa(
    scenario: ComposedScenario,
    spec: LearnerSpec,
    T: int,
    seeds: Sequence[int],
    params: SmoothnessParams = FIRST_PRICE_GRID_PARAMS,
    gamma: float = E_GAP,
    workers: int = 1,
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    mode: str = "auto",
) -> PoAReport:
    """
    Ratio of expected optimal welfare to the welfare of oblivious learning,
    compared per seed with bound + slack where the slack accounts for each
    run's measured regret.
    """
    seeds = [int(s) for s in seeds]
    scan = optimum_scan(scenario, budget, samples, seeds[0] if seeds else None, mode)
    opt = scan.expected_welfare()
    kind = scenario.availability.kind
    bound = theorem_bound(params, kind, gamma)
    corollary = corollary_bound(kind)
    logger.info("price of anarchy: %d seeds x T=%d, optimum %.6f (%s)", len(seeds), T, opt, scan.mode)

    replicates = run_replicates(scenario, spec, T, seeds, workers)
    welfare = float(np.mean([r.welfare for r in replicates]))
    slacks = [regret_slack(bound, params, opt, scenario.n, r.epsilon) for r in replicates]
    cor_params = SmoothnessParams(lam=1.0 - 1.0 / math.e, mu1=1.0, mu2=0.0)
    cor_slacks = [regret_slack(corollary, cor_params, opt, scenario.n, r.epsilon) for r in replicates]
    ratios = [_ratio(opt, r.welfare) for r in replicates]
    flags = sorted({f for r in replicates for f in r.flags})
    return PoAReport(
        expected_opt_welfare=opt,
        empirical_welfare=welfare,
        ratio=_ratio(opt, welfare),
        theorem_bound=bound,
        regret_slack=max(slacks) if slacks else 0.0,
        mode=scan.mode,
        corollary_bound=corollary,
        corollary_slack=max(cor_slacks) if cor_slacks else 0.0,
        params=params,
        T=T,
        seeds=seeds,
        replicates=replicates,
        availability=kind,
        within_bound=all(r <= bound + s + TOL for r, s in zip(ratios, slacks)),
        within_corollary=all(r <= corollary + s + TOL for r, s in zip(ratios, cor_slacks)),
        flags=flags,
    )


def unit_demand_scenario(value_dists: Sequence[Sequence[Tuple[float, float]]], grid: Sequence[float]) -> ComposedScenario:
    """
    Single bidder with independently changing unit-demand values: every item
    copy becomes a first-price auction available with its copy probability.
    """
    fragment = unit_demand_transform(value_dists)
    copies = fragment.copies
    mechanisms = [first_price_auction([c.value], grid) for c in copies]
    availability = AvailabilityModel.independent(fragment.availability_row()[None, :])
    return ComposedScenario(mechanisms, [fragment.valuation()], availability)


# ---------------------------------------------------------------------------
# XOS lower bound
# ---------------------------------------------------------------------------


def _check_k(k: int):
    if not 1 <= k <= MAX_LOWER_BOUND_K:
        raise ParameterError(f"k must lie in [1, {MAX_LOWER_BOUND_K}], got {k}")


def _max_binomial_mean(counts: Sequence[int], p: float, depth: int) -> float:
    """E[max_l Y_l] for independent Y_l ~ Bin(counts_l, p)."""
    support = np.arange(depth)
    cdf = np.ones(depth)
    for r in counts:
        if r > 0:
            cdf = cdf * binom.cdf(support, r, p)
    return float(np.sum(1.0 - cdf))


def lb_optimal_value(k: int) -> float:
    """2 E[max of k independent Bin(k, 1/k)]: the optimum when bids may depend on availability."""
    _check_k(k)
    return 2.0 * _max_binomial_mean([k] * k, 1.0 / k, k)


@dataclass
class LowerBoundResult:
    k: int
    r_vector: Tuple[int, ...]
    expected_value: float
    expected_utility: float
    mode: str
    k_prime: int = 0

    def to_dict(self) -> Dict:
        return {
            "k": self.k,
            "r_vector": list(self.r_vector),
            "k_prime": self.k_prime,
            "expected_value": self.expected_value,
            "expected_utility": self.expected_utility,
            "mode": self.mode,
        }


class ObliviousBidSearch:
    """Bid 1 on r_l items of group l; sorted r-vectors only, values from exact binomial tails."""

    def __init__(self, k: int):
        _check_k(k)
        self.k = k
        self.p = 1.0 / k
        support = np.arange(k + 1)
        # cdf[r, d] = Pr[Bin(r, p) <= d]
        self.cdf = np.vstack([binom.cdf(support, r, self.p) for r in range(k + 1)])
        self._cache: Dict[Tuple[int, ...], Tuple[float, float]] = {}

    def evaluate(self, r: Tuple[int, ...]) -> Tuple[float, float]:
        """(expected value, expected utility) of the bid vector described by r."""
        if r not in self._cache:
            joint = np.prod(self.cdf[list(r), : self.k], axis=0) if r else np.ones(self.k)
            value = 2.0 * float(np.sum(1.0 - joint))
            self._cache[r] = (value, value - self.p * sum(r))
        return self._cache[r]

    def k_prime(self, r: Tuple[int, ...]) -> int:
        return sum(1 for x in r if 2 * x >= self.k)

    def _better(self, r: Tuple[int, ...], best: Optional[Tuple[int, ...]]) -> bool:
        if best is None:
            return True
        u, ub = self.evaluate(r)[1], self.evaluate(best)[1]
        if u > ub + 1e-12:
            return True
        # ties keep the cheaper bid vector
        return abs(u - ub) <= 1e-12 and (sum(r), r) < (sum(best), best)

    def _pad(self, r: Tuple[int, ...]) -> Tuple[int, ...]:
        return tuple(r) + (0,) * (self.k - len(r))

    def all_vectors(self):
        """Every sorted r-vector with k entries in [0, k]."""
        for combo in itertools.combinations_with_replacement(range(self.k, -1, -1), self.k):
            yield tuple(combo)

    def structured_partition(self, count: int):
        """Structured vectors with exactly `count` groups at r >= k/2."""
        big = [x for x in range(self.k, -1, -1) if 2 * x >= self.k]
        small = [x for x in range(1, self.k + 1) if 2 * x < self.k]
        for head in itertools.combinations_with_replacement(big, count):
            yield self._pad(head)
            if count < self.k:
                for partial in small:
                    yield self._pad(head + (partial,))

    def structured_vectors(self):
        """Groups with r >= k/2 first, then at most one partial group, then zeros."""
        for count in range(self.k + 1):
            yield from self.structured_partition(count)

    def structured_count(self) -> int:
        big = sum(1 for x in range(self.k + 1) if 2 * x >= self.k)
        small = sum(1 for x in range(1, self.k + 1) if 2 * x < self.k)
        return sum(math.comb(big + c - 1, c) * (1 + (small if c < self.k else 0)) for c in range(self.k + 1))

    def exhaustive(self, vectors) -> Tuple[int, ...]:
        best = None
        for r in vectors:
            if self._better(r, best):
                best = r
        return best

    def full_groups(self) -> Tuple[int, ...]:
        """Best bid among 'all items of the first g groups', g = 0..k."""
        # with the other groups fixed the utility is convex in r_l, so every
        # r_l of some optimum sits at 0 or k
        return self.exhaustive(self._pad((self.k,) * g) for g in range(self.k + 1))

    def structured(self, workers: int = 1) -> Tuple[int, ...]:
        """Exhaustive pass over the structured space, one partition per head count."""
        jobs = [(self.k, count) for count in range(self.k + 1)]
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                winners = list(pool.map(_best_in_partition, jobs))
        else:
            winners = [_best_in_partition(job) for job in jobs]
        return self.exhaustive(winners)


def _best_in_partition(args) -> Tuple[int, ...]:
    k, count = args
    search = ObliviousBidSearch(k)
    return search.exhaustive(search.structured_partition(count))


def lb_best_oblivious(k: int, search: str = FULL_GROUPS, budget: int = DEFAULT_SEARCH_BUDGET,
                      workers: int = 1) -> LowerBoundResult:
    """
    Utility-maximizing deterministic oblivious bid on the lower-bound instance.

    full_groups is exact for every k. structured enumerates the reduced space
    (groups with r >= k/2 plus at most one partial group) and raises
    BudgetExceededError when that space is larger than budget. unrestricted
    enumerates every sorted r-vector and needs k <= MAX_UNRESTRICTED_K.
    """
    searcher = ObliviousBidSearch(k)
    if search == FULL_GROUPS:
        best = searcher.full_groups()
    elif search == STRUCTURED:
        size = searcher.structured_count()
        if size > budget:
            raise BudgetExceededError("lb_best_oblivious", size, budget)
        best = searcher.structured(workers)
    elif search == UNRESTRICTED:
        if k > MAX_UNRESTRICTED_K:
            raise ParameterError(f"unrestricted search is limited to k <= {MAX_UNRESTRICTED_K}")
        best = searcher.exhaustive(searcher.all_vectors())
    else:
        raise ParameterError(f"unknown search {search!r}, expected one of {SEARCH_MODES}")
    value, utility = searcher.evaluate(best)
    return LowerBoundResult(k=k, r_vector=best, expected_value=value, expected_utility=utility,
                            mode=search, k_prime=searcher.k_prime(best))


def lower_bound_scenario(k: int) -> ComposedScenario:
    """The instance as a composed scenario: k*k first-price items, one XOS bidder, q = 1/k."""
    _check_k(k)
    m = k * k
    if m > 16:
        raise ParameterError("explicit lower-bound scenarios are limited to k <= 4")
    lattice = ProductLattice.boolean(m)
    family = [
        [[0.0, 2.0] if j // k == group else [0.0, 0.0] for j in range(m)]
        for group in range(k)
    ]
    valuation = XOSValuation(lattice, family)
    mechanisms = [first_price_auction([2.0], [0.0, 1.0, 2.0]) for _ in range(m)]
    availability = AvailabilityModel.independent(np.full((1, m), 1.0 / k))
    return ComposedScenario(mechanisms, [valuation], availability)


def _sweep_search(k: int, search: str, budget: int) -> str:
    if search == UNRESTRICTED and k > MAX_UNRESTRICTED_K:
        return FULL_GROUPS
    if search == STRUCTURED and ObliviousBidSearch(k).structured_count() > budget:
        logger.info("k=%d: structured space over budget %d, using full groups", k, budget)
        return FULL_GROUPS
    return search


def _sweep_row(args) -> Dict:
    k, search, budget = args
    opt = lb_optimal_value(k)
    best = lb_best_oblivious(k, _sweep_search(k, search, budget), budget)
    logger.debug("k=%d opt %.6f best %.6f", k, opt, best.expected_value)
    return {
        "k": k,
        "opt_value": opt,
        "best_oblivious_value": best.expected_value,
        "ratio": opt / best.expected_value if best.expected_value > 0 else math.inf,
        "k_prime": best.k_prime,
        "r_vector": " ".join(str(r) for r in best.r_vector if r),
        "mode": best.mode,
    }


def lower_bound_sweep(ks: Sequence[int] = LOWER_BOUND_SWEEP, search: str = FULL_GROUPS,
                      budget: int = DEFAULT_SEARCH_BUDGET, workers: int = 1) -> List[Dict]:
    """
    One row per k. Searches that cannot run at some k (unrestricted above
    MAX_UNRESTRICTED_K, structured over budget) fall back to full_groups.
    """
    jobs = [(int(k), search, budget) for k in ks]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_sweep_row, jobs))
    return [_sweep_row(job) for job in jobs]


def ratio_regimes(rows: Sequence[Dict]) -> Dict[int, bool]:
    """Per k_prime, whether the ratio is nondecreasing in k across the rows with that k_prime."""
    regimes: Dict[int, List[Tuple[int, float]]] = {}
    for row in rows:
        regimes.setdefault(int(row["k_prime"]), []).append((int(row["k"]), float(row["ratio"])))
    result = {}
    for k_prime, points in sorted(regimes.items()):
        ratios = [ratio for _, ratio in sorted(points)]
        result[k_prime] = all(b >= a - TOL for a, b in zip(ratios, ratios[1:]))
    return result
