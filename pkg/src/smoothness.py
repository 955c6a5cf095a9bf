"""
Smoothness verification, the availability-oblivious deviations for
independent and everybody-or-nobody admission, the correlation gap and
numerical checks of the everybody-or-nobody deviation chain.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.availability import (
    EVERYBODY_OR_NOBODY,
    INDEPENDENT,
    AvailabilityRealization,
    conditional_support,
    enumerate_support,
    make_rng,
    sample_many,
)
from src.errors import BudgetExceededError, ConfigurationError, ParameterError
from src.lattice import DEFAULT_CHECK_BUDGET, TOL, Valuation, supporting_tables
from src.learning import EmpiricalDistribution, product_deviation
from src.mechanisms import BidDistribution, ComposedScenario, Mechanism, willingness_to_pay

logger = logging.getLogger(__name__)

E_GAP = math.e / (math.e - 1.0)
DEFAULT_SAMPLES = 100_000
SIGMA_BAND = 3.0
CONFIDENCE_Z = 1.96

OWN_DRAWS = "own"
OTHER_DRAWS = "other"

DeviationRule = Callable[[Mechanism, int, Sequence[np.ndarray]], BidDistribution]


def registered_rule(mech: Mechanism, i: int, values: Sequence[np.ndarray]) -> BidDistribution:
    return mech.deviation(i, values)


@dataclass(frozen=True)
class SmoothnessParams:
    lam: float
    mu1: float
    mu2: float = 0.0

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterError(f"lambda must be positive, got {self.lam}")
        if self.mu1 < 0 or self.mu2 < 0:
            raise ParameterError("mu1 and mu2 must be nonnegative")

    def poa_bound(self) -> float:
        return (max(1.0, self.mu1) + self.mu2) / self.lam

    def to_dict(self) -> Dict:
        return {"lambda": self.lam, "mu1": self.mu1, "mu2": self.mu2}


@dataclass
class SmoothnessCertificate:
    params: SmoothnessParams
    status: str
    deviation_table: List[Dict] = field(default_factory=list)
    counterexample: Optional[Dict] = None
    checked: int = 0
    min_slack: float = math.inf

    @property
    def verified(self) -> bool:
        return self.status == "verified"

    def to_dict(self) -> Dict:
        return {
            "params": self.params.to_dict(),
            "status": self.status,
            "checked": self.checked,
            "min_slack": self.min_slack,
            "counterexample": self.counterexample,
            "deviation_table": self.deviation_table,
        }


def valuation_profiles(mech: Mechanism, value_set: Sequence[float]) -> List[List[np.ndarray]]:
    """
    Every profile of monotone per-bidder outcome valuations whose non-bottom
    entries are drawn from value_set.
    """
    per_bidder = []
    for factor in mech.factors:
        others = [x for x in range(factor.size) if x != factor.bottom]
        tables = []
        for combo in itertools.product(value_set, repeat=len(others)):
            table = np.zeros(factor.size)
            table[others] = combo
            monotone = all(
                table[a] <= table[b] + TOL
                for a in range(factor.size) for b in range(factor.size) if factor.leq[a, b]
            )
            if monotone:
                tables.append(table)
        per_bidder.append(tables)
    return [list(p) for p in itertools.product(*per_bidder)]


def _max_welfare(mech: Mechanism, values: Sequence[np.ndarray]) -> float:
    return max(mech.welfare_values(values, x) for x in mech.achievable_outcomes())


def _willingness_grid(mech: Mechanism, outcomes: np.ndarray) -> np.ndarray:
    """Sum over bidders of h_i(b_i, f(b)) for every bid-index profile."""
    total = np.zeros(mech.grid_sizes)
    for index in itertools.product(*(range(s) for s in mech.grid_sizes)):
        out = tuple(int(x) for x in outcomes[index])
        total[index] = sum(
            willingness_to_pay(mech, i, mech.grids[i][k], out) for i, k in enumerate(index)
        )
    return total


def verify_smoothness(
    mech: Mechanism,
    profiles: Sequence[Sequence[np.ndarray]],
    params: SmoothnessParams,
    deviation_rule: DeviationRule = registered_rule,
    tolerance: float = TOL,
) -> SmoothnessCertificate:
    """
    Check sum_i E[v_i(f(b'_i, b_-i)) - p_i(b'_i, b_-i)] >= lam * OPT - mu1 * sum_i p_i(b)
    - mu2 * sum_i h_i(b_i, f(b)) for every valuation profile and every bid vector.
    """
    weights = mech.realization_weights()
    tables = [mech.table(r) for r in range(len(weights))]
    n = mech.n
    revenue = sum(w * pays.sum(axis=-1) for w, (_, pays) in zip(weights, tables))
    willingness = (
        sum(w * _willingness_grid(mech, outcomes) for w, (outcomes, _) in zip(weights, tables))
        if params.mu2 > 0 else 0.0
    )
    certificate = SmoothnessCertificate(params=params, status="verified")

    for values in profiles:
        values = [np.asarray(v, dtype=float) for v in values]
        deviations = [deviation_rule(mech, i, values) for i in range(n)]
        certificate.deviation_table.append({
            "values": [v.tolist() for v in values],
            "deviations": [[[b, p] for b, p in d] for d in deviations],
        })
        lhs = np.zeros(mech.grid_sizes)
        for i, dev in enumerate(deviations):
            for bid, prob in dev:
                k = mech.bid_index(i, bid)
                for w, (outcomes, pays) in zip(weights, tables):
                    own_out = np.expand_dims(np.take(outcomes[..., i], k, axis=i), i)
                    own_pay = np.expand_dims(np.take(pays[..., i], k, axis=i), i)
                    lhs = lhs + w * prob * (values[i][own_out] - own_pay)
        opt = _max_welfare(mech, values)
        rhs = params.lam * opt - params.mu1 * revenue - params.mu2 * willingness
        slack = lhs - rhs
        certificate.checked += slack.size
        worst = np.unravel_index(int(np.argmin(slack)), slack.shape)
        certificate.min_slack = min(certificate.min_slack, float(slack[worst]))
        if slack[worst] < -tolerance:
            certificate.status = "counterexample"
            certificate.counterexample = {
                "bids": [mech.grids[i][k] for i, k in enumerate(worst)],
                "values": [v.tolist() for v in values],
                "slack": float(slack[worst]),
            }
            logger.info("smoothness counterexample at bids %s, slack %.6g",
                        certificate.counterexample["bids"], slack[worst])
            return certificate
    return certificate


# ---------------------------------------------------------------------------
# Correlation gap
# ---------------------------------------------------------------------------


@dataclass
class GapReport:
    lhs: float
    rhs: float
    ratio: float
    mode: str = "exact"
    samples: Optional[int] = None
    radius: Optional[float] = None

    def to_dict(self) -> Dict:
        return {
            "lhs": self.lhs,
            "rhs": self.rhs,
            "ratio": self.ratio if math.isfinite(self.ratio) else "inf",
            "mode": self.mode,
            "samples": self.samples,
            "radius": self.radius,
        }


def correlation_gap(
    v: Valuation,
    xs: Sequence[Sequence[int]],
    alphas: Sequence[float],
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed=None,
    mode: str = "auto",
) -> GapReport:
    """
    lhs = sum_j alpha_j v(x^j); rhs = E[v(y)] where each component y_c
    independently equals x^j_c with probability alpha_j.
    """
    alphas = np.asarray(alphas, dtype=float)
    if len(xs) != len(alphas) or len(xs) == 0:
        raise ParameterError("need one weight per outcome vector")
    if (alphas < 0).any() or abs(alphas.sum() - 1.0) > 1e-12:
        raise ParameterError(f"weights must be a convex combination, sum is {alphas.sum()}")
    lattice = v.lattice
    points = np.array([lattice.validate(x) for x in xs], dtype=np.int64)
    dense = v.as_array()
    k, m = points.shape
    lhs = float(alphas @ dense[tuple(points.T)])

    size = float(k) ** m
    run_exact = mode == "exact" or (mode == "auto" and size <= budget)
    if mode == "exact" and size > budget:
        raise BudgetExceededError("correlation_gap", size, budget)
    radius, count = None, None
    if run_exact:
        choices = np.indices((k,) * m).reshape(m, -1).T
        y = points[choices, np.arange(m)]
        weights = np.prod(alphas[choices], axis=1)
        rhs = float(weights @ dense[tuple(y.T)])
        run_mode = "exact"
    else:
        if mode == "auto":
            logger.warning("correlation gap needs %.3g terms, sampling %d instead", size, samples)
        rng = make_rng(seed)
        choices = rng.choice(k, size=(samples, m), p=alphas)
        draws = dense[tuple(points[choices, np.arange(m)].T)]
        rhs = float(draws.mean())
        radius = CONFIDENCE_Z * float(draws.std(ddof=1)) / math.sqrt(samples)
        run_mode, count = "mc", samples

    if rhs > 0:
        ratio = lhs / rhs
    else:
        ratio = math.inf if lhs > TOL else 1.0
    return GapReport(lhs=lhs, rhs=rhs, ratio=ratio, mode=run_mode, samples=count, radius=radius)


# ---------------------------------------------------------------------------
# Social optimum scans
# ---------------------------------------------------------------------------


@dataclass
class OptimumScan:
    """Optimal outcome per availability realization with its probability weight."""

    rows: List[Tuple[AvailabilityRealization, float, Tuple[Tuple[int, ...], ...], float]]
    mode: str
    samples: Optional[int] = None

    def expected_welfare(self) -> float:
        return float(sum(p * w for _, p, _, w in self.rows))

    def welfare_se(self) -> Optional[float]:
        if self.mode != "mc" or len(self.rows) < 2:
            return None
        values = np.array([w for _, _, _, w in self.rows])
        return float(values.std(ddof=1) / math.sqrt(len(values)))


def optimum_scan(
    scenario: ComposedScenario,
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed=None,
    mode: str = "auto",
) -> OptimumScan:
    support = None
    if mode != "mc":
        try:
            support = enumerate_support(scenario.availability, budget=budget)
        except BudgetExceededError as exc:
            if mode == "exact":
                raise
            logger.warning("%s, sampling %d availability draws", exc, samples)
    cache: Dict = {}

    def optimum(a: AvailabilityRealization):
        key = a.key()
        if key not in cache:
            cache[key] = scenario.optimal_outcome(a)
        return cache[key]

    if support is not None:
        rows = [(a, p, *optimum(a)) for a, p in support if p > 0]
        return OptimumScan(rows=rows, mode="exact")
    draws = sample_many(scenario.availability, samples, make_rng(seed))
    rows = []
    for matrix in draws:
        a = AvailabilityRealization(matrix)
        rows.append((a, 1.0 / samples, *optimum(a)))
    return OptimumScan(rows=rows, mode="mc", samples=samples)


@dataclass
class OptimumDistribution:
    """Per mechanism, outcomes of the random optimum and their probability given availability."""

    marginals: List[List[Tuple[Tuple[int, ...], float]]]
    q: np.ndarray
    expected_welfare: float
    mode: str = "exact"
    samples: Optional[int] = None

    def to_dict(self) -> Dict:
        return {
            "marginals": [[{"outcome": list(x), "r": r} for x, r in col] for col in self.marginals],
            "q": self.q.tolist(),
            "expected_welfare": self.expected_welfare,
            "mode": self.mode,
            "samples": self.samples,
        }


def optimum_distribution(
    scenario: ComposedScenario,
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed=None,
    mode: str = "auto",
) -> OptimumDistribution:
    """
    r_j(x) = Pr[x*_j = x | mechanism j available]. A mechanism counts as
    available when at least one bidder may bid in it.
    """
    scan = optimum_scan(scenario, budget, samples, seed, mode)
    marginals = []
    available_mass = np.zeros(scenario.m)
    for j in range(scenario.m):
        counts: Dict[Tuple[int, ...], float] = {}
        for a, p, x_star, _ in scan.rows:
            if a.matrix[:, j].any():
                counts[x_star[j]] = counts.get(x_star[j], 0.0) + p
                available_mass[j] += p
        total = sum(counts.values())
        column = [(x, c / total) for x, c in sorted(counts.items(), reverse=True)] if total > 0 else []
        marginals.append(column)
    if scan.mode == "exact":
        q = scenario.availability.column_probs()
    else:
        q = available_mass
    return OptimumDistribution(
        marginals=marginals,
        q=np.asarray(q, dtype=float),
        expected_welfare=scan.expected_welfare(),
        mode=scan.mode,
        samples=scan.samples,
    )


# ---------------------------------------------------------------------------
# Independent admission
# ---------------------------------------------------------------------------


def _target_tables(scenario: ComposedScenario, x_star, gamma_v: float) -> List[List[np.ndarray]]:
    """tables[k][j][y] = reduced supporting value of bidder k for y ^ x*_kj."""
    tables = []
    for k, v in enumerate(scenario.valuations):
        x_k = tuple(x_star[j][k] for j in range(scenario.m))
        _, support = supporting_tables(v, x_k)
        per_mech = []
        for j, factor in enumerate(v.lattice.factors):
            target = np.array([support[j][factor.meet(y, x_k[j])] for y in range(factor.size)]) / gamma_v
            per_mech.append(target)
        tables.append(per_mech)
    return tables


def availability_aware_deviation(
    scenario: ComposedScenario,
    i: int,
    gamma_v: float,
    A,
    deviation_rule: DeviationRule = registered_rule,
) -> List[BidDistribution]:
    """
    Per-mechanism smoothness deviation of bidder i when the full availability
    realization is known: target the optimum under A with values reduced by gamma_v.
    """
    if gamma_v <= 0:
        raise ParameterError("gammaV must be positive")
    x_star, _ = scenario.optimal_outcome(A)
    tables = _target_tables(scenario, x_star, gamma_v)
    return [
        deviation_rule(mech, i, [tables[k][j] for k in range(scenario.n)])
        for j, mech in enumerate(scenario.mechanisms)
    ]


def _merge(weighted: Dict[float, float], dist: BidDistribution, weight: float):
    for bid, p in dist:
        weighted[float(bid)] = weighted.get(float(bid), 0.0) + weight * p


@dataclass
class IndependentDeviation:
    """Availability-oblivious deviation: independent per-mechanism bid distributions."""

    bidder: int
    gamma_v: float
    per_mechanism: List[BidDistribution]
    mode: str = "exact"
    samples: Optional[int] = None

    def joint(self) -> List[Tuple[Tuple[float, ...], float]]:
        return product_deviation(self.per_mechanism)

    def to_dict(self) -> Dict:
        return {
            "bidder": self.bidder,
            "gamma_v": self.gamma_v,
            "per_mechanism": [[[b, p] for b, p in d] for d in self.per_mechanism],
            "mode": self.mode,
            "samples": self.samples,
        }


def build_independent_deviation(
    scenario: ComposedScenario,
    i: int,
    gamma_v: float = E_GAP,
    deviation_rule: DeviationRule = registered_rule,
    budget: int = DEFAULT_CHECK_BUDGET,
    samples: int = DEFAULT_SAMPLES,
    seed=None,
    mode: str = "auto",
) -> IndependentDeviation:
    """
    For every mechanism j separately: condition on A_ij = 1, draw the other
    availabilities from the model and keep the j-th component of the
    availability-aware deviation.
    """
    model = scenario.availability
    if model.kind != INDEPENDENT:
        raise ConfigurationError("independent deviations need independent availability")
    cache: Dict = {}

    def aware(a: AvailabilityRealization) -> List[BidDistribution]:
        key = a.key()
        if key not in cache:
            cache[key] = availability_aware_deviation(scenario, i, gamma_v, a, deviation_rule)
        return cache[key]

    per_mechanism = []
    run_mode, count = "exact", None
    rng = make_rng(seed)
    for j in range(scenario.m):
        weighted: Dict[float, float] = {}
        support = None
        if mode != "mc":
            try:
                support = conditional_support(model, i, j, budget=budget)
            except BudgetExceededError as exc:
                if mode == "exact":
                    raise
                logger.warning("%s, sampling %d availability draws for mechanism %d", exc, samples, j)
        if support is not None:
            for a, p in support:
                _merge(weighted, aware(a)[j], p)
        else:
            probs = np.array(model.probs)
            probs[i, j] = 1.0
            draws = sample_many(type(model).independent(probs), samples, rng)
            for matrix in draws:
                _merge(weighted, aware(AvailabilityRealization(matrix))[j], 1.0 / samples)
            run_mode, count = "mc", samples
        per_mechanism.append(sorted((b, p) for b, p in weighted.items() if p > 0))
    return IndependentDeviation(i, gamma_v, per_mechanism, mode=run_mode, samples=count)


def _own_outcome_dist(mech: Mechanism, i: int, dist: BidDistribution, others: Sequence[float]) -> Dict[int, float]:
    result: Dict[int, float] = {}
    for bid, p in dist:
        bids = list(others)
        bids[i] = bid
        y = mech.outcome(bids)[i]
        result[y] = result.get(y, 0.0) + p
    return result


def deviation_marginals_gap(
    scenario: ComposedScenario,
    deviation: IndependentDeviation,
    b,
    A,
    budget: int = DEFAULT_CHECK_BUDGET,
    deviation_rule: DeviationRule = registered_rule,
) -> Dict:
    """
    Compare, per mechanism, bidder i's outcome distribution under the
    oblivious deviation with the one under the availability-aware deviation
    drawn from the model conditioned on A_ij = 1, with the real opponents'
    bids b masked by the real availability A.
    """
    i = deviation.bidder
    matrix = A.matrix if isinstance(A, AvailabilityRealization) else np.asarray(A)
    report = {"bidder": i, "mechanisms": [], "max_gap": 0.0}
    for j, mech in enumerate(scenario.mechanisms):
        others = [bid if matrix[k, j] else 0.0 for k, bid in enumerate(b.column(j))]
        oblivious = _own_outcome_dist(mech, i, deviation.per_mechanism[j], others)
        aware: Dict[int, float] = {}
        for a, p in conditional_support(scenario.availability, i, j, budget=budget):
            dist = availability_aware_deviation(scenario, i, deviation.gamma_v, a, deviation_rule)[j]
            for y, q in _own_outcome_dist(mech, i, dist, others).items():
                aware[y] = aware.get(y, 0.0) + p * q
        keys = sorted(set(oblivious) | set(aware))
        gap = max(abs(oblivious.get(y, 0.0) - aware.get(y, 0.0)) for y in keys)
        report["mechanisms"].append({
            "mechanism": j,
            "oblivious": {int(y): oblivious.get(y, 0.0) for y in keys},
            "aware": {int(y): aware.get(y, 0.0) for y in keys},
            "gap": gap,
        })
        report["max_gap"] = max(report["max_gap"], gap)
    return report


# ---------------------------------------------------------------------------
# Everybody-or-nobody admission
# ---------------------------------------------------------------------------


@dataclass
class EoNDeviationDraws:
    z: Tuple[Tuple[int, ...], ...]
    t_tilde: Tuple[Tuple[int, ...], ...]
    alpha_scale: float
    w_tables: List[List[np.ndarray]]
    w_source: str = OWN_DRAWS

    def to_dict(self) -> Dict:
        return {
            "z": [list(x) for x in self.z],
            "t_tilde": [list(x) for x in self.t_tilde],
            "alpha_scale": self.alpha_scale,
            "w_tables": [[w.tolist() for w in row] for row in self.w_tables],
            "w_source": self.w_source,
        }


def alpha_scale(lam: float) -> float:
    if not 0 < lam <= 2:
        raise ParameterError(f"lambda must lie in (0, 2] for the scaled optimum draw, got {lam}")
    return 2.0 / lam


class EoNDrawSpace:
    """
    Draw space of one bidder: per mechanism, z_j is x^l w.p. r^l / alpha and
    t~_j is x^l w.p. q_j r^l; both are bottom otherwise. Option index L_j
    (the last one) is the bottom outcome.
    """

    def __init__(self, scenario: ComposedScenario, opt: OptimumDistribution, alpha: float,
                 deviation_rule: DeviationRule = registered_rule):
        self.scenario = scenario
        self.alpha = alpha
        self.deviation_rule = deviation_rule
        self.q = np.asarray(opt.q, dtype=float)
        self.options: List[List[Tuple[int, ...]]] = []
        self.pz: List[np.ndarray] = []
        self.pt: List[np.ndarray] = []
        for j, mech in enumerate(scenario.mechanisms):
            column = opt.marginals[j]
            self.options.append([x for x, _ in column] + [mech.bottom()])
            r = np.array([p for _, p in column])
            z = r / alpha
            t = opt.q[j] * r
            self.pz.append(np.append(z, max(0.0, 1.0 - z.sum())))
            self.pt.append(np.append(t, max(0.0, 1.0 - t.sum())))
        self._w: Dict = {}
        self._dev: Dict = {}

    def size(self) -> int:
        return int(np.prod([len(o) ** 2 for o in self.options], dtype=np.float64))

    def component(self, j: int, index: int, k: int) -> int:
        return self.options[j][index][k]

    def sample(self, rng: np.random.Generator, count: int) -> Tuple[np.ndarray, np.ndarray]:
        m = self.scenario.m
        z = np.zeros((count, m), dtype=np.int64)
        t = np.zeros((count, m), dtype=np.int64)
        for j in range(m):
            z[:, j] = _categorical(rng, self.pz[j], count)
            t[:, j] = _categorical(rng, self.pt[j], count)
        return z, t

    def enumerate(self):
        """(z indices, t indices, probability) over the whole draw space."""
        axes = []
        for j in range(self.scenario.m):
            axes.append([(a, p) for a, p in enumerate(self.pz[j]) if p > 0])
        for j in range(self.scenario.m):
            axes.append([(a, p) for a, p in enumerate(self.pt[j]) if p > 0])
        m = self.scenario.m
        for combo in itertools.product(*axes):
            prob = float(np.prod([p for _, p in combo]))
            yield tuple(a for a, _ in combo[:m]), tuple(a for a, _ in combo[m:]), prob

    def w_table(self, k: int, j: int, t_prefix: Tuple[int, ...], z_index: int) -> np.ndarray:
        """w_{k,j}(y) = v_k(t~_<j, y ^ z_j, bottom) - v_k(t~_<j, bottom)."""
        key = (k, j, t_prefix, z_index)
        if key not in self._w:
            v = self.scenario.valuations[k]
            lattice = v.lattice
            bottom = lattice.bottom()
            prefix = tuple(self.component(l, t_prefix[l], k) for l in range(j))
            factor = lattice.factors[j]
            zc = self.component(j, z_index, k)
            base = v.value(prefix + bottom[j:])
            table = np.array([
                v.value(prefix + (factor.meet(y, zc),) + bottom[j + 1:]) - base
                for y in range(factor.size)
            ])
            table.setflags(write=False)
            self._w[key] = table
        return self._w[key]

    def deviation(self, i: int, j: int, t_prefix: Tuple[int, ...], z_indices: Tuple[int, ...]) -> BidDistribution:
        """Mechanism j deviation of bidder i; z_indices[k] is the z draw used for bidder k's table."""
        key = (i, j, t_prefix, z_indices)
        if key not in self._dev:
            mech = self.scenario.mechanisms[j]
            values = [self.w_table(k, j, t_prefix, z_indices[k]) for k in range(self.scenario.n)]
            self._dev[key] = self.deviation_rule(mech, i, values)
        return self._dev[key]


def _categorical(rng: np.random.Generator, probs: np.ndarray, count: int) -> np.ndarray:
    cdf = np.cumsum(probs)
    return np.minimum(np.searchsorted(cdf, rng.random(count) * cdf[-1], side="right"), len(probs) - 1)


def _require_eon(scenario: ComposedScenario):
    if scenario.availability.kind != EVERYBODY_OR_NOBODY:
        raise ConfigurationError("everybody-or-nobody deviations need everybody-or-nobody availability")


def build_eon_deviation(
    scenario: ComposedScenario,
    i: int,
    lam: float,
    seed,
    opt: Optional[OptimumDistribution] = None,
    w_source: str = OWN_DRAWS,
    deviation_rule: DeviationRule = registered_rule,
) -> Tuple[EoNDeviationDraws, List[Tuple[Tuple[float, ...], float]]]:
    """
    Draw z and t~ for bidder i and derive its availability-oblivious
    deviation by pretending every bidder values mechanism j by w_{., j}.
    With w_source="other" bidder k's table uses bidder k's own z draw.
    """
    _require_eon(scenario)
    if w_source not in (OWN_DRAWS, OTHER_DRAWS):
        raise ConfigurationError(f"unknown w_source {w_source!r}")
    alpha = alpha_scale(lam)
    opt = opt or optimum_distribution(scenario)
    space = EoNDrawSpace(scenario, opt, alpha, deviation_rule)
    streams = np.random.SeedSequence(seed).spawn(scenario.n)
    draws = [space.sample(make_rng(s), 1) for s in streams]
    z_i, t_i = draws[i][0][0], draws[i][1][0]
    m = scenario.m
    per_mechanism, w_tables = [], []
    for j in range(m):
        prefix = tuple(int(a) for a in t_i[:j])
        if w_source == OWN_DRAWS:
            z_indices = tuple(int(z_i[j]) for _ in range(scenario.n))
        else:
            z_indices = tuple(int(draws[k][0][0][j]) for k in range(scenario.n))
        per_mechanism.append(space.deviation(i, j, prefix, z_indices))
        w_tables.append([space.w_table(k, j, prefix, z_indices[k]) for k in range(scenario.n)])
    result = EoNDeviationDraws(
        z=tuple(space.options[j][int(z_i[j])] for j in range(m)),
        t_tilde=tuple(space.options[j][int(t_i[j])] for j in range(m)),
        alpha_scale=alpha,
        # indexed [bidder][mechanism]
        w_tables=[[w_tables[j][k] for j in range(m)] for k in range(scenario.n)],
        w_source=w_source,
    )
    return result, product_deviation(per_mechanism)


# ---------------------------------------------------------------------------
# Proof-chain checks for everybody-or-nobody admission
# ---------------------------------------------------------------------------


@dataclass
class LemmaCheck:
    name: str
    kind: str
    lhs: float
    rhs: float
    se: float = 0.0
    holds: bool = True
    bidder: Optional[int] = None

    @property
    def slack(self) -> float:
        return self.lhs - self.rhs

    def to_dict(self) -> Dict:
        return {
            "name": self.name,
            "kind": self.kind,
            "bidder": self.bidder,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "slack": self.slack,
            "se": self.se,
            "holds": self.holds,
        }


@dataclass
class LemmaReport:
    params: SmoothnessParams
    alpha_scale: float
    mode: str
    checks: List[LemmaCheck]
    samples: Optional[int] = None
    seed: Optional[int] = None
    w_source: str = OWN_DRAWS

    @property
    def ok(self) -> bool:
        return all(c.holds for c in self.checks)

    def get(self, name: str, bidder: Optional[int] = None) -> LemmaCheck:
        for c in self.checks:
            if c.name == name and c.bidder == bidder:
                return c
        raise KeyError((name, bidder))

    def to_dict(self) -> Dict:
        return {
            "params": self.params.to_dict(),
            "alpha_scale": self.alpha_scale,
            "mode": self.mode,
            "samples": self.samples,
            "seed": self.seed,
            "w_source": self.w_source,
            "ok": self.ok,
            "checks": [c.to_dict() for c in self.checks],
        }


def uniform_bids(scenario: ComposedScenario, budget: int = DEFAULT_CHECK_BUDGET) -> EmpiricalDistribution:
    """Uniform distribution over every bid profile of the scenario."""
    axes = [range(mech.grid_sizes[i]) for i in range(scenario.n) for mech in scenario.mechanisms]
    count = int(np.prod([len(a) for a in axes], dtype=np.float64))
    if count > budget:
        raise BudgetExceededError("uniform_bids", count, budget, hint="pass an explicit bid distribution")
    profiles = np.array(list(itertools.product(*axes)), dtype=np.int64).reshape(-1, scenario.n, scenario.m)
    return EmpiricalDistribution(scenario, profiles, np.full(len(profiles), 1.0 / len(profiles)))


class _BaseRows:
    """Bid and availability rows with weights, plus per-bidder payment and willingness terms."""

    def __init__(self, scenario: ComposedScenario, bid_idx: np.ndarray, matrix: np.ndarray,
                 weights: np.ndarray, need_h: bool):
        self.scenario = scenario
        self.bid_idx = bid_idx
        self.matrix = matrix
        self.weights = weights
        n = scenario.n
        self.pay_b = np.zeros((len(weights), n))
        self.h_b = np.zeros((len(weights), n))
        for i in range(n):
            _, pays = scenario.component_batch(i, bid_idx[:, i, :], bid_idx, matrix)
            self.pay_b[:, i] = pays.sum(axis=1)
        if need_h:
            self._fill_willingness()

    def _fill_willingness(self):
        scenario = self.scenario
        eff = self.bid_idx * self.matrix
        cache: Dict = {}
        for row in range(len(self.weights)):
            for j, mech in enumerate(scenario.mechanisms):
                column = tuple(int(a) for a in eff[row, :, j])
                key = (j, column)
                if key not in cache:
                    table_out, _ = mech.table()
                    out = tuple(int(x) for x in table_out[column])
                    cache[key] = [
                        willingness_to_pay(mech, i, mech.grids[i][column[i]], out) for i in range(scenario.n)
                    ]
                self.h_b[row] += cache[key]


def _bidder_terms(space: EoNDrawSpace, i: int, base: _BaseRows, z: np.ndarray, t: np.ndarray,
                  own: np.ndarray) -> Dict[str, np.ndarray]:
    """
    Per-row quantities of bidder i for draw rows z, t (each (N, m)) and
    deviation grid indices own (N, m).
    """
    scenario = space.scenario
    m = scenario.m
    outs, pays = scenario.component_batch(i, own, base.bid_idx, base.matrix)
    dense = scenario.valuations[i].as_array()
    rows = len(own)
    w_sum = np.zeros(rows)
    zw = np.zeros(rows)
    q = space.q
    keys = np.concatenate([z, t], axis=1)
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    t_comp = np.zeros((rows, m), dtype=np.int64)
    for u, key in enumerate(unique):
        mask = inverse == u
        z_row, t_row = key[:m], key[m:]
        for j in range(m):
            table = space.w_table(i, j, tuple(int(a) for a in t_row[:j]), int(z_row[j]))
            w_sum[mask] += table[outs[mask, j]]
            zw[mask] += q[j] * table[space.component(j, int(z_row[j]), i)]
            t_comp[mask, j] = space.component(j, int(t_row[j]), i)
    return {
        "v_dev": dense[tuple(outs.T)],
        "pay_dev": pays.sum(axis=1),
        "w_sum": w_sum,
        "zw": zw,
        "v_t": dense[tuple(t_comp.T)],
    }


def _pick(dist: BidDistribution, mech: Mechanism, i: int, uniform: np.ndarray) -> np.ndarray:
    cdf = np.cumsum([p for _, p in dist])
    grid_idx = np.array([mech.bid_index(i, b) for b, _ in dist], dtype=np.int64)
    return grid_idx[np.minimum(np.searchsorted(cdf, uniform * cdf[-1], side="right"), len(dist) - 1)]


def check_lemma_chain_eon(
    scenario: ComposedScenario,
    params: SmoothnessParams,
    bids: Optional[EmpiricalDistribution] = None,
    samples: int = DEFAULT_SAMPLES,
    budget: int = DEFAULT_CHECK_BUDGET,
    seed=None,
    mode: str = "auto",
    w_source: str = OWN_DRAWS,
    deviation_rule: DeviationRule = registered_rule,
) -> LemmaReport:
    """
    Evaluate both sides of each step of the everybody-or-nobody argument
    against the bid distribution `bids` (uniform over all profiles by default):

      valuation_floor    E[v_i(f(b'_i, b_-i))] >= sum_j E[w_ij(f_j(b'_ij, b_-i))] - E[v_i(t~)] / (alpha (alpha + 1))
      smoothness_on_w    sum_i sum_j E[w_ij(f_j) - p_ij(b'_ij, b_-i)] >= lam sum_i sum_j q_j E[w_ij(z_j)] - mu1 sum E[p_i(b)] - mu2 sum E[h_i]
      telescoping        sum_j q_j E[w_ij(z_j)] = E[v_i(t~)] / alpha
      aggregate          sum_i E[u_i(b'_i, b_-i)] >= lam^2 / 4 sum_i E[v_i(t~)] - mu1 sum E[p_i(b)] - mu2 sum E[h_i]
      aggregate_opt      same with (1 - 1/e) lam^2 / 4 sum_i E[v_i(x*)] on the right
    """
    _require_eon(scenario)
    if scenario.randomized:
        raise ConfigurationError("the deviation chain needs deterministic mechanisms")
    alpha = alpha_scale(params.lam)
    opt = optimum_distribution(scenario, budget=budget, samples=samples, seed=seed)
    space = EoNDrawSpace(scenario, opt, alpha, deviation_rule)
    bids = bids or uniform_bids(scenario, budget)
    n, m = scenario.n, scenario.m
    need_h = params.mu2 > 0

    run_mode = mode
    support = None
    if mode != "mc":
        if w_source == OTHER_DRAWS:
            if mode == "exact":
                raise ConfigurationError("exact deviation-chain checks need w_source='own'")
            run_mode = "mc"
        else:
            support = enumerate_support(scenario.availability, budget=budget)
            size = len(bids.profiles) * len(support) * space.size()
            if size > budget:
                if mode == "exact":
                    raise BudgetExceededError("check_lemma_chain_eon", size, budget)
                logger.warning("deviation-chain enumeration needs %d terms, sampling %d instead", size, samples)
                run_mode = "mc"
            else:
                run_mode = "exact"

    if run_mode == "exact":
        terms, base = _exact_terms(space, bids, support, need_h)
        weights = None
    else:
        terms, base = _sampled_terms(space, bids, samples, seed, need_h, w_source)
        weights = base.weights

    c = 1.0 / (alpha * (alpha + 1.0))
    shrink = params.lam ** 2 / 4.0
    shared = params.mu1 * base.pay_b + params.mu2 * base.h_b  # (N, n)

    def expect(values: np.ndarray) -> Tuple[float, float]:
        if weights is None:
            return float(values), 0.0
        mean = float(values.mean())
        se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0
        return mean, se

    def shared_term(i: Optional[int] = None):
        values = shared[:, i] if i is not None else shared.sum(axis=1)
        return values if weights is not None else float(base.weights @ values)

    checks: List[LemmaCheck] = []

    def add(name, kind, lhs_vals, rhs_vals, bidder=None):
        lhs, _ = expect(lhs_vals)
        rhs, _ = expect(rhs_vals)
        _, se = expect(lhs_vals - rhs_vals) if weights is not None else (0.0, 0.0)
        slack = lhs - rhs
        if kind == "equality":
            holds = abs(slack) <= SIGMA_BAND * se + TOL
        else:
            holds = slack >= -SIGMA_BAND * se - TOL
        checks.append(LemmaCheck(name, kind, lhs, rhs, se, holds, bidder))

    for i in range(n):
        tm = terms[i]
        add("valuation_floor", "inequality", tm["v_dev"], tm["w_sum"] - c * tm["v_t"], i)
        add("telescoping", "equality", tm["zw"], tm["v_t"] / alpha, i)
    add(
        "smoothness_on_w", "inequality",
        sum(terms[i]["w_sum"] - terms[i]["pay_dev"] for i in range(n)),
        params.lam * sum(terms[i]["zw"] for i in range(n)) - shared_term(),
    )
    add(
        "aggregate", "inequality",
        sum(terms[i]["v_dev"] - terms[i]["pay_dev"] for i in range(n)),
        shrink * sum(terms[i]["v_t"] for i in range(n)) - shared_term(),
    )
    opt_welfare = opt.expected_welfare
    add(
        "aggregate_opt", "inequality",
        sum(terms[i]["v_dev"] - terms[i]["pay_dev"] for i in range(n)),
        (1.0 - 1.0 / math.e) * shrink * opt_welfare - shared_term(),
    )
    for check in checks:
        if not check.holds:
            logger.info("%s fails for bidder %s: slack %.6g", check.name, check.bidder, check.slack)
    return LemmaReport(
        params=params,
        alpha_scale=alpha,
        mode=run_mode,
        checks=checks,
        samples=samples if run_mode == "mc" else None,
        seed=seed,
        w_source=w_source,
    )


def _exact_terms(space: EoNDrawSpace, bids: EmpiricalDistribution, support, need_h: bool):
    """Expectations per bidder by full enumeration of bids x availability x draws."""
    scenario = space.scenario
    n, m = scenario.n, scenario.m
    count = len(bids.profiles)
    bid_idx = np.repeat(bids.profiles, len(support), axis=0)
    matrix = np.tile(np.stack([a.matrix for a, _ in support]), (count, 1, 1))
    weights = np.outer(bids.frequencies, [p for _, p in support]).reshape(-1)
    base = _BaseRows(scenario, bid_idx, matrix, weights, need_h)
    rows = len(weights)

    terms = []
    for i in range(n):
        acc = {"v_dev": 0.0, "pay_dev": 0.0, "w_sum": 0.0, "zw": 0.0, "v_t": 0.0}
        for z, t, prob in space.enumerate():
            per_mech = [
                space.deviation(i, j, tuple(t[:j]), (z[j],) * n) for j in range(m)
            ]
            for combo in itertools.product(*per_mech):
                p_dev = float(np.prod([p for _, p in combo]))
                own = np.array(
                    [scenario.mechanisms[j].bid_index(i, b) for j, (b, _) in enumerate(combo)], dtype=np.int64
                )
                values = _bidder_terms(
                    space, i, base,
                    np.broadcast_to(np.array(z), (rows, m)),
                    np.broadcast_to(np.array(t), (rows, m)),
                    np.broadcast_to(own, (rows, m)).copy(),
                )
                for key in acc:
                    acc[key] += prob * p_dev * float(weights @ values[key])
        terms.append(acc)
    return terms, base


def _sampled_terms(space: EoNDrawSpace, bids: EmpiricalDistribution, samples: int, seed,
                   need_h: bool, w_source: str):
    """Per-sample quantities; every sample draws bids, availability and each bidder's draws."""
    scenario = space.scenario
    n, m = scenario.n, scenario.m
    streams = np.random.SeedSequence(seed).spawn(n + 2)
    rng = make_rng(streams[0])
    picks = rng.choice(len(bids.profiles), size=samples, p=bids.frequencies)
    bid_idx = bids.profiles[picks]
    matrix = sample_many(scenario.availability, samples, make_rng(streams[1]))
    base = _BaseRows(scenario, bid_idx, matrix, np.full(samples, 1.0 / samples), need_h)

    draw_rngs = [make_rng(s) for s in streams[2:]]
    draws = [space.sample(r, samples) for r in draw_rngs]
    uniforms = [r.random((samples, m)) for r in draw_rngs]

    terms = []
    for i in range(n):
        z, t = draws[i]
        own = np.zeros((samples, m), dtype=np.int64)
        for j in range(m):
            mech = scenario.mechanisms[j]
            if w_source == OWN_DRAWS:
                zs = np.repeat(z[:, j:j + 1], n, axis=1)
            else:
                zs = np.stack([draws[k][0][:, j] for k in range(n)], axis=1)
            keys = np.concatenate([t[:, :j], zs], axis=1)
            unique, inverse = np.unique(keys, axis=0, return_inverse=True)
            inverse = np.asarray(inverse).reshape(-1)
            for u, key in enumerate(unique):
                mask = inverse == u
                prefix = tuple(int(a) for a in key[:j])
                dist = space.deviation(i, j, prefix, tuple(int(a) for a in key[j:]))
                own[mask, j] = _pick(dist, mech, i, uniforms[i][mask, j])
        terms.append(_bidder_terms(space, i, base, z, t, own))
    return terms, base
