"""
Wireless channel access under the SINR interference model, as a game and as
a mechanism that composes with the availability machinery.
"""
import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.availability import AvailabilityModel, make_rng
from src.errors import BudgetExceededError, InvalidInstanceError
from src.lattice import TOL, OutcomeLattice, ProductLattice, XOSValuation
from src.mechanisms import BidDistribution, ComposedScenario, Mechanism
from src.smoothness import SmoothnessCertificate, SmoothnessParams, verify_smoothness

logger = logging.getLogger(__name__)

MAX_FEASIBLE_SET_LINKS = 20
MAX_CERTIFIED_LINKS = 12
SUCCESS_VALUE = 2.0
TRANSMIT_PRICE = 1.0


@dataclass(frozen=True, eq=False)
class SinrInstance:
    """Links as (sx, sy, rx, ry) rows in meters plus the physical constants."""

    links: np.ndarray
    power: float = 1.0
    alpha_pl: float = 3.0
    beta: float = 1.0
    nu: float = 0.0

    def __post_init__(self):
        links = np.asarray(self.links, dtype=float).reshape(-1, 4)
        if self.power <= 0 or self.alpha_pl <= 0 or self.beta <= 0:
            raise InvalidInstanceError("power, path loss and threshold must be positive")
        if self.nu < 0:
            raise InvalidInstanceError("noise must be nonnegative")
        lengths = np.hypot(links[:, 0] - links[:, 2], links[:, 1] - links[:, 3])
        if (lengths <= 0).any():
            raise InvalidInstanceError(f"links {np.flatnonzero(lengths <= 0).tolist()} have zero length")
        links.setflags(write=False)
        object.__setattr__(self, "links", links)

    @property
    def n(self) -> int:
        return len(self.links)

    def distances(self) -> np.ndarray:
        """d[j, i] = distance from sender j to receiver i."""
        senders = self.links[:, None, 0:2]
        receivers = self.links[None, :, 2:4]
        return np.linalg.norm(senders - receivers, axis=2)

    def to_dict(self) -> Dict:
        return {
            "links": self.links.tolist(),
            "power": self.power,
            "alpha_pl": self.alpha_pl,
            "beta": self.beta,
            "nu": self.nu,
        }


def _members(instance: SinrInstance, S) -> np.ndarray:
    mask = np.zeros(instance.n, dtype=bool)
    mask[list(S)] = True
    return mask


def _as_mask(instance: SinrInstance, S) -> np.ndarray:
    if isinstance(S, np.ndarray) and S.dtype == bool:
        return S
    return _members(instance, S)


def sinr_feasible(instance: SinrInstance, S) -> np.ndarray:
    """Success flag per link when the links in S transmit; silent links never succeed."""
    mask = _as_mask(instance, S)
    d = instance.distances()
    with np.errstate(divide="ignore"):
        received = instance.power / d ** instance.alpha_pl
    signal = np.diag(received)
    interference = (received * mask[:, None]).sum(axis=0) - signal * mask + instance.nu
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(interference > 0, signal / interference, np.inf)
    return mask & (ratio >= instance.beta)


def channel_utilities(instance: SinrInstance, b: Sequence[int]) -> np.ndarray:
    """1 for a successful transmission, -1 for a failed one, 0 when silent."""
    bits = np.asarray(b, dtype=bool)
    success = sinr_feasible(instance, bits)
    return np.where(bits, np.where(success, 1, -1), 0)


@dataclass
class InterferenceMatrix:
    a: np.ndarray
    degenerate: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {"a": self.a.tolist(), "degenerate": self.degenerate}


def interference_matrix(instance: SinrInstance) -> InterferenceMatrix:
    """a[j, i] = min(1, L_i^alpha / (d(s_j, r_i)^alpha (1/beta - L_i^alpha nu / p)))."""
    d = instance.distances()
    own = np.diag(d) ** instance.alpha_pl
    denominator = 1.0 / instance.beta - own * instance.nu / instance.power
    degenerate = np.flatnonzero(denominator <= 0).tolist()
    with np.errstate(divide="ignore", invalid="ignore"):
        raw = own[None, :] / (d ** instance.alpha_pl) / denominator[None, :]
    a = np.minimum(1.0, np.where(np.isnan(raw), 1.0, raw))
    a[:, degenerate] = 1.0
    np.fill_diagonal(a, 0.0)
    if degenerate:
        logger.warning("links %s cannot succeed even alone; their interference column is capped at 1", degenerate)
    return InterferenceMatrix(a=a, degenerate=degenerate)


def is_feasible(instance: SinrInstance, S) -> bool:
    S = list(S)
    return bool(sinr_feasible(instance, S)[S].all()) if S else True


def max_feasible_set(instance: SinrInstance) -> Tuple[int, ...]:
    """Largest set whose members all succeed together; ties go to the lexicographically first."""
    if instance.n > MAX_FEASIBLE_SET_LINKS:
        raise BudgetExceededError("max_feasible_set", 2 ** instance.n, 2 ** MAX_FEASIBLE_SET_LINKS)
    for size in range(instance.n, 0, -1):
        for S in itertools.combinations(range(instance.n), size):
            if is_feasible(instance, S):
                return S
    return ()


def _subset_masks(n: int) -> np.ndarray:
    codes = np.arange(2 ** n)
    return ((codes[:, None] >> np.arange(n)) & 1).astype(bool)


def empirical_c(instance: SinrInstance, matrix: Optional[InterferenceMatrix] = None) -> float:
    """max over feasible sets S and links j of sum_{i in S, i != j} a[j, i]."""
    if instance.n > MAX_CERTIFIED_LINKS:
        raise BudgetExceededError("empirical_c", 2 ** instance.n, 2 ** MAX_CERTIFIED_LINKS)
    a = (matrix or interference_matrix(instance)).a
    best = 0.0
    for mask in _subset_masks(instance.n):
        if mask.any() and sinr_feasible(instance, mask)[mask].all():
            best = max(best, float((a[:, mask]).sum(axis=1).max()))
    return best


class ChannelAccessMechanism(Mechanism):
    """Bid 1 = transmit and pay 1; the outcome of a link is whether it succeeds."""

    kind = "channel_access"

    def __init__(self, instance: SinrInstance):
        super().__init__(
            [(0.0, 1.0)] * instance.n,
            [OutcomeLattice.boolean("fail", "success") for _ in range(instance.n)],
        )
        self.instance = instance
        self._designated: Optional[Tuple[int, ...]] = None

    def _evaluate(self, bids, rng):
        transmit = np.array([b > 0 for b in bids])
        success = sinr_feasible(self.instance, transmit)
        return tuple(int(s) for s in success), tuple(TRANSMIT_PRICE if t else 0.0 for t in transmit)

    def designated_set(self) -> Tuple[int, ...]:
        if self._designated is None:
            self._designated = max_feasible_set(self.instance)
        return self._designated

    def deviation(self, i: int, values: Sequence[np.ndarray]) -> BidDistribution:
        # transmit iff in the maximum feasible set and a success is worth something
        if i in self.designated_set() and values[i][1] > 0:
            return [(1.0, 1.0)]
        return [(0.0, 1.0)]

    def to_dict(self) -> Dict:
        return {"kind": self.kind, "instance": self.instance.to_dict()}


@dataclass
class ChannelGameCertificate:
    max_feasible_set: Tuple[int, ...]
    empirical_c: float
    holds: bool
    min_slack: float
    checked: int
    params: SmoothnessParams
    counterexample: Optional[Dict] = None
    degenerate: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {
            "max_feasible_set": list(self.max_feasible_set),
            "empirical_c": self.empirical_c,
            "holds": self.holds,
            "min_slack": self.min_slack,
            "checked": self.checked,
            "counterexample": self.counterexample,
            "degenerate": self.degenerate,
            "params": self.params.to_dict(),
            "units": "one per success",
            "mechanism_form": {
                "success_value": SUCCESS_VALUE,
                "transmit_price": TRANSMIT_PRICE,
                "params": self.mechanism_params().to_dict(),
            },
        }

    def mechanism_params(self) -> SmoothnessParams:
        """
        The same inequality with welfare counted at SUCCESS_VALUE per success.
        Utilities and prices agree in both forms, so only lambda rescales.
        """
        return SmoothnessParams(self.params.lam / SUCCESS_VALUE, self.params.mu1, self.params.mu2)


def verify_channel_smoothness(instance: SinrInstance) -> Tuple[ChannelGameCertificate, SmoothnessCertificate]:
    """
    With b'_i = transmit iff i is in the maximum feasible set S, check
    sum_i u_i(b'_i, b_-i) >= |S| - 2 C sum_i p_i(b) over all transmit vectors,
    i.e. (1, 2C, 0)-smoothness in units of successes, then certify the
    mechanism form where a success is worth SUCCESS_VALUE.
    """
    if instance.n > MAX_CERTIFIED_LINKS:
        raise BudgetExceededError("verify_channel_smoothness", 2 ** instance.n, 2 ** MAX_CERTIFIED_LINKS)
    matrix = interference_matrix(instance)
    S = max_feasible_set(instance)
    C = empirical_c(instance, matrix)
    params = SmoothnessParams(lam=1.0, mu1=2.0 * C, mu2=0.0)

    min_slack, counterexample, checked = np.inf, None, 0
    for bits in _subset_masks(instance.n):
        lhs = 0
        for i in S:
            trial = bits.copy()
            trial[i] = True
            lhs += int(channel_utilities(instance, trial)[i])
        rhs = params.lam * len(S) - params.mu1 * int(bits.sum())
        slack = lhs - rhs
        checked += 1
        if slack < min_slack:
            min_slack = float(slack)
        if slack < -TOL and counterexample is None:
            counterexample = {"transmit": bits.astype(int).tolist(), "slack": float(slack)}
    holds = counterexample is None
    if not holds:
        logger.info("channel smoothness fails at %s", counterexample)
    channel = ChannelGameCertificate(
        max_feasible_set=S,
        empirical_c=C,
        holds=holds,
        min_slack=min_slack,
        checked=checked,
        params=params,
        counterexample=counterexample,
        degenerate=matrix.degenerate,
    )
    mech = ChannelAccessMechanism(instance)
    mech._designated = S
    values = [np.array([0.0, SUCCESS_VALUE]) for _ in range(instance.n)]
    certificate = verify_smoothness(mech, [values], channel.mechanism_params())
    return channel, certificate


def random_instance(n: int, seed, side: float = 100.0, min_length: float = 1.0, max_length: float = 10.0,
                    **constants) -> SinrInstance:
    """Senders uniform in a square, receivers at a uniform angle and length from them."""
    rng = make_rng(seed)
    senders = rng.uniform(0.0, side, size=(n, 2))
    angle = rng.uniform(0.0, 2.0 * np.pi, size=n)
    length = rng.uniform(min_length, max_length, size=n)
    receivers = senders + np.stack([np.cos(angle), np.sin(angle)], axis=1) * length[:, None]
    return SinrInstance(np.hstack([senders, receivers]), **constants)


def channel_scenario(instance: SinrInstance, channels: int, availability: AvailabilityModel) -> ComposedScenario:
    """One channel-access mechanism per channel; each link values one success anywhere at 2."""
    mechanisms = [ChannelAccessMechanism(instance) for _ in range(channels)]
    lattice = ProductLattice(tuple(OutcomeLattice.boolean("fail", "success") for _ in range(channels)))
    family = [
        [[0.0, SUCCESS_VALUE] if c == k else [0.0, 0.0] for c in range(channels)]
        for k in range(channels)
    ]
    valuations = [XOSValuation(lattice, family) for _ in range(instance.n)]
    return ComposedScenario(mechanisms, valuations, availability)
