"""
Experiment configuration: YAML documents validated into pydantic models and
turned into scenario objects.
"""
import os
from pathlib import Path
from typing import Dict, List, Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from src.availability import EVERYBODY_OR_NOBODY, FIXED, AvailabilityModel
from src.errors import ConfigurationError
from src.experiments import DEFAULT_SEARCH_BUDGET, FULL_GROUPS, LOWER_BOUND_SWEEP
from src.lattice import (
    SET_FUNCTIONS,
    OutcomeLattice,
    ProductLattice,
    SetFunctionValuation,
    TableValuation,
    Valuation,
    XOSValuation,
)
from src.learning import LEARNER_KINDS, LearnerSpec
from src.mechanisms import LOWEST_INDEX, ComposedScenario, FirstPriceAuction, Mechanism, TableMechanism
from src.sinr import ChannelAccessMechanism, SinrInstance
from src.smoothness import E_GAP, OWN_DRAWS, SmoothnessParams

CONFIG_VERSION = 1
EXPERIMENTS = ("simulate", "verify-smoothness", "correlation-gap", "lower-bound", "sinr", "lemma-check")

ExperimentKind = Literal["simulate", "verify-smoothness", "correlation-gap", "lower-bound", "sinr", "lemma-check"]
Mode = Literal["auto", "exact", "mc"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LatticeConfig(_Section):
    """A chain by default; `covers` switches to an explicit covering relation."""

    elements: List[str] = Field(default_factory=lambda: ["lose", "win"])
    covers: Optional[List[List[str]]] = None

    def build(self) -> OutcomeLattice:
        if self.covers is None:
            return OutcomeLattice.chain(self.elements)
        return OutcomeLattice.from_covering(self.elements, [tuple(c) for c in self.covers])


class TableEntryConfig(_Section):
    bids: List[float]
    outcomes: List[int]
    payments: List[float]


class MechanismConfig(_Section):
    kind: Literal["first_price", "custom_table", "channel_access"]
    grid: Optional[List[float]] = None
    grids: Optional[List[List[float]]] = None
    tie_rule: Literal["lowest_index", "random"] = LOWEST_INDEX
    lattices: Optional[List[LatticeConfig]] = None
    entries: Optional[List[TableEntryConfig]] = None
    deviation_bids: Optional[List[float]] = None

    @model_validator(mode="after")
    def _required_fields(self):
        if self.kind == "first_price" and self.grid is None and self.grids is None:
            raise ValueError("first_price needs a bid grid")
        if self.kind == "custom_table" and (self.grids is None or self.entries is None):
            raise ValueError("custom_table needs grids and entries")
        return self

    def bid_grids(self, n: int) -> List[List[float]]:
        if self.grids is not None:
            return self.grids
        return [self.grid] * n


class ValuationConfig(_Section):
    """
    xos: family[k][j] lists clause k's values over factor j.
    table: value per outcome vector.
    set_function: one of the named set functions on 2-element factors.
    """

    kind: Literal["xos", "table", "set_function"]
    family: Optional[List[List[List[float]]]] = None
    table: Optional[List[Dict]] = None
    function: Optional[str] = None
    weights: Optional[List[float]] = None
    cap: Optional[float] = None
    covers: Optional[List[List[int]]] = None

    @model_validator(mode="after")
    def _required_fields(self):
        if self.kind == "xos" and not self.family:
            raise ValueError("xos valuation needs a family")
        if self.kind == "table" and self.table is None:
            raise ValueError("table valuation needs a table")
        if self.kind == "set_function":
            if self.function not in SET_FUNCTIONS:
                raise ValueError(f"unknown set function {self.function!r}; known: {sorted(SET_FUNCTIONS)}")
        return self

    def build(self, lattice: ProductLattice) -> Valuation:
        if self.kind == "xos":
            return XOSValuation(lattice, self.family)
        if self.kind == "table":
            return TableValuation(lattice, {tuple(row["outcome"]): float(row["value"]) for row in self.table})
        cls = SET_FUNCTIONS[self.function]
        if self.function == "coverage":
            fn = cls(self.covers or [], self.weights)
        elif self.function == "budget_additive":
            fn = cls(self.weights or [], self.cap if self.cap is not None else float("inf"))
        else:
            fn = cls(self.weights or [])
        return SetFunctionValuation(lattice, fn)


class AvailabilityConfig(_Section):
    """probs may be a scalar (broadcast), a per-mechanism vector or an n x m table."""

    kind: Literal["independent", "everybody_or_nobody", "fixed", "always"] = "always"
    probs: Optional[Union[float, List[float], List[List[float]]]] = None

    def build(self, n: int, m: int) -> AvailabilityModel:
        if self.kind == "always":
            return AvailabilityModel.always(n, m)
        if self.probs is None:
            raise ConfigurationError(f"{self.kind} availability needs probs")
        probs = np.asarray(self.probs, dtype=float)
        if self.kind == EVERYBODY_OR_NOBODY:
            return AvailabilityModel.everybody_or_nobody(n, np.full((m,), probs))
        if probs.ndim < 2:
            probs = np.full((n, m), probs)
        if self.kind == FIXED:
            return AvailabilityModel.fixed(probs)
        return AvailabilityModel.independent(probs)


class SinrConfig(_Section):
    links: Optional[List[List[float]]] = None
    random_links: Optional[int] = None
    instances: int = 1
    side: float = 100.0
    min_length: float = 1.0
    max_length: float = 10.0
    power: float = 1.0
    alpha_pl: float = 3.0
    beta: float = 1.0
    nu: float = 0.0

    @model_validator(mode="after")
    def _geometry(self):
        if self.links is None and self.random_links is None:
            raise ValueError("sinr needs links or random_links")
        if self.instances < 1:
            raise ValueError("instances must be positive")
        return self

    def constants(self) -> Dict[str, float]:
        return {"power": self.power, "alpha_pl": self.alpha_pl, "beta": self.beta, "nu": self.nu}

    def build(self) -> Optional[SinrInstance]:
        if self.links is None:
            return None
        return SinrInstance(np.asarray(self.links, dtype=float), **self.constants())


class ScenarioSection(_Section):
    bidders: int = Field(ge=1)
    mechanisms: List[MechanismConfig] = Field(min_length=1)
    valuations: List[ValuationConfig]
    availability: AvailabilityConfig = Field(default_factory=AvailabilityConfig)

    @model_validator(mode="after")
    def _counts(self):
        if len(self.valuations) != self.bidders:
            raise ValueError(f"{self.bidders} bidders but {len(self.valuations)} valuations")
        for j, mech in enumerate(self.mechanisms):
            if mech.grids is not None and len(mech.grids) != self.bidders:
                raise ValueError(f"mechanisms[{j}] lists {len(mech.grids)} grids for {self.bidders} bidders")
        return self


class LearnerConfig(_Section):
    kind: str = "full_joint"
    step: Optional[float] = None
    non_oblivious: List[int] = Field(default_factory=list)
    cube_budget: int = 4 * 10**6

    @field_validator("kind")
    @classmethod
    def _known_kind(cls, value):
        if value not in LEARNER_KINDS:
            raise ValueError(f"unknown learner kind {value!r}; known: {list(LEARNER_KINDS)}")
        return value

    def build(self) -> LearnerSpec:
        return LearnerSpec(kind=self.kind, step=self.step, non_oblivious=tuple(self.non_oblivious),
                           cube_budget=self.cube_budget)


class ParamsConfig(_Section):
    lam: float = 0.5
    mu1: float = 1.0
    mu2: float = 0.0

    def build(self) -> SmoothnessParams:
        return SmoothnessParams(lam=self.lam, mu1=self.mu1, mu2=self.mu2)


class SimulateConfig(_Section):
    T: int = Field(default=1000, ge=1)
    replicates: int = Field(default=1, ge=1)
    workers: Optional[int] = None
    gamma: float = E_GAP
    cce_epsilon: Optional[float] = None
    trace_csv: bool = True


class VerifyConfig(_Section):
    mechanism: int = 0
    value_set: List[float] = Field(default_factory=lambda: [0.0, 2.0])


class CorrelationGapConfig(_Section):
    valuation: int = 0
    xs: List[List[int]]
    alphas: List[float]


class LowerBoundConfig(_Section):
    ks: List[int] = Field(default_factory=lambda: list(LOWER_BOUND_SWEEP))
    search: Literal["full_groups", "structured", "unrestricted"] = FULL_GROUPS
    search_budget: int = Field(default=DEFAULT_SEARCH_BUDGET, ge=1)


class LemmaConfig(_Section):
    w_source: Literal["own", "other"] = OWN_DRAWS


class OutputConfig(_Section):
    out_dir: Optional[str] = None
    db_path: Optional[str] = None
    report_name: Optional[str] = None


class ScenarioConfig(_Section):
    version: int
    experiment: ExperimentKind
    seed: int
    mode: Mode = "auto"
    samples: int = Field(default=100_000, ge=1)
    budget: int = Field(default=10**7, ge=1)
    scenario: Optional[ScenarioSection] = None
    learner: LearnerConfig = Field(default_factory=LearnerConfig)
    params: ParamsConfig = Field(default_factory=ParamsConfig)
    simulate: SimulateConfig = Field(default_factory=SimulateConfig)
    verify: VerifyConfig = Field(default_factory=VerifyConfig)
    correlation_gap: Optional[CorrelationGapConfig] = None
    lower_bound: LowerBoundConfig = Field(default_factory=LowerBoundConfig)
    lemma: LemmaConfig = Field(default_factory=LemmaConfig)
    sinr: Optional[SinrConfig] = None
    output: OutputConfig = Field(default_factory=OutputConfig)

    @field_validator("version")
    @classmethod
    def _supported_version(cls, value):
        if value != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {value}; expected {CONFIG_VERSION}")
        return value

    @model_validator(mode="after")
    def _references(self):
        needs_scenario = self.experiment in ("simulate", "verify-smoothness", "correlation-gap", "lemma-check")
        if needs_scenario and self.scenario is None:
            raise ValueError(f"{self.experiment} needs a scenario section")
        if self.experiment == "correlation-gap" and self.correlation_gap is None:
            raise ValueError("correlation-gap needs a correlation_gap section")
        if self.experiment == "sinr" and self.sinr is None:
            raise ValueError("sinr needs an sinr section")
        if self.scenario is not None:
            uses_channel = any(mech.kind == "channel_access" for mech in self.scenario.mechanisms)
            if uses_channel and (self.sinr is None or self.sinr.links is None):
                raise ValueError("channel_access mechanisms need sinr.links")
            if uses_channel and len(self.sinr.links) != self.scenario.bidders:
                raise ValueError("channel_access needs one link per bidder")
            if not 0 <= self.verify.mechanism < len(self.scenario.mechanisms):
                raise ValueError(f"verify.mechanism {self.verify.mechanism} does not name a mechanism")
            if self.correlation_gap is not None and not 0 <= self.correlation_gap.valuation < self.scenario.bidders:
                raise ValueError(f"correlation_gap.valuation {self.correlation_gap.valuation} does not name a bidder")
            if any(not 0 <= i < self.scenario.bidders for i in self.learner.non_oblivious):
                raise ValueError("learner.non_oblivious names an unknown bidder")
        if self.experiment == "lemma-check" and self.scenario.availability.kind != EVERYBODY_OR_NOBODY:
            raise ValueError("lemma-check needs everybody_or_nobody availability")
        if self.experiment == "lemma-check" and any(m.tie_rule == "random" for m in self.scenario.mechanisms):
            raise ValueError("lemma-check needs deterministic mechanisms, tie_rule random is not supported")
        return self

    # --- environment fallbacks ---

    def out_dir(self) -> Path:
        return Path(self.output.out_dir or os.getenv("SMOOTHLAB_OUT_DIR", "data/output"))

    def db_path(self) -> str:
        return self.output.db_path or os.getenv("SMOOTHLAB_DB_PATH", "data/smoothlab.db")

    def workers(self) -> int:
        return int(self.simulate.workers or os.getenv("SMOOTHLAB_WORKERS", "1"))

    def replicate_seeds(self) -> List[int]:
        return [self.seed + r for r in range(self.simulate.replicates)]

    def echo(self) -> Dict:
        """The config as written into reports; environment-dependent output paths are left out."""
        return self.model_dump(mode="json", exclude={"output"})


def _format_validation_error(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        where = ".".join(str(p) for p in item["loc"]) or "<root>"
        parts.append(f"{where}: {item['msg']}")
    return "; ".join(parts)


def parse_config_data(data: Dict, source: str = "<config>") -> ScenarioConfig:
    if not isinstance(data, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigurationError(f"{source}: {_format_validation_error(e)}") from None


def parse_config(path: str) -> ScenarioConfig:
    """Load and validate a YAML experiment config."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} not found")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        where = f" line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigurationError(f"{path}:{where} {e}") from None
    return parse_config_data(data, str(path))


def build_mechanism(spec: MechanismConfig, n: int, instance: Optional[SinrInstance] = None) -> Mechanism:
    if spec.kind == "first_price":
        return FirstPriceAuction(spec.bid_grids(n), tie_rule=spec.tie_rule)
    if spec.kind == "channel_access":
        return ChannelAccessMechanism(instance)
    lattices = [lat.build() for lat in spec.lattices] if spec.lattices else [OutcomeLattice.boolean() for _ in range(n)]
    entries = {tuple(e.bids): (e.outcomes, e.payments) for e in spec.entries}
    return TableMechanism(spec.grids, lattices, entries, spec.deviation_bids)


def build_scenario(config: ScenarioConfig) -> ComposedScenario:
    section = config.scenario
    if section is None:
        raise ConfigurationError(f"{config.experiment} config has no scenario")
    instance = config.sinr.build() if config.sinr is not None else None
    n = section.bidders
    mechanisms = [build_mechanism(spec, n, instance) for spec in section.mechanisms]
    valuations = []
    for i, spec in enumerate(section.valuations):
        lattice = ProductLattice(tuple(mech.factors[i] for mech in mechanisms))
        valuations.append(spec.build(lattice))
    availability = section.availability.build(n, len(mechanisms))
    return ComposedScenario(mechanisms, valuations, availability, optimum_budget=config.budget)


def apply_overrides(config: ScenarioConfig, **overrides) -> ScenarioConfig:
    """Command-line overrides; None leaves the config value in place."""
    update = {}
    for key in ("experiment", "seed", "budget", "mode", "samples"):
        if overrides.get(key) is not None:
            update[key] = overrides[key]
    if overrides.get("out_dir") is not None:
        update["output"] = config.output.model_copy(update={"out_dir": overrides["out_dir"]})
    if not update:
        return config
    return parse_config_data({**config.model_dump(mode="json"), **{
        k: (v.model_dump(mode="json") if isinstance(v, BaseModel) else v) for k, v in update.items()
    }})

