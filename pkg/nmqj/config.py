"""Experiment configuration documents.

A document is YAML. Nested mappings are flattened to dotted keys, so

    reservoir:
      eta: 8

and `reservoir.eta: 8` mean the same thing. Every key has a default, so an empty
document is a complete model I experiment.
"""

import math
from collections.abc import Callable
from collections.abc import Mapping
from dataclasses import dataclass
from dataclasses import field
from enum import StrEnum
from enum import auto
from functools import cached_property
from pathlib import Path
from typing import Any
from typing import cast

import yaml

from nmqj.models import InitialKind
from nmqj.models import InitialStateSpec
from nmqj.models import ModelLabel
from nmqj.models import ModelSpec
from nmqj.models import build_model_i
from nmqj.models import build_model_ii
from nmqj.models import initial_state
from nmqj.qcore import Scheme
from nmqj.qcore import StateVector
from nmqj.reservoir import DEFAULT_SCAN_HORIZON
from nmqj.reservoir import CouplingKind
from nmqj.reservoir import CouplingProfile
from nmqj.reservoir import LorentzianParams
from nmqj.reservoir import ReservoirError
from nmqj.reservoir import SignRegions
from nmqj.reservoir import find_sign_regions

SYMBOLIC_TIMES = ("t_P", "t_N")


class ConfigError(ValueError):
    pass


class ConfigParseError(ConfigError):
    pass


class ConfigValidationError(ConfigError):
    def __init__(self, violations: list[str]):
        self.violations: list[str] = violations
        super().__init__("Invalid configuration: " + "; ".join(violations))


class EngineKind(StrEnum):
    LEDGER = auto()
    MC = auto()
    EXACT = auto()


class Sampling(StrEnum):
    LEFT = auto()
    MIDPOINT = auto()


class ClassScope(StrEnum):
    CLASS = auto()
    GLOBAL = auto()


def _number(value: Any) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float, str)):
        raise TypeError(f"expected a number, got {value!r}")

    return float(value)


def _integer(value: Any) -> int:
    number = _number(value)
    if not number.is_integer():
        raise TypeError(f"expected an integer, got {value!r}")

    return int(number)


def _optional(convert: Callable[[Any], Any]) -> Callable[[Any], Any]:
    return lambda value: None if value is None else convert(value)


def _t_end(value: Any) -> float | str:
    if isinstance(value, str) and value in SYMBOLIC_TIMES:
        return value

    return _number(value)


def _boolean(value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError(f"expected true or false, got {value!r}")

    return value


# Dotted key -> converter for the raw YAML value
CONVERTERS: dict[str, Callable[[Any], Any]] = {
    "model": ModelLabel,
    "engine": EngineKind,
    "model_i.omega": _number,
    "model_ii.coupling": CouplingKind,
    "model_ii.lambda0": _number,
    "model_ii.beta": _number,
    "model_ii.t_switch": _optional(_number),
    "reservoir.eta": _number,
    "reservoir.q0": _number,
    "reservoir.omega": _number,
    "initial.kind": _optional(InitialKind),
    "initial.theta": _number,
    "initial.phi": _number,
    "initial.xi": _number,
    "time.dt": _number,
    "time.t_end": _t_end,
    "time.output_stride": _integer,
    "time.scheme": Scheme,
    "time.sampling": Sampling,
    "ledger.truncation": _integer,
    "ledger.overflow_threshold": _number,
    "ledger.class_scope": ClassScope,
    "memory.tau": _optional(_number),
    "mc.n_r": _integer,
    "mc.seed": _integer,
    "output.path": _optional(Path),
    "output.sidecar": _boolean,
}


@dataclass(frozen=True)
class SimConfig:
    model: ModelLabel = ModelLabel.MODEL_I
    engine: EngineKind = EngineKind.LEDGER
    omega: float = 0.5
    coupling: CouplingProfile = field(default_factory=CouplingProfile)
    reservoir: LorentzianParams = field(default_factory=LorentzianParams)
    initial: InitialStateSpec = field(default_factory=InitialStateSpec)
    dt: float = 1e-3
    t_end: float | str = "t_N"
    output_stride: int = 1
    scheme: Scheme = Scheme.EULER1
    sampling: Sampling = Sampling.LEFT
    truncation: int = 2
    overflow_threshold: float = 0.05
    class_scope: ClassScope = ClassScope.CLASS
    memory_tau: float | None = None
    n_r: int = 10000
    seed: int = 0
    output_path: Path | None = None
    sidecar: bool = True

    @classmethod
    def from_flat(cls, flat: Mapping[str, Any]) -> "SimConfig":
        """Builds a validated config from dotted keys with already converted values."""
        get = flat.get
        model = cast(ModelLabel, get("model", ModelLabel.MODEL_I))
        default_kind = InitialKind.BLOCH if model == ModelLabel.MODEL_I else InitialKind.XI

        violations: list[str] = []
        try:
            reservoir = LorentzianParams(
                eta=get("reservoir.eta", 10.0),
                q0=get("reservoir.q0", 6.0),
                omega=get("reservoir.omega", 0.0),
            )
        except ReservoirError as e:
            violations.append(f"reservoir: {e}")
            reservoir = LorentzianParams()
        try:
            profile = CouplingProfile(
                kind=get("model_ii.coupling", CouplingKind.CONSTANT),
                lambda0=get("model_ii.lambda0", 0.5),
                beta=get("model_ii.beta", 100.0),
                t_switch=get("model_ii.t_switch"),
            )
        except ReservoirError as e:
            violations.append(f"model_ii: {e}")
            profile = CouplingProfile()

        config = cls(
            model=model,
            engine=get("engine", EngineKind.LEDGER),
            omega=get("model_i.omega", 0.5),
            coupling=profile,
            reservoir=reservoir,
            initial=InitialStateSpec(
                kind=get("initial.kind") or default_kind,
                theta=get("initial.theta", 0.0),
                phi=get("initial.phi", 0.0),
                xi=get("initial.xi", 0.0),
            ),
            dt=get("time.dt", 1e-3),
            t_end=get("time.t_end", "t_N"),
            output_stride=get("time.output_stride", 1),
            scheme=get("time.scheme", Scheme.EULER1),
            sampling=get("time.sampling", Sampling.LEFT),
            truncation=get("ledger.truncation", 2),
            overflow_threshold=get("ledger.overflow_threshold", 0.05),
            class_scope=get("ledger.class_scope", ClassScope.CLASS),
            memory_tau=get("memory.tau"),
            n_r=get("mc.n_r", 10000),
            seed=get("mc.seed", 0),
            output_path=get("output.path"),
            sidecar=get("output.sidecar", True),
        )
        violations += config.violations()
        if violations:
            raise ConfigValidationError(violations)

        return config

    def violations(self) -> list[str]:
        found: list[str] = []
        if not self.dt > 0:
            found.append(f"time.dt must be positive, got {self.dt}")
        if not isinstance(self.t_end, str) and not self.t_end > 0:
            found.append(f"time.t_end must be positive, got {self.t_end}")
        if self.output_stride < 1:
            found.append("time.output_stride must be at least 1")
        if self.engine == EngineKind.LEDGER and self.truncation < 1:
            found.append("ledger.truncation must be at least 1")
        if not 0 < self.overflow_threshold <= 1:
            found.append("ledger.overflow_threshold must lie in (0, 1]")
        if self.engine == EngineKind.MC and self.n_r < 1:
            found.append("mc.n_r must be at least 1")
        if self.memory_tau is not None and not self.memory_tau > 0:
            found.append("memory.tau must be positive when set")

        if self.model == ModelLabel.MODEL_I and self.initial.kind != InitialKind.BLOCH:
            found.append("model_i takes a bloch initial state")
        if self.model == ModelLabel.MODEL_II:
            if self.initial.kind != InitialKind.XI:
                found.append("model_ii takes a xi initial state")
            if not 0 <= self.initial.xi <= math.pi / 2 + 1e-12:
                found.append("initial.xi must lie in [0, pi/2]")

        return found

    @cached_property
    def sign_regions(self) -> SignRegions:
        horizon = DEFAULT_SCAN_HORIZON
        if not isinstance(self.t_end, str):
            horizon = max(horizon, float(self.t_end))
        return find_sign_regions(self.reservoir, horizon, self.dt)

    def resolved_t_end(self) -> float:
        if not isinstance(self.t_end, str):
            return float(self.t_end)

        boundary = (
            self.sign_regions.t_p if self.t_end == "t_P" else self.sign_regions.t_n
        )
        if boundary is None:
            raise ConfigValidationError(
                [f"time.t_end={self.t_end} but the decay rate has no such zero crossing"]
            )

        return boundary

    def model_spec(self) -> ModelSpec:
        if self.model == ModelLabel.MODEL_I:
            return build_model_i(self.omega, self.reservoir)

        return build_model_ii(self.coupling, self.reservoir)

    def initial_state(self, spec: ModelSpec | None = None) -> StateVector:
        return initial_state(spec or self.model_spec(), self.initial)

    def to_flat(self) -> dict[str, Any]:
        """Dotted-key view with plain YAML/JSON values."""
        return {
            "model": str(self.model),
            "engine": str(self.engine),
            "model_i.omega": self.omega,
            "model_ii.coupling": str(self.coupling.kind),
            "model_ii.lambda0": self.coupling.lambda0,
            "model_ii.beta": self.coupling.beta,
            "model_ii.t_switch": self.coupling.t_switch,
            "reservoir.eta": self.reservoir.eta,
            "reservoir.q0": self.reservoir.q0,
            "reservoir.omega": self.reservoir.omega,
            "initial.kind": str(self.initial.kind),
            "initial.theta": self.initial.theta,
            "initial.phi": self.initial.phi,
            "initial.xi": self.initial.xi,
            "time.dt": self.dt,
            "time.t_end": self.t_end,
            "time.output_stride": self.output_stride,
            "time.scheme": str(self.scheme),
            "time.sampling": str(self.sampling),
            "ledger.truncation": self.truncation,
            "ledger.overflow_threshold": self.overflow_threshold,
            "ledger.class_scope": str(self.class_scope),
            "memory.tau": self.memory_tau,
            "mc.n_r": self.n_r,
            "mc.seed": self.seed,
            "output.path": str(self.output_path) if self.output_path else None,
            "output.sidecar": self.sidecar,
        }

    def with_overrides(self, overrides: Mapping[str, Any]) -> "SimConfig":
        return config_from_mapping({**self.to_flat(), **overrides})


def flatten(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in data.items():
        path = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten(cast(Mapping[str, Any], value), f"{path}."))
        else:
            flat[path] = value

    return flat


def convert(flat: Mapping[str, Any]) -> dict[str, Any]:
    converted: dict[str, Any] = {}
    for key, value in flat.items():
        if key not in CONVERTERS:
            raise ConfigParseError(f"{key}: unknown configuration key")
        try:
            converted[key] = CONVERTERS[key](value)
        except (TypeError, ValueError) as e:
            raise ConfigParseError(f"{key}: {e}") from e

    return converted


def config_from_mapping(data: Mapping[str, Any]) -> SimConfig:
    return SimConfig.from_flat(convert(flatten(data)))


def read_document(text: str) -> dict[str, Any]:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"<document>: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigParseError("<document>: expected a mapping of keys to values")

    return flatten(cast(dict[str, Any], data))


def parse_config(text: str, overrides: Mapping[str, Any] | None = None) -> SimConfig:
    """Parses a YAML document, applies dotted-key overrides and validates."""
    return config_from_mapping({**read_document(text), **(overrides or {})})


def load_config(path: Path, overrides: Mapping[str, Any] | None = None) -> SimConfig:
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")

    return parse_config(path.read_text(), overrides)


def parse_override(assignment: str) -> tuple[str, Any]:
    """Splits `key=value` and reads the value as YAML."""
    key, sep, raw = assignment.partition("=")
    if not sep or not key:
        raise ConfigParseError(f"{assignment}: expected key=value")

    try:
        return key.strip(), yaml.safe_load(raw)
    except yaml.YAMLError as e:
        raise ConfigParseError(f"{key}: {e}") from e
