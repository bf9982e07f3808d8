"""Scenario files: TOML with sections model, sterile, policy, simulation, output."""
from __future__ import annotations

import dataclasses
import re
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from .critical import GainCase
from .dynamics import IntegratorConfig
from .model import AEDES_STERILE, AEDES_PARAMS, ModelParams, ParameterError, SterileParams
from .policies import PolicyError, PolicyKind, ReleasePolicy

PRESET_NAME = "paper-2019-table1"


class ConfigError(ValueError):
    """Bad scenario: unknown key, wrong type or invalid value.

    ``where`` names the offending ``section.key`` and ``line`` its line in the
    source text when known.
    """

    def __init__(self, message: str, where: Optional[str] = None, line: Optional[int] = None):
        loc = ""
        if where:
            loc = f"[{where}]" + (f" (line {line})" if line else "") + ": "
        super().__init__(loc + message)
        self.where = where
        self.line = line


@dataclass(frozen=True)
class ModelSection:
    r: float
    rho: float
    mu_M: float
    mu_F: float
    beta: Optional[float] = None
    sigma: Optional[float] = None
    K: Optional[float] = None

    def build(self) -> ModelParams:
        return ModelParams(**dataclasses.asdict(self))


@dataclass(frozen=True)
class SterileSection:
    mu_S: float
    gamma: float = 1.0

    def build(self) -> SterileParams:
        return SterileParams(self.mu_S, self.gamma)


@dataclass(frozen=True)
class PolicySection:
    """Gain as ``k`` or as ``k_nF`` (``k`` times the female offspring number)."""

    kind: str = "open-loop"
    k: Optional[float] = None
    k_nF: Optional[float] = None
    p: int = 1
    case: str = "case1"
    lambda_bar: Optional[float] = None
    lambda_const: Optional[float] = None

    def build(self, params: ModelParams) -> ReleasePolicy:
        if self.k is not None and self.k_nF is not None:
            raise PolicyError("give k or k_nF, not both")
        k = self.k if self.k_nF is None else self.k_nF / params.n_F
        return ReleasePolicy(PolicyKind(self.kind), k=k, p=self.p, lambda_bar=self.lambda_bar,
                             lambda_const=self.lambda_const, case=GainCase(self.case))


@dataclass(frozen=True)
class SimulationSection:
    tau: float = 7.0
    horizon: Optional[float] = None
    threshold: float = 0.1
    release_rate: float = 0.0
    taus: tuple = (7.0, 14.0)
    method: str = "rk4"
    max_step: Optional[float] = None
    rel_tol: float = 1e-9
    abs_tol: float = 1e-9
    clamp_negative: bool = True

    def integrator(self) -> IntegratorConfig:
        return IntegratorConfig(self.method, self.max_step, self.rel_tol, self.abs_tol, self.clamp_negative)


@dataclass(frozen=True)
class OutputSection:
    dir: str = "out"
    format: str = "csv"
    trajectory: str = "trajectory"
    metrics: str = "metrics.json"
    table: str = "tables"


@dataclass(frozen=True)
class Scenario:
    model: ModelSection
    sterile: SterileSection
    policy: PolicySection = field(default_factory=PolicySection)
    simulation: SimulationSection = field(default_factory=SimulationSection)
    output: OutputSection = field(default_factory=OutputSection)

    def params(self) -> ModelParams:
        return self.model.build()

    def sterile_params(self) -> SterileParams:
        return self.sterile.build()

    def release_policy(self) -> ReleasePolicy:
        return self.policy.build(self.params())


SECTIONS = {
    "model": ModelSection,
    "sterile": SterileSection,
    "policy": PolicySection,
    "simulation": SimulationSection,
    "output": OutputSection,
}
REQUIRED = ("model", "sterile")


def preset(name: str = PRESET_NAME) -> Scenario:
    if name != PRESET_NAME:
        raise ConfigError(f"unknown preset {name!r}; available: {PRESET_NAME}")
    return Scenario(ModelSection(**AEDES_PARAMS), SterileSection(**AEDES_STERILE))


def _find_line(text: Optional[str], section: str, key: Optional[str] = None) -> Optional[int]:
    if not text:
        return None
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        head = re.match(r"^\[\s*([A-Za-z0-9_-]+)\s*\]", line)
        if head:
            current = head.group(1)
            if key is None and current == section:
                return i
            continue
        if key is not None and current == section and re.match(rf"^{re.escape(key)}\s*=", line):
            return i
    return None


def _coerce(section: str, key: str, value, ftype, text):
    where, line = f"{section}.{key}", _find_line(text, section, key)
    t = str(ftype)
    if isinstance(value, bool):
        if "bool" in t:
            return value
        raise ConfigError(f"expected a number or string, got boolean {value}", where, line)
    if "tuple" in t:
        if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            raise ConfigError("expected a list of numbers", where, line)
        return tuple(float(v) for v in value)
    if "float" in t and isinstance(value, (int, float)):
        return float(value)
    if "int" in t and isinstance(value, int):
        return value
    if "str" in t and isinstance(value, str):
        return value
    if "bool" in t:
        raise ConfigError(f"expected true/false, got {value!r}", where, line)
    raise ConfigError(f"wrong type {type(value).__name__} for value {value!r}", where, line)


def scenario_from_dict(data: dict, text: Optional[str] = None) -> Scenario:
    """Build and validate a scenario.  ``text`` only serves line diagnostics."""
    unknown = set(data) - set(SECTIONS)
    if unknown:
        name = sorted(unknown)[0]
        raise ConfigError(f"unknown section (allowed: {', '.join(SECTIONS)})", name, _find_line(text, name))
    for name in REQUIRED:
        if name not in data:
            raise ConfigError("missing required section", name)
    built = {}
    for name, cls in SECTIONS.items():
        raw = data.get(name, {})
        if not isinstance(raw, dict):
            raise ConfigError("must be a table", name)
        fields = {f.name: f for f in dataclasses.fields(cls)}
        for key in raw:
            if key not in fields:
                raise ConfigError(f"unknown key (allowed: {', '.join(fields)})", f"{name}.{key}", _find_line(text, name, key))
        kwargs = {key: _coerce(name, key, val, fields[key].type, text) for key, val in raw.items()}
        try:
            built[name] = cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc), name, _find_line(text, name)) from None
    scen = Scenario(**built)
    validate(scen, text)
    return scen


def validate(scen: Scenario, text: Optional[str] = None) -> None:
    """Push every physical value through the model invariants."""
    try:
        params = scen.params()
    except ParameterError as exc:
        raise ConfigError(str(exc), f"model.{exc.field}", _find_line(text, "model", exc.field)) from None
    try:
        sterile = scen.sterile_params()
        sterile.check_against(params)
    except ParameterError as exc:
        raise ConfigError(str(exc), f"sterile.{exc.field}", _find_line(text, "sterile", exc.field)) from None
    try:
        scen.release_policy().validate(params)
    except (PolicyError, ValueError) as exc:
        raise ConfigError(str(exc), "policy", _find_line(text, "policy")) from None
    sim = scen.simulation
    if not sim.tau > 0:
        raise ConfigError("must be > 0", "simulation.tau", _find_line(text, "simulation", "tau"))
    if not sim.threshold > 0:
        raise ConfigError("must be > 0", "simulation.threshold", _find_line(text, "simulation", "threshold"))
    if sim.release_rate < 0:
        raise ConfigError("must be >= 0", "simulation.release_rate", _find_line(text, "simulation", "release_rate"))
    try:
        sim.integrator()
    except ValueError as exc:
        raise ConfigError(str(exc), "simulation", _find_line(text, "simulation")) from None
    if scen.output.format not in ("csv", "json"):
        raise ConfigError("format must be 'csv' or 'json'", "output.format", _find_line(text, "output", "format"))


def loads(text: str) -> Scenario:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from None
    return scenario_from_dict(data, text)


def load(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path}: {exc.strerror}") from None
    return loads(text)


def to_dict(scen: Scenario) -> dict:
    out = {}
    for name in SECTIONS:
        sec = dataclasses.asdict(getattr(scen, name))
        out[name] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in sec.items() if v is not None}
    return out


def dumps(scen: Scenario) -> str:
    return tomli_w.dumps(to_dict(scen))


def dump(scen: Scenario, path) -> None:
    Path(path).write_text(dumps(scen))


def with_overrides(scen: Scenario, assignments) -> Scenario:
    """Apply ``section.key=value`` strings; values are parsed as TOML when possible."""
    data = to_dict(scen)
    for item in assignments:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} must look like section.key=value")
        lhs, rhs = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        try:
            value = tomllib.loads(f"v = {rhs.strip()}")["v"]
        except tomllib.TOMLDecodeError:
            value = rhs.strip()
        data.setdefault(section, {})[key] = value
        # k and k_nF are alternatives; setting one clears the other
        if section == "policy" and key in ("k", "k_nF"):
            data["policy"].pop("k_nF" if key == "k" else "k", None)
    return scenario_from_dict(data)
