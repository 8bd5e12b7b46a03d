"""
Run configuration: one TOML document holding every tunable.

Top-level keys ``schema_version`` and ``seed``; tables ``[scenario]``,
``[kernels]``, ``[weights]``, ``[contact]``, ``[initialization]``,
``[metrics]``, ``[[stages]]`` and ``[skeleton]``. Unknown keys are rejected.
"""

import dataclasses
import re
import sys
from typing import Any, Dict, List, Optional, Sequence, Tuple

import tomli_w

from ..core.body import DEFAULT_CONTACT_GROUPS, DEFAULT_SKELETON, SkeletonDef
from ..core.kernel import RobustKernel
from ..core.scale_mode import ScaleMode
from ..energy.terms import KernelSet, Weights
from ..metrics.metrics import PARTIAL_FRACTION
from ..optimizer.schedule import FitSettings, StageConfig, StageSchedule
from ..synth.scenario import InvalidConfig, ScenarioConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SCHEMA_VERSION = 1

# tomllib reports positions as "(at line L, column C)"
POSITION = re.compile(r"at line (\d+), column (\d+)")


class ConfigError(ValueError):
    """Invalid configuration; carries the offending key and its position when known."""

    def __init__(self, message, key: Optional[str] = None, line: Optional[int] = None, column: Optional[int] = None):
        location = f"line {line}" + (f", column {column}" if column else "") + ": " if line else ""
        super().__init__(location + message)
        self.key = key
        self.line = line
        self.column = column


@dataclasses.dataclass(frozen=True)
class KernelsConfig:
    joint: float = 100.0
    contact: float = 0.2
    temporal: float = 0.1

    def build(self) -> KernelSet:
        return KernelSet(RobustKernel(self.joint), RobustKernel(self.contact), RobustKernel(self.temporal))


@dataclasses.dataclass(frozen=True)
class WeightsConfig:
    lambda_beta: float = 0.01
    lambda_theta: float = 0.1
    lambda_camera: float = 100.0
    twist_weight: float = 4.0

    def build(self) -> Weights:
        return Weights(lambda_beta=self.lambda_beta, lambda_theta=self.lambda_theta, lambda_camera=self.lambda_camera)


@dataclasses.dataclass(frozen=True)
class ContactConfig:
    groups: Tuple[str, ...] = DEFAULT_CONTACT_GROUPS
    scale_mode: str = ScaleMode.camera

    def __post_init__(self):
        object.__setattr__(self, "groups", tuple(self.groups))
        if self.scale_mode not in ScaleMode.values():
            raise ValueError(f"scale_mode must be one of {ScaleMode.values()}, got {self.scale_mode!r}")


@dataclasses.dataclass(frozen=True)
class InitializationConfig:
    yaw_candidates: int = 12
    default_depth: float = 3.0


@dataclasses.dataclass(frozen=True)
class MetricsConfig:
    partial_fraction: float = PARTIAL_FRACTION
    uniform_stride: int = 1

    def __post_init__(self):
        if not 0.0 < self.partial_fraction <= 1.0:
            raise ValueError(f"partial_fraction must lie in (0, 1], got {self.partial_fraction}")
        if self.uniform_stride < 1:
            raise ValueError("uniform_stride must be at least 1")


SECTIONS = {
    "kernels": KernelsConfig,
    "weights": WeightsConfig,
    "contact": ContactConfig,
    "initialization": InitializationConfig,
    "metrics": MetricsConfig,
}


@dataclasses.dataclass(frozen=True, eq=False)
class RunConfig:
    """
    Every tunable of a run.

    Attributes
    ----------
    seed : int
        seed of the scenario generator
    scenario : ScenarioConfig
        synthetic scenario (its seed is the run seed)
    kernels : KernelsConfig
        robust kernel constants
    weights : WeightsConfig
        prior weights
    contact : ContactConfig
        contact groups and scale placement
    initialization : InitializationConfig
        initial guess settings
    metrics : MetricsConfig
        evaluation settings
    stages : Tuple[StageConfig, ...]
        stage schedule
    skeleton : SkeletonDef
        kinematic tree
    schema_version : int
        version of this layout
    """

    seed: int = 0
    scenario: ScenarioConfig = ScenarioConfig()
    kernels: KernelsConfig = KernelsConfig()
    weights: WeightsConfig = WeightsConfig()
    contact: ContactConfig = ContactConfig()
    initialization: InitializationConfig = InitializationConfig()
    metrics: MetricsConfig = MetricsConfig()
    stages: Tuple[StageConfig, ...] = StageSchedule.default().stages
    skeleton: SkeletonDef = DEFAULT_SKELETON
    schema_version: int = SCHEMA_VERSION

    def __eq__(self, other) -> bool:
        return isinstance(other, RunConfig) and self.to_dict() == other.to_dict()

    @property
    def schedule(self) -> StageSchedule:
        return StageSchedule(self.stages)

    def scenario_config(self) -> ScenarioConfig:
        return dataclasses.replace(self.scenario, seed=self.seed)

    def fit_settings(self, progress: bool = False) -> FitSettings:
        return FitSettings(
            weights=self.weights.build(),
            kernels=self.kernels.build(),
            contact_groups=self.contact.groups,
            scale_mode=self.contact.scale_mode,
            twist_weight=self.weights.twist_weight,
            yaw_candidates=self.initialization.yaw_candidates,
            default_depth=self.initialization.default_depth,
            progress=progress,
        )

    def to_dict(self) -> Dict:
        scenario = self.scenario.to_dict()
        del scenario["seed"]
        data = {"schema_version": self.schema_version, "seed": self.seed, "scenario": scenario}
        for name in SECTIONS:
            section = dataclasses.asdict(getattr(self, name))
            data[name] = {key: list(value) if isinstance(value, tuple) else value for key, value in section.items()}
        data["stages"] = [stage.to_dict() for stage in self.stages]
        data["skeleton"] = self.skeleton.to_dict()
        return data


def _position(text: Optional[str], path: Sequence[Any]) -> Optional[int]:
    """Line of the key at path (table names, array indices, then the key) in a TOML document, None if not found."""
    if not text:
        return None
    *prefix, key = path
    tables = [str(part) for part in prefix if not isinstance(part, int)]
    indices = [part for part in prefix if isinstance(part, int)]
    wanted = indices[-1] if indices else None
    header = re.compile(r"^\s*\[\[?\s*([^\]]+?)\s*\]\]?\s*$")
    assignment = re.compile(r"^\s*" + re.escape(str(key)) + r"\s*=")
    current: List[str] = []
    seen = -1
    for number, line in enumerate(text.splitlines(), start=1):
        match = header.match(line)
        if match:
            current = [part.strip() for part in match.group(1).split(".")]
            if current == tables:
                seen += 1
            if not tables and current == [str(key)]:
                return number
            continue
        if current == tables and (wanted is None or seen == wanted) and assignment.match(line):
            return number
    return None


def _check_keys(table: Dict, allowed: Sequence[str], path: Sequence[Any], text: Optional[str]):
    if not isinstance(table, dict):
        raise ConfigError(f"{'.'.join(map(str, path))} must be a table", key=".".join(map(str, path)))
    for key in table:
        if key not in allowed:
            full = ".".join(map(str, [*path, key]))
            raise ConfigError(f"unknown key {full!r}", key=full, line=_position(text, [*path, key]))


def _field_names(cls) -> List[str]:
    return [field.name for field in dataclasses.fields(cls)]


def _build(cls, table: Dict, path: Sequence[Any], text: Optional[str], exclude: Sequence[str] = ()):
    _check_keys(table, [name for name in _field_names(cls) if name not in exclude], path, text)
    try:
        return cls(**table)
    except (TypeError, ValueError) as error:
        raise ConfigError(f"invalid {'.'.join(map(str, path))}: {error}", key=".".join(map(str, path))) from error


def from_dict(data: Dict, text: Optional[str] = None) -> RunConfig:
    """
    Validate a parsed document and build the RunConfig; missing keys take their defaults.

    Parameters
    ----------
    data : Dict
        parsed TOML document
    text : Optional[str]
        source text, used to report line numbers

    Returns
    -------
    RunConfig
        the configuration

    Raises
    ------
    ConfigError
        on unknown keys, wrong types or invalid values
    """
    top = ["schema_version", "seed", "scenario", "stages", "skeleton", *SECTIONS]
    _check_keys(data, top, [], text)
    version = data.get("schema_version", SCHEMA_VERSION)
    if version != SCHEMA_VERSION:
        raise ConfigError(f"unsupported schema_version {version}, expected {SCHEMA_VERSION}", key="schema_version")
    seed = data.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        raise ConfigError(f"seed must be an integer, got {seed!r}", key="seed", line=_position(text, ["seed"]))

    scenario_table = data.get("scenario", {})
    _check_keys(scenario_table, [name for name in _field_names(ScenarioConfig) if name != "seed"], ["scenario"], text)
    try:
        scenario = ScenarioConfig(**{**scenario_table, "seed": seed})
    except (TypeError, InvalidConfig) as error:
        raise ConfigError(f"invalid scenario: {error}", key="scenario") from error

    sections = {name: _build(cls, data.get(name, {}), [name], text) for name, cls in SECTIONS.items()}

    if "stages" in data:
        if not isinstance(data["stages"], list) or not data["stages"]:
            raise ConfigError("stages must be a non-empty array of tables", key="stages")
        stages = tuple(_build(StageConfig, table, ["stages", i], text) for i, table in enumerate(data["stages"]))
    else:
        stages = StageSchedule.default().stages

    skeleton = DEFAULT_SKELETON
    if "skeleton" in data:
        table = data["skeleton"]
        _check_keys(table, list(DEFAULT_SKELETON.to_dict()), ["skeleton"], text)
        for i, candidate in enumerate(table.get("contact_candidates", [])):
            _check_keys(candidate, ["joint", "offset", "group"], ["skeleton", "contact_candidates", i], text)
        try:
            skeleton = SkeletonDef.from_dict({**DEFAULT_SKELETON.to_dict(), **table})
        except (TypeError, ValueError, KeyError) as error:
            raise ConfigError(f"invalid skeleton: {error}", key="skeleton") from error

    return RunConfig(seed=seed, scenario=scenario, stages=stages, skeleton=skeleton, schema_version=version, **sections)


def loads(text: str, overrides: Sequence[str] = ()) -> RunConfig:
    """
    Parse a configuration document, then apply --set style overrides.

    Parameters
    ----------
    text : str
        TOML document
    overrides : Sequence[str]
        ``section.key=value`` assignments, stages addressed as ``stages.<index>.key``

    Returns
    -------
    RunConfig
        the configuration

    Raises
    ------
    ConfigError
        on syntax errors (with line and column), unknown keys or invalid values
    """
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as error:
        match = POSITION.search(str(error))
        line, column = (int(match.group(1)), int(match.group(2))) if match else (None, None)
        raise ConfigError(f"syntax error: {error}", line=line, column=column) from error
    for override in overrides:
        apply_override(data, override)
    return from_dict(data, text)


def load(path, overrides: Sequence[str] = ()) -> RunConfig:
    with open(path, encoding="utf-8") as file_handler:
        return loads(file_handler.read(), overrides)


def dumps(config: RunConfig) -> str:
    return tomli_w.dumps(config.to_dict())


def parse_value(text: str) -> Any:
    """A TOML literal, or the raw text when it is not one."""
    try:
        return tomllib.loads(f"value = {text}")["value"]
    except tomllib.TOMLDecodeError:
        return text


def apply_override(data: Dict, override: str):
    """
    Set one ``dotted.path=value`` entry in a parsed document, creating tables as needed.

    Raises
    ------
    ConfigError
        if the override is malformed or addresses a missing stage
    """
    if "=" not in override:
        raise ConfigError(f"override {override!r} is not of the form section.key=value", key=override)
    path, value = override.split("=", 1)
    parts = [part.strip() for part in path.strip().split(".")]
    if not all(parts):
        raise ConfigError(f"override {override!r} has an empty key", key=path)
    node: Any = data
    for depth, part in enumerate(parts[:-1]):
        if isinstance(node, list):
            if not part.isdigit() or int(part) >= len(node):
                raise ConfigError(f"override {override!r} addresses a missing entry {part!r}", key=path)
            node = node[int(part)]
        else:
            if part == "stages" and part not in node:
                node[part] = [stage.to_dict() for stage in StageSchedule.default().stages]
            node = node.setdefault(part, {})
        if not isinstance(node, (dict, list)):
            raise ConfigError(f"override {override!r}: {'.'.join(parts[: depth + 1])} is not a table", key=path)
    if isinstance(node, list):
        raise ConfigError(f"override {override!r} must name a key inside the entry", key=path)
    node[parts[-1]] = parse_value(value.strip())

