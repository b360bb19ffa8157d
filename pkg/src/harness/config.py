"""
Run configuration.

A run file is TOML with flat dotted keys (``guide.kind = "eag"``); ordinary
TOML tables are accepted too and flattened the same way. Every key has a
default, unknown keys are rejected, and CLI flags are applied as dotted-key
overrides on top of the file.
"""
import hashlib
import json
import tomllib
from pathlib import Path
from typing import Any, Literal, Mapping

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.agent.config import AgentConfig
from src.common.exceptions import ConfigError
from src.guidance.config import GuidanceConfig
from src.worldmodel.config import DiffusionConfig


class EnvSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: Literal["point-mass", "pendulum-like"] = "point-mass"


class BudgetSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    real_steps: int = Field(default=50_000, ge=0)
    steps_per_iteration: int = Field(default=1_000, ge=1)


class SegmentSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    horizon: int = Field(default=10, ge=1)


class LoopSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    model_segments: int = Field(default=512, ge=1)
    synthetic_batch: int = Field(default=64, ge=1)
    a2c_updates: int = Field(default=1, ge=1)
    reward_batch: int = Field(default=64, ge=1)
    eval_every: int = Field(default=1, ge=1)
    eval_episodes: int = Field(default=10, ge=1)


class BufferSection(BaseModel):
    model_config = ConfigDict(extra="forbid")

    capacity: int = Field(default=100_000, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seeds: tuple[int, ...] = (0,)
    env: EnvSection = Field(default_factory=EnvSection)
    budget: BudgetSection = Field(default_factory=BudgetSection)
    segment: SegmentSection = Field(default_factory=SegmentSection)
    diffusion: DiffusionConfig = Field(default_factory=DiffusionConfig)
    guide: GuidanceConfig = Field(default_factory=GuidanceConfig)
    agent: AgentConfig = Field(default_factory=AgentConfig)
    loop: LoopSection = Field(default_factory=LoopSection)
    buffer: BufferSection = Field(default_factory=BufferSection)

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()


# ----------------------------------------------------------------------
# Loading
# ----------------------------------------------------------------------

def flatten_keys(data: Mapping[str, Any], prefix: str = "") -> dict[str, Any]:
    """Nested tables -> {"a.b.c": value}."""
    flat: dict[str, Any] = {}
    for key, value in data.items():
        dotted = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(flatten_keys(value, f"{dotted}."))
        else:
            flat[dotted] = value
    return flat


def nest_keys(flat: Mapping[str, Any]) -> dict[str, Any]:
    nested: dict[str, Any] = {}
    for dotted, value in flat.items():
        node = nested
        *parents, leaf = dotted.split(".")
        for part in parents:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(dotted, f"'{part}' is a value, not a section")
            node = child
        if isinstance(node.get(leaf), dict):
            raise ConfigError(dotted, "is a section, not a value")
        node[leaf] = value
    return nested


def build_config(flat: Mapping[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(nest_keys(flat))
    except ValidationError as exc:
        error = exc.errors()[0]
        key = ".".join(str(part) for part in error["loc"]) or "<root>"
        if error["type"] == "extra_forbidden":
            raise ConfigError(key, "unknown key") from exc
        raise ConfigError(key, error["msg"]) from exc


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    """Read ``path`` (if any), apply dotted-key ``overrides`` and validate."""
    flat: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text())
        except FileNotFoundError as exc:
            raise ConfigError(str(path), "config file not found") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(str(path), f"invalid TOML: {exc}") from exc
        flat = flatten_keys(raw)
    flat.update(overrides or {})
    return build_config(flat)
