"""Run configuration: flat dotted-key text files validated into models.

The on-disk format is deliberately dumb: one ``key = value`` assignment per
line, ``#`` comments, no nesting syntax, no embedded code.  Dots in the key
express nesting (``space.sites = 16``).  Values are parsed as JSON scalars
with a bare-word fallback to strings, so ``true``, ``0.5``, ``dirichlet``
and ``"dirichlet"`` all do what they look like.  Unknown keys anywhere are
rejected, with the offending key path in the error.
"""

from __future__ import annotations

import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError

SCENARIOS = ("exact", "hf", "rank", "pekar", "hvz", "scan", "escaping")


class ConfigError(ValueError):
    """Malformed configuration text or values out of contract."""


class SpaceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    sites: int = Field(default=8, ge=2, le=64)
    length: float = Field(default=4.0, gt=0.0)
    dimension: int = Field(default=1, ge=1, le=2)
    boundary: Literal["dirichlet", "periodic"] = "dirichlet"


class PotentialConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["none", "gaussian-well"] = "none"
    depth: float = Field(default=0.0, ge=0.0)
    width: float = Field(default=1.0, gt=0.0)


class InteractionConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    kind: Literal["none", "soft-coulomb"] = "soft-coulomb"
    strength: float = 1.0
    softening: Optional[float] = Field(default=None, gt=0.0)


class SolverConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(default=2024, ge=0)
    restarts: int = Field(default=8, ge=0, le=64)
    max_iterations: int = Field(default=500, ge=1, le=20000)


class ScanConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    start: float = Field(default=0.0, ge=0.0)
    stop: float = 6.0
    points: int = Field(default=8, ge=2, le=64)


class SequenceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    width: int = Field(default=5, ge=1)
    center: int = Field(default=2, ge=0)
    steps: int = Field(default=8, ge=2, le=64)
    probe_sites: int = Field(default=6, ge=1)


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scenario: Literal[SCENARIOS]
    statistics: Optional[Literal["fermion", "boson"]] = None
    particles: int = Field(default=2, ge=0, le=6)
    cap: Optional[int] = Field(default=None, ge=0, le=8)
    rank: Optional[int] = Field(default=None, ge=1)
    alpha: float = Field(default=0.0, ge=0.0)
    space: SpaceConfig = SpaceConfig()
    potential: PotentialConfig = PotentialConfig()
    interaction: InteractionConfig = InteractionConfig()
    solver: SolverConfig = SolverConfig()
    scan: ScanConfig = ScanConfig()
    sequence: SequenceConfig = SequenceConfig()

    def resolved_statistics(self) -> str:
        if self.statistics is not None:
            return self.statistics
        return "boson" if self.scenario in ("pekar", "scan") else "fermion"

    def resolved_cap(self) -> int:
        return self.particles if self.cap is None else self.cap


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def parse_config_text(text: str) -> RunConfig:
    """Parse dotted-key assignments into a validated RunConfig."""
    nested: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', "
                              f"got {stripped!r}")
        key, _, raw = stripped.partition("=")
        path = key.strip()
        if not path:
            raise ConfigError(f"line {lineno}: empty key")
        cursor = nested
        parts = path.split(".")
        for part in parts[:-1]:
            cursor = cursor.setdefault(part, {})
            if not isinstance(cursor, dict):
                raise ConfigError(f"line {lineno}: {path!r} descends into a "
                                  f"scalar")
        leaf = parts[-1]
        if leaf in cursor:
            raise ConfigError(f"line {lineno}: duplicate key {path!r}")
        cursor[leaf] = _parse_value(raw.strip())
    return validate_config(nested)


def validate_config(data: dict) -> RunConfig:
    try:
        config = RunConfig(**data)
    except ValidationError as err:
        first = err.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigError(f"{where}: {first['msg']}") from err
    _check_cross_fields(config)
    return config


def _check_cross_fields(config: RunConfig) -> None:
    cap = config.resolved_cap()
    if config.particles > cap:
        raise ConfigError(f"particles: {config.particles} exceeds the basis "
                          f"cap {cap}")
    modes = config.space.sites ** config.space.dimension
    statistics = config.resolved_statistics()
    if statistics == "fermion" and cap > modes:
        raise ConfigError(f"cap: {cap} fermions do not fit in {modes} modes")
    if config.scenario == "rank":
        if config.rank is None:
            raise ConfigError("rank: required for the rank scenario")
        if config.rank > modes:
            raise ConfigError(f"rank: {config.rank} exceeds {modes} modes")
        if statistics == "fermion" and config.rank < config.particles:
            raise ConfigError(f"rank: {config.rank} below the particle "
                              f"number {config.particles}")
    if config.scenario in ("hf",) and statistics != "fermion":
        raise ConfigError("statistics: the hf scenario is fermionic")
    if config.scenario == "scan" and config.scan.stop <= config.scan.start:
        raise ConfigError("scan.stop: must exceed scan.start")
    if config.scenario == "escaping" and config.space.boundary != "dirichlet":
        raise ConfigError("space.boundary: escaping runs use a dirichlet box")


def config_to_text(config: RunConfig) -> str:
    """Render a config back to the flat dotted-key format, sorted by key."""
    flat: dict = {}

    def walk(prefix, value):
        if isinstance(value, dict):
            for key, sub in value.items():
                walk(f"{prefix}.{key}" if prefix else key, sub)
        elif value is not None:
            flat[prefix] = json.dumps(value)

    walk("", config.model_dump())
    return "\n".join(f"{key} = {flat[key]}" for key in sorted(flat)) + "\n"
