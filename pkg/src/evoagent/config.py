"""Run configuration: role bindings, loop bounds, limits, store layout.

One human-editable YAML file configures a run; ${VAR} references are
interpolated from the environment at load time so secrets stay out of
the file. CLI flags override file values field by field.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .provider import RoleBinding
from .roles import MODEL_ROLES, AgentRole
from .sandbox import ResourceLimits

# Per-role defaults: planning/judging on one frontier model, code and tool
# synthesis on another, temperature 0 in benchmark mode.
DEFAULT_BINDINGS: dict[AgentRole, RoleBinding] = {
    AgentRole.MANAGER: RoleBinding(AgentRole.MANAGER, "gemini-2.5-pro"),
    AgentRole.CRITIC: RoleBinding(AgentRole.CRITIC, "gemini-2.5-pro"),
    AgentRole.DEV: RoleBinding(AgentRole.DEV, "claude-4-sonnet"),
    AgentRole.TOOL_CREATOR: RoleBinding(AgentRole.TOOL_CREATOR, "claude-4-sonnet"),
}


@dataclass(frozen=True)
class GateFlags:
    post_plan: bool = False
    pre_tool_registration: bool = False

    @property
    def any(self) -> bool:
        return self.post_plan or self.pre_tool_registration


@dataclass(frozen=True)
class StorePaths:
    root: str = "runs"

    @property
    def events(self) -> Path:
        return Path(self.root) / "events"

    @property
    def templates(self) -> Path:
        return Path(self.root) / "templates.jsonl"

    @property
    def tools(self) -> Path:
        return Path(self.root) / "tools"

    @property
    def sandbox(self) -> Path:
        return Path(self.root) / "sandbox"

    @property
    def reports(self) -> Path:
        return Path(self.root) / "reports"


@dataclass
class RunConfig:
    role_bindings: dict[AgentRole, RoleBinding] = field(
        default_factory=lambda: dict(DEFAULT_BINDINGS)
    )
    max_iterations: int = 5
    trial_budget: int = 1
    limits: ResourceLimits = field(default_factory=ResourceLimits)
    gates: GateFlags = field(default_factory=GateFlags)
    stores: StorePaths = field(default_factory=StorePaths)
    seed: int = 0
    template_threshold: float = 0.35
    tool_match_threshold: float = 0.6
    tool_retries: int = 2
    retrieve_k: int = 3

    def validate(self) -> "RunConfig":
        missing = [r.value for r in MODEL_ROLES if r not in self.role_bindings]
        if missing:
            raise ConfigError(f"missing role bindings: {missing}")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if self.trial_budget < 1:
            raise ConfigError("trial_budget must be >= 1")
        if not (0.0 <= self.template_threshold <= 1.0):
            raise ConfigError("template_threshold must be in [0, 1]")
        if self.tool_retries < 0:
            raise ConfigError("tool_retries must be >= 0")
        return self

    def with_overrides(self, **kwargs: Any) -> "RunConfig":
        known = {k: v for k, v in kwargs.items() if v is not None}
        return replace(self, **known).validate()


_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)\}")


def _interpolate(value: Any) -> Any:
    if isinstance(value, str):
        def sub(match: re.Match) -> str:
            name = match.group(1)
            if name not in os.environ:
                raise ConfigError(f"config references unset environment variable {name}")
            return os.environ[name]
        return _ENV_REF.sub(sub, value)
    if isinstance(value, dict):
        return {k: _interpolate(v) for k, v in value.items()}
    if isinstance(value, list):
        return [_interpolate(v) for v in value]
    return value


def load_config(path: str | Path) -> RunConfig:
    """Read a YAML config file. Unknown top-level keys are rejected so typos
    fail loudly rather than silently using defaults."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text("utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    raw = _interpolate(raw)
    return config_from_mapping(raw)


_KNOWN_KEYS = {
    "roles", "max_iterations", "trial_budget", "limits", "gates", "stores",
    "seed", "template_threshold", "tool_match_threshold", "tool_retries",
    "retrieve_k",
}


def config_from_mapping(raw: dict[str, Any]) -> RunConfig:
    unknown = set(raw) - _KNOWN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    bindings = dict(DEFAULT_BINDINGS)
    for role_name, spec in (raw.get("roles") or {}).items():
        try:
            role = AgentRole(role_name)
        except ValueError as exc:
            raise ConfigError(f"unknown role {role_name!r}") from exc
        if not isinstance(spec, dict) or "model" not in spec:
            raise ConfigError(f"role {role_name}: need at least a model id")
        bindings[role] = RoleBinding(
            role=role,
            model_id=str(spec["model"]),
            endpoint=str(spec.get("endpoint", "")),
            params={k: v for k, v in spec.items() if k not in ("model", "endpoint")},
        )

    limits_raw = raw.get("limits") or {}
    limits = ResourceLimits(
        wall_clock=float(limits_raw.get("wall_clock", 30.0)),
        cpu_time=float(limits_raw["cpu_time"]) if limits_raw.get("cpu_time") is not None else None,
        memory=int(limits_raw["memory"]) if limits_raw.get("memory") is not None else None,
        network=str(limits_raw.get("network", "denied")),
    )
    gates_raw = raw.get("gates") or {}
    gates = GateFlags(
        post_plan=bool(gates_raw.get("post_plan", False)),
        pre_tool_registration=bool(gates_raw.get("pre_tool_registration", False)),
    )
    stores = StorePaths(root=str((raw.get("stores") or {}).get("root", "runs")))

    return RunConfig(
        role_bindings=bindings,
        max_iterations=int(raw.get("max_iterations", 5)),
        trial_budget=int(raw.get("trial_budget", 1)),
        limits=limits,
        gates=gates,
        stores=stores,
        seed=int(raw.get("seed", 0)),
        template_threshold=float(raw.get("template_threshold", 0.35)),
        tool_match_threshold=float(raw.get("tool_match_threshold", 0.6)),
        tool_retries=int(raw.get("tool_retries", 2)),
        retrieve_k=int(raw.get("retrieve_k", 3)),
    ).validate()
