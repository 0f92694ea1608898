"""Run configuration: defaults, presets, and the flat ``key = value`` file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields

from .agent import AgentConfig

VARIANTS = ("full", "no_double", "no_dueling", "no_per", "fixed_30", "fixed_40")
SCENARIOS = ("uniform", "rush_hour")


@dataclass
class RunConfig:
    seed: int = 0
    episode_length_s: int = 3600
    episode_count: int = 1200
    memory_size: int = 20000
    batch_size: int = 64
    eps_start: float = 1.0
    eps_end: float = 0.01
    eps_decay_steps: int = 10000
    pretrain_steps: int = 2000
    target_rate: float = 0.001
    gamma: float = 0.99
    lr: float = 0.0001
    leaky_beta: float = 0.01
    tau: float = 0.7
    scenario: str = "uniform"
    variant: str = "full"
    arrival_rate: float = 0.1
    rush_rate: float = 0.2
    v_max: float = 13.9
    accel: float = 1.0
    decel: float = 4.5
    yellow_s: int = 4
    reward_scale: float = 1.0
    reset_schedule: bool = False
    target_update_literal: bool = False
    checkpoint_every: int = 50

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}; expected one of {VARIANTS}")
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if self.episode_length_s <= 0 or self.episode_count < 0:
            raise ValueError("episode length must be positive and episode count non-negative")

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            memory_size=self.memory_size,
            batch_size=self.batch_size,
            eps_start=self.eps_start,
            eps_end=self.eps_end,
            eps_decay_steps=self.eps_decay_steps,
            pretrain_steps=self.pretrain_steps,
            target_rate=self.target_rate,
            gamma=self.gamma,
            lr=self.lr,
            beta=self.leaky_beta,
            tau=self.tau,
            double=self.variant != "no_double",
            dueling=self.variant != "no_dueling",
            prioritized=self.variant != "no_per",
            target_update_literal=self.target_update_literal,
            reward_scale=self.reward_scale,
        )

    @property
    def fixed_seconds(self) -> int | None:
        if self.variant.startswith("fixed_"):
            return int(self.variant.split("_")[1])
        return None

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def dump(self) -> str:
        return "".join(f"{f.name} = {getattr(self, f.name)}\n" for f in fields(self))


# The ten published learning hyperparameters, label -> (field, value).
PARAMETER_TABLE = {
    "Replay memory size M": ("memory_size", 20000),
    "Minibatch size B": ("batch_size", 64),
    "Starting epsilon": ("eps_start", 1.0),
    "Ending epsilon": ("eps_end", 0.01),
    "Steps from starting epsilon to ending epsilon": ("eps_decay_steps", 10000),
    "Pre-training steps tp": ("pretrain_steps", 2000),
    "Target network update rate alpha": ("target_rate", 0.001),
    "Discount factor gamma": ("gamma", 0.99),
    "Learning rate": ("lr", 0.0001),
    "Leaky ReLU beta": ("leaky_beta", 0.01),
}

PRESETS = {
    "desk": dict(episode_length_s=600, episode_count=300, pretrain_steps=500, eps_decay_steps=2500,
                 reward_scale=0.001),
    "full": dict(episode_length_s=3600, episode_count=1200),
}


def table_view(config: RunConfig) -> dict[str, object]:
    return {label: getattr(config, name) for label, (name, _) in PARAMETER_TABLE.items()}


def _coerce(field_type, raw: str):
    kind = field_type if isinstance(field_type, str) else field_type.__name__
    raw = raw.strip()
    if kind == "bool":
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str) -> dict[str, object]:
    types = {f.name: f.type for f in fields(RunConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in types:
            raise ValueError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(types[key], raw)
    return values


def load_config(path=None, preset: str | None = None, **overrides) -> RunConfig:
    """Defaults, then the preset, then the file, then explicit overrides."""
    values: dict[str, object] = {}
    if preset:
        if preset not in PRESETS:
            raise ValueError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        values.update(PRESETS[preset])
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read()))
    values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)
