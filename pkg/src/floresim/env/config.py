"""Environment, reward and randomization configuration with YAML round-tripping."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..physics import PhysicsConfig

REWARD_TERMS = (
    "tracking_lin_vel",
    "tracking_ang_vel",
    "lin_vel_z",
    "ang_vel_xy",
    "orientation",
    "base_height",
    "static_pose",
    "dynamic_pose",
    "joint_acc",
    "joint_power",
    "torques",
    "action_rate",
    "smoothness",
)

DEFAULT_WEIGHTS = {
    "tracking_lin_vel": 8.0,
    "tracking_ang_vel": 4.0,
    "lin_vel_z": -0.1,
    "ang_vel_xy": -0.05,
    "orientation": -0.2,
    "base_height": 2.0,
    "static_pose": 5.0,
    "dynamic_pose": 1.0,
    "joint_acc": -2.5e-7,
    "joint_power": -5e-5,
    "torques": -5e-5,
    "action_rate": -0.01,
    "smoothness": -0.01,
}


class ConfigError(ValueError):
    pass


@dataclass
class RewardParams:
    sigma1: float = 0.25
    sigma2: float = 0.25
    sigma3: float = 0.05
    sigma4: float = 1.0
    sigma5: float = 1.0
    target_height: float = 0.40
    near_zero_lin: float = 0.1
    near_zero_ang: float = 0.1
    # "command": near-zero branch when the command is a stand-still command.
    # "error": literal reading, branch on the tracking error itself.
    near_zero_mode: str = "command"
    weights: dict = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))

    def validate(self) -> None:
        for name in ("sigma1", "sigma2", "sigma3", "sigma4", "sigma5"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.near_zero_mode not in ("command", "error"):
            raise ConfigError("near_zero_mode must be 'command' or 'error'")
        unknown = set(self.weights) - set(REWARD_TERMS)
        if unknown:
            raise ConfigError(f"unknown reward terms {sorted(unknown)}")
        for term in REWARD_TERMS:
            self.weights.setdefault(term, 0.0)

    def weight_vector(self):
        return [float(self.weights.get(t, 0.0)) for t in REWARD_TERMS]


@dataclass
class RandomizationRanges:
    payload_mass: tuple[float, float] = (2.0, 6.0)
    com_displacement: tuple[float, float] = (-0.2, 0.2)
    friction: tuple[float, float] = (0.6, 2.0)
    motor_strength: tuple[float, float] = (0.8, 1.2)
    kp_scale: tuple[float, float] = (0.9, 1.1)
    kd_scale: tuple[float, float] = (0.9, 1.1)
    initial_joint_position: tuple[float, float] = (0.8, 1.2)
    disturbance: tuple[float, float] = (-30.0, 30.0)
    push_velocity: tuple[float, float] = (-1.0, 1.0)
    observation_delay: tuple[int, int] = (0, 4)

    def validate(self) -> None:
        for f in dataclasses.fields(self):
            lo, hi = getattr(self, f.name)
            if lo > hi:
                raise ConfigError(f"randomization range {f.name} has lo > hi")


@dataclass
class EnvConfig:
    control_dt: float = 0.02
    action_scale: float = 0.25
    wheel_velocity_scale: float = 10.0
    clip_actions: float = 10.0
    kp_leg: float = 80.0
    kd_leg: float = 2.0
    kd_wheel: float = 1.0
    episode_length_s: float = 20.0
    history_length: int = 12
    tilt_threshold: float = 1.0
    min_base_height: float = 0.15
    terminate_on_base_contact: bool = True
    command_resample_s: float = 10.0
    standing_fraction: float = 0.2
    vx_range: tuple[float, float] = (-1.5, 1.5)
    vy_range: tuple[float, float] = (-0.8, 0.8)
    wz_range: tuple[float, float] = (-2.0, 2.0)
    push_interval_s: float = 8.0
    randomize: bool = True
    randomize_pushes: bool = True
    placement_clearance: float = 0.005
    placement_retries: int = 10
    terrain_kind: str = "flat"
    terrain_params: dict = field(default_factory=dict)
    terrain_seed: int = 0
    reward: RewardParams = field(default_factory=RewardParams)
    randomization: RandomizationRanges = field(default_factory=RandomizationRanges)
    physics: PhysicsConfig = field(default_factory=PhysicsConfig)

    @property
    def episode_length(self) -> int:
        return int(round(self.episode_length_s / self.control_dt))

    @property
    def command_resample_steps(self) -> int:
        return max(1, int(round(self.command_resample_s / self.control_dt)))

    def validate(self) -> "EnvConfig":
        if not self.action_scale > 0:
            raise ConfigError("action_scale must be positive")
        if self.episode_length <= self.history_length:
            raise ConfigError("episode length must exceed the history length")
        if abs(self.control_dt - 0.02) > 1e-12:
            raise ConfigError("control_dt is fixed at 0.02 s")
        for name in ("vx_range", "vy_range", "wz_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ConfigError(f"{name} has lo > hi")
        self.reward.validate()
        self.randomization.validate()
        return self

    def to_dict(self) -> dict[str, Any]:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EnvConfig":
        data = dict(data)
        reward_data = dict(data.pop("reward", {}))
        weights = dict(DEFAULT_WEIGHTS)
        weights.update(reward_data.pop("weights", {}) or {})
        reward = RewardParams(weights=weights, **reward_data)
        rand = RandomizationRanges(**{k: tuple(v) for k, v in data.pop("randomization", {}).items()})
        physics = PhysicsConfig(**data.pop("physics", {}))
        for key in ("vx_range", "vy_range", "wz_range"):
            if key in data:
                data[key] = tuple(data[key])
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown environment config keys {sorted(unknown)}")
        return cls(reward=reward, randomization=rand, physics=physics, **data).validate()


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def load_env_config(path: str | Path | None) -> EnvConfig:
    if path is None:
        return EnvConfig().validate()
    data = yaml.safe_load(Path(path).read_text()) or {}
    return EnvConfig.from_dict(data)


def save_env_config(cfg: EnvConfig, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))


def tracking_only(cfg: EnvConfig | None = None) -> EnvConfig:
    """Toy task: flat ground, no randomization, forward commands, only the tracking terms.

    The near-zero thresholds are set to 0 so both tracking terms stay in their
    exponential (positive) form; otherwise a constant zero yaw command would
    make every step a penalty and falling over would pay.
    """
    cfg = cfg or EnvConfig()
    weights = {t: 0.0 for t in REWARD_TERMS}
    weights["tracking_lin_vel"] = DEFAULT_WEIGHTS["tracking_lin_vel"]
    weights["tracking_ang_vel"] = DEFAULT_WEIGHTS["tracking_ang_vel"]
    return dataclasses.replace(
        cfg, randomize=False, randomize_pushes=False, terrain_kind="flat", standing_fraction=0.0,
        vy_range=(0.0, 0.0), wz_range=(0.0, 0.0),
        reward=dataclasses.replace(cfg.reward, weights=weights, near_zero_lin=0.0, near_zero_ang=0.0),
    ).validate()
