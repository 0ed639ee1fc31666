"""Per-episode domain-randomization draws and their application to a compiled model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..physics import CompiledModel
from .config import RandomizationRanges


@dataclass
class DomainRandomizationDraw:
    payload_mass_add: float
    com_displacement: np.ndarray  # (3,) m, added to the torso centre of mass
    friction_coefficient: float | None  # None keeps the terrain's own friction map
    motor_strength_scale: np.ndarray  # (16,)
    kp_scale: float
    kd_scale: float
    initial_joint_position_scale: np.ndarray  # (12,)
    disturbance_force: np.ndarray  # (3,) N, constant world force on the base
    push_velocity_xy: np.ndarray  # (2,) m/s, first scheduled push
    observation_delay_steps: int

    @classmethod
    def identity(cls) -> "DomainRandomizationDraw":
        return cls(0.0, np.zeros(3), None, np.ones(16), 1.0, 1.0, np.ones(12), np.zeros(3),
                   np.zeros(2), 0)

    def scalar_fields(self) -> dict[str, float]:
        out = {"payload_mass": self.payload_mass_add, "kp_scale": self.kp_scale,
               "kd_scale": self.kd_scale, "observation_delay": float(self.observation_delay_steps)}
        if self.friction_coefficient is not None:
            out["friction"] = self.friction_coefficient
        return out


def sample_randomization(ranges: RandomizationRanges, rng: np.random.Generator) -> DomainRandomizationDraw:
    """One uniform draw. Consumes ``rng`` in a fixed order so sequences are reproducible."""
    ranges.validate()
    u = rng.uniform
    payload = float(u(*ranges.payload_mass))
    com = u(*ranges.com_displacement, size=3)
    friction = float(u(*ranges.friction))
    strength = u(*ranges.motor_strength, size=16)
    kp = float(u(*ranges.kp_scale))
    kd = float(u(*ranges.kd_scale))
    init = u(*ranges.initial_joint_position, size=12)
    force = u(*ranges.disturbance, size=3)
    push = u(*ranges.push_velocity, size=2)
    lo, hi = ranges.observation_delay
    delay = int(rng.integers(lo, hi + 1))
    return DomainRandomizationDraw(payload, com, friction, strength, kp, kd, init, force, push, delay)


def apply_randomization(model: CompiledModel, draw: DomainRandomizationDraw) -> CompiledModel:
    """Return a copy of ``model`` with the payload and COM shift folded into the torso."""
    return model.with_base(mass=model.mass[0] + draw.payload_mass_add,
                           com=model.com[0] + draw.com_displacement)
