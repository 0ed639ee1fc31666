"""Mechanical cost of transport."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .telemetry import TelemetryRecord

DEFAULT_SPEED_FLOOR = 0.05  # m/s


class UndefinedCoTError(ValueError):
    """The window is empty or the robot barely moved, so CoT is undefined."""


def positive_power(torques, velocities) -> np.ndarray:
    """Sum over joints of the positive part of torque times joint speed, per record."""
    p = np.asarray(torques, dtype=float) * np.asarray(velocities, dtype=float)
    return np.clip(p, 0.0, None).sum(axis=-1)


def cot(window: Sequence[TelemetryRecord], total_mass: float, g: float = 9.81,
        speed_floor: float = DEFAULT_SPEED_FLOOR) -> float:
    """Window-averaged positive mechanical power over m * g * mean horizontal speed."""
    if len(window) == 0:
        raise UndefinedCoTError("empty telemetry window")
    tau = np.array([r.torques for r in window])
    qd = np.array([r.joint_velocities for r in window])
    speed = float(np.mean([r.speed for r in window]))
    if not speed > speed_floor:
        raise UndefinedCoTError(f"mean horizontal speed {speed:.4f} m/s is below the "
                                f"{speed_floor} m/s floor")
    return float(np.mean(positive_power(tau, qd)) / (total_mass * g * speed))


def instantaneous_cot(records: Sequence[TelemetryRecord], total_mass: float, g: float = 9.81,
                      speed_floor: float = DEFAULT_SPEED_FLOOR) -> np.ndarray:
    """Per-tick CoT; the speed is floored so near-stops read as large values, not infinities."""
    if len(records) == 0:
        return np.zeros(0)
    tau = np.array([r.torques for r in records])
    qd = np.array([r.joint_velocities for r in records])
    speed = np.maximum(np.array([r.speed for r in records]), speed_floor)
    return positive_power(tau, qd) / (total_mass * g * speed)
