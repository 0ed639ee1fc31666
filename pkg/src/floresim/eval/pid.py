"""Heading PID used to turn path geometry into yaw-rate commands."""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    return math.pi if w == -math.pi else w


@dataclass(frozen=True)
class PIDGains:
    kp: float = 2.0
    ki: float = 0.1
    kd: float = 0.0
    integral_limit: float = 0.5

    def __post_init__(self):
        if min(self.kp, self.ki, self.kd, self.integral_limit) < 0:
            raise ValueError("PID gains must be non-negative")


@dataclass
class PIDState:
    integral: float = 0.0
    prev_error: float | None = None


def pid_heading(target_heading: float, heading: float, state: PIDState, gains: PIDGains,
                dt: float) -> float:
    """One PID step on the wrapped heading error; updates ``state`` in place."""
    err = wrap_angle(target_heading - heading)
    state.integral = min(max(state.integral + err * dt, -gains.integral_limit), gains.integral_limit)
    deriv = 0.0 if state.prev_error is None else wrap_angle(err - state.prev_error) / dt
    state.prev_error = err
    return gains.kp * err + gains.ki * state.integral + gains.kd * deriv


class HeadingController:
    """Stateful wrapper: ``controller(target_fn(position, time), heading)``."""

    def __init__(self, target_heading_fn, gains: PIDGains | None = None, dt: float = 0.02,
                 feedforward_fn=None):
        self.target_heading_fn = target_heading_fn
        self.feedforward_fn = feedforward_fn
        self.gains = gains or PIDGains()
        self.dt = dt
        self.state = PIDState()

    def __call__(self, position, heading: float, time: float) -> float:
        target = self.target_heading_fn(position, time)
        out = pid_heading(target, heading, self.state, self.gains, self.dt)
        if self.feedforward_fn is not None:
            out += self.feedforward_fn(position, time)
        return out
