"""Thirteen-term locomotion reward, evaluated for a batch of robots."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..morphology import LEG_JOINT_INDICES
from .config import REWARD_TERMS, RewardParams

_LEG = np.array(LEG_JOINT_INDICES)


@dataclass
class RewardState:
    """Quantities the reward needs from one simulator snapshot (leading axis = env)."""

    lin_vel: np.ndarray  # (n, 3) base linear velocity, body frame
    ang_vel: np.ndarray  # (n, 3) base angular velocity, body frame
    gravity: np.ndarray  # (n, 3) projected unit gravity
    height: np.ndarray  # (n,) base height above the terrain below it
    joint_pos: np.ndarray  # (n, 16)
    joint_vel: np.ndarray  # (n, 16)


@dataclass
class RewardBreakdown:
    raw: np.ndarray  # (n, 13)
    weights: np.ndarray  # (13,)
    weighted: np.ndarray  # (n, 13)
    total: np.ndarray  # (n,)

    def term(self, name: str) -> tuple[np.ndarray, float, np.ndarray]:
        k = REWARD_TERMS.index(name)
        return self.raw[:, k], float(self.weights[k]), self.weighted[:, k]

    def as_dict(self, env: int = 0) -> dict[str, tuple[float, float, float]]:
        return {name: (float(self.raw[env, k]), float(self.weights[k]), float(self.weighted[env, k]))
                for k, name in enumerate(REWARD_TERMS)}

    def zero_rows(self, mask: np.ndarray) -> None:
        self.raw[mask] = 0.0
        self.weighted[mask] = 0.0
        self.total[mask] = 0.0


def standing_indicator(command, lin_vel, ang_vel, params: RewardParams) -> np.ndarray:
    """1 when the command asks to stand still and the base is actually still."""
    command = np.asarray(command, dtype=float)
    cmd_still = (np.linalg.norm(command[:, :2], axis=1) < params.near_zero_lin) & \
        (np.abs(command[:, 2]) < params.near_zero_ang)
    body_still = (np.linalg.norm(lin_vel[:, :2], axis=1) < params.near_zero_lin) & \
        (np.abs(ang_vel[:, 2]) < params.near_zero_ang)
    return (cmd_still & body_still).astype(float)


def _tracking(err, cmd_mag, threshold, sigma, mode):
    near = (cmd_mag < threshold) if mode == "command" else (err < threshold)
    return np.where(near, -err, np.exp(-err / sigma))


def compute_reward(prev: RewardState, cur: RewardState, command, torques, actions,
                   default_angles, params: RewardParams, dt: float = 0.02) -> RewardBreakdown:
    """Evaluate every term.

    ``actions`` is ``(a_t, a_{t-1}, a_{t-2})``, each (n, 16). Joint accelerations
    are the backward difference of joint velocities over ``dt``.
    """
    command = np.asarray(command, dtype=float)
    a0, a1, a2 = (np.asarray(a, dtype=float) for a in actions)
    torques = np.asarray(torques, dtype=float)
    n = command.shape[0]

    e_v = np.linalg.norm(command[:, :2] - cur.lin_vel[:, :2], axis=1)
    e_w = np.abs(command[:, 2] - cur.ang_vel[:, 2])
    ind = standing_indicator(command, cur.lin_vel, cur.ang_vel, params)
    pose_err = np.sum((cur.joint_pos[:, _LEG] - np.asarray(default_angles)[_LEG]) ** 2, axis=1)
    qdd = (cur.joint_vel - prev.joint_vel) / dt

    raw = np.empty((n, len(REWARD_TERMS)))
    raw[:, 0] = _tracking(e_v, np.linalg.norm(command[:, :2], axis=1), params.near_zero_lin,
                          params.sigma1, params.near_zero_mode)
    raw[:, 1] = _tracking(e_w, np.abs(command[:, 2]), params.near_zero_ang, params.sigma2,
                          params.near_zero_mode)
    raw[:, 2] = cur.lin_vel[:, 2] ** 2
    raw[:, 3] = cur.ang_vel[:, 0] ** 2 + cur.ang_vel[:, 1] ** 2
    raw[:, 4] = cur.gravity[:, 0] ** 2 + cur.gravity[:, 1] ** 2
    raw[:, 5] = np.exp(-np.abs(cur.height - params.target_height) / params.sigma3)
    raw[:, 6] = ind * np.exp(-pose_err / params.sigma4)
    raw[:, 7] = (1.0 - ind) * np.exp(-pose_err / params.sigma5)
    raw[:, 8] = np.sum(qdd ** 2, axis=1)
    raw[:, 9] = np.sum(np.abs(torques) * np.abs(cur.joint_vel), axis=1)
    raw[:, 10] = np.sum(torques ** 2, axis=1)
    raw[:, 11] = np.sum((a1 - a0) ** 2, axis=1)
    raw[:, 12] = np.sum((a0 - 2.0 * a1 + a2) ** 2, axis=1)

    weights = np.array(params.weight_vector())
    weighted = raw * weights
    return RewardBreakdown(raw, weights, weighted, weighted.sum(axis=1))
