"""Observation layout, delay line and history buffer.

Observation (53 entries, in order):

    [0:3]    base angular velocity, body frame
    [3:6]    unit gravity direction in the body frame ((0, 0, -1) when level)
    [6:9]    command (vx, vy, wz)
    [9:21]   joint position error q - q_default for the 12 non-wheel joints
    [21:37]  joint velocities, all 16 joints
    [37:53]  previous action

The state vector is the current observation followed by the 12 previous
observations, oldest first: 53 + 12 * 53 = 689 entries.
"""

from __future__ import annotations

import numpy as np

from ..morphology import LEG_JOINT_INDICES

OBS_DIM = 53
HISTORY_LENGTH = 12
STATE_DIM = OBS_DIM * (HISTORY_LENGTH + 1)
HISTORY_DIM = OBS_DIM * HISTORY_LENGTH

OBS_SLICES = {
    "ang_vel": slice(0, 3),
    "gravity": slice(3, 6),
    "command": slice(6, 9),
    "joint_pos_error": slice(9, 21),
    "joint_vel": slice(21, 37),
    "prev_action": slice(37, 53),
}

_LEG = np.array(LEG_JOINT_INDICES)


def quat_to_matrix(quat: np.ndarray) -> np.ndarray:
    """Rotation matrices for quaternions (w, x, y, z); works on (..., 4)."""
    q = np.asarray(quat, dtype=float)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def projected_gravity(quat: np.ndarray) -> np.ndarray:
    # body-frame image of world (0, 0, -1): -R^T e_z, i.e. minus the last row of R
    return -quat_to_matrix(quat)[..., 2, :]


def assemble_observation(ang_vel, quat, command, joint_pos, joint_vel, prev_action,
                         default_angles) -> np.ndarray:
    """Build observations for a batch (leading axis) or a single robot."""
    joint_pos = np.asarray(joint_pos, dtype=float)
    default_angles = np.asarray(default_angles, dtype=float)
    err = (joint_pos - default_angles)[..., _LEG]
    return np.concatenate([
        np.asarray(ang_vel, dtype=float), projected_gravity(quat), np.asarray(command, dtype=float),
        err, np.asarray(joint_vel, dtype=float), np.asarray(prev_action, dtype=float),
    ], axis=-1)


class ObservationHistory:
    """Per-env delay line and 12-slot history of the observations the policy saw."""

    def __init__(self, num_envs: int, max_delay: int = 4, length: int = HISTORY_LENGTH):
        self.length = length
        self.delay = np.zeros(num_envs, dtype=np.int64)
        self._raw = np.zeros((num_envs, max_delay + 1, OBS_DIM))  # newest last
        self._hist = np.zeros((num_envs, length, OBS_DIM))  # oldest first
        self._current = np.zeros((num_envs, OBS_DIM))

    def reset(self, idx, obs: np.ndarray, delay=0) -> None:
        self._raw[idx] = obs[:, None, :]
        self._hist[idx] = obs[:, None, :]
        self._current[idx] = obs
        self.delay[idx] = delay

    def push(self, obs: np.ndarray) -> np.ndarray:
        """Record freshly assembled observations; returns the (delayed) ones the policy sees."""
        self._hist[:, :-1] = self._hist[:, 1:]
        self._hist[:, -1] = self._current
        self._raw[:, :-1] = self._raw[:, 1:]
        self._raw[:, -1] = obs
        n = obs.shape[0]
        self._current = self._raw[np.arange(n), -1 - self.delay].copy()
        return self._current

    @property
    def current(self) -> np.ndarray:
        return self._current

    def state_vector(self) -> np.ndarray:
        n = self._current.shape[0]
        return np.concatenate([self._current, self._hist.reshape(n, -1)], axis=1)


def split_state(state: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(current observation, history block) views of a state vector batch."""
    return state[..., :OBS_DIM], state[..., OBS_DIM:]
