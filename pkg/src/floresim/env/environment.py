"""Vectorized wheel-legged locomotion environment."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ..morphology import LEG_JOINT_INDICES, WHEEL_JOINT_INDICES, RobotModel, build
from ..physics import CompiledModel, SimState, Terrain, compile_model, height_at, make_terrain
from ..physics.engine import body_poses
from ._tick import control_tick, terrain_heights
from .config import EnvConfig
from .observation import ObservationHistory, assemble_observation, quat_to_matrix
from .randomization import (DomainRandomizationDraw, apply_randomization,
                            sample_randomization)
from .reward import RewardState, compute_reward

log = logging.getLogger(__name__)

_LEG = np.array(LEG_JOINT_INDICES)
_WHEEL = np.array(WHEEL_JOINT_INDICES)


class PlacementError(RuntimeError):
    pass


class WheelLeggedEnv:
    """``num_envs`` independent robots stepped together at the 50 Hz control rate.

    Each robot owns its random generator (spawned from ``seed``), so results do
    not depend on ``threads``.
    """

    def __init__(self, morphology: str = "flores", num_envs: int = 1, cfg: EnvConfig | None = None,
                 seed: int = 0, threads: int = 1, robot: RobotModel | None = None,
                 terrain: Terrain | None = None):
        self.cfg = (cfg or EnvConfig()).validate()
        self.robot = robot or build(morphology)
        self.morphology = self.robot.morphology_tag
        self.model: CompiledModel = compile_model(self.robot)
        self.terrain = terrain or make_terrain(self.cfg.terrain_kind, self.cfg.terrain_params,
                                               seed=self.cfg.terrain_seed)
        self.num_envs = n = int(num_envs)
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None
        self.default_angles = self.robot.default_angles
        self.torque_limits = self.robot.torque_limits
        self.is_wheel = np.zeros(16, dtype=np.int64)
        self.is_wheel[_WHEEL] = 1

        self.pos = np.zeros((n, 3))
        self.quat = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
        self.qj = np.tile(self.default_angles, (n, 1))
        self.vw = np.zeros((n, 3))
        self.wb = np.zeros((n, 3))
        self.qd = np.zeros((n, 16))

        self.mass = np.tile(self.model.mass, (n, 1))
        self.com = np.tile(self.model.com, (n, 1, 1))
        self.mu = np.zeros(n)
        self.kp = np.zeros((n, 16))
        self.kd = np.zeros((n, 16))
        self.strength = np.ones((n, 16))
        self.tau_limit = np.tile(self.torque_limits, (n, 1))
        self.f_base = np.zeros((n, 3))
        self.q_des = np.tile(self.default_angles, (n, 1))
        self.w_des = np.zeros((n, 16))

        self.commands = np.zeros((n, 3))
        self.fixed_commands = False
        self.actions = np.zeros((3, n, 16))  # a_t, a_{t-1}, a_{t-2}
        self.episode_step = np.zeros(n, dtype=np.int64)
        self.next_push = np.zeros(n, dtype=np.int64)
        self.draws: list[DomainRandomizationDraw] = [DomainRandomizationDraw.identity()] * n
        self.torques = np.zeros((n, 16))
        self.wheel_contact = np.zeros((n, 4), dtype=np.int64)
        self.base_contact = np.zeros(n, dtype=np.int64)
        self._ok = np.ones(n, dtype=np.bool_)
        self._active = np.ones(n, dtype=np.bool_)
        self._heights = np.zeros(n)
        self.history = ObservationHistory(n, max_delay=max(4, self.cfg.randomization.observation_delay[1]),
                                          length=self.cfg.history_length)
        self.seed(seed)

    # ------------------------------------------------------------------ seeding / reset

    def seed(self, seed: int) -> None:
        self._seed = int(seed)
        children = np.random.SeedSequence(self._seed).spawn(self.num_envs)
        self.rngs = [np.random.default_rng(s) for s in children]

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self.seed(seed)
        self.reset_envs(np.arange(self.num_envs))
        return self.history.state_vector()

    def stagger_episodes(self) -> None:
        """Start each env at a random point of its episode.

        Without this every env times out and resamples its command on the same
        tick, so whole rollout batches are dominated by the same transient.
        """
        for e in range(self.num_envs):
            offset = int(self.rngs[e].integers(0, self.cfg.episode_length))
            self.episode_step[e] = offset
            self.next_push[e] += offset

    def reset_envs(self, idx) -> None:
        cfg = self.cfg
        idx = np.asarray(idx, dtype=np.int64)
        delays = []
        for e in idx:
            rng = self.rngs[e]
            if cfg.randomize:
                draw = sample_randomization(cfg.randomization, rng)
                if not cfg.randomize_pushes:
                    draw.disturbance_force = np.zeros(3)
                    draw.push_velocity_xy = np.zeros(2)
            else:
                draw = DomainRandomizationDraw.identity()
            self.draws[e] = draw
            m = apply_randomization(self.model, draw)
            self.mass[e] = m.mass
            self.com[e] = m.com
            self.mu[e] = 0.0 if draw.friction_coefficient is None else draw.friction_coefficient
            self.kp[e] = 0.0
            self.kp[e, _LEG] = cfg.kp_leg * draw.kp_scale
            self.kd[e, _LEG] = cfg.kd_leg * draw.kd_scale
            self.kd[e, _WHEEL] = cfg.kd_wheel * draw.kd_scale
            self.strength[e] = draw.motor_strength_scale
            self.f_base[e] = draw.disturbance_force

            q0 = self.default_angles.copy()
            q0[_LEG] = q0[_LEG] * draw.initial_joint_position_scale
            self.qj[e] = q0
            self.pos[e] = self._place(q0)
            self.quat[e] = (1.0, 0.0, 0.0, 0.0)
            self.vw[e] = 0.0
            self.wb[e] = 0.0
            self.qd[e] = 0.0
            self.q_des[e] = self.default_angles
            self.w_des[e] = 0.0
            self.actions[:, e] = 0.0
            self.torques[e] = 0.0
            self.episode_step[e] = 0
            self.next_push[e] = self._sample_push_time(rng)
            if not self.fixed_commands:
                self.commands[e] = self._sample_command(rng)
            delays.append(draw.observation_delay_steps)
        if len(idx):
            obs = self._observe(idx)
            self.history.reset(idx, obs, np.array(delays, dtype=np.int64))

    def _place(self, q0: np.ndarray) -> np.ndarray:
        """Base position putting the lowest wheel ``placement_clearance`` above the ground."""
        cfg = self.cfg
        cs = self.model.contacts
        state = SimState.at_rest(16, 0.0, q0)
        R, o = body_poses(self.model, state)
        pts = o[cs.body] + np.einsum("cij,cj->ci", R[cs.body], cs.point)
        ground = np.array([height_at(self.terrain, p[0], p[1])[0] for p in pts])
        bottom = pts[:, 2] - cs.radius
        wheels = cs.is_wheel.astype(bool)
        z = float(np.max(ground[wheels] - bottom[wheels])) + cfg.placement_clearance
        for attempt in range(cfg.placement_retries + 1):
            pen = ground - (bottom + z)
            if np.max(pen) <= 1e-9:
                return np.array([0.0, 0.0, z])
            log.debug("placement attempt %d penetrates by %.4f m, raising base", attempt, pen.max())
            z += max(float(pen.max()), 0.02)
        raise PlacementError(f"could not place robot without penetration after "
                             f"{cfg.placement_retries} retries")

    def _sample_command(self, rng: np.random.Generator) -> np.ndarray:
        cfg = self.cfg
        stand = rng.uniform() < cfg.standing_fraction
        cmd = np.array([rng.uniform(*cfg.vx_range), rng.uniform(*cfg.vy_range),
                        rng.uniform(*cfg.wz_range)])
        return np.zeros(3) if stand else cmd

    def _sample_push_time(self, rng: np.random.Generator) -> int:
        steps = self.cfg.push_interval_s / self.cfg.control_dt
        return int(rng.integers(int(0.5 * steps), int(1.5 * steps) + 1))

    # ------------------------------------------------------------------ observation / reward state

    def _observe(self, idx=None) -> np.ndarray:
        sl = slice(None) if idx is None else idx
        return assemble_observation(self.wb[sl], self.quat[sl], self.commands[sl], self.qj[sl],
                                    self.qd[sl], self.actions[0][sl], self.default_angles)

    def base_heights(self) -> np.ndarray:
        terrain_heights(*self.terrain.arrays(), np.ascontiguousarray(self.pos[:, :2]), self._heights)
        return self.pos[:, 2] - self._heights

    def body_velocity(self) -> np.ndarray:
        R = quat_to_matrix(self.quat)
        return np.einsum("nji,nj->ni", R, self.vw)

    def reward_state(self) -> RewardState:
        R = quat_to_matrix(self.quat)
        return RewardState(lin_vel=np.einsum("nji,nj->ni", R, self.vw), ang_vel=self.wb.copy(),
                           gravity=-R[:, 2, :], height=self.base_heights(),
                           joint_pos=self.qj.copy(), joint_vel=self.qd.copy())

    def headings(self) -> np.ndarray:
        R = quat_to_matrix(self.quat)
        return np.arctan2(R[:, 1, 0], R[:, 0, 0])

    def state_vector(self) -> np.ndarray:
        return self.history.state_vector()

    def sim_state(self, e: int = 0) -> SimState:
        return SimState(self.pos[e].copy(), self.quat[e].copy(), self.qj[e].copy(),
                        self.vw[e].copy(), self.wb[e].copy(), self.qd[e].copy(),
                        float(self.episode_step[e]) * self.cfg.control_dt)

    def set_commands(self, commands, fixed: bool = True) -> None:
        """Overwrite commands (used by evaluation protocols); ``fixed`` stops resampling."""
        self.commands[:] = np.broadcast_to(np.asarray(commands, dtype=float), self.commands.shape)
        self.fixed_commands = fixed

    # ------------------------------------------------------------------ actuation

    def apply_action(self, actions: np.ndarray) -> None:
        """Set joint position targets and wheel velocity targets from a (n, 16) action batch."""
        cfg = self.cfg
        a = np.clip(np.asarray(actions, dtype=float), -cfg.clip_actions, cfg.clip_actions)
        if a.shape != (self.num_envs, 16):
            raise ValueError(f"actions must have shape ({self.num_envs}, 16), got {a.shape}")
        self.actions[2] = self.actions[1]
        self.actions[1] = self.actions[0]
        self.actions[0] = a
        self.q_des[:] = self.default_angles
        self.q_des[:, _LEG] += cfg.action_scale * a[:, :12]
        self.w_des[:] = 0.0
        self.w_des[:, _WHEEL] = cfg.wheel_velocity_scale * a[:, 12:]

    def _run_tick(self) -> None:
        m = self.model
        cs = m.contacts
        pc = self.cfg.physics
        args = (m.parent, m.axis, m.R_tree, m.t_tree, m.inertia, m.armature, m.has_limits, m.lim_lo,
                m.lim_hi, cs.body, cs.point, cs.kind, cs.radius, cs.axis, cs.is_base,
                *self.terrain.arrays(), pc.gravity, pc.contact_stiffness, pc.contact_damping,
                pc.friction_reg_velocity, pc.limit_stiffness, pc.limit_damping, pc.substep_dt,
                pc.substeps_per_control, self.mass, self.com, self.mu, self.is_wheel, self.q_des,
                self.w_des, self.kp, self.kd, self.tau_limit, self.strength, self.f_base,
                self._active, self.pos, self.quat, self.qj, self.vw, self.wb, self.qd,
                self.torques, self.wheel_contact, self.base_contact, self._ok)
        n = self.num_envs
        if self._pool is None:
            control_tick(*args, 0, n)
            return
        bounds = np.linspace(0, n, self.threads + 1).astype(int)
        futures = [self._pool.submit(control_tick, *args, int(lo), int(hi))
                   for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for f in futures:
            f.result()

    def _apply_pushes(self) -> None:
        if not (self.cfg.randomize and self.cfg.randomize_pushes):
            return
        due = np.nonzero(self.episode_step == self.next_push)[0]
        for e in due:
            rng = self.rngs[e]
            self.vw[e, :2] += self.draws[e].push_velocity_xy
            self.draws[e].push_velocity_xy = rng.uniform(*self.cfg.randomization.push_velocity, size=2)
            self.next_push[e] = self.episode_step[e] + self._sample_push_time(rng)

    # ------------------------------------------------------------------ step

    def step(self, actions: np.ndarray):
        """Advance one control tick.

        Returns ``(state_vectors, reward, terminated, info)``. Finished envs are
        reset automatically; their final state vectors are in
        ``info["final_state"]`` and ``info["time_out"]`` marks truncation.
        """
        cfg = self.cfg
        self.apply_action(actions)
        self._apply_pushes()
        prev = self.reward_state()
        self._run_tick()
        diverged = ~self._ok
        if diverged.any():
            log.warning("simulation diverged in envs %s", np.nonzero(diverged)[0].tolist())
            for arr in (self.pos, self.vw, self.wb, self.qj, self.qd, self.torques):
                arr[diverged] = 0.0
            self.quat[diverged] = (1.0, 0.0, 0.0, 0.0)
        self.episode_step += 1
        if not self.fixed_commands:
            resample = self.episode_step % cfg.command_resample_steps == 0
            for e in np.nonzero(resample)[0]:
                self.commands[e] = self._sample_command(self.rngs[e])

        obs = self._observe()
        self.history.push(obs)
        cur = self.reward_state()
        reward = compute_reward(prev, cur, self.commands, self.torques, self.actions,
                                self.default_angles, cfg.reward, cfg.control_dt)
        reward.zero_rows(diverged)

        tilt = np.arccos(np.clip(-cur.gravity[:, 2], -1.0, 1.0))
        fell = (tilt > cfg.tilt_threshold) | (cur.height < cfg.min_base_height)
        touched = (self.base_contact > 0) if cfg.terminate_on_base_contact else np.zeros_like(fell)
        terminated = fell | touched | diverged
        time_out = (self.episode_step >= cfg.episode_length) & ~terminated
        done = terminated | time_out

        info = {
            "true_velocity": cur.lin_vel.copy(),
            "time_out": time_out,
            "diverged": diverged,
            "torques": self.torques.copy(),
            "joint_velocities": self.qd.copy(),
            "wheel_contact": self.wheel_contact.copy(),
            "base_position": self.pos.copy(),
            "commands": self.commands.copy(),
            "heading": self.headings(),
            "ang_vel": self.wb.copy(),
        }
        states = self.history.state_vector()
        if done.any():
            info["final_state"] = states.copy()
            self.reset_envs(np.nonzero(done)[0])
            states = self.history.state_vector()

        return states, reward, terminated, info

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None
