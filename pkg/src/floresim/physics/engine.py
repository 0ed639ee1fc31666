"""Python surface of the dynamics engine: state, configuration and single-step API."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..morphology import RobotModel
from . import _kernels as K
from .terrain import Terrain

CONTROL_DT = 0.02
INTEGRATORS = {"semi-implicit-euler": K.SEMI_IMPLICIT, "rk2": K.RK2}


class SimulationDiverged(RuntimeError):
    """Raised when a step produces non-finite values; carries the last valid state."""

    def __init__(self, message: str, last_state: "SimState"):
        super().__init__(message)
        self.last_state = last_state


@dataclass(frozen=True)
class PhysicsConfig:
    gravity: float = 9.81
    substep_dt: float = 0.0025
    contact_stiffness: float = 2.0e4
    contact_damping: float = 3.0e2
    friction_reg_velocity: float = 0.02
    limit_stiffness: float = 500.0
    limit_damping: float = 2.0
    integrator: str = "semi-implicit-euler"

    def __post_init__(self):
        ratio = CONTROL_DT / self.substep_dt
        if self.substep_dt <= 0 or abs(ratio - round(ratio)) > 1e-9:
            raise ValueError(f"substep_dt {self.substep_dt} must divide {CONTROL_DT} s exactly")
        if self.integrator not in INTEGRATORS:
            raise ValueError(f"unknown integrator {self.integrator!r}")

    @property
    def substeps_per_control(self) -> int:
        return int(round(CONTROL_DT / self.substep_dt))


@dataclass
class SimState:
    base_position: np.ndarray
    base_orientation: np.ndarray  # (w, x, y, z)
    joint_positions: np.ndarray
    base_linear_velocity: np.ndarray  # world frame
    base_angular_velocity: np.ndarray  # body frame
    joint_velocities: np.ndarray
    time: float = 0.0

    def copy(self) -> "SimState":
        return SimState(self.base_position.copy(), self.base_orientation.copy(),
                        self.joint_positions.copy(), self.base_linear_velocity.copy(),
                        self.base_angular_velocity.copy(), self.joint_velocities.copy(), self.time)

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in (
            self.base_position, self.base_orientation, self.joint_positions,
            self.base_linear_velocity, self.base_angular_velocity, self.joint_velocities))

    @classmethod
    def at_rest(cls, n_joints: int, height: float = 0.0, joint_positions=None) -> "SimState":
        q = np.zeros(n_joints) if joint_positions is None else np.array(joint_positions, dtype=float)
        return cls(np.array([0.0, 0.0, height]), np.array([1.0, 0.0, 0.0, 0.0]), q,
                   np.zeros(3), np.zeros(3), np.zeros(n_joints))


@dataclass(frozen=True)
class ContactPoint:
    link: str
    world_position: np.ndarray
    normal: np.ndarray
    normal_force: float
    tangential_force: np.ndarray


@dataclass(frozen=True)
class ContactSet:
    body: np.ndarray
    point: np.ndarray
    kind: np.ndarray
    radius: np.ndarray
    axis: np.ndarray
    is_base: np.ndarray
    is_wheel: np.ndarray
    names: tuple[str, ...]


@dataclass(frozen=True)
class CompiledModel:
    """Flat arrays consumed by the kernels. Body ``k + 1`` is driven by joint ``k``."""

    body_names: tuple[str, ...]
    parent: np.ndarray
    axis: np.ndarray
    R_tree: np.ndarray
    t_tree: np.ndarray
    mass: np.ndarray
    com: np.ndarray
    inertia: np.ndarray
    armature: np.ndarray
    has_limits: np.ndarray
    lim_lo: np.ndarray
    lim_hi: np.ndarray
    contacts: ContactSet
    fixed_base: int = 0

    @property
    def n_joints(self) -> int:
        return self.parent.shape[0] - 1

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def with_base(self, mass: float | None = None, com=None) -> "CompiledModel":
        m = self.mass.copy()
        c = self.com.copy()
        if mass is not None:
            m[0] = mass
        if com is not None:
            c[0] = com
        return replace(self, mass=m, com=c)

    def kinematic_args(self):
        return self.parent, self.axis, self.R_tree, self.t_tree


def compile_model(model: RobotModel, knee_radius: float = 0.03) -> CompiledModel:
    """Flatten a :class:`RobotModel` and attach its contact points.

    Contacts: one rolling contact per wheel, the eight torso box corners
    (base contacts) and a small sphere at each knee.
    """
    links = {link.name: link for link in model.links}
    root = model.links[0].name
    body_names = [root] + [j.child_link for j in model.joints]
    index = {name: i for i, name in enumerate(body_names)}
    nb = len(body_names)
    parent = np.full(nb, -1, dtype=np.int64)
    axis = np.zeros((nb, 3))
    R_tree = np.tile(np.eye(3), (nb, 1, 1))
    t_tree = np.zeros((nb, 3))
    for k, joint in enumerate(model.joints):
        i = k + 1
        parent[i] = index[joint.parent_link]
        if parent[i] >= i:
            raise ValueError("joints must be listed parent-first")
        axis[i] = joint.axis
        R_tree[i] = np.asarray(joint.frame_offset.rotation, dtype=float)
        t_tree[i] = joint.frame_offset.translation
    mass = np.array([links[n].mass for n in body_names], dtype=float)
    com = np.array([links[n].com for n in body_names], dtype=float)
    inertia = np.array([links[n].inertia for n in body_names], dtype=float)
    armature = np.array([j.armature for j in model.joints], dtype=float)
    has_limits = np.array([j.position_limits is not None for j in model.joints], dtype=np.int64)
    lim_lo = np.array([j.position_limits[0] if j.position_limits else 0.0 for j in model.joints])
    lim_hi = np.array([j.position_limits[1] if j.position_limits else 0.0 for j in model.joints])

    c_body, c_point, c_kind, c_radius, c_axis, c_base, c_wheel, names = [], [], [], [], [], [], [], []
    for i, name in enumerate(body_names):
        kind, dims = links[name].geometry
        if kind == "wheel-cylinder":
            c_body.append(i); c_point.append((0.0, 0.0, 0.0)); c_kind.append(K.WHEEL)
            c_radius.append(dims[0]); c_axis.append((0.0, 1.0, 0.0)); c_base.append(0); c_wheel.append(1)
            names.append(name)
    torso = links[root]
    if torso.geometry[0] == "box":
        sx, sy, sz = (0.5 * d for d in torso.geometry[1])
        for cx in (sx, -sx):
            for cy in (sy, -sy):
                for cz in (sz, -sz):
                    c_body.append(0); c_point.append((cx, cy, cz)); c_kind.append(K.POINT)
                    c_radius.append(0.0); c_axis.append((0.0, 0.0, 1.0)); c_base.append(1)
                    c_wheel.append(0); names.append(root)
    for k, joint in enumerate(model.joints):
        if joint.name.endswith("_knee"):
            c_body.append(k + 1); c_point.append((0.0, 0.0, 0.0)); c_kind.append(K.POINT)
            c_radius.append(knee_radius); c_axis.append((0.0, 0.0, 1.0)); c_base.append(0)
            c_wheel.append(0); names.append(joint.child_link)
    contacts = ContactSet(
        np.array(c_body, dtype=np.int64), np.array(c_point, dtype=float).reshape(-1, 3),
        np.array(c_kind, dtype=np.int64), np.array(c_radius, dtype=float),
        np.array(c_axis, dtype=float).reshape(-1, 3), np.array(c_base, dtype=np.int64),
        np.array(c_wheel, dtype=np.int64), tuple(names))
    return CompiledModel(tuple(body_names), parent, axis, R_tree, t_tree, mass, com, inertia,
                         armature, has_limits, lim_lo, lim_hi, contacts)


def pendulum_model(length: float = 1.0, bob_mass: float = 1.0) -> CompiledModel:
    """Fixed-base single pendulum swinging about the world y axis; bob is a point mass."""
    eps = 1e-9
    parent = np.array([-1, 0], dtype=np.int64)
    axis = np.array([[0.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
    contacts = ContactSet(np.zeros(0, np.int64), np.zeros((0, 3)), np.zeros(0, np.int64),
                          np.zeros(0), np.zeros((0, 3)), np.zeros(0, np.int64),
                          np.zeros(0, np.int64), ())
    return CompiledModel(
        ("anchor", "bob"), parent, axis, np.tile(np.eye(3), (2, 1, 1)), np.zeros((2, 3)),
        np.array([1.0, bob_mass]), np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -length]]),
        np.array([np.eye(3), eps * np.eye(3)]), np.zeros(1), np.zeros(1, np.int64),
        np.zeros(1), np.zeros(1), contacts, fixed_base=1)


_EMPTY_TERRAIN = None


def _terrain_args(terrain: Terrain | None):
    global _EMPTY_TERRAIN
    if terrain is None:
        if _EMPTY_TERRAIN is None:
            # Far below anything the tests drop: effectively contact-free.
            hf = np.full((2, 2), -1.0e6)
            _EMPTY_TERRAIN = (hf, np.ones((2, 2)), -1.0e6, -1.0e6, 1.0e6)
        return _EMPTY_TERRAIN
    return terrain.arrays()


def step_dynamics(model: CompiledModel, state: SimState, joint_torques, terrain: Terrain | None,
                  cfg: PhysicsConfig = PhysicsConfig(), external_force=None,
                  external_torque=None, friction_override: float = 0.0,
                  ) -> tuple[SimState, list[ContactPoint]]:
    """Advance ``state`` by one substep. Torques must already be clamped to joint limits."""
    tau = np.asarray(joint_torques, dtype=float)
    if tau.shape != (model.n_joints,) or not np.all(np.isfinite(tau)):
        raise ValueError("joint_torques must be a finite vector with one entry per joint")
    new = state.copy()
    f_base = np.zeros(3) if external_force is None else np.asarray(external_force, dtype=float)
    n_base = np.zeros(3) if external_torque is None else np.asarray(external_torque, dtype=float)
    nc = model.contacts.body.shape[0]
    c_pos = np.zeros((nc, 3))
    c_normal = np.zeros((nc, 3))
    c_fn = np.zeros(nc)
    c_ft = np.zeros((nc, 3))
    c_active = np.zeros(nc, dtype=np.int64)
    cs = model.contacts
    ok = K.substep(model.parent, model.axis, model.R_tree, model.t_tree, model.mass, model.com,
                   model.inertia, model.armature, model.fixed_base, model.has_limits,
                   model.lim_lo, model.lim_hi, cs.body, cs.point, cs.kind, cs.radius, cs.axis,
                   *_terrain_args(terrain), float(friction_override), cfg.gravity,
                   cfg.contact_stiffness, cfg.contact_damping, cfg.friction_reg_velocity,
                   cfg.limit_stiffness, cfg.limit_damping, cfg.substep_dt,
                   INTEGRATORS[cfg.integrator], new.base_position, new.base_orientation,
                   new.joint_positions, new.base_linear_velocity, new.base_angular_velocity,
                   new.joint_velocities, tau, f_base, n_base, c_pos, c_normal, c_fn, c_ft, c_active)
    new.time = state.time + cfg.substep_dt
    if not ok or not new.is_finite():
        raise SimulationDiverged(f"simulation diverged at t={new.time:.4f}s", state)
    contacts = [ContactPoint(cs.names[c], c_pos[c].copy(), c_normal[c].copy(), float(c_fn[c]),
                             c_ft[c].copy()) for c in range(nc) if c_active[c]]
    return new, contacts


def mass_matrix(model: CompiledModel, state: SimState) -> tuple[np.ndarray, np.ndarray]:
    """Joint-space mass matrix (with armature) and bias vector at ``state``."""
    nb = model.parent.shape[0]
    R = np.empty((nb, 3, 3))
    o = np.empty((nb, 3))
    E = np.zeros((nb, 3, 3))
    K.kinematics(*model.kinematic_args(), state.base_position, state.base_orientation,
                 state.joint_positions, R, o, E)
    nu = np.concatenate([state.base_angular_velocity, R[0].T @ state.base_linear_velocity,
                         state.joint_velocities])
    if model.fixed_base:
        nu[:6] = 0.0
    M = np.empty((nu.size, nu.size))
    h = np.empty(nu.size)
    K.mass_matrix_and_bias(model.parent, model.axis, model.t_tree, model.mass, model.com,
                           model.inertia, model.armature, model.fixed_base, 9.81, R, E, nu, M, h)
    return M, h


def body_poses(model: CompiledModel, state: SimState) -> tuple[np.ndarray, np.ndarray]:
    nb = model.parent.shape[0]
    R = np.empty((nb, 3, 3))
    o = np.empty((nb, 3))
    E = np.zeros((nb, 3, 3))
    K.kinematics(*model.kinematic_args(), state.base_position, state.base_orientation,
                 state.joint_positions, R, o, E)
    return R, o


def linear_momentum(model: CompiledModel, state: SimState) -> np.ndarray:
    R, o = body_poses(model, state)
    return K.linear_momentum(model.parent, model.axis, model.mass, model.com, R, o,
                             state.base_linear_velocity, state.base_angular_velocity,
                             state.joint_velocities)


def mechanical_energy(model: CompiledModel, state: SimState, gravity: float = 9.81) -> float:
    """Kinetic (rigid bodies, armature included) plus gravitational potential energy."""
    M, _ = mass_matrix(model, state)
    R, o = body_poses(model, state)
    nu = np.concatenate([state.base_angular_velocity, R[0].T @ state.base_linear_velocity,
                         state.joint_velocities])
    if model.fixed_base:
        nu[:6] = 0.0
    kinetic = 0.5 * nu @ M @ nu
    heights = o[:, 2] + np.einsum("bij,bj->bi", R, model.com)[:, 2]
    return float(kinetic + gravity * np.dot(model.mass, heights))
