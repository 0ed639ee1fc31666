"""Robot models for the hip-yaw (``flores``) and all-hip-roll (``baseline``) morphologies.

Both models share one link table; they differ only in the axis and limits of the
four slot-1 hip joints and in the lateral spacing of the front hips. Every
16-entry vector in the package follows :data:`JOINT_ORDER`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

LEGS = ("FL", "FR", "RL", "RR")
SLOTS = ("hip", "hip_pitch", "knee", "wheel")
JOINT_ORDER = tuple(f"{leg}_{slot}" for leg in LEGS for slot in SLOTS)
LEG_JOINT_INDICES = tuple(i for i, name in enumerate(JOINT_ORDER) if not name.endswith("_wheel"))
WHEEL_JOINT_INDICES = tuple(i for i, name in enumerate(JOINT_ORDER) if name.endswith("_wheel"))
MORPHOLOGY_TAGS = ("flores", "baseline")

REVOLUTE = "revolute-position-controlled"
WHEEL = "wheel-velocity-controlled"

X_AXIS = (1.0, 0.0, 0.0)
Y_AXIS = (0.0, 1.0, 0.0)
Z_AXIS = (0.0, 0.0, 1.0)


class MorphologyError(ValueError):
    """Raised when morphology parameters fail validation."""

    def __init__(self, fields: list[str]):
        self.fields = fields
        super().__init__("invalid morphology parameters: " + ", ".join(fields))


@dataclass(frozen=True)
class RigidTransform:
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    rotation: tuple[tuple[float, ...], ...] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))


@dataclass(frozen=True)
class JointSpec:
    name: str
    kind: str
    axis: tuple[float, float, float]
    position_limits: tuple[float, float] | None
    torque_limit: float
    velocity_limit: float
    default_angle: float
    parent_link: str
    child_link: str
    frame_offset: RigidTransform
    armature: float = 0.0


@dataclass(frozen=True)
class LinkSpec:
    name: str
    mass: float
    com: tuple[float, float, float]
    inertia: tuple[tuple[float, ...], ...]
    geometry: tuple[str, tuple[float, ...]]


@dataclass(frozen=True)
class RobotModel:
    links: tuple[LinkSpec, ...]
    joints: tuple[JointSpec, ...]
    morphology_tag: str
    joint_order: tuple[str, ...] = JOINT_ORDER

    @property
    def total_mass(self) -> float:
        return math.fsum(link.mass for link in self.links)

    def link(self, name: str) -> LinkSpec:
        for link in self.links:
            if link.name == name:
                return link
        raise KeyError(name)

    def joint(self, name: str) -> JointSpec:
        for joint in self.joints:
            if joint.name == name:
                return joint
        raise KeyError(name)

    @property
    def default_angles(self) -> np.ndarray:
        return np.array([j.default_angle for j in self.joints])

    @property
    def torque_limits(self) -> np.ndarray:
        return np.array([j.torque_limit for j in self.joints])

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RobotModel":
        def _tup(x):
            return tuple(_tup(v) for v in x) if isinstance(x, (list, tuple)) else x

        links = tuple(
            LinkSpec(
                name=d["name"],
                mass=d["mass"],
                com=_tup(d["com"]),
                inertia=_tup(d["inertia"]),
                geometry=(d["geometry"][0], _tup(d["geometry"][1])),
            )
            for d in data["links"]
        )
        joints = tuple(
            JointSpec(
                **{
                    **d,
                    "axis": _tup(d["axis"]),
                    "position_limits": None if d["position_limits"] is None else _tup(d["position_limits"]),
                    "frame_offset": RigidTransform(
                        translation=_tup(d["frame_offset"]["translation"]),
                        rotation=_tup(d["frame_offset"]["rotation"]),
                    ),
                }
            )
            for d in data["joints"]
        )
        return cls(links=links, joints=joints, morphology_tag=data["morphology_tag"],
                   joint_order=_tup(data["joint_order"]))


@dataclass(frozen=True)
class MorphologyParams:
    """Geometric, inertial and joint parameters. Angles in radians."""

    torso_mass: float = 13.0
    torso_size: tuple[float, float, float] = (0.50, 0.30, 0.12)
    hip_mass: float = 0.6
    hip_radius: float = 0.04
    thigh_mass: float = 0.9
    thigh_length: float = 0.22
    shank_mass: float = 0.5
    shank_length: float = 0.22
    wheel_mass: float = 1.0
    wheel_radius: float = 0.08
    wheel_width: float = 0.04

    hip_x_front: float = 0.22
    hip_x_rear: float = -0.22
    hip_y_rear: float = 0.10
    front_hip_spacing_ratio: float = 1.2
    hip_to_pitch_y: float = 0.07
    wheel_offset_y: float = 0.04

    leg_torque_limit: float = 32.0
    wheel_torque_limit: float = 8.0
    leg_velocity_limit: float = 30.0
    wheel_velocity_limit: float = 60.0
    leg_armature: float = 0.01
    wheel_armature: float = 0.005
    roll_limits: tuple[float, float] = (math.radians(-45.0), math.radians(45.0))
    yaw_limits: tuple[float, float] = (math.radians(-35.0), math.radians(100.0))
    hip_pitch_limits: tuple[float, float] = (math.radians(-60.0), math.radians(145.0))
    knee_limits: tuple[float, float] = (math.radians(-150.0), math.radians(-15.0))

    default_hip: float = 0.0
    default_hip_pitch: float = math.radians(43.0)
    default_knee: float = math.radians(-86.0)

    front_hip_kind: str = "yaw"

    def errors(self) -> list[str]:
        bad = []
        for name in ("torso_mass", "hip_mass", "thigh_mass", "shank_mass", "wheel_mass",
                     "hip_radius", "thigh_length", "shank_length", "wheel_radius", "wheel_width",
                     "hip_y_rear", "front_hip_spacing_ratio", "leg_torque_limit",
                     "wheel_torque_limit", "leg_velocity_limit", "wheel_velocity_limit"):
            value = getattr(self, name)
            if not (math.isfinite(value) and value > 0):
                bad.append(name)
        for name in ("leg_armature", "wheel_armature"):
            if not getattr(self, name) >= 0:
                bad.append(name)
        if any(not s > 0 for s in self.torso_size):
            bad.append("torso_size")
        if not self.hip_x_front > self.hip_x_rear:
            bad.append("hip_x_front")
        for name in ("roll_limits", "yaw_limits", "hip_pitch_limits", "knee_limits"):
            lo, hi = getattr(self, name)
            if not lo < hi:
                bad.append(name)
        if self.front_hip_kind not in ("yaw", "roll"):
            bad.append("front_hip_kind")
        return bad

    def replace(self, **changes) -> "MorphologyParams":
        return dataclasses.replace(self, **changes)


def _deg_pair(pair) -> tuple[float, float]:
    return (math.radians(float(pair[0])), math.radians(float(pair[1])))


def load_params(morphology: str = "flores", path: str | Path | None = None,
                overrides: dict[str, Any] | None = None) -> MorphologyParams:
    """Read a morphology parameter file (degrees) into :class:`MorphologyParams` (radians)."""
    if morphology not in MORPHOLOGY_TAGS:
        raise MorphologyError(["morphology"])
    if path is None:
        text = resources.files("floresim.data").joinpath("morphology.yaml").read_text()
    else:
        text = Path(path).read_text()
    raw = yaml.safe_load(text)
    values: dict[str, Any] = {}
    values.update(raw.get("links", {}))
    values.update(raw.get("geometry", {}))
    joints = dict(raw.get("joints", {}))
    for key in ("roll_limits_deg", "yaw_limits_deg", "hip_pitch_limits_deg", "knee_limits_deg"):
        if key in joints:
            values[key[: -len("_deg")]] = _deg_pair(joints.pop(key))
    values.update(joints)
    for slot, deg in raw.get("default_pose_deg", {}).items():
        values[f"default_{slot}"] = math.radians(float(deg))
    values.update(raw.get("morphologies", {}).get(morphology, {}))
    if overrides:
        values.update(overrides)
    known = {f.name for f in dataclasses.fields(MorphologyParams)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise MorphologyError(unknown)
    for key in ("torso_size",):
        if key in values:
            values[key] = tuple(float(v) for v in values[key])
    return MorphologyParams(**values)


def _box_inertia(m: float, sx: float, sy: float, sz: float):
    return ((m * (sy**2 + sz**2) / 12.0, 0.0, 0.0),
            (0.0, m * (sx**2 + sz**2) / 12.0, 0.0),
            (0.0, 0.0, m * (sx**2 + sy**2) / 12.0))


def _rod_inertia(m: float, length: float, radius: float = 0.02):
    transverse = m * (3 * radius**2 + length**2) / 12.0
    return ((transverse, 0.0, 0.0), (0.0, transverse, 0.0), (0.0, 0.0, 0.5 * m * radius**2))


def _wheel_inertia(m: float, r: float, w: float):
    transverse = m * (3 * r**2 + w**2) / 12.0
    return ((transverse, 0.0, 0.0), (0.0, 0.5 * m * r**2, 0.0), (0.0, 0.0, transverse))


def _sphere_inertia(m: float, r: float):
    i = 0.4 * m * r**2
    return ((i, 0.0, 0.0), (0.0, i, 0.0), (0.0, 0.0, i))


def _build(params: MorphologyParams, tag: str, front_kind: str) -> RobotModel:
    bad = params.errors()
    if bad:
        raise MorphologyError(bad)
    p = params
    links = [LinkSpec("torso", p.torso_mass, (0.0, 0.0, 0.0),
                      _box_inertia(p.torso_mass, *p.torso_size), ("box", tuple(p.torso_size)))]
    joints = []
    for leg in LEGS:
        front = leg.startswith("F")
        side = 1.0 if leg.endswith("L") else -1.0
        if front:
            hip_pos = (p.hip_x_front, side * p.hip_y_rear * p.front_hip_spacing_ratio, 0.0)
            kind = front_kind
        else:
            hip_pos = (p.hip_x_rear, side * p.hip_y_rear, 0.0)
            kind = "roll"
        if kind == "yaw":
            axis = Z_AXIS
            lo, hi = p.yaw_limits
            # Mirror so positive travel means the same thing on both sides.
            hip_limits = (lo, hi) if side > 0 else (-hi, -lo)
        else:
            axis = X_AXIS
            hip_limits = tuple(p.roll_limits)

        hip, thigh, shank, wheel = (f"{leg}_{s}" for s in ("hip", "thigh", "shank", "wheel"))
        links += [
            LinkSpec(hip, p.hip_mass, (0.0, 0.0, 0.0), _sphere_inertia(p.hip_mass, p.hip_radius),
                     ("capsule", (p.hip_radius, 0.0))),
            LinkSpec(thigh, p.thigh_mass, (0.0, 0.0, -0.5 * p.thigh_length),
                     _rod_inertia(p.thigh_mass, p.thigh_length), ("capsule", (0.02, p.thigh_length))),
            LinkSpec(shank, p.shank_mass, (0.0, 0.0, -0.5 * p.shank_length),
                     _rod_inertia(p.shank_mass, p.shank_length), ("capsule", (0.02, p.shank_length))),
            LinkSpec(wheel, p.wheel_mass, (0.0, 0.0, 0.0),
                     _wheel_inertia(p.wheel_mass, p.wheel_radius, p.wheel_width),
                     ("wheel-cylinder", (p.wheel_radius, p.wheel_width))),
        ]
        joints += [
            JointSpec(f"{leg}_hip", REVOLUTE, axis, hip_limits, p.leg_torque_limit,
                      p.leg_velocity_limit, p.default_hip, "torso", hip,
                      RigidTransform(hip_pos), p.leg_armature),
            JointSpec(f"{leg}_hip_pitch", REVOLUTE, Y_AXIS, tuple(p.hip_pitch_limits),
                      p.leg_torque_limit, p.leg_velocity_limit, p.default_hip_pitch, hip, thigh,
                      RigidTransform((0.0, side * p.hip_to_pitch_y, 0.0)), p.leg_armature),
            JointSpec(f"{leg}_knee", REVOLUTE, Y_AXIS, tuple(p.knee_limits), p.leg_torque_limit,
                      p.leg_velocity_limit, p.default_knee, thigh, shank,
                      RigidTransform((0.0, 0.0, -p.thigh_length)), p.leg_armature),
            JointSpec(f"{leg}_wheel", WHEEL, Y_AXIS, None, p.wheel_torque_limit,
                      p.wheel_velocity_limit, 0.0, shank, wheel,
                      RigidTransform((0.0, side * p.wheel_offset_y, -p.shank_length)),
                      p.wheel_armature),
        ]
    return RobotModel(links=tuple(links), joints=tuple(joints), morphology_tag=tag)


def build_flores(params: MorphologyParams | None = None) -> RobotModel:
    """Hip-yaw front legs, hip-roll rear legs."""
    params = params or load_params("flores")
    return _build(params, "flores", params.front_hip_kind)


def build_baseline(params: MorphologyParams | None = None) -> RobotModel:
    """All four hips roll-axis; link table shared with the flores model."""
    params = params or load_params("baseline")
    return _build(params, "baseline", "roll")


def build(tag: str, params: MorphologyParams | None = None) -> RobotModel:
    if tag == "flores":
        return build_flores(params if params is not None else load_params("flores"))
    if tag == "baseline":
        return build_baseline(params if params is not None else load_params("baseline"))
    raise MorphologyError(["morphology_tag"])


@dataclass(frozen=True)
class Violation:
    kind: str
    name: str
    message: str


def validate(model: RobotModel) -> list[Violation]:
    """Return every invariant violation in ``model``; empty when well formed."""
    out: list[Violation] = []
    names = [link.name for link in model.links]
    if len(set(names)) != len(names):
        out.append(Violation("link", "*", "duplicate link names"))
    for link in model.links:
        if not link.mass > 0:
            out.append(Violation("link", link.name, "mass must be positive"))
        inertia = np.asarray(link.inertia, dtype=float)
        if inertia.shape != (3, 3) or not np.allclose(inertia, inertia.T, atol=1e-12):
            out.append(Violation("link", link.name, "inertia must be a symmetric 3x3 matrix"))
        elif np.linalg.eigvalsh(inertia).min() <= 0:
            out.append(Violation("link", link.name, "inertia is not positive definite"))
        kind, dims = link.geometry
        if kind == "wheel-cylinder" and not dims[0] > 0:
            out.append(Violation("link", link.name, "wheel radius must be positive"))

    for joint in model.joints:
        axis = np.asarray(joint.axis, dtype=float)
        if abs(np.linalg.norm(axis) - 1.0) > 1e-9:
            out.append(Violation("joint", joint.name, "axis must have unit norm"))
        if not joint.torque_limit > 0:
            out.append(Violation("joint", joint.name, "torque limit must be positive"))
        if joint.kind == WHEEL:
            if joint.position_limits is not None:
                out.append(Violation("joint", joint.name, "wheel joints carry no position limits"))
        elif joint.kind == REVOLUTE:
            if joint.position_limits is None:
                out.append(Violation("joint", joint.name, "position limits missing"))
            elif not joint.position_limits[0] < joint.position_limits[1]:
                out.append(Violation("joint", joint.name, "position limit lo must be < hi"))
        else:
            out.append(Violation("joint", joint.name, f"unknown joint kind {joint.kind!r}"))

    # Tree check: every link except the root is the child of exactly one joint whose
    # parent is already reachable from the root.
    children = [j.child_link for j in model.joints]
    roots = [n for n in names if n not in children]
    if len(roots) != 1:
        out.append(Violation("model", "*", f"expected a single root link, found {roots}"))
    if len(set(children)) != len(children):
        out.append(Violation("model", "*", "a link is the child of more than one joint"))
    reachable = set(roots[:1])
    pending = list(model.joints)
    progressed = True
    while pending and progressed:
        progressed = False
        for joint in list(pending):
            if joint.parent_link in reachable:
                reachable.add(joint.child_link)
                pending.remove(joint)
                progressed = True
    if pending:
        out.append(Violation("model", "*", "joint graph is not a tree rooted at the base"))

    if tuple(j.name for j in model.joints) != JOINT_ORDER or tuple(model.joint_order) != JOINT_ORDER:
        out.append(Violation("model", "*", "joint order does not match the canonical order"))
    if len(model.joints) != 16:
        out.append(Violation("model", "*", "expected exactly 16 actuated joints"))
    return out


def structural_diff(a: RobotModel, b: RobotModel) -> list[tuple[str, str]]:
    """(element name, field) pairs that differ between two models, joint and link fields only."""
    diffs: list[tuple[str, str]] = []
    for la, lb in zip(a.links, b.links):
        for f in dataclasses.fields(LinkSpec):
            if getattr(la, f.name) != getattr(lb, f.name):
                diffs.append((la.name, f.name))
    for ja, jb in zip(a.joints, b.joints):
        for f in dataclasses.fields(JointSpec):
            if getattr(ja, f.name) != getattr(jb, f.name):
                diffs.append((ja.name, f.name))
    if len(a.links) != len(b.links) or len(a.joints) != len(b.joints):
        diffs.append(("model", "size"))
    return diffs
