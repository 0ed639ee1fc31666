"""Evaluation protocols: straight line, lateral, circle and the seven-turn course."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np
import torch

from .._build import derive_seed
from ..env import EnvConfig, WheelLeggedEnv
from .cot import DEFAULT_SPEED_FLOOR, UndefinedCoTError, cot, instantaneous_cot
from .pid import HeadingController, PIDGains, wrap_angle
from .report import ExperimentReport, reference_annotations
from .telemetry import TelemetryRecord

REFERENCE_RADII = (0.5, 1.0, 1.5, 2.0)
STRAIGHT_SPEED_RANGE = (0.5, 1.5)
# terrain used in place of each outdoor surface
SURFACE_TERRAIN = {"paved": "flat", "grass": "friction-patch", "gravel": "discrete"}
WZ_LIMIT = 2.0


def as_policy(policy):
    """Accept an ActorCritic (deterministic mean action) or any callable on state batches."""
    if hasattr(policy, "act"):
        def run(states: np.ndarray) -> np.ndarray:
            with torch.no_grad():
                a = policy.act(torch.as_tensor(states, dtype=torch.float32), deterministic=True)
            return a.numpy().astype(np.float64)
        return run
    return policy


@dataclass
class ProtocolSettings:
    seed: int = 0
    warmup_s: float = 2.0
    speed_floor: float = DEFAULT_SPEED_FLOOR
    gains: PIDGains = field(default_factory=PIDGains)
    path_bound: float = 0.3  # m, mean radial deviation allowed on circles
    threads: int = 1
    meta: dict = field(default_factory=dict)


@dataclass
class Rollout:
    records: list[TelemetryRecord]
    yaw_rates: np.ndarray
    lin_vel: np.ndarray
    completed: bool
    total_mass: float
    events: dict = field(default_factory=dict)


def eval_env_config(terrain_kind: str = "flat", duration_s: float = 20.0,
                    base: EnvConfig | None = None) -> EnvConfig:
    base = base or EnvConfig()
    return dataclasses.replace(base, randomize=False, randomize_pushes=False, terrain_kind=terrain_kind,
                               episode_length_s=duration_s + 1.0).validate()


def rollout(policy, morphology: str, command_fn, duration_s: float, settings: ProtocolSettings,
            terrain_kind: str = "flat", stop_fn=None) -> Rollout:
    """Drive one robot with commands from ``command_fn(env, t)`` for ``duration_s``."""
    act = as_policy(policy)
    cfg = eval_env_config(terrain_kind, duration_s)
    env = WheelLeggedEnv(morphology, 1, cfg, seed=derive_seed(settings.seed, "eval"),
                         threads=settings.threads)
    env.set_commands(np.zeros(3), fixed=True)
    states = env.reset()
    dt = cfg.control_dt
    records, yaw, vel = [], [], []
    completed = True
    try:
        for k in range(int(round(duration_s / dt))):
            t = k * dt
            cmd = np.asarray(command_fn(env, t), dtype=float)
            cmd[2] = float(np.clip(cmd[2], -WZ_LIMIT, WZ_LIMIT))
            env.commands[0] = cmd
            states, _, term, info = env.step(act(states))
            if term[0]:
                completed = False
                break
            v = info["true_velocity"][0]
            records.append(TelemetryRecord(
                time=(k + 1) * dt, torques=info["torques"][0].copy(),
                joint_velocities=info["joint_velocities"][0].copy(),
                base_position=info["base_position"][0].copy(), speed=float(np.hypot(v[0], v[1])),
                heading=float(info["heading"][0]), command=cmd.copy(),
                wheel_contact=info["wheel_contact"][0].astype(float)))
            yaw.append(info["ang_vel"][0, 2])
            vel.append(v.copy())
            if stop_fn is not None and stop_fn():
                break
    finally:
        env.close()
    return Rollout(records, np.array(yaw), np.array(vel).reshape(-1, 3), completed,
                   float(env.mass[0].sum()))


def _summarize(protocol: str, params: dict, morphology: str, ro: Rollout,
               settings: ProtocolSettings, path: dict | None = None) -> ExperimentReport:
    flags = [] if ro.completed else ["incomplete"]
    skip = int(round(settings.warmup_s / 0.02))
    window = ro.records[skip:] if len(ro.records) > skip else ro.records
    try:
        agg = cot(window, ro.total_mass, speed_floor=settings.speed_floor)
    except UndefinedCoTError:
        agg = None
        flags.append("cot-undefined")
    series = instantaneous_cot(ro.records, ro.total_mass, speed_floor=settings.speed_floor)
    tracking = {}
    if len(ro.records):
        cmd = np.array([r.command for r in ro.records])
        e_lin = np.linalg.norm(cmd[:, :2] - ro.lin_vel[:, :2], axis=1)[skip:]
        e_yaw = np.abs(cmd[:, 2] - ro.yaw_rates)[skip:]
        if len(e_lin):
            tracking = {"lin_mean": float(e_lin.mean()), "lin_rms": float(np.sqrt(np.mean(e_lin ** 2))),
                        "yaw_mean": float(e_yaw.mean()), "yaw_rms": float(np.sqrt(np.mean(e_yaw ** 2)))}
    rep = ExperimentReport(
        protocol=protocol, params=params, morphology=morphology, aggregate_cot=agg,
        cot_series=[float(x) for x in series], tracking=tracking, path=path or {},
        annotations=reference_annotations(protocol, params), flags=flags, seed=settings.seed,
        meta=dict(settings.meta, total_mass=ro.total_mass, ticks=len(ro.records)), events=ro.events)
    rep.records = ro.records  # not serialized; the CLI writes them as telemetry CSV
    return rep


def run_straight_line(policy, morphology: str, terrain_kind: str = "flat", speed: float = 1.0,
                      duration_s: float = 10.0, settings: ProtocolSettings | None = None) -> ExperimentReport:
    settings = settings or ProtocolSettings()
    lo, hi = STRAIGHT_SPEED_RANGE
    if not lo <= speed <= hi:
        raise ValueError(f"straight-line speed must lie in [{lo}, {hi}] m/s")
    terrain_kind = SURFACE_TERRAIN.get(terrain_kind, terrain_kind)
    ro = rollout(policy, morphology, lambda env, t: (speed, 0.0, 0.0), duration_s, settings, terrain_kind)
    return _summarize("straight", {"speed": speed, "terrain": terrain_kind}, morphology, ro, settings)


def sweep_straight_line(policy, morphology: str, speeds=(0.5, 0.75, 1.0, 1.25, 1.5),
                        terrains=("flat", "discrete", "friction-patch"),
                        settings: ProtocolSettings | None = None, duration_s: float = 10.0):
    return [run_straight_line(policy, morphology, terrain, v, duration_s, settings)
            for terrain in terrains for v in speeds]


def run_lateral(policy, morphology: str, speed: float = 0.5, direction: int = 1,
                duration_s: float = 10.0, settings: ProtocolSettings | None = None) -> ExperimentReport:
    settings = settings or ProtocolSettings()
    vy = math.copysign(abs(speed), direction)
    ro = rollout(policy, morphology, lambda env, t: (0.0, vy, 0.0), duration_s, settings)
    return _summarize("lateral", {"speed": abs(speed), "direction": int(math.copysign(1, direction))},
                      morphology, ro, settings)


def required_yaw_rate(vx: float, radius: float) -> float:
    """Yaw rate holding a circle of ``radius`` at forward speed ``vx``."""
    return 0.0 if math.isinf(radius) else vx / radius


def circle_target(radius: float, gain: float = 1.0):
    """Heading to follow a counter-clockwise circle centred at (0, radius).

    Tangent heading plus a radial correction steering back towards the circle.
    """
    def target(position, time):
        dx, dy = position[0], position[1] - radius
        phi = math.atan2(dy, dx)
        r = math.hypot(dx, dy)
        return wrap_angle(phi + 0.5 * math.pi + math.atan(gain * (r - radius)))
    return target


def run_circle(policy, morphology: str, radius: float, vx: float = 0.4, laps: float = 1.0,
               settings: ProtocolSettings | None = None, feedforward: bool = True) -> ExperimentReport:
    settings = settings or ProtocolSettings()
    if not radius > 0:
        raise ValueError("radius must be positive")
    ctrl = HeadingController(circle_target(radius), settings.gains, 0.02,
                             (lambda p, t: required_yaw_rate(vx, radius)) if feedforward else None)
    duration = max(10.0, laps * 2 * math.pi * radius / vx) + settings.warmup_s

    def command(env, t):
        return (vx, 0.0, ctrl(env.pos[0], float(env.headings()[0]), t))

    ro = rollout(policy, morphology, command, duration, settings)
    skip = int(round(settings.warmup_s / 0.02))
    pos = np.array([r.base_position for r in ro.records[skip:]]).reshape(-1, 3)
    dev = np.abs(np.hypot(pos[:, 0], pos[:, 1] - radius) - radius) if len(pos) else np.zeros(0)
    path = {"mean_radial_deviation": float(dev.mean()) if len(dev) else None,
            "max_radial_deviation": float(dev.max()) if len(dev) else None}
    rep = _summarize("circle", {"radius": radius, "vx": vx}, morphology, ro, settings, path)
    if radius not in REFERENCE_RADII:
        rep.flags.append("non-reference-radius")
    if path["mean_radial_deviation"] is None or path["mean_radial_deviation"] > settings.path_bound:
        rep.flags.append("path not held")
    return rep


def course_waypoints(leg: float = 2.0) -> np.ndarray:
    """Serpentine of eight straight legs joined by seven 90-degree turns."""
    headings = np.deg2rad([0, 90, 0, -90, 0, 90, 0, -90])
    pts = [np.zeros(2)]
    for h in headings:
        pts.append(pts[-1] + leg * np.array([math.cos(h), math.sin(h)]))
    return np.array(pts)


def detect_spikes(series, turn_times, dt: float = 0.02, window_s: float = 1.0) -> list[dict]:
    """Largest instantaneous-CoT sample within ``window_s`` of each turn time."""
    series = np.asarray(series, dtype=float)
    times = (np.arange(len(series)) + 1) * dt
    out = []
    for tt in turn_times:
        mask = np.abs(times - tt) <= window_s + 1e-9
        if not mask.any():
            out.append({"turn_time": float(tt), "spike_time": None, "value": None})
            continue
        idx = np.nonzero(mask)[0]
        k = int(idx[np.argmax(series[idx])])
        out.append({"turn_time": float(tt), "spike_time": float(times[k]), "value": float(series[k])})
    return out


def run_course(policy, morphology: str, waypoints=None, speed: float = 0.5, reach_radius: float = 0.3,
               settings: ProtocolSettings | None = None, timeout_s: float | None = None) -> ExperimentReport:
    settings = settings or ProtocolSettings()
    wp = course_waypoints() if waypoints is None else np.asarray(waypoints, dtype=float)
    length = float(np.sum(np.linalg.norm(np.diff(wp, axis=0), axis=1)))
    timeout_s = timeout_s or 2.0 * length / speed + 10.0
    state = {"i": 1, "turns": [], "finished": False}
    gains = settings.gains

    def target(position, time):
        d = wp[state["i"]] - position[:2]
        return math.atan2(d[1], d[0])

    ctrl = HeadingController(target, gains, 0.02)

    def command(env, t):
        p = env.pos[0]
        if np.linalg.norm(wp[state["i"]] - p[:2]) < reach_radius:
            if state["i"] < len(wp) - 1:
                state["turns"].append(t)
                state["i"] += 1
            else:
                state["finished"] = True
        return (speed, 0.0, ctrl(p, float(env.headings()[0]), t))

    ro = rollout(policy, morphology, command, timeout_s, settings,
                 stop_fn=lambda: state["finished"])
    if not state["finished"]:
        ro.completed = False
    rep = _summarize("course", {"speed": speed, "turns": len(wp) - 2}, morphology, ro, settings)
    rep.events = {"turn_times": state["turns"],
                  "spikes": detect_spikes(rep.cot_series, state["turns"]),
                  "waypoints": wp.tolist()}
    return rep
