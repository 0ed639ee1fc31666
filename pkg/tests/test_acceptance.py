"""One test per acceptance criterion; each records a PASS/FAIL line for the terminal summary."""

import math
import os
import time

import numpy as np
import pytest
import torch

from conftest import ACCEPTANCE_LINES
from floresim.env import (DEFAULT_WEIGHTS, OBS_DIM, REWARD_TERMS, STATE_DIM, EnvConfig, RandomizationRanges,
                          RewardParams, WheelLeggedEnv, sample_randomization, split_state, tracking_only)
from floresim.eval import TelemetryRecord, cot, run_circle
from floresim.eval.telemetry import telemetry_csv
from floresim.learn import (TrainConfig, Trainer, evaluate_tracking, load_checkpoint,
                            policy_from_checkpoint, save_checkpoint)
from floresim.cli import replay_telemetry

import oracles
import test_learn
import test_physics
import test_reward


def verdict(number: int, name: str, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} {name} ({detail})"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


def test_1_dimension_contracts():
    env = WheelLeggedEnv("flores", 8, EnvConfig(), seed=0)
    rng = np.random.default_rng(0)
    states = env.reset()
    steps = 0
    ok = True
    try:
        for _ in range(130):
            states, _, _, _ = env.step(rng.normal(size=(8, 16)))
            obs, hist = split_state(states)
            ok &= states.shape == (8, STATE_DIM) and obs.shape == (8, OBS_DIM)
            ok &= hist.shape == (8, 12 * OBS_DIM)
            steps += 8
    finally:
        env.close()
    verdict(1, "dimension contracts", ok and steps >= 1000, f"{steps} episode steps, 53 / 689")


def test_2_reward_oracle():
    worst = 0.0
    branches = set()
    for mode in ("command", "error"):
        rng = np.random.default_rng(11)
        params = RewardParams(near_zero_mode=mode)
        n = 50
        prev, cur = test_reward.make_state(rng, n), test_reward.make_state(rng, n)
        cmd = rng.uniform(-1, 1, (n, 3))
        cmd[::3] *= 0.01
        tau = rng.normal(scale=10, size=(n, 16))
        acts = tuple(rng.normal(size=(n, 16)) for _ in range(3))
        r = test_reward.compute(cur, cmd, prev, tau, acts, params)
        for e in range(n):
            ref = oracles.reward_terms(test_reward.as_dict(prev, e), test_reward.as_dict(cur, e), cmd[e],
                                       tau[e], acts[0][e], acts[1][e], acts[2][e], test_reward.Q0,
                                       params, 0.02)
            branches.add(ref["tracking_lin_vel"] < 0)
            branches.add(ref["tracking_lin_vel"] > 0)
            for k, name in enumerate(REWARD_TERMS):
                worst = max(worst, abs(r.raw[e, k] - ref[name]),
                            abs(r.weighted[e, k] - DEFAULT_WEIGHTS[name] * ref[name]))
    # moving robot with zero command: the indicator must vanish and the static-pose term with it
    moving = test_reward.make_state(np.random.default_rng(1), 1)
    rr = test_reward.compute(moving, np.zeros((1, 3)))
    ok_indicator = rr.raw[0, REWARD_TERMS.index("static_pose")] == 0.0
    verdict(2, "reward oracle", worst <= 1e-9 and branches == {True, False} and ok_indicator,
            f"13 terms x 50 states x 2 modes, max abs err {worst:.1e}")


def test_3_cot_oracle():
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 60))
        w = [TelemetryRecord(0.02 * k, rng.normal(scale=10, size=16), rng.normal(scale=5, size=16),
                             np.zeros(3), rng.uniform(0.1, 2.0), 0.0, np.zeros(3), np.ones(4))
             for k in range(n)]
        m = rng.uniform(10, 40)
        ref = oracles.cot([r.torques for r in w], [r.joint_velocities for r in w], [r.speed for r in w], m)
        worst = max(worst, abs(cot(w, m) - ref) / abs(ref))
    clipped = True
    for _ in range(50):
        base = [TelemetryRecord(0.0, rng.uniform(0, 5, 16), rng.uniform(0, 5, 16), np.zeros(3), 1.0, 0.0,
                                np.zeros(3), np.ones(4)) for _ in range(10)]
        neg = TelemetryRecord(0.0, rng.uniform(0.1, 5, 16), -rng.uniform(0.1, 5, 16), np.zeros(3), 1.0,
                              0.0, np.zeros(3), np.ones(4))
        total = lambda win: cot(win, 1.0) * len(win)
        clipped &= total(base + [neg]) <= total(base) + 1e-12 and cot([neg], 1.0) == 0.0
    verdict(3, "cost-of-transport oracle", worst <= 1e-12 and clipped,
            f"100 windows, max rel err {worst:.1e}; negative-power records clipped")


def test_4_physics_suites():
    from floresim.morphology import build_flores
    from floresim.physics import SimState, compile_model, linear_momentum, step_dynamics

    model = compile_model(build_flores())
    cfg = test_physics.CFG
    s0 = SimState.at_rest(16, height=10.0, joint_positions=build_flores().default_angles)
    s1 = test_physics.run(model, s0, 1.0)
    dv_err = abs(s1.base_linear_velocity[2] - s0.base_linear_velocity[2] + 9.81)

    pend = test_physics.pendulum_model(1.0)
    state = SimState(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([0.05]), np.zeros(3), np.zeros(3),
                     np.zeros(1))
    crossings, prev = [], 0.05
    for k in range(int(6.0 / cfg.substep_dt)):
        state, _ = step_dynamics(pend, state, np.zeros(1), None, cfg)
        cur = state.joint_positions[0]
        if prev > 0 >= cur:
            crossings.append((k + prev / (prev - cur)) * cfg.substep_dt)
        prev = cur
    analytic = 2 * math.pi * math.sqrt(1.0 / 9.81)
    period_err = abs(np.diff(crossings).mean() - analytic) / analytic

    env_cfg = EnvConfig(randomize=False, randomize_pushes=False, standing_fraction=1.0)
    env = WheelLeggedEnv("flores", 1, env_cfg, seed=0)
    env.reset()
    env.set_commands(np.zeros(3))
    for _ in range(100):
        env.step(np.zeros((1, 16)))
    s = env.sim_state(0)
    total = []
    for _ in range(80):
        tau = np.clip(env.kp[0] * (env.q_des[0] - s.joint_positions) - env.kd[0] * s.joint_velocities,
                      -env.tau_limit[0], env.tau_limit[0])
        s, contacts = step_dynamics(env.model, s, tau, env.terrain, env.cfg.physics)
        total.append(sum(c.normal_force for c in contacts))
    env.close()
    normal_err = abs(np.mean(total) - model.total_mass * 9.81) / (model.total_mass * 9.81)

    s = test_physics.random_state(np.random.default_rng(1), height=50.0)
    p0 = linear_momentum(model, s)
    p1 = linear_momentum(model, test_physics.run(model, s, 1.0))
    drift = float(np.abs(p1[:2] - p0[:2]).max())

    ok = dv_err <= 1e-6 and period_err < 0.02 and normal_err < 0.01 and drift < 1e-6
    verdict(4, "physics suites", ok, f"free-fall dv err {dv_err:.1e}, period err {period_err:.2%}, "
            f"normal-force err {normal_err:.2%}, momentum drift {drift:.1e} kg m/s per s")


def test_5_gradient_checks():
    names = ("total", "actor", "value", "velocity", "latent")
    errors = {name: test_learn.gradient_error(name) for name in names}
    worst = max(errors.values())
    verdict(5, "gradient checks", worst < 1e-4,
            "float64, max rel err " + ", ".join(f"{k} {v:.1e}" for k, v in errors.items()))


def test_6_randomization_conformance():
    ranges = RandomizationRanges()
    rng = np.random.default_rng(0)
    n = 100_000
    draws = [sample_randomization(ranges, rng) for _ in range(n)]
    columns = {
        "payload_mass": np.array([d.payload_mass_add for d in draws]),
        "com_displacement": np.array([d.com_displacement for d in draws]).ravel(),
        "friction": np.array([d.friction_coefficient for d in draws]),
        "motor_strength": np.array([d.motor_strength_scale for d in draws]).ravel(),
        "kp_scale": np.array([d.kp_scale for d in draws]),
        "kd_scale": np.array([d.kd_scale for d in draws]),
        "initial_joint_position": np.array([d.initial_joint_position_scale for d in draws]).ravel(),
        "disturbance": np.array([d.disturbance_force for d in draws]).ravel(),
        "push_velocity": np.array([d.push_velocity_xy for d in draws]).ravel(),
        "observation_delay": np.array([d.observation_delay_steps for d in draws], dtype=float),
    }
    worst_name, worst = "", 0.0
    in_range = True
    for name, x in columns.items():
        lo, hi = getattr(ranges, name)
        in_range &= bool(x.min() >= lo and x.max() <= hi)
        mid = 0.5 * (lo + hi)
        # relative to the midpoint, or to the range width where the midpoint is zero
        dev = abs(x.mean() - mid) / (abs(mid) if mid != 0 else hi - lo)
        if dev > worst:
            worst_name, worst = name, dev
    verdict(6, "domain randomization", in_range and worst < 0.02,
            f"{n} draws in range; largest mean deviation {worst:.2%} ({worst_name})")


def test_9_determinism_and_serialization(tmp_path):
    torch.manual_seed(0)
    cfg = TrainConfig(num_envs=4, horizon=4, iterations=1, checkpoint_every=1, seed=9)
    res = Trainer("flores", cfg, tracking_only(), tmp_path / "run").run()
    path = res.checkpoints[-1]
    params, meta = load_checkpoint(path)
    exact = all(torch.equal(params[k], v) for k, v in res.policy.state_dict().items()
                if torch.is_floating_point(v))
    # the writer adds its own version and shape table
    user_meta = {k: v for k, v in meta.items() if k not in ("version", "shapes")}
    again = save_checkpoint(params, user_meta, tmp_path / "again.bin")
    exact &= again.read_bytes() == path.read_bytes()

    policy, meta = policy_from_checkpoint(path)
    a, _ = replay_telemetry(policy, meta, seed=4, steps=150, threads=1)
    b, _ = replay_telemetry(policy_from_checkpoint(path)[0], meta, seed=4, steps=150, threads=1)
    same = telemetry_csv(a).encode() == telemetry_csv(b).encode()
    verdict(9, "determinism and serialization", exact and same,
            "checkpoint round trip bit-exact, 150-tick replay byte-identical")


# ---------------------------------------------------------------------- long-running criteria

TOY_ITERATIONS = int(os.environ.get("FLORESIM_TOY_ITERS", "1500"))


@pytest.mark.slow
def test_7_learning_sanity(tmp_path):
    cfg = TrainConfig(num_envs=128, iterations=TOY_ITERATIONS, seed=0, minibatches=2,
                      checkpoint_every=100)
    env_cfg = tracking_only()
    start = time.perf_counter()
    res = Trainer("flores", cfg, env_cfg, tmp_path / "toy").run()
    wall = time.perf_counter() - start
    ev = evaluate_tracking(res.policy, "flores", env_cfg, episodes=50, seed=1)
    got = ev["tracking_lin_vel"]
    verdict(7, "learning sanity", got >= 0.8 * 8.0,
            f"{TOY_ITERATIONS} iterations x 128 envs, tracking {got:.3f} / 8.0, "
            f"completed {ev['completed_fraction']:.2f}, wall {wall / 60:.1f} min")


TREND_ITERATIONS = int(os.environ.get("FLORESIM_TREND_ITERS", "1500"))


@pytest.mark.slow
def test_8_trend_reproduction(tmp_path):
    wins = 0
    details = []
    for seed in range(5):
        cots = {}
        for morph in ("flores", "baseline"):
            cfg = TrainConfig(num_envs=128, iterations=TREND_ITERATIONS, seed=seed, minibatches=2)
            res = Trainer(morph, cfg, EnvConfig(), tmp_path / f"{morph}_{seed}").run()
            cots[morph] = [run_circle(res.policy, morph, r, 0.4).aggregate_cot for r in (0.5, 1.0)]
        f, b = cots["flores"], cots["baseline"]
        won = all(x is not None and y is not None and x < y for x, y in zip(f, b))
        wins += won
        details.append(f"seed {seed}: {f} vs {b}")
    verdict(8, "trend reproduction", wins >= 4, f"flores lower in {wins}/5 seeds; " + "; ".join(details))
