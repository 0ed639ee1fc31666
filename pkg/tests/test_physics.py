import math

import numpy as np
import pytest

from floresim.env import EnvConfig, WheelLeggedEnv
from floresim.morphology import build_flores
from floresim.physics import (PhysicsConfig, SimState, SimulationDiverged, compile_model,
                              linear_momentum, mass_matrix, mechanical_energy, pendulum_model,
                              step_dynamics)
from floresim.physics.aba import forward_dynamics

CFG = PhysicsConfig()


@pytest.fixture(scope="module")
def model():
    return compile_model(build_flores())


def random_state(rng, height=5.0):
    q = rng.normal(size=4)
    return SimState(np.array([0.0, 0.0, height]), q / np.linalg.norm(q), rng.normal(scale=0.5, size=16),
                    rng.normal(size=3), rng.normal(size=3), rng.normal(size=16))


def run(model, state, seconds, tau=None, terrain=None, cfg=CFG):
    tau = np.zeros(model.n_joints) if tau is None else tau
    for _ in range(int(round(seconds / cfg.substep_dt))):
        state, contacts = step_dynamics(model, state, tau, terrain, cfg)
    return state


def test_free_fall_velocity(model):
    s0 = SimState.at_rest(16, height=10.0, joint_positions=build_flores().default_angles)
    s1 = run(model, s0, 1.0)
    # closed form: v(t) = v0 - g t
    assert s1.base_linear_velocity[2] - s0.base_linear_velocity[2] == pytest.approx(-9.81, abs=1e-6)
    assert s1.time == pytest.approx(1.0)


def test_pendulum_period():
    L = 1.0
    pend = pendulum_model(L)
    state = SimState(np.zeros(3), np.array([1.0, 0, 0, 0]), np.array([0.05]), np.zeros(3), np.zeros(3),
                     np.zeros(1))
    crossings = []
    prev = state.joint_positions[0]
    for k in range(int(6.0 / CFG.substep_dt)):
        state, _ = step_dynamics(pend, state, np.zeros(1), None, CFG)
        cur = state.joint_positions[0]
        if prev > 0 >= cur:
            # linear interpolation of the downward zero crossing
            crossings.append((k + prev / (prev - cur)) * CFG.substep_dt)
        prev = cur
    period = np.diff(crossings).mean()
    analytic = 2 * math.pi * math.sqrt(L / 9.81)
    assert abs(period - analytic) / analytic < 0.02


def test_crba_matches_articulated_body(model):
    rng = np.random.default_rng(0)
    for _ in range(5):
        s = random_state(rng)
        tau = rng.normal(size=16)
        M, h = mass_matrix(model, s)
        assert np.allclose(M, M.T, atol=1e-12)
        assert np.linalg.eigvalsh(M).min() > 0
        acc = np.linalg.solve(M, np.concatenate([np.zeros(6), tau]) - h)
        a0, qdd = forward_dynamics(model, s, tau)
        np.testing.assert_allclose(acc[6:], qdd, atol=1e-8)
        np.testing.assert_allclose(acc[:6], a0, atol=1e-8)


def test_horizontal_momentum_drift(model):
    rng = np.random.default_rng(1)
    s = random_state(rng, height=50.0)
    p0 = linear_momentum(model, s)
    s1 = run(model, s, 1.0)
    p1 = linear_momentum(model, s1)
    assert np.abs(p1[:2] - p0[:2]).max() < 1e-6
    # vertical momentum changes only by the gravity impulse
    assert p1[2] - p0[2] == pytest.approx(-model.total_mass * 9.81 * 1.0, rel=1e-6)


def test_energy_drift(model):
    rng = np.random.default_rng(2)
    s = random_state(rng, height=50.0)
    s.joint_velocities *= 0.3
    e0 = mechanical_energy(model, s)
    s1 = run(model, s, 1.0)
    ke0 = e0 - mechanical_energy(model, SimState(s.base_position, s.base_orientation, s.joint_positions,
                                                  np.zeros(3), np.zeros(3), np.zeros(16)))
    assert abs(mechanical_energy(model, s1) - e0) < 0.01 * abs(ke0) + 0.01 * abs(e0)


def test_quaternion_stays_unit(model):
    s = run(model, random_state(np.random.default_rng(3)), 0.5)
    assert abs(np.linalg.norm(s.base_orientation) - 1.0) < 1e-9


def test_step_is_deterministic(model):
    s = random_state(np.random.default_rng(4))
    a = run(model, s.copy(), 0.1)
    b = run(model, s.copy(), 0.1)
    for x, y in zip(a.__dict__.values(), b.__dict__.values()):
        assert np.array_equal(x, y)


def test_bad_torques_rejected(model):
    s = SimState.at_rest(16, height=1.0)
    with pytest.raises(ValueError):
        step_dynamics(model, s, np.full(16, np.nan), None)
    with pytest.raises(ValueError):
        step_dynamics(model, s, np.zeros(3), None)


def test_divergence_carries_last_state(model):
    s = SimState.at_rest(16, height=1.0)
    s.base_linear_velocity[:] = 1e300
    with pytest.raises(SimulationDiverged) as err:
        run(model, s, 0.01)
    assert err.value.last_state.is_finite()


def test_substep_must_divide_control_period():
    with pytest.raises(ValueError):
        PhysicsConfig(substep_dt=0.003)
    with pytest.raises(ValueError):
        PhysicsConfig(integrator="verlet")
    assert PhysicsConfig().substeps_per_control == 8


@pytest.fixture(scope="module")
def settled():
    cfg = EnvConfig(randomize=False, randomize_pushes=False, standing_fraction=1.0)
    env = WheelLeggedEnv("flores", 1, cfg, seed=0)
    env.reset()
    env.set_commands(np.zeros(3))
    for _ in range(100):
        env.step(np.zeros((1, 16)))
    yield env
    env.close()


def test_static_normal_force(settled):
    env = settled
    model = env.model
    s = env.sim_state(0)
    total = []
    for _ in range(80):
        tau = env.kp[0] * (env.q_des[0] - s.joint_positions) - env.kd[0] * s.joint_velocities
        tau = np.clip(tau, -env.tau_limit[0], env.tau_limit[0])
        s, contacts = step_dynamics(model, s, tau, env.terrain, env.cfg.physics)
        total.append(sum(c.normal_force for c in contacts))
        for c in contacts:
            assert c.normal_force >= 0
    assert np.mean(total) == pytest.approx(model.total_mass * 9.81, rel=0.01)


def test_friction_bounded_by_cone(settled):
    env = settled
    s = env.sim_state(0)
    s.base_linear_velocity[:] = (0.5, 0.2, 0.0)
    s, contacts = step_dynamics(env.model, s, np.zeros(16), env.terrain, env.cfg.physics)
    assert contacts
    for c in contacts:
        mu = 1.0
        assert np.linalg.norm(c.tangential_force) <= mu * c.normal_force * (1 + 1e-6) + 1e-9
        assert np.linalg.norm(c.normal) == pytest.approx(1.0)


def test_no_force_when_separated(settled):
    env = settled
    s = env.sim_state(0)
    s.base_position[2] += 0.5
    _, contacts = step_dynamics(env.model, s, np.zeros(16), env.terrain, env.cfg.physics)
    assert contacts == []


def test_rk2_agrees_in_free_fall(model):
    s0 = SimState.at_rest(16, height=10.0, joint_positions=build_flores().default_angles)
    a = run(model, s0, 0.2)
    b = run(model, s0, 0.2, cfg=PhysicsConfig(integrator="rk2"))
    # semi-implicit Euler lags the exact fall by g*dt*T/2
    assert np.abs(a.base_position - b.base_position).max() < 5e-3
    assert b.base_position[2] == pytest.approx(10.0 - 0.5 * 9.81 * 0.2 ** 2, abs=1e-6)
