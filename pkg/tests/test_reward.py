import dataclasses

import numpy as np
import pytest

from floresim.env import (DEFAULT_WEIGHTS, REWARD_TERMS, RewardParams, RewardState, compute_reward,
                          standing_indicator)
from floresim.morphology import build_flores

import oracles

Q0 = build_flores().default_angles


def make_state(rng, n, moving=True):
    scale = 1.0 if moving else 0.01
    return RewardState(
        lin_vel=rng.normal(scale=scale, size=(n, 3)), ang_vel=rng.normal(scale=scale, size=(n, 3)),
        gravity=rng.normal(scale=0.1, size=(n, 3)), height=rng.uniform(0.2, 0.5, n),
        joint_pos=Q0 + rng.normal(scale=0.3, size=(n, 16)), joint_vel=rng.normal(size=(n, 16)))


def as_dict(s, e):
    return {k: list(getattr(s, k)[e]) if getattr(s, k).ndim > 1 else float(getattr(s, k)[e])
            for k in ("lin_vel", "ang_vel", "gravity", "height", "joint_pos", "joint_vel")}


def zero_state(n=1):
    return RewardState(np.zeros((n, 3)), np.zeros((n, 3)), np.tile([0, 0, -1.0], (n, 1)),
                       np.full(n, 0.4), np.tile(Q0, (n, 1)), np.zeros((n, 16)))


def compute(cur, cmd, prev=None, tau=None, acts=None, params=None):
    n = cmd.shape[0]
    prev = prev or zero_state(n)
    tau = np.zeros((n, 16)) if tau is None else tau
    acts = acts or (np.zeros((n, 16)),) * 3
    return compute_reward(prev, cur, cmd, tau, acts, Q0, params or RewardParams(), 0.02)


@pytest.mark.parametrize("mode", ["command", "error"])
def test_matches_oracle(mode):
    rng = np.random.default_rng(11)
    params = RewardParams(near_zero_mode=mode)
    n = 50
    prev, cur = make_state(rng, n), make_state(rng, n)
    cmd = rng.uniform(-1, 1, (n, 3))
    cmd[::3] *= 0.01  # standing commands
    tau = rng.normal(scale=10, size=(n, 16))
    acts = tuple(rng.normal(size=(n, 16)) for _ in range(3))
    r = compute(cur, cmd, prev, tau, acts, params)
    for e in range(n):
        ref = oracles.reward_terms(as_dict(prev, e), as_dict(cur, e), cmd[e], tau[e], acts[0][e],
                                   acts[1][e], acts[2][e], Q0, params, 0.02)
        for k, name in enumerate(REWARD_TERMS):
            assert r.raw[e, k] == pytest.approx(ref[name], abs=1e-9)
            assert r.weighted[e, k] == pytest.approx(DEFAULT_WEIGHTS[name] * ref[name], abs=1e-9)


def test_total_is_weighted_sum():
    rng = np.random.default_rng(0)
    r = compute(make_state(rng, 20), rng.uniform(-1, 1, (20, 3)), tau=rng.normal(size=(20, 16)))
    np.testing.assert_allclose(r.total, r.weighted.sum(axis=1), rtol=1e-12)


def test_zero_error_tracking_gives_full_weight():
    cur = zero_state()
    cur.lin_vel[0, :2] = (1.0, 0.2)
    r = compute(cur, np.array([[1.0, 0.2, 0.0]]))
    assert r.term("tracking_lin_vel")[2][0] == pytest.approx(8.0)


def test_static_pose_zero_in_motion():
    cur = zero_state()
    cur.lin_vel[0, 0] = 0.8
    r = compute(cur, np.array([[0.8, 0.0, 0.0]]))
    assert r.term("static_pose")[2][0] == 0.0
    assert r.term("dynamic_pose")[2][0] == pytest.approx(1.0)


def test_static_pose_when_standing():
    r = compute(zero_state(), np.zeros((1, 3)))
    assert r.term("static_pose")[2][0] == pytest.approx(5.0)
    assert r.term("dynamic_pose")[2][0] == 0.0


def test_vertical_velocity_term():
    cur = zero_state()
    cur.lin_vel[0, 2] = 0.5
    assert compute(cur, np.ones((1, 3))).term("lin_vel_z")[2][0] == pytest.approx(-0.025)


def test_constant_actions_no_rate_penalty():
    a = np.full((1, 16), 0.3)
    r = compute(zero_state(), np.ones((1, 3)), acts=(a, a, a))
    assert r.term("action_rate")[0][0] == 0.0
    assert r.term("smoothness")[0][0] == 0.0


def test_near_zero_branch_is_linear_penalty():
    cur = zero_state()
    cur.lin_vel[0, :2] = (0.3, 0.4)
    r = compute(cur, np.zeros((1, 3)))
    assert r.term("tracking_lin_vel")[0][0] == pytest.approx(-0.5)


def test_indicator_needs_still_body_and_command():
    p = RewardParams()
    still = np.zeros((1, 3))
    assert standing_indicator(still, still, still, p)[0] == 1.0
    assert standing_indicator(np.array([[0.5, 0, 0]]), still, still, p)[0] == 0.0
    assert standing_indicator(still, np.array([[0.5, 0, 0]]), still, p)[0] == 0.0


def test_custom_weights():
    p = RewardParams(weights={"torques": -1.0})
    p.validate()
    assert p.weights["tracking_lin_vel"] == 0.0
    tau = np.full((1, 16), 2.0)
    r = compute(zero_state(), np.ones((1, 3)), tau=tau, params=p)
    assert r.total[0] == pytest.approx(-64.0)


def test_bad_params():
    with pytest.raises(ValueError):
        dataclasses.replace(RewardParams(), sigma3=0.0).validate()
    with pytest.raises(ValueError):
        RewardParams(weights={"fly": 1.0}).validate()
