"""Independent straight-line reference implementations used by the test suites.

Written from the formulas, scalar by scalar, without calling library code.
"""

import math

LEG = [i for i in range(16) if i % 4 != 3]


def tracking(err, cmd_mag, threshold, sigma, mode="command"):
    near = cmd_mag < threshold if mode == "command" else err < threshold
    return -err if near else math.exp(-err / sigma)


def reward_terms(prev, cur, cmd, tau, a0, a1, a2, q_default, p, dt):
    """Per-term raw values for one robot; ``prev``/``cur`` are dicts of plain lists."""
    vx, vy, vz = cur["lin_vel"]
    wx, wy, wz = cur["ang_vel"]
    e_v = math.sqrt((cmd[0] - vx) ** 2 + (cmd[1] - vy) ** 2)
    e_w = abs(cmd[2] - wz)
    cmd_lin = math.sqrt(cmd[0] ** 2 + cmd[1] ** 2)
    standing = (cmd_lin < p.near_zero_lin and abs(cmd[2]) < p.near_zero_ang
                and math.sqrt(vx * vx + vy * vy) < p.near_zero_lin and abs(wz) < p.near_zero_ang)
    ind = 1.0 if standing else 0.0
    pose = 0.0
    for j in LEG:
        pose += (cur["joint_pos"][j] - q_default[j]) ** 2
    acc = 0.0
    power = 0.0
    tsq = 0.0
    rate = 0.0
    smooth = 0.0
    for j in range(16):
        acc += ((cur["joint_vel"][j] - prev["joint_vel"][j]) / dt) ** 2
        power += abs(tau[j]) * abs(cur["joint_vel"][j])
        tsq += tau[j] ** 2
        rate += (a1[j] - a0[j]) ** 2
        smooth += (a0[j] - 2 * a1[j] + a2[j]) ** 2
    gx, gy, _ = cur["gravity"]
    return {
        "tracking_lin_vel": tracking(e_v, cmd_lin, p.near_zero_lin, p.sigma1, p.near_zero_mode),
        "tracking_ang_vel": tracking(e_w, abs(cmd[2]), p.near_zero_ang, p.sigma2, p.near_zero_mode),
        "lin_vel_z": vz ** 2,
        "ang_vel_xy": wx ** 2 + wy ** 2,
        "orientation": gx ** 2 + gy ** 2,
        "base_height": math.exp(-abs(cur["height"] - p.target_height) / p.sigma3),
        "static_pose": ind * math.exp(-pose / p.sigma4),
        "dynamic_pose": (1 - ind) * math.exp(-pose / p.sigma5),
        "joint_acc": acc,
        "joint_power": power,
        "torques": tsq,
        "action_rate": rate,
        "smoothness": smooth,
    }


def cot(taus, qds, speeds, mass, g=9.81):
    """Mean positive joint power over the window divided by m g (mean speed)."""
    num = 0.0
    for tau, qd in zip(taus, qds):
        for t, w in zip(tau, qd):
            num += max(t * w, 0.0)
    num /= len(taus)
    return num / (mass * g * (sum(speeds) / len(speeds)))


def central_difference(f, params, eps=1e-6):
    """Numerical gradient of scalar ``f()`` w.r.t. each tensor in ``params`` (modified in place)."""
    import torch

    grads = []
    with torch.no_grad():
        for p in params:
            g = torch.zeros_like(p)
            flat, gflat = p.view(-1), g.view(-1)
            for i in range(flat.numel()):
                old = flat[i].item()
                flat[i] = old + eps
                up = float(f())
                flat[i] = old - eps
                down = float(f())
                flat[i] = old
                gflat[i] = (up - down) / (2 * eps)
            grads.append(g)
    return grads
