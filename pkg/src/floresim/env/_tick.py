"""Batched control tick: PD / wheel-velocity servo applied at every physics substep."""

from __future__ import annotations

import numpy as np
from numba import njit

from ..physics import _kernels as K


@njit(cache=True, nogil=True)
def servo_torque(wheel, q_des, w_des, q, qd, kp, kd, limit, strength):
    """PD position servo for leg joints, velocity servo for wheels; scaled then clamped."""
    if wheel:
        t = kd * (w_des - qd)
    else:
        t = kp * (q_des - q) - kd * qd
    t *= strength
    lim = limit * strength
    return min(max(t, -lim), lim)


@njit(cache=True, nogil=True)
def control_tick(parent, axis, R_tree, t_tree, inertia, armature, has_limits, lim_lo, lim_hi,
                 c_body, c_point, c_kind, c_radius, c_axis, c_is_base,
                 hf, fr, x0, y0, res,
                 gravity, k_contact, c_contact, v_reg, k_limit, d_limit, dt, n_sub,
                 mass, com, mu, is_wheel, q_des, w_des, kp, kd, tau_limit, strength, f_base,
                 active, pos, quat, qj, vw, wb, qd,
                 out_tau, out_wheel_contact, out_base_contact, out_ok, e_lo, e_hi):
    """Advance envs ``e_lo:e_hi`` by one control tick of ``n_sub`` substeps."""
    nj = qj.shape[1]
    nc = c_body.shape[0]
    for e in range(e_lo, e_hi):
        if not active[e]:
            continue
        tau = np.zeros(nj)
        n_base = np.zeros(3)
        c_pos = np.zeros((nc, 3))
        c_normal = np.zeros((nc, 3))
        c_fn = np.zeros(nc)
        c_ft = np.zeros((nc, 3))
        c_active = np.zeros(nc, dtype=np.int64)
        base_hit = 0
        wheel_hit = np.zeros(4, dtype=np.int64)
        ok = True
        for s in range(n_sub):
            for k in range(nj):
                tau[k] = servo_torque(is_wheel[k], q_des[e, k], w_des[e, k], qj[e, k], qd[e, k],
                                      kp[e, k], kd[e, k], tau_limit[e, k], strength[e, k])
            ok = K.substep(parent, axis, R_tree, t_tree, mass[e], com[e], inertia, armature, 0,
                           has_limits, lim_lo, lim_hi, c_body, c_point, c_kind, c_radius, c_axis,
                           hf, fr, x0, y0, res, mu[e], gravity, k_contact, c_contact, v_reg,
                           k_limit, d_limit, dt, K.SEMI_IMPLICIT,
                           pos[e], quat[e], qj[e], vw[e], wb[e], qd[e], tau, f_base[e], n_base,
                           c_pos, c_normal, c_fn, c_ft, c_active)
            if not ok:
                break
            for c in range(nc):
                if c_active[c] and c_is_base[c]:
                    base_hit = 1
        wi = 0
        for c in range(nc):
            if c_kind[c] == K.WHEEL:
                if wi < 4:
                    wheel_hit[wi] = c_active[c]
                wi += 1
        for k in range(nj):
            out_tau[e, k] = tau[k]
        for w in range(4):
            out_wheel_contact[e, w] = wheel_hit[w]
        out_base_contact[e] = base_hit
        finite = ok
        for k in range(3):
            if not np.isfinite(pos[e, k]) or not np.isfinite(vw[e, k]) or not np.isfinite(wb[e, k]):
                finite = False
        for k in range(nj):
            if not np.isfinite(qj[e, k]) or not np.isfinite(qd[e, k]):
                finite = False
        out_ok[e] = finite


@njit(cache=True, nogil=True)
def terrain_heights(hf, fr, x0, y0, res, xy, out):
    q = np.empty(6)
    for e in range(xy.shape[0]):
        K.terrain_query(hf, fr, x0, y0, res, xy[e, 0], xy[e, 1], q)
        out[e] = q[0]
