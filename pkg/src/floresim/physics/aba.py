"""Articulated-body forward dynamics in plain numpy.

Slow, allocation-heavy and independent of the compiled kernels; used to
cross-check the composite-rigid-body solver.
"""

from __future__ import annotations

import numpy as np


def skew(v):
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def rot_about(axis, angle):
    a = np.asarray(axis, dtype=float)
    K = skew(a)
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def quat_matrix(q):
    w, x, y, z = q
    return np.array([
        [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
    ]) / (w * w + x * x + y * y + z * z)


def motion_transform(E, r):
    X = np.zeros((6, 6))
    X[:3, :3] = E
    X[3:, 3:] = E
    X[3:, :3] = -E @ skew(r)
    return X


def crm(v):
    out = np.zeros((6, 6))
    out[:3, :3] = skew(v[:3])
    out[3:, :3] = skew(v[3:])
    out[3:, 3:] = skew(v[:3])
    return out


def crf(v):
    return -crm(v).T


def rigid_inertia(m, c, Ic):
    C = skew(c)
    out = np.zeros((6, 6))
    out[:3, :3] = Ic + m * C @ C.T
    out[:3, 3:] = m * C
    out[3:, :3] = m * C.T
    out[3:, 3:] = m * np.eye(3)
    return out


def forward_dynamics(model, state, tau, gravity=9.81):
    """Return (base spatial acceleration in base coordinates, joint accelerations).

    Uses the real (non-fictitious) base acceleration; gravity enters as a body force.
    Armature is added to each joint's articulated inertia ``D``.
    """
    nb = model.parent.shape[0]
    R0 = quat_matrix(state.base_orientation)
    Rw = [R0]
    X = [None] * nb
    S = [None] * nb
    for i in range(1, nb):
        Rrel = model.R_tree[i] @ rot_about(model.axis[i], state.joint_positions[i - 1])
        Rw.append(Rw[model.parent[i]] @ Rrel)
        X[i] = motion_transform(Rrel.T, model.t_tree[i])
        S[i] = np.concatenate([model.axis[i], np.zeros(3)])

    if model.fixed_base:
        v0 = np.zeros(6)
    else:
        v0 = np.concatenate([state.base_angular_velocity, R0.T @ state.base_linear_velocity])
    qd = state.joint_velocities
    v = [v0] + [None] * (nb - 1)
    c = [np.zeros(6)] * nb
    IA = []
    pA = []
    g_world = np.array([0.0, 0.0, -gravity])
    for i in range(nb):
        I = rigid_inertia(model.mass[i], model.com[i], model.inertia[i])
        if i > 0:
            v[i] = X[i] @ v[model.parent[i]] + S[i] * qd[i - 1]
            c[i] = crm(v[i]) @ (S[i] * qd[i - 1])
        g_body = np.concatenate([np.zeros(3), Rw[i].T @ g_world])
        IA.append(I.copy())
        pA.append(crf(v[i]) @ I @ v[i] - I @ g_body)

    U = [None] * nb
    D = np.zeros(nb)
    u = np.zeros(nb)
    for i in range(nb - 1, 0, -1):
        U[i] = IA[i] @ S[i]
        D[i] = S[i] @ U[i] + model.armature[i - 1]
        u[i] = tau[i - 1] - S[i] @ pA[i]
        Ia = IA[i] - np.outer(U[i], U[i]) / D[i]
        pa = pA[i] + Ia @ c[i] + U[i] * u[i] / D[i]
        p = model.parent[i]
        IA[p] = IA[p] + X[i].T @ Ia @ X[i]
        pA[p] = pA[p] + X[i].T @ pa

    if model.fixed_base:
        a0 = np.zeros(6)
    else:
        a0 = -np.linalg.solve(IA[0], pA[0])
    a = [a0] + [None] * (nb - 1)
    qdd = np.zeros(nb - 1)
    for i in range(1, nb):
        a_i = X[i] @ a[model.parent[i]] + c[i]
        qdd[i - 1] = (u[i] - U[i] @ a_i) / D[i]
        a[i] = a_i + S[i] * qdd[i - 1]
    if model.fixed_base:
        # Fixed base: gravity was applied as a body force, base acceleration is zero.
        return np.zeros(6), qdd
    return a0, qdd
