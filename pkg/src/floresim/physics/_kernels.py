"""Compiled kernels for floating-base tree dynamics with penalty contact.

Conventions: spatial vectors are ``[angular; linear]``. The base generalized
velocity is ``[omega_body, v_body]`` where ``v_body`` is the velocity of the base
origin expressed in base coordinates; joint ``k`` drives body ``k + 1``. The
parent->child transform of body ``i`` is stored as ``E[i]`` (child_R_parent)
and ``r[i]`` (child origin in parent coordinates). Small products are written
out by hand: numba routes ``@`` to BLAS, which dominates at these sizes.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SEMI_IMPLICIT = 0
RK2 = 1

POINT = 0
WHEEL = 1

_opts = dict(cache=True, nogil=True, fastmath=False)


@njit(**_opts)
def _cross(a, b, out):
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]


@njit(**_opts)
def _mv3(A, v, out):
    for i in range(3):
        out[i] = A[i, 0] * v[0] + A[i, 1] * v[1] + A[i, 2] * v[2]


@njit(**_opts)
def _mtv3(A, v, out):
    for i in range(3):
        out[i] = A[0, i] * v[0] + A[1, i] * v[1] + A[2, i] * v[2]


@njit(**_opts)
def _mm3(A, B, out):
    for i in range(3):
        for j in range(3):
            out[i, j] = A[i, 0] * B[0, j] + A[i, 1] * B[1, j] + A[i, 2] * B[2, j]


@njit(**_opts)
def quat_to_rot(q, R):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R[0, 0] = 1 - 2 * (y * y + z * z)
    R[0, 1] = 2 * (x * y - w * z)
    R[0, 2] = 2 * (x * z + w * y)
    R[1, 0] = 2 * (x * y + w * z)
    R[1, 1] = 1 - 2 * (x * x + z * z)
    R[1, 2] = 2 * (y * z - w * x)
    R[2, 0] = 2 * (x * z - w * y)
    R[2, 1] = 2 * (y * z + w * x)
    R[2, 2] = 1 - 2 * (x * x + y * y)


@njit(**_opts)
def _axis_rot(axis, th, R):
    c = math.cos(th)
    s = math.sin(th)
    C = 1.0 - c
    x, y, z = axis[0], axis[1], axis[2]
    R[0, 0] = c + x * x * C
    R[0, 1] = x * y * C - z * s
    R[0, 2] = x * z * C + y * s
    R[1, 0] = y * x * C + z * s
    R[1, 1] = c + y * y * C
    R[1, 2] = y * z * C - x * s
    R[2, 0] = z * x * C - y * s
    R[2, 1] = z * y * C + x * s
    R[2, 2] = c + z * z * C


@njit(**_opts)
def kinematics(parent, axis, R_tree, t_tree, pos, quat, qj, R, o, E):
    """World rotation ``R`` and origin ``o`` of every body, and child_R_parent ``E``."""
    nb = parent.shape[0]
    quat_to_rot(quat, R[0])
    o[0, 0] = pos[0]
    o[0, 1] = pos[1]
    o[0, 2] = pos[2]
    Rj = np.empty((3, 3))
    Rrel = np.empty((3, 3))
    tmp = np.empty(3)
    for i in range(1, nb):
        p = parent[i]
        _axis_rot(axis[i], qj[i - 1], Rj)
        _mm3(R_tree[i], Rj, Rrel)
        _mm3(R[p], Rrel, R[i])
        _mv3(R[p], t_tree[i], tmp)
        for k in range(3):
            o[i, k] = o[p, k] + tmp[k]
            for l in range(3):
                E[i, k, l] = Rrel[l, k]


@njit(**_opts)
def _x_motion(E, r, v, out):
    # X v = [E w ; E (l - r x w)]
    w0, w1, w2 = v[0], v[1], v[2]
    l0 = v[3] - (r[1] * w2 - r[2] * w1)
    l1 = v[4] - (r[2] * w0 - r[0] * w2)
    l2 = v[5] - (r[0] * w1 - r[1] * w0)
    for i in range(3):
        out[i] = E[i, 0] * w0 + E[i, 1] * w1 + E[i, 2] * w2
        out[3 + i] = E[i, 0] * l0 + E[i, 1] * l1 + E[i, 2] * l2


@njit(**_opts)
def _xt_force(E, r, f, out):
    # X^T f = [E^T n + r x (E^T f) ; E^T f]
    f0 = E[0, 0] * f[3] + E[1, 0] * f[4] + E[2, 0] * f[5]
    f1 = E[0, 1] * f[3] + E[1, 1] * f[4] + E[2, 1] * f[5]
    f2 = E[0, 2] * f[3] + E[1, 2] * f[4] + E[2, 2] * f[5]
    n0 = E[0, 0] * f[0] + E[1, 0] * f[1] + E[2, 0] * f[2]
    n1 = E[0, 1] * f[0] + E[1, 1] * f[1] + E[2, 1] * f[2]
    n2 = E[0, 2] * f[0] + E[1, 2] * f[1] + E[2, 2] * f[2]
    out[0] = n0 + r[1] * f2 - r[2] * f1
    out[1] = n1 + r[2] * f0 - r[0] * f2
    out[2] = n2 + r[0] * f1 - r[1] * f0
    out[3] = f0
    out[4] = f1
    out[5] = f2


@njit(**_opts)
def _x_matrix(E, r, X):
    for i in range(6):
        for j in range(6):
            X[i, j] = 0.0
    for i in range(3):
        for j in range(3):
            X[i, j] = E[i, j]
            X[i + 3, j + 3] = E[i, j]
        X[i + 3, 0] = -(E[i, 1] * r[2] - E[i, 2] * r[1])
        X[i + 3, 1] = -(E[i, 2] * r[0] - E[i, 0] * r[2])
        X[i + 3, 2] = -(E[i, 0] * r[1] - E[i, 1] * r[0])


@njit(**_opts)
def _spatial_inertia(m, c, Ic, I):
    # [[Ic + m cx cx^T, m cx], [m cx^T, m 1]]
    c0, c1, c2 = c[0], c[1], c[2]
    I[0, 0] = Ic[0, 0] + m * (c1 * c1 + c2 * c2)
    I[0, 1] = Ic[0, 1] - m * c0 * c1
    I[0, 2] = Ic[0, 2] - m * c0 * c2
    I[1, 0] = Ic[1, 0] - m * c1 * c0
    I[1, 1] = Ic[1, 1] + m * (c0 * c0 + c2 * c2)
    I[1, 2] = Ic[1, 2] - m * c1 * c2
    I[2, 0] = Ic[2, 0] - m * c2 * c0
    I[2, 1] = Ic[2, 1] - m * c2 * c1
    I[2, 2] = Ic[2, 2] + m * (c0 * c0 + c1 * c1)
    # m cx
    I[0, 3] = 0.0
    I[0, 4] = -m * c2
    I[0, 5] = m * c1
    I[1, 3] = m * c2
    I[1, 4] = 0.0
    I[1, 5] = -m * c0
    I[2, 3] = -m * c1
    I[2, 4] = m * c0
    I[2, 5] = 0.0
    for i in range(3):
        for j in range(3):
            I[3 + i, j] = I[j, 3 + i]
            I[3 + i, 3 + j] = m if i == j else 0.0


@njit(**_opts)
def _mv6(A, v, out):
    for i in range(6):
        acc = 0.0
        for k in range(6):
            acc += A[i, k] * v[k]
        out[i] = acc


@njit(**_opts)
def _crm_mul(v, u, out):
    # crm(v) @ u : [w x uw ; w x ul + vl x uw]
    w0, w1, w2, l0, l1, l2 = v[0], v[1], v[2], v[3], v[4], v[5]
    a0, a1, a2, b0, b1, b2 = u[0], u[1], u[2], u[3], u[4], u[5]
    out[0] = w1 * a2 - w2 * a1
    out[1] = w2 * a0 - w0 * a2
    out[2] = w0 * a1 - w1 * a0
    out[3] = w1 * b2 - w2 * b1 + l1 * a2 - l2 * a1
    out[4] = w2 * b0 - w0 * b2 + l2 * a0 - l0 * a2
    out[5] = w0 * b1 - w1 * b0 + l0 * a1 - l1 * a0


@njit(**_opts)
def _crf_mul(v, f, out):
    # crf(v) @ f : [w x fn + vl x ff ; w x ff]
    w0, w1, w2, l0, l1, l2 = v[0], v[1], v[2], v[3], v[4], v[5]
    n0, n1, n2, f0, f1, f2 = f[0], f[1], f[2], f[3], f[4], f[5]
    out[0] = w1 * n2 - w2 * n1 + l1 * f2 - l2 * f1
    out[1] = w2 * n0 - w0 * n2 + l2 * f0 - l0 * f2
    out[2] = w0 * n1 - w1 * n0 + l0 * f1 - l1 * f0
    out[3] = w1 * f2 - w2 * f1
    out[4] = w2 * f0 - w0 * f2
    out[5] = w0 * f1 - w1 * f0


@njit(**_opts)
def mass_matrix_and_bias(parent, axis, t_tree, mass, com, inertia, armature, fixed_base,
                         gravity, R, E, nu, M, h):
    """Composite-rigid-body mass matrix and Newton-Euler bias (gravity + velocity products)."""
    nb = parent.shape[0]
    Ib = np.empty((nb, 6, 6))
    for i in range(nb):
        _spatial_inertia(mass[i], com[i], inertia[i], Ib[i])

    v = np.zeros((nb, 6))
    a = np.zeros((nb, 6))
    f = np.zeros((nb, 6))
    t1 = np.empty(6)
    t2 = np.empty(6)
    if fixed_base == 0:
        for k in range(6):
            v[0, k] = nu[k]
    for k in range(3):
        a[0, 3 + k] = R[0, 2, k] * gravity
    _mv6(Ib[0], v[0], t1)
    _crf_mul(v[0], t1, t2)
    _mv6(Ib[0], a[0], f[0])
    for k in range(6):
        f[0, k] += t2[k]
    for i in range(1, nb):
        p = parent[i]
        qd = nu[5 + i]
        _x_motion(E[i], t_tree[i], v[p], v[i])
        for k in range(3):
            v[i, k] += axis[i, k] * qd
        _x_motion(E[i], t_tree[i], a[p], a[i])
        # crm(v_i) (S qd) with S = [axis; 0]
        w0, w1, w2 = v[i, 0], v[i, 1], v[i, 2]
        l0, l1, l2 = v[i, 3], v[i, 4], v[i, 5]
        s0, s1, s2 = axis[i, 0] * qd, axis[i, 1] * qd, axis[i, 2] * qd
        a[i, 0] += w1 * s2 - w2 * s1
        a[i, 1] += w2 * s0 - w0 * s2
        a[i, 2] += w0 * s1 - w1 * s0
        a[i, 3] += l1 * s2 - l2 * s1
        a[i, 4] += l2 * s0 - l0 * s2
        a[i, 5] += l0 * s1 - l1 * s0
        _mv6(Ib[i], v[i], t1)
        _crf_mul(v[i], t1, t2)
        _mv6(Ib[i], a[i], f[i])
        for k in range(6):
            f[i, k] += t2[k]
    for i in range(nb - 1, 0, -1):
        p = parent[i]
        h[5 + i] = axis[i, 0] * f[i, 0] + axis[i, 1] * f[i, 1] + axis[i, 2] * f[i, 2]
        _xt_force(E[i], t_tree[i], f[i], t1)
        for k in range(6):
            f[p, k] += t1[k]
    for k in range(6):
        h[k] = f[0, k]

    # composite inertias
    X = np.empty((6, 6))
    T = np.empty((6, 6))
    for i in range(nb - 1, 0, -1):
        p = parent[i]
        _x_matrix(E[i], t_tree[i], X)
        for r_ in range(6):
            for c_ in range(6):
                acc = 0.0
                for k in range(6):
                    acc += Ib[i, r_, k] * X[k, c_]
                T[r_, c_] = acc
        for r_ in range(6):
            for c_ in range(6):
                acc = 0.0
                for k in range(6):
                    acc += X[k, r_] * T[k, c_]
                Ib[p, r_, c_] += acc
    ndof = M.shape[0]
    for r_ in range(ndof):
        for c_ in range(ndof):
            M[r_, c_] = 0.0
    for r_ in range(6):
        for c_ in range(6):
            M[r_, c_] = Ib[0, r_, c_]
    F = np.empty(6)
    G = np.empty(6)
    for i in range(1, nb):
        di = 5 + i
        for k in range(6):
            F[k] = Ib[i, k, 0] * axis[i, 0] + Ib[i, k, 1] * axis[i, 1] + Ib[i, k, 2] * axis[i, 2]
        M[di, di] = axis[i, 0] * F[0] + axis[i, 1] * F[1] + axis[i, 2] * F[2] + armature[i - 1]
        j = i
        while True:
            _xt_force(E[j], t_tree[j], F, G)
            for k in range(6):
                F[k] = G[k]
            j = parent[j]
            if j == 0:
                for k in range(6):
                    M[k, di] = F[k]
                    M[di, k] = F[k]
                break
            dj = 5 + j
            val = axis[j, 0] * F[0] + axis[j, 1] * F[1] + axis[j, 2] * F[2]
            M[di, dj] = val
            M[dj, di] = val


@njit(**_opts)
def _chol_solve(A, b, off, x):
    """Solve the symmetric positive-definite block ``A[off:, off:] x = b[off:]``."""
    n = A.shape[0] - off
    L = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1):
            s = A[off + i, off + j]
            for k in range(j):
                s -= L[i, k] * L[j, k]
            if i == j:
                if s <= 0.0:
                    return False
                L[i, i] = math.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    y = np.empty(n)
    for i in range(n):
        s = b[off + i]
        for k in range(i):
            s -= L[i, k] * y[k]
        y[i] = s / L[i, i]
    for i in range(n - 1, -1, -1):
        s = y[i]
        for k in range(i + 1, n):
            s -= L[k, i] * x[off + k]
        x[off + i] = s / L[i, i]
    for i in range(off):
        x[i] = 0.0
    return True


@njit(**_opts)
def terrain_query(hf, fr, x0, y0, res, x, y, out):
    """Fill ``out`` with (height, nx, ny, nz, friction, clamped flag)."""
    nx = hf.shape[0]
    ny = hf.shape[1]
    fx = (x - x0) / res
    fy = (y - y0) / res
    clamped = 0.0
    if fx < 0.0 or fy < 0.0 or fx > nx - 1 or fy > ny - 1:
        clamped = 1.0
    fx = min(max(fx, 0.0), nx - 1.0)
    fy = min(max(fy, 0.0), ny - 1.0)
    i = min(int(math.floor(fx)), nx - 2)
    j = min(int(math.floor(fy)), ny - 2)
    tx = fx - i
    ty = fy - j
    h00 = hf[i, j]
    h10 = hf[i + 1, j]
    h01 = hf[i, j + 1]
    h11 = hf[i + 1, j + 1]
    out[0] = (1 - tx) * (1 - ty) * h00 + tx * (1 - ty) * h10 + (1 - tx) * ty * h01 + tx * ty * h11
    dhx = ((1 - ty) * (h10 - h00) + ty * (h11 - h01)) / res
    dhy = ((1 - tx) * (h01 - h00) + tx * (h11 - h10)) / res
    n = math.sqrt(dhx * dhx + dhy * dhy + 1.0)
    out[1] = -dhx / n
    out[2] = -dhy / n
    out[3] = 1.0 / n
    ci = min(int(fx + 0.5), nx - 1)
    cj = min(int(fy + 0.5), ny - 1)
    out[4] = fr[ci, cj]
    out[5] = clamped


@njit(**_opts)
def _point_jacobian(parent, axis, R, o, body, point, fixed_base, J, cols):
    """World point Jacobian; ``cols`` receives the nonzero column indices. Returns their count."""
    ndof = J.shape[1]
    for r_ in range(3):
        for k in range(ndof):
            J[r_, k] = 0.0
    d = np.empty(3)
    col = np.empty(3)
    aw = np.empty(3)
    n = 0
    if fixed_base == 0:
        for k in range(3):
            d[k] = point[k] - o[0, k]
        for k in range(3):
            aw[0] = R[0, 0, k]
            aw[1] = R[0, 1, k]
            aw[2] = R[0, 2, k]
            _cross(aw, d, col)
            J[0, k] = col[0]
            J[1, k] = col[1]
            J[2, k] = col[2]
            J[0, 3 + k] = R[0, 0, k]
            J[1, 3 + k] = R[0, 1, k]
            J[2, 3 + k] = R[0, 2, k]
        for k in range(6):
            cols[n] = k
            n += 1
    j = body
    while j > 0:
        _mv3(R[j], axis[j], aw)
        for k in range(3):
            d[k] = point[k] - o[j, k]
        _cross(aw, d, col)
        J[0, 5 + j] = col[0]
        J[1, 5 + j] = col[1]
        J[2, 5 + j] = col[2]
        cols[n] = 5 + j
        n += 1
        j = parent[j]
    return n


@njit(**_opts)
def solve_velocity(parent, axis, t_tree, mass, com, inertia, armature, fixed_base,
                   c_body, c_point, c_kind, c_radius, c_axis,
                   hf, fr, x0, y0, res, mu_override,
                   gravity, k_contact, c_contact, v_reg, implicit, dt,
                   R, o, E, nu, tau, f_base, n_base,
                   nu_new, c_pos, c_normal, c_fn, c_ft, c_active, total_f):
    """One velocity update ``nu -> nu_new`` over ``dt``.

    ``tau`` holds joint torques; ``f_base``/``n_base`` are a world force and torque
    applied at the base centre of mass. ``total_f`` receives the total external
    force (contacts + ``f_base``) in world coordinates. Returns a success flag.
    """
    ndof = nu.shape[0]
    nc = c_body.shape[0]
    M = np.empty((ndof, ndof))
    h = np.empty(ndof)
    mass_matrix_and_bias(parent, axis, t_tree, mass, com, inertia, armature, fixed_base, gravity,
                         R, E, nu, M, h)
    rhs = np.zeros(ndof)
    for k in range(ndof - 6):
        rhs[6 + k] = tau[k]
    for k in range(3):
        total_f[k] = 0.0
    tmp = np.empty(3)
    tmp2 = np.empty(3)

    if fixed_base == 0:
        _mv3(R[0], com[0], tmp)
        _cross(tmp, f_base, tmp2)
        for k in range(3):
            tmp2[k] += n_base[k]
        # base rows: body-frame torque about the origin, body-frame force
        _mtv3(R[0], tmp2, tmp)
        for k in range(3):
            rhs[k] += tmp[k]
        _mtv3(R[0], f_base, tmp)
        for k in range(3):
            rhs[3 + k] += tmp[k]
            total_f[k] += f_base[k]

    A = M.copy()
    J = np.empty((3, ndof))
    cols = np.empty(ndof, dtype=np.int64)
    q = np.empty(6)
    aw = np.empty(3)
    d = np.empty(3)
    nrm = np.empty(3)
    point = np.empty(3)
    centre = np.empty(3)
    vp = np.empty(3)
    vt = np.empty(3)
    f = np.empty(3)
    implicit_c = np.zeros(nc)
    c_jt = np.zeros((nc, 3, ndof))
    c_cols = np.zeros((nc, ndof), dtype=np.int64)
    c_ncol = np.zeros(nc, dtype=np.int64)
    for c in range(nc):
        b = c_body[c]
        c_active[c] = 0
        c_fn[c] = 0.0
        for k in range(3):
            c_ft[c, k] = 0.0
        if c_kind[c] == WHEEL:
            _mv3(R[b], c_point[c], tmp)
            for k in range(3):
                centre[k] = o[b, k] + tmp[k]
            _mv3(R[b], c_axis[c], aw)
            terrain_query(hf, fr, x0, y0, res, centre[0], centre[1], q)
            nrm[0] = q[1]
            nrm[1] = q[2]
            nrm[2] = q[3]
            dot = nrm[0] * aw[0] + nrm[1] * aw[1] + nrm[2] * aw[2]
            for k in range(3):
                d[k] = nrm[k] - dot * aw[k]
            dn = math.sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
            if dn < 1e-6:
                for k in range(3):
                    d[k] = nrm[k]
                dn = 1.0
            for k in range(3):
                point[k] = centre[k] - c_radius[c] * d[k] / dn
            terrain_query(hf, fr, x0, y0, res, point[0], point[1], q)
            pen = (q[0] - point[2]) * q[3]
        else:
            _mv3(R[b], c_point[c], tmp)
            for k in range(3):
                point[k] = o[b, k] + tmp[k]
            terrain_query(hf, fr, x0, y0, res, point[0], point[1], q)
            nrm[0] = q[1]
            nrm[1] = q[2]
            nrm[2] = q[3]
            pen = (q[0] - point[2]) * q[3] + c_radius[c]
        for k in range(3):
            c_pos[c, k] = point[k]
            c_normal[c, k] = nrm[k]
        if pen <= 0.0:
            continue
        ncol = _point_jacobian(parent, axis, R, o, b, point, fixed_base, J, cols)
        for r_ in range(3):
            acc = 0.0
            for m_ in range(ncol):
                acc += J[r_, cols[m_]] * nu[cols[m_]]
            vp[r_] = acc
        vn = vp[0] * nrm[0] + vp[1] * nrm[1] + vp[2] * nrm[2]
        fn = k_contact * pen - c_contact * vn
        if fn <= 0.0:
            continue
        c_active[c] = 1
        mu = q[4] if mu_override <= 0.0 else mu_override
        for k in range(3):
            vt[k] = vp[k] - vn * nrm[k]
        vtn = math.sqrt(vt[0] * vt[0] + vt[1] * vt[1] + vt[2] * vt[2])
        for k in range(3):
            f[k] = fn * nrm[k]
        c_fn[c] = fn
        if implicit and vtn <= v_reg:
            ct = mu * fn / v_reg
            implicit_c[c] = ct
            c_ncol[c] = ncol
            for m_ in range(ncol):
                k = cols[m_]
                c_cols[c, m_] = k
                jn = nrm[0] * J[0, k] + nrm[1] * J[1, k] + nrm[2] * J[2, k]
                for r_ in range(3):
                    c_jt[c, r_, k] = J[r_, k] - nrm[r_] * jn
            for m1 in range(ncol):
                i1 = cols[m1]
                for m2 in range(ncol):
                    i2 = cols[m2]
                    A[i1, i2] += dt * ct * (c_jt[c, 0, i1] * c_jt[c, 0, i2]
                                            + c_jt[c, 1, i1] * c_jt[c, 1, i2]
                                            + c_jt[c, 2, i1] * c_jt[c, 2, i2])
        elif vtn > 1e-12:
            scale = mu * fn / max(vtn, v_reg)
            for k in range(3):
                c_ft[c, k] = -scale * vt[k]
                f[k] += c_ft[c, k]
        for m_ in range(ncol):
            k = cols[m_]
            rhs[k] += J[0, k] * f[0] + J[1, k] * f[1] + J[2, k] * f[2]
        for k in range(3):
            total_f[k] += f[k]

    for i in range(ndof):
        acc = 0.0
        for k in range(ndof):
            acc += M[i, k] * nu[k]
        rhs[i] = acc + dt * (rhs[i] - h[i])
    off = 6 if fixed_base else 0
    ok = _chol_solve(A, rhs, off, nu_new)
    if not ok:
        return False
    for c in range(nc):
        ct = implicit_c[c]
        if ct > 0.0:
            for r_ in range(3):
                acc = 0.0
                for m_ in range(c_ncol[c]):
                    k = c_cols[c, m_]
                    acc += c_jt[c, r_, k] * nu_new[k]
                c_ft[c, r_] = -ct * acc
                total_f[r_] += c_ft[c, r_]
    return True


@njit(**_opts)
def linear_momentum(parent, axis, mass, com, R, o, vw, wb, qd):
    """World linear momentum of the whole tree."""
    nb = parent.shape[0]
    w = np.zeros((nb, 3))
    v = np.zeros((nb, 3))
    _mv3(R[0], wb, w[0])
    for k in range(3):
        v[0, k] = vw[k]
    P = np.zeros(3)
    tmp = np.empty(3)
    d = np.empty(3)
    rc = np.empty(3)
    aw = np.empty(3)
    for i in range(nb):
        if i > 0:
            p = parent[i]
            for k in range(3):
                d[k] = o[i, k] - o[p, k]
            _cross(w[p], d, tmp)
            _mv3(R[i], axis[i], aw)
            for k in range(3):
                v[i, k] = v[p, k] + tmp[k]
                w[i, k] = w[p, k] + aw[k] * qd[i - 1]
        _mv3(R[i], com[i], rc)
        _cross(w[i], rc, tmp)
        for k in range(3):
            P[k] += mass[i] * (v[i, k] + tmp[k])
    return P


@njit(**_opts)
def _quat_integrate(quat, w, dt):
    # quat <- quat * exp(w dt / 2), body-frame angular velocity
    wn = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    th = wn * dt
    if th > 1e-12:
        s = math.sin(0.5 * th) / wn
        dq0 = math.cos(0.5 * th)
        dq1 = w[0] * s
        dq2 = w[1] * s
        dq3 = w[2] * s
    else:
        dq0 = 1.0
        dq1 = 0.5 * w[0] * dt
        dq2 = 0.5 * w[1] * dt
        dq3 = 0.5 * w[2] * dt
    a0, a1, a2, a3 = quat[0], quat[1], quat[2], quat[3]
    quat[0] = a0 * dq0 - a1 * dq1 - a2 * dq2 - a3 * dq3
    quat[1] = a0 * dq1 + a1 * dq0 + a2 * dq3 - a3 * dq2
    quat[2] = a0 * dq2 - a1 * dq3 + a2 * dq0 + a3 * dq1
    quat[3] = a0 * dq3 + a1 * dq2 - a2 * dq1 + a3 * dq0
    n = math.sqrt(quat[0] ** 2 + quat[1] ** 2 + quat[2] ** 2 + quat[3] ** 2)
    for k in range(4):
        quat[k] /= n


@njit(**_opts)
def limit_torques(has_limits, lim_lo, lim_hi, k_limit, d_limit, qj, qd, out):
    for k in range(qj.shape[0]):
        out[k] = 0.0
        if has_limits[k]:
            if qj[k] < lim_lo[k]:
                out[k] = k_limit * (lim_lo[k] - qj[k]) - d_limit * min(qd[k], 0.0)
            elif qj[k] > lim_hi[k]:
                out[k] = k_limit * (lim_hi[k] - qj[k]) - d_limit * max(qd[k], 0.0)


@njit(**_opts)
def _state_derivative(parent, axis, R_tree, t_tree, mass, com, inertia, armature, fixed_base,
                      c_body, c_point, c_kind, c_radius, c_axis,
                      hf, fr, x0, y0, res, mu_override,
                      gravity, k_contact, c_contact, v_reg,
                      pos, quat, qj, vw, wb, qd, tau, f_base, n_base,
                      c_pos, c_normal, c_fn, c_ft, c_active, acc, aw):
    """Explicit time derivative used by the RK2 validation integrator."""
    nb = parent.shape[0]
    nj = nb - 1
    R = np.empty((nb, 3, 3))
    o = np.empty((nb, 3))
    E = np.zeros((nb, 3, 3))
    kinematics(parent, axis, R_tree, t_tree, pos, quat, qj, R, o, E)
    nu = np.zeros(6 + nj)
    tmp = np.empty(3)
    if fixed_base == 0:
        _mtv3(R[0], vw, tmp)
        for k in range(3):
            nu[k] = wb[k]
            nu[3 + k] = tmp[k]
    for k in range(nj):
        nu[6 + k] = qd[k]
    nu_new = np.zeros(6 + nj)
    total_f = np.zeros(3)
    ok = solve_velocity(parent, axis, t_tree, mass, com, inertia, armature, fixed_base,
                        c_body, c_point, c_kind, c_radius, c_axis, hf, fr, x0, y0, res,
                        mu_override, gravity, k_contact, c_contact, v_reg, False, 1.0,
                        R, o, E, nu, tau, f_base, n_base,
                        nu_new, c_pos, c_normal, c_fn, c_ft, c_active, total_f)
    for k in range(6 + nj):
        acc[k] = nu_new[k] - nu[k]
    for k in range(3):
        aw[k] = 0.0
    if fixed_base == 0:
        _cross(wb, nu[3:6], tmp)
        for k in range(3):
            tmp[k] += acc[3 + k]
        _mv3(R[0], tmp, aw)
    return ok


@njit(**_opts)
def substep(parent, axis, R_tree, t_tree, mass, com, inertia, armature, fixed_base,
            has_limits, lim_lo, lim_hi,
            c_body, c_point, c_kind, c_radius, c_axis,
            hf, fr, x0, y0, res, mu_override,
            gravity, k_contact, c_contact, v_reg, k_limit, d_limit, dt, integrator,
            pos, quat, qj, vw, wb, qd, tau, f_base, n_base,
            c_pos, c_normal, c_fn, c_ft, c_active):
    """Advance the state arrays in place by ``dt``. Returns False on a failed solve."""
    nb = parent.shape[0]
    nj = nb - 1
    ndof = 6 + nj
    tau_tot = np.empty(nj)
    limit_torques(has_limits, lim_lo, lim_hi, k_limit, d_limit, qj, qd, tau_tot)
    for k in range(nj):
        tau_tot[k] += tau[k]

    if integrator == RK2:
        p0 = pos.copy()
        q0 = quat.copy()
        j0 = qj.copy()
        v0 = vw.copy()
        w0 = wb.copy()
        d0 = qd.copy()
        acc1 = np.empty(ndof)
        acc2 = np.empty(ndof)
        aw1 = np.empty(3)
        aw2 = np.empty(3)
        ok1 = _state_derivative(
            parent, axis, R_tree, t_tree, mass, com, inertia, armature, fixed_base,
            c_body, c_point, c_kind, c_radius, c_axis, hf, fr, x0, y0, res, mu_override,
            gravity, k_contact, c_contact, v_reg, pos, quat, qj, vw, wb, qd, tau_tot,
            f_base, n_base, c_pos, c_normal, c_fn, c_ft, c_active, acc1, aw1)
        pos += dt * v0
        _quat_integrate(quat, w0, dt)
        qj += dt * d0
        vw += dt * aw1
        wb += dt * acc1[0:3]
        qd += dt * acc1[6:]
        limit_torques(has_limits, lim_lo, lim_hi, k_limit, d_limit, qj, qd, tau_tot)
        for k in range(nj):
            tau_tot[k] += tau[k]
        ok2 = _state_derivative(
            parent, axis, R_tree, t_tree, mass, com, inertia, armature, fixed_base,
            c_body, c_point, c_kind, c_radius, c_axis, hf, fr, x0, y0, res, mu_override,
            gravity, k_contact, c_contact, v_reg, pos, quat, qj, vw, wb, qd, tau_tot,
            f_base, n_base, c_pos, c_normal, c_fn, c_ft, c_active, acc2, aw2)
        wm = 0.5 * (w0 + wb)
        pos[:] = p0 + 0.5 * dt * (v0 + vw)
        quat[:] = q0
        _quat_integrate(quat, wm, dt)
        qj[:] = j0 + 0.5 * dt * (d0 + qd)
        vw[:] = v0 + 0.5 * dt * (aw1 + aw2)
        wb[:] = w0 + 0.5 * dt * (acc1[0:3] + acc2[0:3])
        qd[:] = d0 + 0.5 * dt * (acc1[6:] + acc2[6:])
        return ok1 and ok2

    R = np.empty((nb, 3, 3))
    o = np.empty((nb, 3))
    E = np.zeros((nb, 3, 3))
    kinematics(parent, axis, R_tree, t_tree, pos, quat, qj, R, o, E)
    nu = np.zeros(ndof)
    tmp = np.empty(3)
    if fixed_base == 0:
        _mtv3(R[0], vw, tmp)
        for k in range(3):
            nu[k] = wb[k]
            nu[3 + k] = tmp[k]
    for k in range(nj):
        nu[6 + k] = qd[k]
    nu_new = np.zeros(ndof)
    total_f = np.zeros(3)
    ok = solve_velocity(
        parent, axis, t_tree, mass, com, inertia, armature, fixed_base,
        c_body, c_point, c_kind, c_radius, c_axis, hf, fr, x0, y0, res, mu_override,
        gravity, k_contact, c_contact, v_reg, True, dt, R, o, E, nu, tau_tot, f_base, n_base,
        nu_new, c_pos, c_normal, c_fn, c_ft, c_active, total_f)
    if not ok:
        return False

    if fixed_base == 0:
        P0 = linear_momentum(parent, axis, mass, com, R, o, vw, wb, qd)
        # classical acceleration of the base origin: d(v_body)/dt + w x v_body
        _cross(nu[0:3], nu[3:6], tmp)
        for k in range(3):
            tmp[k] += (nu_new[3 + k] - nu[3 + k]) / dt
        acc_w = np.empty(3)
        _mv3(R[0], tmp, acc_w)
        for k in range(3):
            vw[k] += dt * acc_w[k]
            wb[k] = nu_new[k]
            pos[k] += dt * vw[k]
        _quat_integrate(quat, wb, dt)
    for k in range(nj):
        qd[k] = nu_new[6 + k]
        qj[k] += dt * qd[k]

    if fixed_base == 0:
        # Project the base velocity so linear momentum follows the applied impulse exactly.
        mtot = 0.0
        for i in range(nb):
            mtot += mass[i]
        kinematics(parent, axis, R_tree, t_tree, pos, quat, qj, R, o, E)
        P1 = linear_momentum(parent, axis, mass, com, R, o, vw, wb, qd)
        for k in range(3):
            target = P0[k] + dt * total_f[k]
            if k == 2:
                target -= dt * mtot * gravity
            vw[k] += (target - P1[k]) / mtot
    return True
