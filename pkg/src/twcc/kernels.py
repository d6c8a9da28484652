"""Scalar numeric kernels shared by the plant, the controllers and the learner.

All functions here take and return plain float64 arrays/scalars so they can
be compiled by numba (see :mod:`twcc._jit`).  The rigid-body state vector is

    x = [r(3), v(3), q(4), omega(3)]

with ``q = (w, x, y, z)`` the body-to-world unit quaternion, world frame
north-east-down (e3 points down) and body frame front-right-down.
"""
import math

import numpy as np

from ._jit import jit

# layout of the packed scalar parameter vector used by the loop kernels
P_MASS = 0
P_G = 1
P_J = 2  # 3 entries
P_RHO = 5
P_AREA = 6
P_FMAX = 7
P_VEPS = 8
P_DELTA = 9
P_KAPPA = 10
P_GAMMA0 = 11
P_GAMMA1 = 12
P_C1 = 13  # 3 entries
P_C2 = 16  # 3 entries
P_LAM = 19  # 3 entries
P_AINT = 22
P_SIZE = 23

FA_NONE = 0
FA_ORACLE = 1
FA_EXTERNAL = 2

SINGULAR_TOL = 1e-6


@jit
def quat_to_rot(q):
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@jit
def euler_to_quat(phi, theta, psi):
    cr, sr = math.cos(0.5 * phi), math.sin(0.5 * phi)
    cp, sp = math.cos(0.5 * theta), math.sin(0.5 * theta)
    cy, sy = math.cos(0.5 * psi), math.sin(0.5 * psi)
    q = np.empty(4)
    q[0] = cr * cp * cy + sr * sp * sy
    q[1] = sr * cp * cy - cr * sp * sy
    q[2] = cr * sp * cy + sr * cp * sy
    q[3] = cr * cp * sy - sr * sp * cy
    return q


@jit
def rot_to_euler(R):
    """ZYX (yaw-pitch-roll) angles of a body-to-world rotation."""
    s = -R[2, 0]
    if s > 1.0:
        s = 1.0
    elif s < -1.0:
        s = -1.0
    phi = math.atan2(R[2, 1], R[2, 2])
    theta = math.asin(s)
    psi = math.atan2(R[1, 0], R[0, 0])
    return phi, theta, psi


@jit
def normal_from_quat(q):
    """Third column of R_wb: the body z axis expressed in the world frame."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    n = np.empty(3)
    n[0] = 2.0 * (x * z + w * y)
    n[1] = 2.0 * (y * z - w * x)
    n[2] = 1.0 - 2.0 * (x * x + y * y)
    return n


@jit
def flat_plate(v, n, rho, area, v_eps):
    """-rho sin(alpha) A |v|^2 n, zero below the low-speed cutoff."""
    f = np.zeros(3)
    speed = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if speed <= v_eps:
        return f
    c = (v[0] * n[0] + v[1] * n[1] + v[2] * n[2]) / speed
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    k = -rho * c * area * (speed * speed)
    f[0] = k * n[0]
    f[1] = k * n[1]
    f[2] = k * n[2]
    return f


@jit
def reconstruct(alpha_w, gamma, v, n, rho, area, v_eps):
    """Wing force from an AOA correction and a scale factor.

    The direction n_f solves [n_v; n; n_v x n] n_f = [sin a_est, cos a_w, 0];
    n_f lies in span{n_v, n}, so the solve is done in that 2-D basis.
    Returns (force, status) with status 0 ok, 1 low speed, 2 singular
    geometry (flat-plate direction used).
    """
    f = np.zeros(3)
    speed = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if speed <= v_eps:
        return f, 1
    nv0, nv1, nv2 = v[0] / speed, v[1] / speed, v[2] / speed
    # same operation order as flat_plate, so a zero correction reproduces it
    c = (v[0] * n[0] + v[1] * n[1] + v[2] * n[2]) / speed
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    alpha = math.asin(c)
    raw = alpha + alpha_w
    if raw > 0.5 * math.pi:
        s1 = 1.0
    elif raw < -0.5 * math.pi:
        s1 = -1.0
    else:
        # sin(alpha + alpha_w) expanded so alpha_w = 0 reproduces c exactly
        s1 = c * math.cos(alpha_w) + math.sqrt(max(0.0, 1.0 - c * c)) * math.sin(alpha_w)
    s2 = math.cos(alpha_w)
    mag = rho * (speed * speed) * area * gamma
    u0 = nv1 * n[2] - nv2 * n[1]
    u1 = nv2 * n[0] - nv0 * n[2]
    u2 = nv0 * n[1] - nv1 * n[0]
    if math.sqrt(u0 * u0 + u1 * u1 + u2 * u2) < SINGULAR_TOL:
        sgn = 1.0 if alpha > 0.0 else (-1.0 if alpha < 0.0 else 0.0)
        k = -sgn * abs(s1) * mag
        f[0] = k * n[0]
        f[1] = k * n[1]
        f[2] = k * n[2]
        return f, 2
    det = 1.0 - c * c
    a = (s1 - c * s2) / det
    b = (s2 - c * s1) / det
    m0 = a * nv0 + b * n[0]
    m1 = a * nv1 + b * n[1]
    m2 = a * nv2 + b * n[2]
    norm = math.sqrt(m0 * m0 + m1 * m1 + m2 * m2)
    k = -s1 * mag / norm
    f[0] = k * m0
    f[1] = k * m1
    f[2] = k * m2
    return f, 0


@jit
def oracle_force(v, n, rho, area, v_eps, delta, kappa, gamma0, gamma1):
    """Ground-truth deformable-wing force: perturbed AOA, speed-dependent scale."""
    speed = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if speed <= v_eps:
        return np.zeros(3)
    c = (v[0] * n[0] + v[1] * n[1] + v[2] * n[2]) / speed
    if c > 1.0:
        c = 1.0
    elif c < -1.0:
        c = -1.0
    alpha = math.asin(c)
    alpha_w = delta * math.tanh(kappa * alpha)
    gamma = gamma0 + gamma1 * speed / (1.0 + speed)
    f, _ = reconstruct(alpha_w, gamma, v, n, rho, area, v_eps)
    return f


@jit
def derivatives(x, thrust, tau, fa, p):
    m = p[P_MASS]
    g = p[P_G]
    q = x[6:10]
    w = x[10:13]
    n = normal_from_quat(q)
    dx = np.empty(13)
    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]
    # R_wb [0, 0, -U] = -U n
    dx[3] = (-thrust * n[0] + fa[0]) / m
    dx[4] = (-thrust * n[1] + fa[1]) / m
    dx[5] = g + (-thrust * n[2] + fa[2]) / m
    qw, qx, qy, qz = q[0], q[1], q[2], q[3]
    p_, q_, r_ = w[0], w[1], w[2]
    dx[6] = 0.5 * (-qx * p_ - qy * q_ - qz * r_)
    dx[7] = 0.5 * (qw * p_ + qy * r_ - qz * q_)
    dx[8] = 0.5 * (qw * q_ + qz * p_ - qx * r_)
    dx[9] = 0.5 * (qw * r_ + qx * q_ - qy * p_)
    jx, jy, jz = p[P_J], p[P_J + 1], p[P_J + 2]
    # J^-1 (-w x Jw + tau)
    dx[10] = (-(q_ * jz * r_ - r_ * jy * q_) + tau[0]) / jx
    dx[11] = (-(r_ * jx * p_ - p_ * jz * r_) + tau[1]) / jy
    dx[12] = (-(p_ * jy * q_ - q_ * jx * p_) + tau[2]) / jz
    return dx


@jit
def rk4_step(x, thrust, tau, fa, dt, p):
    k1 = derivatives(x, thrust, tau, fa, p)
    k2 = derivatives(x + 0.5 * dt * k1, thrust, tau, fa, p)
    k3 = derivatives(x + 0.5 * dt * k2, thrust, tau, fa, p)
    k4 = derivatives(x + dt * k3, thrust, tau, fa, p)
    out = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    qn = math.sqrt(out[6] ** 2 + out[7] ** 2 + out[8] ** 2 + out[9] ** 2)
    out[6] /= qn
    out[7] /= qn
    out[8] /= qn
    out[9] /= qn
    return out


@jit
def allocate(U, T_inv, f_max):
    """Per-motor thrusts F = T^-1 U clamped to [0, f_max]; returns (F, saturated)."""
    F = T_inv @ U
    sat = False
    for i in range(4):
        if F[i] < 0.0:
            F[i] = 0.0
            sat = True
        elif F[i] > f_max:
            F[i] = f_max
            sat = True
    return F, sat


@jit
def wrap_angle(a):
    return (a + math.pi) % (2.0 * math.pi) - math.pi


@jit
def backstepping(euler, omega, target, chi, p, dt):
    """Per-axis integral backstepping torques; updates ``chi`` in place.

    The integral is read before it is advanced, so the torque at tick k uses
    the accumulated error up to tick k-1.
    """
    tau = np.empty(3)
    jx, jy, jz = p[P_J], p[P_J + 1], p[P_J + 2]
    wx, wy, wz = omega[0], omega[1], omega[2]
    gyro0 = wy * jz * wz - wz * jy * wy
    gyro1 = wz * jx * wx - wx * jz * wz
    gyro2 = wx * jy * wy - wy * jx * wx
    gyro = (gyro0, gyro1, gyro2)
    lim = p[P_AINT]
    for i in range(3):
        e1 = target[i] - euler[i]
        if i == 2:
            e1 = wrap_angle(e1)
        c1 = p[P_C1 + i]
        c2 = p[P_C2 + i]
        lam = p[P_LAM + i]
        e2 = c1 * e1 + lam * chi[i] - omega[i]
        acc = e1 * (1.0 - c1 * c1 + lam) + e2 * (c1 + c2) - c1 * lam * chi[i]
        tau[i] = p[P_J + i] * acc + gyro[i]
        c = chi[i] + e1 * dt
        if c > lim:
            c = lim
        elif c < -lim:
            c = -lim
        chi[i] = c
    return tau


@jit
def advance_interval(x, target, thrust_cmd, chi, p, T, T_inv, fa_mode, fa_ext, n_att, n_sub, dt):
    """Run one supervisory interval: ``n_att`` attitude ticks, each holding its
    torques for ``n_sub`` plant RK4 steps of length ``dt``.

    Returns the final state plus quantities sampled at the interval start
    (translational acceleration, aero force, applied total thrust), the
    positions at every attitude tick (for swept collision checks) and the
    number of attitude ticks in which motor saturation clipped the mix.
    """
    track = np.empty((n_att + 1, 3))
    acc0 = np.zeros(3)
    fa0 = np.zeros(3)
    thrust0 = 0.0
    sat_count = 0
    U = np.empty(4)
    for i in range(n_att):
        track[i, 0] = x[0]
        track[i, 1] = x[1]
        track[i, 2] = x[2]
        R = quat_to_rot(x[6:10])
        phi, theta, psi = rot_to_euler(R)
        euler = np.array([phi, theta, psi])
        tau_cmd = backstepping(euler, x[10:13], target, chi, p, n_sub * dt)
        U[0] = thrust_cmd
        U[1] = tau_cmd[0]
        U[2] = tau_cmd[1]
        U[3] = tau_cmd[2]
        F, sat = allocate(U, T_inv, p[P_FMAX])
        if sat:
            sat_count += 1
        applied = T @ F
        thrust = applied[0]
        tau = applied[1:4].copy()
        for k in range(n_sub):
            if fa_mode == FA_ORACLE:
                n = normal_from_quat(x[6:10])
                fa = oracle_force(x[3:6], n, p[P_RHO], p[P_AREA], p[P_VEPS],
                                  p[P_DELTA], p[P_KAPPA], p[P_GAMMA0], p[P_GAMMA1])
            elif fa_mode == FA_EXTERNAL:
                fa = fa_ext.copy()
            else:
                fa = np.zeros(3)
            if i == 0 and k == 0:
                d = derivatives(x, thrust, tau, fa, p)
                acc0[0] = d[3]
                acc0[1] = d[4]
                acc0[2] = d[5]
                fa0[:] = fa
                thrust0 = thrust
            x = rk4_step(x, thrust, tau, fa, dt, p)
    track[n_att, 0] = x[0]
    track[n_att, 1] = x[1]
    track[n_att, 2] = x[2]
    return x, acc0, fa0, thrust0, track, sat_count
