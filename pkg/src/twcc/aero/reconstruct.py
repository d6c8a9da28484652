"""Wing force from (alpha_w, gamma) via the virtual-plane construction."""
from __future__ import annotations

import numpy as np

from .. import kernels as K
from ..config import DroneParams
from ..plant import DroneState, body_normal


def reconstruct_force(alpha_w: float, gamma: float, state: DroneState, params: DroneParams) -> np.ndarray:
    """Estimated wing force (N, world frame) for a spread wing.

    alpha_est = clip(alpha + alpha_w, +-pi/2) sets the magnitude
    sin|alpha_est| rho |v|^2 A gamma; the direction is the unit solution of
    [n_v; n; n_v x n] n_f = [sin alpha_est, cos alpha_w, 0], signed so the
    force opposes the flow through the plate.
    """
    n = body_normal(state)
    f, _ = K.reconstruct(float(alpha_w), float(gamma), np.asarray(state.velocity, dtype=float), n,
                         params.air_density, params.wing_area, params.v_eps)
    return f


def reconstruct_batch(alpha_w, gamma, v, n, rho, area, v_eps=0.05, with_grad=False):
    """Vectorized reconstruction over N samples.

    Returns ``f`` of shape (N, 3), and with ``with_grad`` also
    ``df/dalpha_w`` and ``df/dgamma`` (each (N, 3)).  The clip in alpha_est
    passes zero gradient outside its active region.
    """
    alpha_w = np.asarray(alpha_w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    v = np.asarray(v, dtype=float)
    n = np.asarray(n, dtype=float)
    N = v.shape[0]
    f = np.zeros((N, 3))
    dfa = np.zeros((N, 3))
    dfg = np.zeros((N, 3))

    speed = np.linalg.norm(v, axis=1)
    ok = speed > v_eps
    nv = np.zeros_like(v)
    nv[ok] = v[ok] / speed[ok, None]
    c = np.clip(np.sum(v * n, axis=1) / np.where(ok, speed, 1.0), -1.0, 1.0)
    c = np.where(ok, c, 0.0)
    alpha = np.arcsin(c)
    cosa = np.sqrt(np.maximum(0.0, 1.0 - c * c))
    raw = alpha + alpha_w
    active = np.abs(raw) <= 0.5 * np.pi
    ca, sa = np.cos(alpha_w), np.sin(alpha_w)
    s1 = np.where(active, c * ca + cosa * sa, np.sign(raw))
    ds1 = np.where(active, cosa * ca - c * sa, 0.0)  # cos(alpha + alpha_w)
    s2 = ca
    ds2 = -sa
    base = rho * speed * speed * area  # gamma = 1 magnitude scale
    mag = base * gamma

    cross = np.cross(nv, n)
    singular = ok & (np.linalg.norm(cross, axis=1) < K.SINGULAR_TOL)
    reg = ok & ~singular

    det = np.where(reg, 1.0 - c * c, 1.0)
    a = (s1 - c * s2) / det
    b = (s2 - c * s1) / det
    da = (ds1 - c * ds2) / det
    db = (ds2 - c * ds1) / det
    m = a[:, None] * nv + b[:, None] * n
    dm = da[:, None] * nv + db[:, None] * n
    norm = np.linalg.norm(m, axis=1)
    norm = np.where(reg, norm, 1.0)
    nf = m / norm[:, None]
    dnf = (dm - nf * np.sum(nf * dm, axis=1, keepdims=True)) / norm[:, None]

    fr = -(s1 * mag)[:, None] * nf
    f[reg] = fr[reg]
    if with_grad:
        dfa_r = -mag[:, None] * (ds1[:, None] * nf + s1[:, None] * dnf)
        dfg_r = -(s1 * base)[:, None] * nf
        dfa[reg] = dfa_r[reg]
        dfg[reg] = dfg_r[reg]

    if np.any(singular):
        sg = np.sign(alpha)
        k = -sg * np.abs(s1) * mag
        f[singular] = (k[:, None] * n)[singular]
        if with_grad:
            dk_da = -sg * np.sign(s1) * ds1 * mag
            dk_dg = -sg * np.abs(s1) * base
            dfa[singular] = (dk_da[:, None] * n)[singular]
            dfg[singular] = (dk_dg[:, None] * n)[singular]

    if with_grad:
        return f, dfa, dfg
    return f
