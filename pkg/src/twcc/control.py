"""Thrust-wing coordination (10 Hz) and integral-backstepping attitude control.

The supervisory layer has three parts:

* PC   - cascade P (position) / PID (velocity) loop, turned into desired roll,
         pitch and collective thrust by the small-angle inversion.
* WOEG - decides whether spread wings would push the vehicle the way the
         PC wants to accelerate (``flag``).
* WIIC - when an angle saturates and the flag is set, pins that angle at its
         limit, spreads the wings and re-solves the thrust with the predicted
         wing force as feedforward.

Horizontal quantities are expressed in the heading frame (world rotated by
the current yaw), where the small-angle inversion is exact to first order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels as K
from .config import ControlGains, DroneParams
from .plant import DroneState, pack_params

PC = "PC"
WIIC = "WIIC"


@dataclass
class ControlCommand:
    phi: float
    theta: float
    psi: float
    thrust: float
    wing_state: int = 0
    mode: str = PC
    flag: int = 0
    events: list = field(default_factory=list)

    @property
    def target(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi])


@dataclass
class PidState:
    gains: ControlGains = field(default_factory=ControlGains)
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_error: np.ndarray | None = None

    def reset(self):
        self.integral[:] = 0.0
        self.prev_error = None


@dataclass
class AttitudeCtlState:
    gains: ControlGains = field(default_factory=ControlGains)
    integral: np.ndarray = field(default_factory=lambda: np.zeros(3))


@dataclass
class PcOutput:
    phi: float
    theta: float
    thrust: float
    sat_phi: bool
    sat_theta: bool
    sat_thrust: bool
    indeterminate: bool = False


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite controller input")


def to_heading(vec, psi):
    """Rotate a world vector into the yaw-aligned heading frame."""
    c, s = math.cos(psi), math.sin(psi)
    v = np.asarray(vec, dtype=float)
    return np.array([c * v[0] + s * v[1], -s * v[0] + c * v[1], v[2]])


def pc_position_loop(state: DroneState, r_d, pid: PidState, dt: float) -> np.ndarray:
    """Acceleration command from the cascade position/velocity loop.

    Order per call: error, backward-difference derivative, output from the
    *previous* integral, then the integral is advanced and clamped.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    r_d = np.asarray(r_d, dtype=float)
    _finite(r_d, state.position, state.velocity)
    g = pid.gains
    kpp, kpv, kiv, kdv = (np.asarray(k, dtype=float) for k in (g.kp_pos, g.kp_vel, g.ki_vel, g.kd_vel))
    v_d = kpp * (r_d - state.position)
    e = v_d - state.velocity
    de = np.zeros(3) if pid.prev_error is None else (e - pid.prev_error) / dt
    a_cmd = kpv * e + kiv * pid.integral + kdv * de
    pid.prev_error = e
    pid.integral = pid.integral + e * dt
    # anti-windup: the integral contribution stays within +-vel_int_limit m/s^2
    with np.errstate(divide="ignore"):
        bound = np.where(kiv > 0, g.vel_int_limit / np.where(kiv > 0, kiv, 1.0), np.inf)
    pid.integral = np.clip(pid.integral, -bound, bound)
    return a_cmd


def pc_attitude_thrust(a_cmd, state: DroneState, params: DroneParams,
                       thrust_eps: float = 0.1) -> PcOutput:
    """Invert the translational model for (phi_d, theta_d, U_sum), unclamped."""
    a_cmd = np.asarray(a_cmd, dtype=float)
    phi, theta, psi = state.euler
    a_h = to_heading(a_cmd, psi)
    m = params.mass
    U = m / (math.cos(phi) * math.cos(theta)) * (params.gravity - a_h[2])
    # the thrust is floored for the angle extraction only; at or below the
    # floor the angles keep the commanded direction but their size is arbitrary
    U_ang = max(U, thrust_eps)
    theta_d = -(m / U_ang) * a_h[0]
    phi_d = (m / U_ang) * a_h[1]
    return PcOutput(phi_d, theta_d, U,
                    abs(phi_d) > params.phi_max,
                    abs(theta_d) > params.theta_max,
                    U > params.thrust_max or U < params.thrust_min,
                    indeterminate=U <= thrust_eps)


def woeg_flag(state: DroneState, f_hat, a_cmd, gains: ControlGains | None = None,
              floor: float = 1e-6) -> int:
    """1 when the predicted spread-wing force helps the commanded motion."""
    gains = gains or ControlGains()
    f_hat = np.asarray(f_hat, dtype=float)
    fn = float(np.linalg.norm(f_hat))
    if fn < floor:
        return 0
    if gains.woeg_rule == "normal":
        n = K.normal_from_quat(np.asarray(state.quaternion, dtype=float))
        return int(-np.dot(f_hat, n) > gains.woeg_eps * fn)
    h = np.asarray(a_cmd, dtype=float)[:2]
    hn = float(np.linalg.norm(h))
    if hn < floor:
        return 0
    return int(np.dot(f_hat[:2], h / hn) > gains.woeg_eps * fn)


def _clamp(x, lo, hi):
    return min(max(x, lo), hi)


def wiic_override(a_cmd, f_hat, saturated_axis: str, params: DroneParams, psi: float = 0.0,
                  yaw_ref: float = 0.0, fallback: PcOutput | None = None,
                  t: float = 0.0) -> ControlCommand:
    """Pin the saturated angle at its limit and solve thrust with wing feedforward.

    ``a_cmd`` and ``f_hat`` are world-frame; they are rotated by ``psi`` into
    the heading frame.  If the resulting thrust is not positive the PC command
    (clamped) is returned with the wings kept spread.
    """
    m = params.mass
    a = to_heading(a_cmd, psi)
    f = to_heading(f_hat, psi)
    events = []
    if saturated_axis == "pitch":
        # theta_PC = -(m/U) a_x with U > 0, so its sign is that of -a_x
        theta = math.copysign(params.theta_max, -a[0])
        U = -(m / theta) * (a[0] - f[0] / m)
        phi = (m / U) * (a[1] - f[1] / m) if U > 0 else 0.0
    elif saturated_axis == "roll":
        phi = math.copysign(params.phi_max, a[1])
        U = (m / phi) * (a[1] - f[1] / m)
        theta = -(m / U) * (a[0] - f[0] / m) if U > 0 else 0.0
    else:
        raise ValueError(f"saturated_axis must be 'pitch' or 'roll', not {saturated_axis!r}")

    if not U > 0.0:
        events.append((t, "wiic_infeasible", U))
        if fallback is None:
            fallback = PcOutput(0.0, 0.0, params.hover_thrust, False, False, False)
        cmd = _clamped_pc(fallback, params, yaw_ref, t)
        cmd.wing_state = 1
        cmd.mode = WIIC
        cmd.events = events + cmd.events
        return cmd

    U_c = _clamp(U, params.thrust_min, params.thrust_max)
    if U_c != U:
        events.append((t, "clamp_thrust", U))
    phi_c = _clamp(phi, -params.phi_max, params.phi_max)
    theta_c = _clamp(theta, -params.theta_max, params.theta_max)
    if phi_c != phi:
        events.append((t, "clamp_phi", phi))
    if theta_c != theta:
        events.append((t, "clamp_theta", theta))
    return ControlCommand(phi_c, theta_c, yaw_ref, U_c, wing_state=1, mode=WIIC, flag=1, events=events)


def wiic_raw(a_cmd, f_hat, saturated_axis: str, params: DroneParams):
    """Unclamped WIIC solution (phi, theta, U) in the heading frame with psi = 0."""
    m = params.mass
    a = np.asarray(a_cmd, dtype=float)
    f = np.asarray(f_hat, dtype=float)
    if saturated_axis == "pitch":
        theta = math.copysign(params.theta_max, -a[0])
        U = -(m / theta) * (a[0] - f[0] / m)
        phi = (m / U) * (a[1] - f[1] / m) if abs(U) > 1e-12 else 0.0
    else:
        phi = math.copysign(params.phi_max, a[1])
        U = (m / phi) * (a[1] - f[1] / m)
        theta = -(m / U) * (a[0] - f[0] / m) if abs(U) > 1e-12 else 0.0
    return phi, theta, U


def _clamped_pc(pc: PcOutput, params: DroneParams, yaw_ref: float, t: float) -> ControlCommand:
    events = []
    phi = _clamp(pc.phi, -params.phi_max, params.phi_max)
    theta = _clamp(pc.theta, -params.theta_max, params.theta_max)
    U = _clamp(pc.thrust, params.thrust_min, params.thrust_max)
    if phi != pc.phi:
        events.append((t, "clamp_phi", pc.phi))
    if theta != pc.theta:
        events.append((t, "clamp_theta", pc.theta))
    if U != pc.thrust:
        events.append((t, "clamp_thrust", pc.thrust))
    return ControlCommand(phi, theta, yaw_ref, U, wing_state=0, mode=PC, events=events)


def twcc_step(state: DroneState, r_d, pid: PidState, estimator, dt: float,
              params: DroneParams, gains: ControlGains | None = None):
    """One supervisory tick.

    ``estimator`` maps the current state to the wing force expected if the
    wings were spread, or is ``None`` for the wingless vehicle.  Returns
    ``(command, a_cmd, f_hat)``.
    """
    gains = gains or pid.gains
    t = state.time
    a_cmd = pc_position_loop(state, r_d, pid, dt)
    pc = pc_attitude_thrust(a_cmd, state, params, gains.thrust_eps)
    psi = float(state.euler[2])
    if estimator is None:
        f_hat = np.zeros(3)
        flag = 0
    else:
        f_hat = np.asarray(estimator(state), dtype=float)
        flag = woeg_flag(state, f_hat, a_cmd, gains)

    saturated = pc.sat_phi or pc.sat_theta
    if saturated and flag:
        over_theta = abs(pc.theta) / params.theta_max
        over_phi = abs(pc.phi) / params.phi_max
        axis = "pitch" if over_theta >= over_phi else "roll"
        cmd = wiic_override(a_cmd, f_hat, axis, params, psi=psi, yaw_ref=gains.yaw_ref,
                            fallback=pc, t=t)
    else:
        cmd = _clamped_pc(pc, params, gains.yaw_ref, t)
    cmd.flag = flag
    return cmd, a_cmd, f_hat


def attitude_backstepping(state: DroneState, cmd: ControlCommand, ctl: AttitudeCtlState,
                          dt: float, params: DroneParams) -> np.ndarray:
    """Body torques (U_phi, U_theta, U_psi); advances ``ctl.integral``."""
    p = pack_params(params, gains=ctl.gains)
    chi = np.array(ctl.integral, dtype=float)
    tau = K.backstepping(state.euler, np.asarray(state.angular_velocity, dtype=float),
                         cmd.target, chi, p, dt)
    ctl.integral = chi
    return tau


def attitude_closed_loop_poles(gains: ControlGains) -> list[np.ndarray]:
    """Eigenvalues of the linearized per-axis loop in (integral, error, rate)."""
    poles = []
    for c1, c2, lam in zip(gains.att_c1, gains.att_c2, gains.att_lambda):
        # chi' = e, e' = -w, w' = (1 + lam + c1 c2) e + lam c2 chi - (c1 + c2) w
        A = np.array([
            [0.0, 1.0, 0.0],
            [0.0, 0.0, -1.0],
            [lam * c2, 1.0 + lam + c1 * c2, -(c1 + c2)],
        ])
        poles.append(np.linalg.eigvals(A))
    return poles


def check_attitude_gains(gains: ControlGains) -> None:
    for axis, ev in zip("xyz", attitude_closed_loop_poles(gains)):
        if np.max(ev.real) >= 0:
            raise ValueError(f"attitude loop about {axis} is not stable: poles {ev}")
