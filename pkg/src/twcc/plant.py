"""Rigid-body quadrotor with foldable flat-plate wings.

World frame is north-east-down, body frame front-right-down, Euler angles
are ZYX (yaw, pitch, roll).  Thrust acts along -z of the body.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels as K
from .config import ConfigError, ControlGains, DroneParams, OracleConfig

E3 = np.array([0.0, 0.0, 1.0])


@dataclass(frozen=True)
class DroneState:
    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    quaternion: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wing_state: int = 0
    time: float = 0.0

    def __post_init__(self):
        if self.wing_state not in (0, 1):
            raise ValueError("wing_state must be 0 (folded) or 1 (spread)")

    @classmethod
    def from_euler(cls, phi=0.0, theta=0.0, psi=0.0, **kw) -> "DroneState":
        return cls(quaternion=K.euler_to_quat(phi, theta, psi), **kw)

    @classmethod
    def from_vector(cls, x, wing_state=0, time=0.0) -> "DroneState":
        x = np.asarray(x, dtype=float)
        return cls(x[0:3].copy(), x[3:6].copy(), x[6:10].copy(), x[10:13].copy(), wing_state, time)

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity, self.quaternion, self.angular_velocity])

    @property
    def rotation(self) -> np.ndarray:
        """Body-to-world rotation matrix R_wb."""
        return K.quat_to_rot(np.asarray(self.quaternion, dtype=float))

    @property
    def euler(self) -> np.ndarray:
        return np.array(K.rot_to_euler(self.rotation))

    def with_wings(self, wing_state: int) -> "DroneState":
        return replace(self, wing_state=wing_state)


class AllocationMatrix:
    """Thrust/torque mixing matrix and its inverse.

    Both front motors use the front pitch arm ``d_fp`` in the pitch row, by
    symmetry with the back pair.
    """

    def __init__(self, params: DroneParams):
        p = params
        self.T = np.array([
            [1.0, 1.0, 1.0, 1.0],
            [p.d_fr, p.d_br, -p.d_br, -p.d_fr],
            [p.d_fp, -p.d_bp, -p.d_bp, p.d_fp],
            [-p.ct1, p.ct2, -p.ct1, p.ct2],
        ])
        if abs(np.linalg.det(self.T)) < 1e-12 or np.linalg.cond(self.T) > 1e12:
            raise ConfigError("allocation matrix is singular for this arm geometry")
        self.T_inv = np.linalg.inv(self.T)


def allocate_motor_forces(U, params: DroneParams, alloc: AllocationMatrix | None = None):
    """Map [U_sum, U_phi, U_theta, U_psi] to per-motor thrusts.

    Returns ``(F, saturated)``; ``F`` is clamped to ``[0, motor_thrust_max]``.
    """
    alloc = alloc or AllocationMatrix(params)
    F, sat = K.allocate(np.asarray(U, dtype=float), alloc.T_inv, params.motor_thrust_max)
    return F, bool(sat)


def command_to_thrust(u_cmd: float, params: DroneParams) -> float:
    """Cubic map from a normalized motor command in [0, 1] to thrust (N)."""
    if not 0.0 <= u_cmd <= 1.0:
        raise ValueError("motor command must lie in [0, 1]")
    c0, c1, c2, c3 = params.thrust_poly
    thrust = c0 + u_cmd * (c1 + u_cmd * (c2 + u_cmd * c3))
    return min(max(thrust, 0.0), params.motor_thrust_max)


def body_normal(attitude) -> np.ndarray:
    """World-frame body z axis.  Accepts a DroneState, a quaternion or a 3x3 rotation."""
    if isinstance(attitude, DroneState):
        return K.normal_from_quat(np.asarray(attitude.quaternion, dtype=float))
    a = np.asarray(attitude, dtype=float)
    if a.shape == (3, 3):
        return a[:, 2].copy()
    return K.normal_from_quat(a)


def angle_of_attack(v, n, v_eps: float = 0.05):
    """Signed AOA ``asin(v_hat . n)``; returns ``(alpha, low_speed)``."""
    v = np.asarray(v, dtype=float)
    speed = float(np.linalg.norm(v))
    if speed <= v_eps:
        return 0.0, True
    c = float(np.clip(np.dot(v, n) / speed, -1.0, 1.0))
    return math.asin(c), False


def flat_plate_force(state: DroneState, params: DroneParams, wings: int | None = None) -> np.ndarray:
    """Flat-plate wing force in the world frame; zero with folded wings.

    ``wings`` overrides ``state.wing_state`` (the controller asks "what if the
    wings were spread").
    """
    ws = state.wing_state if wings is None else wings
    if ws == 0:
        return np.zeros(3)
    n = body_normal(state)
    return K.flat_plate(np.asarray(state.velocity, dtype=float), n,
                        params.air_density, params.wing_area, params.v_eps)


def true_wing_force(state: DroneState, params: DroneParams, oracle: OracleConfig) -> np.ndarray:
    if state.wing_state == 0:
        return np.zeros(3)
    n = body_normal(state)
    return K.oracle_force(np.asarray(state.velocity, dtype=float), n, params.air_density,
                          params.wing_area, params.v_eps, oracle.delta, oracle.kappa,
                          oracle.gamma0, oracle.gamma1)


def pack_params(params: DroneParams, oracle: OracleConfig | None = None,
                gains: ControlGains | None = None) -> np.ndarray:
    """Flatten parameters into the vector layout the loop kernels expect."""
    oracle = oracle or OracleConfig()
    gains = gains or ControlGains()
    p = np.zeros(K.P_SIZE)
    p[K.P_MASS] = params.mass
    p[K.P_G] = params.gravity
    p[K.P_J:K.P_J + 3] = params.inertia
    p[K.P_RHO] = params.air_density
    p[K.P_AREA] = params.wing_area
    p[K.P_FMAX] = params.motor_thrust_max
    p[K.P_VEPS] = params.v_eps
    p[K.P_DELTA] = oracle.delta
    p[K.P_KAPPA] = oracle.kappa
    p[K.P_GAMMA0] = oracle.gamma0
    p[K.P_GAMMA1] = oracle.gamma1
    p[K.P_C1:K.P_C1 + 3] = gains.att_c1
    p[K.P_C2:K.P_C2 + 3] = gains.att_c2
    p[K.P_LAM:K.P_LAM + 3] = gains.att_lambda
    p[K.P_AINT] = gains.att_int_limit
    return p


def step_dynamics(state: DroneState, motor_forces, torques, f_a, dt: float,
                  params: DroneParams, alloc: AllocationMatrix | None = None) -> DroneState:
    """One RK4 step of the rigid-body equations with inputs held constant.

    ``motor_forces`` are the four rotor thrusts; ``torques`` may be ``None``,
    in which case the body torques follow from the rotor forces through the
    allocation matrix.
    """
    if not dt > 0.0 or not math.isfinite(dt):
        raise ValueError("dt must be a positive finite number")
    F = np.asarray(motor_forces, dtype=float)
    fa = np.asarray(f_a, dtype=float)
    x = state.as_vector()
    if torques is None:
        alloc = alloc or AllocationMatrix(params)
        tau = (alloc.T @ F)[1:]
    else:
        tau = np.asarray(torques, dtype=float)
    for arr in (F, tau, fa, x):
        if not np.all(np.isfinite(arr)):
            raise ValueError("non-finite input to step_dynamics")
    p = pack_params(params)
    x1 = K.rk4_step(x, float(F.sum()), tau, fa, dt, p)
    return DroneState.from_vector(x1, state.wing_state, state.time + dt)


def translational_acceleration(state: DroneState, thrust: float, f_a, params: DroneParams) -> np.ndarray:
    """r_ddot = g e3 + R_wb [0, 0, -U] / m + f_a / m."""
    n = body_normal(state)
    return params.gravity * E3 - thrust * n / params.mass + np.asarray(f_a, dtype=float) / params.mass
