"""Multi-rate closed loop: plant 3000 Hz, attitude 300 Hz, supervisor 10 Hz.

Commands are held (zero-order) between the slower ticks.  The per-interval
work runs in :func:`twcc.kernels.advance_interval`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .config import Config
from .control import WIIC, ControlCommand, PidState, _clamped_pc, pc_attitude_thrust, pc_position_loop, twcc_step
from .plant import AllocationMatrix, DroneState, pack_params

TRACE_COLUMNS = (
    "t", "x", "y", "z", "vx", "vy", "vz", "phi", "theta", "psi", "wx", "wy", "wz",
    "x_d", "y_d", "z_d", "vx_d", "vy_d", "vz_d", "phi_d", "theta_d", "U_sum",
    "mode", "w_s", "flag", "fhat_x", "fhat_y", "fhat_z", "fa_x", "fa_y", "fa_z",
)
COL = {name: i for i, name in enumerate(TRACE_COLUMNS)}


@dataclass
class TickResult:
    row: np.ndarray  # one TRACE_COLUMNS row, sampled at the tick start
    track: np.ndarray  # positions at each attitude tick across the interval
    accel: np.ndarray  # true translational acceleration at the tick start
    thrust: float  # collective thrust actually applied at the tick start
    command: ControlCommand
    motor_saturation: int


class Simulation:
    def __init__(self, cfg: Config, estimator=None, state: DroneState | None = None,
                 noise_rng: np.random.Generator | None = None):
        self.cfg = cfg
        self.params = cfg.drone
        self.gains = cfg.control
        self.estimator = estimator
        self.alloc = AllocationMatrix(cfg.drone)
        self.p = pack_params(cfg.drone, cfg.oracle, cfg.control)
        g = cfg.control
        self.dt = 1.0 / g.twcc_rate
        self.n_att = g.attitude_rate // g.twcc_rate
        self.n_sub = g.plant_rate // g.attitude_rate
        self.dt_plant = 1.0 / g.plant_rate
        state = state or DroneState()
        self.x = state.as_vector()
        self.t = state.time
        self.chi = np.zeros(3)
        self.pid = PidState(cfg.control)
        self.noise_rng = noise_rng
        self.last_mode = "PC"
        self.events = []

    def state(self, wing_state: int = 0) -> DroneState:
        return DroneState.from_vector(self.x, wing_state, self.t)

    def measured(self) -> DroneState:
        s = self.state()
        sc = self.cfg.scenario
        if self.noise_rng is None or (sc.pos_noise == 0 and sc.vel_noise == 0):
            return s
        x = self.x.copy()
        x[0:3] += self.noise_rng.normal(0.0, sc.pos_noise, 3)
        x[3:6] += self.noise_rng.normal(0.0, sc.vel_noise, 3)
        return DroneState.from_vector(x, 0, self.t)

    def tick(self, r_d, v_d, force_wings: bool = False, fa_external=None) -> TickResult:
        meas = self.measured()
        if force_wings:
            a_cmd = pc_position_loop(meas, r_d, self.pid, self.dt)
            pc = pc_attitude_thrust(a_cmd, meas, self.params, self.gains.thrust_eps)
            cmd = _clamped_pc(pc, self.params, self.gains.yaw_ref, self.t)
            cmd.wing_state = 1
            f_hat = np.zeros(3)
        else:
            cmd, a_cmd, f_hat = twcc_step(meas, r_d, self.pid, self.estimator, self.dt,
                                          self.params, self.gains)
        if cmd.mode != self.last_mode:
            self.events.append((self.t, "mode", f"{self.last_mode}->{cmd.mode}"))
            if self.gains.reset_integrals_on_mode_change:
                self.pid.reset()
            self.last_mode = cmd.mode
        self.events.extend(cmd.events)

        if fa_external is not None:
            fa_mode, fa_ext = K.FA_EXTERNAL, np.asarray(fa_external, dtype=float)
        else:
            fa_mode = K.FA_ORACLE if cmd.wing_state else K.FA_NONE
            fa_ext = np.zeros(3)
        x0 = self.x
        t0 = self.t
        euler0 = np.array(K.rot_to_euler(K.quat_to_rot(x0[6:10])))
        x1, acc0, fa0, thrust0, track, sat = K.advance_interval(
            x0, cmd.target, float(cmd.thrust), self.chi, self.p, self.alloc.T, self.alloc.T_inv,
            fa_mode, fa_ext, self.n_att, self.n_sub, self.dt_plant)
        self.x = x1
        self.t = t0 + self.dt
        row = np.concatenate([
            [t0], x0[0:3], x0[3:6], euler0, x0[10:13], r_d, v_d,
            [cmd.phi, cmd.theta, cmd.thrust, 1.0 if cmd.mode == WIIC else 0.0,
             float(cmd.wing_state), float(cmd.flag)],
            f_hat, fa0,
        ])
        return TickResult(row, track, acc0, float(thrust0), cmd, int(sat))

    def diverged(self, z_ref: float, max_alt_err: float = 20.0, max_tilt_deg: float = 80.0) -> bool:
        if not np.all(np.isfinite(self.x)):
            return True
        phi, theta, _ = K.rot_to_euler(K.quat_to_rot(self.x[6:10]))
        lim = math.radians(max_tilt_deg)
        return abs(self.x[2] - z_ref) > max_alt_err or abs(phi) > lim or abs(theta) > lim
