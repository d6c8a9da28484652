"""Small hand-checkable cases for each operation, with independent oracles."""
import math

import numpy as np
import pytest

from twcc import kernels as K
from twcc.aero.dataset import FlightLog, LOG_COLUMNS, build_dataset, label_from_log
from twcc.aero.reconstruct import reconstruct_batch, reconstruct_force
from twcc.aero.rnn import RnnModel, evaluate, forward, normalize, rnn_forward, softplus, train_bptt
from twcc.aero.dataset import SampleBatch
from twcc.config import Config, ControlGains, DroneParams, OracleConfig, TrainConfig
from twcc.control import (WIIC, PidState, attitude_backstepping, AttitudeCtlState, ControlCommand,
                          pc_attitude_thrust, pc_position_loop, twcc_step, wiic_override, woeg_flag)
from twcc.harness import collect_flight, run_forest_trial, tracking_rmse, _fly, _steer_sampler
from twcc.planner import Obstacle, detect_obstacle, generate_avoidance, sample_reference
from twcc.plant import (AllocationMatrix, DroneState, allocate_motor_forces, angle_of_attack,
                        body_normal, command_to_thrust, flat_plate_force, pack_params, step_dynamics,
                        true_wing_force)
from twcc.sim import COL, TRACE_COLUMNS

P = DroneParams()


def rot_zyx(phi, theta, psi):
    cx, sx = math.cos(phi), math.sin(phi)
    cy, sy = math.cos(theta), math.sin(theta)
    cz, sz = math.cos(psi), math.sin(psi)
    Rx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    Ry = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    Rz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return Rz @ Ry @ Rx


# -- plant -------------------------------------------------------------------

def test_symmetric_mix_splits_evenly():
    p = DroneParams(d_fr=0.12, d_br=0.12, d_fp=0.12, d_bp=0.12)
    F, sat = allocate_motor_forces(np.array([8.0, 0.0, 0.0, 0.0]), p)
    assert np.allclose(F, 2.0) and not sat


def test_default_mix_against_explicit_solve():
    U = np.array([5.376, 0.05, -0.03, 0.01])
    T = np.array([[1, 1, 1, 1], [0.14, 0.14, -0.14, -0.14], [0.10, -0.10, -0.10, 0.10],
                  [-0.012, 0.012, -0.012, 0.012]])
    F, _ = allocate_motor_forces(U, P)
    assert np.allclose(F, np.linalg.solve(T, U), atol=1e-12)
    assert np.allclose(AllocationMatrix(P).T, T)


def test_thrust_curve_cases():
    lin = DroneParams(thrust_poly=(0.0, 3.5, 0.0, 0.0))
    assert command_to_thrust(0.5, lin) == pytest.approx(1.75)
    assert command_to_thrust(0.0, P) == 0.0
    assert command_to_thrust(1.0, P) == pytest.approx(1.2 + 2.8 - 1.5)


@pytest.mark.parametrize("euler,expect", [((0, 0, 0), [0, 0, 1]), ((0, math.pi / 2, 0), [1, 0, 0])])
def test_normal_special_angles(euler, expect):
    assert np.allclose(body_normal(DroneState.from_euler(*euler)), expect, atol=1e-12)


def test_normal_general_angles_against_matrix_product():
    e = (math.radians(30), math.radians(20), math.radians(45))
    assert np.allclose(body_normal(DroneState.from_euler(*e)), rot_zyx(*e)[:, 2], atol=1e-12)


@pytest.mark.parametrize("v,alpha", [([1, 0, 0], 0.0), ([0, 0, 2], math.pi / 2), ([1, 0, 1], math.pi / 4)])
def test_angle_of_attack_cases(v, alpha):
    assert angle_of_attack(v, np.array([0.0, 0.0, 1.0]))[0] == pytest.approx(alpha)


def test_flat_plate_cases():
    level = DroneState(wing_state=1)
    assert np.all(flat_plate_force(level, P) == 0)
    horiz = DroneState(velocity=np.array([6.0, 2.0, 0.0]), wing_state=1)
    assert np.allclose(flat_plate_force(horiz, P), 0)
    climb = DroneState(velocity=np.array([0.0, 0.0, -5.0]), wing_state=1)
    assert np.allclose(flat_plate_force(climb, P), [0, 0, 1.8375], atol=1e-12)


def test_oracle_magnitude_by_direct_evaluation():
    # alpha = pi/6 with |v| = 7 on a level plate
    v = 7.0 * np.array([math.cos(math.pi / 6), 0.0, math.sin(math.pi / 6)])
    s = DroneState(velocity=v, wing_state=1)
    o = OracleConfig()
    aw = o.delta * math.tanh(o.kappa * math.pi / 6)
    gamma = o.gamma0 + o.gamma1 * 7 / 8
    mag = math.sin(math.pi / 6 + aw) * P.air_density * P.wing_area * 49 * gamma
    assert np.linalg.norm(true_wing_force(s, P, o)) == pytest.approx(mag, rel=1e-12)


def test_free_fall_single_step():
    s = step_dynamics(DroneState(), np.zeros(4), np.zeros(3), np.zeros(3), 0.01, P)
    assert s.velocity[2] == pytest.approx(P.gravity * 0.01, abs=1e-9)


def test_tumble_against_fine_step_oracle():
    p = pack_params(P)
    J = np.array(P.inertia)

    def momentum(dt):
        x = DroneState(angular_velocity=np.array([3.0, -2.0, 4.0])).as_vector()
        for _ in range(int(round(10.0 / dt))):
            x = K.rk4_step(x, 0.0, np.zeros(3), np.zeros(3), dt, p)
        return K.quat_to_rot(x[6:10]) @ (J * x[10:13])

    coarse, fine = momentum(1e-3), momentum(1e-5)
    assert np.linalg.norm(coarse - fine) / np.linalg.norm(fine) < 1e-6


# -- control -----------------------------------------------------------------

def test_position_loop_zero_error():
    s = DroneState(position=np.array([1.0, 2.0, -3.0]))
    assert np.all(pc_position_loop(s, [1.0, 2.0, -3.0], PidState(), 0.1) == 0)


def test_position_loop_pure_p():
    g = ControlGains(kp_pos=(1.0, 1.0, 1.0), kp_vel=(2.0, 2.0, 2.0), ki_vel=(0, 0, 0), kd_vel=(0, 0, 0))
    assert np.allclose(pc_position_loop(DroneState(), [1.0, 0.0, 0.0], PidState(g), 0.1), [2, 0, 0])


def test_integral_is_dt_weighted_error_sum():
    g = ControlGains(vel_int_limit=1e9)
    pid = PidState(g)
    s = DroneState(velocity=np.array([0.5, -0.2, 0.1]))
    ref = np.array([3.0, 1.0, -2.0])
    total = np.zeros(3)
    for k in range(200):
        r = ref * math.sin(0.05 * k)
        pc_position_loop(s, r, pid, 0.1)
        total += (np.array(g.kp_pos) * r - s.velocity) * 0.1
    assert np.allclose(pid.integral, total, rtol=1e-12, atol=1e-12)


def test_inversion_cases():
    out = pc_attitude_thrust([0.0, 0.0, P.gravity], DroneState(), P)
    assert out.thrust == pytest.approx(0.0, abs=1e-12)
    out = pc_attitude_thrust([2.0, 0.0, 0.0], DroneState(), P)
    assert out.theta == pytest.approx(-0.2039, abs=1e-4)


def test_woeg_at_89_degrees():
    a = np.array([3.0, 0.0, 0.0])
    f = np.array([math.cos(math.radians(89)), math.sin(math.radians(89)), 0.0])
    assert math.cos(math.radians(89)) < 0.05
    assert woeg_flag(DroneState(), f, a) == 0
    assert woeg_flag(DroneState(), [0.3, 0.0, 0.0], a) == 1
    assert woeg_flag(DroneState(), [0.0, 0.0, 0.0], a) == 0


def test_wiic_hand_evaluated():
    m, th = P.mass, math.radians(30)
    a, f = np.array([-8.0, 1.0, 0.0]), np.array([-1.5, 0.2, 0.9])
    U = -(m / th) * (a[0] - f[0] / m)
    phi = (m / U) * (a[1] - f[1] / m)
    cmd = wiic_override(a, f, "pitch", P)
    assert cmd.thrust == pytest.approx(U, rel=1e-12)
    assert cmd.phi == pytest.approx(phi, rel=1e-12)
    assert cmd.theta == pytest.approx(th)


def test_wiic_zero_feedforward_is_pc_at_the_limit():
    a = np.array([-8.0, 1.0, 0.0])
    cmd = wiic_override(a, np.zeros(3), "pitch", P)
    assert -(cmd.thrust / P.mass) * cmd.theta == pytest.approx(a[0])


def test_wiic_aero_supplies_everything():
    a = np.array([-4.0, 0.0, 0.0])
    cmd = wiic_override(a, P.mass * a, "pitch", P)
    assert any(e[1] == "wiic_infeasible" for e in cmd.events)


def test_mode_branches():
    s = DroneState(position=np.array([0.0, 0.0, -10.0]))
    g = ControlGains(kp_pos=(1.0, 1.0, 1.0), kp_vel=(1.0, 1.0, 1.0), ki_vel=(0, 0, 0), kd_vel=(0, 0, 0))
    # a_x = -g tan(45 deg) asks for theta_PC = 45 deg
    r_d = [-P.gravity, 0.0, -10.0]
    cmd, *_ = twcc_step(s, [-0.1, 0.0, -10.0], PidState(g), lambda st: np.array([-0.3, 0, 0]), 0.1, P, g)
    assert cmd.mode == "PC" and cmd.wing_state == 0
    cmd, *_ = twcc_step(s, r_d, PidState(g), lambda st: np.array([-0.3, 0, 0]), 0.1, P, g)
    assert cmd.mode == WIIC and cmd.wing_state == 1 and cmd.theta == pytest.approx(P.theta_max)
    cmd, *_ = twcc_step(s, r_d, PidState(g), lambda st: np.array([0.3, 0, 0]), 0.1, P, g)
    assert cmd.mode == "PC" and cmd.wing_state == 0 and cmd.theta == pytest.approx(P.theta_max)


def test_backstepping_roll_by_formula():
    g = ControlGains(att_c1=(6.0, 6.0, 6.0), att_c2=(4.0, 4.0, 4.0), att_lambda=(1.0, 1.0, 1.0))
    ctl = AttitudeCtlState(g)
    tau = attitude_backstepping(DroneState(), ControlCommand(0.1, 0.0, 0.0, 5.0), ctl, 1 / 300, P)
    e1 = 0.1
    e2 = 6 * e1
    assert tau[0] == pytest.approx(3.22e-3 * (e1 * (1 - 36 + 1) + e2 * 10), rel=1e-12)
    assert tau[1] == 0 and tau[2] == 0
    assert ctl.integral[0] == pytest.approx(e1 / 300)


def test_backstepping_gyroscopic_only():
    ctl = AttitudeCtlState()
    s = DroneState(angular_velocity=np.array([1.0, 2.0, -0.5]))
    # zero angle error and zero integral: what remains is the rate feedback plus w x Jw
    tau = attitude_backstepping(s, ControlCommand(0.0, 0.0, 0.0, 5.0), ctl, 1 / 300, P)
    J = np.array(P.inertia)
    w = s.angular_velocity
    gyro = np.cross(w, J * w)
    c1, c2 = np.array(ctl.gains.att_c1), np.array(ctl.gains.att_c2)
    assert np.allclose(tau, J * (-(c1 + c2) * w) + gyro, rtol=1e-12)


# -- aero learning -------------------------------------------------------------

def test_label_free_fall_is_zero():
    assert np.allclose(label_from_log([0, 0, P.gravity], [0, 0, 0], 0.0, P), 0, atol=1e-12)


def _const_log(n):
    d = np.zeros((n, len(LOG_COLUMNS)))
    d[:, 0] = np.arange(n) * 0.1
    d[:, 1:4] = [4.0, -1.0, 0.5]
    d[:, 5] = -0.1
    d[:, 10] = 5.5
    d[:, 11] = 1
    return FlightLog(d)


@pytest.mark.parametrize("n,count", [(10, 1), (109, 100)])
def test_window_counts(n, count):
    assert len(build_dataset(_const_log(n), P)) == count


def test_constant_log_gives_equal_labels():
    labels = np.array([s.label for s in build_dataset(_const_log(40), P)])
    assert np.allclose(labels, labels[0], atol=1e-12)


def test_zero_weights_give_identity_heads():
    m = RnnModel.zeros("parnn")
    aw, gamma = rnn_forward(m, np.ones((10, 6)))
    assert aw == 0.0 and gamma == pytest.approx(math.log(2.0) + m.gamma_floor)


def test_forward_against_naive_recurrence(rng):
    m = RnnModel.init("vanilla", rng)
    for k in m.weights:
        m.weights[k] = rng.normal(0, 0.5, m.weights[k].shape)
    x = rng.normal(size=(10, 8))
    y = forward(m, x[None])[0]
    w = m.weights
    h1 = np.zeros(8)
    h2 = np.zeros(8)
    for t in range(10):
        h1 = np.array([math.tanh(sum(w["W1x"][i, j] * x[t, j] for j in range(8))
                                 + sum(w["W1h"][i, j] * h1[j] for j in range(8)) + w["b1"][i]) for i in range(8)])
        h2 = np.array([math.tanh(sum(w["W2x"][i, j] * h1[j] for j in range(8))
                                 + sum(w["W2h"][i, j] * h2[j] for j in range(8)) + w["b2"][i]) for i in range(8)])
    expect = [sum(w["Wo"][i, j] * h2[j] for j in range(8)) + w["bo"][i] for i in range(3)]
    assert np.allclose(y, expect, atol=1e-12)
    assert np.array_equal(forward(m, x[None]), forward(m, x[None]))


def test_clip_boundary_full_magnitude():
    v = np.array([3.0, 0.0, 4.0])  # alpha = asin(0.8)
    s = DroneState(velocity=v, wing_state=1)
    f = reconstruct_force(1.2, 1.5, s, P)
    assert np.linalg.norm(f) == pytest.approx(P.air_density * P.wing_area * 25 * 1.5, rel=1e-12)


def test_direction_by_explicit_solve():
    # alpha = pi/6 relative to a tilted plate, flow along +x
    s = DroneState.from_euler(0.0, math.pi / 6, 0.0, velocity=np.array([7.0, 0.0, 0.0]), wing_state=1)
    n = body_normal(s)
    nv = np.array([1.0, 0.0, 0.0])
    assert math.asin(nv @ n) == pytest.approx(math.pi / 6)
    aw, gamma = 0.1, 1.2
    A = np.vstack([nv, n, np.cross(nv, n)])
    nf = np.linalg.solve(A, [math.sin(math.pi / 6 + aw), math.cos(aw), 0.0])
    nf /= np.linalg.norm(nf)
    mag = math.sin(math.pi / 6 + aw) * P.air_density * 49 * P.wing_area * gamma
    assert np.allclose(reconstruct_force(aw, gamma, s, P), -mag * nf, atol=1e-12)


def test_zero_learning_rate_keeps_weights(rng):
    raw = np.concatenate([rng.normal(0, 4, (30, 10, 3)), rng.uniform(-0.4, 0.4, (30, 10, 3))], axis=2)
    batch = SampleBatch(raw, rng.normal(0, 0.3, (30, 3)))
    m = RnnModel.init("parnn", rng)
    res = train_bptt(m, batch, TrainConfig(episodes=5, learning_rate=0.0), P)
    for k in m.weights:
        assert np.array_equal(res.model.weights[k], m.weights[k])


def test_rmse_closed_forms(rng):
    raw = np.zeros((20, 10, 6))
    batch = SampleBatch(raw, np.tile([1.0, 0.0, 0.0], (20, 1)))
    zero = RnnModel.zeros("vanilla")
    assert evaluate(zero, batch, P) == pytest.approx(math.sqrt(1 / 3))
    batch.labels[:] = 0.0
    assert evaluate(zero, batch, P) == 0.0


# -- planner -------------------------------------------------------------------

@pytest.mark.parametrize("dist,bearing,seen", [(5.01, 0.0, False), (2.5, 0.0, True),
                                               (2.5, 15.5, False), (2.5, 14.5, True)])
def test_detection_boundaries(dist, bearing, seen):
    b = math.radians(bearing)
    ob = Obstacle((dist * math.cos(b), dist * math.sin(b)))
    hit = detect_obstacle(np.zeros(3), np.array([7.0, 0, 0]), [ob], 5.0, 15.0)
    assert (hit is ob) == seen


def test_reversal_and_sampling():
    traj = generate_avoidance(np.zeros(3), np.array([7.0, 0.0, 0.0]), math.pi, 7.0, 2.0)
    seg, line = traj.segments
    r, v = sample_reference(traj, 2.0)
    assert np.allclose(r, 0) and np.allclose(v, [7, 0, 0])
    t_mid = 2.0 + 0.37 * seg.duration
    s = t_mid - 2.0
    c = seg.coeffs
    horner = ((c[:, 3] * s + c[:, 2]) * s + c[:, 1]) * s + c[:, 0]
    assert np.allclose(sample_reference(traj, t_mid)[0], horner, atol=1e-12)
    r1, _ = sample_reference(traj, line.t0 + 1.0)
    r2, v2 = sample_reference(traj, line.t0 + 3.5)
    assert np.allclose(v2, [-7, 0, 0], atol=1e-9)
    assert np.allclose(r2 - r1, [-17.5, 0, 0], atol=1e-9)


# -- harness -------------------------------------------------------------------

def _record(err_x):
    tr = np.zeros((len(err_x), len(TRACE_COLUMNS)))
    tr[:, COL["x"]] = err_x
    return tr


def test_rmse_closed_forms_for_tracking():
    assert tracking_rmse(_record(np.zeros(10))) == 0.0
    assert tracking_rmse(_record(np.full(10, 2.0))) == pytest.approx(2.0)
    t = np.arange(1000) / 1000
    assert tracking_rmse(_record(np.sin(2 * math.pi * 5 * t))) == pytest.approx(1 / math.sqrt(2), rel=1e-9)
    with pytest.raises(ValueError):
        tracking_rmse(np.zeros((0, len(TRACE_COLUMNS))))


def test_empty_forest_completes(cfg):
    rec = run_forest_trial(cfg, 0, "wingless", empty=True)
    assert rec.outcome == "completed"
    assert rec.metrics["travel_distance_m"] >= 400.0


def test_slow_avoidance_sanity(cfg):
    cfg = cfg.replace(scenario={"v_des": 2.0, "time_cap": 40.0})
    centers = np.array([[30.0, 0.0]])
    steer = _steer_sampler(cfg, np.random.default_rng(0))
    rec = _fly(cfg, "wingless", None, centers, steer, 0)
    assert rec.outcome != "collided"
    assert rec.metrics["replans"] >= 1


def test_collection_envelope_and_thrust_bounds(cfg):
    lg = collect_flight(cfg, cfg.collect.duration, cfg.collect.seed, cfg.collect.speed_max)
    lo, hi = lg.speed_range()
    assert lo < 0.5 and hi > 7.0
    U = lg.col("U_sum")
    assert np.all(U <= P.thrust_max + 1e-9)
    assert np.all(U >= P.thrust_min - 1e-9)
