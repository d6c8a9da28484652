"""Scenarios, seeded batches, metrics and artifact files."""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .aero.dataset import LOG_DT, FlightLog
from .aero.rnn import RnnModel
from .config import CONTROLLERS, Config
from .estimators import make_estimator
from .planner import Obstacle, detect_obstacle, generate_avoidance, sample_reference, steer_away
from .plant import DroneState
from .sim import COL, TRACE_COLUMNS, Simulation

log = logging.getLogger(__name__)

COMPLETED = "completed"
COLLIDED = "collided"
DIVERGED = "diverged"
TIMEOUT = "timeout"


@dataclass
class RunRecord:
    trace: np.ndarray
    outcome: str
    controller: str = ""
    trial: int = 0
    collision_point: np.ndarray | None = None
    layout_hash: str = ""
    events: list = field(default_factory=list)
    metrics: dict = field(default_factory=dict)

    def column(self, name):
        return self.trace[:, COL[name]]


# -- metrics -----------------------------------------------------------------

def tracking_rmse(record) -> float:
    """sqrt(mean |r - r_d|^2) over the 10 Hz samples (3-D Euclidean error)."""
    trace = record.trace if isinstance(record, RunRecord) else np.asarray(record)
    if trace.shape[0] == 0:
        raise ValueError("empty record")
    err = trace[:, COL["x"]:COL["z"] + 1] - trace[:, COL["x_d"]:COL["z_d"] + 1]
    return float(np.sqrt(np.mean(np.sum(err * err, axis=1))))


def travel_distance(trace, end_point=None) -> float:
    """Horizontal path length flown."""
    xy = trace[:, COL["x"]:COL["y"] + 1]
    if end_point is not None:
        xy = np.vstack([xy, np.asarray(end_point)[:2]])
    if len(xy) < 2:
        return 0.0
    return float(np.sum(np.hypot(*np.diff(xy, axis=0).T)))


def _metrics(rec: RunRecord, end_point) -> dict:
    tr = rec.trace
    return {
        "outcome": rec.outcome,
        "tracking_rmse_m": tracking_rmse(rec),
        "travel_distance_m": travel_distance(tr, end_point),
        "duration_s": float(tr[-1, 0] + LOG_DT),
        "wiic_fraction": float(np.mean(tr[:, COL["mode"]])),
        "wing_fraction": float(np.mean(tr[:, COL["w_s"]])),
        "collision_point": None if rec.collision_point is None else [float(v) for v in rec.collision_point],
    }


# -- worlds ------------------------------------------------------------------

def trial_seeds(base_seed: int, trial: int):
    """Independent (layout, steering, noise) streams for one trial index."""
    ss = np.random.SeedSequence([base_seed, trial])
    return [np.random.default_rng(s) for s in ss.spawn(3)]


def forest_layout(cfg: Config, rng: np.random.Generator) -> np.ndarray:
    """Obstacle centers on a jittered grid covering the square forest.

    Row spacing and the spacing between neighbours in a row are each drawn
    from the configured range.  The grid is laid out over the square's
    circumcircle, turned by a random angle and cropped, so grid lanes do not
    line up with the initial flight direction.  The start clearing is left empty.
    """
    sc = cfg.scenario
    half = sc.forest_extent / 2.0
    reach = half * math.sqrt(2.0)
    centers = []
    y = -reach + rng.uniform(0.0, sc.spacing_max)
    while y <= reach:
        x = -reach + rng.uniform(0.0, sc.spacing_max)
        while x <= reach:
            centers.append((x, y))
            x += rng.uniform(sc.spacing_min, sc.spacing_max)
        y += rng.uniform(sc.spacing_min, sc.spacing_max)
    c = np.array(centers)
    ang = rng.uniform(0.0, math.pi / 2.0)
    rot = np.array([[math.cos(ang), -math.sin(ang)], [math.sin(ang), math.cos(ang)]])
    c = c @ rot.T
    keep = np.all(np.abs(c) <= half, axis=1) & (np.hypot(c[:, 0], c[:, 1]) > sc.clearing_radius)
    return c[keep]


def layout_hash(centers: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(centers, dtype=np.float64).tobytes()).hexdigest()[:16]


def _collision(track, centers, reach):
    if len(centers) == 0:
        return None
    lo = track[:, :2].min(axis=0) - reach
    hi = track[:, :2].max(axis=0) + reach
    near = centers[np.all((centers >= lo) & (centers <= hi), axis=1)]
    if len(near) == 0:
        return None
    d = np.hypot(track[:, None, 0] - near[None, :, 0], track[:, None, 1] - near[None, :, 1])
    hit = np.nonzero(np.any(d < reach, axis=1))[0]
    if hit.size == 0:
        return None
    return track[hit[0]].copy()


def _load_model(cfg: Config, controller: str, model):
    if controller != "parnn" or model is not None:
        return model
    path = Path(cfg.scenario.model_path)
    if not path.exists():
        raise FileNotFoundError(f"parnn controller needs a trained model, {path} not found")
    return RnnModel.load(path)


# -- closed-loop scenarios ---------------------------------------------------

def _fly(cfg: Config, controller: str, model, centers: np.ndarray, steer_draw, trial: int,
         noise_rng=None, stop_after_first: float | None = None,
         stop_on_collision: bool = True) -> RunRecord:
    """Shared loop: straight start along +x, replanning on each detection.

    With ``stop_on_collision=False`` the first contact is recorded (outcome
    and collision point) but the run continues to its normal end.
    """
    sc = cfg.scenario
    params = cfg.drone
    start = DroneState(position=np.array([0.0, 0.0, sc.altitude]))
    sim = Simulation(cfg, make_estimator(controller, params, model), start, noise_rng)
    obstacles = [Obstacle(tuple(c), sc.obstacle_diameter / 2.0) for c in centers]
    reach = sc.obstacle_diameter / 2.0 + sc.drone_radius
    traj = generate_avoidance(start.position, start.velocity, 0.0, sc.v_des, 0.0, sc.altitude,
                              sc.accel_budget, sc.min_blend_time, heading=0.0)
    lockout_until = -math.inf
    trigger = None
    rows = []
    outcome = TIMEOUT
    hit_point = None
    path = 0.0
    first_detect = None
    n_ticks = int(round(sc.time_cap * cfg.control.twcc_rate))
    for _ in range(n_ticks):
        meas = sim.measured()
        if stop_after_first is None or first_detect is None:
            # while a turn is being flown only the obstacle that caused it is ignored
            skip = trigger if sim.t < lockout_until else None
            ob = detect_obstacle(meas.position, meas.velocity, obstacles, sc.sensing_range,
                                 sc.fov_deg, centers, exclude=skip)
            if ob is not None:
                steer = steer_draw(meas.position, meas.velocity, ob)
                traj = generate_avoidance(meas.position, meas.velocity, steer, sc.v_des, sim.t,
                                          sc.altitude, sc.accel_budget, sc.min_blend_time)
                lockout_until = traj.blend_end
                trigger = obstacles.index(ob)
                sim.events.append((sim.t, "replan", math.degrees(steer)))
                if first_detect is None:
                    first_detect = sim.t
        r_d, v_d = sample_reference(traj, sim.t)
        res = sim.tick(r_d, v_d)
        rows.append(res.row)
        tr = res.track
        path += float(np.sum(np.hypot(*np.diff(tr[:, :2], axis=0).T)))
        hit = _collision(tr, centers, reach) if hit_point is None else None
        if hit is not None:
            outcome, hit_point = COLLIDED, hit
            if stop_on_collision:
                break
        if sim.diverged(sc.altitude):
            outcome = DIVERGED
            break
        if stop_after_first is not None:
            if first_detect is not None and sim.t >= first_detect + stop_after_first - 1e-9:
                outcome = outcome if hit_point is not None else COMPLETED
                break
        elif path >= sc.travel_goal:
            outcome = outcome if hit_point is not None else COMPLETED
            break
    trace = np.array(rows)
    rec = RunRecord(trace, outcome, controller, trial, hit_point, layout_hash(centers), sim.events)
    end = hit_point if hit_point is not None and stop_on_collision else sim.x[0:3]
    rec.metrics = _metrics(rec, end)
    rec.metrics["layout_hash"] = rec.layout_hash
    rec.metrics["replans"] = sum(1 for e in sim.events if e[1] == "replan")
    return rec


def _steer_sampler(cfg: Config, rng: np.random.Generator):
    """Random turn size from the configured range, always away from the obstacle."""
    sc = cfg.scenario

    def draw(position, velocity, obstacle):
        mag = math.radians(rng.uniform(sc.steer_min_deg, sc.steer_max_deg))
        return steer_away(position, velocity, obstacle, mag)

    return draw


def run_forest_trial(cfg: Config, trial: int, controller: str | None = None, model=None,
                     empty: bool = False) -> RunRecord:
    controller = controller or cfg.scenario.controller
    model = _load_model(cfg, controller, model)
    layout_rng, steer_rng, noise_rng = trial_seeds(cfg.scenario.seed, trial)
    centers = np.zeros((0, 2)) if empty else forest_layout(cfg, layout_rng)
    return _fly(cfg, controller, model, centers, _steer_sampler(cfg, steer_rng), trial, noise_rng)


def run_steering_trial(cfg: Config, steer_deg: float, seed: int, controller: str | None = None,
                       model=None) -> RunRecord:
    """Single obstacle dead ahead (lateral offset jittered by ``seed``); on
    detection the heading is turned by ``steer_deg``.

    The obstacle only triggers the turn.  Contact with it is recorded but the
    run still covers the full tail, so every controller is scored over the
    same maneuver window.
    """
    controller = controller or cfg.scenario.controller
    model = _load_model(cfg, controller, model)
    sc = cfg.scenario
    rng, _, noise_rng = trial_seeds(sc.seed, seed)
    offset = rng.uniform(-0.3, 0.3)
    centers = np.array([[sc.sweep_obstacle_distance, offset]])
    steer = math.radians(steer_deg)
    rec = _fly(cfg, controller, model, centers, lambda *_: steer, seed, noise_rng,
               stop_after_first=sc.sweep_tail, stop_on_collision=False)
    rec.metrics["steer_deg"] = steer_deg
    return rec


def run_trial(cfg: Config, trial_index: int, controller: str | None = None, model=None) -> RunRecord:
    """Dispatch on ``cfg.scenario.kind``; ``trial_index`` picks the paired seed."""
    kind = cfg.scenario.kind
    if kind == "forest":
        return run_forest_trial(cfg, trial_index, controller, model)
    if kind == "steering_sweep":
        angles = cfg.scenario.steer_angles_deg
        rec = run_steering_trial(cfg, angles[trial_index % len(angles)], trial_index // len(angles),
                                 controller, model)
        rec.trial = trial_index
        rec.metrics["sweep_seed"] = trial_index // len(angles)
        return rec
    if kind == "hover_checks":
        return run_hover_check(cfg, controller or cfg.scenario.controller)
    raise ValueError(f"scenario kind {kind!r} has no closed-loop trial")


def run_hover_check(cfg: Config, controller: str = "wingless", duration: float = 5.0) -> RunRecord:
    sc = cfg.scenario
    start = DroneState(position=np.array([0.0, 0.0, sc.altitude]))
    sim = Simulation(cfg, make_estimator(controller, cfg.drone, _load_model(cfg, controller, None)), start)
    rows = []
    for _ in range(int(round(duration * cfg.control.twcc_rate))):
        rows.append(sim.tick(start.position, np.zeros(3)).row)
    rec = RunRecord(np.array(rows), COMPLETED, controller, 0)
    rec.metrics = _metrics(rec, sim.x[0:3])
    return rec


def _summarize(records) -> dict:
    ok = [r.outcome == COMPLETED for r in records]
    rmse = [r.metrics["tracking_rmse_m"] for r in records]
    dist = [r.metrics["travel_distance_m"] for r in records]
    return {
        "trials": len(records),
        "success_rate": float(np.mean(ok)) if records else 0.0,
        "mean_travel_distance_m": float(np.mean(dist)) if records else 0.0,
        "rmse_mean": float(np.mean(rmse)) if records else 0.0,
        "rmse_per_trial": rmse,
        "outcomes": [r.outcome for r in records],
    }


def run_batch(cfg: Config, controllers=CONTROLLERS, trials: int | None = None, model=None,
              out_dir: str | Path | None = None, workers: int = 1):
    """All trials for each controller with paired seeds.

    Returns ``(summary, records)`` where ``records[controller]`` lists the
    per-trial RunRecords.  Failing trials are logged and skipped.
    """
    trials = trials or cfg.scenario.trials
    if "parnn" in controllers:
        model = _load_model(cfg, "parnn", model)
    jobs = [(c, i) for c in controllers for i in range(trials)]
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(workers) as ex:
            futs = [ex.submit(run_trial, cfg, i, c, model if c == "parnn" else None) for c, i in jobs]
            results = []
            for (c, i), fut in zip(jobs, futs):
                try:
                    results.append(fut.result())
                except Exception as exc:  # noqa: BLE001 - batch continues
                    log.error("trial %s/%d failed: %s", c, i, exc)
                    results.append(None)
    else:
        results = []
        for c, i in jobs:
            try:
                results.append(run_trial(cfg, i, c, model if c == "parnn" else None))
            except Exception as exc:  # noqa: BLE001 - batch continues
                log.error("trial %s/%d failed: %s", c, i, exc)
                results.append(None)
    records = {c: [] for c in controllers}
    for (c, _), rec in zip(jobs, results):
        if rec is not None:
            records[c].append(rec)
    summary = {"scenario": cfg.scenario.kind, "seed": cfg.scenario.seed,
               "controllers": {c: _summarize(records[c]) for c in controllers}}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for c in controllers:
            for rec in records[c]:
                write_trace(rec, out / f"trace_{c}_{rec.trial:03d}.csv")
        write_json(summary, out / "summary.json")
    return summary, records


# -- data collection ---------------------------------------------------------

def collect_flight(cfg: Config, duration: float, seed: int, speed_max: float) -> FlightLog:
    """Random wings-spread maneuvering; returns a 10 Hz log in the dataset schema.

    The velocity setpoint is piecewise constant (held ``hold_min``..``hold_max``
    s); the position reference is placed at ``r + v_set / kp_pos`` so the outer
    loop asks for exactly that velocity.  Altitude stays within +-8 m of the start.
    """
    cc = cfg.collect
    if duration <= 0:
        log.warning("zero-duration collection requested; returning an empty log")
        return FlightLog()
    rng = np.random.default_rng(seed)
    z0 = cfg.scenario.altitude
    start = DroneState(position=np.array([0.0, 0.0, z0]))
    sim = Simulation(cfg, None, start)
    kp = np.asarray(cfg.control.kp_pos, dtype=float)
    v_set = np.zeros(3)
    next_change = 0.0
    rows = []
    for _ in range(int(round(duration * cfg.control.twcc_rate))):
        if sim.t >= next_change - 1e-9:
            speed = rng.uniform(0.0, speed_max)
            heading = rng.uniform(-math.pi, math.pi)
            vz = rng.uniform(-cc.vz_max, cc.vz_max)
            if abs(sim.x[2] - z0) > 8.0:
                vz = -math.copysign(abs(vz), sim.x[2] - z0)
            v_set = np.array([speed * math.cos(heading), speed * math.sin(heading), vz])
            next_change = sim.t + rng.uniform(cc.hold_min, cc.hold_max)
        r_ref = sim.x[0:3] + v_set / kp
        res = sim.tick(r_ref, v_set, force_wings=True)
        acc = res.accel + rng.normal(0.0, cc.accel_noise, 3)
        row = res.row
        rows.append([row[COL["t"]], *row[COL["vx"]:COL["vz"] + 1], *row[COL["phi"]:COL["psi"] + 1],
                     *acc, res.thrust, 1.0])
        if sim.diverged(z0, max_alt_err=30.0):
            log.warning("collection flight diverged at t=%.1f", sim.t)
            break
    return FlightLog(np.array(rows))


def collect_training_flights(cfg: Config):
    """One training log and ``n_test`` held-out logs, each with its own seed."""
    cc = cfg.collect
    train = collect_flight(cfg, cc.duration, cc.seed, cc.speed_max)
    tests = [collect_flight(cfg, cc.test_duration, cc.seed + 1 + i, cc.test_speed_max[i % len(cc.test_speed_max)])
             for i in range(cc.n_test)]
    return train, tests


# -- files -------------------------------------------------------------------

def write_trace(rec: RunRecord, path):
    mode_i = COL["mode"]
    int_cols = {COL["w_s"], COL["flag"]}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for row in rec.trace:
            out = []
            for j, v in enumerate(row):
                if j == mode_i:
                    out.append("WIIC" if v else "PC")
                elif j in int_cols:
                    out.append(str(int(v)))
                else:
                    out.append(repr(float(v)))
            w.writerow(out)


def read_trace(path) -> np.ndarray:
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if tuple(header) != TRACE_COLUMNS:
            raise ValueError(f"{path}: unexpected trace header")
        rows = []
        for row in r:
            vals = [(1.0 if v == "WIIC" else 0.0) if v in ("PC", "WIIC") else float(v) for v in row]
            rows.append(vals)
    return np.array(rows)


def write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")
