"""Obstacle detection and avoidance reference generation.

An avoidance reference has two phases: a cubic blend from the current
velocity to ``v_des`` along the new heading (peak acceleration at the start,
zero acceleration at the hand-over), then a constant-velocity line.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

V_EPS = 0.05


@dataclass(frozen=True)
class Obstacle:
    center: tuple
    radius: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError("obstacle radius must be positive")


@dataclass(frozen=True)
class Segment:
    t0: float
    duration: float  # math.inf for the open-ended line
    coeffs: np.ndarray  # (3, 4): per-axis c0 + c1 s + c2 s^2 + c3 s^3, s = t - t0

    def eval(self, t):
        s = t - self.t0
        c = self.coeffs
        pos = c[:, 0] + s * (c[:, 1] + s * (c[:, 2] + s * c[:, 3]))
        vel = c[:, 1] + s * (2.0 * c[:, 2] + s * 3.0 * c[:, 3])
        return pos, vel


@dataclass(frozen=True)
class ReferenceTrajectory:
    segments: tuple
    v_des: float
    heading: float = 0.0

    @property
    def t0(self) -> float:
        return self.segments[0].t0

    @property
    def blend_end(self) -> float:
        first = self.segments[0]
        return first.t0 + (first.duration if len(self.segments) > 1 else 0.0)


def detect_obstacle(position, velocity, obstacles, sensing_range: float,
                    fov_deg: float = 15.0, centers: np.ndarray | None = None,
                    exclude: int | None = None):
    """Nearest obstacle within ``sensing_range`` and +-``fov_deg`` of the
    horizontal direction of motion, or ``None``.

    ``centers`` may carry a precomputed (N, 2) array of obstacle centers;
    ``exclude`` is an index into ``obstacles`` to ignore.
    """
    vh = np.asarray(velocity, dtype=float)[:2]
    speed = math.hypot(vh[0], vh[1])
    if speed <= V_EPS or len(obstacles) == 0:
        return None
    if centers is None:
        centers = np.array([o.center for o in obstacles], dtype=float).reshape(-1, 2)
    d = centers - np.asarray(position, dtype=float)[:2]
    dist = np.hypot(d[:, 0], d[:, 1])
    near = np.nonzero(dist <= sensing_range)[0]
    if exclude is not None:
        near = near[near != exclude]
    if near.size == 0:
        return None
    u = vh / speed
    cosang = (d[near] @ u) / np.maximum(dist[near], 1e-12)
    inside = near[cosang >= math.cos(math.radians(fov_deg))]
    if inside.size == 0:
        return None
    return obstacles[int(inside[np.argmin(dist[inside])])]


def steer_away(position, velocity, obstacle: Obstacle, magnitude: float) -> float:
    """Signed steering angle of size ``magnitude`` turning away from ``obstacle``.

    Positive angles are counterclockwise seen from above, which in the z-down
    frame carries the heading toward -y; an obstacle on the +y side of the
    direction of motion therefore gets a positive angle.
    """
    d = np.asarray(obstacle.center, dtype=float) - np.asarray(position, dtype=float)[:2]
    v = np.asarray(velocity, dtype=float)[:2]
    side = v[0] * d[1] - v[1] * d[0]
    return abs(magnitude) if side >= 0.0 else -abs(magnitude)


def blend_duration(dv_norm: float, accel_budget: float = 6.0, t_min: float = 0.5) -> float:
    return max(t_min, 2.0 * dv_norm / accel_budget)


def cubic_blend_coeffs(p0, v0, v1, T):
    """Per-axis cubic with p(0)=p0, p'(0)=v0, p'(T)=v1, p''(T)=0.

    Acceleration falls linearly from 2 (v1 - v0) / T to zero.
    """
    p0, v0, v1 = (np.asarray(a, dtype=float) for a in (p0, v0, v1))
    dv = v1 - v0
    c2 = dv / T
    c3 = -dv / (3.0 * T * T)
    return np.column_stack([p0, v0, c2, c3])


def generate_avoidance(position, velocity, steer_angle: float, v_des: float, t0: float,
                       altitude: float | None = None, accel_budget: float = 6.0,
                       t_min: float = 0.5, heading: float | None = None) -> ReferenceTrajectory:
    """Reference that turns the horizontal heading by ``steer_angle`` (rad,
    counter-clockwise seen from above) and settles at speed ``v_des``.

    Time is re-anchored at ``t0`` and space at the current position.  The
    current heading comes from the horizontal velocity, or from ``heading``
    when the vehicle is (nearly) at rest.
    """
    if not v_des > 0:
        raise ValueError("v_des must be positive")
    p0 = np.array(position, dtype=float)
    v0 = np.array(velocity, dtype=float)
    if altitude is not None:
        p0[2] = altitude
    v0[2] = 0.0
    speed = math.hypot(v0[0], v0[1])
    base = math.atan2(v0[1], v0[0]) if speed > V_EPS else (heading or 0.0)
    # "counter-clockwise seen from above" in a north-east-down frame is a
    # negative rotation about +z (down)
    new_heading = base - steer_angle
    v1 = v_des * np.array([math.cos(new_heading), math.sin(new_heading), 0.0])
    dv = float(np.linalg.norm(v1 - v0))
    segs = []
    t_line = t0
    p_line = p0
    if dv > 1e-12:
        T = blend_duration(dv, accel_budget, t_min)
        coeffs = cubic_blend_coeffs(p0, v0, v1, T)
        seg = Segment(t0, T, coeffs)
        segs.append(seg)
        p_line, _ = seg.eval(t0 + T)
        t_line = t0 + T
    line = np.column_stack([p_line, v1, np.zeros(3), np.zeros(3)])
    segs.append(Segment(t_line, math.inf, line))
    return ReferenceTrajectory(tuple(segs), v_des, new_heading)


def sample_reference(traj: ReferenceTrajectory, t: float):
    """(r_d, v_d) at time ``t``; past the blend the line is extrapolated."""
    if t < traj.t0 - 1e-12:
        raise ValueError("sample time precedes trajectory start")
    for seg in traj.segments:
        if t <= seg.t0 + seg.duration:
            return seg.eval(t)
    return traj.segments[-1].eval(t)
