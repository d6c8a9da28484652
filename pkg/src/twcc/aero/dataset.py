"""Flight logs, force labels and windowed training samples."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..config import DroneParams

log = logging.getLogger(__name__)

LOG_COLUMNS = ("t", "vx", "vy", "vz", "phi", "theta", "psi", "ax", "ay", "az", "U_sum", "w_s")
LOG_DT = 0.1


def normals_from_euler(euler) -> np.ndarray:
    """Body z axis in the world frame for ZYX angles, shape (..., 3)."""
    e = np.asarray(euler, dtype=float)
    phi, theta, psi = e[..., 0], e[..., 1], e[..., 2]
    sphi, cphi = np.sin(phi), np.cos(phi)
    sth, cth = np.sin(theta), np.cos(theta)
    spsi, cpsi = np.sin(psi), np.cos(psi)
    return np.stack([
        spsi * sphi + cpsi * sth * cphi,
        -cpsi * sphi + spsi * sth * cphi,
        cth * cphi,
    ], axis=-1)


class FlightLog:
    """Column table sampled at 10 Hz with the ``LOG_COLUMNS`` schema."""

    def __init__(self, data=None):
        if data is None:
            data = np.zeros((0, len(LOG_COLUMNS)))
        self.data = np.asarray(data, dtype=float).reshape(-1, len(LOG_COLUMNS))

    def __len__(self):
        return self.data.shape[0]

    def col(self, *names) -> np.ndarray:
        idx = [LOG_COLUMNS.index(n) for n in names]
        return self.data[:, idx[0]] if len(idx) == 1 else self.data[:, idx]

    @property
    def velocity(self):
        return self.col("vx", "vy", "vz")

    @property
    def euler(self):
        return self.col("phi", "theta", "psi")

    @property
    def accel(self):
        return self.col("ax", "ay", "az")

    def speed_range(self):
        s = np.linalg.norm(self.velocity, axis=1)
        return float(s.min()), float(s.max())

    def save(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_COLUMNS)
            for row in self.data:
                w.writerow([repr(float(v)) for v in row[:-1]] + [str(int(row[-1]))])

    @classmethod
    def load(cls, path) -> "FlightLog":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = tuple(next(r))
            if header != LOG_COLUMNS:
                raise ValueError(f"{path}: unexpected header {header}")
            rows = [[float(v) for v in row] for row in r if row]
        return cls(np.array(rows) if rows else None)


def label_from_log(accel, euler, thrust, params: DroneParams) -> np.ndarray:
    """Aerodynamic force that explains the logged motion.

    f_a = m r_ddot - m g e3 - R_wb [0, 0, -U] = m r_ddot - m g e3 + U n.
    Works row-wise on stacked inputs.
    """
    accel = np.asarray(accel, dtype=float)
    n = normals_from_euler(euler)
    thrust = np.asarray(thrust, dtype=float)[..., None]
    f = params.mass * accel + thrust * n
    f[..., 2] -= params.mass * params.gravity
    return f


def moving_average(x, width: int) -> np.ndarray:
    """Centered moving average along axis 0; the window shrinks at the ends."""
    x = np.asarray(x, dtype=float)
    if width <= 1 or len(x) == 0:
        return x.copy()
    half = width // 2
    csum = np.concatenate([np.zeros((1,) + x.shape[1:]), np.cumsum(x, axis=0)])
    idx = np.arange(len(x))
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, len(x))
    return (csum[hi] - csum[lo]) / (hi - lo).reshape((-1,) + (1,) * (x.ndim - 1))


@dataclass
class AeroSequenceSample:
    inputs: np.ndarray  # (window, 6): vx vy vz phi theta psi
    label: np.ndarray  # (3,)
    t_end: float = 0.0
    index: int = 0  # log row of the final step


def build_dataset(flight_log: FlightLog, params: DroneParams, window: int = 10,
                  smoothing: int = 3) -> list[AeroSequenceSample]:
    """Stride-1 windows of length ``window``, labelled at their final step.

    With ``smoothing > 1`` the per-row force (acceleration and thrust terms
    together) is passed through a centered moving average before windowing;
    smoothing the acceleration alone mixes time bases and biases the label.
    Windows that contain any folded-wing step are dropped.
    """
    n = len(flight_log)
    if n < window:
        log.warning("flight log has %d rows, fewer than the window of %d", n, window)
        return []
    labels = label_from_log(flight_log.accel, flight_log.euler, flight_log.col("U_sum"), params)
    labels = moving_average(labels, smoothing)
    feats = flight_log.col("vx", "vy", "vz", "phi", "theta", "psi")
    ws = flight_log.col("w_s")
    t = flight_log.col("t")
    folded = np.concatenate([[0], np.cumsum(ws == 0)])
    samples = []
    for end in range(window - 1, n):
        start = end - window + 1
        if folded[end + 1] - folded[start] > 0:
            continue
        samples.append(AeroSequenceSample(feats[start:end + 1].copy(), labels[end].copy(),
                                          float(t[end]), end))
    return samples


@dataclass
class SampleBatch:
    """Stacked samples plus the derived per-step features the networks read."""

    raw: np.ndarray  # (N, T, 6)
    labels: np.ndarray  # (N, 3)

    @classmethod
    def from_samples(cls, samples) -> "SampleBatch":
        if len(samples) == 0:
            raise ValueError("empty dataset")
        return cls(np.stack([s.inputs for s in samples]), np.stack([s.label for s in samples]))

    def __len__(self):
        return self.raw.shape[0]

    def subset(self, idx) -> "SampleBatch":
        return SampleBatch(self.raw[idx], self.labels[idx])

    @property
    def velocity(self):
        return self.raw[:, -1, 0:3]

    @property
    def normal(self):
        return normals_from_euler(self.raw[:, -1, 3:6])

    def features(self, v_eps: float = 0.05) -> np.ndarray:
        """Per-step inputs [vx, vy, vz, phi, theta, psi, |v|, alpha], shape (N, T, 8)."""
        v = self.raw[..., 0:3]
        speed = np.linalg.norm(v, axis=-1)
        n = normals_from_euler(self.raw[..., 3:6])
        with np.errstate(invalid="ignore", divide="ignore"):
            c = np.where(speed > v_eps, np.sum(v * n, axis=-1) / np.where(speed > 0, speed, 1.0), 0.0)
        alpha = np.arcsin(np.clip(c, -1.0, 1.0))
        return np.concatenate([self.raw, speed[..., None], alpha[..., None]], axis=-1)


def split_contiguous(samples, val_fraction: float = 0.2):
    """Train/validation split at a time boundary; windows straddling it are dropped."""
    if not samples:
        return [], []
    ends = np.array([s.index for s in samples])
    lo, hi = ends.min(), ends.max()
    cut = lo + (1.0 - val_fraction) * (hi - lo)
    window = samples[0].inputs.shape[0]
    train = [s for s in samples if s.index <= cut]
    val = [s for s in samples if s.index - window + 1 > cut]
    return train, val


def samples_from_logs(paths, params: DroneParams, window: int = 10, smoothing: int = 3):
    out = []
    for p in paths:
        out.extend(build_dataset(FlightLog.load(Path(p)), params, window, smoothing))
    return out


def speed_span(samples) -> tuple[float, float]:
    s = [float(np.linalg.norm(x.inputs[-1, :3])) for x in samples]
    return (min(s), max(s)) if s else (math.nan, math.nan)
