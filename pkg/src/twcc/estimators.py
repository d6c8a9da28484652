"""Wing-force predictors the supervisory controller can consult.

Each is a callable ``estimator(state) -> f_hat`` giving the world-frame force
the wings would produce if spread at ``state``.  They are called once per
supervisory tick; the learned one keeps its own 10-step input history.
"""
from __future__ import annotations

from collections import deque

import numpy as np

from .aero.dataset import SampleBatch
from .aero.rnn import RnnModel, predict_force
from .config import DroneParams
from .plant import DroneState, flat_plate_force


class FlatPlateEstimator:
    mode = "flat_plate"

    def __init__(self, params: DroneParams):
        self.params = params

    def __call__(self, state: DroneState) -> np.ndarray:
        return flat_plate_force(state, self.params, wings=1)

    def reset(self):
        pass


class RnnEstimator:
    """Runs a trained network on the last ``window`` supervisory samples.

    Until the history is full the earliest sample is repeated.
    """

    mode = "parnn"

    def __init__(self, model: RnnModel, params: DroneParams, window: int = 10):
        self.model = model
        self.params = params
        self.window = window
        self.history = deque(maxlen=window)

    def reset(self):
        self.history.clear()

    def __call__(self, state: DroneState) -> np.ndarray:
        row = np.concatenate([state.velocity, state.euler])
        self.history.append(row)
        rows = list(self.history)
        if len(rows) < self.window:
            rows = [rows[0]] * (self.window - len(rows)) + rows
        batch = SampleBatch(np.array(rows)[None], np.zeros((1, 3)))
        return predict_force(self.model, batch, self.params)[0]


def make_estimator(controller: str, params: DroneParams, model: RnnModel | None = None):
    if controller == "wingless":
        return None
    if controller == "flat_plate":
        return FlatPlateEstimator(params)
    if controller == "parnn":
        if model is None:
            raise ValueError("the parnn controller needs a trained model")
        return RnnEstimator(model, params)
    raise ValueError(f"unknown controller {controller!r}")
