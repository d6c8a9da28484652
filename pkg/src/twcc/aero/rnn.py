"""Two-layer Elman RNN with a physics-assisted head, trained by BPTT.

``kind="parnn"`` emits (alpha_w, gamma) which are turned into a force by the
virtual-plane reconstruction; ``kind="vanilla"`` emits the force directly.
Both read the same per-step features
``[vx, vy, vz, phi, theta, psi, |v|, alpha]`` (z-scored with training
statistics) over a window of 10 steps.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..config import DroneParams, TrainConfig
from .dataset import SampleBatch
from .reconstruct import reconstruct_batch

log = logging.getLogger(__name__)

N_FEATURES = 8
WEIGHT_NAMES = ("W1x", "W1h", "b1", "W2x", "W2h", "b2", "Wo", "bo")


class TrainingDiverged(RuntimeError):
    pass


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _inv_softplus(y):
    return math.log(math.expm1(y))


@dataclass
class RnnModel:
    kind: str
    weights: dict
    mean: np.ndarray = field(default_factory=lambda: np.zeros(N_FEATURES))
    scale: np.ndarray = field(default_factory=lambda: np.ones(N_FEATURES))
    out_scale: float = 1.0
    gamma_floor: float = 0.05

    @property
    def hidden(self) -> int:
        return self.weights["W1h"].shape[0]

    @property
    def n_out(self) -> int:
        return self.weights["Wo"].shape[0]

    @classmethod
    def zeros(cls, kind: str = "parnn", hidden: int = 8, n_in: int = N_FEATURES, **kw) -> "RnnModel":
        n_out = 2 if kind == "parnn" else 3
        shapes = _shapes(n_in, hidden, n_out)
        return cls(kind, {k: np.zeros(s) for k, s in shapes.items()}, **kw)

    @classmethod
    def init(cls, kind: str, rng: np.random.Generator, hidden: int = 8, n_in: int = N_FEATURES,
             gamma_floor: float = 0.05, **kw) -> "RnnModel":
        """Glorot-style random weights.  The paRNN head starts at the flat-plate
        solution (alpha_w = 0, gamma = 1)."""
        model = cls.zeros(kind, hidden, n_in, gamma_floor=gamma_floor, **kw)
        w = model.weights
        for name in ("W1x", "W1h", "W2x", "W2h"):
            fan_out, fan_in = w[name].shape
            w[name] = rng.normal(0.0, math.sqrt(1.0 / fan_in), size=w[name].shape)
        if kind == "parnn":
            w["Wo"] = rng.normal(0.0, 0.01, size=w["Wo"].shape)
            w["bo"][1] = _inv_softplus(1.0 - gamma_floor)
        else:
            w["Wo"] = rng.normal(0.0, math.sqrt(1.0 / hidden), size=w["Wo"].shape)
        return model

    def copy(self) -> "RnnModel":
        return RnnModel(self.kind, {k: v.copy() for k, v in self.weights.items()},
                        self.mean.copy(), self.scale.copy(), self.out_scale, self.gamma_floor)

    def check_finite(self):
        for k, v in self.weights.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite weights in {k}")

    # -- persistence ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n_in": int(self.weights["W1x"].shape[1]),
            "hidden": self.hidden,
            "n_out": self.n_out,
            "window": 10,
            "gamma_floor": self.gamma_floor,
            "out_scale": self.out_scale,
            "mean": self.mean.tolist(),
            "scale": self.scale.tolist(),
            "weights": {k: self.weights[k].tolist() for k in WEIGHT_NAMES},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RnnModel":
        weights = {k: np.array(d["weights"][k], dtype=float) for k in WEIGHT_NAMES}
        model = cls(d["kind"], weights, np.array(d["mean"]), np.array(d["scale"]),
                    float(d["out_scale"]), float(d["gamma_floor"]))
        model.check_finite()
        return model

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "RnnModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def _shapes(n_in, hidden, n_out):
    return {
        "W1x": (hidden, n_in), "W1h": (hidden, hidden), "b1": (hidden,),
        "W2x": (hidden, hidden), "W2h": (hidden, hidden), "b2": (hidden,),
        "Wo": (n_out, hidden), "bo": (n_out,),
    }


def forward(model: RnnModel, X, cache: bool = False):
    """Run the recurrence over normalized inputs ``X`` of shape (N, T, D).

    Returns the raw head output (N, n_out) and, with ``cache``, the hidden
    trajectories needed for backpropagation.
    """
    w = model.weights
    N, T, _ = X.shape
    H = model.hidden
    h1 = np.zeros((N, H))
    h2 = np.zeros((N, H))
    H1 = [h1]
    H2 = [h2]
    for t in range(T):
        h1 = np.tanh(X[:, t] @ w["W1x"].T + h1 @ w["W1h"].T + w["b1"])
        h2 = np.tanh(h1 @ w["W2x"].T + h2 @ w["W2h"].T + w["b2"])
        if cache:
            H1.append(h1)
            H2.append(h2)
    y = h2 @ w["Wo"].T + w["bo"]
    if cache:
        return y, (X, H1, H2)
    return y


def backward(model: RnnModel, dy, cache) -> dict:
    """Gradients of a loss w.r.t. all weights, given dL/dy at the last step."""
    w = model.weights
    X, H1, H2 = cache
    T = X.shape[1]
    g = {k: np.zeros_like(v) for k, v in w.items()}
    g["Wo"] = dy.T @ H2[T]
    g["bo"] = dy.sum(axis=0)
    dh2 = dy @ w["Wo"]
    dh1_rec = np.zeros_like(H1[0])
    for t in range(T, 0, -1):
        dz2 = dh2 * (1.0 - H2[t] ** 2)
        g["W2x"] += dz2.T @ H1[t]
        g["W2h"] += dz2.T @ H2[t - 1]
        g["b2"] += dz2.sum(axis=0)
        dh1 = dz2 @ w["W2x"] + dh1_rec
        dh2 = dz2 @ w["W2h"]
        dz1 = dh1 * (1.0 - H1[t] ** 2)
        g["W1x"] += dz1.T @ X[:, t - 1]
        g["W1h"] += dz1.T @ H1[t - 1]
        g["b1"] += dz1.sum(axis=0)
        dh1_rec = dz1 @ w["W1h"]
    return g


def normalize(model: RnnModel, feats):
    return (feats - model.mean) / model.scale


def heads(model: RnnModel, y):
    """(alpha_w, gamma) for the paRNN head."""
    return y[:, 0], softplus(y[:, 1]) + model.gamma_floor


def rnn_forward(model: RnnModel, sample_inputs, v_eps: float = 0.05):
    """Outputs for one window of raw inputs (T, 6): ``(alpha_w, gamma)`` for the
    paRNN, or the 3-vector force for the vanilla network."""
    model.check_finite()
    batch = SampleBatch(np.asarray(sample_inputs, dtype=float)[None], np.zeros((1, 3)))
    y = forward(model, normalize(model, batch.features(v_eps)))
    if model.kind == "parnn":
        a, gm = heads(model, y)
        return float(a[0]), float(gm[0])
    return y[0] * model.out_scale


def predict_force(model: RnnModel, batch: SampleBatch, params: DroneParams) -> np.ndarray:
    y = forward(model, normalize(model, batch.features(params.v_eps)))
    if model.kind == "vanilla":
        return y * model.out_scale
    a, gm = heads(model, y)
    return reconstruct_batch(a, gm, batch.velocity, batch.normal, params.air_density,
                             params.wing_area, params.v_eps)


def loss_and_grad(model: RnnModel, batch: SampleBatch, params: DroneParams, X=None):
    """Mean squared force error (over samples and components) and its gradient."""
    if X is None:
        X = normalize(model, batch.features(params.v_eps))
    y, cache = forward(model, X, cache=True)
    N = len(batch)
    if model.kind == "vanilla":
        pred = y * model.out_scale
        r = pred - batch.labels
        dy = (2.0 / (3 * N)) * r * model.out_scale
    else:
        a, gm = heads(model, y)
        pred, dfa, dfg = reconstruct_batch(a, gm, batch.velocity, batch.normal, params.air_density,
                                           params.wing_area, params.v_eps, with_grad=True)
        r = pred - batch.labels
        dpred = (2.0 / (3 * N)) * r
        dy = np.empty_like(y)
        dy[:, 0] = np.sum(dpred * dfa, axis=1)
        dy[:, 1] = np.sum(dpred * dfg, axis=1) * sigmoid(y[:, 1])
    loss = float(np.mean(r * r))
    return loss, backward(model, dy, cache)


def evaluate(model: RnnModel, batch: SampleBatch, params: DroneParams) -> float:
    """sqrt(mean over samples of |f_hat - f|^2 / 3): per-component RMSE in N."""
    if len(batch) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    r = predict_force(model, batch, params) - batch.labels
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1) / 3.0)))


def fit_normalization(model: RnnModel, batch: SampleBatch, v_eps: float = 0.05):
    feats = batch.features(v_eps).reshape(-1, N_FEATURES)
    model.mean = feats.mean(axis=0)
    model.scale = np.maximum(feats.std(axis=0), 1e-6)
    if model.kind == "vanilla":
        model.out_scale = float(max(batch.labels.std(), 1e-6))


class Adam:
    def __init__(self, params: dict, lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict):
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for k in params:
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * grads[k]
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * grads[k] ** 2
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


def clip_gradients(grads: dict, max_norm: float) -> float:
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if max_norm > 0 and total > max_norm:
        s = max_norm / total
        for k in grads:
            grads[k] *= s
    return total


@dataclass
class TrainResult:
    model: RnnModel
    train_loss: list
    val_rmse: list
    best_episode: int


def train_bptt(model: RnnModel, train: SampleBatch, cfg: TrainConfig, params: DroneParams,
               val: SampleBatch | None = None, fit_stats: bool = True) -> TrainResult:
    """Adam + gradient clipping over ``cfg.episodes`` passes of the data.

    Returns the weights with the best validation RMSE (or the last weights if
    no validation set is given).
    """
    if len(train) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    model = model.copy()
    if fit_stats:
        fit_normalization(model, train, params.v_eps)
    X = normalize(model, train.features(params.v_eps))
    opt = Adam(model.weights, cfg.learning_rate)
    best = (math.inf, model.copy(), 0)
    losses, vals = [], []
    N = len(train)
    for ep in range(cfg.episodes):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = loss_and_grad(model, train.subset(idx), params, X[idx])
            if not math.isfinite(loss):
                raise TrainingDiverged(f"loss became {loss} at episode {ep}")
            clip_gradients(grads, cfg.clip_norm)
            if cfg.learning_rate > 0:
                opt.step(model.weights, grads)
            total += loss * len(idx)
        losses.append(total / N)
        if val is not None and len(val):
            rmse = evaluate(model, val, params)
            vals.append(rmse)
            if rmse < best[0]:
                best = (rmse, model.copy(), ep)
        if ep % 100 == 0:
            log.debug("%s episode %d loss %.5f", model.kind, ep, losses[-1])
    if val is None or not len(val):
        return TrainResult(model, losses, vals, cfg.episodes - 1)
    return TrainResult(best[1], losses, vals, best[2])
