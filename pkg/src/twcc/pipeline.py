"""End-to-end learning run: collect flight logs, train both networks, score them."""
from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .aero.dataset import FlightLog, SampleBatch, build_dataset, speed_span, split_contiguous
from .aero.reconstruct import reconstruct_batch
from .aero.rnn import RnnModel, TrainResult, evaluate, train_bptt
from .config import Config
from .harness import collect_training_flights, write_json

log = logging.getLogger(__name__)

KINDS = ("parnn", "vanilla")


@dataclass
class Datasets:
    train: SampleBatch
    val: SampleBatch
    tests: list
    logs: list  # [train_log, *test_logs]


def prepare_datasets(cfg: Config, logs=None) -> Datasets:
    """Windowed batches from one training log and the held-out test logs."""
    if logs is None:
        train_log, test_logs = collect_training_flights(cfg)
        logs = [train_log, *test_logs]
    tc = cfg.train
    samples = build_dataset(logs[0], cfg.drone, tc.window, tc.smoothing)
    tr, va = split_contiguous(samples, tc.val_fraction)
    tests = [SampleBatch.from_samples(build_dataset(lg, cfg.drone, tc.window, tc.smoothing))
             for lg in logs[1:]]
    log.info("train speeds %.2f..%.2f m/s, %d train / %d val windows",
             *speed_span(samples), len(tr), len(va))
    return Datasets(SampleBatch.from_samples(tr), SampleBatch.from_samples(va), tests, list(logs))


def flat_plate_rmse(batch: SampleBatch, cfg: Config) -> float:
    p = cfg.drone
    n = len(batch)
    f = reconstruct_batch(np.zeros(n), np.ones(n), batch.velocity, batch.normal,
                          p.air_density, p.wing_area, p.v_eps)
    r = f - batch.labels
    return float(np.sqrt(np.mean(np.sum(r * r, axis=1) / 3.0)))


def train_models(cfg: Config, data: Datasets, kinds=KINDS) -> dict[str, TrainResult]:
    out = {}
    for kind in kinds:
        model = RnnModel.init(kind, np.random.default_rng(cfg.train.seed), hidden=cfg.train.hidden,
                              gamma_floor=cfg.train.gamma_floor)
        out[kind] = train_bptt(model, data.train, cfg.train, cfg.drone, data.val)
    return out


def compare_estimators(cfg: Config, out_dir: str | Path | None = None, data: Datasets | None = None) -> dict:
    """Train paRNN and the vanilla baseline under the same budget and score both.

    The report holds per-test-set RMSE (N, per component) for paRNN, vanilla
    and the untrained flat-plate model, the relative improvement of paRNN over
    vanilla, and the wall time.  With ``out_dir`` the logs, both models, the
    loss history and the report are written there.
    """
    t0 = time.perf_counter()
    data = data or prepare_datasets(cfg)
    results = train_models(cfg, data)
    params = cfg.drone
    report = {"episodes": cfg.train.episodes, "tests": []}
    for i, batch in enumerate(data.tests):
        row = {"index": i, "samples": len(batch), "flat_plate": flat_plate_rmse(batch, cfg)}
        for kind, res in results.items():
            row[kind] = evaluate(res.model, batch, params)
        row["improvement"] = 1.0 - row["parnn"] / row["vanilla"]
        row["speed_range"] = list(data.logs[i + 1].speed_range())
        report["tests"].append(row)
    report["mean_improvement"] = float(np.mean([r["improvement"] for r in report["tests"]]))
    for kind, res in results.items():
        report[f"{kind}_best_episode"] = res.best_episode
        report[f"{kind}_val_rmse"] = float(min(res.val_rmse)) if res.val_rmse else None
    report["train_speed_range"] = list(data.logs[0].speed_range())
    report["wall_time_s"] = time.perf_counter() - t0
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        data.logs[0].save(out / "train_log.csv")
        for i, lg in enumerate(data.logs[1:]):
            lg.save(out / f"test_log_{i}.csv")
        results["parnn"].model.save(out / "model.json")
        results["vanilla"].model.save(out / "vanilla.json")
        write_loss_history(results, out / "loss_history.csv")
        saved = dict(report)
        saved.pop("wall_time_s")
        write_json(saved, out / "train_report.json")
    report["models"] = {k: r.model for k, r in results.items()}
    return report


def write_loss_history(results: dict[str, TrainResult], path):
    kinds = list(results)
    n = max(len(results[k].train_loss) for k in kinds)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["episode"] + [f"{k}_{c}" for k in kinds for c in ("train_loss", "val_rmse")])
        for e in range(n):
            row = [e]
            for k in kinds:
                r = results[k]
                row.append(repr(float(r.train_loss[e])) if e < len(r.train_loss) else "")
                row.append(repr(float(r.val_rmse[e])) if e < len(r.val_rmse) else "")
            w.writerow(row)


def load_logs(paths) -> list[FlightLog]:
    return [FlightLog.load(p) for p in paths]
