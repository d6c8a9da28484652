"""Time the compiled and pure-numpy paths of the closed-loop kernels.

Each path needs its own interpreter because the choice is made at import:

    python3 benchmarks/bench_kernels.py            # runs both, prints a table
    python3 benchmarks/bench_kernels.py --single   # current path only
"""
import argparse
import json
import os
import subprocess
import sys
import time


def run_single(intervals: int) -> dict:
    import numpy as np

    from twcc import kernels as K
    from twcc._jit import USE_NUMBA
    from twcc.config import Config
    from twcc.plant import AllocationMatrix, DroneState, pack_params

    cfg = Config()
    p = pack_params(cfg.drone, cfg.oracle, cfg.control)
    alloc = AllocationMatrix(cfg.drone)
    x0 = DroneState.from_euler(0.2, -0.1, 0.0, velocity=np.array([5.0, 1.0, 0.0])).as_vector()
    target = np.array([0.1, -0.3, 0.0])
    args = (target, 7.0, np.zeros(3), p, alloc.T, alloc.T_inv, K.FA_ORACLE, np.zeros(3), 30, 10, 1.0 / 3000)

    t0 = time.perf_counter()
    K.advance_interval(x0.copy(), *args[:2], np.zeros(3), *args[3:])  # compile / warm up
    warm = time.perf_counter() - t0
    x = x0.copy()
    chi = np.zeros(3)
    t0 = time.perf_counter()
    for _ in range(intervals):
        x, *_ = K.advance_interval(x, target, 7.0, chi, *args[3:])
    dt = time.perf_counter() - t0
    return {"numba": USE_NUMBA, "intervals": intervals, "seconds": dt,
            "sim_seconds_per_wall_second": intervals * 0.1 / dt, "first_call_s": warm,
            "final_z": float(x[2])}


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--single", action="store_true")
    ap.add_argument("--intervals", type=int, default=200)
    args = ap.parse_args()
    if args.single:
        print(json.dumps(run_single(args.intervals)))
        return
    rows = []
    for disable in ("0", "1"):
        env = dict(os.environ, TWCC_DISABLE_NUMBA=disable)
        n = args.intervals if disable == "0" else max(args.intervals // 10, 5)
        out = subprocess.run([sys.executable, __file__, "--single", "--intervals", str(n)],
                             env=env, capture_output=True, text=True, check=True)
        rows.append(json.loads(out.stdout.strip().splitlines()[-1]))
    print(f"{'path':<8}{'intervals':>10}{'wall s':>9}{'sim s / wall s':>16}{'first call s':>14}")
    for r in rows:
        name = "numba" if r["numba"] else "numpy"
        print(f"{name:<8}{r['intervals']:>10}{r['seconds']:>9.3f}"
              f"{r['sim_seconds_per_wall_second']:>16.2f}{r['first_call_s']:>14.2f}")
    print(f"speed-up {rows[0]['sim_seconds_per_wall_second'] / rows[1]['sim_seconds_per_wall_second']:.0f}x")


if __name__ == "__main__":
    main()
