import numpy as np
import pytest

from twcc.aero.dataset import (LOG_COLUMNS, FlightLog, SampleBatch, build_dataset, label_from_log,
                               moving_average, normals_from_euler, split_contiguous)
from twcc.config import Config
from twcc.plant import DroneState, body_normal
from twcc.sim import COL, Simulation


def _log(n, rng, folded=()):
    data = np.zeros((n, len(LOG_COLUMNS)))
    data[:, 0] = np.arange(n) * 0.1
    data[:, 1:4] = rng.normal(0, 3, (n, 3))
    data[:, 4:7] = rng.uniform(-0.3, 0.3, (n, 3))
    data[:, 7:10] = rng.normal(0, 1, (n, 3))
    data[:, 10] = 5.0
    data[:, 11] = 1
    for i in folded:
        data[i, 11] = 0
    return FlightLog(data)


def test_normals_match_rotation(rng):
    e = rng.uniform(-1, 1, (20, 3))
    n = normals_from_euler(e)
    for row, ni in zip(e, n):
        assert np.allclose(ni, body_normal(DroneState.from_euler(*row)), atol=1e-12)


def test_label_at_hover_is_zero(params):
    f = label_from_log(np.zeros(3), np.zeros(3), params.hover_thrust, params)
    assert np.max(np.abs(f)) < 1e-12


def test_label_hand_computed(params):
    # level attitude, 1 m/s^2 forward, thrust 6 N: f = m a - m g e3 + U e3
    f = label_from_log([1.0, 0.0, 0.0], [0.0, 0.0, 0.0], 6.0, params)
    assert np.allclose(f, [params.mass, 0.0, 6.0 - params.hover_thrust], atol=1e-12)


def test_moving_average_matches_convolution(rng):
    x = rng.normal(size=(40, 3))
    y = moving_average(x, 3)
    k = np.ones(3) / 3
    for j in range(3):
        assert np.allclose(y[1:-1, j], np.convolve(x[:, j], k, mode="valid"), atol=1e-12)
    assert np.allclose(y[0], x[:2].mean(axis=0))
    assert np.allclose(moving_average(x, 1), x)


def test_windows_skip_folded_rows(rng, params):
    lg = _log(30, rng, folded=(12,))
    samples = build_dataset(lg, params, window=10, smoothing=1)
    # windows ending at 9..29 are 21; those containing row 12 end at 12..21
    assert len(samples) == 21 - 10
    for s in samples:
        assert not (s.index - 9 <= 12 <= s.index)
        assert s.inputs.shape == (10, 6)
    assert build_dataset(_log(5, rng), params) == []


def test_labels_use_final_step(rng, params):
    lg = _log(15, rng)
    s = build_dataset(lg, params, window=10, smoothing=1)[0]
    expect = label_from_log(lg.accel[9], lg.euler[9], lg.col("U_sum")[9], params)
    assert np.allclose(s.label, expect)
    assert np.allclose(s.inputs[-1], lg.data[9, 1:7])


def test_split_has_no_leakage(rng, params):
    samples = build_dataset(_log(100, rng), params)
    tr, va = split_contiguous(samples, 0.2)
    assert tr and va
    assert max(s.index for s in tr) < min(s.index - 9 for s in va)


def test_log_round_trip(tmp_path, rng):
    lg = _log(12, rng)
    lg.save(tmp_path / "log.csv")
    back = FlightLog.load(tmp_path / "log.csv")
    assert np.array_equal(back.data, lg.data)
    (tmp_path / "bad.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        FlightLog.load(tmp_path / "bad.csv")


def test_features_shape_and_alpha(rng, params):
    samples = build_dataset(_log(20, rng), params)
    b = SampleBatch.from_samples(samples)
    feats = b.features()
    assert feats.shape == (len(samples), 10, 8)
    assert np.all(np.abs(feats[..., 7]) <= np.pi / 2)
    with pytest.raises(ValueError):
        SampleBatch.from_samples([])


def test_label_round_trip_with_injected_force():
    """Logged acceleration, attitude and thrust recover a known external force."""
    cfg = Config()
    p = cfg.drone
    sim = Simulation(cfg, None, DroneState(position=np.array([0.0, 0.0, -10.0])))
    rng = np.random.default_rng(7)
    worst = 0.0
    for k in range(80):
        f_inj = rng.normal(0.0, 0.8, 3)
        res = sim.tick(np.array([k * 0.2, 0.0, -10.0]), np.zeros(3), fa_external=f_inj)
        row = res.row
        euler = row[COL["phi"]:COL["psi"] + 1]
        label = label_from_log(res.accel, euler, res.thrust, p)
        worst = max(worst, float(np.max(np.abs(label - f_inj))))
    assert worst < 1e-3
