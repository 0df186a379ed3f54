import numpy as np
import pytest
from dataclasses import replace

from rescon.detection import (
    H0,
    H1,
    DetectorConfig,
    DetectorState,
    RingWindow,
    error_sequences,
    first_alarm_time,
    imp_detector_step,
    nonimp_detector_step,
    replay_detectors,
    trailing_sums,
)
from rescon.scenario import load_preset
from rescon.sim import nominal_covariances, run_scenario


def test_error_sequences_example(graph):
    x = np.zeros((5, 2))
    x[2] = [3.0, 0.0]
    x[4] = [0.0, 4.0]
    tau, phi = error_sequences(graph, 3, x, x[3])
    assert tau == pytest.approx(5.0)
    assert phi == pytest.approx(7.0)
    x[4] = [-3.0, 0.0]
    tau, phi = error_sequences(graph, 3, x, x[3])
    assert tau == pytest.approx(0.0) and phi == pytest.approx(6.0)


def test_tau_never_exceeds_phi(graph, rng):
    for _ in range(50):
        x = rng.normal(size=(5, 2))
        tau, phi = error_sequences(graph, 3, x, x[3], rng.normal(size=(5, 2)))
        assert tau <= phi + 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        DetectorConfig(window=4)
    with pytest.raises(ValueError):
        DetectorConfig(gamma_imp=[1.0, 0.0])
    assert not DetectorConfig().calibrated
    assert DetectorConfig(gamma_imp=1.0, gamma_nonimp=1.0).calibrated


def test_ring_window_matches_numpy(rng):
    w = RingWindow(16, (3,))
    data = rng.normal(size=(100, 3))
    for k, row in enumerate(data):
        w.push(row)
        live = data[max(0, k - 15): k + 1]
        mean, var = w.mean_var()
        np.testing.assert_allclose(mean, live.mean(axis=0), atol=1e-12)
        np.testing.assert_allclose(var, live.var(axis=0), atol=1e-12)
    assert w.full


def test_trailing_sums():
    s, n = trailing_sums(np.arange(6, dtype=float), 3)
    np.testing.assert_allclose(s, [0, 1, 3, 6, 9, 12])
    np.testing.assert_allclose(n, [1, 2, 3, 3, 3, 3])


def test_detectors_quiet_during_warmup_and_fire_after():
    cfg = DetectorConfig(window=20, gamma_imp=0.5, gamma_nonimp=0.5, nominal_cov=np.eye(2) * 1e-2, warmup=1.0)
    st = DetectorState((), 2, 20)
    rng = np.random.default_rng(3)
    for k in range(60):
        t = k * 0.01
        h1 = imp_detector_step(st, cfg, 1.0 + 0.1 * rng.random(), 3.0 + 0.1 * rng.random(), t)
        h2 = nonimp_detector_step(st, cfg, np.array([1.0, 1.0]) + 0.1 * rng.normal(size=2), t)
        assert h1 == H0 and h2 == H0
    assert st.avg_imp > 0.5 and st.avg_nonimp > 0.5
    assert imp_detector_step(st, cfg, 1.0, 3.0, 2.0) == H1
    assert nonimp_detector_step(st, cfg, np.array([1.0, 1.0]), 2.0) == H1


def test_uncalibrated_detectors_never_fire():
    cfg = DetectorConfig(window=10)
    st = DetectorState((), 1, 10)
    for k in range(30):
        assert imp_detector_step(st, cfg, 0.1, 10.0, 100.0) == H0


def test_step_api_matches_replay(rng):
    cfg = DetectorConfig(window=16, gamma_imp=0.2, gamma_nonimp=0.2, nominal_cov=np.eye(2) * 0.05, warmup=0.0)
    K = 120
    tau = np.abs(rng.normal(0.3, 0.2, (K, 3)))
    phi = tau + np.abs(rng.normal(0.2, 0.1, (K, 3)))
    eta = rng.normal(0.0, 0.25, (K, 3, 2))
    eta[60:, 1] += 0.4
    times = np.arange(K) * 0.01
    replay = replay_detectors(cfg, tau, phi, eta, times)
    st = DetectorState((3,), 2, 16)
    for k in range(K):
        h_imp = imp_detector_step(st, cfg, tau[k], phi[k], times[k])
        h_non = nonimp_detector_step(st, cfg, eta[k], times[k])
        np.testing.assert_allclose(st.avg_imp, replay["avg_imp"][k], rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(st.avg_nonimp, replay["avg_nonimp"][k], rtol=1e-8, atol=1e-10)
        np.testing.assert_array_equal(h_imp, replay["h_imp"][k])
        np.testing.assert_array_equal(h_non, replay["h_nonimp"][k])


def test_engine_matches_replay():
    s = replace(load_preset("fig4"), t_end=22.0)
    tr = run_scenario(s, 5)
    cfg = replace(s.detector_cfg, nominal_cov=nominal_covariances(s))
    replay = replay_detectors(cfg, tr.tau, tr.phi, tr.eta, tr.times)
    post = tr.times > 16.0
    np.testing.assert_allclose(tr.avg_imp[post], replay["avg_imp"][post], rtol=1e-6, atol=1e-8)
    np.testing.assert_allclose(tr.avg_nonimp[post], replay["avg_nonimp"][post], rtol=1e-6, atol=1e-8)


def test_first_alarm_time():
    t = np.arange(5) * 0.5
    assert first_alarm_time(np.array([1, 0, 0, 1, 1]), t, 0.2) == 1.5
    assert first_alarm_time(np.zeros(5), t, 0.0) is None
