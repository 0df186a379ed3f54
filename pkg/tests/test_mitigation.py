import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rescon.errors import TooFewSamples
from rescon.graph import DiGraph
from rescon.mitigation import (
    TrustConfig,
    TrustState,
    _euler,
    chi,
    confidence_imp_step,
    confidence_nonimp_step,
    effective_graph,
    filter_series,
    link_divergence,
    link_score,
    raw_trust_step,
    raw_trust_update,
    resilient_tracking_error,
    self_belief,
    trust,
)


def test_chi_values():
    assert chi(0.0, 2.0) == 1.0
    assert chi(2.0, 2.0) == 0.5
    assert chi(1e12, 2.0) < 1e-11


def test_link_score_limits():
    assert link_score(0.0, 1.0, 1.0) == 0.0
    assert link_score(1e12, 1.0, 1.0) == pytest.approx(0.5)
    assert link_score(1e12, 3.0, 1.0) == pytest.approx(0.25)
    assert link_score(1.0, 1.0, 1.0) == pytest.approx(1 - 1 / (1 + np.exp(-1)))


@given(st.floats(0, 1e6), st.floats(1e-3, 1e3), st.floats(1e-3, 1e3))
def test_link_score_bounded_and_monotone(D, l1, l2):
    v = link_score(D, l1, l2)
    assert 0.0 <= v <= 1.0 / (1.0 + l1) + 1e-12
    assert link_score(2 * D + 1e-3, l1, l2) >= v - 1e-12


def test_config_validation():
    with pytest.raises(ValueError):
        TrustConfig(kappa1=0.0)
    with pytest.raises(ValueError):
        TrustConfig(trust_window=2)
    with pytest.raises(ValueError):
        TrustConfig(Delta=[1.0, -1.0])
    with pytest.raises(ValueError):
        _euler(1.0, 0.0, 1.0, 0.0)


def test_fixed_point_at_zero_divergence():
    cfg = TrustConfig(Delta=np.ones(3))
    s = TrustState.initial(3, 4)
    for _ in range(100):
        confidence_imp_step(s, cfg, np.zeros(3), 1e-3)
        confidence_nonimp_step(s, cfg, np.zeros(3), 1e-3)
    np.testing.assert_array_equal(s.xi, 1.0)


def test_halving_time():
    kappa, dt = 2.0, 1e-4
    cfg = TrustConfig(Delta=np.array([1e-12]), kappa1=kappa)
    s = TrustState.initial(1, 1)
    steps = int(round(np.log(2) / kappa / dt))
    for _ in range(steps):
        confidence_imp_step(s, cfg, np.array([1e6]), dt)
    assert s.c1[0] == pytest.approx(0.5, abs=1e-3)


def test_filter_series_matches_euler(rng):
    target = rng.random((500, 3))
    out = filter_series(target, 2.0, 1e-3, start=100)
    y = np.ones(3)
    for k in range(500):
        if k >= 100:
            y = _euler(y, target[k], 2.0, 1e-3)
        np.testing.assert_allclose(out[k], y, atol=1e-12)


@given(st.lists(st.floats(0, 1e4), min_size=4, max_size=4), st.floats(1e-4, 0.5))
def test_states_stay_in_unit_interval(D, dt):
    cfg = TrustConfig(Delta=np.full(2, 0.3))
    s = TrustState.initial(2, 4)
    D = np.array(D)
    for _ in range(5):
        confidence_imp_step(s, cfg, D[:2], dt)
        confidence_nonimp_step(s, cfg, D[2:], dt)
        raw_trust_update(s, cfg, D, dt)
        for arr in (s.c1, s.c2, s.eta_raw):
            assert np.all((arr >= 0) & (arr <= 1))
    om = trust(s, np.array([0, 0, 1, 1]))
    assert np.all(om >= s.xi[[0, 0, 1, 1]]) and np.all(om >= s.eta_raw) and np.all(om <= 1)


def test_self_belief_is_min():
    s = TrustState(np.array([0.2, 0.9]), np.array([0.5, 0.4]), np.ones(1))
    np.testing.assert_allclose(self_belief(s), [0.2, 0.4])


def test_inactive_edges_hold():
    cfg = TrustConfig()
    s = TrustState.initial(1, 2)
    raw_trust_update(s, cfg, np.array([5.0, 5.0]), 0.1, active=np.array([True, False]))
    assert s.eta_raw[0] < 1.0 and s.eta_raw[1] == 1.0


def test_raw_trust_step(rng):
    cfg = TrustConfig(trust_window=50)
    s = TrustState.initial(1, 2)
    with pytest.raises(TooFewSamples):
        raw_trust_step(s, cfg, np.zeros((10, 2)), np.zeros((10, 2)), 0.01)
    np.testing.assert_array_equal(s.eta_raw, 1.0)
    same = rng.normal(size=(50, 2))
    assert link_divergence(same, same) == pytest.approx(0.0, abs=1e-10)
    far = same + 10.0
    raw_trust_step(s, cfg, far, same, 0.1, edge=1)
    assert s.eta_raw[0] == 1.0 and s.eta_raw[1] < 1.0


def test_resilient_tracking_error_and_effective_graph(graph):
    x = np.zeros((5, 2))
    x[2] = [1.0, 0.0]
    x[4] = [0.0, 1.0]
    omega_row = np.ones(5)
    xi = np.array([1, 1, 1, 1, 0.0])
    np.testing.assert_allclose(resilient_tracking_error(graph, 3, x, omega_row, xi), [1.0, 0.0])
    eg = effective_graph(graph, np.ones((5, 5)), xi)
    assert eg.weights[3, 4] == 0.0 and eg.weights[3, 2] == 1.0
    assert isinstance(eg, DiGraph)


def test_confidence_recovers_once_divergence_clears():
    cfg = TrustConfig(Delta=np.array([1.0]), kappa1=2.0)
    s = TrustState.initial(1, 1)
    for _ in range(3000):
        confidence_imp_step(s, cfg, np.array([1e6]), 1e-3)
    assert s.c1[0] < 0.01
    for _ in range(3000):
        confidence_imp_step(s, cfg, np.array([0.0]), 1e-3)
    assert s.c1[0] > 0.99
