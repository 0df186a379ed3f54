import numpy as np
import pytest
import scipy.linalg
from hypothesis import given
from hypothesis import strategies as st

from rescon.dynamics import (
    AgentDynamics,
    GainDesign,
    NoiseModel,
    classify_A_spectrum,
    design_gains,
    integrate_step,
    is_synchronizing,
    local_tracking_error,
    nominal_control,
    rk4_matrices,
    solve_are_kleinman,
)
from rescon.errors import ConfigError, DimensionMismatch, NoSpanningTree, NotStabilizable
from rescon.graph import DiGraph


def test_dimension_checks():
    with pytest.raises(DimensionMismatch):
        AgentDynamics(np.zeros((2, 3)), np.zeros((2, 1)))
    with pytest.raises(DimensionMismatch):
        AgentDynamics(np.zeros((2, 2)), np.zeros((3, 1)))
    dyn = AgentDynamics([[0, 1], [0, 0]], [0, 1])
    assert dyn.B.shape == (2, 1) and dyn.n_x == 2 and dyn.n_u == 1


def test_oscillator_spectrum_is_marginal(oscillator):
    spec = classify_A_spectrum(oscillator)
    np.testing.assert_allclose(spec.eigenvalues, [-1j, 1j])
    assert spec.marginal.size == 2
    assert not spec.unstable


def test_canonical_gain_design(oscillator, graph):
    gd = design_gains(oscillator, graph)
    np.testing.assert_allclose(gd.K, [[1.35219345, 0.41421356]], atol=1e-8)
    assert gd.c == pytest.approx(0.6)
    assert is_synchronizing(oscillator, gd, graph)
    for lam, expected in [(1.0, -0.40565803 + 1.04113865j), (2.0, -0.81131607 + 0.91587254j)]:
        eig = np.linalg.eigvals(oscillator.A - gd.c * lam * oscillator.B @ gd.K)
        assert np.min(np.abs(eig - expected)) < 1e-7


def test_are_matches_scipy(oscillator):
    Q, R = np.diag([2.0, 0.5]), np.array([[0.3]])
    P, K = solve_are_kleinman(oscillator.A, oscillator.B, Q, R)
    np.testing.assert_allclose(P, scipy.linalg.solve_continuous_are(oscillator.A, oscillator.B, Q, R), rtol=1e-8)
    np.testing.assert_allclose(K, np.linalg.solve(R, oscillator.B.T @ P), rtol=1e-8)


@given(st.integers(0, 10_000))
def test_are_random_controllable(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, 1))
    ctrb = np.hstack([np.linalg.matrix_power(A, k) @ B for k in range(n)])
    if np.linalg.svd(ctrb, compute_uv=False).min() < 1e-3:
        return
    P, K = solve_are_kleinman(A, B, np.eye(n), np.eye(1))
    assert np.max(np.linalg.eigvals(A - B @ K).real) < 0
    np.testing.assert_allclose(P, scipy.linalg.solve_continuous_are(A, B, np.eye(n), np.eye(1)), rtol=1e-6, atol=1e-8)


def test_uncontrollable_pair_raises():
    with pytest.raises(NotStabilizable):
        solve_are_kleinman(np.diag([1.0, 2.0]), np.array([[1.0], [0.0]]), np.eye(2), np.eye(1))
    with pytest.raises(NotStabilizable):
        solve_are_kleinman(np.eye(2), np.zeros((2, 1)), np.eye(2), np.eye(1))


def test_design_needs_spanning_tree(oscillator):
    with pytest.raises(NoSpanningTree):
        design_gains(oscillator, DiGraph.from_edges(3, [(0, 1)]))


def test_zero_coupling_does_not_synchronize(oscillator, graph):
    assert not is_synchronizing(oscillator, GainDesign([[1.0, 0.0]], 0.0), graph)


def test_tracking_error_example(graph):
    x = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [0.0, 0.0], [3.0, 3.0]])
    np.testing.assert_allclose(local_tracking_error(graph, x, 3), [3.0, 5.0])
    np.testing.assert_allclose(local_tracking_error(graph, x, 0), [0.0, 0.0])
    noise = np.zeros((5, 2))
    noise[2] = [0.1, -0.1]
    np.testing.assert_allclose(local_tracking_error(graph, x, 3, noise), [3.1, 4.9])


def test_nominal_control(gains):
    np.testing.assert_allclose(nominal_control(gains, [1.0, 1.0]), [0.6 * (1.35219345 + 0.41421356)])


def test_rk4_matrices_match_stepper_and_expm(oscillator):
    dt = 1e-2
    Phi, Gamma = rk4_matrices(oscillator, dt)
    x, u = np.array([0.3, -0.7]), np.array([0.25])
    np.testing.assert_allclose(Phi @ x + Gamma @ u, integrate_step(oscillator, x, u, dt), atol=1e-15)
    np.testing.assert_allclose(Phi, scipy.linalg.expm(oscillator.A * dt), atol=1e-11)


def test_rk4_preserves_oscillator_energy_closely(oscillator):
    Phi, _ = rk4_matrices(oscillator, 1e-3)
    x = np.array([1.0, 0.0])
    for _ in range(int(2 * np.pi / 1e-3)):
        x = Phi @ x
    assert abs(np.linalg.norm(x) - 1.0) < 1e-9


def test_nonpositive_dt_rejected(oscillator):
    with pytest.raises(ValueError):
        rk4_matrices(oscillator, 0.0)
    with pytest.raises(ValueError):
        integrate_step(oscillator, np.zeros(2), np.zeros(1), -1.0)


def test_noise_model(graph):
    nm = NoiseModel.isotropic(0.01, 2)
    np.testing.assert_allclose(nm.covariance, 1e-4 * np.eye(2))
    np.testing.assert_allclose(nm.aggregate_covariance(graph, 3), 2e-4 * np.eye(2))
    np.testing.assert_allclose(nm.aggregate_covariance(graph, 0), 0.0)
    custom = NoiseModel(1e-4 * np.eye(2), {(2, 3): 4e-4 * np.eye(2)})
    np.testing.assert_allclose(custom.aggregate_covariance(graph, 3), 5e-4 * np.eye(2))
    with pytest.raises(ConfigError):
        NoiseModel([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ConfigError):
        NoiseModel(-np.eye(2))
