import numpy as np
import pytest
from hypothesis import given, strategies as st

from wpprop import exact
from wpprop.core import PhasePoint, get_model
from wpprop.flow import integrate_orbit
from wpprop.siegel import (BranchError, BranchTracker, SiegelError, ball_distance, cayley_sigma, det_w_from_variational,
                           inverse_w_map, lambda_phase, moebius, normalization_residual, q_blocks, q_form,
                           riccati_history, w_from_variational, w_map, write_siegel_csv, z_from_variational)


def siegel_matrix(draw_values, d):
    a = np.asarray(draw_values[: d * d]).reshape(d, d)
    b = np.asarray(draw_values[d * d:]).reshape(d, d)
    return (a + a.T) / 2 + 1j * (b @ b.T + 0.2 * np.eye(d))


siegel_1 = st.lists(st.floats(-2, 2), min_size=2, max_size=2).map(lambda v: siegel_matrix(v, 1))
siegel_2 = st.lists(st.floats(-2, 2), min_size=8, max_size=8).map(lambda v: siegel_matrix(v, 2))


def test_w_of_identity_is_half_i():
    np.testing.assert_allclose(w_map(1j * np.eye(2)), 0.5j * np.eye(2))


@given(st.one_of(siegel_1, siegel_2))
def test_w_map_lands_in_ball_and_inverts(Z):
    W = w_map(Z)
    assert ball_distance(W) < 0.5
    np.testing.assert_allclose(inverse_w_map(W), Z, atol=1e-9)
    assert np.min(np.linalg.eigvalsh(q_blocks(W).imag)) > 0


@given(st.one_of(siegel_1, siegel_2), st.floats(-2, 2), st.floats(-2, 2))
def test_moebius_preserves_siegel_space(Z, s, c):
    d = Z.shape[0]
    A = np.eye(d) * np.cosh(s)
    B = np.eye(d) * np.sinh(s) + c * np.eye(d)
    sigma = np.block([[A, np.zeros((d, d))], [np.zeros((d, d)), np.linalg.inv(A).T]]) @ np.block(
        [[np.eye(d), np.zeros((d, d))], [B, np.eye(d)]])
    out = moebius(sigma, Z)
    assert np.max(np.abs(out - out.T)) < 1e-10
    assert np.min(np.linalg.eigvalsh(out.imag)) > 0


def test_cayley_reproduces_w_map():
    Z = np.array([[0.3 + 1.2j, 0.1 + 0.2j], [0.1 + 0.2j, -0.4 + 0.9j]])
    np.testing.assert_allclose(moebius(cayley_sigma(2), Z, tol=1e-9), w_map(Z), atol=1e-12)


def test_q_form_rejects_non_siegel():
    with pytest.raises(SiegelError):
        q_form(np.array([[2.0j]]))


def test_closed_form_q_of_t():
    t = 0.7
    np.testing.assert_allclose(q_blocks(exact.w_of_t(t).reshape(1, 1)), exact.q_of_t(t), atol=1e-14)
    assert q_form(exact.w_of_t(t).reshape(1, 1)).det_im == pytest.approx(float(exact.det_q_imag(t)), rel=1e-12)


@pytest.mark.parametrize("kind", ["free", "linear"])
def test_anisotropy_and_phase_closed_forms(kind):
    traj = integrate_orbit(get_model(kind), PhasePoint([0.1], [0.2]), 2.0, 1e-3)
    np.testing.assert_allclose(traj.Z[:, 0, 0], exact.anisotropy(traj.times), atol=1e-12)
    np.testing.assert_allclose(w_from_variational(traj.X, traj.Y)[:, 0, 0], exact.w_of_t(traj.times), atol=1e-12)
    lam = [lambda_phase(traj, t) for t in traj.times[::100]]
    np.testing.assert_allclose(lam, exact.kernel_phase(traj.times[::100]), atol=1e-12)
    assert normalization_residual(traj) < 1e-12


def test_det_w_two_routes():
    traj = integrate_orbit(get_model("quartic", dim=2), PhasePoint([0.5, -0.3], [0.2, 0.4]), 1.0, 1e-2)
    direct = np.linalg.det(w_map(traj.Z))
    np.testing.assert_allclose(det_w_from_variational(traj.X, traj.Y), direct, atol=1e-12)


@pytest.mark.parametrize("kind", ["free", "harmonic", "linear", "quartic"])
def test_riccati_matches_variational_ratio(kind):
    model = get_model(kind)
    traj = integrate_orbit(model, PhasePoint([0.4], [-0.6]), 1.0, 1e-3)
    assert np.max(np.abs(riccati_history(model, traj) - traj.Z)) < 1e-7
    z = z_from_variational(traj, 0.5)
    assert z.shape == (1, 1)


def test_riccati_two_dimensional_quartic():
    model = get_model("quartic", dim=2)
    traj = integrate_orbit(model, PhasePoint([0.4, 0.1], [-0.6, 0.3]), 1.0, 1e-3)
    assert np.max(np.abs(riccati_history(model, traj) - traj.Z)) < 1e-7


def test_branch_tracker_rejects_large_jumps():
    tracker = BranchTracker(np.array([1j]))
    assert tracker.accepts(np.exp(1j * (0.5 * np.pi + 0.3)))
    assert not tracker.accepts(np.exp(1j * (0.5 * np.pi + 2.0)))
    theta = tracker.advance(np.exp(1j * (0.5 * np.pi + 0.3)))
    assert theta[0] == pytest.approx(0.5 * np.pi + 0.3)


def test_branch_tracker_prescribed_start():
    tracker = BranchTracker(np.array([-0.25 + 0j]), initial_arg=np.pi)
    assert tracker.theta[0] == pytest.approx(np.pi)
    with pytest.raises(BranchError):
        BranchTracker(np.array([1.0 + 0j]), initial_arg=np.pi)


@pytest.mark.parametrize("d", [1, 2, 3])
def test_kernel_phase_starts_at_zero_in_any_dimension(d):
    traj = integrate_orbit(get_model("harmonic", dim=d), PhasePoint(np.zeros(d), np.ones(d)), 0.1, 1e-2)
    assert lambda_phase(traj, 0.0) == pytest.approx(0.0, abs=1e-14)


def test_tracked_argument_is_continuous_over_long_oscillation():
    traj = integrate_orbit(get_model("harmonic", omega=4.0), PhasePoint([0.0], [0.5]), 6.0, 1e-3)
    assert np.max(np.abs(np.diff(traj.arg_det_w))) < np.pi / 2
    np.testing.assert_allclose(np.exp(1j * traj.arg_det_w), np.exp(1j * np.angle(det_w_from_variational(traj.X, traj.Y))),
                               atol=1e-10)


def test_siegel_csv_has_one_row_per_sample():
    traj = integrate_orbit(get_model("free"), PhasePoint([0.0], [1.0]), 0.1, 1e-2)
    lines = write_siegel_csv(traj).strip().splitlines()
    assert len(lines) == traj.times.size + 1
    assert lines[0].startswith("t,re_Z00")
