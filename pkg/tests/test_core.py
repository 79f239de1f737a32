import numpy as np
import pytest
from hypothesis import given, strategies as st

from wpprop.core import (DimensionError, ModelError, PhasePoint, PhaseSpaceField, UniformGrid, WavefunctionField,
                         cross_term_model, get_model, hamiltonian_eval, hessian_blocks, polynomial_model,
                         siegel_check)

coords = st.floats(-3, 3)


def test_phase_point_is_read_only():
    pt = PhasePoint([0.1, 0.2], [0.3, 0.4])
    assert pt.dim == 2
    with pytest.raises(ValueError):
        pt.q[0] = 1.0
    np.testing.assert_allclose(pt.z, [0.1 - 0.3j, 0.2 - 0.4j])


def test_phase_point_rejects_mismatch_and_nan():
    with pytest.raises(DimensionError):
        PhasePoint([0.0, 1.0], [0.0])
    with pytest.raises(ValueError):
        PhasePoint([np.nan], [0.0])


@pytest.mark.parametrize("kind", ["free", "linear", "harmonic", "quartic"])
@given(q=coords, p=coords)
def test_gradient_matches_finite_differences(kind, q, p):
    model = get_model(kind)
    h = 1e-6
    _, grad, hess = hamiltonian_eval(model, PhasePoint([q], [p]))
    fd_q = (model.energy(np.array([[q + h]]), np.array([[p]])) - model.energy(np.array([[q - h]]), np.array([[p]]))) / (2 * h)
    fd_p = (model.energy(np.array([[q]]), np.array([[p + h]])) - model.energy(np.array([[q]]), np.array([[p - h]]))) / (2 * h)
    np.testing.assert_allclose(grad, [fd_q[0], fd_p[0]], atol=1e-6)
    _, g_plus, _ = hamiltonian_eval(model, PhasePoint([q + h], [p]))
    _, g_minus, _ = hamiltonian_eval(model, PhasePoint([q - h], [p]))
    np.testing.assert_allclose(hess[:, 0], (g_plus - g_minus) / (2 * h), atol=1e-5)


def test_builtin_values():
    _, grad, hess = hamiltonian_eval(get_model("linear"), PhasePoint([0.7], [0.5]))
    np.testing.assert_allclose(grad, [1.0, 1.0])
    np.testing.assert_allclose(hess, [[0.0, 0.0], [0.0, 2.0]])
    H, _, _ = hamiltonian_eval(get_model("harmonic", omega=2.0), PhasePoint([1.0], [0.0]))
    assert H == pytest.approx(1.0)


def test_hessian_blocks_order():
    model = cross_term_model(0.3)
    _, _, hess = hamiltonian_eval(model, PhasePoint([0.0], [0.0]))
    Hqq, Hqp, Hpq, Hpp = hessian_blocks(hess, 1)
    assert Hqq[0, 0] == 0 and Hpp[0, 0] == 2 and Hqp[0, 0] == pytest.approx(0.3) and Hpq[0, 0] == pytest.approx(0.3)


def test_model_validation():
    with pytest.raises(ModelError):
        polynomial_model([0.0] * 8 + [1.0])
    with pytest.raises(ModelError):
        get_model("morse")
    with pytest.raises(ModelError):
        get_model("polynomial")
    with pytest.raises(DimensionError):
        hamiltonian_eval(get_model("free", dim=2), PhasePoint([0.0], [0.0]))


def test_polynomial_model_in_two_dimensions():
    model = get_model("polynomial", dim=2, coefficients=[0.0, 0.0, 1.0, 0.5])
    H, grad, hess = hamiltonian_eval(model, PhasePoint([1.0, 2.0], [0.5, 0.0]))
    assert H == pytest.approx(0.25 + (1 + 0.5) + (4 + 4))
    np.testing.assert_allclose(grad, [2 + 1.5, 4 + 6, 1.0, 0.0])
    np.testing.assert_allclose(np.diag(hess), [2 + 3, 2 + 6, 2, 2])


@pytest.mark.parametrize("d", [1, 2, 3])
def test_siegel_check_identity(d):
    diag = siegel_check(1j * np.eye(d))
    assert diag.accepted and diag.min_imag_eigenvalue == pytest.approx(1.0)


def test_siegel_check_examples():
    assert siegel_check(np.array([[1 / (2 - 1j)]])).accepted
    assert not siegel_check(np.array([[1j, 0.1], [0.0, 1j]])).accepted
    assert not siegel_check(np.array([[1.0 - 0.1j]])).accepted


@given(st.floats(1e-8, 1.0))
def test_siegel_rejects_asymmetry_above_tol(eps):
    m = np.array([[1j, eps], [0.0, 1j]])
    assert siegel_check(m, tol=eps / 2).accepted is False


def test_grid_weights_integrate_gaussian():
    g = UniformGrid.from_bounds(-8, 8, 321)
    assert np.sum(g.weights * np.exp(-g.points**2)) == pytest.approx(np.sqrt(np.pi), rel=1e-12)
    c = UniformGrid.centered(5, 0.5, center=1.0)
    np.testing.assert_allclose(c.points, [0.0, 0.5, 1.0, 1.5, 2.0])
    with pytest.raises(ValueError):
        UniformGrid(0.0, -1.0, 3)


def test_fields_validate_shape_and_hbar():
    g = UniformGrid.from_bounds(0, 1, 3)
    with pytest.raises(ValueError):
        WavefunctionField(g, np.zeros(4))
    with pytest.raises(ValueError):
        PhaseSpaceField(g, g, np.zeros((3, 3)), hbar=-0.1)
    f = PhaseSpaceField(g, g, np.ones((3, 3)))
    assert np.sum(f.weights) == pytest.approx(1.0)
