"""Closed forms for the free and constant-field benchmarks, checked against independent routes."""
import numpy as np
import pytest
from scipy import integrate

from wpprop import exact

HBAR = 0.05


def schrodinger_residual(t, x, field, hbar, h=1e-4, potential_field=None):
    """``i hbar psi_t + hbar^2 psi_xx - F x psi`` for ``H = p^2 + F q``."""
    F = field if potential_field is None else potential_field
    psi = exact.psi_exact(x, t, hbar, field)
    dt = (exact.psi_exact(x, t + h, hbar, field) - exact.psi_exact(x, t - h, hbar, field)) / (2 * h)
    dxx = (exact.psi_exact(x + h, t, hbar, field) - 2 * psi + exact.psi_exact(x - h, t, hbar, field)) / h**2
    return np.max(np.abs(1j * hbar * dt + hbar**2 * dxx - F * x * psi)) / np.max(np.abs(psi))


@pytest.mark.parametrize("field", [0.0, 1.0])
@pytest.mark.parametrize("t", [0.1, 0.5, 1.0])
def test_configuration_solution_solves_schrodinger(field, t):
    x = np.linspace(-2, 2, 41)
    assert schrodinger_residual(t, x, field, HBAR) < 1e-4
    assert schrodinger_residual(t, x, field, HBAR, potential_field=field + 0.1) > 1e-2  # residual detects a wrong field


@pytest.mark.parametrize("field", [0.0, 1.0])
def test_configuration_solution_is_propagator_image(field):
    y = np.linspace(-7, 7, 14001)
    w = np.full(y.size, y[1] - y[0])
    x = np.array([-0.5, 0.0, 0.7])
    t = 0.6
    K = exact.config_propagator(x[:, None], y[None], t, HBAR, field)
    num = (K * exact.psi_exact(y, 0.0, HBAR)[None] * w).sum(axis=1)
    np.testing.assert_allclose(num, exact.psi_exact(x, t, HBAR, field), atol=1e-10)


@pytest.mark.parametrize("field", [0.0, 1.0])
def test_phase_space_solution_is_transform_of_configuration_solution(field):
    t = 0.8
    x = np.linspace(-9, 9, 12001)
    w = np.full(x.size, x[1] - x[0])
    psi = exact.psi_exact(x, t, HBAR, field)
    for q, p in ((0.1, 0.3), (-0.4, -0.8), (1.0, 0.2)):
        G = (np.pi * HBAR) ** -0.25 * np.exp(1j / HBAR * (p * (x - q) + 0.5j * (x - q) ** 2))
        num = (2 * np.pi * HBAR) ** -0.5 * np.sum(w * np.conj(G) * psi)
        assert exact.phase_space_exact(q, p, t, HBAR, field) == pytest.approx(num, abs=1e-11)


def test_displayed_phase_space_solutions():
    # explicit rational forms of the transformed chirped Gaussian
    def free(q, p, t, h):
        den = 1 - 1j + h + 2 * (1 + 1j * h) * t
        return h**-0.25 * np.sqrt(1 / np.pi / den) * np.exp(
            1j / (2 * h) * (-2j * (1 + 1j * h) * q * p + (1 + 1j * h) * q * q + 1j * (1 + 2 * (1 + 1j * h) * t) * p * p) / den)

    def linear(q, p, t, h):
        a = 1 + 1j * h
        D = 1 + 2 * a * t
        den = 1 - 1j + h + 2 * a * t
        z = q - 1j * p
        ex = 1j / h / D * (0.5j * (1j * D * z + (1 + a * t) * t) ** 2 / den + 0.5j * (q * q - 2j * q * p) * D
                           - t**3 / 3 * (1 + 0.5 * a * t))
        return h**-0.25 * np.sqrt(1 / np.pi / den) * np.exp(ex)

    q, p = np.meshgrid(np.linspace(-1, 1, 5), np.linspace(-1, 1, 5))
    for t in (0.0, 0.4, 1.0):
        np.testing.assert_allclose(exact.phase_space_exact(q, p, t, HBAR, 0.0), free(q, p, t, HBAR), rtol=1e-12)
        np.testing.assert_allclose(exact.phase_space_exact(q, p, t, HBAR, 1.0), linear(q, p, t, HBAR), rtol=1e-12)


def kernel_prefactor(t, h):
    return np.exp(-0.5j * (np.arctan(2 * t) + np.arctan((1 + 2 * t * t) / t) - np.pi / 2)) / (2 * np.pi * h * (1 + t * t) ** 0.25)


def free_kernel_display(q, p, eta, xi, t, h):
    br = ((q - eta) ** 2 - 2j * (q - eta) * xi + (1 + 2j * t) * p * p + (1 + 6j * t - 4 * t * t) * xi * xi
          + 2 * p * (1j - 2 * t) * (q - eta + 1j * xi - 2 * t * xi))
    return kernel_prefactor(t, h) * np.exp(1j / h * (xi * xi * t - p * (eta - q + 2 * xi * t) + br / (4 * (t - 1j))))


def linear_kernel_display(q, p, eta, xi, t, h):
    et, xt = eta + 2 * t * xi - t * t, xi - t
    a, b = q - et, p - xt
    e1 = 2 / 3 * t**3 + (p - 2 * xi) * t * t + (xi * xi - eta - 2 * p * xi) * t + p * (q - eta)
    e2 = (t * a * a - t * b * b - 2 * (1 + 2 * t * t) * a * b
          + 1j * (a * a + (1 + 2 * t * t) * b * b - 2 * t * a * b)) / (4 * (1 + t * t))
    return kernel_prefactor(t, h) * np.exp(1j / h * (e1 + e2))


@pytest.mark.parametrize("t", [0.2, 0.7, 1.5])
def test_kernel_closed_form_matches_explicit_displays(t, rng):
    q, p, eta, xi = rng.normal(scale=0.5, size=(4, 20))
    np.testing.assert_allclose(exact.kernel(q, p, eta, xi, t, HBAR, 0.0), free_kernel_display(q, p, eta, xi, t, HBAR), rtol=1e-10)
    np.testing.assert_allclose(exact.kernel(q, p, eta, xi, t, HBAR, 1.0), linear_kernel_display(q, p, eta, xi, t, HBAR), rtol=1e-10)


def test_kernel_at_zero_is_scaled_overlap(rng):
    q, p, eta, xi = rng.normal(scale=0.3, size=(4, 10))
    ov = np.exp(-((q - eta) ** 2 + (p - xi) ** 2) / (4 * HBAR) + 0.5j * (p + xi) * (q - eta) / HBAR)
    np.testing.assert_allclose(exact.kernel(q, p, eta, xi, 0.0, HBAR), ov / (2 * np.pi * HBAR), rtol=1e-12)


def test_kernel_propagates_closed_form_solution():
    t = 0.5
    q, p = 0.3, -0.1

    def integrand(xi, eta, part):
        v = exact.kernel(q, p, eta, xi, t, HBAR, 1.0) * exact.initial_phase_space(eta, xi, HBAR)
        return v.real if part == 0 else v.imag

    val = sum((1j if part else 1) * integrate.dblquad(integrand, -3, 3, -3, 3, args=(part,), epsabs=1e-11)[0]
              for part in (0, 1))
    assert val == pytest.approx(complex(exact.phase_space_exact(q, p, t, HBAR, 1.0)), abs=1e-8)


def test_airy_propagator_is_classical_action():
    # derivative of the action in x is the final momentum of the joining orbit
    x, y, t, F = 0.7, -0.2, 0.9, 1.0
    p0 = (x - y + F * t * t) / (2 * t)
    h = 1e-6
    S = lambda xx: np.angle(exact.config_propagator(xx, y, t, 1.0, F) / exact.config_propagator(x, y, t, 1.0, F))  # noqa: E731
    assert (S(x + h) - S(x - h)) / (2 * h) == pytest.approx(p0 - F * t, rel=1e-6)


def test_siegel_closed_forms_consistent():
    t = np.linspace(0, 2, 11)
    Z = exact.anisotropy(t)
    W = -1 / (Z + 1j)
    np.testing.assert_allclose(W, exact.w_of_t(t), atol=1e-14)
    Q = np.array([exact.q_of_t(s) for s in t])
    np.testing.assert_allclose(Q[:, 0, 0] * Q[:, 1, 1] - Q[:, 0, 1] ** 2, [np.linalg.det(m) for m in Q])
    np.testing.assert_allclose([np.linalg.det(m.imag) for m in Q], exact.det_q_imag(t), atol=1e-14)


def test_transported_phase_solves_hamilton_jacobi():
    h = 1e-5
    for F in (0.0, 1.0, -0.6):
        for t in (0.3, 1.1):
            x = np.linspace(-2, 2, 9)
            St = (exact.hj_phase(x, t + h, F) - exact.hj_phase(x, t - h, F)) / (2 * h)
            Sx = (exact.hj_phase(x + h, t, F) - exact.hj_phase(x - h, t, F)) / (2 * h)
            np.testing.assert_allclose(St + Sx**2 + F * x, 0.0, atol=1e-8)
            np.testing.assert_allclose(Sx, exact.hj_momentum(x, t, F), atol=1e-8)
    np.testing.assert_allclose(exact.hj_phase(x, 0.0, 0.7), x * x / 2)
