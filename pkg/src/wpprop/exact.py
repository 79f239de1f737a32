"""Closed-form solutions for ``H = p**2 + F q`` in one dimension.

``F = 0`` is free motion and ``F = 1`` the constant-field case.  The initial
state is the chirped Gaussian

    psi_0(x) = pi^(-1/4) exp(-x^2/2) exp(i x^2 / 2 hbar),

whose evolution stays a Gaussian ``exp((i/hbar)(alpha x^2/2 + beta x + gamma))``
with ``alpha = alpha_0 / D``, ``D = 1 + 2 alpha_0 t``, ``alpha_0 = 1 + i hbar``.
The phase-space images follow from one complex Gaussian integral.
"""
from __future__ import annotations

import numpy as np
from numpy.typing import ArrayLike, NDArray


def chirp_wpt(alpha: complex, beta: complex, gamma: complex, amplitude: complex,
              q: ArrayLike, p: ArrayLike, hbar: float) -> NDArray[np.complex128]:
    """Exact transform of ``amplitude * exp((i/hbar)(alpha x^2/2 + beta x + gamma))``.

    Requires ``Im alpha > -1`` so the combined Gaussian is integrable.
    """
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    m = (1 - 1j * alpha) / hbar
    v = (q - 1j * p + 1j * beta) / hbar
    pref = amplitude * (2 * np.pi * hbar) ** -0.5 * (np.pi * hbar) ** -0.25 * np.sqrt(2 * np.pi / m)
    return pref * np.exp(v * v / (2 * m) + 1j * p * q / hbar - q * q / (2 * hbar) + 1j * gamma / hbar)


def _coefficients(t: float, hbar: float, field: float):
    a0 = 1 + 1j * hbar
    D = 1 + 2 * a0 * t
    alpha = a0 / D
    beta = alpha * field * t * t - field * t
    gamma = 0.5 * alpha * field**2 * t**4 - field**2 * t**3 / 3
    return alpha, beta, gamma, np.pi**-0.25 / np.sqrt(D)


def psi_exact(x: ArrayLike, t: float, hbar: float, field: float = 0.0) -> NDArray[np.complex128]:
    """Configuration-space solution at time ``t``."""
    x = np.asarray(x, dtype=float)
    alpha, beta, gamma, amp = _coefficients(t, hbar, field)
    return amp * np.exp(1j / hbar * (0.5 * alpha * x * x + beta * x + gamma))


def phase_space_exact(q: ArrayLike, p: ArrayLike, t: float, hbar: float, field: float = 0.0) -> NDArray[np.complex128]:
    """Phase-space solution, the transform of :func:`psi_exact`."""
    alpha, beta, gamma, amp = _coefficients(t, hbar, field)
    return chirp_wpt(alpha, beta, gamma, amp, q, p, hbar)


def initial_phase_space(q: ArrayLike, p: ArrayLike, hbar: float) -> NDArray[np.complex128]:
    """Transform of the initial chirped Gaussian."""
    return phase_space_exact(q, p, 0.0, hbar)


def flow(q: ArrayLike, p: ArrayLike, t: float, field: float = 0.0):
    """Exact flow ``(q + 2tp - F t^2, p - F t)`` and action."""
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    qt = q + 2 * t * p - field * t * t
    pt = p - field * t
    action = (p * p - field * q) * t - 2 * field * p * t * t + (2.0 / 3.0) * field**2 * t**3
    return qt, pt, action


def anisotropy(t: ArrayLike) -> NDArray[np.complex128]:
    """``Z(t) = 1/(2t - i)`` for any ``p**2 + F q``."""
    return 1.0 / (2 * np.asarray(t, dtype=float) - 1j)


def w_of_t(t: ArrayLike) -> NDArray[np.complex128]:
    """``W(t) = (i/2)(1 + 2it)/(1 + it)``."""
    t = np.asarray(t, dtype=float)
    return 0.5j * (1 + 2j * t) / (1 + 1j * t)


def q_of_t(t: float) -> NDArray[np.complex128]:
    """Phase-space form ``Q(t)``."""
    c = 1 + 2j * t
    return np.array([[1j, -c], [-c, 1j * c]]) / (2 * (1 + 1j * t))


def det_q_imag(t: ArrayLike) -> NDArray[np.float64]:
    """``det Im Q(t) = 1 / (4 (1 + t^2))``."""
    t = np.asarray(t, dtype=float)
    return 1.0 / (4 * (1 + t * t))


def kernel_phase(t: ArrayLike) -> NDArray[np.float64]:
    """``lambda(t) = -arctan(2t)/2 + arctan(t/(1+2t^2))/2``."""
    t = np.asarray(t, dtype=float)
    return -0.5 * np.arctan(2 * t) + 0.5 * np.arctan(t / (1 + 2 * t * t))


def kernel(q, p, eta, xi, t: float, hbar: float, field: float = 0.0) -> NDArray[np.complex128]:
    """Closed-form phase-space kernel for ``p**2 + F q`` (``t`` may be 0)."""
    q, p, eta, xi = (np.asarray(v, dtype=float) for v in (q, p, eta, xi))
    qt, pt, action = flow(eta, xi, t, field)
    Q = q_of_t(t)
    v1, v2 = q - qt, p - pt
    expo = action - p * (qt - q) + 0.5 * (Q[0, 0] * v1 * v1 + 2 * Q[0, 1] * v1 * v2 + Q[1, 1] * v2 * v2)
    pref = 2**-0.5 / (np.pi * hbar) * det_q_imag(t) ** 0.25 * np.exp(1j * kernel_phase(t))
    return pref * np.exp(1j * expo / hbar)


def config_propagator(x: ArrayLike, y: ArrayLike, t: float, hbar: float, field: float = 0.0) -> NDArray[np.complex128]:
    """Exact propagator ``(4 pi i hbar t)^(-1/2) exp(i S / hbar)``.

    ``S = (x-y)^2/(4t) - F t (x+y)/2 - F^2 t^3/12`` is the classical action
    of the path from ``y`` to ``x``; ``F = 0`` gives the free propagator
    and ``F = 1`` the Airy propagator.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    S = (x - y) ** 2 / (4 * t) - field * t * (x + y) / 2 - field**2 * t**3 / 12
    return np.exp(1j * S / hbar) / np.sqrt(4j * np.pi * hbar * t)


def hj_phase(x: ArrayLike, t: float, field: float = 0.0) -> NDArray[np.float64]:
    """Transported phase ``S(x, t)`` for the initial phase ``x^2/2``."""
    x = np.asarray(x, dtype=float)
    F = field
    return (x * x - 2 * F * t * (1 + t) * x - F * F * (2 + t) * t**3 / 3) / (2 * (1 + 2 * t))


def hj_momentum(x: ArrayLike, t: float, field: float = 0.0) -> NDArray[np.float64]:
    """Transported manifold ``p = dS/dx (x, t)``."""
    x = np.asarray(x, dtype=float)
    return (x - field * t * (1 + t)) / (1 + 2 * t)


def packet_exact_wavefunction(x: ArrayLike, t: float, hbar: float, q0: float, p0: float,
                              field: float = 0.0) -> NDArray[np.complex128]:
    """Evolution of the packet ``G_(q0,p0)`` under ``p**2 + F q``, in configuration space."""
    alpha, beta, gamma, amp = _packet_coefficients(t, q0, p0, field)
    x = np.asarray(x, dtype=float)
    return amp * (np.pi * hbar) ** -0.25 * np.exp(1j / hbar * (0.5 * alpha * x * x + beta * x + gamma))


def packet_exact(q: ArrayLike, p: ArrayLike, t: float, hbar: float, q0: float, p0: float,
                 field: float = 0.0) -> NDArray[np.complex128]:
    """Phase-space image of :func:`packet_exact_wavefunction`."""
    alpha, beta, gamma, amp = _packet_coefficients(t, q0, p0, field)
    return chirp_wpt(alpha, beta, gamma, amp * (np.pi * hbar) ** -0.25, q, p, hbar)


def _packet_coefficients(t, q0, p0, field):
    qt, pt, action = (float(v) for v in flow(q0, p0, t, field))
    Z = complex(anisotropy(t))
    alpha = Z
    beta = pt - Z * qt
    gamma = action - pt * qt + 0.5 * Z * qt * qt
    return alpha, beta, gamma, 1 / np.sqrt(1 + 2j * t)
