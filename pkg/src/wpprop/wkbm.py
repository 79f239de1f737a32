"""WKBM states ``a(x) exp(i S(x)/hbar)`` in phase space and their transport.

The phase-space image of a WKBM state concentrates on the Lagrangian
manifold ``p = S'(q)``.  Its leading term is obtained from the complex
stationary point ``x_c`` of ``S(w) - p (w - q) + (i/2)(w - q)^2``, which is
found on an almost-analytic continuation of ``S``.  Under a Hamiltonian flow
the manifold is transported along characteristics; the phase follows the
Hamilton-Jacobi equation.  Everything here is one dimensional.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from math import factorial
from typing import Protocol, Sequence

import numpy as np
from numpy.polynomial import Polynomial, hermite_e
from numpy.typing import ArrayLike, NDArray
from scipy import integrate

from .core import HamiltonianModel, UniformGrid, _check_hbar
from .flow import DEFAULT_STEP, integrate_batch

logger = logging.getLogger(__name__)

DEFAULT_ORDER = 3
NEWTON_TOL = 1e-12
NEWTON_MAX_ITER = 50


class ConvergenceError(RuntimeError):
    """Newton iteration failed to converge."""


class CausticError(RuntimeError):
    """The transported manifold is not projectable onto the position axis."""


class SmoothFunction(Protocol):
    """Real function of one variable with derivatives of any order."""

    def derivatives(self, x: NDArray, order: int) -> list[NDArray]:
        """``[f(x), f'(x), ..., f^(order)(x)]``."""


@dataclass(frozen=True)
class PolynomialFunction:
    """Real polynomial; its continuation to complex arguments is exact."""

    coefficients: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))

    @property
    def poly(self) -> Polynomial:
        return Polynomial(self.coefficients)

    def derivatives(self, x, order):
        poly = self.poly
        return [poly.deriv(k)(x) if k else poly(x) for k in range(order + 1)]

    def __call__(self, x):
        return self.poly(x)


@dataclass(frozen=True)
class GaussianFunction:
    """Normalised Gaussian ``(pi s^2)^(-1/4) exp(-(x - c)^2 / 2 s^2)``."""

    center: float = 0.0
    width: float = 1.0

    def __call__(self, x):
        u = (np.asarray(x) - self.center) / self.width
        return (np.pi * self.width**2) ** -0.25 * np.exp(-0.5 * u * u)

    def derivatives(self, x, order):
        x = np.asarray(x, dtype=float)
        u = (x - self.center) / self.width
        base = (np.pi * self.width**2) ** -0.25 * np.exp(-0.5 * u * u)
        out = []
        for k in range(order + 1):
            # d^k/du^k exp(-u^2/2) = (-1)^k He_k(u) exp(-u^2/2)
            coef = np.zeros(k + 1)
            coef[k] = 1.0
            out.append((-1) ** k * hermite_e.hermeval(u, coef) * base / self.width**k)
        return out


def almost_analytic_eval(f: SmoothFunction, w: ArrayLike, order: int = DEFAULT_ORDER,
                         derivative: int = 0) -> NDArray[np.complex128]:
    """Order-``N`` almost-analytic extension ``sum_k (i y)^k f^(k)(x) / k!`` at ``w = x + iy``.

    Polynomials are continued exactly.  ``derivative`` selects the extension
    of ``f^(m)`` instead of ``f``.
    """
    w = np.asarray(w, dtype=complex)
    if isinstance(f, PolynomialFunction):
        poly = f.poly.deriv(derivative) if derivative else f.poly
        return poly(w)
    x, y = w.real, w.imag
    derivs = f.derivatives(x, order + derivative)[derivative:]
    total = np.zeros(w.shape, dtype=complex)
    for k, dk in enumerate(derivs):
        total = total + (1j * y) ** k / factorial(k) * dk
    return total


def cauchy_riemann_residual(f: SmoothFunction, w: ArrayLike, order: int = DEFAULT_ORDER, h: float = 1e-5) -> NDArray[np.float64]:
    """``|d/d conj(w)|`` of the extension, by central differences in ``x`` and ``y``."""
    w = np.asarray(w, dtype=complex)
    fx = (almost_analytic_eval(f, w + h, order) - almost_analytic_eval(f, w - h, order)) / (2 * h)
    fy = (almost_analytic_eval(f, w + 1j * h, order) - almost_analytic_eval(f, w - 1j * h, order)) / (2 * h)
    return np.abs(0.5 * (fx + 1j * fy))


@dataclass(frozen=True)
class WkbmState:
    """WKBM data: real phase ``S``, normalised amplitude ``a``, extension order.

    Parameters
    ----------
    phase : PolynomialFunction or SmoothFunction
    amplitude : SmoothFunction
        Must be square integrable with ``int a^2 = 1`` (checked).
    order : int
        Almost-analytic extension order.
    """

    phase: SmoothFunction
    amplitude: SmoothFunction
    order: int = DEFAULT_ORDER

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("extension order must be at least 1")
        norm, _ = integrate.quad(lambda x: float(self.amplitude.derivatives(np.array(x), 0)[0]) ** 2,
                                 -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
        if abs(norm - 1) > 1e-8:
            raise ValueError(f"amplitude is not normalised (int a^2 = {norm:.10f})")

    def S(self, x, k: int = 0):
        return self.phase.derivatives(np.asarray(x, dtype=float), k)[k]

    def a(self, x):
        return self.amplitude.derivatives(np.asarray(x, dtype=float), 0)[0]

    def wavefunction(self, x: ArrayLike, hbar: float) -> NDArray[np.complex128]:
        x = np.asarray(x, dtype=float)
        return self.a(x) * np.exp(1j * self.S(x) / hbar)


def chirped_gaussian_state(order: int = DEFAULT_ORDER) -> WkbmState:
    """``S = x^2/2`` with the unit Gaussian amplitude."""
    return WkbmState(PolynomialFunction((0.0, 0.0, 0.5)), GaussianFunction(0.0, 1.0), order)


def sqrt_branch(z: ArrayLike) -> NDArray[np.complex128]:
    """Square root with arguments taken in ``(-3 pi / 2, pi / 2]``."""
    z = np.asarray(z, dtype=complex)
    arg = np.angle(z)
    arg = np.where(arg > np.pi / 2, arg - 2 * np.pi, arg)
    return np.sqrt(np.abs(z)) * np.exp(0.5j * arg)


def stationary_point(state: WkbmState, q: ArrayLike, p: ArrayLike, tol: float = NEWTON_TOL,
                     max_iter: int = NEWTON_MAX_ITER) -> NDArray[np.complex128]:
    """Solve ``S~'(w) - p + i (w - q) = 0`` by damped Newton.

    Seeded with ``q + (p - S'(q)) / (S''(q) + i)``.  On the manifold
    ``p = S'(q)`` the solution is ``w = q``.

    Raises
    ------
    ConvergenceError
        If the iteration does not reach ``tol``.
    """
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    N = state.order

    def g(w):
        return almost_analytic_eval(state.phase, w, N, 1) - p + 1j * (w - q)

    w = q + (p - state.S(q, 1)) / (state.S(q, 2) + 1j)
    res = g(w)
    for _ in range(max_iter):
        if np.all(np.abs(res) <= tol * (1 + np.abs(p))):
            return w
        jac = almost_analytic_eval(state.phase, w, N, 2) + 1j
        delta = res / jac
        lam = np.ones(w.shape)
        for _ in range(30):
            cand = w - lam * delta
            cres = g(cand)
            worse = np.abs(cres) > np.abs(res)
            if not np.any(worse):
                break
            lam = np.where(worse, 0.5 * lam, lam)
        w, res = cand, cres
    if np.all(np.abs(res) <= tol * (1 + np.abs(p))):
        return w
    raise ConvergenceError(f"stationary point not found, residual {np.max(np.abs(res)):.2e}")


@dataclass(frozen=True)
class PhaseSpaceTerms:
    """Leading-order phase-space WKBM data at a set of points."""

    stationary: NDArray[np.complex128]
    sigma: NDArray[np.complex128]
    amplitude: NDArray[np.complex128]
    value: NDArray[np.complex128]


def wkbm_phase_space(state: WkbmState, q: ArrayLike, p: ArrayLike, hbar: float) -> PhaseSpaceTerms:
    """Leading term ``i^(-1/2) (pi hbar)^(-1/4) a_0 exp(i Sigma / hbar)`` of the transformed state.

    ``Sigma = S~(x_c) - p (x_c - q) + (i/2)(x_c - q)^2`` and
    ``a_0 = a~(x_c) / sqrt(-(S~''(x_c) + i))``.
    """
    hbar = _check_hbar(hbar)
    q, p = np.broadcast_arrays(np.asarray(q, dtype=float), np.asarray(p, dtype=float))
    N = state.order
    w = stationary_point(state, q, p)
    dw = w - q
    sigma = almost_analytic_eval(state.phase, w, N) - p * dw + 0.5j * dw * dw
    curv = almost_analytic_eval(state.phase, w, N, 2)
    a0 = almost_analytic_eval(state.amplitude, w, N) / sqrt_branch(-(curv + 1j))
    value = np.exp(-0.25j * np.pi) * (np.pi * hbar) ** -0.25 * a0 * np.exp(1j * sigma / hbar)
    return PhaseSpaceTerms(w, sigma, a0, value)


@dataclass(frozen=True)
class Characteristics:
    """Images of manifold points ``(x0, S'(x0))`` under the flow at time ``t``."""

    x0: NDArray[np.float64]
    q: NDArray[np.float64]
    p: NDArray[np.float64]
    action: NDArray[np.float64]
    dq: NDArray[np.float64]
    dp: NDArray[np.float64]

    @property
    def curvature(self) -> NDArray[np.float64]:
        """``d^2 S / dq^2`` of the transported phase."""
        return self.dp / self.dq


def _characteristics(state: WkbmState, model: HamiltonianModel, t: float, x0: NDArray, step: float) -> Characteristics:
    x0 = np.asarray(x0, dtype=float)
    flat = x0.ravel()
    s1, s2 = state.S(flat, 1), state.S(flat, 2)
    if t == 0:
        ones = np.ones_like(flat)
        c = Characteristics(flat, flat.copy(), s1, np.zeros_like(flat), ones, s2)
    else:
        (batch,), _ = integrate_batch(model, flat[:, None], s1[:, None], [t], step, richardson=False)
        X, Y = batch.X[:, 0, 0], batch.Y[:, 0, 0]
        # tangent of the manifold is (1, S'') in (q, p)
        c = Characteristics(flat, batch.q[:, 0], batch.p[:, 0], batch.action,
                            X.real + X.imag * s2, Y.real + Y.imag * s2)
    shape = x0.shape
    return Characteristics(*(np.reshape(v, shape) for v in (c.x0, c.q, c.p, c.action, c.dq, c.dp)))


@dataclass(frozen=True)
class LagrangianManifold:
    """Manifold ``p = dS/dq (q, t)`` transported to time ``t``.

    Built by :func:`hj_transport`; the characteristic table on ``x0`` nodes
    seeds the Newton inversion ``q -> x0`` used by every evaluator.
    """

    state: WkbmState
    model: HamiltonianModel
    t: float
    step: float
    table: Characteristics

    def source(self, q: ArrayLike, tol: float = NEWTON_TOL, max_iter: int = NEWTON_MAX_ITER) -> Characteristics:
        """Characteristics through the positions ``q`` (backward characteristic solve)."""
        q = np.asarray(q, dtype=float)
        if np.any(q < self.table.q[0]) or np.any(q > self.table.q[-1]):
            raise ValueError("position outside the tabulated chart of the manifold")
        x0 = np.interp(q, self.table.q, self.table.x0)
        for _ in range(max_iter):
            c = _characteristics(self.state, self.model, self.t, x0, self.step)
            res = c.q - q
            if np.all(np.abs(res) <= tol * (1 + np.abs(q))):
                return c
            x0 = x0 - res / c.dq
        c = _characteristics(self.state, self.model, self.t, x0, self.step)
        if np.all(np.abs(c.q - q) <= tol * (1 + np.abs(q))):
            return c
        raise ConvergenceError("backward characteristic solve did not converge")

    def phase(self, q: ArrayLike) -> NDArray[np.float64]:
        """Hamilton-Jacobi solution ``S(q, t) = S(x0) + A(x0, S'(x0), t)``."""
        c = self.source(q)
        return self.state.S(c.x0) + c.action

    def momentum(self, q: ArrayLike) -> NDArray[np.float64]:
        return self.source(q).p


def hj_transport(state: WkbmState, model: HamiltonianModel, t: float, x0_range: tuple[float, float] = (-6.0, 6.0),
                 nodes: int = 241, step: float = DEFAULT_STEP) -> LagrangianManifold:
    """Transport the manifold of ``state`` by the flow of ``model`` up to time ``t``.

    Raises
    ------
    CausticError
        If ``x0 -> q_t`` is not strictly increasing on the tabulated range.
    """
    if model.dim != 1:
        raise ValueError("manifold transport is implemented in one dimension")
    x0 = np.linspace(*x0_range, nodes)
    table = _characteristics(state, model, t, x0, step)
    if np.any(table.dq <= 0) or np.any(np.diff(table.q) <= 0):
        bad = float(table.x0[np.argmin(table.dq)])
        raise CausticError(f"manifold not projectable at t={t} (near x0={bad:.3f})")
    return LagrangianManifold(state, model, float(t), step, table)


def asymptotic_on_manifold(manifold: LagrangianManifold, q: ArrayLike, hbar: float,
                           transport: bool = True) -> NDArray[np.complex128]:
    """Leading-order phase-space solution at ``(q, dS/dq(q, t))``.

    Evaluates ``e^(i pi/4) (pi hbar)^(-1/4) a(x0) / sqrt(N) exp(i[S(x0) + A]/hbar)``
    where ``x0`` is the backward characteristic foot.  With ``transport=True``
    ``N = dp_t + i dq_t`` along the manifold tangent, which carries the
    Jacobian of the characteristic map; ``transport=False`` keeps
    ``N = S''(x0) + i`` frozen at the initial curvature.  Both agree at
    ``t = 0``.
    """
    hbar = _check_hbar(hbar)
    c = manifold.source(q)
    st = manifold.state
    if transport:
        n = c.dp + 1j * c.dq
    else:
        n = st.S(c.x0, 2) + 1j
    pref = np.exp(0.25j * np.pi) * (np.pi * hbar) ** -0.25
    return pref * st.a(c.x0) / np.sqrt(n) * np.exp(1j * (st.S(c.x0) + c.action) / hbar)


def manifold_norm(manifold: LagrangianManifold, grid: UniformGrid) -> float:
    """Classical-limit norm ``int a_t^2 / |S_t'' + i| dnu`` over the transported manifold.

    ``a_t = a(x0) |dx0/dq|^(1/2)`` is the transported amplitude and
    ``dnu = sqrt(1 + S_t''^2) dq`` the induced arc length in the ``q`` chart.
    """
    q = grid.points
    c = manifold.source(q)
    a_t2 = manifold.state.a(c.x0) ** 2 / c.dq
    curv = c.curvature
    density = a_t2 / np.abs(curv + 1j) * np.sqrt(1 + curv**2)
    return float(np.sum(grid.weights * density))


def imag_sigma(state: WkbmState, q: ArrayLike, p: ArrayLike) -> NDArray[np.float64]:
    """``Im Sigma`` at the given points; zero on the manifold, positive off it."""
    return wkbm_phase_space(state, q, p, 1.0).sigma.imag


def polynomial_state(phase_coefficients: Sequence[float], center: float = 0.0, width: float = 1.0,
                     order: int = DEFAULT_ORDER) -> WkbmState:
    """WKBM state with polynomial phase and a normalised Gaussian amplitude."""
    return WkbmState(PolynomialFunction(tuple(phase_coefficients)), GaussianFunction(center, width), order)
