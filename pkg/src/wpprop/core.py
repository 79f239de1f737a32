"""Phase-space points, Hamiltonian models, grids and validation predicates.

All Hamiltonian evaluators are vectorised: positions and momenta carry a
trailing axis of length ``dim`` and any number of leading batch axes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

logger = logging.getLogger(__name__)

DEFAULT_HBAR = 0.05
MAX_POLY_DEGREE = 6


class ModelError(ValueError):
    """Invalid model definition or evaluation."""


class DimensionError(ValueError):
    """Phase-space dimension does not match the model."""


class ResolutionError(ValueError):
    """A grid is too coarse for the requested semiclassical parameter."""


class BoundaryMassError(ValueError):
    """Too much of a field's mass sits near the edge of its grid."""


@dataclass(frozen=True)
class PhasePoint:
    """A point ``(q, p)`` of the ``2d``-dimensional phase space."""

    q: NDArray[np.float64]
    p: NDArray[np.float64]

    def __init__(self, q: ArrayLike, p: ArrayLike):
        q = np.atleast_1d(np.asarray(q, dtype=float)).copy()
        p = np.atleast_1d(np.asarray(p, dtype=float)).copy()
        if q.ndim != 1 or q.shape != p.shape:
            raise DimensionError(f"q and p must be equal-length vectors, got {q.shape} and {p.shape}")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
            raise ValueError("phase point has non-finite entries")
        q.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.q.size

    @property
    def z(self) -> NDArray[np.complex128]:
        """Complex coordinate ``q - i p``."""
        return self.q - 1j * self.p

    def __iter__(self):
        yield self.q
        yield self.p


def _as_batch(x: ArrayLike, dim: int) -> NDArray[np.float64]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = x[None]
    if x.shape[-1] != dim:
        raise DimensionError(f"expected trailing axis of length {dim}, got shape {x.shape}")
    return x


@dataclass(frozen=True)
class HamiltonianModel:
    """Autonomous Hamiltonian with value, gradient and Hessian evaluators.

    Parameters
    ----------
    name : str
        Identifier used in cache keys and reports.
    dim : int
        Configuration-space dimension ``d``.
    energy, gradient, hessian : callable
        ``f(q, p)`` with ``q, p`` of shape ``(..., d)``.  They return arrays of
        shape ``(...)``, ``(..., 2d)`` and ``(..., 2d, 2d)``; gradient and
        Hessian are ordered ``(q, p)``.
    quadratic : bool
        True when ``H`` is a polynomial of degree at most two, in which case
        the anisotropy dynamics does not depend on the starting point.
    params : dict
        Model parameters, kept for reporting.
    """

    name: str
    dim: int
    energy: Callable[[NDArray, NDArray], NDArray]
    gradient: Callable[[NDArray, NDArray], NDArray]
    hessian: Callable[[NDArray, NDArray], NDArray]
    quadratic: bool = False
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.dim < 1:
            raise ModelError("dimension must be at least 1")

    def evaluate(self, q: ArrayLike, p: ArrayLike):
        """Return ``(H, grad, hess)`` for batched arguments, Hessian symmetrised."""
        q = _as_batch(q, self.dim)
        p = _as_batch(p, self.dim)
        value = np.asarray(self.energy(q, p), dtype=float)
        grad = np.asarray(self.gradient(q, p), dtype=float)
        hess = np.asarray(self.hessian(q, p), dtype=float)
        n = 2 * self.dim
        if grad.shape[-1] != n or hess.shape[-2:] != (n, n):
            raise ModelError(f"model {self.name!r} returned wrong derivative shapes")
        hess_t = np.swapaxes(hess, -1, -2)
        asym = np.max(np.abs(hess - hess_t)) if hess.size else 0.0
        if asym > 1e-12:
            logger.debug("symmetrising Hessian of %s, residual %.3e", self.name, asym)
        hess = 0.5 * (hess + hess_t)
        if not (np.all(np.isfinite(value)) and np.all(np.isfinite(grad)) and np.all(np.isfinite(hess))):
            raise ModelError(f"model {self.name!r} produced non-finite values")
        return value, grad, hess


def hamiltonian_eval(model: HamiltonianModel, point: PhasePoint):
    """Evaluate ``H``, its gradient and its symmetrised Hessian at one point.

    Parameters
    ----------
    model : HamiltonianModel
    point : PhasePoint

    Returns
    -------
    value : float
    gradient : ndarray, shape (2d,)
    hessian : ndarray, shape (2d, 2d)
    """
    if point.dim != model.dim:
        raise DimensionError(f"point has dimension {point.dim}, model {model.name!r} has {model.dim}")
    value, grad, hess = model.evaluate(point.q, point.p)
    return float(value), grad, hess


def hessian_blocks(hess: NDArray, dim: int):
    """Split a ``(q, p)``-ordered Hessian into ``H_qq, H_qp, H_pq, H_pp``."""
    return (hess[..., :dim, :dim], hess[..., :dim, dim:],
            hess[..., dim:, :dim], hess[..., dim:, dim:])


def standard_form(name: str, dim: int, potential, potential_grad, potential_hess,
                  quadratic: bool = False, params: dict | None = None) -> HamiltonianModel:
    """Build ``H = p.p + V(q)`` from potential callables acting on ``(..., d)`` arrays."""

    def energy(q, p):
        return np.sum(p * p, axis=-1) + potential(q)

    def gradient(q, p):
        return np.concatenate([potential_grad(q), 2.0 * p], axis=-1)

    def hessian(q, p):
        shape = q.shape[:-1]
        out = np.zeros(shape + (2 * dim, 2 * dim))
        out[..., :dim, :dim] = potential_hess(q)
        out[..., dim:, dim:] = 2.0 * np.eye(dim)
        return out

    return HamiltonianModel(name, dim, energy, gradient, hessian, quadratic, dict(params or {}))


def polynomial_model(coefficients: Sequence[float], dim: int = 1, name: str | None = None,
                     params: dict | None = None) -> HamiltonianModel:
    """Standard-form model with separable ``V(q) = sum_j sum_k c_k q_j**k``.

    Parameters
    ----------
    coefficients : sequence of float
        ``c_0, c_1, ...`` in increasing degree, at most degree 6.
    dim : int
        Dimension; the same one-dimensional polynomial acts on each coordinate.
    """
    c = np.asarray(coefficients, dtype=float)
    if c.ndim != 1 or c.size == 0:
        raise ModelError("coefficients must be a non-empty 1-d sequence")
    c = np.trim_zeros(c, "b") if np.any(c) else np.zeros(1)
    if c.size - 1 > MAX_POLY_DEGREE:
        raise ModelError(f"polynomial degree {c.size - 1} exceeds {MAX_POLY_DEGREE}")
    if not np.all(np.isfinite(c)):
        raise ModelError("non-finite polynomial coefficient")
    poly = np.polynomial.Polynomial(c)
    d1, d2 = poly.deriv(1), poly.deriv(2)

    def potential(q):
        return np.sum(poly(q), axis=-1)

    def potential_grad(q):
        return d1(q)

    def potential_hess(q):
        vals = d2(q)
        return vals[..., :, None] * np.eye(dim)

    return standard_form(name or "polynomial", dim, potential, potential_grad, potential_hess,
                         quadratic=c.size <= 3, params={"coefficients": c.tolist(), **(params or {})})


def free_model(dim: int = 1) -> HamiltonianModel:
    """Free motion ``H = p**2``."""
    return polynomial_model([0.0], dim, name="free")


def linear_model(dim: int = 1, field_strength: float = 1.0) -> HamiltonianModel:
    """Constant force ``H = p**2 + F sum_j q_j``; ``F = 1`` is the standard field case."""
    return polynomial_model([0.0, field_strength], dim, name="linear",
                            params={"field_strength": field_strength})


def harmonic_model(dim: int = 1, omega: float = 1.0) -> HamiltonianModel:
    """Oscillator ``H = p**2 + omega**2 q**2 / 4`` with angular frequency ``omega``."""
    return polynomial_model([0.0, 0.0, omega**2 / 4.0], dim, name="harmonic", params={"omega": omega})


def quartic_model(dim: int = 1, quadratic: float = 0.25, quartic: float = 0.1) -> HamiltonianModel:
    """Anharmonic stress case ``V(q) = a q**2 + b q**4``."""
    return polynomial_model([0.0, 0.0, quadratic, 0.0, quartic], dim, name="quartic")


def cross_term_model(coupling: float, dim: int = 1) -> HamiltonianModel:
    """``H = p.p + c q.p``; a non-standard-form model built on the generic interface."""

    def energy(q, p):
        return np.sum(p * p, axis=-1) + coupling * np.sum(q * p, axis=-1)

    def gradient(q, p):
        return np.concatenate([coupling * p, 2.0 * p + coupling * q], axis=-1)

    def hessian(q, p):
        out = np.zeros(q.shape[:-1] + (2 * dim, 2 * dim))
        eye = np.eye(dim)
        out[..., :dim, dim:] = coupling * eye
        out[..., dim:, :dim] = coupling * eye
        out[..., dim:, dim:] = 2.0 * eye
        return out

    return HamiltonianModel("cross", dim, energy, gradient, hessian, True, {"coupling": coupling})


BUILTIN_MODELS = {
    "free": free_model,
    "linear": linear_model,
    "harmonic": harmonic_model,
    "quartic": quartic_model,
}


def get_model(kind: str, dim: int = 1, coefficients: Sequence[float] | None = None, **params) -> HamiltonianModel:
    """Look up a built-in model by name; ``polynomial`` requires ``coefficients``."""
    if kind == "polynomial":
        if coefficients is None:
            raise ModelError("polynomial model needs coefficients")
        return polynomial_model(coefficients, dim)
    if kind not in BUILTIN_MODELS:
        raise ModelError(f"unknown model kind {kind!r}; choose from {sorted(BUILTIN_MODELS) + ['polynomial']}")
    return BUILTIN_MODELS[kind](dim=dim, **params)


@dataclass(frozen=True)
class SiegelDiagnostics:
    """Outcome of :func:`siegel_check`."""

    is_symmetric: bool
    symmetry_residual: float
    min_imag_eigenvalue: float
    accepted: bool


def siegel_check(matrix: ArrayLike, tol: float = 1e-10) -> SiegelDiagnostics:
    """Test membership of the Siegel upper half space.

    A matrix is accepted when it is complex symmetric (not Hermitian) to
    within ``tol`` and its imaginary part is positive definite with smallest
    eigenvalue above ``tol``.
    """
    m = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    residual = float(np.max(np.abs(m - m.T)))
    imag = 0.5 * (m.imag + m.imag.T)
    min_eig = float(np.min(np.linalg.eigvalsh(imag)))
    symmetric = residual <= tol
    return SiegelDiagnostics(symmetric, residual, min_eig, symmetric and min_eig > tol)


@dataclass(frozen=True)
class UniformGrid:
    """Uniform one-dimensional grid ``start + step * arange(count)``."""

    start: float
    step: float
    count: int

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be positive")
        if self.count < 2:
            raise ValueError("grid needs at least two points")

    @classmethod
    def from_bounds(cls, lower: float, upper: float, count: int) -> "UniformGrid":
        return cls(float(lower), (upper - lower) / (count - 1), int(count))

    @classmethod
    def centered(cls, count: int, step: float, center: float = 0.0) -> "UniformGrid":
        return cls(center - 0.5 * step * (count - 1), float(step), int(count))

    @property
    def points(self) -> NDArray[np.float64]:
        return self.start + self.step * np.arange(self.count)

    @property
    def stop(self) -> float:
        return self.start + self.step * (self.count - 1)

    @property
    def weights(self) -> NDArray[np.float64]:
        """Trapezoidal weights."""
        w = np.full(self.count, self.step)
        w[[0, -1]] *= 0.5
        return w


def _check_hbar(hbar: float) -> float:
    hbar = float(hbar)
    if not hbar > 0 or not np.isfinite(hbar):
        raise ValueError(f"hbar must be positive, got {hbar}")
    return hbar


@dataclass(frozen=True)
class WavefunctionField:
    """Configuration-space wave function sampled on a one-dimensional grid."""

    grid: UniformGrid
    values: NDArray[np.complex128]
    hbar: float = DEFAULT_HBAR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.grid.count,):
            raise ValueError(f"values shape {values.shape} does not match grid count {self.grid.count}")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "hbar", _check_hbar(self.hbar))

    def norm_squared(self) -> float:
        return float(np.sum(self.grid.weights * np.abs(self.values) ** 2))


@dataclass(frozen=True)
class PhaseSpaceField:
    """Phase-space wave function sampled on a ``q`` by ``p`` grid."""

    qgrid: UniformGrid
    pgrid: UniformGrid
    values: NDArray[np.complex128]
    hbar: float = DEFAULT_HBAR

    def __post_init__(self):
        values = np.asarray(self.values, dtype=complex)
        if values.shape != (self.qgrid.count, self.pgrid.count):
            raise ValueError(
                f"values shape {values.shape} does not match grid ({self.qgrid.count}, {self.pgrid.count})")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "hbar", _check_hbar(self.hbar))

    def mesh(self):
        """Return ``(Q, P)`` coordinate arrays with ``indexing='ij'``."""
        return np.meshgrid(self.qgrid.points, self.pgrid.points, indexing="ij")

    @property
    def weights(self) -> NDArray[np.float64]:
        return np.outer(self.qgrid.weights, self.pgrid.weights)

    def with_values(self, values: ArrayLike) -> "PhaseSpaceField":
        return PhaseSpaceField(self.qgrid, self.pgrid, np.asarray(values), self.hbar)
