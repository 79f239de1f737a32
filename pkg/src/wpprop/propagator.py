"""Thawed Gaussians, the semiclassical phase-space kernel and its reductions.

For a source packet at ``(eta, xi)`` evolved to ``(eta_t, xi_t)`` the kernel is

    K(q, p; eta, xi, t) = 2^(-d/2) (pi hbar)^(-d) det(Im Q)^(1/4) e^(i lambda)
        * exp((i/hbar) [A - p.(eta_t - q) + v.Q v / 2]),  v = (q - eta_t, p - xi_t),

with ``Q`` assembled from ``W = -(Z + iI)^(-1)``.  Propagation integrates
it against a phase-space field by trapezoidal quadrature over a lattice of
source nodes whose orbits are held in a :class:`KernelCache`.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (BoundaryMassError, HamiltonianModel, PhasePoint, PhaseSpaceField, UniformGrid,
                   _check_hbar)
from .flow import DEFAULT_STEP, IntegrationError, OrbitBatch, TrajectoryRecord, integrate_batch, integrate_orbit
from .siegel import SiegelError, q_blocks, ratio, w_from_variational
from .transform import _check_phase_resolution, boundary_mass_fraction

logger = logging.getLogger(__name__)

SOURCE_CHUNK = 2048
BOUNDARY_MASS_TOL = 1e-4


class CriticalPointError(RuntimeError):
    """The shooting problem for the classical orbit failed or is degenerate."""


@dataclass(frozen=True)
class KernelData:
    """Classical data of every cached source node at one time ``t``.

    All arrays carry the node index first; ``d`` is the dimension.
    """

    t: float
    eta: NDArray[np.float64]
    xi: NDArray[np.float64]
    qt: NDArray[np.float64]
    pt: NDArray[np.float64]
    action: NDArray[np.float64]
    Z: NDArray[np.complex128]
    Q: NDArray[np.complex128]
    det_q_imag: NDArray[np.float64]
    phi: NDArray[np.float64]
    lam: NDArray[np.float64]

    @classmethod
    def from_batch(cls, batch: OrbitBatch) -> "KernelData":
        d = batch.q.shape[1]
        Z = ratio(batch.Y, batch.X)
        W = w_from_variational(batch.X, batch.Y)
        Q = q_blocks(W)
        det_q2 = np.linalg.det(Q.imag)
        if np.any(det_q2 <= 0):
            raise SiegelError("Im Q lost positive definiteness in a cached orbit")
        lam = batch.phi + 0.5 * batch.arg_det_w - 0.25 * np.pi * d
        return cls(batch.t, batch.q0, batch.p0, batch.q, batch.p, batch.action, Z, Q, det_q2, batch.phi, lam)

    @property
    def dim(self) -> int:
        return self.qt.shape[1]

    def subset(self, idx) -> "KernelData":
        return KernelData(self.t, self.eta[idx], self.xi[idx], self.qt[idx], self.pt[idx], self.action[idx],
                          self.Z[idx], self.Q[idx], self.det_q_imag[idx], self.phi[idx], self.lam[idx])


class KernelCache:
    """Orbits of a fixed lattice of source points, snapshotted at requested times.

    The cache is filled in one write phase (:meth:`populate`); afterwards
    lookups are read-only.  A time not yet present is integrated on demand.

    Parameters
    ----------
    model : HamiltonianModel
    eta, xi : array_like, shape (n, d) or (n,)
        Source nodes.
    step : float
        RK4 step for all orbits.
    """

    def __init__(self, model: HamiltonianModel, eta: ArrayLike, xi: ArrayLike, step: float = DEFAULT_STEP):
        d = model.dim
        self.model = model
        self.eta = np.asarray(eta, dtype=float).reshape(-1, d)
        self.xi = np.asarray(xi, dtype=float).reshape(-1, d)
        if self.eta.shape != self.xi.shape:
            raise ValueError("eta and xi must have the same shape")
        self.step = float(step)
        self._data: dict[float, KernelData] = {}
        self.richardson_error = 0.0
        self._extra: dict[tuple, KernelData] = {}
        self.grids: tuple[UniformGrid, UniformGrid] | None = None

    @classmethod
    def for_grid(cls, model: HamiltonianModel, qgrid: UniformGrid, pgrid: UniformGrid,
                 step: float = DEFAULT_STEP) -> "KernelCache":
        """Cache over the tensor lattice of two grids, ``q`` index varying slowest."""
        E, X = np.meshgrid(qgrid.points, pgrid.points, indexing="ij")
        cache = cls(model, E.ravel(), X.ravel(), step)
        cache.grids = (qgrid, pgrid)
        return cache

    @property
    def key(self) -> tuple:
        return (self.model.name, self.step, self.eta.shape[0])

    def populate(self, times: Iterable[float]) -> None:
        """Integrate all nodes to the given times (both signs allowed)."""
        times = sorted({float(t) for t in times} - set(self._data))
        for sign_times in ([t for t in times if t > 0], sorted([t for t in times if t < 0], reverse=True)):
            if not sign_times:
                continue
            batches, err = integrate_batch(self.model, self.eta, self.xi, sign_times, self.step)
            self.richardson_error = max(self.richardson_error, err)
            for b in batches:
                self._data[b.t] = KernelData.from_batch(b)
        if 0.0 in times:
            batches, _ = integrate_batch(self.model, self.eta, self.xi, [0.0], self.step, richardson=False)
            self._data[0.0] = KernelData.from_batch(batches[0])
        logger.debug("kernel cache %s populated, Richardson estimate %.2e", self.key, self.richardson_error)

    def data(self, t: float) -> KernelData:
        t = float(t)
        if t not in self._data:
            self.populate([t])
        return self._data[t]

    def lookup(self, source: PhasePoint, t: float) -> KernelData:
        """Kernel data for a single source, integrating it if it is not a node."""
        data = self.data(t)
        hit = np.nonzero(np.all(data.eta == source.q, axis=1) & np.all(data.xi == source.p, axis=1))[0]
        if hit.size:
            return data.subset(hit[:1])
        key = (tuple(source.q), tuple(source.p), float(t))
        if key not in self._extra:
            batches, _ = integrate_batch(self.model, source.q[None], source.p[None], [t], self.step, richardson=False)
            self._extra[key] = KernelData.from_batch(batches[0])
        return self._extra[key]


def thawed_gaussian(traj: TrajectoryRecord, x: ArrayLike, t: float, hbar: float) -> NDArray[np.complex128]:
    """Evaluate the evolved packet ``u exp((i/hbar)[A + p_t.(x-q_t) + (x-q_t).Z(x-q_t)/2])``.

    ``u = (pi hbar)^(-d/4) det(Im Z)^(1/4) e^(i phi)``, which keeps the packet
    normalised.  ``x`` has shape ``(..., d)``; in one dimension a plain
    array of positions is accepted.
    """
    hbar = _check_hbar(hbar)
    k = traj.index(t)
    d = traj.dim
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != d:
        x = x[..., None]
    Z = ratio(traj.Y[k], traj.X[k])
    dx = x - traj.q[k]
    quad = np.einsum("...i,ij,...j->...", dx, Z, dx)
    expo = traj.action[k] + dx @ traj.p[k] + 0.5 * quad
    amp = (np.pi * hbar) ** (-d / 4) * np.linalg.det(Z.imag) ** 0.25 * np.exp(1j * traj.phi[k])
    return amp * np.exp(1j * expo / hbar)


def kernel_matrix(data: KernelData, q: ArrayLike, p: ArrayLike, hbar: float) -> NDArray[np.complex128]:
    """Kernel between targets ``(q, p)`` (shape ``(m, d)``) and all nodes in ``data``.

    Returns an ``(m, n)`` array.
    """
    d = data.dim
    q = np.asarray(q, dtype=float).reshape(-1, d)
    p = np.asarray(p, dtype=float).reshape(-1, d)
    v = np.concatenate([q[:, None, :] - data.qt[None], p[:, None, :] - data.pt[None]], axis=-1)
    quad = np.einsum("mni,nij,mnj->mn", v, data.Q, v)
    lin = np.einsum("mi,mni->mn", p, data.qt[None] - q[:, None, :])
    expo = data.action[None] - lin + 0.5 * quad
    pref = 2 ** (-d / 2) * (np.pi * hbar) ** (-d) * data.det_q_imag**0.25 * np.exp(1j * data.lam)
    return pref[None] * np.exp(1j * expo / hbar)


def _kernel_matrix_1d(data: KernelData, q: NDArray, p: NDArray, hbar: float) -> NDArray[np.complex128]:
    """Fast path of :func:`kernel_matrix` for ``d = 1``."""
    qt, pt = data.qt[:, 0], data.pt[:, 0]
    Q = data.Q
    v1 = q[:, None] - qt[None]
    v2 = p[:, None] - pt[None]
    quad = Q[:, 0, 0] * v1 * v1 + 2 * Q[:, 0, 1] * v1 * v2 + Q[:, 1, 1] * v2 * v2
    expo = data.action[None] - p[:, None] * (qt[None] - q[:, None]) + 0.5 * quad
    pref = 2**-0.5 / (np.pi * hbar) * data.det_q_imag**0.25 * np.exp(1j * data.lam)
    return pref[None] * np.exp(1j * expo / hbar)


def kernel_eval(target: PhasePoint, source: PhasePoint, t: float, cache: KernelCache, hbar: float) -> complex:
    """Kernel value ``K(target; source, t)``.

    A source that is not a cached node is integrated on demand.
    """
    hbar = _check_hbar(hbar)
    data = cache.lookup(source, t)
    return complex(kernel_matrix(data, target.q[None], target.p[None], hbar)[0, 0])


def propagate_points(Psi0: PhaseSpaceField, cache: KernelCache, t: float, q: ArrayLike, p: ArrayLike) -> NDArray[np.complex128]:
    """Propagated field at scattered targets; the cache must hold ``Psi0``'s lattice."""
    hbar = Psi0.hbar
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    shape = np.broadcast(q, p).shape
    qf = np.broadcast_to(q, shape).ravel()
    pf = np.broadcast_to(p, shape).ravel()
    data = cache.data(t)
    src = (Psi0.values * Psi0.weights).ravel()
    if data.eta.shape[0] != src.size:
        raise ValueError("kernel cache lattice does not match the field grid")
    E, X = Psi0.mesh()
    if not (np.allclose(data.eta[:, 0], E.ravel(), rtol=0, atol=1e-14)
            and np.allclose(data.xi[:, 0], X.ravel(), rtol=0, atol=1e-14)):
        raise ValueError("kernel cache nodes are not the field's grid points")
    keep = np.nonzero(src != 0)[0]
    out = np.zeros(qf.size, dtype=complex)
    # fixed chunk order keeps the summation deterministic
    for start in range(0, keep.size, SOURCE_CHUNK):
        idx = keep[start:start + SOURCE_CHUNK]
        K = _kernel_matrix_1d(data.subset(idx), qf, pf, hbar)
        out += K @ src[idx]
    return out.reshape(shape)


def propagate(Psi0: PhaseSpaceField, model: HamiltonianModel, t: float, qgrid: UniformGrid | None = None,
              pgrid: UniformGrid | None = None, step: float = DEFAULT_STEP, cache: KernelCache | None = None,
              boundary_tol: float | None = BOUNDARY_MASS_TOL, check: bool = True) -> PhaseSpaceField:
    """Propagate a phase-space field with the semiclassical kernel.

    Parameters
    ----------
    Psi0 : PhaseSpaceField
        Initial field; its grid is the source lattice.
    model : HamiltonianModel
    t : float
    qgrid, pgrid : UniformGrid, optional
        Target grid, the source grid by default.
    step : float
        RK4 step for the source orbits.
    cache : KernelCache, optional
        Reused when given; must be built on ``Psi0``'s lattice.
    boundary_tol : float or None
        Maximal fraction of ``|Psi0|^2`` on the lattice edge.
    check : bool
        Enforce the ``sqrt(hbar)/4`` spacing rule on the source lattice.

    Raises
    ------
    ResolutionError
        If the source lattice is too coarse.
    BoundaryMassError
        If ``Psi0`` is not contained in the lattice.
    """
    if model.dim != 1:
        raise ValueError("grid propagation is implemented for one-dimensional models")
    if check:
        _check_phase_resolution(Psi0.qgrid, Psi0.pgrid, Psi0.hbar)
    if boundary_tol is not None:
        frac = boundary_mass_fraction(Psi0)
        if frac > boundary_tol:
            raise BoundaryMassError(f"initial field has boundary mass fraction {frac:.2e} > {boundary_tol:.2e}")
    qgrid = qgrid or Psi0.qgrid
    pgrid = pgrid or Psi0.pgrid
    if cache is None:
        cache = KernelCache.for_grid(model, Psi0.qgrid, Psi0.pgrid, step)
    Q, P = np.meshgrid(qgrid.points, pgrid.points, indexing="ij")
    values = propagate_points(Psi0, cache, t, Q, P)
    return PhaseSpaceField(qgrid, pgrid, values, Psi0.hbar)


def config_lattice(x: ArrayLike, y: ArrayLike, t: float, hbar: float, width: float = 8.0,
                   spacing: float | None = None) -> tuple[UniformGrid, UniformGrid]:
    """Phase-space lattice covering the packets that connect ``y`` to ``x`` in time ``t``.

    Built from the free-motion estimate ``p = (x - y)/2t``; the ``p`` window
    is widened by the packet's momentum spread at time ``t``.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    s = np.sqrt(hbar)
    h = spacing or s / 4
    qlo, qhi = y.min() - width * s, y.max() + width * s
    pc = (x - y) / (2 * t) if t > 0 else np.zeros_like(x)
    spread = width * s * max(1.0, np.sqrt(1 + 4 * t * t) / (2 * t) if t > 0 else 1.0)
    plo, phi = pc.min() - spread, pc.max() + spread
    nq = int(np.ceil((qhi - qlo) / h)) + 1
    npts = int(np.ceil((phi - plo) / h)) + 1
    return UniformGrid(qlo, h, nq), UniformGrid(plo, h, npts)


def config_kernel(x: ArrayLike, y: ArrayLike, t: float, cache: KernelCache, hbar: float) -> NDArray[np.complex128]:
    """Configuration-space kernel ``(2 pi hbar)^(-1) sum conj(G_(q,p)(y)) G^Z_(q,p)(x, t)``.

    The sum runs over the cache's lattice with trapezoidal weights, so the
    cache must be built with :meth:`KernelCache.for_grid`.  ``x`` and ``y``
    broadcast against each other.
    """
    hbar = _check_hbar(hbar)
    if cache.model.dim != 1:
        raise ValueError("config_kernel is implemented for one-dimensional models")
    if cache.grids is None:
        raise ValueError("config_kernel needs a cache built on a tensor lattice (KernelCache.for_grid)")
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    data = cache.data(t)
    eta, xi = data.eta[:, 0], data.xi[:, 0]
    weights = np.outer(cache.grids[0].weights, cache.grids[1].weights).ravel()
    Z = data.Z[:, 0, 0]
    dqt = x.ravel()[:, None] - data.qt[None, :, 0]
    dy = y.ravel()[:, None] - eta[None]
    evolved = np.exp(1j / hbar * (data.action[None] + data.pt[None, :, 0] * dqt + 0.5 * Z[None] * dqt * dqt))
    evolved *= (np.pi * hbar) ** -0.25 * (Z.imag**0.25 * np.exp(1j * data.phi))[None]
    initial = (np.pi * hbar) ** -0.25 * np.exp(1j / hbar * (-xi[None] * dy + 0.5j * dy * dy))
    total = np.sum(initial * evolved * weights[None], axis=1) / (2 * np.pi * hbar)
    return total.reshape(x.shape)


@dataclass(frozen=True)
class VanVleckResult:
    """Stationary-phase reduction of the configuration kernel.

    Attributes
    ----------
    value : complex
        ``(2 pi i hbar)^(-d/2) a_gamma |det dp/dq_t|^(1/2) exp(i A/hbar - i pi nu/2)``.
    a_gamma : complex
        Correction factor relative to the van Vleck-Gutzwiller amplitude.
    momentum : ndarray
        Initial momentum of the critical orbit.
    action : float
    maslov_index : int
        Number of negative eigenvalues of ``dp/dq_t``.
    det_dq_dp : float
        ``det dq_t/dp`` along the critical orbit.
    iterations : int
    """

    value: complex
    a_gamma: complex
    momentum: NDArray[np.float64]
    action: float
    maslov_index: int
    det_dq_dp: float
    iterations: int = 0
    trajectory: TrajectoryRecord | None = field(default=None, repr=False, compare=False)


def correction_factor(traj: TrajectoryRecord, t: float | None = None) -> complex:
    """``a_gamma = 2^(d/2) sqrt(det dq_t/dz) exp(-1/2 int tr(H_pp Z))``.

    ``dq_t/dz = X/2``; the square root follows ``det X`` continuously from
    ``det X(0) = 1``.
    """
    k = traj.index(traj.t_final if t is None else t)
    detx = np.array([np.linalg.det(X) for X in traj.X[:k + 1]])
    arg = np.unwrap(np.angle(detx))
    if k and np.max(np.abs(np.diff(arg))) >= np.pi / 2:
        raise CriticalPointError("det X argument jumps too fast; refine the time step")
    sqrt_det = np.sqrt(abs(detx[-1])) * np.exp(0.5j * arg[-1])
    return complex(sqrt_det * np.exp(traj.log_amplitude[k]))


def van_vleck_reduce(x: ArrayLike, y: ArrayLike, t: float, model: HamiltonianModel, hbar: float,
                     step: float = DEFAULT_STEP, tol: float = 1e-10, max_iter: int = 50) -> VanVleckResult:
    """Evaluate the kernel from the single real orbit joining ``y`` to ``x`` in time ``t``.

    The initial momentum solves ``q_t(y, p) = x`` by damped Newton seeded
    with the free-motion value ``(x - y)/2t``.

    Raises
    ------
    CriticalPointError
        If Newton fails or ``dq_t/dp`` is singular at the orbit.
    """
    hbar = _check_hbar(hbar)
    if not t > 0:
        raise ValueError("van Vleck reduction needs t > 0")
    d = model.dim
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    p = (x - y) / (2 * t)

    def shoot(p):
        traj = integrate_orbit(model, PhasePoint(y, p), t, step)
        return traj, traj.q[-1] - x

    try:
        traj, res = shoot(p)
        it = 0
        while np.max(np.abs(res)) > tol:
            it += 1
            if it > max_iter:
                raise CriticalPointError(f"shooting did not converge, residual {np.max(np.abs(res)):.2e}")
            jac = traj.X[-1].imag
            if abs(np.linalg.det(jac)) < 1e-12:
                raise CriticalPointError("dq_t/dp is singular along the shooting orbit")
            delta = np.linalg.solve(jac, res)
            lam = 1.0
            while True:
                cand_traj, cand_res = shoot(p - lam * delta)
                if np.max(np.abs(cand_res)) < np.max(np.abs(res)) or lam < 1e-6:
                    break
                lam *= 0.5
            p, traj, res = p - lam * delta, cand_traj, cand_res
    except IntegrationError as exc:
        raise CriticalPointError(str(exc)) from exc
    dq_dp = traj.X[-1].imag
    det_dq_dp = float(np.linalg.det(dq_dp))
    if abs(det_dq_dp) < 1e-12:
        raise CriticalPointError("degenerate critical orbit (caustic)")
    dp_dq = np.linalg.inv(dq_dp)
    nu = int(np.sum(np.linalg.eigvals(dp_dq).real < 0))
    a_gamma = correction_factor(traj)
    action = float(traj.action[-1])
    value = ((2j * np.pi * hbar) ** (-d / 2) * a_gamma * np.sqrt(abs(np.linalg.det(dp_dq)))
             * np.exp(1j * action / hbar - 0.5j * np.pi * nu))
    return VanVleckResult(complex(value), a_gamma, p, action, nu, det_dq_dp, it, traj)
