"""Siegel upper half space machinery.

The anisotropy matrix ``Z`` of a thawed Gaussian lives in the Siegel upper
half space.  It is obtained either as ``Y X^{-1}`` from the variational
solution or by integrating the matrix Riccati equation directly.  The map
``W = -(Z + iI)^{-1}`` sends it into a ball, and ``W`` assembles the
``2d x 2d`` phase-space quadratic form ``Q`` of the propagator kernel.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import TYPE_CHECKING, TextIO

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _ode
from .core import HamiltonianModel, hessian_blocks, siegel_check

if TYPE_CHECKING:
    from .flow import TrajectoryRecord

logger = logging.getLogger(__name__)

MAX_BRANCH_JUMP = np.pi / 2


class SiegelError(ValueError):
    """A matrix left the Siegel upper half space or its image ball."""


class BranchError(RuntimeError):
    """The tracked argument jumped by more than the allowed amount in one step."""


def ratio(Y: NDArray, X: NDArray) -> NDArray:
    """``Y X^{-1}`` for stacks of square matrices."""
    if X.shape[-1] == 1:
        return Y / X
    return np.swapaxes(np.linalg.solve(np.swapaxes(X, -1, -2), np.swapaxes(Y, -1, -2)), -1, -2)


def w_map(Z: ArrayLike) -> NDArray[np.complex128]:
    """Map ``Z`` to ``W = -(Z + iI)^{-1}``; accepts stacks of matrices."""
    Z = np.asarray(Z, dtype=complex)
    eye = np.eye(Z.shape[-1])
    return -np.linalg.inv(Z + 1j * eye)


def inverse_w_map(W: ArrayLike) -> NDArray[np.complex128]:
    """Inverse of :func:`w_map`, ``Z = -W^{-1} - iI``."""
    W = np.asarray(W, dtype=complex)
    return -np.linalg.inv(W) - 1j * np.eye(W.shape[-1])


def w_from_variational(X: NDArray, Y: NDArray) -> NDArray[np.complex128]:
    """``W = -X (Y + iX)^{-1}``, equal to ``w_map(Y X^{-1})`` without forming ``Z``."""
    return -ratio(X, Y + 1j * X)


def det_w_from_variational(X: NDArray, Y: NDArray) -> NDArray[np.complex128]:
    """``det W`` from the variational matrices; batched."""
    d = X.shape[-1]
    if d == 1:
        return -X[..., 0, 0] / (Y[..., 0, 0] + 1j * X[..., 0, 0])
    return (-1) ** d * np.linalg.det(X) / np.linalg.det(Y + 1j * X)


def ball_distance(W: ArrayLike) -> float:
    """Spectral norm of ``W - (i/2)I``; below 1/2 inside the image ball."""
    W = np.atleast_2d(np.asarray(W, dtype=complex))
    return float(np.linalg.norm(W - 0.5j * np.eye(W.shape[-1]), 2))


def is_symplectic(sigma: ArrayLike, tol: float = 1e-9) -> bool:
    """Check ``sigma J sigma^T = J``."""
    sigma = np.asarray(sigma, dtype=float)
    d = sigma.shape[0] // 2
    J = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    return bool(np.max(np.abs(sigma @ J @ sigma.T - J)) <= tol)


def moebius(sigma: ArrayLike, Z: ArrayLike, tol: float = 1e-9) -> NDArray[np.complex128]:
    """Generalised Moebius action ``(AZ + B)(CZ + D)^{-1}`` of a ``2d x 2d`` block matrix.

    Parameters
    ----------
    sigma : array_like, shape (2d, 2d)
        Block matrix ``[[A, B], [C, D]]``.  Real symplectic matrices act as
        automorphisms of the Siegel upper half space; complex blocks are
        accepted so that the Cayley-type map to ``W`` can be expressed too.
    Z : array_like, shape (d, d)
    tol : float
        Tolerance for the symplectic check on real ``sigma`` and for the
        conditioning of ``CZ + D``.

    Raises
    ------
    SiegelError
        If a real ``sigma`` is not symplectic or ``CZ + D`` is singular.
    """
    sigma = np.asarray(sigma)
    Z = np.atleast_2d(np.asarray(Z, dtype=complex))
    d = Z.shape[0]
    if sigma.shape != (2 * d, 2 * d):
        raise SiegelError(f"sigma must be {2 * d}x{2 * d}, got {sigma.shape}")
    if np.isrealobj(sigma) and not is_symplectic(sigma, tol):
        raise SiegelError("sigma is not symplectic")
    A, B, C, D = sigma[:d, :d], sigma[:d, d:], sigma[d:, :d], sigma[d:, d:]
    denom = C @ Z + D
    if abs(np.linalg.det(denom)) < tol:
        raise SiegelError("CZ + D is singular")
    return ratio(A @ Z + B, denom)


def cayley_sigma(d: int) -> NDArray[np.complex128]:
    """Block matrix whose Moebius action is :func:`w_map`."""
    eye = np.eye(d)
    return np.block([[np.zeros((d, d)), -eye], [eye, 1j * eye]])


@dataclass(frozen=True)
class QForm:
    """Phase-space quadratic form ``Q = [[iI - W, iW], [iW, W]]``."""

    value: NDArray[np.complex128]

    @property
    def imag(self) -> NDArray[np.float64]:
        return self.value.imag

    @property
    def det_im(self) -> float:
        return float(np.linalg.det(self.value.imag))


def q_blocks(W: ArrayLike) -> NDArray[np.complex128]:
    """Assemble ``Q`` from (a stack of) ``W`` without validation."""
    W = np.asarray(W, dtype=complex)
    d = W.shape[-1]
    eye = np.eye(d)
    top = np.concatenate([1j * eye - W, 1j * W], axis=-1)
    bottom = np.concatenate([1j * W, W], axis=-1)
    return np.concatenate([top, bottom], axis=-2)


def q_form(W: ArrayLike, tol: float = 1e-12) -> QForm:
    """Build the phase-space form from ``W`` and verify it is Siegel.

    Raises
    ------
    SiegelError
        If ``Q`` is not symmetric with positive definite imaginary part.
    """
    Q = q_blocks(np.atleast_2d(W))
    diag = siegel_check(Q, tol)
    if not diag.accepted:
        raise SiegelError(f"Q form is not Siegel (min Im eigenvalue {diag.min_imag_eigenvalue:.3e})")
    return QForm(Q)


class BranchTracker:
    """Continuous argument of a complex quantity sampled along a time grid.

    ``advance`` accepts arrays so that many trajectories are tracked at once.
    A step whose argument change exceeds ``max_jump`` is rejected, which the
    caller answers by refining the time step.
    """

    def __init__(self, initial: ArrayLike, max_jump: float = MAX_BRANCH_JUMP, initial_arg: ArrayLike | None = None):
        initial = np.asarray(initial, dtype=complex)
        if initial_arg is None:
            self.theta = np.angle(initial)
        else:
            # a prescribed starting branch must still be an argument of the value
            self.theta = np.broadcast_to(np.asarray(initial_arg, dtype=float), initial.shape).copy()
            if np.max(np.abs(np.exp(1j * self.theta) - initial / np.abs(initial)), initial=0.0) > 1e-9:
                raise BranchError("initial_arg is not an argument of the initial value")
        self.max_jump = max_jump
        self.steps = 0

    def jump(self, value: ArrayLike) -> NDArray[np.float64]:
        """Signed argument change to ``value``, reduced to ``(-pi, pi]``."""
        d = np.angle(np.asarray(value, dtype=complex)) - np.angle(np.exp(1j * self.theta))
        return (d + np.pi) % (2 * np.pi) - np.pi

    def accepts(self, value: ArrayLike) -> bool:
        return bool(np.all(np.abs(self.jump(value)) < self.max_jump))

    def advance(self, value: ArrayLike) -> NDArray[np.float64]:
        step = self.jump(value)
        if np.any(np.abs(step) >= self.max_jump):
            raise BranchError(f"argument jump {np.max(np.abs(step)):.3f} exceeds {self.max_jump:.3f}; refine the time grid")
        self.theta = self.theta + step
        self.steps += 1
        return self.theta


def z_from_variational(traj: "TrajectoryRecord", t: float | None = None, tol: float = 1e-10) -> NDArray[np.complex128]:
    """Anisotropy ``Z = Y X^{-1}`` at time ``t`` (default: final time).

    Raises
    ------
    SiegelError
        If the result fails the Siegel check.
    """
    k = traj.index(traj.t_final if t is None else t)
    Z = ratio(traj.Y[k], traj.X[k])
    diag = siegel_check(Z, tol)
    if not diag.accepted:
        raise SiegelError(f"Z at t={traj.times[k]} is not Siegel: {diag}")
    return Z


def riccati_rhs(Z: NDArray, hess: NDArray, dim: int) -> NDArray:
    """Right-hand side of ``dZ/dt = -(Z Hpp Z + Hqp Z + Z Hpq + Hqq)``."""
    Hqq, Hqp, Hpq, Hpp = hessian_blocks(hess, dim)
    rhs = -(Z @ Hpp @ Z + Hqp @ Z + Z @ Hpq + Hqq)
    return 0.5 * (rhs + np.swapaxes(rhs, -1, -2))


def riccati_integrate(model: HamiltonianModel, traj: "TrajectoryRecord", t: float | None = None,
                      z0: ArrayLike | None = None) -> NDArray[np.complex128]:
    """Integrate the matrix Riccati equation along the trajectory's orbit.

    The orbit ``(q, p)`` is re-integrated jointly with ``Z`` on the
    trajectory's own RK4 grid, so this route shares no state with the
    variational matrices.

    Parameters
    ----------
    model : HamiltonianModel
    traj : TrajectoryRecord
        Supplies the starting point and the time grid.
    t : float, optional
        Sample time to return; defaults to the final time.
    z0 : array_like, optional
        Initial anisotropy, ``iI`` by default.

    Returns
    -------
    ndarray, shape (d, d)
    """
    history = riccati_history(model, traj, z0)
    return history[traj.index(traj.t_final if t is None else t)]


def riccati_history(model: HamiltonianModel, traj: "TrajectoryRecord", z0: ArrayLike | None = None) -> NDArray[np.complex128]:
    """``Z`` from the Riccati equation at every sample of ``traj``."""
    d = model.dim
    Z = 1j * np.eye(d) if z0 is None else np.asarray(z0, dtype=complex)
    y = np.concatenate([traj.q[0], traj.p[0], Z.ravel()]).astype(complex)

    def rhs(y):
        q, p = y[:d].real, y[d:2 * d].real
        _, grad, hess = model.evaluate(q, p)
        Zc = y[2 * d:].reshape(d, d)
        return np.concatenate([grad[d:], -grad[:d], riccati_rhs(Zc, hess, d).ravel()])

    out = np.empty((traj.times.size, d, d), dtype=complex)
    out[0] = Z
    for k in range(1, traj.times.size):
        y = _ode.rk4_step(rhs, y, traj.step)
        if not np.all(np.isfinite(y)):
            raise SiegelError(f"Riccati state became non-finite at t={traj.times[k]}")
        out[k] = y[2 * d:].reshape(d, d)
    return out


def lambda_phase(traj: "TrajectoryRecord", t: float | None = None) -> float:
    """Kernel phase ``lambda = phi + Arg det W / 2 - pi d / 4``.

    ``Arg det W`` is the continuously tracked argument stored on the
    trajectory, so ``lambda(0) = 0`` and the result is continuous in ``t``.
    """
    k = traj.index(traj.t_final if t is None else t)
    return float(traj.phi[k] + 0.5 * traj.arg_det_w[k] - 0.25 * np.pi * traj.dim)


def normalization_residual(traj: "TrajectoryRecord") -> float:
    """Max deviation of ``det(Im Z)^{1/4} |det W|^{1/2}`` from ``det(Im Q)^{1/4}``."""
    worst = 0.0
    for X, Y in zip(traj.X, traj.Y):
        Z = ratio(Y, X)
        W = w_map(Z)
        lhs = np.linalg.det(Z.imag) ** 0.25 * np.sqrt(abs(np.linalg.det(W)))
        rhs = np.linalg.det(q_blocks(W).imag) ** 0.25
        worst = max(worst, abs(lhs - rhs))
    return worst


def write_siegel_csv(traj: "TrajectoryRecord", out: TextIO | None = None) -> str:
    """Dump ``Z``, ``W``, ``Q`` entries, ``det Im Q`` and ``lambda`` per sample as CSV."""
    buf = out if out is not None else io.StringIO()
    d = traj.dim
    idx = [(i, j) for i in range(d) for j in range(d)]
    qidx = [(i, j) for i in range(2 * d) for j in range(2 * d)]
    header = ["t"]
    for name, pairs in (("Z", idx), ("W", idx), ("Q", qidx)):
        for i, j in pairs:
            header += [f"re_{name}{i}{j}", f"im_{name}{i}{j}"]
    header += ["det_im_Q", "lambda"]
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for k, tk in enumerate(traj.times):
        Z = ratio(traj.Y[k], traj.X[k])
        W = w_map(Z)
        Q = q_blocks(W)
        row = [repr(float(tk))]
        for M, pairs in ((Z, idx), (W, idx), (Q, qidx)):
            for i, j in pairs:
                row += [repr(float(M[i, j].real)), repr(float(M[i, j].imag))]
        lam = traj.phi[k] + 0.5 * traj.arg_det_w[k] - 0.25 * np.pi * d
        row += [repr(float(np.linalg.det(Q.imag))), repr(float(lam))]
        writer.writerow(row)
    return buf.getvalue() if out is None else ""
