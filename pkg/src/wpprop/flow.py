"""Hamiltonian orbits with variational matrices, action and amplitude phase.

The joint state integrated along each orbit is

* position and momentum ``(q, p)``,
* variational matrices ``X = dq_t/dq + i dq_t/dp`` and ``Y = dp_t/dq + i dp_t/dp``
  started from ``X = I``, ``Y = iI``,
* the action ``A = int (p . dq/dt - H) dt``,
* the complex amplitude exponent ``L = -1/2 int tr(H_pp Z) dt`` with
  ``Z = Y X^{-1}``; its imaginary part is the amplitude phase ``phi``.

``Arg det W`` is tracked continuously during the run so that the kernel
phase can be read off without any principal-value ambiguity.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
from numpy.typing import ArrayLike, NDArray

from . import _ode
from .core import DimensionError, HamiltonianModel, PhasePoint, hessian_blocks
from .siegel import BranchError, BranchTracker, det_w_from_variational, ratio

logger = logging.getLogger(__name__)

DET_FLOOR = 1e-12
DEFAULT_STEP = 1e-3
MAX_REFINE_DEPTH = 8


class IntegrationError(RuntimeError):
    """The orbit integration produced an ill-conditioned or non-finite state."""


class _Layout:
    """Offsets of the packed complex state ``[q, p, X, Y, A, L]``."""

    def __init__(self, d: int):
        self.d = d
        self.size = 2 * d + 2 * d * d + 2

    def pack(self, q, p, X, Y, A, L):
        n = q.shape[0]
        return np.concatenate([q, p, X.reshape(n, -1), Y.reshape(n, -1), A[:, None], L[:, None]], axis=1).astype(complex)

    def unpack(self, y):
        d = self.d
        n = y.shape[0]
        q = y[:, :d].real
        p = y[:, d:2 * d].real
        X = y[:, 2 * d:2 * d + d * d].reshape(n, d, d)
        Y = y[:, 2 * d + d * d:2 * d + 2 * d * d].reshape(n, d, d)
        return q, p, X, Y, y[:, -2].real, y[:, -1]


def _det(M):
    return M[:, 0, 0] if M.shape[-1] == 1 else np.linalg.det(M)


def _make_rhs(model: HamiltonianModel, layout: _Layout):
    d = layout.d

    def rhs(y):
        q, p, X, Y, _, _ = layout.unpack(y)
        H, grad, hess = model.evaluate(q, p)
        Hqq, Hqp, Hpq, Hpp = hessian_blocks(hess, d)
        detx = np.abs(_det(X))
        if np.any(detx < DET_FLOOR):
            raise IntegrationError(f"det X fell below {DET_FLOOR:g} (min {detx.min():.3e})")
        Z = ratio(Y, X)
        Hp = grad[:, d:]
        dX = Hpq @ X + Hpp @ Y
        dY = -(Hqq @ X) - Hqp @ Y
        dA = np.sum(p * Hp, axis=-1) - H
        dL = -0.5 * np.trace(Hpp @ Z, axis1=-2, axis2=-1)
        return layout.pack(Hp, -grad[:, :d], dX, dY, dA, dL)

    return rhs


def _initial_state(layout: _Layout, q0: NDArray, p0: NDArray) -> NDArray:
    n, d = q0.shape
    eye = np.broadcast_to(np.eye(d), (n, d, d))
    return layout.pack(q0, p0, eye, 1j * eye, np.zeros(n), np.zeros(n, dtype=complex))


def _det_w(layout: _Layout, y: NDArray) -> NDArray:
    _, _, X, Y, _, _ = layout.unpack(y)
    return det_w_from_variational(X, Y)


def _tracked_step(rhs, layout: _Layout, tracker: BranchTracker, y: NDArray, h: float, depth: int = 0) -> NDArray:
    """Advance one step; split it when the tracked argument jumps too far."""
    y_new = _ode.rk4_step(rhs, y, h)
    if not np.all(np.isfinite(y_new)):
        raise IntegrationError("non-finite state during orbit integration")
    dw = _det_w(layout, y_new)
    if tracker.accepts(dw):
        tracker.advance(dw)
        return y_new
    if depth >= MAX_REFINE_DEPTH:
        raise BranchError("branch tracking failed after local refinement")
    logger.debug("refining step h=%g for branch tracking (depth %d)", h, depth + 1)
    y_mid = _tracked_step(rhs, layout, tracker, y, 0.5 * h, depth + 1)
    return _tracked_step(rhs, layout, tracker, y_mid, 0.5 * h, depth + 1)


def _run(model: HamiltonianModel, q0: NDArray, p0: NDArray, times: Sequence[float], step: float,
         record: bool) -> tuple[list[NDArray], list[NDArray], list[float]]:
    """Integrate a batch through ``times`` (increasing in magnitude, same sign).

    Returns the packed states and tracked ``Arg det W`` at every output time
    (``record=False``) or at every RK4 sample (``record=True``), plus the
    sample times.
    """
    layout = _Layout(model.dim)
    rhs = _make_rhs(model, layout)
    y = _initial_state(layout, q0, p0)
    # Arg det W(0) = Arg (i/2)^d, taken as d pi / 2
    tracker = BranchTracker(_det_w(layout, y), initial_arg=0.5 * np.pi * model.dim)
    states, args, stamps = [y], [tracker.theta.copy()], [0.0]
    t_prev = 0.0
    for t_out in times:
        n, h = _ode.partition(t_out - t_prev, step)
        for k in range(n):
            y = _tracked_step(rhs, layout, tracker, y, h)
            if record:
                states.append(y)
                args.append(tracker.theta.copy())
                stamps.append(t_prev + (k + 1) * h)
        if not record:
            states.append(y)
            args.append(tracker.theta.copy())
            stamps.append(t_out)
        t_prev = t_out
    if record and stamps:
        stamps[-1] = t_prev
    return states, args, stamps


def _richardson(model: HamiltonianModel, q0: NDArray, p0: NDArray, t_final: float, step: float,
                coarse_final: NDArray) -> float:
    """Richardson estimate of the RK4 error from a halved-step rerun."""
    if t_final == 0:
        return 0.0
    n, h = _ode.partition(t_final, step)
    fine, _, _ = _run(model, q0, p0, [t_final], abs(h) / 2, record=False)
    return float(np.max(np.abs(fine[-1] - coarse_final)) / 15.0)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Time-sampled orbit with variational data.

    Attributes
    ----------
    model_name : str
    times : ndarray, shape (K+1,)
        Uniform samples from 0 to ``t_final``.
    step : float
        RK4 step (signed).
    q, p : ndarray, shape (K+1, d)
    X, Y : ndarray, shape (K+1, d, d), complex
    action : ndarray, shape (K+1,)
    log_amplitude : ndarray, shape (K+1,), complex
        ``-1/2 int tr(H_pp Z)``; ``phi`` is its imaginary part.
    arg_det_w : ndarray, shape (K+1,)
        Continuously tracked argument of ``det W``, starting at ``pi d / 2``.
    richardson_error : float
        Max-norm state difference against a half-step run, divided by 15.
    """

    model_name: str
    times: NDArray[np.float64]
    step: float
    q: NDArray[np.float64]
    p: NDArray[np.float64]
    X: NDArray[np.complex128]
    Y: NDArray[np.complex128]
    action: NDArray[np.float64]
    log_amplitude: NDArray[np.complex128]
    arg_det_w: NDArray[np.float64]
    richardson_error: float

    @property
    def dim(self) -> int:
        return self.q.shape[1]

    @property
    def t_final(self) -> float:
        return float(self.times[-1])

    @property
    def phi(self) -> NDArray[np.float64]:
        return self.log_amplitude.imag

    @property
    def start(self) -> PhasePoint:
        return PhasePoint(self.q[0], self.p[0])

    @property
    def Z(self) -> NDArray[np.complex128]:
        """``Y X^{-1}`` at every sample."""
        return ratio(self.Y, self.X)

    def index(self, t: float) -> int:
        """Sample index of time ``t``; ``t`` must lie on the grid."""
        if self.times.size == 1:
            k = 0
        else:
            k = int(round(t / self.step))
        if not 0 <= k < self.times.size or abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not a sample of this trajectory (range [0, {self.t_final}], step {self.step})")
        return k

    def point(self, t: float) -> PhasePoint:
        k = self.index(t)
        return PhasePoint(self.q[k], self.p[k])


def _check_start(model: HamiltonianModel, start: PhasePoint):
    if start.dim != model.dim:
        raise DimensionError(f"start has dimension {start.dim}, model has {model.dim}")
    return start.q[None, :], start.p[None, :]


def integrate_orbit(model: HamiltonianModel, start: PhasePoint, t_final: float,
                    step: float = DEFAULT_STEP) -> TrajectoryRecord:
    """Integrate one orbit and its variational data with fixed-step RK4.

    Parameters
    ----------
    model : HamiltonianModel
    start : PhasePoint
    t_final : float
        Final time, non-negative.  The step is shrunk so that it divides
        ``t_final`` exactly.
    step : float
        Largest allowed step.

    Returns
    -------
    TrajectoryRecord

    Raises
    ------
    IntegrationError
        If ``det X`` drops below the conditioning floor or the state
        becomes non-finite.
    """
    if t_final < 0:
        raise ValueError("t_final must be non-negative; use flow_map for backward flow")
    if not step > 0:
        raise ValueError("step must be positive")
    q0, p0 = _check_start(model, start)
    layout = _Layout(model.dim)
    states, args, stamps = _run(model, q0, p0, [t_final] if t_final > 0 else [], step, record=True)
    _, h = _ode.partition(t_final, step)
    ys = np.stack([s[0] for s in states])
    q, p, X, Y, A, L = layout.unpack(ys)
    err = _richardson(model, q0, p0, t_final, step, states[-1])
    if err > 1e-8:
        logger.warning("Richardson error estimate %.2e for %s orbit; consider a smaller step", err, model.name)
    times = np.array(stamps)
    return TrajectoryRecord(model.name, times, h if h else step, q, p, X, Y, A, L,
                            np.array([a[0] for a in args]), err)


def flow_map(model: HamiltonianModel, start: PhasePoint, t: float, step: float = DEFAULT_STEP) -> PhasePoint:
    """End point of the Hamiltonian flow after time ``t`` (either sign)."""
    q0, p0 = _check_start(model, start)
    if t == 0:
        return start
    layout = _Layout(model.dim)
    rhs = _make_rhs(model, layout)
    y = _initial_state(layout, q0, p0)
    n, h = _ode.partition(t, step)
    for _ in range(n):
        y = _ode.rk4_step(rhs, y, h)
    q, p, *_ = layout.unpack(y)
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(p))):
        raise IntegrationError("non-finite state in flow_map")
    return PhasePoint(q[0], p[0])


def monodromy_blocks(traj: TrajectoryRecord, t: float | None = None) -> NDArray[np.float64]:
    """Real Jacobian ``[[dq_t/dq, dq_t/dp], [dp_t/dq, dp_t/dp]]`` at time ``t``."""
    k = traj.index(traj.t_final if t is None else t)
    X, Y = traj.X[k], traj.Y[k]
    return np.block([[X.real, X.imag], [Y.real, Y.imag]])


def symplectic_residual(M: ArrayLike) -> float:
    """Max entry of ``M J M^T - J`` for a ``2d x 2d`` matrix."""
    M = np.asarray(M, dtype=float)
    d = M.shape[0] // 2
    J = np.block([[np.zeros((d, d)), np.eye(d)], [-np.eye(d), np.zeros((d, d))]])
    return float(np.max(np.abs(M @ J @ M.T - J)))


@dataclass(frozen=True)
class OrbitBatch:
    """Final states of many orbits at one time, as produced by :func:`integrate_batch`."""

    t: float
    q0: NDArray[np.float64]
    p0: NDArray[np.float64]
    q: NDArray[np.float64]
    p: NDArray[np.float64]
    X: NDArray[np.complex128]
    Y: NDArray[np.complex128]
    action: NDArray[np.float64]
    log_amplitude: NDArray[np.complex128]
    arg_det_w: NDArray[np.float64]

    @property
    def phi(self) -> NDArray[np.float64]:
        return self.log_amplitude.imag

    @property
    def Z(self) -> NDArray[np.complex128]:
        return ratio(self.Y, self.X)


def integrate_batch(model: HamiltonianModel, q0: ArrayLike, p0: ArrayLike, times: Sequence[float],
                    step: float = DEFAULT_STEP, richardson: bool = True) -> tuple[list[OrbitBatch], float]:
    """Integrate many orbits at once and snapshot them at the requested times.

    Parameters
    ----------
    model : HamiltonianModel
    q0, p0 : array_like, shape (n, d)
        Starting points.
    times : sequence of float
        Output times, all of one sign and sorted by magnitude.
    step : float
        Largest RK4 step.
    richardson : bool
        Also run at half step and report the Richardson error estimate.

    Returns
    -------
    snapshots : list of OrbitBatch
        One per requested time.
    error : float
        Richardson error estimate at the last time (0 when disabled).
    """
    d = model.dim
    q0 = np.asarray(q0, dtype=float).reshape(-1, d)
    p0 = np.asarray(p0, dtype=float).reshape(-1, d)
    times = [float(t) for t in times]
    if any(abs(b) < abs(a) for a, b in zip(times, times[1:])) or (times and min(times) < 0 < max(times)):
        raise ValueError("times must share one sign and be sorted by magnitude")
    layout = _Layout(d)
    states, args, _ = _run(model, q0, p0, times, step, record=False)
    out = []
    for t, y, a in zip(times, states[1:], args[1:]):
        q, p, X, Y, A, L = layout.unpack(y)
        out.append(OrbitBatch(t, q0, p0, q, p, X, Y, A, L, a))
    err = 0.0
    if richardson and times and times[-1] != 0:
        fine, _, _ = _run(model, q0, p0, times, abs(_ode.partition(times[-1], step)[1]) / 2 or step, record=False)
        err = max(float(np.max(np.abs(f - c))) for f, c in zip(fine[1:], states[1:])) / 15.0
    return out, err


def write_trajectory_csv(traj: TrajectoryRecord, out: TextIO | None = None) -> str:
    """Dump a trajectory as CSV with columns t, q, p, A, X and Y entries, phi."""
    buf = out if out is not None else io.StringIO()
    d = traj.dim
    header = ["t"] + [f"q{i}" for i in range(d)] + [f"p{i}" for i in range(d)] + ["A"]
    for name in ("X", "Y"):
        for i in range(d):
            for j in range(d):
                header += [f"re_{name}{i}{j}", f"im_{name}{i}{j}"]
    header.append("phi")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for k, t in enumerate(traj.times):
        row = [t, *traj.q[k], *traj.p[k], traj.action[k]]
        for M in (traj.X[k], traj.Y[k]):
            for v in M.ravel():
                row += [v.real, v.imag]
        row.append(traj.phi[k])
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue() if out is None else ""
