"""Wave-packet (FBI) transform between configuration and phase space.

Packets are isotropic Gaussians

    G_(q,p)(x) = (pi hbar)^(-d/4) exp((i/hbar) [p.(x-q) + (i/2)|x-q|^2]).

The transform ``Psi(q,p) = (2 pi hbar)^(-d/2) int conj(G_(q,p)) psi dx`` is
evaluated by trapezoidal quadrature.  Fields on grids are one dimensional
(``d = 1``); packet and overlap evaluators work in any dimension.
"""
from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass
from typing import TextIO

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .core import (BoundaryMassError, PhasePoint, PhaseSpaceField, ResolutionError, UniformGrid,
                   WavefunctionField, _check_hbar)

logger = logging.getLogger(__name__)

BOUNDARY_MASS_TOL = 1e-6


def gaussian_packet(x: ArrayLike, q: ArrayLike, p: ArrayLike, hbar: float) -> NDArray[np.complex128]:
    """Evaluate ``G_(q,p)`` at points ``x`` of shape ``(..., d)``."""
    x = np.asarray(x, dtype=float)
    q = np.atleast_1d(np.asarray(q, dtype=float))
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if x.ndim == 0 or x.shape[-1] != q.shape[-1]:
        x = x[..., None]
    d = q.shape[-1]
    dx = x - q
    phase = np.sum(p * dx, axis=-1) + 0.5j * np.sum(dx * dx, axis=-1)
    return (np.pi * hbar) ** (-d / 4) * np.exp(1j * phase / hbar)


@dataclass(frozen=True)
class GaussianPacket:
    """Gaussian wave packet, isotropic or with anisotropy ``Z``.

    Parameters
    ----------
    center : PhasePoint
    hbar : float
    Z : array_like, optional
        Siegel matrix; ``iI`` when omitted.
    action : float
        Global phase ``A`` entering as ``exp(iA/hbar)``.
    phase : float
        Amplitude phase ``phi``.
    """

    center: PhasePoint
    hbar: float
    Z: NDArray[np.complex128] | None = None
    action: float = 0.0
    phase: float = 0.0

    def __post_init__(self):
        _check_hbar(self.hbar)
        if self.Z is not None:
            Z = np.atleast_2d(np.asarray(self.Z, dtype=complex))
            if Z.shape != (self.center.dim, self.center.dim):
                raise ValueError("Z shape does not match the packet dimension")
            object.__setattr__(self, "Z", Z)

    def __call__(self, x: ArrayLike) -> NDArray[np.complex128]:
        d = self.center.dim
        x = np.asarray(x, dtype=float)
        if x.ndim == 0 or x.shape[-1] != d:
            x = x[..., None]
        Z = 1j * np.eye(d) if self.Z is None else self.Z
        dx = x - self.center.q
        quad = np.einsum("...i,ij,...j->...", dx, Z, dx)
        expo = self.action + dx @ self.center.p + 0.5 * quad
        amp = (np.pi * self.hbar) ** (-d / 4) * np.linalg.det(Z.imag) ** 0.25 * np.exp(1j * self.phase)
        return amp * np.exp(1j * expo / self.hbar)


def gaussian_overlap(a: PhasePoint, b: PhasePoint, hbar: float) -> complex:
    """Closed-form ``int conj(G_a) G_b dx``.

    The modulus is ``exp(-(|dq|^2 + |dp|^2) / 4 hbar)`` and the phase is
    ``(p_a + p_b).(q_a - q_b) / 2 hbar``.
    """
    if a.dim != b.dim:
        raise ValueError("overlap of packets with different dimensions")
    hbar = _check_hbar(hbar)
    dq = a.q - b.q
    dp = a.p - b.p
    expo = -(dq @ dq + dp @ dp) / (4 * hbar) + 0.5j * ((a.p + b.p) @ dq) / hbar
    return complex(np.exp(expo))


def overlap_matrix(q1: ArrayLike, p1: ArrayLike, q2: ArrayLike, p2: ArrayLike, hbar: float) -> NDArray[np.complex128]:
    """Broadcasting version of :func:`gaussian_overlap` for ``d = 1`` arrays."""
    q1, p1, q2, p2 = (np.asarray(v, dtype=float) for v in (q1, p1, q2, p2))
    dq, dp = q1 - q2, p1 - p2
    return np.exp(-(dq * dq + dp * dp) / (4 * hbar) + 0.5j * (p1 + p2) * dq / hbar)


def required_x_step(hbar: float, p_max: float) -> float:
    """Largest configuration-space step allowed by the resolution rule."""
    scale = np.sqrt(hbar) if p_max <= 0 else min(np.sqrt(hbar), hbar / p_max)
    return scale / 4.0


def required_phase_step(hbar: float) -> float:
    """Largest phase-space step allowed by the resolution rule."""
    return np.sqrt(hbar) / 4.0


def _check_x_resolution(grid: UniformGrid, hbar: float, p_max: float):
    limit = required_x_step(hbar, p_max)
    if grid.step > limit * (1 + 1e-12):
        raise ResolutionError(f"x step {grid.step:.4g} exceeds {limit:.4g} for hbar={hbar}, |p|<={p_max:.3g}")


def _check_phase_resolution(qgrid: UniformGrid, pgrid: UniformGrid, hbar: float):
    limit = required_phase_step(hbar)
    for name, g in (("q", qgrid), ("p", pgrid)):
        if g.step > limit * (1 + 1e-12):
            raise ResolutionError(f"{name} step {g.step:.4g} exceeds sqrt(hbar)/4 = {limit:.4g}")


def wpt_points(psi: WavefunctionField, q: ArrayLike, p: ArrayLike) -> NDArray[np.complex128]:
    """Transform of ``psi`` at scattered phase-space points (no resolution check)."""
    hbar = psi.hbar
    x = psi.grid.points
    w = psi.grid.weights * psi.values
    q = np.asarray(q, dtype=float)
    p = np.asarray(p, dtype=float)
    qf, pf = np.broadcast_arrays(q, p)
    out = np.empty(qf.shape, dtype=complex)
    flat_q, flat_p, flat_o = qf.ravel(), pf.ravel(), out.reshape(-1)
    pref = (2 * np.pi * hbar) ** -0.5 * (np.pi * hbar) ** -0.25
    for start in range(0, flat_q.size, 256):
        sl = slice(start, start + 256)
        dx = x[None, :] - flat_q[sl, None]
        kern = np.exp((-1j * flat_p[sl, None] * dx - 0.5 * dx * dx) / hbar)
        flat_o[sl] = pref * (kern @ w)
    return out


def wpt(psi: WavefunctionField, qgrid: UniformGrid, pgrid: UniformGrid, check: bool = True) -> PhaseSpaceField:
    """Wave-packet transform of a sampled wave function onto a phase-space grid.

    Parameters
    ----------
    psi : WavefunctionField
    qgrid, pgrid : UniformGrid
        Output grid.
    check : bool
        Enforce the resolution rule ``dx <= min(sqrt(hbar), hbar/p_max)/4``.

    Returns
    -------
    PhaseSpaceField

    Raises
    ------
    ResolutionError
        If the ``x`` grid is too coarse.
    """
    hbar = psi.hbar
    q, p = qgrid.points, pgrid.points
    if check:
        _check_x_resolution(psi.grid, hbar, float(np.max(np.abs(p))))
    x = psi.grid.points
    # separable factorisation: exp(-ip(x-q)/hbar) = exp(ipq/hbar) exp(-ipx/hbar)
    envelope = np.exp(-0.5 * (x[None, :] - q[:, None]) ** 2 / hbar) * (psi.grid.weights * psi.values)[None, :]
    waves = np.exp(-1j * np.outer(p, x) / hbar)
    core = envelope @ waves.T
    pref = (2 * np.pi * hbar) ** -0.5 * (np.pi * hbar) ** -0.25
    values = pref * np.exp(1j * np.outer(q, p) / hbar) * core
    return PhaseSpaceField(qgrid, pgrid, values, hbar)


def boundary_mass_fraction(field: PhaseSpaceField, width: int = 1) -> float:
    """Fraction of ``sum |Psi|^2`` carried by the outer ``width`` rows and columns."""
    dens = np.abs(field.values) ** 2 * field.weights
    total = dens.sum()
    if total == 0:
        return 0.0
    inner = dens[width:-width, width:-width].sum()
    return float((total - inner) / total)


def iwpt(field: PhaseSpaceField, xgrid: UniformGrid, boundary_tol: float | None = BOUNDARY_MASS_TOL) -> WavefunctionField:
    """Inverse transform ``psi(x) = (2 pi hbar)^(-1/2) int G_(q,p)(x) Psi dq dp``.

    Parameters
    ----------
    field : PhaseSpaceField
    xgrid : UniformGrid
        Output grid.
    boundary_tol : float or None
        Maximal fraction of mass allowed on the grid edge; ``None`` skips the
        check.

    Raises
    ------
    BoundaryMassError
        If the truncation domain is too small.
    """
    hbar = field.hbar
    if boundary_tol is not None:
        frac = boundary_mass_fraction(field)
        if frac > boundary_tol:
            raise BoundaryMassError(f"boundary mass fraction {frac:.2e} exceeds {boundary_tol:.2e}")
    q, p = field.qgrid.points, field.pgrid.points
    x = xgrid.points
    # exp(ip(x-q)/hbar) = exp(-ipq/hbar) exp(ipx/hbar)
    twisted = field.values * np.exp(-1j * np.outer(q, p) / hbar) * field.weights
    inner = twisted @ np.exp(1j * np.outer(p, x) / hbar)
    envelope = np.exp(-0.5 * (x[None, :] - q[:, None]) ** 2 / hbar)
    pref = (2 * np.pi * hbar) ** -0.5 * (np.pi * hbar) ** -0.25
    return WavefunctionField(xgrid, pref * np.sum(envelope * inner, axis=0), hbar)


def fock_bargmann_residual(field: PhaseSpaceField) -> float:
    """Relative size of ``(hbar d/dq - i hbar d/dp - i p) Psi`` on interior points.

    Central differences are used, so a genuine phase-space wave function
    gives a residual of order ``spacing**2``.  Returns 0 for a zero field.
    """
    v = field.values
    hbar = field.hbar
    hq, hp = field.qgrid.step, field.pgrid.step
    inner = v[1:-1, 1:-1]
    dq = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * hq)
    dp = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * hp)
    p = field.pgrid.points[1:-1][None, :]
    res = hbar * dq - 1j * hbar * dp - 1j * p * inner
    norm = np.sqrt(np.sum(np.abs(inner) ** 2))
    if norm == 0:
        return 0.0
    return float(np.sqrt(np.sum(np.abs(res) ** 2)) / norm)


def husimi_norm(field: PhaseSpaceField, boundary_tol: float | None = BOUNDARY_MASS_TOL) -> float:
    """``int |Psi|^2 dq dp`` by trapezoidal quadrature.

    A warning is issued when more than ``boundary_tol`` of the mass sits on
    the grid edge.
    """
    if boundary_tol is not None:
        frac = boundary_mass_fraction(field)
        if frac > boundary_tol:
            warnings.warn(f"boundary mass fraction {frac:.2e} exceeds {boundary_tol:.2e}", RuntimeWarning, stacklevel=2)
    return float(np.sum(np.abs(field.values) ** 2 * field.weights))


def write_field_csv(field: PhaseSpaceField | WavefunctionField, out: TextIO | None = None) -> str:
    """Write a field as CSV: commented header with axis specs and hbar, then index/value rows."""
    buf = out if out is not None else io.StringIO()
    if isinstance(field, PhaseSpaceField):
        axes = [("q", field.qgrid), ("p", field.pgrid)]
    else:
        axes = [("x", field.grid)]
    buf.write(f"# hbar={field.hbar!r}\n")
    for name, g in axes:
        buf.write(f"# axis {name} start={g.start!r} step={g.step!r} count={g.count}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([f"i_{name}" for name, _ in axes] + ["re", "im"])
    for idx in np.ndindex(field.values.shape):
        v = field.values[idx]
        writer.writerow([*idx, repr(float(v.real)), repr(float(v.imag))])
    return buf.getvalue() if out is None else ""


def read_field_csv(source: TextIO | str) -> PhaseSpaceField | WavefunctionField:
    """Read a field written by :func:`write_field_csv`."""
    text = source if isinstance(source, str) else source.read()
    lines = text.splitlines()
    hbar = None
    axes: list[UniformGrid] = []
    body = []
    for line in lines:
        if line.startswith("# hbar="):
            hbar = float(line.split("=", 1)[1])
        elif line.startswith("# axis"):
            parts = dict(kv.split("=") for kv in line.split()[3:])
            axes.append(UniformGrid(float(parts["start"]), float(parts["step"]), int(parts["count"])))
        elif line and not line.startswith("#"):
            body.append(line)
    if hbar is None or not axes:
        raise ValueError("field CSV lacks its header")
    rows = list(csv.reader(body))[1:]
    shape = tuple(g.count for g in axes)
    values = np.zeros(shape, dtype=complex)
    n = len(axes)
    for row in rows:
        idx = tuple(int(v) for v in row[:n])
        values[idx] = float(row[n]) + 1j * float(row[n + 1])
    if n == 2:
        return PhaseSpaceField(axes[0], axes[1], values, hbar)
    return WavefunctionField(axes[0], values, hbar)
