"""Benchmark registry: closed-form comparisons and property suites.

A :class:`BenchmarkCase` propagates an initial phase-space state on a
source lattice and compares the result on a target grid with a closed-form
evaluator.  Property suites check the Siegel closed forms, the Riccati
cross-route, the van Vleck reduction and the WKBM asymptotics.  Every run
returns an :class:`ErrorReport` whose named checks gate the CLI exit code.
"""
from __future__ import annotations

import csv
import io
import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import exact, wkbm
from .config import GridSpec, InitialSpec, RunPlan, Tolerances
from .core import (BoundaryMassError, HamiltonianModel, PhasePoint, PhaseSpaceField, UniformGrid,
                   WavefunctionField, cross_term_model, get_model)
from .flow import integrate_orbit
from .propagator import (KernelCache, config_kernel, config_lattice, correction_factor, kernel_matrix,
                         propagate, van_vleck_reduce)
from .siegel import lambda_phase, q_form, riccati_history, w_from_variational
from .transform import (_check_phase_resolution, boundary_mass_fraction, fock_bargmann_residual, husimi_norm,
                        required_x_step, wpt_points)

logger = logging.getLogger(__name__)

Evaluator = Callable[[NDArray, NDArray, float], NDArray]

BENCH_STEP = 5e-3


class ToleranceBreach(RuntimeError):
    """A benchmark metric exceeded its tolerance."""

    def __init__(self, report: "ErrorReport"):
        names = ", ".join(c.name for c in report.failures)
        super().__init__(f"{report.name}: tolerance breached ({names})")
        self.report = report


@dataclass(frozen=True)
class Check:
    """One gated metric; ``bound`` is an upper limit or a ``(lo, hi)`` window."""

    name: str
    value: float
    bound: float | tuple[float, float]

    @property
    def passed(self) -> bool:
        if not np.isfinite(self.value):
            return False
        if isinstance(self.bound, tuple):
            return self.bound[0] <= self.value <= self.bound[1]
        return self.value <= self.bound

    def describe(self) -> str:
        bound = (f"[{self.bound[0]:.3g}, {self.bound[1]:.3g}]" if isinstance(self.bound, tuple)
                 else f"<= {self.bound:.3g}")
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name:<44s} {self.value:.4e}  {bound}"


@dataclass(frozen=True)
class TimeMetrics:
    """Propagation metrics at one time."""

    t: float
    rel_l2: float
    max_abs: float
    norm: float
    norm_drift: float
    fb_residual: float
    fb_ratio: float
    runtime: float


@dataclass
class ErrorReport:
    """Outcome of a benchmark case or property suite."""

    name: str
    rows: list[TimeMetrics] = field(default_factory=list)
    checks: list[Check] = field(default_factory=list)
    setup_time: float = 0.0
    runtime: float = 0.0

    @property
    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    @property
    def passed(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        lines = [f"== {self.name}  ({self.runtime:.1f} s, setup {self.setup_time:.1f} s)"]
        if self.rows:
            lines.append(f"{'t':>6s} {'rel_l2':>11s} {'max_abs':>11s} {'norm':>11s} {'norm_drift':>11s} "
                         f"{'fb_resid':>11s} {'fb_ratio':>9s} {'sec':>7s}")
            for r in self.rows:
                lines.append(f"{r.t:6.3f} {r.rel_l2:11.3e} {r.max_abs:11.3e} {r.norm:11.8f} {r.norm_drift:11.3e} "
                             f"{r.fb_residual:11.3e} {r.fb_ratio:9.3f} {r.runtime:7.2f}")
        lines.extend(c.describe() for c in self.checks)
        return "\n".join(lines)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["case", "t", "rel_l2", "max_abs", "norm", "norm_drift", "fb_residual", "fb_ratio"])
        for r in self.rows:
            w.writerow([self.name, repr(r.t), f"{r.rel_l2:.10e}", f"{r.max_abs:.10e}", f"{r.norm:.12f}",
                        f"{r.norm_drift:.10e}", f"{r.fb_residual:.10e}", f"{r.fb_ratio:.6f}"])
        w.writerow(["case", "check", "value", "bound", "passed"])
        for c in self.checks:
            w.writerow([self.name, c.name, f"{c.value:.10e}", c.bound, int(c.passed)])
        return buf.getvalue()


@dataclass(frozen=True)
class BenchmarkCase:
    """Propagation benchmark.

    Parameters
    ----------
    name : str
    model : HamiltonianModel
    hbar : float
    times : tuple of float
    source, target : GridSpec
        Source lattice and comparison grid.
    initial : Evaluator
        ``Psi_0(q, p)``; sampled on both grids.
    exact : Evaluator or None
        ``Psi(q, p, t)``; ``None`` skips the error metrics.
    tolerances : Tolerances
    step : float
        RK4 step of the source orbits.
    """

    name: str
    model: HamiltonianModel
    hbar: float
    times: tuple[float, ...]
    source: GridSpec
    target: GridSpec
    initial: Callable[[NDArray, NDArray], NDArray]
    exact: Evaluator | None
    tolerances: Tolerances
    step: float = BENCH_STEP

    def __post_init__(self):
        for name in ("l2", "max_abs", "norm_drift", "fb_factor", "boundary"):
            v = getattr(self.tolerances, name)
            if v is not None and not v > 0:
                raise ValueError(f"tolerance {name} must be positive")


def _field(spec: GridSpec, values_fn, hbar) -> PhaseSpaceField:
    qg, pg = spec.grids()
    Q, P = np.meshgrid(qg.points, pg.points, indexing="ij")
    return PhaseSpaceField(qg, pg, values_fn(Q, P), hbar)


def run_benchmark(case: BenchmarkCase, fail_fast: bool = True) -> ErrorReport:
    """Propagate, compare with the closed form and gate each metric.

    Raises
    ------
    ToleranceBreach
        At the first time whose metrics breach a tolerance (``fail_fast``).
    ResolutionError, BoundaryMassError
        If the source lattice violates the spacing rule or truncates ``Psi_0``.
    """
    tol = case.tolerances
    report = ErrorReport(case.name)
    t_start = time.perf_counter()
    Psi0 = _field(case.source, case.initial, case.hbar)
    _check_phase_resolution(Psi0.qgrid, Psi0.pgrid, case.hbar)
    frac = boundary_mass_fraction(Psi0)
    if tol.boundary is not None and frac > tol.boundary:
        raise BoundaryMassError(f"{case.name}: initial boundary mass fraction {frac:.2e} > {tol.boundary:.2e}")
    cache = KernelCache.for_grid(case.model, Psi0.qgrid, Psi0.pgrid, case.step)
    cache.populate(case.times)
    norm0 = husimi_norm(Psi0, boundary_tol=None)
    start_on_target = _field(case.target, case.initial, case.hbar)
    fb0 = fock_bargmann_residual(start_on_target)
    report.setup_time = time.perf_counter() - t_start
    qg, pg = case.target.grids()
    Q, P = np.meshgrid(qg.points, pg.points, indexing="ij")
    for t in case.times:
        t0 = time.perf_counter()
        out = propagate(Psi0, case.model, t, qg, pg, cache=cache, boundary_tol=None, check=False)
        elapsed = time.perf_counter() - t0
        if case.exact is not None:
            ref = case.exact(Q, P, t)
            diff = out.values - ref
            rel = float(np.sqrt(np.sum(out.weights * abs(diff) ** 2) / np.sum(out.weights * abs(ref) ** 2)))
            mx = float(np.max(np.abs(diff)))
        else:
            rel = mx = float("nan")
        norm = husimi_norm(out, boundary_tol=None)
        fb = fock_bargmann_residual(out)
        row = TimeMetrics(float(t), rel, mx, norm, abs(norm - norm0), fb, fb / fb0, elapsed)
        report.rows.append(row)
        tag = f"t={t:g}"
        if case.exact is not None and tol.l2 is not None:
            report.checks.append(Check(f"relative L2 error {tag}", rel, tol.l2))
        if case.exact is not None and tol.max_abs is not None:
            report.checks.append(Check(f"max pointwise error {tag}", mx, tol.max_abs))
        if tol.norm_drift is not None:
            report.checks.append(Check(f"Husimi norm drift {tag}", row.norm_drift, tol.norm_drift))
        if tol.fb_factor is not None and t != 0:
            report.checks.append(Check(f"Fock-Bargmann residual ratio {tag}", row.fb_ratio, tol.fb_factor))
        if fail_fast and not report.passed:
            report.runtime = time.perf_counter() - t_start
            raise ToleranceBreach(report)
    report.runtime = time.perf_counter() - t_start
    return report


# ---------------------------------------------------------------- cases


def _centered_spec(hbar: float, nq: int, np_: int, qc: float = 0.0, pc: float = 0.0) -> GridSpec:
    h = np.sqrt(hbar) / 4
    hq, hp = 0.5 * (nq - 1) * h, 0.5 * (np_ - 1) * h
    return GridSpec(qc - hq, qc + hq, nq, pc - hp, pc + hp, np_)


def _field_strength(model_kind: str, params: dict) -> float:
    if model_kind == "free":
        return 0.0
    if model_kind == "linear":
        return float(params.get("field_strength", 1.0))
    raise ValueError(f"no closed form for model kind {model_kind!r}")


def _initial_evaluator(spec: InitialSpec, hbar: float):
    if spec.state == "chirped_gaussian":
        return lambda q, p: exact.initial_phase_space(q, p, hbar)
    if spec.state == "packet":
        return lambda q, p: exact.packet_exact(q, p, 0.0, hbar, spec.q, spec.p)
    state = wkbm.polynomial_state(spec.phase, spec.amplitude_center, spec.amplitude_width, spec.order)
    return lambda q, p: wkbm.wkbm_phase_space(state, q, p, hbar).value


def case_from_plan(plan: RunPlan, name: str = "config") -> BenchmarkCase:
    """Benchmark case described by a configuration file."""
    hbar = plan.hbar
    ex = None
    if plan.exact in ("free", "linear"):
        if plan.initial.state != "chirped_gaussian":
            raise ValueError("exact solutions 'free'/'linear' need initial.state = chirped_gaussian")
        F = _field_strength(plan.model_kind, plan.model_params)
        ex = lambda q, p, t: exact.phase_space_exact(q, p, t, hbar, F)  # noqa: E731
    elif plan.exact == "packet":
        if plan.initial.state != "packet":
            raise ValueError("exact solution 'packet' needs initial.state = packet")
        F = _field_strength(plan.model_kind, plan.model_params)
        q0, p0 = plan.initial.q, plan.initial.p
        ex = lambda q, p, t: exact.packet_exact(q, p, t, hbar, q0, p0, F)  # noqa: E731
    return BenchmarkCase(name, plan.model, hbar, plan.times, plan.source, plan.target,
                         _initial_evaluator(plan.initial, hbar), ex, plan.tolerances, plan.dt)


def chirped_case(kind: str, hbar: float = 0.05, times=(0.25, 0.5, 1.0), source_n: int = 96,
                 target_n: int = 64, l2_tol: float = 1e-4) -> BenchmarkCase:
    """The chirped-Gaussian benchmark for free motion or the unit constant field."""
    F = {"free": 0.0, "linear": 1.0}[kind]
    return BenchmarkCase(
        kind, get_model(kind), hbar, tuple(times),
        _centered_spec(hbar, source_n, source_n), _centered_spec(hbar, target_n, target_n),
        lambda q, p: exact.initial_phase_space(q, p, hbar),
        lambda q, p, t: exact.phase_space_exact(q, p, t, hbar, F),
        Tolerances(l2=l2_tol, fb_factor=4.0, boundary=1e-4))


def packet_case(kind: str, hbar: float = 0.05, times=(0.25, 0.5, 0.75, 1.0),
                center=(0.25, 0.5)) -> BenchmarkCase:
    """Unitarity benchmark: one packet on a quadratic model, target grid holding all mass."""
    model = get_model(kind)
    q0, p0 = center
    # target window: orbit of the centre padded by six Husimi widths at the largest time
    tmax = max(times)
    traj = integrate_orbit(model, PhasePoint([q0], [p0]), tmax, 1e-2)
    orbit, momenta = traj.q[:, 0], traj.p[:, 0]
    pad_q = 6 * np.sqrt(hbar * (1 + 4 * tmax**2) / 2 + hbar / 2)
    pad_p = 6 * np.sqrt(hbar)
    h = np.sqrt(hbar) / 4
    qlo, qhi = min(orbit) - pad_q, max(orbit) + pad_q
    plo, phi = min(momenta) - pad_p, max(momenta) + pad_p
    target = GridSpec(qlo, qhi, int(np.ceil((qhi - qlo) / h)) + 1, plo, phi, int(np.ceil((phi - plo) / h)) + 1)
    half = 1.5
    n = int(np.ceil(2 * half / h)) + 1
    source = GridSpec(q0 - half, q0 + half, n, p0 - half, p0 + half, n)
    ex = None
    if kind in ("free", "linear"):
        F = _field_strength(kind, {})
        ex = lambda q, p, t: exact.packet_exact(q, p, t, hbar, q0, p0, F)  # noqa: E731
    return BenchmarkCase(
        f"unitarity-{kind}", model, hbar, tuple(times), source, target,
        lambda q, p: exact.packet_exact(q, p, 0.0, hbar, q0, p0), ex,
        Tolerances(l2=1e-4, norm_drift=1e-4, fb_factor=4.0, boundary=1e-8))


def reproducing_case(hbar: float = 0.05) -> BenchmarkCase:
    """Kernel at ``t = 0`` applied to the transformed chirped Gaussian."""
    case = chirped_case("free", hbar, times=(0.0,), l2_tol=1e-5)
    return replace(case, name="reproducing")


# ---------------------------------------------------------------- property suites


def siegel_suite(tol: float = 1e-8, t_final: float = 2.0, step: float = 1e-3) -> ErrorReport:
    """ODE pipeline against the closed forms of ``Z``, ``W``, ``det Im Q`` and ``lambda``."""
    report = ErrorReport("siegel")
    t0 = time.perf_counter()
    for kind in ("free", "linear"):
        traj = integrate_orbit(get_model(kind), PhasePoint([0.3], [0.7]), t_final, step)
        ts = traj.times
        Z = traj.Z[:, 0, 0]
        W = w_from_variational(traj.X, traj.Y)[:, 0, 0]
        detq = np.array([q_form(w.reshape(1, 1)).det_im for w in W])
        lam = np.array([lambda_phase(traj, t) for t in ts])
        report.checks += [
            Check(f"{kind}: max |Z - 1/(2t-i)|", float(np.max(abs(Z - exact.anisotropy(ts)))), tol),
            Check(f"{kind}: max |W - W(t)|", float(np.max(abs(W - exact.w_of_t(ts)))), tol),
            Check(f"{kind}: max |det Im Q - 1/4(1+t^2)|", float(np.max(abs(detq - exact.det_q_imag(ts)))), tol),
            Check(f"{kind}: max |lambda - lambda(t)|", float(np.max(abs(lam - exact.kernel_phase(ts)))), tol),
        ]
    report.runtime = time.perf_counter() - t0
    return report


def riccati_suite(tol: float = 1e-7, t_final: float = 1.0, step: float = 1e-3) -> ErrorReport:
    """Riccati integration against ``Y X^-1`` on the quadratic and quartic built-ins."""
    report = ErrorReport("riccati")
    t0 = time.perf_counter()
    for kind in ("free", "harmonic", "linear", "quartic"):
        model = get_model(kind)
        traj = integrate_orbit(model, PhasePoint([0.4], [-0.6]), t_final, step)
        diff = np.max(np.abs(riccati_history(model, traj) - traj.Z))
        report.checks.append(Check(f"{kind}: max |Z_riccati - Y X^-1|", float(diff), tol))
    report.runtime = time.perf_counter() - t0
    return report


def _slope(h, err) -> float:
    return float(np.polyfit(np.log(h), np.log(err), 1)[0])


def van_vleck_suite(hbar: float = 0.05, t: float = 0.2, rel_tol: float = 0.02) -> ErrorReport:
    """Phase-space quadrature of the configuration kernel against the van Vleck form."""
    report = ErrorReport("vanvleck")
    t0 = time.perf_counter()
    x = np.array([0.0, 0.3, -0.2, 0.5])
    y = np.array([0.1, 0.0, 0.2, -0.3])
    model = get_model("free")
    qg, pg = config_lattice(x, y, t, hbar)
    cache = KernelCache.for_grid(model, qg, pg, BENCH_STEP)
    quad = config_kernel(x, y, t, cache, hbar)
    vv = np.array([van_vleck_reduce(a, b, t, model, hbar, BENCH_STEP).value for a, b in zip(x, y)])
    report.checks.append(Check(f"free: max |K_quad - K_vV|/|K_vV| at t={t:g}", float(np.max(abs(quad - vv) / abs(vv))), rel_tol))
    # a_gamma = 1 identically for p^2 + V(q); the cross term makes it grow like t
    ts = np.array([0.025, 0.05, 0.1, 0.2])
    coupled = cross_term_model(0.5)
    dev = np.array([abs(correction_factor(integrate_orbit(coupled, PhasePoint([0.0], [1.0]), s, 1e-3)) - 1) for s in ts])
    report.checks.append(Check("a_gamma - 1 slope in t (p^2 + c q p)", _slope(ts, dev), (0.85, 1.15)))
    std = max(abs(correction_factor(integrate_orbit(get_model(k), PhasePoint([0.3], [0.5]), 0.5, 1e-3)) - 1)
              for k in ("free", "linear", "harmonic", "quartic"))
    report.checks.append(Check("max |a_gamma - 1| on p^2 + V(q) built-ins", float(std), 1e-10))
    report.runtime = time.perf_counter() - t0
    return report


HBAR_SWEEP = (0.2, 0.1, 0.05, 0.025)


def _sparse_propagation(model, hbar, times, q, p, half: float = 4.5, cutoff: float = 1e-13):
    """Quadrature propagation of the chirped Gaussian to scattered targets.

    Lattice nodes where ``|Psi_0|`` is below ``cutoff`` times its maximum
    are dropped; their total contribution is below the cutoff.
    """
    h = np.sqrt(hbar) / 4
    n = int(np.ceil(half / h))
    g = UniformGrid.centered(2 * n + 1, h)
    E, X = np.meshgrid(g.points, g.points, indexing="ij")
    src = exact.initial_phase_space(E, X, hbar) * h * h
    keep = np.abs(src) > cutoff * np.abs(src).max()
    cache = KernelCache(model, E[keep], X[keep], BENCH_STEP)
    cache.populate(times)
    return {t: kernel_matrix(cache.data(t), q[t], p[t], hbar) @ src[keep] for t in times}


def wkbm_suite(slope_window=(0.85, 1.15), times=(0.5, 1.0)) -> ErrorReport:
    """Leading-order WKBM values against transform and propagation oracles over an hbar sweep."""
    report = ErrorReport("wkbm")
    t0 = time.perf_counter()
    state = wkbm.chirped_gaussian_state()
    q = np.linspace(-2.0, 2.0, 9)
    p = state.S(q, 1)
    errs = []
    for hbar in HBAR_SWEEP:
        xs = required_x_step(hbar, 3.0)
        xg = UniformGrid.centered(2 * int(np.ceil(9 / xs)) + 1, xs)
        psi = WavefunctionField(xg, state.wavefunction(xg.points, hbar), hbar)
        oracle = wpt_points(psi, q, p)
        approx = wkbm.wkbm_phase_space(state, q, p, hbar).value
        errs.append(np.linalg.norm(approx - oracle) / np.linalg.norm(oracle))
    report.checks.append(Check("initial state on manifold: error slope in hbar", _slope(HBAR_SWEEP, errs), slope_window))
    for kind in ("free", "linear"):
        model = get_model(kind)
        manifolds = {t: wkbm.hj_transport(state, model, t, step=BENCH_STEP) for t in times}
        moms = {t: manifolds[t].momentum(q) for t in times}
        errs = {t: [] for t in times}
        for hbar in HBAR_SWEEP:
            oracle = _sparse_propagation(model, hbar, times, {t: q for t in times}, moms)
            for t in times:
                approx = wkbm.asymptotic_on_manifold(manifolds[t], q, hbar)
                errs[t].append(np.linalg.norm(approx - oracle[t]) / np.linalg.norm(oracle[t]))
        for t in times:
            report.checks.append(Check(f"{kind}: transported solution slope in hbar, t={t:g}",
                                       _slope(HBAR_SWEEP, errs[t]), slope_window))
    report.runtime = time.perf_counter() - t0
    return report


def manifold_norm_suite(tol: float = 1e-6, times=(0.25, 0.5, 1.0)) -> ErrorReport:
    """Classical-limit norm of the transported manifold for free motion and constant field."""
    report = ErrorReport("manifold-norm")
    t0 = time.perf_counter()
    state = wkbm.chirped_gaussian_state()
    for kind in ("free", "linear"):
        model = get_model(kind)
        for t in times:
            man = wkbm.hj_transport(state, model, t, x0_range=(-8.0, 8.0), step=BENCH_STEP)
            lo, hi = man.table.q[0], man.table.q[-1]
            pad = 1e-9 * (hi - lo)
            grid = UniformGrid.from_bounds(lo + pad, hi - pad, 801)
            report.checks.append(Check(f"{kind}: |manifold norm - 1|, t={t:g}",
                                       abs(wkbm.manifold_norm(man, grid) - 1), tol))
    report.runtime = time.perf_counter() - t0
    return report


def _case_runner(factory):
    def run():
        return run_benchmark(factory(), fail_fast=False)
    return run


def _unitarity():
    t0 = time.perf_counter()
    merged = ErrorReport("unitarity")
    for kind in ("free", "linear", "harmonic"):
        r = run_benchmark(packet_case(kind), fail_fast=False)
        merged.rows += r.rows
        merged.checks += [replace(c, name=f"{kind}: {c.name}") for c in r.checks]
    merged.runtime = time.perf_counter() - t0
    return merged


PRESETS: dict[str, Callable[[], ErrorReport]] = {
    "free": _case_runner(lambda: chirped_case("free")),
    "linear": _case_runner(lambda: chirped_case("linear")),
    "reproducing": _case_runner(reproducing_case),
    "unitarity": _unitarity,
    "siegel": siegel_suite,
    "riccati": riccati_suite,
    "vanvleck": van_vleck_suite,
    "wkbm": wkbm_suite,
    "manifold-norm": manifold_norm_suite,
}

CASES = {"free": lambda: chirped_case("free"), "linear": lambda: chirped_case("linear"),
         "reproducing": reproducing_case}


def run_preset(name: str) -> ErrorReport:
    """Run a registered benchmark case or property suite by name."""
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    return PRESETS[name]()
