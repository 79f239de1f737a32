"""Command-line interface.

Every subcommand reads one configuration file (see :mod:`wpprop.config`)
and emits CSV, either to stdout or to ``[output] directory``.  The
``run_*`` functions hold the logic and return ``{file name: CSV text}`` so
they can be tested without spawning processes.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np

from . import exact, wkbm
from .bench import PRESETS, ToleranceBreach, case_from_plan, run_benchmark, run_preset
from .config import ConfigError, RunPlan, parse_config
from .core import BoundaryMassError, PhasePoint, PhaseSpaceField, ResolutionError, UniformGrid, WavefunctionField
from .flow import integrate_orbit, write_trajectory_csv
from .propagator import (KernelCache, config_kernel, config_lattice, kernel_eval, propagate, van_vleck_reduce)
from .siegel import write_siegel_csv
from .transform import gaussian_packet, required_x_step, write_field_csv, wpt

EXIT_OK, EXIT_BREACH, EXIT_INVALID = 0, 1, 2


def _t_label(t: float) -> str:
    return f"{t:.6g}".replace("-", "m")


def _initial_field(plan: RunPlan) -> PhaseSpaceField:
    qg, pg = plan.source.grids()
    Q, P = np.meshgrid(qg.points, pg.points, indexing="ij")
    case = case_from_plan(plan)
    return PhaseSpaceField(qg, pg, case.initial(Q, P), plan.hbar)


def run_trajectory(plan: RunPlan) -> dict[str, str]:
    """Orbit, variational data and Siegel quantities up to the largest time."""
    q0, p0 = plan.trajectory_start
    traj = integrate_orbit(plan.model, PhasePoint(q0, p0), max(max(plan.times), 0.0), plan.dt)
    return {f"{plan.prefix}_trajectory.csv": write_trajectory_csv(traj),
            f"{plan.prefix}_siegel.csv": write_siegel_csv(traj)}


def run_kernel(plan: RunPlan) -> dict[str, str]:
    """Kernel values at the ``[points]`` target/source pairs."""
    d = plan.model.dim
    pts = plan.points
    tq, tp = np.reshape(pts.get("target_q", ()), (-1, d)), np.reshape(pts.get("target_p", ()), (-1, d))
    sq, sp = np.reshape(pts.get("source_q", ()), (-1, d)), np.reshape(pts.get("source_p", ()), (-1, d))
    if len(tq) != len(sq):
        raise ConfigError("points.source_q", "need as many sources as targets")
    if not len(tq):
        raise ConfigError("points.target_q", "no kernel points given")
    cache = KernelCache(plan.model, sq, sp, plan.dt)
    cache.populate(plan.times)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t", "target_q", "target_p", "source_q", "source_p", "re", "im"])
    for t in plan.times:
        for a, b, c, e in zip(tq, tp, sq, sp):
            k = kernel_eval(PhasePoint(a, b), PhasePoint(c, e), t, cache, plan.hbar)
            w.writerow([repr(t), *(" ".join(repr(float(v)) for v in arr) for arr in (a, b, c, e)),
                        repr(k.real), repr(k.imag)])
    return {f"{plan.prefix}_kernel.csv": buf.getvalue()}


def run_propagate(plan: RunPlan) -> dict[str, str]:
    """Propagated phase-space field on the target grid at each time."""
    Psi0 = _initial_field(plan)
    qg, pg = plan.target.grids()
    cache = KernelCache.for_grid(plan.model, Psi0.qgrid, Psi0.pgrid, plan.dt)
    cache.populate(plan.times)
    out = {}
    for t in plan.times:
        field = propagate(Psi0, plan.model, t, qg, pg, cache=cache, boundary_tol=plan.tolerances.boundary)
        out[f"{plan.prefix}_field_t{_t_label(t)}.csv"] = write_field_csv(field)
    return out


def run_config_kernel(plan: RunPlan, van_vleck: bool = False) -> dict[str, str]:
    """Configuration-space kernel at the ``[points]`` ``x``/``y`` pairs, by phase-space quadrature."""
    x = np.asarray(plan.points.get("x", ()))
    y = np.asarray(plan.points.get("y", ()))
    if not x.size:
        raise ConfigError("points.x", "no configuration points given")
    cols = ["t", "x", "y", "re", "im"] + (["van_vleck_re", "van_vleck_im", "a_gamma_re", "a_gamma_im"] if van_vleck else [])
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for t in plan.times:
        if not t > 0:
            raise ConfigError("run.times", "configuration kernel needs positive times")
        qg, pg = config_lattice(x, y, t, plan.hbar)
        cache = KernelCache.for_grid(plan.model, qg, pg, plan.dt)
        vals = config_kernel(x, y, t, cache, plan.hbar)
        for a, b, k in zip(x, y, vals):
            row = [repr(t), repr(float(a)), repr(float(b)), repr(float(k.real)), repr(float(k.imag))]
            if van_vleck:
                r = van_vleck_reduce(a, b, t, plan.model, plan.hbar, plan.dt)
                row += [repr(float(v)) for v in (r.value.real, r.value.imag, r.a_gamma.real, r.a_gamma.imag)]
            w.writerow(row)
    return {f"{plan.prefix}_config_kernel.csv": buf.getvalue()}


def _initial_wavefunction(plan: RunPlan, x: np.ndarray) -> np.ndarray:
    ini = plan.initial
    if ini.state == "chirped_gaussian":
        return exact.psi_exact(x, 0.0, plan.hbar)
    if ini.state == "packet":
        return gaussian_packet(x, ini.q, ini.p, plan.hbar)
    state = wkbm.polynomial_state(ini.phase, ini.amplitude_center, ini.amplitude_width, ini.order)
    return state.wavefunction(x, plan.hbar)


def run_transform(plan: RunPlan) -> dict[str, str]:
    """Wave packet transform of the initial wave function onto the source grid."""
    qg, pg = plan.source.grids()
    ini = plan.initial
    center = ini.q if ini.state == "packet" else ini.amplitude_center
    reach = 8 * np.sqrt(plan.hbar) if ini.state == "packet" else 7 * ini.amplitude_width
    lo = min(qg.start, center - reach) - 8 * np.sqrt(plan.hbar)
    hi = max(qg.stop, center + reach) + 8 * np.sqrt(plan.hbar)
    p_max = max(abs(pg.start), abs(pg.stop))
    h = required_x_step(plan.hbar, p_max)
    xg = UniformGrid(lo, h, int(np.ceil((hi - lo) / h)) + 1)
    psi = WavefunctionField(xg, _initial_wavefunction(plan, xg.points), plan.hbar)
    return {f"{plan.prefix}_transform.csv": write_field_csv(wpt(psi, qg, pg))}


def _emit(files: dict[str, str], plan: RunPlan | None, stream) -> None:
    directory = plan.output_dir if plan is not None else None
    if directory is None:
        for name, text in files.items():
            if len(files) > 1:
                stream.write(f"# file: {name}\n")
            stream.write(text)
        return
    directory.mkdir(parents=True, exist_ok=True)
    for name, text in files.items():
        (directory / name).write_text(text)


def run_benchmark_command(target: str, summary: bool, stream) -> int:
    """Run presets (``all`` for every one) or a config-file case; return the exit code."""
    if target == "all" or target in PRESETS:
        names = list(PRESETS) if target == "all" else [target]
        code = EXIT_OK
        for name in names:
            report = run_preset(name)
            stream.write(report.summary() + "\n" if summary else report.to_csv())
            if not report.passed:
                code = EXIT_BREACH
        return code
    plan = parse_config(target)
    try:
        report = run_benchmark(case_from_plan(plan, Path(target).stem))
    except ToleranceBreach as exc:
        report = exc.report
    files = {f"{plan.prefix}_benchmark.csv": report.to_csv()}
    if summary:
        stream.write(report.summary() + "\n")
        if plan.output_dir is not None:
            _emit(files, plan, stream)
    else:
        _emit(files, plan, stream)
    return EXIT_OK if report.passed else EXIT_BREACH


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wpprop", description="Semiclassical wave packet propagation in phase space.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("trajectory", "orbit, variational and Siegel data"),
                        ("kernel", "phase-space kernel at given point pairs"),
                        ("propagate", "propagate the initial state on the target grid"),
                        ("config-kernel", "configuration-space kernel by phase-space quadrature"),
                        ("transform", "wave packet transform of the initial wave function")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("config", help="configuration file")
        if name == "config-kernel":
            p.add_argument("--van-vleck", action="store_true", help="add the stationary-phase value and a_gamma")
    b = sub.add_parser("benchmark", help="run a preset, 'all', or a configuration-file case")
    b.add_argument("target", help=f"preset ({', '.join(PRESETS)}, all) or configuration path")
    b.add_argument("--summary", action="store_true", help="print aligned text instead of CSV")
    return parser


_RUNNERS = {"trajectory": run_trajectory, "kernel": run_kernel, "propagate": run_propagate,
            "transform": run_transform}


def main(argv: list[str] | None = None, stream=None) -> int:
    stream = stream or sys.stdout
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        if args.command == "benchmark":
            return run_benchmark_command(args.target, args.summary, stream)
        plan = parse_config(args.config)
        if args.command == "config-kernel":
            files = run_config_kernel(plan, args.van_vleck)
        else:
            files = _RUNNERS[args.command](plan)
        _emit(files, plan, stream)
    except (ConfigError, ResolutionError, BoundaryMassError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
