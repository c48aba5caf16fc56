"""Command-line entry point: ``mmpde {generate,run,quality,version}``.

Exit codes: 0 success, 1 configuration or input error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .differential import discrete_curvature
from .flow import CurvatureMetric, StepRejectedError, run_to_convergence
from .generate import generate_mesh
from .geometry import DegenerateSimplexError
from .io import CsvLog, MeshFormatError, read_mesh, write_vtk
from .mesh import MeshError
from .metric import MetricField, build_identity_metric
from .quality import quality_report

log = logging.getLogger("mmpde")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


def _metric_source(cfg_kind: str, floor_eps, n_smooth, mesh):
    if cfg_kind == "curvature":
        return CurvatureMetric(floor_eps, n_smooth)
    return build_identity_metric(mesh)


def _curvature_or_none(mesh):
    if mesh.m == mesh.d:
        return None
    try:
        return discrete_curvature(mesh).curvature
    except MeshError:
        return None


def _out_dir(args, cfg: RunConfig) -> Path:
    out = Path(args.out or cfg.output_dir or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(args) -> int:
    cfg = load_config(args.config)
    gen = generate_mesh(cfg.geometry)
    out = _out_dir(args, cfg)
    path = out / "initial.vtk"
    write_vtk(gen.mesh, path, curvature=_curvature_or_none(gen.mesh))
    print(path)
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    gen = generate_mesh(cfg.geometry)
    out = _out_dir(args, cfg)
    metric = _metric_source(cfg.metric_kind, cfg.floor_eps, cfg.n_smooth, gen.mesh)
    every = cfg.output_every
    write_vtk(gen.mesh, out / "step_000000.vtk", curvature=_curvature_or_none(gen.mesh))

    with CsvLog(out / "log.csv") as csv_log:
        written = 0

        def on_step(state):
            nonlocal written
            for record in state.records[written:]:
                csv_log.write(record)
            written = len(state.records)
            if every and state.step % every == 0:
                write_vtk(state.mesh, out / f"step_{state.step:06d}.vtk",
                          curvature=_curvature_or_none(state.mesh), velocity=state.velocities)

        state = run_to_convergence(gen, metric, cfg.energy, cfg.flow, callback=on_step)

    write_vtk(state.mesh, out / "final.vtk", curvature=_curvature_or_none(state.mesh),
              velocity=state.velocities)
    field = metric(state.mesh) if callable(metric) else metric
    energy0 = state.records[0].energy if state.records else None
    report = quality_report(state.mesh, field, cfg.energy, energy_ref=state.energy_ref or energy0)
    energies = [r.energy for r in state.records]
    monotone = all(r.energy_after <= r.energy + 1e-12 * abs(r.energy) for r in state.records)
    lines = [
        f"geometry         {cfg.geometry.name}",
        f"metric           {cfg.metric_kind}",
        f"p                {cfg.energy.p:.10g}",
        f"theta            {cfg.energy.theta:.10g}",
        f"steps            {state.step}",
        f"t_final          {state.t:.10g}",
        f"converged        {state.converged}",
        f"grad_residual    {state.grad_residual:.10g}",
        f"initial_energy   {energies[0]:.10g}" if energies else "initial_energy   nan",
        f"energy_monotone  {monotone}",
    ]
    (out / "report.txt").write_text("\n".join(lines) + "\n" + report.format())
    print((out / "report.txt").read_text(), end="")
    return EXIT_OK


def cmd_quality(args) -> int:
    mesh = read_mesh(args.mesh, args.format)
    if args.metric == "curvature":
        field = CurvatureMetric()(mesh)
    elif args.metric == "identity":
        field = build_identity_metric(mesh)
    else:
        tensors = np.load(args.metric)
        field = MetricField(tensors, kind="user")
    print(quality_report(mesh, field).format(), end="")
    return EXIT_OK


def cmd_version(args) -> int:
    print(f"mmpde {__version__}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mmpde", description="Moving-mesh redistribution of curves and surfaces.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in (("generate", "write the initial mesh"), ("run", "run the mesh flow")):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True)
        p.add_argument("--out", default=None, help="output directory (overrides output.dir)")
    p = sub.add_parser("quality", help="print the quality report of a mesh file")
    p.add_argument("--mesh", required=True)
    p.add_argument("--format", choices=("vtk", "obj", "node_ele"), default=None)
    p.add_argument("--metric", default="identity",
                   help="identity, curvature, or a .npy file of nodal tensors (n, d, d)")
    sub.add_parser("version", help="print the version")
    return parser


_COMMANDS = {"generate": cmd_generate, "run": cmd_run, "quality": cmd_quality, "version": cmd_version}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except (DegenerateSimplexError, StepRejectedError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, MeshFormatError, MeshError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
