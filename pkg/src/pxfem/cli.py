"""Command line entry point: ``pxfem {solve|study|probe|mesh}``.

Exit codes: 0 success, 1 configuration error, 2 solver failure,
3 failed assertion.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import error as er
from . import interp as ip
from . import lpx
from . import mesh as meshmod
from . import probes as pb
from .config import ConfigError, RunConfig, load_config
from .errors import MeshParseError, MeshValidationError, SolverError, StudyAborted
from .fem import FeSpace, Problem, solve
from .nfunction import family

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_ASSERT = 0, 1, 2, 3

log = logging.getLogger("pxfem")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"pxfem: error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="pxfem", description="P1 finite elements for the p(x)-Laplacian.")
    ap.add_argument("command", choices=["solve", "study", "probe", "mesh"])
    ap.add_argument("--config", required=True, help="JSON configuration file")
    ap.add_argument("--out", required=True, help="output directory")
    ap.add_argument("--seed", type=int, default=None, help="seed for probe sampling")
    ap.add_argument("--threads", type=int, default=1, help="worker count (recorded; kernels are vectorised)")
    ap.add_argument("--verbose", "-v", action="store_true")
    return ap


def _build_mesh(cfg: RunConfig):
    if cfg.mesh.input:
        m = meshmod.read_mesh(cfg.mesh.input, cfg.domain_obj())
    else:
        m = meshmod.generate(cfg.domain_obj(), cfg.mesh.n0)
    return meshmod.refine(m, cfg.mesh.levels)


def _write_json(path: Path, obj):
    path.write_text(json.dumps(obj, indent=2, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


# --- commands -------------------------------------------------------------------------


def cmd_solve(cfg: RunConfig, out: Path, args) -> int:
    mesh = _build_mesh(cfg)
    rhs, v = cfg.load()
    space = FeSpace(mesh, (v or rhs).components, cfg.quadrature_degree)
    problem = Problem(family(cfg.exponent_obj(), cfg.kappa, cfg.variant), rhs=rhs, manufactured=v,
                      options=cfg.solver_options())
    code = EXIT_OK
    try:
        u, stats = solve(problem, space, frozen=cfg.frozen)
    except SolverError as exc:
        u, stats = exc.iterate, exc.stats
        print(f"solver failure: {exc}; final residual {stats.final_residual:.6e}", file=sys.stderr)
        code = EXIT_SOLVER
    meshmod.write_mesh(mesh, out / "mesh.pxmesh")
    with open(out / "solution.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        N = space.components
        w.writerow(["x", "y"] + [f"u{c}" for c in range(N)])
        for xy, val in zip(mesh.vertices, u.nodal):
            w.writerow([repr(float(xy[0])), repr(float(xy[1]))] + [repr(float(c)) for c in val])
    info = stats.as_dict()
    info.update({"ndof": int(len(space.free_dofs)), "h": meshmod.shape_metrics(mesh)[0], "threads": args.threads})
    if v is not None:
        info["quasi_err"] = er.quasi_norm_error(problem.phi, v, u)
    _write_json(out / "stats.json", info)
    if code == EXIT_OK:
        print(f"converged in {stats.iterations} Newton iterations, residual {stats.final_residual:.3e}")
    return code


def cmd_study(cfg: RunConfig, out: Path, args) -> int:
    setup = cfg.study_setup()
    try:
        report = er.run_study(setup)
    except StudyAborted as exc:
        if exc.report is not None:
            exc.report.to_csv(out / "report.csv")
            exc.report.to_json(out / "report.json")
        res = exc.stats.final_residual if exc.stats is not None else math.nan
        print(f"study aborted: {exc}; final residual {res:.6e}", file=sys.stderr)
        return EXIT_SOLVER
    report.metadata["threads"] = args.threads
    report.to_csv(out / "report.csv")
    report.to_json(out / "report.json")
    if cfg.study.plot:
        report.plot_svg(out / "report.svg")
    for r in report.rows:
        print(f"level {r['level']}: h={r['h']:.4g} err={r['quasi_err']:.4e} eoc={_show(r['eoc'])}")
    bound = cfg.study.assert_eoc
    if bound is not None and len(report.rows) > 1:
        got = [report.final_eoc] + ([report.final_frozen_eoc] if setup.frozen else [])
        if not all(g >= bound for g in got):
            print(f"assertion failed: final EOC {got} < {bound}", file=sys.stderr)
            return EXIT_ASSERT
    return EXIT_OK


def _show(v):
    return "-" if v is None else f"{v:.3f}"


def probe_rows(cfg: RunConfig, seed: int) -> list[dict]:
    """All configured probes as rows (probe, parameters, constant)."""
    pc = cfg.probe
    p = cfg.exponent_obj()
    prange = (p.p_minus, p.p_plus)
    kappas = tuple(pc.kappas) if pc.kappas is not None else (cfg.kappa,)
    ps = tuple(sorted({prange[0], prange[1]}))
    rows = []

    def add(name, params, value):
        rows.append({"probe": name, "parameters": params, "constant": repr(float(value))})

    def add_env(env):
        add(env.name + ":min", env.params, env.lo)
        add(env.name + ":max", env.params, env.hi)

    for name in pc.names:
        if name == "hammer":
            for env in pb.hammer_envelope(pc.draws, seed, prange, kappas):
                add_env(env)
        elif name == "young":
            add("young_min_gap", f"p in {list(ps)}, kappa in {list(kappas)}", pb.young_scan(ps=ps, kappas=kappas))
        elif name == "shift_sim":
            for env in pb.shift_sim_envelope(ps, kappas):
                add_env(env)
        elif name == "double_shift":
            add_env(pb.double_shift_envelope(ps, kappas))
        elif name == "shift_ch":
            for d, (c1, c2) in pb.shift_change_constants(seed=seed, ps=ps, kappa=kappas[0]).items():
                add("shift_ch", f"delta={d}", c1)
                add("shift_ch_conjugate", f"delta={d}", c2)
        elif name == "shifted2":
            for env in pb.shifted2_envelope(ps, kappas):
                add_env(env)
        elif name == "shiftedindex":
            for env in pb.shifted_index_envelope(ps, kappas):
                add_env(env)
        elif name == "ellipticity":
            for r in pb.ellipticity_envelope(ps, kappas):
                add("ellipticity:min", f"p={r['p']}", r["observed_lo"])
                add("ellipticity:max", f"p={r['p']}", r["observed_hi"])
        elif name in ("key_estimate", "shifted_key"):
            sw = lpx.key_estimate_sweep(p, draws=pc.sweep_draws, seed=seed, m=pc.m, n=pc.resolution,
                                        shift=name == "shifted_key")
            for k, c in zip(sw.ks, sw.constants):
                add(sw.probe, f"k={k}, m={pc.m}, seed={seed}", c)
        elif name == "poincare":
            sw = lpx.poincare_sweep(p, draws=pc.sweep_draws, seed=seed, m=pc.m, n=pc.resolution,
                                    shifts=(0.0, 0.5, 1.0))
            for k, c in zip(sw.ks, sw.constants):
                add(sw.probe, f"k={k}, m={pc.m}, seed={seed}", c)
        elif name in ("interp_stability", "interp_approximability"):
            fam = family(p, cfg.kappa, cfg.variant)
            _, v = cfg.load()
            mesh = meshmod.generate(cfg.domain_obj(), cfg.mesh.n0)
            fn_ = ip.stability_probe if name == "interp_stability" else ip.approximability_probe
            for level in range(4):
                op = ip.Interpolator(FeSpace(mesh), preserve_boundary=True)
                for a in (0.0, 0.5, 1.0):
                    add(name, f"level={level}, a={a}, m={pc.m}", fn_(op, v, a, pc.m, fam))
                mesh = meshmod.refine_uniform(mesh)
    return rows


def cmd_probe(cfg: RunConfig, out: Path, args) -> int:
    seed = cfg.probe.seed if args.seed is None else args.seed
    rows = probe_rows(cfg, seed)
    with open(out / "probes.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["probe", "parameters", "constant"])
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} probe rows")
    return EXIT_OK


def cmd_mesh(cfg: RunConfig, out: Path, args) -> int:
    mesh = _build_mesh(cfg)
    mesh.validate()
    meshmod.write_mesh(mesh, out / "mesh.pxmesh")
    h, g0 = meshmod.shape_metrics(mesh)
    info = {"vertices": mesh.num_vertices, "cells": mesh.num_cells, "h": h, "gamma0": g0,
            "max_patch": int(mesh.patch_sizes().max()), "euler": mesh.euler_characteristic()}
    _write_json(out / "mesh.json", info)
    print(json.dumps(info))
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "study": cmd_study, "probe": cmd_probe, "mesh": cmd_mesh}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("pxfem: error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, MeshParseError, MeshValidationError) as exc:
        print(f"pxfem: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
