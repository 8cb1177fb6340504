"""Quasi-norm errors, Cea ratios, convergence rates and the study driver."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import exponent as expo
from . import mesh as meshmod
from .errors import SolverError, StudyAborted
from .fem import FeFunction, FeSpace, Problem, SolverOptions, exponent_at_qp, freeze, prolongate, solve
from .functions import FieldFunction, sinsin
from .interp import Interpolator, interpolate
from .nfunction import PhiFamily, family, flux_F_kernel

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "level", "h", "ndof", "quasi_err", "eoc", "frozen_quasi_err", "frozen_eoc",
    "interp_err", "cea_ratio", "newton_iters",
)


def _f_error(space: FeSpace, p_qp, kappa, variant, v: FieldFunction, v_h: FeFunction) -> float:
    gq = np.asarray(v.grad(space.qp_points))  # (nc, nq, N, 2)
    gh = v_h.cell_gradients()[:, None]
    diff = flux_F_kernel(p_qp, kappa, gq, variant) - flux_F_kernel(p_qp, kappa, gh, variant)
    return float(np.sqrt(np.sum(space.qp_weights * np.sum(diff * diff, axis=(-2, -1)))))


def quasi_norm_error(fam: PhiFamily, v: FieldFunction, v_h: FeFunction) -> float:
    """|| F(., grad v) - F(., grad v_h) ||_2 by the assembly quadrature."""
    space = v_h.space
    return _f_error(space, exponent_at_qp(space, fam.exponent), fam.kappa, fam.variant, v, v_h)


def frozen_quasi_norm_error(fam: PhiFamily, p_T: expo.ExponentField, v: FieldFunction, v_h: FeFunction) -> float:
    """As ``quasi_norm_error`` with the cellwise frozen exponent in F."""
    space = v_h.space
    return _f_error(space, exponent_at_qp(space, p_T), fam.kappa, fam.variant, v, v_h)


def cea_ratio(fam: PhiFamily, v: FieldFunction, v_h: FeFunction, interp_v_h: FeFunction) -> float:
    """err(v_h) / err(Pi_h v); NaN marks an exactly interpolated v."""
    den = quasi_norm_error(fam, v, interp_v_h)
    if den == 0.0:
        return math.nan
    return quasi_norm_error(fam, v, v_h) / den


def eoc(errors, hs) -> np.ndarray:
    """log(e_{k-1}/e_k) / log(h_{k-1}/h_k); NaN where an error is not positive."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    if e.shape != h.shape or len(e) < 2:
        raise ValueError("need equal-length arrays with at least two entries")
    with np.errstate(divide="ignore", invalid="ignore"):
        rates = np.log(e[:-1] / e[1:]) / np.log(h[:-1] / h[1:])
    bad = (e[:-1] <= 0) | (e[1:] <= 0)
    rates[bad] = np.nan
    return rates


# --- study ---------------------------------------------------------------------------


@dataclass
class StudySetup:
    domain: expo.Domain
    exponent: expo.ExponentField
    kappa: float
    v_exact: FieldFunction
    n0: int = 4
    levels: int = 4
    frozen: bool = False
    options: SolverOptions = field(default_factory=SolverOptions)
    degree: int = 4
    variant: str = "integral"
    name: str = "study"
    alpha: float | None = None  # reference slope for plots; Hoelder exponent by default

    @property
    def phi(self) -> PhiFamily:
        return family(self.exponent, self.kappa, self.variant)


@dataclass
class ConvergenceReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def column(self, name) -> np.ndarray:
        return np.array([np.nan if r.get(name) is None else r[name] for r in self.rows], dtype=float)

    @property
    def final_eoc(self) -> float:
        return float(self.rows[-1]["eoc"]) if len(self.rows) > 1 else math.nan

    @property
    def final_frozen_eoc(self) -> float:
        v = self.rows[-1].get("frozen_eoc") if len(self.rows) > 1 else None
        return math.nan if v is None else float(v)

    def _fill_rates(self):
        if len(self.rows) < 2:
            return
        h = self.column("h")
        for key, out in (("quasi_err", "eoc"), ("frozen_quasi_err", "frozen_eoc")):
            e = self.column(key)
            if np.all(np.isnan(e)):
                continue
            for row, r in zip(self.rows[1:], eoc(e, h)):
                row[out] = float(r)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: _fmt(r.get(k)) for k in CSV_COLUMNS})

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump({"metadata": self.metadata, "rows": self.rows}, fh, indent=2, default=float)

    def plot_svg(self, path) -> None:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        h = self.column("h")
        fig, ax = plt.subplots(figsize=(5, 4))
        ax.loglog(h, self.column("quasi_err"), "o-", label="exact exponent")
        fz = self.column("frozen_quasi_err")
        if not np.all(np.isnan(fz)):
            ax.loglog(h, fz, "s--", label="frozen exponent")
        ax.loglog(h, self.column("interp_err"), "^:", label="interpolant")
        alpha = self.metadata.get("alpha", 1.0)
        ref = self.column("quasi_err")[0] * (h / h[0]) ** alpha
        ax.loglog(h, ref, "k-", lw=0.8, label=f"slope {alpha:g}")
        ax.set_xlabel("h")
        ax.set_ylabel("quasi-norm error")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path, format="svg")
        plt.close(fig)


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def _vanishes_on_boundary(space: FeSpace, v: FieldFunction) -> bool:
    bv = space.mesh.vertices[space.mesh.boundary_vertices]
    return bool(np.max(np.abs(v(bv))) <= 1e-12)


def run_study(setup: StudySetup) -> ConvergenceReport:
    """Solve on ``levels + 1`` uniformly refined meshes and tabulate errors."""
    fam = setup.phi
    alpha = setup.alpha if setup.alpha is not None else setup.exponent.holder_alpha
    report = ConvergenceReport(metadata={
        "name": setup.name,
        "domain": setup.domain.name,
        "exponent": setup.exponent.describe(),
        "alpha": alpha,
        "kappa": setup.kappa,
        "kappa_solve": max(setup.kappa, setup.options.kappa_solve),
        "v_exact": setup.v_exact.name,
        "n0": setup.n0,
        "levels": setup.levels,
        "frozen": setup.frozen,
        "quadrature_degree": setup.degree,
    })
    mesh = meshmod.generate(setup.domain, setup.n0)
    prev = prev_frozen = None
    for level in range(setup.levels + 1):
        if level > 0:
            mesh = meshmod.refine_uniform(mesh)
        space = FeSpace(mesh, setup.v_exact.components, setup.degree)
        problem = Problem(fam, manufactured=setup.v_exact, options=setup.options)
        t0 = time.perf_counter()
        try:
            u, stats = solve(problem, space, initial=None if prev is None else prolongate(prev, space))
            row = {"level": level, "h": meshmod.shape_metrics(mesh)[0], "ndof": int(len(space.free_dofs)),
                   "quasi_err": quasi_norm_error(fam, setup.v_exact, u), "eoc": None,
                   "frozen_quasi_err": None, "frozen_eoc": None, "newton_iters": stats.iterations}
            if setup.frozen:
                init = None if prev_frozen is None else prolongate(prev_frozen, space)
                uf, fstats = solve(problem, space, frozen=True, initial=init)
                row["frozen_quasi_err"] = frozen_quasi_norm_error(fam, freeze(space, setup.exponent),
                                                                  setup.v_exact, uf)
                row["frozen_newton_iters"] = fstats.iterations
                prev_frozen = uf
        except SolverError as exc:
            report._fill_rates()
            raise StudyAborted(f"level {level}: {exc}", report=report, iterate=exc.iterate,
                               stats=exc.stats) from exc
        op = Interpolator(space, preserve_boundary=_vanishes_on_boundary(space, setup.v_exact),
                          degree=setup.degree)
        pi_v = interpolate(op, setup.v_exact)
        row["interp_err"] = quasi_norm_error(fam, setup.v_exact, pi_v)
        row["cea_ratio"] = row["quasi_err"] / row["interp_err"] if row["interp_err"] > 0 else math.nan
        row["seconds"] = time.perf_counter() - t0
        report.rows.append(row)
        log.info("level %d: h=%.4g err=%.4e iters=%d", level, row["h"], row["quasi_err"], row["newton_iters"])
        prev = u
    report._fill_rates()
    return report


# --- benchmarks ------------------------------------------------------------------------

KAPPA_BENCH = 1e-4


def benchmark(name: str, **overrides) -> StudySetup:
    """Named benchmark studies; see ``BENCHMARKS`` for the list."""
    sq = expo.UNIT_SQUARE
    lshape = expo.Domain("l-shape")
    v = sinsin()
    table = {
        "B1": lambda: StudySetup(sq, expo.constant(2.0, sq), 0.0, v, alpha=1.0),
        "B2-p3": lambda: StudySetup(sq, expo.constant(3.0, sq), KAPPA_BENCH, v, alpha=1.0),
        "B2-p1.5": lambda: StudySetup(sq, expo.constant(1.5, sq), KAPPA_BENCH, v, alpha=1.0),
        "B3": lambda: StudySetup(sq, expo.sinusoidal(2.0, 0.5, 1.0, domain=sq), KAPPA_BENCH, v),
        "B4": lambda: StudySetup(sq, expo.holder_cusp(2.0, 0.5, (0.5, 0.5), 0.5, domain=sq), KAPPA_BENCH, v),
        "B5": lambda: StudySetup(lshape, expo.sinusoidal(2.0, 0.5, 1.0, domain=lshape), KAPPA_BENCH, v),
    }
    if name not in table:
        raise KeyError(f"unknown benchmark {name!r}; choose from {sorted(table)}")
    setup = table[name]()
    setup.name = name
    return replace(setup, **overrides)


BENCHMARKS = ("B1", "B2-p3", "B2-p1.5", "B3", "B4", "B5")
