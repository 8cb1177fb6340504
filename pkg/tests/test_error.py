import csv
import json
import math

import numpy as np
import pytest

from pxfem import error as er
from pxfem import exponent as ex
from pxfem import fem
from pxfem import functions as fn
from pxfem import mesh as ms
from pxfem.errors import StudyAborted
from pxfem.interp import Interpolator, interpolate
from pxfem.nfunction import family

SQ = ex.UNIT_SQUARE


def test_eoc_examples():
    np.testing.assert_allclose(er.eoc([1, 0.5], [1, 0.5]), [1.0])
    np.testing.assert_allclose(er.eoc([1, 0.25], [1, 0.5]), [2.0])
    np.testing.assert_allclose(er.eoc([0.9, 0.31], [0.1, 0.05]), [math.log(0.9 / 0.31) / math.log(2)])
    assert er.eoc([0.9, 0.31], [0.1, 0.05])[0] == pytest.approx(1.538, abs=5e-4)
    r = er.eoc([1.0, 0.0, 0.5], [1, 0.5, 0.25])
    assert np.isnan(r).all()
    with pytest.raises(ValueError):
        er.eoc([1.0], [1.0])
    with pytest.raises(ValueError):
        er.eoc([1.0, 2.0], [1.0])


def test_quasi_norm_zero_for_exact_affine():
    space = fem.FeSpace(ms.generate(SQ, 2))
    v = fn.affine([0.4, -1.1], 0.2)
    fam = family(ex.sinusoidal(2.0, 0.5), 1e-3)
    assert er.quasi_norm_error(fam, v, space.interpolate_nodal(v)) <= 1e-12


def test_quasi_norm_is_h1_seminorm_at_p2():
    space = fem.FeSpace(ms.generate(SQ, 6))
    v = fn.sinsin()
    v_h = space.interpolate_nodal(v)
    gq = v.grad(space.qp_points)[:, :, 0, :]
    gh = v_h.cell_gradients()[:, 0, None, :]
    direct = np.sqrt(np.sum(space.qp_weights * np.sum((gq - gh) ** 2, axis=-1)))
    assert er.quasi_norm_error(family(2.0), v, v_h) == pytest.approx(direct, rel=1e-12)
    # kappa does not enter at p = 2
    assert er.quasi_norm_error(family(2.0, 0.5), v, v_h) == pytest.approx(direct, rel=1e-12)
    # linear scaling
    t = 3.0
    vt = fn.FieldFunction(lambda x: t * v(x), lambda x: t * v.grad(x))
    vh_t = fem.FeFunction(space, t * v_h.coefficients)
    assert er.quasi_norm_error(family(2.0), vt, vh_t) == pytest.approx(t * direct, rel=1e-12)


def test_quasi_norm_homogeneity_constant_p():
    space = fem.FeSpace(ms.generate(SQ, 5))
    v = fn.sinsin()
    v_h = space.zero()
    p, t = 3.0, 2.0
    fam = family(p, 0.0)
    e1 = er.quasi_norm_error(fam, v, v_h)
    vt = fn.FieldFunction(lambda x: t * v(x), lambda x: t * v.grad(x))
    assert er.quasi_norm_error(fam, vt, v_h) == pytest.approx(t ** (p / 2) * e1, rel=1e-12)


def test_frozen_metric_equals_exact_for_constant_p():
    space = fem.FeSpace(ms.generate(SQ, 5))
    fam = family(1.5, 1e-4)
    v = fn.sinsin()
    v_h = space.interpolate_nodal(v)
    pT = fem.freeze(space, fam.exponent)
    assert er.frozen_quasi_norm_error(fam, pT, v, v_h) == pytest.approx(er.quasi_norm_error(fam, v, v_h),
                                                                          rel=1e-12)


def test_frozen_metric_gap_shrinks():
    fam = family(ex.sinusoidal(2.0, 0.5), 1e-4)
    v = fn.sinsin()
    mesh = ms.generate(SQ, 4)
    gaps = []
    for _ in range(4):
        space = fem.FeSpace(mesh)
        v_h = space.interpolate_nodal(v)
        e = er.quasi_norm_error(fam, v, v_h)
        ef = er.frozen_quasi_norm_error(fam, fem.freeze(space, fam.exponent), v, v_h)
        gaps.append(abs(ef - e) / e)
        mesh = ms.refine_uniform(mesh)
    assert gaps[-1] < gaps[0]


def test_cea_ratio():
    space = fem.FeSpace(ms.generate(SQ, 8))
    fam = family(2.0)
    v = fn.sinsin()
    u, _ = fem.solve(fem.Problem(fam, manufactured=v), space)
    pi = interpolate(Interpolator(space, preserve_boundary=True), v)
    assert er.cea_ratio(fam, v, u, pi) <= 1.0 + 1e-12
    w = fn.affine([1.0, 2.0])
    assert math.isnan(er.cea_ratio(fam, w, space.interpolate_nodal(w), space.interpolate_nodal(w)))


def test_study_b1_report(tmp_path):
    rep = er.run_study(er.benchmark("B1", levels=3))
    assert len(rep.rows) == 4
    assert rep.rows[0]["eoc"] is None
    h = rep.column("h")
    np.testing.assert_allclose(h[1:] / h[:-1], 0.5, rtol=1e-12)
    assert np.all(np.diff(rep.column("quasi_err")) < 0)
    assert 0.95 <= rep.final_eoc <= 1.05
    assert math.isnan(rep.final_frozen_eoc)
    rep.to_csv(tmp_path / "r.csv")
    rows = list(csv.DictReader(open(tmp_path / "r.csv")))
    assert list(rows[0].keys()) == list(er.CSV_COLUMNS)
    assert rows[0]["eoc"] == "" and float(rows[-1]["eoc"]) == pytest.approx(rep.final_eoc)
    rep.to_json(tmp_path / "r.json")
    assert json.load(open(tmp_path / "r.json"))["metadata"]["name"] == "B1"
    rep.plot_svg(tmp_path / "r.svg")
    assert (tmp_path / "r.svg").read_text().lstrip().startswith("<?xml")


def test_study_single_refinement():
    rep = er.run_study(er.benchmark("B2-p3", levels=1))
    assert len(rep.rows) == 2 and rep.rows[1]["eoc"] is not None
    e = rep.column("quasi_err")
    assert 1.6 < e[0] / e[1] < 2.4


def test_frozen_study():
    rep = er.run_study(er.benchmark("B3", levels=3, frozen=True))
    assert abs(rep.final_frozen_eoc - rep.final_eoc) <= 0.1
    assert np.all(rep.column("frozen_quasi_err") <= 2 * rep.column("quasi_err"))


def test_study_abort_keeps_partial_report():
    setup = er.benchmark("B2-p3", levels=2, options=fem.SolverOptions(tol=0.0, max_iter=2))
    with pytest.raises(StudyAborted) as info:
        er.run_study(setup)
    assert info.value.report is not None and info.value.report.rows == []
    assert info.value.stats is not None


def test_benchmark_registry():
    assert set(er.BENCHMARKS) == {"B1", "B2-p3", "B2-p1.5", "B3", "B4", "B5"}
    assert er.benchmark("B4").exponent.holder_alpha == 0.5
    assert er.benchmark("B5").domain.name == "l-shape"
    with pytest.raises(KeyError):
        er.benchmark("B9")
