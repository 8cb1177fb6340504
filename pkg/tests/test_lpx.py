import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from pxfem import exponent as ex
from pxfem import lpx
from pxfem.errors import AdmissibilityError

SQ = ex.UNIT_SQUARE
P_VAR = ex.sinusoidal(2.0, 0.5)


def const(grid, c):
    return lpx.GridFunction(grid, np.full(len(grid.points), float(c)))


def test_modular_examples():
    g = lpx.Grid.domain(SQ, 32)
    assert lpx.modular(const(g, 1.0), P_VAR) == pytest.approx(1.0, rel=1e-13)
    assert lpx.modular(const(g, 2.0), ex.constant(3.0)) == pytest.approx(8.0, rel=1e-13)
    assert lpx.modular(const(g, 0.0), P_VAR) == 0.0


def test_modular_against_adaptive_quadrature():
    p = ex.affine(2.0, [1.0, 0.0])
    want = integrate.dblquad(lambda y, x: x ** (2 + x), 0, 1, 0, 1, epsabs=1e-13)[0]
    vals = []
    for n in (64, 128, 256):
        g = lpx.Grid.domain(SQ, n)
        vals.append(lpx.modular(lpx.GridFunction.from_callable(g, lambda x: x[:, 0]), p))
    assert abs(vals[-1] - want) < 1e-4 * want
    assert abs(vals[-1] - want) < abs(vals[0] - want)


def test_luxemburg_examples():
    g = lpx.Grid.domain(SQ, 32)
    assert lpx.luxemburg_norm(const(g, 1.0), P_VAR) == pytest.approx(1.0, rel=1e-12)
    assert lpx.luxemburg_norm(const(g, 2.0), ex.constant(2.0)) == pytest.approx(2.0, rel=1e-12)
    assert lpx.luxemburg_norm(const(g, 0.0), P_VAR) == 0.0
    f = const(g, 3.0)
    p = ex.affine(2.0, [1.0, 0.0])
    lam = lpx.luxemburg_norm(f, p)
    scaled = lpx.GridFunction(g, f.values / lam)
    assert abs(lpx.modular(scaled, p) - 1) <= 1e-8


def test_luxemburg_l_shape_domain():
    g = lpx.Grid.domain(ex.Domain("l-shape"), 32)
    assert g.measure == pytest.approx(0.75, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.1, 5.0), st.integers(0, 2**31), st.floats(1e-3, 1e3))
def test_luxemburg_constant_p_closed_form_and_homogeneity(p, seed, t):
    g = lpx.Grid.cube((0.0, 0.0), 1.0, 16)
    rng = np.random.default_rng(seed)
    f = lpx.GridFunction(g, rng.uniform(-2, 2, len(g.points)))
    closed = np.sum(g.weights * np.abs(f.values) ** p) ** (1 / p)
    n = lpx.luxemburg_norm(f, ex.constant(p))
    assert n == pytest.approx(closed, rel=1e-10)
    nt = lpx.luxemburg_norm(lpx.GridFunction(g, t * f.values), P_VAR)
    assert nt == pytest.approx(t * lpx.luxemburg_norm(f, P_VAR), rel=1e-8)
    scaled = lpx.GridFunction(g, f.values / lpx.luxemburg_norm(f, P_VAR))
    assert abs(lpx.modular(scaled, P_VAR) - 1) <= 1e-8


def test_grid_validation():
    with pytest.raises(ValueError):
        lpx.Grid(np.zeros((2, 2)), np.ones(3))
    with pytest.raises(ValueError):
        lpx.Grid(np.zeros((2, 2)), np.array([1.0, 0.0]))
    with pytest.raises(ValueError):
        lpx.GridFunction(lpx.Grid.cube((0, 0), 1.0, 4), np.ones(3))


@settings(max_examples=30, deadline=None)
@given(st.floats(1.2, 4.0), st.integers(0, 2**31), st.integers(0, 5))
def test_key_estimate_constant_p_is_jensen(p, seed, k):
    Q = lpx.dyadic_cube((0.3, 0.6), k, 16)
    rng = np.random.default_rng(seed)
    f = lpx.GridFunction(Q, rng.uniform(0, 1, len(Q.points)))
    assert lpx.key_estimate_probe(ex.constant(p), Q, f) <= 1 + 1e-6


def test_key_estimate_constant_f_tends_to_one():
    vals = []
    for k in (1, 3, 5, 8):
        Q = lpx.dyadic_cube((0.0, 0.0), k, 32)
        f = const(Q, 2.0)
        c = lpx.key_estimate_probe(P_VAR, Q, f)
        pv = P_VAR(Q.points)
        assert c <= (2.0 ** pv).max() / np.mean(2.0 ** pv) + 1e-12
        vals.append(c)
    assert np.all(np.diff(vals) < 0) and vals[-1] < 1.005


def test_shifted_probe_reduces_at_zero_shift():
    Q = lpx.dyadic_cube((0.2, 0.2), 2, 16)
    f = lpx.GridFunction(Q, 1 + 0.5 * np.sin(7 * Q.points[:, 0]))
    assert lpx.shifted_key_probe(P_VAR, Q, f, 0.0) == lpx.key_estimate_probe(P_VAR, Q, f)


def test_shifted_probe_quadratic_case():
    rng = np.random.default_rng(0)
    for k in range(1, 5):
        Q = lpx.dyadic_cube((0.5, 0.5), k, 16)
        for _ in range(10):
            f = lpx.GridFunction(Q, rng.uniform(0, 2, len(Q.points)))
            assert lpx.shifted_key_probe(ex.constant(2.0), Q, f, rng.uniform(0, 2)) <= 4


def test_shifted_probe_three_regimes():
    k = 3
    Q = lpx.dyadic_cube((0.0, 0.0), k, 16)
    vol = Q.measure
    prof = 1 + 0.5 * np.cos(9 * Q.points[:, 1])
    prof /= np.sum(Q.weights * prof) / vol
    cases = [
        (2.0 * prof, 0.5),            # mean f >= a
        (1e-9 * prof, 0.5 * vol**2),  # mean f <= a <= |Q|^m
        (1e-9 * prof, 0.5),           # mean f <= a, |Q|^m <= a
    ]
    for vals, a in cases:
        c = lpx.shifted_key_probe(P_VAR, Q, lpx.GridFunction(Q, vals), a)
        assert np.isfinite(c) and 0 < c < 10


def test_probe_admissibility():
    Q = lpx.Grid.cube((0, 0), 0.5, 8)
    with pytest.raises(AdmissibilityError):
        lpx.key_estimate_probe(P_VAR, Q, const(Q, 1e3))
    with pytest.raises(AdmissibilityError):
        lpx.shifted_key_probe(P_VAR, Q, const(Q, 1.0), 1e3)
    with pytest.raises(AdmissibilityError):
        lpx.key_estimate_probe(P_VAR, lpx.Grid.cube((0, 0), 2.0, 4), const(lpx.Grid.cube((0, 0), 2.0, 4), 1.0))
    with pytest.raises(ValueError):
        lpx.key_estimate_probe(P_VAR, lpx.Grid.domain(SQ, 4), const(lpx.Grid.domain(SQ, 4), 1.0))
    with pytest.raises(ValueError):
        lpx.shifted_key_probe(P_VAR, Q, const(Q, 1.0), -1.0)


def test_poincare_examples():
    Q = lpx.dyadic_cube((0.0, 0.0), 2, 32)
    u = lpx.GridFunction(Q, np.full(len(Q.points), 3.0), np.zeros((len(Q.points), 2)))
    assert lpx.poincare_shift_probe(P_VAR, Q, u, 0.5) == 0.0
    for c in ([1.0, 0.0], [0.3, -0.8], [0.0, 2.0]):
        c = np.asarray(c)
        u = lpx.GridFunction(Q, Q.points @ c, np.tile(c, (len(Q.points), 1)))
        assert lpx.poincare_shift_probe(ex.constant(2.0), Q, u, 0.0) <= 1
    bad = lpx.GridFunction(Q, Q.points[:, 0] * 1e4, np.tile([1e4, 0.0], (len(Q.points), 1)))
    with pytest.raises(AdmissibilityError):
        lpx.poincare_shift_probe(P_VAR, Q, bad, 0.0)
    with pytest.raises(ValueError):
        lpx.poincare_shift_probe(P_VAR, Q, lpx.GridFunction(Q, Q.points[:, 0]), 0.0)


def test_dyadic_cube():
    Q = lpx.dyadic_cube((0.7, 0.2), 2, 4)
    assert Q.side == 0.25 and Q.corner == (0.5, 0.0)
    assert Q.measure == pytest.approx(1 / 16)


def test_sweeps_bounded_and_deterministic():
    kw = dict(draws=6, n=16, seed=3)
    sw = lpx.key_estimate_sweep(P_VAR, **kw)
    assert sw.ks == [1, 2, 3, 4, 5, 6]
    assert max(sw.constants) <= 10 * sw.constants[0]
    assert lpx.key_estimate_sweep(P_VAR, **kw).constants == sw.constants
    sh = lpx.key_estimate_sweep(P_VAR, shift=True, **kw)
    assert max(sh.constants) <= 10 * sh.constants[0]
    pc = lpx.poincare_sweep(P_VAR, shifts=(0.0, 0.5, 1.0), **kw)
    assert np.all(np.isfinite(pc.constants)) and max(pc.constants) <= 1
    const_sw = lpx.key_estimate_sweep(ex.constant(2.5), **kw)
    assert max(const_sw.constants) <= 1 + 1e-6
