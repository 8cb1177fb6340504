import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import integrate, optimize

from pxfem import exponent as ex
from pxfem import nfunction as nf
from pxfem.errors import SingularFluxError

X = (0.3, 0.4)
ps = st.floats(1.2, 4.0)
kappas = st.sampled_from([0.0, 1e-3, 0.3, 1.0])
pos = st.floats(1e-4, 50.0)


def quad_phi(p, kappa, t, a=0.0):
    def f(s):
        return (kappa + a + s) ** (p - 2) * s

    # split at geometric breakpoints so the near-singular start is resolved
    c = kappa + a
    cuts = [0.0]
    x = c
    while 0 < x < t:
        cuts.append(x)
        x *= 10.0
    cuts.append(t)
    return sum(integrate.quad(f, lo, hi, epsabs=0, epsrel=1e-13, limit=200)[0] for lo, hi in zip(cuts, cuts[1:]))


def test_phi_examples():
    assert nf.phi(nf.family(2.0, 0.7), X, 3.0) == pytest.approx(4.5, rel=1e-14)
    assert nf.phi(nf.family(3.0), X, 2.0) == pytest.approx(8 / 3, rel=1e-14)
    assert nf.phi(nf.family(ex.affine(2.0, [1, 0])), X, 0.0) == 0.0
    with pytest.raises(ValueError):
        nf.phi(nf.family(2.0), X, -1.0)


def test_phi_shifted_examples():
    assert nf.phi_shifted(nf.family(2.0), X, 7.0, 3.0) == pytest.approx(4.5, rel=1e-14)
    assert nf.phi_shifted(nf.family(3.0), X, 1.0, 1.0) == pytest.approx(5 / 6, rel=1e-13)
    fam = nf.family(ex.sinusoidal(2.0, 0.5), 0.2)
    t = np.linspace(0, 5, 11)
    np.testing.assert_allclose(nf.phi_shifted(fam, X, 0.0, t), nf.phi(fam, X, t), rtol=0, atol=0)
    with pytest.raises(ValueError):
        nf.phi_shifted(fam, X, -0.1, 1.0)


@settings(max_examples=80, deadline=None)
@given(ps, kappas, st.floats(0.0, 5.0), st.floats(1e-8, 40.0))
def test_phi_against_quadrature(p, kappa, a, t):
    got = float(nf.phi_kernel(p, kappa, t, a))
    want = quad_phi(p, kappa, t, a)
    np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-300)


def test_plain_power_variant():
    fam = nf.family(2.7, 0.5, "plain-power")
    t = np.array([0.0, 0.3, 1.0, 4.0])
    np.testing.assert_allclose(nf.phi(fam, X, t), t**2.7, rtol=1e-13)


@settings(max_examples=60, deadline=None)
@given(ps, kappas, st.floats(0.0, 3.0))
def test_convex_increasing(p, kappa, a):
    t = np.linspace(0.0, 10.0, 201)
    v = nf.phi_kernel(p, kappa, t, a)
    assert v[0] == 0
    d = np.diff(v)
    assert np.all(d > 0)
    assert np.all(np.diff(d) >= -1e-12 * np.abs(d[1:]))


def test_conjugate_examples():
    assert nf.phi_conjugate(nf.family(2.0), X, 0.0, 4.0) == pytest.approx(8.0, rel=1e-13)
    assert nf.phi_conjugate(nf.family(3.0), X, 0.0, 0.0) == 0.0
    assert nf.phi_conjugate(nf.family(3.0), X, 0.0, 1.0) == pytest.approx(2 / 3, rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.3, 3.5), kappas, st.floats(0.0, 2.0), st.floats(1e-3, 20.0))
def test_conjugate_against_bounded_maximisation(p, kappa, a, t):
    def neg(s):
        return -(s * t - float(nf.phi_kernel(p, kappa, s, a)))

    hi = 1.0
    while float(nf.dphi_kernel(p, kappa, hi, a)) < t:
        hi *= 2
    res = optimize.minimize_scalar(neg, bounds=(0, hi), method="bounded",
                                   options={"xatol": 1e-12 * hi})
    want = -res.fun
    got = float(nf.conjugate_kernel(p, kappa, t, a))
    assert got >= want - 1e-9 * max(1.0, abs(want))
    np.testing.assert_allclose(got, want, rtol=1e-8, atol=1e-12)


def test_flux_examples():
    f2 = nf.family(2.0)
    np.testing.assert_allclose(nf.flux_A(f2, X, [3.0, 4.0]), [3.0, 4.0], rtol=1e-15)
    np.testing.assert_allclose(nf.flux_F(f2, X, [3.0, 4.0]), [3.0, 4.0], rtol=1e-15)
    np.testing.assert_array_equal(nf.flux_A(nf.family(1.5), X, [0.0, 0.0]), [0.0, 0.0])
    np.testing.assert_array_equal(nf.flux_F(nf.family(1.5), X, [0.0, 0.0]), [0.0, 0.0])
    f4 = nf.family(4.0)
    np.testing.assert_allclose(nf.flux_A(f4, X, [0.0, 2.0]), [0.0, 8.0], rtol=1e-15)
    np.testing.assert_allclose(nf.flux_F(f4, X, [0.0, 2.0]), [0.0, 4.0], rtol=1e-15)


def test_flux_is_gradient_of_energy():
    fam = nf.family(4.0)
    xi = np.array([0.0, 2.0])
    eps = 1e-6
    grad = []
    for i in range(2):
        e = np.zeros(2)
        e[i] = eps
        grad.append((nf.phi(fam, X, np.linalg.norm(xi + e)) - nf.phi(fam, X, np.linalg.norm(xi - e))) / (2 * eps))
    np.testing.assert_allclose(grad, [0.0, 8.0], atol=1e-6)


@settings(max_examples=60, deadline=None)
@given(ps, kappas, st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_A_dot_xi_equals_F_squared(p, kappa, v):
    fam = nf.family(p, kappa)
    xi = np.asarray(v)
    a = nf.flux_A(fam, X, xi) @ xi
    f = nf.flux_F(fam, X, xi)
    np.testing.assert_allclose(a, f @ f, rtol=1e-12, atol=1e-300)


def test_jacobian_examples():
    np.testing.assert_allclose(nf.flux_A_jacobian(nf.family(2.0, 0.3), X, [1.5, -0.2]), np.eye(2), rtol=1e-15)
    np.testing.assert_allclose(nf.flux_A_jacobian(nf.family(4.0), X, [1.0, 0.0]), np.diag([3.0, 1.0]),
                               rtol=1e-14)
    with pytest.raises(SingularFluxError):
        nf.flux_A_jacobian(nf.family(1.5), X, [0.0, 0.0])
    # p >= 2 at the origin is fine
    np.testing.assert_allclose(nf.flux_A_jacobian(nf.family(3.0), X, [0.0, 0.0]), np.zeros((2, 2)))


@settings(max_examples=60, deadline=None)
@given(st.floats(1.5, 3.0), st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_jacobian_vs_finite_differences(p, v):
    xi = np.asarray(v)
    assume(np.linalg.norm(xi) > 1e-2)
    fam = nf.family(p, 1e-3)
    J = nf.flux_A_jacobian(fam, X, xi)
    eps = 1e-6
    fd = np.empty((2, 2))
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        fd[:, j] = (nf.flux_A(fam, X, xi + e) - nf.flux_A(fam, X, xi - e)) / (2 * eps)
    np.testing.assert_allclose(J, fd, rtol=1e-5, atol=1e-5 * np.abs(J).max())
    np.testing.assert_allclose(J, J.T, rtol=0, atol=1e-14 * np.abs(J).max())
    lam = np.linalg.eigvalsh(J).min()
    t = np.linalg.norm(xi)
    assert lam >= min(p - 1, 1) * (1e-3 + t) ** (p - 2) * (1 - 1e-8)


def test_hammer_examples():
    r = nf.hammer_ratios(nf.family(2.0), X, [1.0, -2.0], [0.5, 3.0])
    np.testing.assert_allclose(r, (1.0, 2.0, 1.0), rtol=1e-13)
    r = nf.hammer_ratios(nf.family(3.0), X, [1.0, 0.0], [0.0, 0.0])
    assert all(1e-2 <= v <= 1e2 for v in r)
    with pytest.raises(ValueError):
        nf.hammer_ratios(nf.family(3.0), X, [1.0, 0.0], [1.0, 0.0])


@settings(max_examples=100, deadline=None)
@given(st.floats(1.5, 3.0), kappas, st.lists(st.floats(-4, 4), min_size=4, max_size=4))
def test_monotone_flux(p, kappa, v):
    fam = nf.family(p, kappa)
    P, Q = np.asarray(v[:2]), np.asarray(v[2:])
    val = (nf.flux_A(fam, X, P) - nf.flux_A(fam, X, Q)) @ (P - Q)
    assert val >= 0
    if np.linalg.norm(P - Q) > 1e-6 and kappa + np.linalg.norm(P) + np.linalg.norm(Q) > 0:
        assert val > 0


def test_young_examples():
    fam = nf.family(2.0)
    assert nf.young_gap(fam, X, 0.0, 0.0, 3.0, 0.5) >= 0
    assert nf.young_gap(fam, X, 0.0, 3.0, 0.0, 0.5) >= 0
    s, t = np.meshgrid(np.linspace(0, 5, 11), np.linspace(0, 5, 11))
    assert np.min(nf.young_gap(fam, X, 0.0, s, t, 0.5)) >= -1e-12
    with pytest.raises(ValueError):
        nf.young_gap(fam, X, 0.0, 1.0, 1.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(1.5, 3.0), st.floats(0.0, 2.0), st.floats(0, 10), st.floats(0, 10),
       st.sampled_from([1.0, 0.3, 0.05]))
def test_young_gap_nonnegative(p, a, s, t, delta):
    g = nf.young_gap(nf.family(p, 1e-3), X, a, s, t, delta)
    assert g >= -1e-10 * (1 + s * t)


def test_young_constant_values():
    assert nf.young_constant(3.0, 0.5) == pytest.approx(0.5 ** (1 - 2))
    assert nf.young_constant(1.5, 0.1) == pytest.approx(0.1 ** (1 - 3))
    assert nf.young_constant(2.0, 2.0) == 1.0


@settings(max_examples=60, deadline=None)
@given(st.floats(1.05, 8.0), st.floats(0.0, 1.0), st.floats(1e-6, 1e6))
def test_ellipticity_exact_range(p, kappa, t):
    r = float(nf.ellipticity_ratio(p, kappa, t))
    lo, hi = nf.ellipticity_bounds(p)
    assert lo * (1 - 1e-12) <= r <= hi * (1 + 1e-12)


def test_stated_ellipticity_bound_fails_above_three():
    # the range [min(p-1,1)/2, 2 max(p-1,1)] misses (kappa+t)/(kappa+(p-1)t) -> 1/(p-1)
    p = 6.0
    r = float(nf.ellipticity_ratio(p, 0.0, 1.0))
    assert r == pytest.approx(1 / (p - 1))
    assert r < min(p - 1, 1) / 2


def test_shift_identity_for_family():
    # (phi_a)_b = phi_{a+b} for this family
    p, k, a, b, t = 2.6, 0.1, 0.7, 1.3, 2.2
    num = nf.shift_numeric(lambda s: float(nf.dphi_kernel(p, k, s, a)), b, t)
    np.testing.assert_allclose(num, float(nf.phi_kernel(p, k, t, a + b)), rtol=1e-11)


def test_conjugate_shift_at_p2():
    # phi = t^2/2 is self-conjugate and shift invariant
    np.testing.assert_allclose(nf.conjugate_shifted(2.0, 0.0, 3.0, 1.7), 1.7**2 / 2, rtol=1e-12)


def test_family_validation():
    with pytest.raises(ValueError):
        nf.family(2.0, 1.5)
    with pytest.raises(ValueError):
        nf.family(2.0, 0.0, "bogus")
