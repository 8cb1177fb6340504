"""The x-dependent N-function phi(x, t) = int_0^t (kappa + s)^(p(x)-2) s ds.

Two variants share one set of kernels:

* ``integral``: phi(t) = int_0^t (kappa + s)^(p-2) s ds,
* ``plain-power``: psi(t) = t^p, which equals p times the integral variant
  with kappa = 0.

Shifts follow rho_a(t) = int_0^t rho'(a + tau) / (a + tau) * tau dtau. For
this family the shift only moves kappa: phi_a = (kappa + a)-version of phi.

Kernels take exponent *values* ``p`` (arrays) so that the finite element code
can feed either p at quadrature points or cellwise frozen exponents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import SingularFluxError
from .exponent import ExponentField, constant

VARIANTS = ("integral", "plain-power")
_SERIES_CUTOFF = 0.1
_SERIES_TERMS = 30
_LARGE_L = 20.0


@dataclass(frozen=True)
class PhiFamily:
    exponent: ExponentField
    kappa: float = 0.0
    variant: str = "integral"

    def __post_init__(self):
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")

    def p_at(self, x) -> np.ndarray:
        return self.exponent(np.asarray(x, dtype=float))

    @property
    def kappa_eff(self) -> float:
        return self.kappa if self.variant == "integral" else 0.0

    def with_kappa(self, kappa: float) -> "PhiFamily":
        return PhiFamily(self.exponent, kappa, self.variant)


def family(p: float | ExponentField, kappa: float = 0.0, variant: str = "integral") -> PhiFamily:
    """Convenience constructor accepting a constant exponent value."""
    if not isinstance(p, ExponentField):
        p = constant(float(p))
    return PhiFamily(p, kappa, variant)


# --- scalar kernels -------------------------------------------------------------


def _scale(p, variant):
    return p if variant == "plain-power" else np.ones_like(p)


def _kappa(kappa, variant):
    return 0.0 if variant == "plain-power" else kappa


def shift_integral(p, c, t):
    """G(c, t) = int_0^t (c + tau)^(p-2) tau dtau, vectorised, c >= 0."""
    p, c, t = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (p, c, t)))
    out = np.zeros(p.shape)
    pos_c = c > 0
    zero_c = ~pos_c & (t > 0)
    out[zero_c] = t[zero_c] ** p[zero_c] / p[zero_c]

    m = pos_c & (t > 0)
    if np.any(m):
        pm, cm, tm = p[m], c[m], t[m]
        L = np.log1p(tm / cm)
        with np.errstate(over="ignore", invalid="ignore"):
            direct = np.expm1(pm * L) / pm - np.expm1((pm - 1) * L) / (pm - 1)
        small = L < _SERIES_CUTOFF
        if np.any(small):
            Ls, ps = L[small], pm[small]
            acc = np.zeros_like(Ls)
            term_pow = Ls.copy()  # L^k / k!
            for k in range(2, _SERIES_TERMS):
                term_pow = term_pow * Ls / k
                acc += (ps ** (k - 1) - (ps - 1) ** (k - 1)) * term_pow
            direct[small] = acc
        with np.errstate(over="ignore", invalid="ignore"):
            res = cm**pm * direct
        # t >> c: expanded form, avoiding overflow of exp(p L) against underflow of c^p
        big = L > _LARGE_L
        if np.any(big):
            pb, cb, tb = pm[big], cm[big], tm[big]
            s = cb + tb
            res[big] = (s**pb - cb**pb) / pb - cb * (s ** (pb - 1) - cb ** (pb - 1)) / (pb - 1)
        out[m] = res
    return out


def phi_kernel(p, kappa, t, a=0.0, variant="integral"):
    """phi_a(t) for exponent values ``p``."""
    t = np.asarray(t, dtype=float)
    p = np.asarray(p, dtype=float)
    return _scale(p, variant) * shift_integral(p, _kappa(kappa, variant) + np.asarray(a, float), t)


def dphi_kernel(p, kappa, t, a=0.0, variant="integral"):
    """(phi_a)'(t) = s * (kappa + a + t)^(p-2) * t."""
    p, t = np.broadcast_arrays(np.asarray(p, float), np.asarray(t, float))
    c = _kappa(kappa, variant) + np.asarray(a, float)
    base = c + t
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(t > 0, base ** (p - 2) * t, 0.0)
    return _scale(p, variant) * val


def ddphi_kernel(p, kappa, t, a=0.0, variant="integral"):
    """(phi_a)''(t) = s * (c + t)^(p-3) * (c + (p-1) t), c = kappa + a.

    At c + t = 0 this is +inf for p < 2, s for p = 2 and 0 for p > 2.
    """
    p, t = np.broadcast_arrays(np.asarray(p, float), np.asarray(t, float))
    c = np.broadcast_to(_kappa(kappa, variant) + np.asarray(a, float), p.shape)
    base = c + t
    with np.errstate(divide="ignore", invalid="ignore"):
        val = base ** (p - 3) * (c + (p - 1) * t)
    origin = base == 0
    if np.any(origin):
        val = np.where(origin, np.where(p < 2, np.inf, np.where(p == 2, 1.0, 0.0)), val)
    return _scale(p, variant) * val


def flux_weight(p, kappa, t, variant="integral"):
    """phi'(t) / t; finite except at t = 0 when kappa = 0 and p < 2."""
    p, t = np.broadcast_arrays(np.asarray(p, float), np.asarray(t, float))
    with np.errstate(divide="ignore"):
        return _scale(p, variant) * (_kappa(kappa, variant) + t) ** (p - 2)


def flux_coefficients(p, kappa, t, variant="integral"):
    """(w, c) with DA(xi) = w * Id + c * (xi/|xi|) (x) (xi/|xi|), t = |xi|.

    ``c = s (p-2) (kappa + t)^(p-3) t``; both are finite whenever kappa + t > 0.
    """
    p, t = np.broadcast_arrays(np.asarray(p, float), np.asarray(t, float))
    k = _kappa(kappa, variant)
    base = k + t
    with np.errstate(divide="ignore", invalid="ignore"):
        w = base ** (p - 2)
        c = np.where(t > 0, (p - 2) * base ** (p - 3) * t, 0.0)
    s = _scale(p, variant)
    return s * w, s * c


def _frobenius(xi):
    return np.sqrt(np.sum(xi * xi, axis=(-2, -1)))


def _as_tensor(xi):
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 1:
        return xi[None, :], True
    return xi, False


def flux_A_kernel(p, kappa, xi, variant="integral"):
    """A(xi) = phi'(|xi|)/|xi| * xi for tensors of shape (..., N, n)."""
    t = _frobenius(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = flux_weight(p, kappa, t, variant)
    w = np.where(t > 0, w, 0.0)
    return w[..., None, None] * xi


def flux_F_kernel(p, kappa, xi, variant="integral"):
    """F(xi) = sqrt(phi'(|xi|)/|xi|) * xi."""
    t = _frobenius(xi)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = flux_weight(p, kappa, t, variant)
    w = np.where(t > 0, np.sqrt(w), 0.0)
    return w[..., None, None] * xi


# --- operations on a family at a point ----------------------------------------


def _check_nonneg(name, v):
    if np.any(np.asarray(v) < 0):
        raise ValueError(f"{name} must be non-negative")


def _scalarize(v):
    v = np.asarray(v)
    return float(v) if v.ndim == 0 else v


def phi(fam: PhiFamily, x, t):
    _check_nonneg("t", t)
    return _scalarize(phi_kernel(fam.p_at(x), fam.kappa, t, 0.0, fam.variant))


def phi_shifted(fam: PhiFamily, x, a, t):
    _check_nonneg("a", a)
    _check_nonneg("t", t)
    return _scalarize(phi_kernel(fam.p_at(x), fam.kappa, t, a, fam.variant))


def phi_prime(fam: PhiFamily, x, t, a=0.0):
    return _scalarize(dphi_kernel(fam.p_at(x), fam.kappa, t, a, fam.variant))


def phi_second(fam: PhiFamily, x, t, a=0.0):
    return _scalarize(ddphi_kernel(fam.p_at(x), fam.kappa, t, a, fam.variant))


def conjugate_kernel(p, kappa, t, a=0.0, variant="integral", rtol=1e-13):
    """(phi_a)^*(t) = sup_s (s t - phi_a(s)).

    Closed form when kappa + a = 0 (pure power); otherwise the maximiser
    solves (phi_a)'(s) = t and is located by Brent's method.
    """
    p, t, a = np.broadcast_arrays(np.asarray(p, float), np.asarray(t, float), np.asarray(a, float))
    out = np.zeros(p.shape)
    c = _kappa(kappa, variant) + a
    s_scale = _scale(p, variant)
    for idx in np.ndindex(p.shape):
        ti, pi, ci, si = t[idx], p[idx], c[idx], s_scale[idx]
        if ti == 0:
            continue
        if ci == 0:
            s_star = (ti / si) ** (1.0 / (pi - 1.0))
            out[idx] = s_star * ti * (1.0 - 1.0 / pi)
            continue

        def g(s):
            return si * (ci + s) ** (pi - 2) * s - ti

        hi = max(1.0, ti)
        while g(hi) < 0:
            hi *= 2.0
        s_star = optimize.brentq(g, 0.0, hi, xtol=1e-300, rtol=rtol, maxiter=500)
        out[idx] = s_star * ti - si * shift_integral(pi, ci, s_star)
    return out


def phi_conjugate(fam: PhiFamily, x, a, t):
    _check_nonneg("a", a)
    _check_nonneg("t", t)
    return _scalarize(conjugate_kernel(fam.p_at(x), fam.kappa, t, a, fam.variant))


def inverse_dphi(p, kappa, u, a=0.0, variant="integral"):
    """(phi_a')^{-1}(u) for scalar arguments."""
    if u == 0:
        return 0.0
    c = _kappa(kappa, variant) + a
    s = p if variant == "plain-power" else 1.0
    if c == 0:
        return (u / s) ** (1.0 / (p - 1.0))

    def g(r):
        return s * (c + r) ** (p - 2) * r - u

    hi = max(1.0, u)
    while g(hi) < 0:
        hi *= 2.0
    return optimize.brentq(g, 0.0, hi, xtol=1e-300, rtol=1e-14, maxiter=500)


def conjugate_shifted(p, kappa, b, t, variant="integral"):
    """(phi^*)_b(t): shift of the conjugate, for scalar arguments.

    With sigma = (phi')^{-1}(u) the defining integral becomes
    int sigma/phi'(sigma) (phi'(sigma) - b) phi''(sigma) dsigma over
    [(phi')^{-1}(b), (phi')^{-1}(b + t)], which avoids nested inversions.
    """
    if t == 0:
        return 0.0
    lo = inverse_dphi(p, kappa, b, 0.0, variant)
    hi = inverse_dphi(p, kappa, b + t, 0.0, variant)

    def integrand(sig):
        d1 = float(dphi_kernel(p, kappa, sig, 0.0, variant))
        if d1 == 0:
            return 0.0
        d2 = float(ddphi_kernel(p, kappa, sig, 0.0, variant))
        return sig / d1 * (d1 - b) * d2

    val, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def shift_numeric(deriv, a: float, t: float) -> float:
    """Shift of an arbitrary N-function given its derivative, by quadrature."""
    if t == 0:
        return 0.0

    def integrand(tau):
        s = a + tau
        return 0.0 if s == 0 else deriv(s) / s * tau

    val, _ = integrate.quad(integrand, 0.0, t, epsabs=0.0, epsrel=1e-12, limit=200)
    return val


def flux_A(fam: PhiFamily, x, xi):
    xi_t, squeeze = _as_tensor(xi)
    out = flux_A_kernel(fam.p_at(x), fam.kappa, xi_t, fam.variant)
    return out[0] if squeeze else out


def flux_F(fam: PhiFamily, x, xi):
    xi_t, squeeze = _as_tensor(xi)
    out = flux_F_kernel(fam.p_at(x), fam.kappa, xi_t, fam.variant)
    return out[0] if squeeze else out


def flux_A_jacobian(fam: PhiFamily, x, xi):
    """DA(xi) as an array of shape (..., N, n, N, n).

    For a single vector ``xi`` of shape (n,) the result has shape (n, n).
    """
    xi_t, squeeze = _as_tensor(xi)
    p = np.asarray(fam.p_at(x), dtype=float)
    t = _frobenius(xi_t)
    k = fam.kappa_eff
    if np.any((k + t == 0) & (p < 2)):
        raise SingularFluxError("DA is unbounded at xi = 0 for kappa = 0 and p < 2; regularise kappa")
    w, c = flux_coefficients(p, fam.kappa, t, fam.variant)
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(t[..., None, None] > 0, xi_t / t[..., None, None], 0.0)
    N, n = xi_t.shape[-2:]
    eye = np.einsum("ij,kl->ikjl", np.eye(N), np.eye(n))
    out = w[..., None, None, None, None] * eye + c[..., None, None, None, None] * np.einsum(
        "...ij,...kl->...ijkl", unit, unit
    )
    if squeeze:
        return out[0, :, 0, :]
    return out


def hammer_ratios_kernel(p, kappa, P, Q, variant="integral"):
    """The three hammer ratios for batches of tensors (..., N, n)."""
    diff = P - Q
    dist = _frobenius(diff)
    if np.any(dist == 0):
        raise ValueError("hammer ratios need P != Q")
    mono = np.sum(
        (flux_A_kernel(p, kappa, P, variant) - flux_A_kernel(p, kappa, Q, variant)) * diff,
        axis=(-2, -1),
    )
    fdiff = flux_F_kernel(p, kappa, P, variant) - flux_F_kernel(p, kappa, Q, variant)
    r1 = mono / np.sum(fdiff * fdiff, axis=(-2, -1))
    r2 = mono / phi_kernel(p, kappa, dist, _frobenius(P), variant)
    r3 = mono / (ddphi_kernel(p, kappa, _frobenius(P) + _frobenius(Q), 0.0, variant) * dist**2)
    return r1, r2, r3


def hammer_ratios(fam: PhiFamily, x, P, Q):
    """Return (r1, r2, r3) for a single pair of tensors (or vectors)."""
    P_t, _ = _as_tensor(P)
    Q_t, _ = _as_tensor(Q)
    r = hammer_ratios_kernel(fam.p_at(x), fam.kappa, P_t, Q_t, fam.variant)
    return tuple(float(v) for v in r)


def young_constant(p: float, delta: float) -> float:
    """c_delta with st <= delta phi_a(s) + c_delta (phi_a)^*(t).

    Young's inequality for delta * phi_a gives st <= delta phi_a(s) +
    delta (phi_a)^*(t / delta). The conjugate has upper index q = max(2, p'),
    i.e. (phi_a)^*(lam t) <= lam^q (phi_a)^*(t) for lam >= 1, hence
    c_delta = delta^(1 - q).
    """
    if delta >= 1:
        return 1.0
    q = max(2.0, p / (p - 1.0))
    return delta ** (1.0 - q)


def young_gap(fam: PhiFamily, x, a, s, t, delta):
    """delta * phi_a(s) + c_delta * (phi_a)^*(t) - s t (should be >= 0)."""
    _check_nonneg("s", s)
    _check_nonneg("t", t)
    if delta <= 0:
        raise ValueError("delta must be positive")
    p = np.asarray(fam.p_at(x), dtype=float)
    s_, t_, p_ = np.broadcast_arrays(np.asarray(s, float), np.asarray(t, float), p)
    cd = np.vectorize(young_constant)(p_, delta)
    gap = (
        delta * phi_kernel(p_, fam.kappa, s_, a, fam.variant)
        + cd * conjugate_kernel(p_, fam.kappa, t_, a, fam.variant)
        - s_ * t_
    )
    return _scalarize(gap)


def ellipticity_ratio(p, kappa, t, variant="integral"):
    """phi'(t) / (t phi''(t)) = (kappa + t) / (kappa + (p-1) t)."""
    return dphi_kernel(p, kappa, t, 0.0, variant) / (np.asarray(t) * ddphi_kernel(p, kappa, t, 0.0, variant))


def ellipticity_bounds(p: float) -> tuple[float, float]:
    """Exact range of the ellipticity ratio over t > 0 and kappa >= 0."""
    r = 1.0 / (p - 1.0)
    return min(1.0, r), max(1.0, r)


def conjugate_exponent(p: float) -> float:
    return p / (p - 1.0) if p != 1 else math.inf
