"""Variable exponent modulars, Luxemburg norms and key-estimate probes.

Functions live on a midpoint lattice over a square cube Q or a domain. All
probes use the plain power N-function psi(x, t) = t^p(x) and its shifts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import AdmissibilityError
from .exponent import Domain, ExponentField
from .nfunction import phi_kernel

DEFAULT_RESOLUTION = 64
DEFAULT_M = 2.0


@dataclass(frozen=True)
class Grid:
    """Midpoint lattice: ``points`` (n, 2) with cell measures ``weights`` (n,)."""

    points: np.ndarray
    weights: np.ndarray
    side: float | None = None  # cube side length, None for a domain
    corner: tuple | None = None

    def __post_init__(self):
        if len(self.points) != len(self.weights):
            raise ValueError("points and weights differ in length")
        if np.any(self.weights <= 0):
            raise ValueError("cell measures must be positive")

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    @classmethod
    def cube(cls, corner, side: float, n: int = DEFAULT_RESOLUTION) -> "Grid":
        corner = np.asarray(corner, dtype=float)
        if side <= 0:
            raise ValueError("side must be positive")
        c = (np.arange(n) + 0.5) / n * side
        X, Y = np.meshgrid(corner[0] + c, corner[1] + c, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        return cls(pts, np.full(n * n, (side / n) ** 2), side, tuple(corner))

    @classmethod
    def domain(cls, domain: Domain, n: int = DEFAULT_RESOLUTION) -> "Grid":
        x0, y0, x1, y1 = domain.bbox
        cx = x0 + (np.arange(n) + 0.5) / n * (x1 - x0)
        cy = y0 + (np.arange(n) + 0.5) / n * (y1 - y0)
        X, Y = np.meshgrid(cx, cy, indexing="ij")
        pts = np.column_stack([X.ravel(), Y.ravel()])
        pts = pts[domain.contains(pts)]
        w = (x1 - x0) * (y1 - y0) / n**2
        return cls(pts, np.full(len(pts), w))


@dataclass(frozen=True)
class GridFunction:
    """Values (and optionally gradients) of a scalar or vector function on a grid."""

    grid: Grid
    values: np.ndarray
    gradients: np.ndarray | None = None

    def __post_init__(self):
        if len(self.values) != len(self.grid.points):
            raise ValueError("value count does not match the grid")

    @classmethod
    def from_callable(cls, grid: Grid, f, grad=None) -> "GridFunction":
        vals = np.asarray(f(grid.points), dtype=float)
        g = None if grad is None else np.asarray(grad(grid.points), dtype=float)
        return cls(grid, vals, g)

    def magnitude(self) -> np.ndarray:
        v = self.values
        return np.abs(v) if v.ndim == 1 else np.sqrt(np.sum(v.reshape(len(v), -1) ** 2, axis=1))

    def gradient_magnitude(self) -> np.ndarray:
        if self.gradients is None:
            raise ValueError("function has no gradient data")
        g = self.gradients.reshape(len(self.gradients), -1)
        return np.sqrt(np.sum(g * g, axis=1))

    def mean(self) -> np.ndarray:
        w = self.grid.weights
        return np.tensordot(w, self.values, axes=1) / w.sum()


def modular(f: GridFunction, p: ExponentField) -> float:
    """int |f(x)|^p(x) dx by lattice quadrature."""
    pv = p(f.grid.points)
    return float(np.sum(f.grid.weights * f.magnitude() ** pv))


def luxemburg_norm(f: GridFunction, p: ExponentField) -> float:
    """inf{lam > 0 : modular(f / lam) <= 1}; 0 for f = 0."""
    t = f.magnitude()
    if not np.any(t > 0):
        return 0.0
    pv = p(f.grid.points)
    w = f.grid.weights
    nz = t > 0
    t, pv, w = t[nz], pv[nz], w[nz]
    logt = np.log(t)

    def g(loglam):
        # log of the modular of f / exp(loglam), minus log 1
        e = pv * (logt - loglam) + np.log(w)
        emax = e.max()
        return emax + np.log(np.sum(np.exp(e - emax)))

    lo, hi = logt.min() - 1.0, logt.max() + 1.0
    while g(lo) < 0:
        lo -= 10.0
    while g(hi) > 0:
        hi += 10.0
    root = brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(np.exp(root))


# --- key-estimate probes -----------------------------------------------------------


def _psi_a(p_vals, t, a):
    """Shifted plain power N-function: a = 0 gives t^p exactly."""
    if np.all(np.asarray(a) == 0):
        return np.asarray(t, float) ** p_vals
    return phi_kernel(p_vals, 0.0, t, a, "plain-power")


def _cube_checks(Q: Grid):
    if Q.side is None:
        raise ValueError("probe requires a cube grid")
    if Q.side > 1 + 1e-14:
        raise AdmissibilityError(f"cube side {Q.side} exceeds 1")


def key_estimate_probe(p: ExponentField, Q: Grid, f: GridFunction, m: float = DEFAULT_M) -> float:
    """Smallest c1 with (avg_Q |f|)^p(x) <= c1 (avg_Q |f|^p(y) + |Q|^m) on the lattice."""
    return shifted_key_probe(p, Q, f, 0.0, m)


def shifted_key_probe(p: ExponentField, Q: Grid, f: GridFunction, a: float, m: float = DEFAULT_M) -> float:
    """Smallest c with psi_a(x, avg_Q |f|) <= c (avg_Q psi_a(y, |f|) + |Q|^m) on the lattice."""
    _cube_checks(Q)
    if a < 0:
        raise ValueError("shift must be non-negative")
    vol = Q.measure
    t = f.magnitude()
    mean = float(np.sum(Q.weights * t) / vol)
    bound = max(1.0, vol ** (-m))
    if a + mean > bound * (1 + 1e-12):
        raise AdmissibilityError(f"a + mean |f| = {a + mean:.6g} exceeds {bound:.6g}")
    pv = p(Q.points)
    lhs = _psi_a(pv, np.full_like(pv, mean), a).max()
    rhs = float(np.sum(Q.weights * _psi_a(pv, t, a)) / vol) + vol**m
    return float(lhs / rhs)


def poincare_shift_probe(p: ExponentField, Q: Grid, u: GridFunction, a: float, m: float = DEFAULT_M) -> float:
    """Smallest c with int_Q psi_a(|u - <u>|/l(Q)) <= c (int_Q psi_a(|grad u|) + |Q|^m)."""
    _cube_checks(Q)
    if a < 0:
        raise ValueError("shift must be non-negative")
    vol = Q.measure
    g = u.gradient_magnitude()
    bound = max(1.0, vol ** (-m))
    if a + float(np.sum(Q.weights * g) / vol) > bound * (1 + 1e-12):
        raise AdmissibilityError("a + mean |grad u| exceeds max(1, |Q|^-m)")
    dev = u.values - u.mean()
    dev = np.abs(dev) if dev.ndim == 1 else np.sqrt(np.sum(dev.reshape(len(dev), -1) ** 2, axis=1))
    pv = p(Q.points)
    lhs = float(np.sum(Q.weights * _psi_a(pv, dev / Q.side, a)))
    if lhs == 0.0:
        return 0.0
    rhs = float(np.sum(Q.weights * _psi_a(pv, g, a))) + vol**m
    return lhs / rhs


# --- dyadic sweeps -------------------------------------------------------------------


@dataclass
class SweepResult:
    probe: str
    ks: list = field(default_factory=list)
    constants: list = field(default_factory=list)

    @property
    def growth(self) -> float:
        """max over levels divided by the coarsest level value."""
        return max(self.constants) / self.constants[0]

    def rows(self):
        for k, c in zip(self.ks, self.constants):
            yield {"probe": self.probe, "k": k, "constant": c}


def dyadic_cube(anchor, k: int, n: int = DEFAULT_RESOLUTION) -> Grid:
    """Dyadic cube of side 2^-k in [0,1]^2 containing ``anchor``."""
    side = 2.0**-k
    anchor = np.clip(np.asarray(anchor, float), 0.0, 1.0 - 1e-15)
    return Grid.cube(np.floor(anchor / side) * side, side, n)


def _random_profile(rng, Q: Grid):
    """Positive oscillating profile with unit-order mean."""
    freq = rng.integers(1, 5, size=2)
    phase = rng.uniform(0, 2 * np.pi)
    amp = rng.uniform(0.0, 0.95)
    y = (Q.points - np.asarray(Q.corner)) / Q.side
    return 1.0 + amp * np.sin(2 * np.pi * (y @ freq) + phase)


def _scales(rng, cap, draws):
    s = np.exp(rng.uniform(np.log(1e-3), np.log(cap), size=draws))
    s[0] = cap  # the largest admissible size is where the log-Hoelder mechanism bites
    if draws > 1:
        s[1] = 1.0
    return s


def key_estimate_sweep(p: ExponentField, anchor=(0.0, 0.0), ks=range(1, 7), draws: int = 16,
                       seed: int = 0, m: float = DEFAULT_M, n: int = DEFAULT_RESOLUTION,
                       shift: bool = False) -> SweepResult:
    """Max probe constant per dyadic level over seeded admissible draws."""
    rng = np.random.default_rng(seed)
    res = SweepResult("shifted_key" if shift else "key_estimate")
    for k in ks:
        Q = dyadic_cube(anchor, k, n)
        cap = max(1.0, Q.measure ** (-m))
        best = 0.0
        for s in _scales(rng, 0.999 * cap, draws):
            prof = _random_profile(rng, Q)
            vals = s * prof / (np.sum(Q.weights * prof) / Q.measure)
            if shift:
                frac = rng.uniform(0, 1)
                a = frac * s
                vals = vals * (1 - frac)
            else:
                a = 0.0
            best = max(best, shifted_key_probe(p, Q, GridFunction(Q, vals), a, m))
        res.ks.append(int(k))
        res.constants.append(best)
    return res


def poincare_sweep(p: ExponentField, anchor=(0.0, 0.0), ks=range(1, 7), draws: int = 16, seed: int = 0,
                   m: float = DEFAULT_M, n: int = DEFAULT_RESOLUTION, shifts=(0.0,)) -> SweepResult:
    """Poincare probe per dyadic level with seeded trigonometric u."""
    rng = np.random.default_rng(seed)
    res = SweepResult("poincare_shift")
    for k in ks:
        Q = dyadic_cube(anchor, k, n)
        cap = max(1.0, Q.measure ** (-m))
        best = 0.0
        for s in _scales(rng, 0.5 * cap, draws):
            freq = rng.integers(1, 4, size=2).astype(float)
            phase = rng.uniform(0, 2 * np.pi)
            w = 2 * np.pi * freq / Q.side
            y = Q.points - np.asarray(Q.corner)
            arg = y @ w + phase
            amp = s / np.linalg.norm(w)
            vals = amp * np.sin(arg)
            grads = amp * np.cos(arg)[:, None] * w[None, :]
            u = GridFunction(Q, vals, grads)
            for a_frac in shifts:
                best = max(best, poincare_shift_probe(p, Q, u, a_frac * s, m))
        res.ks.append(int(k))
        res.constants.append(best)
    return res
