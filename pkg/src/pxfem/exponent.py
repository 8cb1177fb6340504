"""Variable exponent fields p: Omega -> (1, inf) and their continuity data."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .errors import DomainError, GeometryError

DOMAIN_TOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Bounded polygonal domain: the unit square or the L-shape.

    The L-shape is the unit square with the quadrant (1/2, 1] x (1/2, 1]
    removed, so the re-entrant corner sits at the centre.
    """

    name: str

    def __post_init__(self):
        if self.name not in ("unit-square", "l-shape"):
            raise ValueError(f"unknown domain {self.name!r}")

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return (0.0, 0.0, 1.0, 1.0)

    @property
    def corners(self) -> np.ndarray:
        if self.name == "unit-square":
            return np.array([[0, 0], [1, 0], [1, 1], [0, 1]], dtype=float)
        return np.array(
            [[0, 0], [1, 0], [1, 0.5], [0.5, 0.5], [0.5, 1], [0, 1]], dtype=float
        )

    @property
    def area(self) -> float:
        return 1.0 if self.name == "unit-square" else 0.75

    def contains(self, x, tol: float = DOMAIN_TOL) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        inside = np.all((x >= -tol) & (x <= 1 + tol), axis=-1)
        if self.name == "l-shape":
            notch = (x[..., 0] > 0.5 + tol) & (x[..., 1] > 0.5 + tol)
            inside &= ~notch
        return inside


UNIT_SQUARE = Domain("unit-square")


@dataclass(frozen=True, eq=False)
class ExponentField:
    """Base class for exponent fields.

    Subclasses implement ``_evaluate`` and may override ``cell_argmin`` with
    an exact minimiser; the default minimises over a barycentric lattice.
    """

    p_minus: float
    p_plus: float
    holder_alpha: float
    holder_const: float
    domain: Domain = field(default=UNIT_SQUARE, kw_only=True)
    lattice_order: int = field(default=4, kw_only=True)

    kind = "user-defined"

    def __post_init__(self):
        if not self.p_minus > 1:
            raise ValueError(f"p_minus must exceed 1, got {self.p_minus}")
        if not np.isfinite(self.p_plus):
            raise ValueError("p_plus must be finite")
        if not 0 < self.holder_alpha <= 1:
            raise ValueError("holder_alpha must lie in (0, 1]")

    def _evaluate(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        """Evaluate p at points of shape (..., 2) without domain checks."""
        return self._evaluate(np.asarray(x, dtype=float))

    @property
    def is_constant(self) -> bool:
        return self.p_minus == self.p_plus

    def describe(self) -> dict:
        return {"kind": self.kind, "domain": self.domain.name}

    def cell_argmin(self, corners: np.ndarray) -> np.ndarray:
        """Minimisers of p over cells with corners of shape (ncells, 3, 2)."""
        bary = lattice_points(self.lattice_order)
        pts = np.einsum("qi,cid->cqd", bary, corners)
        vals = self._evaluate(pts)
        idx = np.argmin(vals, axis=1)
        return pts[np.arange(len(pts)), idx]


def lattice_points(order: int) -> np.ndarray:
    """Barycentric lattice {(i, j, k)/order : i + j + k = order}."""
    pts = [
        (i / order, j / order, (order - i - j) / order)
        for i in range(order + 1)
        for j in range(order + 1 - i)
    ]
    return np.asarray(pts)


@dataclass(frozen=True, eq=False)
class ConstantExponent(ExponentField):
    value: float = 2.0
    kind = "constant"

    def _evaluate(self, x):
        return np.full(x.shape[:-1], self.value, dtype=float)

    def cell_argmin(self, corners):
        return corners[:, 0, :].copy()

    def describe(self):
        return {"kind": self.kind, "value": self.value, "domain": self.domain.name}


@dataclass(frozen=True, eq=False)
class AffineExponent(ExponentField):
    base: float = 2.0
    gradient: tuple = (1.0, 0.0)
    kind = "affine"

    def _evaluate(self, x):
        return self.base + x @ np.asarray(self.gradient, dtype=float)

    def cell_argmin(self, corners):
        vals = self._evaluate(corners)
        idx = np.argmin(vals, axis=1)
        return corners[np.arange(len(corners)), idx]

    def describe(self):
        return {
            "kind": self.kind,
            "base": self.base,
            "gradient": list(self.gradient),
            "domain": self.domain.name,
        }


@dataclass(frozen=True, eq=False)
class SinusoidalExponent(ExponentField):
    """p(x) = base + amplitude * sin(pi * frequency * (d . x)), |d| = 1."""

    base: float = 2.0
    amplitude: float = 0.5
    frequency: float = 1.0
    direction: tuple = (1.0, 0.0)
    kind = "sinusoidal"

    def _evaluate(self, x):
        s = x @ np.asarray(self.direction, dtype=float)
        return self.base + self.amplitude * np.sin(np.pi * self.frequency * s)

    def _profile_min(self, lo: float, hi: float) -> float:
        """Argmin of the 1D profile over [lo, hi] in the s = d.x variable."""
        w = np.pi * self.frequency
        cands = [lo, hi]
        if w != 0:
            # interior critical points of sin(w s)
            k0 = math.ceil((w * lo - np.pi / 2) / np.pi)
            k1 = math.floor((w * hi - np.pi / 2) / np.pi)
            cands += [(np.pi / 2 + k * np.pi) / w for k in range(k0, k1 + 1)]
        cands = np.asarray(cands)
        vals = self.base + self.amplitude * np.sin(w * cands)
        return float(cands[np.argmin(vals)])

    def cell_argmin(self, corners):
        d = np.asarray(self.direction, dtype=float)
        s = corners @ d
        out = np.empty((len(corners), 2))
        for c in range(len(corners)):
            order = np.argsort(s[c])
            s_star = self._profile_min(s[c, order[0]], s[c, order[2]])
            # the level set d.x = s_star meets the edge between the extreme vertices
            a, b = corners[c, order[0]], corners[c, order[2]]
            span = s[c, order[2]] - s[c, order[0]]
            t = 0.0 if span == 0 else (s_star - s[c, order[0]]) / span
            out[c] = a + np.clip(t, 0.0, 1.0) * (b - a)
        return out

    def describe(self):
        return {
            "kind": self.kind,
            "base": self.base,
            "amplitude": self.amplitude,
            "frequency": self.frequency,
            "direction": list(self.direction),
            "domain": self.domain.name,
        }


@dataclass(frozen=True, eq=False)
class CuspExponent(ExponentField):
    """p(x) = base + amplitude * |x - center|^order, Hoelder of that order."""

    base: float = 2.0
    amplitude: float = 0.5
    center: tuple = (0.5, 0.5)
    order: float = 0.5
    kind = "holder-cusp"

    def _evaluate(self, x):
        r = np.linalg.norm(x - np.asarray(self.center, dtype=float), axis=-1)
        return self.base + self.amplitude * r**self.order

    def cell_argmin(self, corners):
        # p increases with the distance to the centre: project it onto the cell
        return closest_points_on_triangles(np.asarray(self.center, float), corners)

    def describe(self):
        return {
            "kind": self.kind,
            "base": self.base,
            "amplitude": self.amplitude,
            "center": list(self.center),
            "order": self.order,
            "domain": self.domain.name,
        }


@dataclass(frozen=True, eq=False)
class TabulatedExponent(ExponentField):
    """Bilinear interpolation of a table on a tensor background grid.

    ``values[i, j]`` is the exponent at ``(xs[i], ys[j])``.
    """

    xs: tuple = ()
    ys: tuple = ()
    values: tuple = ()
    kind = "user-defined"

    def _evaluate(self, x):
        xs, ys = np.asarray(self.xs), np.asarray(self.ys)
        vals = np.asarray(self.values, dtype=float)
        px = np.clip(x[..., 0], xs[0], xs[-1])
        py = np.clip(x[..., 1], ys[0], ys[-1])
        i = np.clip(np.searchsorted(xs, px, side="right") - 1, 0, len(xs) - 2)
        j = np.clip(np.searchsorted(ys, py, side="right") - 1, 0, len(ys) - 2)
        tx = (px - xs[i]) / (xs[i + 1] - xs[i])
        ty = (py - ys[j]) / (ys[j + 1] - ys[j])
        return (
            vals[i, j] * (1 - tx) * (1 - ty)
            + vals[i + 1, j] * tx * (1 - ty)
            + vals[i, j + 1] * (1 - tx) * ty
            + vals[i + 1, j + 1] * tx * ty
        )

    def cell_argmin(self, corners):
        # a bilinear patch has no interior minimum, so the minimiser lies on a
        # triangle edge or a grid-line chord, where p is piecewise quadratic
        grid = (np.asarray(self.xs, float), np.asarray(self.ys, float))
        out = np.empty((len(corners), 2))
        for c, tri in enumerate(np.asarray(corners, float)):
            segs = [(tri[i], tri[(i + 1) % 3]) for i in range(3)]
            for axis in (0, 1):
                segs.extend(_chords(tri, grid[axis], axis))
            cands = [tri]
            for a, b in segs:
                cands.append(self._segment_candidates(a, b, grid))
            pts = np.vstack(cands)
            out[c] = pts[np.argmin(self._evaluate(pts))]
        return out

    def _segment_candidates(self, a, b, grid):
        d = b - a
        ts = [0.0, 1.0]
        for axis in (0, 1):
            if d[axis] != 0:
                t = (grid[axis] - a[axis]) / d[axis]
                ts.extend(t[(t > 0) & (t < 1)])
        ts = np.unique(ts)
        t0, t1 = ts[:-1], ts[1:]
        tm = 0.5 * (t0 + t1)
        f0, fm, f1 = (self._evaluate(a + t[:, None] * d) for t in (t0, tm, t1))
        curv = f0 - 2 * fm + f1
        with np.errstate(divide="ignore", invalid="ignore"):
            s = tm - 0.5 * (t1 - t0) * (f1 - f0) / (2 * curv)
        s = s[(curv > 0) & (s > t0) & (s < t1)]
        t = np.concatenate([ts, s])
        return a + t[:, None] * d

    def describe(self):
        return {
            "kind": self.kind,
            "grid": {"x": list(self.xs), "y": list(self.ys)},
            "values": [list(r) for r in self.values],
            "domain": self.domain.name,
        }


@dataclass(frozen=True, eq=False)
class PiecewiseConstantExponent(ExponentField):
    """Cellwise constant exponent on a triangulation (the frozen exponent)."""

    vertices: np.ndarray = None
    cells: np.ndarray = None
    cell_values: np.ndarray = None
    kind = "piecewise-constant"

    def _evaluate(self, x):
        from matplotlib.tri import Triangulation as _MplTri

        finder = _MplTri(self.vertices[:, 0], self.vertices[:, 1], self.cells).get_trifinder()
        flat = x.reshape(-1, 2)
        idx = finder(flat[:, 0], flat[:, 1])
        if np.any(idx < 0):
            raise DomainError("point outside the triangulation")
        return self.cell_values[idx].reshape(x.shape[:-1])

    def cell_argmin(self, corners):
        return corners[:, 0, :].copy()


# --- constructors -----------------------------------------------------------


def _bbox_corners(domain: Domain) -> np.ndarray:
    return domain.corners


def constant(value: float, domain: Domain = UNIT_SQUARE) -> ConstantExponent:
    return ConstantExponent(
        p_minus=value, p_plus=value, holder_alpha=1.0, holder_const=0.0,
        domain=domain, value=float(value),
    )


def affine(base: float, gradient, domain: Domain = UNIT_SQUARE) -> AffineExponent:
    g = tuple(float(v) for v in gradient)
    vals = base + domain.corners @ np.asarray(g)
    return AffineExponent(
        p_minus=float(vals.min()), p_plus=float(vals.max()), holder_alpha=1.0,
        holder_const=float(np.hypot(*g)), domain=domain, base=float(base), gradient=g,
    )


def sinusoidal(
    base: float = 2.0,
    amplitude: float = 0.5,
    frequency: float = 1.0,
    direction=(1.0, 0.0),
    domain: Domain = UNIT_SQUARE,
) -> SinusoidalExponent:
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    s = domain.corners @ d
    proto = SinusoidalExponent(
        p_minus=2.0, p_plus=2.0, holder_alpha=1.0, holder_const=0.0,
        base=base, amplitude=amplitude, frequency=frequency, direction=tuple(d),
    )
    s_min = proto._profile_min(s.min(), s.max())
    w = np.pi * frequency
    # maximum of the profile = -minimum of the negated profile
    neg = SinusoidalExponent(
        p_minus=2.0, p_plus=2.0, holder_alpha=1.0, holder_const=0.0,
        base=-base, amplitude=-amplitude, frequency=frequency, direction=tuple(d),
    )
    s_max = neg._profile_min(s.min(), s.max())
    return SinusoidalExponent(
        p_minus=float(base + amplitude * np.sin(w * s_min)),
        p_plus=float(base + amplitude * np.sin(w * s_max)),
        holder_alpha=1.0,
        holder_const=float(abs(amplitude) * w),
        domain=domain,
        base=float(base),
        amplitude=float(amplitude),
        frequency=float(frequency),
        direction=tuple(float(v) for v in d),
    )


def holder_cusp(
    base: float = 2.0,
    amplitude: float = 0.5,
    center=(0.5, 0.5),
    order: float = 0.5,
    domain: Domain = UNIT_SQUARE,
) -> CuspExponent:
    if amplitude < 0:
        raise ValueError("cusp amplitude must be non-negative")
    c = np.asarray(center, dtype=float)
    rmax = np.max(np.linalg.norm(domain.corners - c, axis=1))
    rmin = 0.0 if domain.contains(c) else _distance_to_polygon(c, domain.corners)
    return CuspExponent(
        p_minus=float(base + amplitude * rmin**order),
        p_plus=float(base + amplitude * rmax**order),
        holder_alpha=float(order),
        # | |x|^a - |y|^a | <= |x - y|^a for a in (0, 1]
        holder_const=float(amplitude),
        domain=domain,
        base=float(base),
        amplitude=float(amplitude),
        center=tuple(float(v) for v in c),
        order=float(order),
    )


def tabulated(xs, ys, values, domain: Domain = UNIT_SQUARE) -> TabulatedExponent:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    vals = np.asarray(values, dtype=float)
    if vals.shape != (len(xs), len(ys)):
        raise ValueError(f"table shape {vals.shape} does not match grid {(len(xs), len(ys))}")
    if len(xs) < 2 or len(ys) < 2 or np.any(np.diff(xs) <= 0) or np.any(np.diff(ys) <= 0):
        raise ValueError("background grid must be strictly increasing with >= 2 nodes")
    dx = np.abs(np.diff(vals, axis=0)) / np.diff(xs)[:, None]
    dy = np.abs(np.diff(vals, axis=1)) / np.diff(ys)[None, :]
    lip = float(np.hypot(dx.max(), dy.max()))
    return TabulatedExponent(
        p_minus=float(vals.min()), p_plus=float(vals.max()), holder_alpha=1.0,
        holder_const=lip, domain=domain,
        xs=tuple(xs), ys=tuple(ys), values=tuple(tuple(r) for r in vals),
    )


def piecewise_constant(vertices, cells, cell_values, domain: Domain = UNIT_SQUARE):
    vals = np.asarray(cell_values, dtype=float)
    return PiecewiseConstantExponent(
        p_minus=float(vals.min()), p_plus=float(vals.max()),
        holder_alpha=1.0, holder_const=float("inf"), domain=domain,
        vertices=np.asarray(vertices), cells=np.asarray(cells), cell_values=vals,
    )


def from_config(spec: dict, domain: Domain = UNIT_SQUARE) -> ExponentField:
    """Build a field from a ``{"kind": ..., **parameters}`` mapping."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind == "constant":
        return constant(spec["value"], domain)
    if kind == "affine":
        return affine(spec.get("base", 2.0), spec["gradient"], domain)
    if kind == "sinusoidal":
        return sinusoidal(domain=domain, **spec)
    if kind == "holder-cusp":
        return holder_cusp(domain=domain, **spec)
    if kind == "user-defined":
        return tabulated(spec["grid"]["x"], spec["grid"]["y"], spec["values"], domain)
    raise ValueError(f"unknown exponent kind {kind!r}")


# --- operations ---------------------------------------------------------------


def eval_exponent(p: ExponentField, x) -> float | np.ndarray:
    x = np.asarray(x, dtype=float)
    if not np.all(p.domain.contains(x)):
        raise DomainError(f"point outside {p.domain.name}: {x.tolist()}")
    out = p(x)
    return float(out) if out.ndim == 0 else out


def _cell_area(corners: np.ndarray) -> np.ndarray:
    e1 = corners[..., 1, :] - corners[..., 0, :]
    e2 = corners[..., 2, :] - corners[..., 0, :]
    return 0.5 * (e1[..., 0] * e2[..., 1] - e1[..., 1] * e2[..., 0])


def exponent_range_on_cell(p: ExponentField, cell) -> tuple[float, float, np.ndarray]:
    """Return (p_K^-, p_K^+, x_K) for a single triangle given by its corners.

    ``p_K^+`` is taken over the same sample lattice plus the minimiser, which is
    exact for the affine and constant kinds.
    """
    corners = np.asarray(cell, dtype=float).reshape(1, 3, 2)
    if abs(_cell_area(corners)[0]) <= 1e-300:
        raise GeometryError("degenerate cell")
    x_k = p.cell_argmin(corners)[0]
    p_lo = float(p(x_k))
    sample = np.einsum("qi,id->qd", lattice_points(max(p.lattice_order, 8)), corners[0])
    p_hi = float(max(p(sample).max(), p_lo))
    return p_lo, p_hi, x_k


def closest_points_on_triangles(z: np.ndarray, corners: np.ndarray) -> np.ndarray:
    """Closest point to ``z`` in each closed triangle of (ncells, 3, 2)."""
    out = np.empty((len(corners), 2))
    for c, (a, b, d) in enumerate(corners):
        lam = _barycentric(z, a, b, d)
        if np.all(lam >= 0):
            out[c] = z
            continue
        best, best_d = None, np.inf
        for u, v in ((a, b), (b, d), (d, a)):
            e = v - u
            t = np.clip(np.dot(z - u, e) / np.dot(e, e), 0.0, 1.0)
            q = u + t * e
            dist = np.linalg.norm(z - q)
            if dist < best_d:
                best, best_d = q, dist
        out[c] = best
    return out


def _chords(tri, lines, axis):
    """Segments where the lines x_axis = const cut the triangle."""
    out = []
    for v in lines:
        hits = []
        for u, w in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            du = w[axis] - u[axis]
            if du == 0:
                continue
            t = (v - u[axis]) / du
            if 0.0 <= t <= 1.0:
                hits.append(u + t * (w - u))
        if len(hits) >= 2:
            hits = np.asarray(hits)
            k = hits[:, 1 - axis]
            lo, hi = hits[np.argmin(k)], hits[np.argmax(k)]
            if np.any(lo != hi):
                out.append((lo, hi))
    return out


def _barycentric(z, a, b, c):
    m = np.array([[a[0] - c[0], b[0] - c[0]], [a[1] - c[1], b[1] - c[1]]])
    l1, l2 = np.linalg.solve(m, z - c)
    return np.array([l1, l2, 1 - l1 - l2])


def _distance_to_polygon(z, corners):
    d = np.inf
    for u, v in zip(corners, np.roll(corners, -1, axis=0)):
        e = v - u
        t = np.clip(np.dot(z - u, e) / np.dot(e, e), 0.0, 1.0)
        d = min(d, np.linalg.norm(z - (u + t * e)))
    return d


def sample_domain(domain: Domain, samples: int, seed: int = 0) -> np.ndarray:
    """Deterministic low-discrepancy points in the domain.

    The first ``k`` points returned for ``samples=n`` coincide with the points
    returned for ``samples=k``, so probes over prefixes are monotone.
    """
    sampler = qmc.Halton(d=2, scramble=True, seed=seed)
    out = np.empty((0, 2))
    while len(out) < samples:
        batch = sampler.random(max(2 * (samples - len(out)), 16))
        out = np.vstack([out, batch[domain.contains(batch)]])
    return out[:samples]


def holder_probe(p: ExponentField, domain: Domain | None = None, samples: int = 256, seed: int = 0) -> float:
    """Max over sampled pairs of |p(x) - p(y)| / |x - y|^alpha.

    The sample includes the cusp centre for ``holder-cusp`` fields, where the
    quotient is largest.
    """
    if samples < 2:
        raise ValueError("need at least two samples")
    domain = domain or p.domain
    pts = sample_domain(domain, samples, seed)
    if isinstance(p, CuspExponent) and domain.contains(np.asarray(p.center)):
        pts = np.vstack([np.asarray(p.center)[None, :], pts[:-1]]) if samples > 2 else pts
    vals = p(pts)
    best = 0.0
    for i in range(1, len(pts)):
        d = np.linalg.norm(pts[:i] - pts[i], axis=1)
        ok = d > 0
        if np.any(ok):
            q = np.abs(vals[:i][ok] - vals[i]) / d[ok] ** p.holder_alpha
            best = max(best, float(q.max()))
    return best


def log_holder_estimate(p: ExponentField, samples: int = 256, seed: int = 0) -> float:
    """Empirical log-Hoelder constant of 1/p over sampled pairs (reporting only)."""
    pts = sample_domain(p.domain, samples, seed)
    inv = 1.0 / p(pts)
    best = 0.0
    for i in range(1, len(pts)):
        d = np.linalg.norm(pts[:i] - pts[i], axis=1)
        ok = d > 0
        if np.any(ok):
            q = np.abs(inv[:i][ok] - inv[i]) * np.log(np.e + 1.0 / d[ok])
            best = max(best, float(q.max()))
    return best
