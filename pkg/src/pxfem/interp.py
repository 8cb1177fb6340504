"""Clement-type quasi-interpolation onto continuous P1 and its Orlicz probes.

Each vertex value is the value at that vertex of the L2 projection of v onto
affine functions over the vertex patch. The construction is linear,
reproduces affine functions and is locally L1-stable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AdmissibilityError
from .fem import FeFunction, FeSpace
from .functions import FieldFunction
from .nfunction import PhiFamily, phi_kernel
from .quadrature import TriangleRule, get_rule

PROBE_DEGREE = 7


@dataclass(frozen=True)
class Interpolator:
    space: FeSpace
    preserve_boundary: bool = False
    degree: int = PROBE_DEGREE


def sample(v, space: FeSpace, rule: TriangleRule):
    """Values (nc, nq, N) and gradients (nc, nq, N, 2) of v at the rule's points."""
    mesh = space.mesh
    if isinstance(v, FeFunction):
        if v.space.mesh is not mesh and v.space.mesh != mesh:
            raise ValueError("FeFunction lives on another mesh")
        U = v.nodal[mesh.cells]
        vals = np.einsum("qa,kac->kqc", rule.barycentric, U)
        g = v.cell_gradients()
        grads = np.broadcast_to(g[:, None], (mesh.num_cells, rule.size) + g.shape[1:])
        return vals, grads
    x = rule.physical_points(mesh.corners)
    vals = np.asarray(v(x)).reshape(mesh.num_cells, rule.size, -1)
    grads = np.asarray(v.grad(x)).reshape(mesh.num_cells, rule.size, -1, 2)
    return vals, grads


def interpolate(op: Interpolator, v: FieldFunction | FeFunction) -> FeFunction:
    """Clement interpolant of ``v`` in the operator's space."""
    space = op.space
    mesh = space.mesh
    rule = get_rule(op.degree)
    N = space.components
    vals, _ = sample(v, space, rule)
    if vals.shape[-1] != N:
        raise ValueError("component count mismatch")

    x = rule.physical_points(mesh.corners)  # (nc, nq, 2)
    wq = mesh.areas[:, None] * rule.weights[None, :]
    nv = mesh.num_vertices
    scale = np.sqrt(mesh.vertex_cell_incidence.T @ mesh.areas)  # patch length scale

    M = np.zeros((nv, 3, 3))
    b = np.zeros((nv, 3, N))
    for a in range(3):
        z = mesh.cells[:, a]
        rel = (x - mesh.vertices[z][:, None, :]) / scale[z][:, None, None]
        basis = np.concatenate([np.ones(rel.shape[:-1] + (1,)), rel], axis=-1)  # (nc, nq, 3)
        Mk = np.einsum("kq,kqi,kqj->kij", wq, basis, basis)
        bk = np.einsum("kq,kqi,kqc->kic", wq, basis, vals)
        np.add.at(M, z, Mk)
        np.add.at(b, z, bk)
    coef = np.linalg.solve(M, b)  # (nv, 3, N)
    nodal = coef[:, 0, :].copy()  # basis value at the vertex itself is (1, 0, 0)
    if op.preserve_boundary:
        nodal[mesh.boundary_vertices] = 0.0
    return FeFunction(space, nodal.ravel())


# --- probes ------------------------------------------------------------------------


def _cell_means(space: FeSpace, rule: TriangleRule, dens: np.ndarray) -> np.ndarray:
    """Cell averages of a density sampled at the rule's points."""
    return dens @ rule.weights


def _patch_means(space: FeSpace, cell_means: np.ndarray) -> np.ndarray:
    mesh = space.mesh
    adj = mesh.cell_adjacency
    return (adj @ (cell_means * mesh.areas)) / (adj @ mesh.areas)


def _phi_a(fam: PhiFamily, p_qp, t, a):
    return phi_kernel(p_qp, fam.kappa, t, a, fam.variant)


def _norms(x):
    return np.sqrt(np.sum(x * x, axis=tuple(range(2, x.ndim))))


@dataclass
class ProbeData:
    space: FeSpace
    rule: TriangleRule
    p_qp: np.ndarray
    h: np.ndarray  # (nc,)
    v_val: np.ndarray
    v_grad: np.ndarray
    pi_val: np.ndarray
    pi_grad: np.ndarray


def _prepare(op: Interpolator, v, fam: PhiFamily) -> ProbeData:
    space = op.space
    rule = get_rule(op.degree)
    v_val, v_grad = sample(v, space, rule)
    pi = interpolate(op, v)
    pi_val, pi_grad = sample(pi, space, rule)
    p_qp = fam.exponent(rule.physical_points(space.mesh.corners))
    return ProbeData(space, rule, p_qp, space.mesh.diameters, v_val, v_grad, pi_val, pi_grad)


def _check(name, bound_lhs, K_area, m, c):
    limit = c * np.maximum(1.0, K_area ** (-m))
    bad = np.flatnonzero(bound_lhs > limit)
    if len(bad):
        raise AdmissibilityError(f"{name}: admissibility violated on {len(bad)} cells", cells=bad)


def _ratio(lhs, rhs):
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(lhs > 0, lhs / rhs, 0.0)
    return float(r.max()) if len(r) else 0.0


def stability_probe(op: Interpolator, v, a: float, m: float = 2.0, fam: PhiFamily | None = None,
                    c2: float = 1.0) -> float:
    """max_K LHS / (RHS + h_K^m) for the Orlicz stability estimate.

    LHS = max_{j<=1} avg_K phi_a(h_K^j |grad^j Pi v|),
    RHS = sum_{k<=1} avg_{S_K} phi_a(h_K^k |grad^k v|).
    """
    fam = _default_fam(fam)
    d = _prepare(op, v, fam)
    h = d.h[:, None]
    s = d.space
    v0, v1 = _norms(d.v_val), _norms(d.v_grad)
    _check("stability", np.maximum(_patch_means(s, _cell_means(s, d.rule, v0)),
                                   _patch_means(s, _cell_means(s, d.rule, h * v1))),
           s.mesh.areas, m, c2)
    lhs = np.maximum(
        _cell_means(s, d.rule, _phi_a(fam, d.p_qp, _norms(d.pi_val), a)),
        _cell_means(s, d.rule, _phi_a(fam, d.p_qp, h * _norms(d.pi_grad), a)),
    )
    rhs = _patch_means(s, _cell_means(s, d.rule, _phi_a(fam, d.p_qp, v0, a))) + _patch_means(
        s, _cell_means(s, d.rule, _phi_a(fam, d.p_qp, h * v1, a)))
    return _ratio(lhs, rhs + d.h**m)


def approximability_probe(op: Interpolator, v, a: float, m: float = 2.0, fam: PhiFamily | None = None,
                          c3: float = 1.0) -> float:
    """max_K LHS / (RHS + h_K^m) with l = 1.

    LHS = max_{j<=1} avg_K phi_a(h_K^j |grad^j (v - Pi v)|),
    RHS = avg_{S_K} phi_a(h_K |grad v|).
    """
    fam = _default_fam(fam)
    d = _prepare(op, v, fam)
    h = d.h[:, None]
    s = d.space
    v1 = _norms(d.v_grad)
    _check("approximability", _patch_means(s, _cell_means(s, d.rule, h * v1)), s.mesh.areas, m, c3)
    e0 = _norms(d.v_val - d.pi_val)
    e1 = _norms(d.v_grad - d.pi_grad)
    lhs = np.maximum(
        _cell_means(s, d.rule, _phi_a(fam, d.p_qp, e0, a)),
        _cell_means(s, d.rule, _phi_a(fam, d.p_qp, h * e1, a)),
    )
    rhs = _patch_means(s, _cell_means(s, d.rule, _phi_a(fam, d.p_qp, h * v1, a)))
    return _ratio(lhs, rhs + d.h**m)


def continuity_probe(op: Interpolator, v, a: float, m: float = 2.0, fam: PhiFamily | None = None,
                     c3: float = 1.0) -> float:
    """max_K avg_K phi_a(h_K |grad Pi v|) / (avg_{S_K} phi_a(h_K |grad v|) + h_K^m)."""
    fam = _default_fam(fam)
    d = _prepare(op, v, fam)
    h = d.h[:, None]
    s = d.space
    v1 = _norms(d.v_grad)
    _check("continuity", _patch_means(s, _cell_means(s, d.rule, h * v1)), s.mesh.areas, m, c3)
    lhs = _cell_means(s, d.rule, _phi_a(fam, d.p_qp, h * _norms(d.pi_grad), a))
    rhs = _patch_means(s, _cell_means(s, d.rule, _phi_a(fam, d.p_qp, h * v1, a)))
    return _ratio(lhs, rhs + d.h**m)


def l1_stability_constant(op: Interpolator, v) -> float:
    """max_K avg_K |Pi v| / sum_{k<=1} h_K^k avg_{S_K} |grad^k v|."""
    rule = get_rule(op.degree)
    s = op.space
    v_val, v_grad = sample(v, s, rule)
    pi_val, _ = sample(interpolate(op, v), s, rule)
    lhs = _cell_means(s, rule, _norms(pi_val))
    rhs = _patch_means(s, _cell_means(s, rule, _norms(v_val))) + s.mesh.diameters * _patch_means(
        s, _cell_means(s, rule, _norms(v_grad)))
    return _ratio(lhs, rhs)


def _default_fam(fam):
    if fam is None:
        from .nfunction import family

        return family(2.0)
    return fam
