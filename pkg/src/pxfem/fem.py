"""Conforming P1 discretisation of -div((kappa + |grad v|)^(p(x)-2) grad v) = f.

The discrete problem is the minimisation of the convex energy

    J(u) = int phi(x, |grad u|) dx - <b, u>

over V_h with Dirichlet data, solved by Newton's method with an Armijo
backtracking line search on J.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import exponent as expo
from .errors import IndefiniteOperatorError, SolverError
from .functions import FieldFunction
from .mesh import Triangulation
from .nfunction import PhiFamily, dphi_kernel, flux_A_kernel, flux_coefficients, flux_weight, phi_kernel
from .quadrature import DEFAULT_DEGREE, TriangleRule, get_rule

log = logging.getLogger(__name__)


class FeSpace:
    """Continuous P1 Lagrange space with ``components`` fields per vertex.

    Global dof of (vertex v, component c) is ``v * components + c``.
    """

    def __init__(self, mesh: Triangulation, components: int = 1, degree: int = DEFAULT_DEGREE):
        if components < 1:
            raise ValueError("components must be >= 1")
        self.mesh = mesh
        self.components = components
        self.rule: TriangleRule = get_rule(degree)

    @property
    def ndofs(self) -> int:
        return self.components * self.mesh.num_vertices

    def dof(self, vertex, comp=0):
        return np.asarray(vertex) * self.components + comp

    @cached_property
    def dirichlet_dofs(self) -> np.ndarray:
        bv = self.mesh.boundary_vertices
        N = self.components
        return (bv[:, None] * N + np.arange(N)).ravel()

    @cached_property
    def free_dofs(self) -> np.ndarray:
        mask = np.ones(self.ndofs, dtype=bool)
        mask[self.dirichlet_dofs] = False
        return np.flatnonzero(mask)

    @cached_property
    def cell_dofs(self) -> np.ndarray:
        """Local-to-global map of shape (nc, 3 * N), local order (vertex, comp)."""
        N = self.components
        return (self.mesh.cells[:, :, None] * N + np.arange(N)).reshape(len(self.mesh.cells), -1)

    @cached_property
    def qp_points(self) -> np.ndarray:
        """Physical quadrature points, shape (nc, nq, 2)."""
        return self.rule.physical_points(self.mesh.corners)

    @cached_property
    def qp_weights(self) -> np.ndarray:
        """Quadrature weights times cell area, shape (nc, nq)."""
        return self.mesh.areas[:, None] * self.rule.weights[None, :]

    def with_rule(self, degree: int) -> "FeSpace":
        return FeSpace(self.mesh, self.components, degree)

    def zero(self) -> "FeFunction":
        return FeFunction(self, np.zeros(self.ndofs))

    def interpolate_nodal(self, v: FieldFunction) -> "FeFunction":
        """Lagrange interpolant (nodal values)."""
        vals = np.asarray(v(self.mesh.vertices)).reshape(self.mesh.num_vertices, -1)
        if vals.shape[1] != self.components:
            raise ValueError("component count mismatch")
        return FeFunction(self, vals.ravel().copy())


@dataclass
class FeFunction:
    space: FeSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.ndofs,):
            raise ValueError(
                f"expected {self.space.ndofs} coefficients, got {self.coefficients.shape}"
            )

    @property
    def nodal(self) -> np.ndarray:
        return self.coefficients.reshape(-1, self.space.components)

    def cell_gradients(self) -> np.ndarray:
        """Cellwise constant gradients, shape (nc, N, 2)."""
        U = self.nodal[self.space.mesh.cells]  # (nc, 3, N)
        return np.einsum("kac,kad->kcd", U, self.space.mesh.basis_gradients)

    def qp_values(self) -> np.ndarray:
        U = self.nodal[self.space.mesh.cells]
        return np.einsum("qa,kac->kqc", self.space.rule.barycentric, U)

    def is_trace_zero(self, atol: float = 0.0) -> bool:
        return bool(np.all(np.abs(self.coefficients[self.space.dirichlet_dofs]) <= atol))

    def copy(self) -> "FeFunction":
        return FeFunction(self.space, self.coefficients.copy())


# --- exponents at quadrature points ----------------------------------------------


def freeze(space_or_mesh, p: expo.ExponentField) -> expo.PiecewiseConstantExponent:
    """Cellwise frozen exponent p_T = p(x_K) with x_K the cell minimiser of p."""
    mesh = space_or_mesh.mesh if isinstance(space_or_mesh, FeSpace) else space_or_mesh
    x_k = p.cell_argmin(mesh.corners)
    vals = p(x_k)
    return expo.piecewise_constant(mesh.vertices, mesh.cells, vals, p.domain)


def exponent_at_qp(space: FeSpace, p: expo.ExponentField) -> np.ndarray:
    """Exponent values at the quadrature points, shape (nc, nq).

    Piecewise constant fields on this mesh are broadcast per cell.
    """
    if isinstance(p, expo.PiecewiseConstantExponent):
        if len(p.cell_values) != space.mesh.num_cells:
            raise ValueError("frozen exponent belongs to another mesh")
        return np.repeat(p.cell_values[:, None], space.rule.size, axis=1)
    return p(space.qp_points)


# --- problem description -----------------------------------------------------------


@dataclass
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50
    kappa_solve: float = 1e-7
    armijo: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    linear: str = "auto"  # auto | direct | cg
    direct_threshold: int = 2000
    cg_rtol: float = 1e-12
    cg_maxiter: int = 20000

    def __post_init__(self):
        if self.tol < 0:
            raise ValueError("tol must be non-negative")
        if self.linear not in ("auto", "direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear!r}")


@dataclass
class Problem:
    """p(x)-Laplace Dirichlet problem.

    Exactly one of ``rhs`` (a load density f) and ``manufactured`` (an exact
    solution whose flux defines the load) must be given. Dirichlet data are
    the exact solution's boundary values in the manufactured case, else zero.
    """

    phi: PhiFamily
    rhs: FieldFunction | None = None
    manufactured: FieldFunction | None = None
    options: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if (self.rhs is None) == (self.manufactured is None):
            raise ValueError("give exactly one of rhs and manufactured")

    @property
    def kappa_solver(self) -> float:
        return max(self.phi.kappa, self.options.kappa_solve)


# --- assembly ------------------------------------------------------------------------


def _flux_sums(space, p_qp, kappa, grads, variant):
    """Cellwise sums W = sum w_q * phi'(t)/t and C of the rank-one DA part."""
    t = np.sqrt(np.sum(grads * grads, axis=(1, 2)))
    w, c = flux_coefficients(p_qp, kappa, t[:, None], variant)
    wq = space.qp_weights
    return t, np.sum(wq * w, axis=1), np.sum(wq * c, axis=1)


def _scatter(space, local: np.ndarray) -> np.ndarray:
    return np.bincount(space.cell_dofs.ravel(), weights=local.ravel(), minlength=space.ndofs)


def assemble_operator(space: FeSpace, fam: PhiFamily, u: FeFunction, p_qp=None, kappa=None) -> np.ndarray:
    """Full-length vector of int A(x, grad u) : grad psi_i dx for every dof i."""
    p_qp = exponent_at_qp(space, fam.exponent) if p_qp is None else p_qp
    kappa = fam.kappa if kappa is None else kappa
    grads = u.cell_gradients()
    t = np.sqrt(np.sum(grads * grads, axis=(1, 2)))
    with np.errstate(divide="ignore"):
        w = flux_weight(p_qp, kappa, t[:, None], fam.variant)
    w = np.where(t[:, None] > 0, w, 0.0)
    W = np.sum(space.qp_weights * w, axis=1)
    G = space.mesh.basis_gradients
    local = W[:, None, None] * np.einsum("kad,kcd->kac", G, grads)
    return _scatter(space, local)


def assemble_load(space: FeSpace, f: FieldFunction) -> np.ndarray:
    """int f . psi_i dx by quadrature, full length."""
    fq = np.asarray(f(space.qp_points)).reshape(space.mesh.num_cells, space.rule.size, -1)
    lam = space.rule.barycentric  # hat values at quadrature points
    local = np.einsum("kq,qa,kqc->kac", space.qp_weights, lam, fq)
    return _scatter(space, local)


def manufactured_rhs(space: FeSpace, fam: PhiFamily, v_exact: FieldFunction, p_qp=None) -> np.ndarray:
    """Load vector psi_i -> int A(x, grad v_exact) : grad psi_i dx (full length).

    With this load the weak equation holds for v_exact exactly, up to
    quadrature error.
    """
    p_qp = exponent_at_qp(space, fam.exponent) if p_qp is None else p_qp
    gq = np.asarray(v_exact.grad(space.qp_points))  # (nc, nq, N, 2)
    A = flux_A_kernel(p_qp, fam.kappa, gq, fam.variant)
    local = np.einsum("kq,kqcd,kad->kac", space.qp_weights, A, space.mesh.basis_gradients)
    return _scatter(space, local)


def load_vector(space: FeSpace, problem: Problem) -> np.ndarray:
    if problem.manufactured is not None:
        return manufactured_rhs(space, problem.phi, problem.manufactured)
    return assemble_load(space, problem.rhs)


def assemble_residual(space, fam, u, load, p_qp=None, kappa=None) -> np.ndarray:
    """Residual restricted to free dofs: int A(.,grad u).grad psi_i - <b, psi_i>."""
    full = assemble_operator(space, fam, u, p_qp, kappa) - load
    return full[space.free_dofs]


def assemble_jacobian(space, fam, u, p_qp=None, kappa=None, free_only: bool = True) -> sp.csr_matrix:
    """J_ij = int DA(x, grad u) grad psi_j : grad psi_i dx as a CSR matrix."""
    p_qp = exponent_at_qp(space, fam.exponent) if p_qp is None else p_qp
    kappa = fam.kappa if kappa is None else kappa
    grads = u.cell_gradients()
    t, W, C = _flux_sums(space, p_qp, kappa, grads, fam.variant)
    if not np.all(np.isfinite(W)):
        raise SolverError("flux derivative is unbounded (kappa = 0, p < 2 at zero gradient); regularise kappa")
    G = space.mesh.basis_gradients
    N = space.components
    nc = space.mesh.num_cells
    with np.errstate(invalid="ignore", divide="ignore"):
        unit = np.where(t[:, None, None] > 0, grads / t[:, None, None], 0.0)
    GG = np.einsum("kad,kbd->kab", G, G)
    v = np.einsum("kad,kcd->kac", G, unit).reshape(nc, 3 * N)
    iso = np.einsum("kab,ce->kacbe", GG, np.eye(N)).reshape(nc, 3 * N, 3 * N)
    local = W[:, None, None] * iso + C[:, None, None] * v[:, :, None] * v[:, None, :]
    dofs = space.cell_dofs
    rows = np.repeat(dofs, 3 * N, axis=1).ravel()
    cols = np.tile(dofs, (1, 3 * N)).ravel()
    J = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(space.ndofs, space.ndofs))
    if free_only:
        fd = space.free_dofs
        J = J[fd][:, fd]
    return J.tocsr()


def energy(space, fam, u, load, p_qp=None, kappa=None) -> float:
    """J(u) = int phi(x, |grad u|) dx - <b, u> over free dofs."""
    p_qp = exponent_at_qp(space, fam.exponent) if p_qp is None else p_qp
    kappa = fam.kappa if kappa is None else kappa
    grads = u.cell_gradients()
    t = np.sqrt(np.sum(grads * grads, axis=(1, 2)))
    dens = phi_kernel(p_qp, kappa, np.broadcast_to(t[:, None], p_qp.shape), 0.0, fam.variant)
    fd = space.free_dofs
    return float(np.sum(space.qp_weights * dens) - load[fd] @ u.coefficients[fd])


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(4)


def _phi_increment(p_qp, kappa, t0, dt, variant):
    """phi(t0 + dt) - phi(t0) per quadrature point, accurate for small dt."""
    t0 = np.broadcast_to(t0[:, None], p_qp.shape)
    dt = np.broadcast_to(dt[:, None], p_qp.shape)
    t1 = t0 + dt
    out = phi_kernel(p_qp, kappa, t1, 0.0, variant) - phi_kernel(p_qp, kappa, t0, 0.0, variant)
    k = 0.0 if variant == "plain-power" else kappa
    near = np.abs(dt) <= 1e-2 * (k + np.maximum(t0, t1))
    if np.any(near):
        a, half, p = t0[near], 0.5 * dt[near], p_qp[near]
        acc = np.zeros_like(a)
        for x, w in zip(_GL_NODES, _GL_WEIGHTS):
            acc += w * dphi_kernel(p, kappa, a + half * (1 + x), 0.0, variant)
        out[near] = half * acc
    return out


def energy_difference(space, fam, u, w, load, p_qp=None, kappa=None) -> float:
    """J(w) - J(u) without cancellation between two nearly equal energies."""
    p_qp = exponent_at_qp(space, fam.exponent) if p_qp is None else p_qp
    kappa = fam.kappa if kappa is None else kappa
    delta = w.coefficients - u.coefficients
    gu = u.cell_gradients()
    gd = FeFunction(space, delta).cell_gradients()
    t0 = np.sqrt(np.sum(gu * gu, axis=(1, 2)))
    t1 = np.sqrt(np.sum((gu + gd) ** 2, axis=(1, 2)))
    # |g+d| - |g| = d.(2g+d) / (|g+d| + |g|), free of cancellation
    s = t0 + t1
    with np.errstate(invalid="ignore", divide="ignore"):
        dt = np.where(s > 0, np.sum(gd * (2 * gu + gd), axis=(1, 2)) / s, 0.0)
    dens = _phi_increment(p_qp, kappa, t0, dt, fam.variant)
    fd = space.free_dofs
    return float(np.sum(space.qp_weights * dens) - load[fd] @ delta[fd])


def stiffness_matrix(space: FeSpace) -> sp.csr_matrix:
    """Classical P1 stiffness matrix on all dofs (the p = 2 operator)."""
    G = space.mesh.basis_gradients
    N = space.components
    nc = space.mesh.num_cells
    local = space.mesh.areas[:, None, None] * np.einsum("kad,kbd->kab", G, G)
    local = np.einsum("kab,ce->kacbe", local, np.eye(N)).reshape(nc, 3 * N, 3 * N)
    dofs = space.cell_dofs
    rows = np.repeat(dofs, 3 * N, axis=1).ravel()
    cols = np.tile(dofs, (1, 3 * N)).ravel()
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(space.ndofs, space.ndofs))


# --- linear algebra --------------------------------------------------------------


def pcg(A, b, rtol=1e-12, maxiter=20000, x0=None):
    """Jacobi-preconditioned conjugate gradients.

    Returns (x, iterations). Raises IndefiniteOperatorError when a search
    direction has non-positive curvature and SolverError when ``maxiter`` is
    exhausted.
    """
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise IndefiniteOperatorError("non-positive diagonal entry in the Jacobian")
    minv = 1.0 / diag
    x = np.zeros_like(b) if x0 is None else x0.copy()
    r = b - A @ x
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0
    z = minv * r
    d = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        Ad = A @ d
        curv = d @ Ad
        if curv <= 0:
            raise IndefiniteOperatorError(f"CG breakdown at iteration {it}: d.Ad = {curv:.3e}")
        alpha = rz / curv
        x += alpha * d
        r -= alpha * Ad
        if np.linalg.norm(r) <= rtol * bnorm:
            return x, it
        z = minv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxiter} iterations")


def _linear_solve(J, rhs, opts: SolverOptions):
    use_direct = opts.linear == "direct" or (opts.linear == "auto" and J.shape[0] < opts.direct_threshold)
    if use_direct:
        return spla.spsolve(J.tocsc(), rhs), 0
    return pcg(J, rhs, opts.cg_rtol, opts.cg_maxiter)


# --- nonlinear solve ---------------------------------------------------------------


@dataclass
class SolveStats:
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)
    energies: list = field(default_factory=list)
    decrements: list = field(default_factory=list)  # J(u_k+1) - J(u_k), computed directly
    step_lengths: list = field(default_factory=list)
    backtracks: int = 0
    linear_iterations: int = 0
    kappa_effective: float = 0.0
    frozen: bool = False
    message: str = ""

    @property
    def final_residual(self) -> float:
        return self.residuals[-1] if self.residuals else float("nan")

    def as_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "residuals": self.residuals,
            "energies": self.energies,
            "decrements": self.decrements,
            "step_lengths": self.step_lengths,
            "backtracks": self.backtracks,
            "linear_iterations": self.linear_iterations,
            "kappa_effective": self.kappa_effective,
            "frozen": self.frozen,
            "message": self.message,
        }


def dirichlet_lift(space: FeSpace, problem: Problem) -> FeFunction:
    u = space.zero()
    if problem.manufactured is not None:
        nodal = space.interpolate_nodal(problem.manufactured).coefficients
        bd = space.dirichlet_dofs
        u.coefficients[bd] = nodal[bd]
    return u


def solve(problem: Problem, space: FeSpace, frozen: bool = False, initial: FeFunction | None = None,
          raise_on_failure: bool = True) -> tuple[FeFunction, SolveStats]:
    """Damped Newton iteration for the discrete (or frozen-exponent) problem.

    The load always uses the true exponent; ``frozen`` only replaces the
    flux A by the cellwise frozen flux A_T.
    """
    opts = problem.options
    fam = problem.phi
    load = load_vector(space, problem)
    p_src = freeze(space, fam.exponent) if frozen else fam.exponent
    p_qp = exponent_at_qp(space, p_src)
    kappa = problem.kappa_solver

    u = dirichlet_lift(space, problem)
    if initial is not None:
        fd = space.free_dofs
        u.coefficients[fd] = initial.coefficients[fd]

    stats = SolveStats(kappa_effective=kappa, frozen=frozen)
    E = energy(space, fam, u, load, p_qp, kappa)
    stats.energies.append(E)
    fd = space.free_dofs

    def fail(msg):
        stats.message = msg
        log.warning("%s (residual %.3e)", msg, stats.final_residual)
        if raise_on_failure:
            raise SolverError(msg, iterate=u, stats=stats)
        return u, stats

    if len(fd) == 0:
        stats.converged = True
        stats.residuals.append(0.0)
        return u, stats

    while True:
        r = assemble_residual(space, fam, u, load, p_qp, kappa)
        rnorm = float(np.max(np.abs(r)))
        stats.residuals.append(rnorm)
        if rnorm <= opts.tol:
            stats.converged = True
            stats.message = "converged"
            return u, stats
        if stats.iterations >= opts.max_iter:
            return fail(f"no convergence in {opts.max_iter} Newton iterations")

        J = assemble_jacobian(space, fam, u, p_qp, kappa)
        d, lin_it = _linear_solve(J, -r, opts)
        stats.linear_iterations += lin_it
        slope = float(r @ d)
        if not slope < 0:
            return fail("Newton direction is not a descent direction")

        trial = u.copy()
        alpha = 1.0
        for _ in range(opts.max_backtracks + 1):
            trial.coefficients[fd] = u.coefficients[fd] + alpha * d
            dE = energy_difference(space, fam, u, trial, load, p_qp, kappa)
            if dE <= opts.armijo * alpha * slope:
                break
            alpha *= opts.backtrack
            stats.backtracks += 1
        else:
            return fail("line search failed to decrease the energy")

        u = trial
        E = E + dE
        stats.iterations += 1
        stats.energies.append(E)
        stats.decrements.append(dE)
        stats.step_lengths.append(alpha)
        log.debug("newton %d: |r|=%.3e alpha=%.3g E=%.15g", stats.iterations, rnorm, alpha, E)


def prolongate(u: FeFunction, fine: FeSpace) -> FeFunction:
    """Exact embedding of a P1 function into the red refinement of its mesh."""
    coarse = u.space.mesh
    edges = coarse.edges
    N = u.space.components
    if fine.mesh.num_vertices != coarse.num_vertices + len(edges) or fine.components != N:
        raise ValueError("fine space is not the red refinement of the coarse space")
    U = u.nodal
    mids = 0.5 * (U[edges[:, 0]] + U[edges[:, 1]])
    return FeFunction(fine, np.vstack([U, mids]).ravel())


def inverse_estimate_check(space: FeSpace, u: FeFunction) -> float:
    """max_K ||grad u||_inf(K) / mean_K |grad u|; cells with zero gradient count as 1."""
    g = u.cell_gradients()
    t = np.sqrt(np.sum(g * g, axis=(1, 2)))
    # gradients are cellwise constant: sup and mean agree
    sup = t
    mean = t
    ratio = np.ones_like(t)
    nz = mean > 0
    ratio[nz] = sup[nz] / mean[nz]
    return float(ratio.max()) if len(ratio) else 1.0


def frozen_modular_ratio(space: FeSpace, p: expo.ExponentField, u: FeFunction) -> float:
    """int |grad u|^p(x) dx / int |grad u|^p_T dx for the frozen exponent p_T."""
    g = u.cell_gradients()
    t = np.sqrt(np.sum(g * g, axis=(1, 2)))[:, None]
    p_qp = exponent_at_qp(space, p)
    pT_qp = exponent_at_qp(space, freeze(space, p))
    wq = space.qp_weights
    return float(np.sum(wq * t**p_qp) / np.sum(wq * t**pT_qp))
