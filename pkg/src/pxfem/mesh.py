"""Conforming 2D simplicial triangulations with red refinement and I/O."""

from __future__ import annotations

from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import GeometryError, MeshParseError, MeshValidationError
from .exponent import Domain

MAGIC = "pxmesh 1"


class Triangulation:
    """A triangulation of a polygonal domain.

    Vertices and cells are stored as read-only numpy arrays; refinement
    returns a new object. Cells are positively oriented.
    """

    def __init__(self, vertices, cells, boundary=None, level: int = 0,
                 domain: Domain | None = None, validate: bool = True):
        self.vertices = np.array(vertices, dtype=float)
        self.cells = np.array(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise MeshValidationError("vertices must have shape (nv, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 3:
            raise MeshValidationError("cells must have shape (nc, 3)")
        if self.cells.size and (self.cells.min() < 0 or self.cells.max() >= len(self.vertices)):
            raise MeshValidationError("cell references a missing vertex")
        if boundary is None:
            boundary = np.zeros(len(self.vertices), dtype=bool)
            boundary[np.unique(self.boundary_edges)] = True
        self.boundary = np.asarray(boundary, dtype=bool)
        self.level = level
        self.domain = domain
        for arr in (self.vertices, self.cells, self.boundary):
            arr.setflags(write=False)
        if validate:
            self.validate()

    # --- sizes ---------------------------------------------------------------

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_cells(self) -> int:
        return len(self.cells)

    @property
    def boundary_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.boundary)

    def __eq__(self, other):
        if not isinstance(other, Triangulation):
            return NotImplemented
        return (
            np.array_equal(self.vertices, other.vertices)
            and np.array_equal(self.cells, other.cells)
            and np.array_equal(self.boundary, other.boundary)
        )

    __hash__ = object.__hash__

    # --- geometry ------------------------------------------------------------

    @cached_property
    def corners(self) -> np.ndarray:
        """Cell corner coordinates, shape (nc, 3, 2)."""
        return self.vertices[self.cells]

    @cached_property
    def signed_areas(self) -> np.ndarray:
        c = self.corners
        e1 = c[:, 1] - c[:, 0]
        e2 = c[:, 2] - c[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def areas(self) -> np.ndarray:
        return np.abs(self.signed_areas)

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        c = self.corners
        return np.stack(
            [
                np.linalg.norm(c[:, 2] - c[:, 1], axis=1),
                np.linalg.norm(c[:, 0] - c[:, 2], axis=1),
                np.linalg.norm(c[:, 1] - c[:, 0], axis=1),
            ],
            axis=1,
        )

    @property
    def diameters(self) -> np.ndarray:
        return self.edge_lengths.max(axis=1)

    @property
    def inball_diameters(self) -> np.ndarray:
        # inradius r = area / semiperimeter
        return 4.0 * self.areas / self.edge_lengths.sum(axis=1)

    @cached_property
    def basis_gradients(self) -> np.ndarray:
        """Gradients of the three P1 hat functions per cell, shape (nc, 3, 2)."""
        c = self.corners
        area2 = 2.0 * self.signed_areas
        x, y = c[..., 0], c[..., 1]
        gx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
        gy = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
        return np.stack([gx, gy], axis=-1) / area2[:, None, None]

    # --- topology ------------------------------------------------------------

    @cached_property
    def _edge_data(self):
        local = self.cells[:, [[1, 2], [2, 0], [0, 1]]].reshape(-1, 2)
        local = np.sort(local, axis=1)
        edges, inverse, counts = np.unique(local, axis=0, return_inverse=True, return_counts=True)
        return edges, inverse.reshape(-1, 3), counts

    @property
    def edges(self) -> np.ndarray:
        return self._edge_data[0]

    @property
    def cell_edges(self) -> np.ndarray:
        """Edge index of the edge opposite each local vertex, shape (nc, 3)."""
        return self._edge_data[1]

    @property
    def boundary_edges(self) -> np.ndarray:
        edges, _, counts = self._edge_data
        return edges[counts == 1]

    @cached_property
    def vertex_cell_incidence(self) -> sp.csr_matrix:
        nc = self.num_cells
        rows = np.repeat(np.arange(nc), 3)
        return sp.csr_matrix(
            (np.ones(3 * nc), (rows, self.cells.ravel())), shape=(nc, self.num_vertices)
        )

    @cached_property
    def cell_adjacency(self) -> sp.csr_matrix:
        """Boolean cell-to-cell matrix: cells sharing at least one vertex."""
        inc = self.vertex_cell_incidence
        adj = (inc @ inc.T).tocsr()
        adj.data[:] = 1.0
        return adj

    def patch(self, k: int) -> np.ndarray:
        """Cells whose closure meets the closure of cell ``k`` (including k)."""
        if not 0 <= k < self.num_cells:
            raise IndexError(f"cell id {k} out of range")
        adj = self.cell_adjacency
        return np.sort(adj.indices[adj.indptr[k]:adj.indptr[k + 1]])

    def vertex_patch(self, v: int) -> np.ndarray:
        inc = self.vertex_cell_incidence.tocsc()
        return np.sort(inc.indices[inc.indptr[v]:inc.indptr[v + 1]])

    def patch_sizes(self) -> np.ndarray:
        return np.diff(self.cell_adjacency.indptr)

    def patch_areas(self) -> np.ndarray:
        return self.cell_adjacency @ self.areas

    # --- checks ---------------------------------------------------------------

    def validate(self):
        area = self.signed_areas
        if np.any(area < 0):
            bad = int(np.flatnonzero(area < 0)[0])
            raise MeshValidationError(f"negative area in cell {bad} (inverted orientation)")
        if np.any(area == 0):
            bad = int(np.flatnonzero(area == 0)[0])
            raise GeometryError(f"degenerate cell {bad}")
        _, _, counts = self._edge_data
        if np.any(counts > 2):
            raise MeshValidationError("non-manifold edge shared by more than two cells")
        self._check_no_hanging_nodes()

    def _check_no_hanging_nodes(self):
        bedges = self.boundary_edges
        if len(bedges) == 0:
            return
        bverts = np.unique(bedges)
        pts = self.vertices[bverts]
        a = self.vertices[bedges[:, 0]]
        b = self.vertices[bedges[:, 1]]
        e = b - a
        # vertex strictly inside a boundary edge means a non-conforming junction
        for i in range(0, len(bverts), 256):
            z = pts[i:i + 256, None, :]
            t = np.einsum("vek,ek->ve", z - a, e) / np.einsum("ek,ek->e", e, e)
            foot = a + t[..., None] * e
            dist = np.linalg.norm(z - foot, axis=-1)
            tol = 1e-12 * np.linalg.norm(e, axis=1)
            hit = (t > 1e-12) & (t < 1 - 1e-12) & (dist <= tol)
            if np.any(hit):
                vi, ei = np.argwhere(hit)[0]
                raise MeshValidationError(
                    f"hanging vertex {bverts[i + vi]} on edge {tuple(bedges[ei])}"
                )

    def euler_characteristic(self) -> int:
        return self.num_vertices - len(self.edges) + self.num_cells


def shape_metrics(mesh: Triangulation) -> tuple[float, float]:
    """(h, gamma0) with gamma0 = max_K h_K / rho_K, rho_K = 2 * inradius."""
    rho = mesh.inball_diameters
    if np.any(rho <= 0):
        raise GeometryError("degenerate cell")
    h_k = mesh.diameters
    return float(h_k.max()), float(np.max(h_k / rho))


def generate(domain: str | Domain, n: int) -> Triangulation:
    """Structured mesh: n x n squares per unit length, each split along (0,0)-(1,1).

    For the L-shape ``n`` must be even so that the notch lies on grid lines.
    """
    dom = domain if isinstance(domain, Domain) else Domain(domain)
    if n < 1:
        raise ValueError("n must be >= 1")
    if dom.name == "l-shape" and n % 2:
        raise ValueError("the L-shape needs an even n")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return i * (n + 1) + j

    cells = []
    for i in range(n):
        for j in range(n):
            if dom.name == "l-shape" and i >= n // 2 and j >= n // 2:
                continue
            v00, v10, v11, v01 = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            cells.append((v00, v10, v11))
            cells.append((v00, v11, v01))
    cells = np.asarray(cells, dtype=np.int64)
    used = np.unique(cells)
    remap = -np.ones(len(verts), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return Triangulation(verts[used], remap[cells], level=0, domain=dom)


def refine_uniform(mesh: Triangulation) -> Triangulation:
    """Red refinement: every triangle is split into four similar children."""
    nv = mesh.num_vertices
    edges = mesh.edges
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    verts = np.vstack([mesh.vertices, mids])
    # midpoint opposite local vertex i
    m = nv + mesh.cell_edges
    v0, v1, v2 = mesh.cells.T
    m0, m1, m2 = m.T  # m0 on edge (v1, v2), m1 on (v2, v0), m2 on (v0, v1)
    children = np.concatenate(
        [
            np.column_stack([v0, m2, m1]),
            np.column_stack([m2, v1, m0]),
            np.column_stack([m1, m0, v2]),
            np.column_stack([m0, m1, m2]),
        ]
    )
    # keep children of a parent adjacent in memory
    nc = mesh.num_cells
    order = np.arange(4 * nc).reshape(4, nc).T.ravel()
    children = children[order]
    _, _, counts = mesh._edge_data
    boundary = np.concatenate([mesh.boundary, counts == 1])
    return Triangulation(verts, children, boundary=boundary, level=mesh.level + 1, domain=mesh.domain)


def refine(mesh: Triangulation, times: int) -> Triangulation:
    for _ in range(times):
        mesh = refine_uniform(mesh)
    return mesh


# --- file I/O -----------------------------------------------------------------


def write_mesh(mesh: Triangulation, path) -> None:
    lines = [MAGIC, f"{mesh.num_vertices} {mesh.num_cells}"]
    for (x, y), b in zip(mesh.vertices, mesh.boundary):
        lines.append(f"{x:.17g} {y:.17g} {int(b)}")
    for i, j, k in mesh.cells:
        lines.append(f"{i} {j} {k}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path, domain: Domain | None = None) -> Triangulation:
    raw = Path(path).read_text().splitlines()
    # keep 1-based line numbers of non-blank lines
    lines = [(i + 1, ln.split()) for i, ln in enumerate(raw) if ln.strip()]
    if not lines:
        raise MeshParseError("empty file, missing header", None)
    lineno, head = lines[0]
    if " ".join(head) != MAGIC:
        raise MeshParseError(f"expected header {MAGIC!r}", lineno)
    if len(lines) < 2:
        raise MeshParseError("missing size line", None)
    lineno, sizes = lines[1]
    try:
        nv, nc = (int(v) for v in sizes)
    except ValueError:
        raise MeshParseError("size line must be '<#vertices> <#cells>'", lineno) from None
    body = lines[2:]
    if len(body) < nv:
        raise MeshParseError(f"missing vertices section: expected {nv} vertex lines, found {len(body)}", None)
    if len(body) < nv + nc:
        raise MeshParseError(
            f"missing cells section: expected {nc} cell lines, found {len(body) - nv}", None
        )
    if len(body) > nv + nc:
        raise MeshParseError("trailing data after cells section", body[nv + nc][0])
    verts = np.empty((nv, 2))
    flags = np.empty(nv, dtype=bool)
    for r, (lineno, tok) in enumerate(body[:nv]):
        if len(tok) != 3:
            raise MeshParseError("vertex line must be 'x y boundary_flag'", lineno)
        try:
            verts[r] = float(tok[0]), float(tok[1])
            flag = int(tok[2])
        except ValueError:
            raise MeshParseError("could not parse vertex line", lineno) from None
        if flag not in (0, 1):
            raise MeshParseError("boundary flag must be 0 or 1", lineno)
        flags[r] = bool(flag)
    cells = np.empty((nc, 3), dtype=np.int64)
    for r, (lineno, tok) in enumerate(body[nv:]):
        if len(tok) != 3:
            raise MeshParseError("cell line must be 'i j k'", lineno)
        try:
            cells[r] = [int(t) for t in tok]
        except ValueError:
            raise MeshParseError("could not parse cell line", lineno) from None
        if np.any(cells[r] < 0) or np.any(cells[r] >= nv):
            raise MeshParseError("cell references a missing vertex", lineno)
    return Triangulation(verts, cells, boundary=flags, domain=domain)
