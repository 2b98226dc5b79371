"""Conforming Q_k Lagrange elements on a uniform quadrilateral mesh of (-1,1)^2.

Homogeneous Dirichlet boundary handled by interior-DoF elimination.  Assembly
of the spatial mass matrix, coefficient-weighted stiffness matrices, and load
vectors, plus quadrature-based error norms.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.sparse import csr_matrix


@dataclass(frozen=True)
class QuadMesh:
    """Uniform axis-aligned square cells covering D = (-1,1)^2."""

    cells_per_side: int

    @property
    def h(self) -> float:
        return 2.0 / self.cells_per_side

    @property
    def n_cells(self) -> int:
        return self.cells_per_side**2

    def cell_origins(self) -> np.ndarray:
        """Lower-left corner of each cell, ordered row-major (y outer)."""
        n = self.cells_per_side
        xs = -1.0 + self.h * np.arange(n)
        ox, oy = np.meshgrid(xs, xs, indexing="xy")
        return np.stack([ox.ravel(), oy.ravel()], axis=-1)


def _lagrange_1d(k: int, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Values and derivatives of the k+1 equispaced Lagrange basis on [0,1].

    Returns arrays of shape (len(s), k+1).
    """
    nodes = np.linspace(0.0, 1.0, k + 1)
    vals = np.ones((len(s), k + 1))
    ders = np.zeros((len(s), k + 1))
    for i in range(k + 1):
        for j in range(k + 1):
            if j == i:
                continue
            vals[:, i] *= (s - nodes[j]) / (nodes[i] - nodes[j])
        # derivative by product rule over the omitted factor
        for j in range(k + 1):
            if j == i:
                continue
            term = np.ones(len(s)) / (nodes[i] - nodes[j])
            for l in range(k + 1):
                if l in (i, j):
                    continue
                term *= (s - nodes[l]) / (nodes[i] - nodes[l])
            ders[:, i] += term
    return vals, ders


class FeSpace:
    """Q_k space on a QuadMesh with interior-only solve numbering.

    ``n_dofs`` counts interior DoFs; ``n_dofs_total`` includes boundary nodes
    (the paper-style reporting convention).
    """

    def __init__(self, mesh: QuadMesh, degree: int):
        if degree < 1:
            raise ValueError("polynomial degree must be >= 1")
        self.mesh = mesh
        self.degree = degree
        n, k = mesh.cells_per_side, degree
        self.nodes_per_side = n * k + 1
        coords_1d = np.linspace(-1.0, 1.0, self.nodes_per_side)
        gx, gy = np.meshgrid(coords_1d, coords_1d, indexing="xy")
        self.dof_coords = np.stack([gx.ravel(), gy.ravel()], axis=-1)

        npts = self.nodes_per_side
        idx = np.arange(npts**2).reshape(npts, npts)  # [iy, ix]
        self.boundary_mask = np.zeros(npts**2, dtype=bool)
        self.boundary_mask[idx[0, :]] = True
        self.boundary_mask[idx[-1, :]] = True
        self.boundary_mask[idx[:, 0]] = True
        self.boundary_mask[idx[:, -1]] = True

        self.n_dofs_total = npts**2
        self.n_dofs = int((~self.boundary_mask).sum())
        self.interior_ids = -np.ones(self.n_dofs_total, dtype=int)
        self.interior_ids[~self.boundary_mask] = np.arange(self.n_dofs)
        self.interior_to_full = np.flatnonzero(~self.boundary_mask)

        # cell -> global full dof map, shape (n_cells, (k+1)^2)
        cell_dofs = np.empty((mesh.n_cells, (k + 1) ** 2), dtype=int)
        local = np.arange(k + 1)
        for cy in range(n):
            for cx in range(n):
                gxs = cx * k + local
                gys = cy * k + local
                loc = idx[np.ix_(gys, gxs)]  # [ly, lx]
                cell_dofs[cy * n + cx] = loc.ravel()  # ly outer, lx inner
        self.cell_dofs = cell_dofs

        # reference quadrature: Gauss-Legendre with k+2 points per direction
        self._setup_quadrature(k + 2)

    def _setup_quadrature(self, nq1: int) -> None:
        k = self.degree
        s, w = leggauss(nq1)
        s = 0.5 * (s + 1.0)  # map to [0,1]
        w = 0.5 * w
        vals, ders = _lagrange_1d(k, s)
        # 2D tensor basis at (qy, qx) grid; local dof (ly, lx) matches cell_dofs
        nq = nq1 * nq1
        nloc = (k + 1) ** 2
        B = np.empty((nq, nloc))
        Dx = np.empty((nq, nloc))
        Dy = np.empty((nq, nloc))
        q = 0
        for qy in range(nq1):
            for qx in range(nq1):
                loc = 0
                for ly in range(k + 1):
                    for lx in range(k + 1):
                        B[q, loc] = vals[qy, ly] * vals[qx, lx]
                        Dx[q, loc] = vals[qy, ly] * ders[qx, lx]
                        Dy[q, loc] = ders[qy, ly] * vals[qx, lx]
                        loc += 1
                q += 1
        wq = np.empty(nq)
        sq = np.empty((nq, 2))
        q = 0
        for qy in range(nq1):
            for qx in range(nq1):
                wq[q] = w[qy] * w[qx]
                sq[q] = (s[qx], s[qy])
                q += 1
        self._ref_B, self._ref_Dx, self._ref_Dy = B, Dx, Dy
        self._ref_w, self._ref_s = wq, sq

    @cached_property
    def quad_points(self) -> np.ndarray:
        """Physical quadrature points, shape (n_cells, nq, 2)."""
        origins = self.mesh.cell_origins()
        h = self.mesh.h
        return origins[:, None, :] + h * self._ref_s[None, :, :]

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Physical quadrature weights per cell point (include h^2 Jacobian)."""
        h = self.mesh.h
        return np.broadcast_to(
            h * h * self._ref_w, (self.mesh.n_cells, len(self._ref_w))
        )

    # ---- field evaluation -------------------------------------------------

    def to_full(self, v_interior: np.ndarray) -> np.ndarray:
        """Embed an interior coefficient vector with zeros on the boundary."""
        out_shape = v_interior.shape[:-1] + (self.n_dofs_total,)
        full = np.zeros(out_shape)
        full[..., self.interior_to_full] = v_interior
        return full

    def eval_at_quad(self, v_full: np.ndarray) -> np.ndarray:
        """FE field values at quadrature points; shape (..., n_cells, nq)."""
        loc = v_full[..., self.cell_dofs]  # (..., n_cells, nloc)
        return np.einsum("qk,...ck->...cq", self._ref_B, loc)

    def grad_at_quad(self, v_full: np.ndarray) -> np.ndarray:
        """FE field gradients at quadrature points; (..., n_cells, nq, 2)."""
        loc = v_full[..., self.cell_dofs]
        inv_h = 1.0 / self.mesh.h
        gx = np.einsum("qk,...ck->...cq", self._ref_Dx, loc) * inv_h
        gy = np.einsum("qk,...ck->...cq", self._ref_Dy, loc) * inv_h
        return np.stack([gx, gy], axis=-1)


def _scatter(space: FeSpace, local_mats: np.ndarray, include_boundary: bool):
    """Sum cell-local matrices (n_cells, nloc, nloc) into a global CSR."""
    cd = space.cell_dofs
    n_cells, nloc = cd.shape
    rows = np.repeat(cd, nloc, axis=1).ravel()
    cols = np.tile(cd, (1, nloc)).ravel()
    vals = local_mats.ravel()
    A = csr_matrix(
        (vals, (rows, cols)), shape=(space.n_dofs_total, space.n_dofs_total)
    )
    if include_boundary:
        return A
    keep = space.interior_to_full
    return A[keep][:, keep].tocsr()


def assemble_mass(space: FeSpace, include_boundary: bool = False) -> csr_matrix:
    """Spatial mass matrix <phi_l, phi_m> over D."""
    h = space.mesh.h
    ref = np.einsum("q,qi,qj->ij", space._ref_w, space._ref_B, space._ref_B)
    local = np.broadcast_to(h * h * ref, (space.mesh.n_cells, *ref.shape))
    return _scatter(space, np.ascontiguousarray(local), include_boundary)


def assemble_weighted_stiffness(
    space: FeSpace, a_mu, include_boundary: bool = False
) -> csr_matrix:
    """Coefficient-weighted stiffness int_D a_mu grad phi_l . grad phi_m.

    ``a_mu(x, y)`` must accept equal-shaped coordinate arrays.
    """
    pts = space.quad_points
    avals = a_mu(pts[..., 0], pts[..., 1])  # (n_cells, nq)
    avals = np.broadcast_to(avals, pts.shape[:2])
    # h^2 Jacobian cancels the two 1/h gradient factors in 2D
    w = space._ref_w
    local = np.einsum(
        "q,cq,qi,qj->cij", w, avals, space._ref_Dx, space._ref_Dx
    ) + np.einsum("q,cq,qi,qj->cij", w, avals, space._ref_Dy, space._ref_Dy)
    return _scatter(space, local, include_boundary)


def assemble_load_vector(
    space: FeSpace, g, include_boundary: bool = False
) -> np.ndarray:
    """Load vector int_D g phi_m for a scalar field g(x, y)."""
    pts = space.quad_points
    gvals = np.broadcast_to(g(pts[..., 0], pts[..., 1]), pts.shape[:2])
    wq = space.quad_weights
    cell_loads = np.einsum("cq,cq,qk->ck", wq, gvals, space._ref_B)
    full = np.zeros(space.n_dofs_total)
    np.add.at(full, space.cell_dofs.ravel(), cell_loads.ravel())
    if include_boundary:
        return full
    return full[space.interior_to_full]


def interpolate(space: FeSpace, g) -> np.ndarray:
    """Nodal interpolant on interior DoFs; boundary values are 0."""
    coords = space.dof_coords[space.interior_to_full]
    return np.asarray(g(coords[:, 0], coords[:, 1]), dtype=float)


def l2_and_h1_errors(
    space: FeSpace, v_interior: np.ndarray, g, grad_g
) -> tuple[float, float]:
    """(L2, H1-seminorm) distance between the FE field and an exact field.

    ``grad_g(x, y)`` returns a pair of arrays (d/dx, d/dy).
    """
    v_full = space.to_full(v_interior)
    pts = space.quad_points
    wq = space.quad_weights
    diff = space.eval_at_quad(v_full) - g(pts[..., 0], pts[..., 1])
    l2 = np.sqrt(np.sum(wq * diff**2))
    gfe = space.grad_at_quad(v_full)
    gx, gy = grad_g(pts[..., 0], pts[..., 1])
    dx = gfe[..., 0] - gx
    dy = gfe[..., 1] - gy
    h1 = np.sqrt(np.sum(wq * (dx**2 + dy**2)))
    return float(l2), float(h1)
