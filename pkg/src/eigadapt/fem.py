"""Linear (P1) finite element assembly for -div(D grad u) = lambda rho u.

Coefficient fields are vectorized callables: a diffusion field maps points
``(m, 2)`` to compact SPD tensors ``(m, 3)`` (see :mod:`eigadapt.symtensor`),
a density field maps points to positive scalars ``(m,)``.  Quadrature is the
3-point edge-midpoint rule (degree-2 exact), so the P1 mass matrix with
constant density is integrated exactly and coefficient fields are never
sampled at element vertices.
"""

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as _sparse_norm

from . import symtensor as st
from .errors import CoefficientError
from .mesh import INTERIOR, triangle_areas

__all__ = [
    "constant_diffusion", "constant_density",
    "assemble_stiffness", "assemble_mass", "assemble_mass_full",
    "energy_norm", "interior_indices", "write_coo_text",
]


def constant_diffusion(tensor):
    """Diffusion field with the same SPD tensor everywhere."""
    tensor = st.check_spd(np.asarray(tensor, dtype=float), "diffusion tensor")

    def field(points):
        points = np.atleast_2d(points)
        return np.broadcast_to(tensor, (len(points), 3)).copy()
    return field


def constant_density(value=1.0):
    if value <= 0.0:
        raise CoefficientError("density must be positive")

    def field(points):
        points = np.atleast_2d(points)
        return np.full(len(points), float(value))
    return field


def interior_indices(mesh):
    return np.where(mesh.vertex_kind == INTERIOR)[0]


def _edge_midpoints(mesh):
    """Quadrature points, shape (nt, 3, 2); point q is opposite vertex q."""
    p = mesh.vertices[mesh.triangles]
    return 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])


def _p1_gradients(mesh):
    """Constant P1 basis gradients per element, shape (nt, 3, 2)."""
    p = mesh.vertices[mesh.triangles]
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    g = np.empty_like(p)
    for i in range(3):
        e = p[:, (i + 2) % 3] - p[:, (i + 1) % 3]
        g[:, i, 0] = -e[:, 1]
        g[:, i, 1] = e[:, 0]
    return g / (2.0 * areas)[:, None, None]


def _scatter(mesh, element_matrices):
    """Sum 3x3 element matrices into a CSR matrix over all vertices."""
    tri = mesh.triangles
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    mat = sp.coo_matrix((element_matrices.ravel(), (rows, cols)),
                        shape=(mesh.num_vertices, mesh.num_vertices))
    return mat.tocsr()


def _restrict(matrix, idx):
    return matrix[idx][:, idx].tocsr()


def assemble_stiffness(mesh, diffusion):
    """Stiffness matrix over interior vertices.

    Entries are sums over elements of the edge-midpoint quadrature of
    ``(D grad phi_j) . grad phi_i``; with constant P1 gradients this reduces
    to the quadrature average of D per element.
    """
    quad = _edge_midpoints(mesh)
    d = np.asarray(diffusion(quad.reshape(-1, 2)), dtype=float)
    bad = ~st.is_spd(d)
    if np.any(bad):
        j = int(np.argmax(bad))
        raise CoefficientError("diffusion tensor not SPD at sample point",
                               point=quad.reshape(-1, 2)[j])
    dbar = d.reshape(-1, 3, 3).mean(axis=1)
    g = _p1_gradients(mesh)
    areas = triangle_areas(mesh.vertices, mesh.triangles)

    elem = np.empty((mesh.num_triangles, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            # written so that (i, j) and (j, i) are bitwise identical
            val = areas * (dbar[:, 0] * g[:, i, 0] * g[:, j, 0]
                           + dbar[:, 1] * (g[:, i, 0] * g[:, j, 1]
                                           + g[:, i, 1] * g[:, j, 0])
                           + dbar[:, 2] * g[:, i, 1] * g[:, j, 1])
            elem[:, i, j] = val
            elem[:, j, i] = val
    return _restrict(_scatter(mesh, elem), interior_indices(mesh))


# P1 basis values at the three edge midpoints: basis i vanishes at the
# midpoint opposite to it and equals 1/2 at the other two.
_PHI_AT_MID = 0.5 * (1.0 - np.eye(3))


def assemble_mass_full(mesh, density):
    """Mass matrix over all vertices (used for integral identities)."""
    quad = _edge_midpoints(mesh)
    rho = np.asarray(density(quad.reshape(-1, 2)), dtype=float)
    if np.any(rho <= 0.0):
        j = int(np.argmax(rho <= 0.0))
        raise CoefficientError("density not positive at sample point",
                               point=quad.reshape(-1, 2)[j])
    rho = rho.reshape(-1, 3)
    areas = triangle_areas(mesh.vertices, mesh.triangles)

    elem = np.empty((mesh.num_triangles, 3, 3))
    for i in range(3):
        for j in range(i, 3):
            val = (areas / 3.0) * (
                rho[:, 0] * _PHI_AT_MID[i, 0] * _PHI_AT_MID[j, 0]
                + rho[:, 1] * _PHI_AT_MID[i, 1] * _PHI_AT_MID[j, 1]
                + rho[:, 2] * _PHI_AT_MID[i, 2] * _PHI_AT_MID[j, 2])
            elem[:, i, j] = val
            elem[:, j, i] = val
    return _scatter(mesh, elem)


def assemble_mass(mesh, density):
    """Mass matrix restricted to interior vertices."""
    return _restrict(assemble_mass_full(mesh, density),
                     interior_indices(mesh))


def energy_norm(A, u):
    """sqrt(u^T A u) with an SPD sanity guard."""
    u = np.asarray(u, dtype=float)
    if u.shape[0] != A.shape[0]:
        raise ValueError("dimension mismatch in energy norm")
    q = float(u @ (A @ u))
    scale = _sparse_norm(A) * float(u @ u)
    if q < -1e-12 * scale:
        raise ValueError("quadratic form is negative; matrix not SPD")
    return np.sqrt(max(q, 0.0))


def write_coo_text(matrix, path):
    """Debug export: one 'row col value' line per stored entry, 0-based."""
    coo = matrix.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w") as fh:
        for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order]):
            fh.write("%d %d %.17g\n" % (r, c, v))
