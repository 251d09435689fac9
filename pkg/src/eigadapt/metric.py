"""Metric tensor fields driving mesh adaptation.

The anisotropic field scales the Hessian majorant per element so that
equidistributing the metric volume minimizes the eigenvalue error bound;
the isotropic variant keeps only the 2-norm of the element Hessian.  All
tensors use the compact (a11, a12, a22) layout of :mod:`.symtensor`.
"""

from dataclasses import dataclass

import numpy as np

from . import symtensor as st
from .mesh import affine_jacobians, triangle_areas

__all__ = [
    "MetricField", "QualityReport", "element_average_hessian",
    "anisotropic_metric", "isotropic_metric", "uniform_metric",
    "normalize_to_target", "quality", "alignment_ratios",
    "metric_edge_length", "LENGTH_FLOOR_FRACTION",
]

# smallest admissible metric eigenvalue is (fraction / domain diameter)^2
LENGTH_FLOOR_FRACTION = 1e-3


@dataclass
class MetricField:
    """Per-element SPD tensors (nt, 3), total metric volume, and mode."""
    tensors: np.ndarray
    sigma_h: float
    mode: str

    def recompute_sigma(self, mesh):
        areas = triangle_areas(mesh.vertices, mesh.triangles)
        return float(np.sum(areas * np.sqrt(st.det(self.tensors))))


@dataclass
class QualityReport:
    c_eq: float
    c_ali: float
    eq_deciles: np.ndarray
    ali_deciles: np.ndarray


def _field_values(h):
    return np.asarray(getattr(h, "values", h), dtype=float)


def element_average_hessian(mesh, hessian_field, element=None):
    """Arithmetic mean of the three vertex tensors (exact element average
    of the piecewise-linear tensor interpolant)."""
    values = _field_values(hessian_field)
    hk = values[mesh.triangles].mean(axis=1)
    return hk if element is None else hk[element]


def _product_norm2(a, b):
    """Matrix 2-norm of the (generally nonsymmetric) product a @ b of two
    compact symmetric tensors: the largest singular value, computed from
    the symmetric Gram tensor b a^2 b."""
    am = st.to_matrix(a)
    bm = st.to_matrix(b)
    f = am @ bm
    gram = st.from_matrix(np.swapaxes(f, -1, -2) @ f)
    return np.sqrt(np.maximum(st.norm2(gram), 0.0))


def _inv(t):
    d = st.det(t)
    return np.stack([t[..., 2] / d, -t[..., 1] / d, t[..., 0] / d], axis=-1)


def anisotropic_metric(mesh, hessian_field, diffusion):
    """Optimal-scaling metric built from the Hessian majorant and D.

    Per element: ``M_K = det(H_K)^{-1/4} * max_K ||H_K D||_2^{1/2} *
    ((1/|K|) ||H_K^{-1} H||^2_{L2(K)})^{1/2} * H_K`` with the max and the
    L2 integral both evaluated at the three edge midpoints (H interpolated
    linearly from the vertices).
    """
    hv = _field_values(hessian_field)
    if not np.all(st.is_spd(hv)):
        raise ValueError("anisotropic metric needs an SPD Hessian field; "
                         "regularize first")
    hk = element_average_hessian(mesh, hv)
    det_hk = st.det(hk)

    tri = mesh.triangles
    p = mesh.vertices[tri]
    mids = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])        # (nt, 3, 2)
    d_at = np.asarray(diffusion(mids.reshape(-1, 2)),
                      dtype=float).reshape(-1, 3, 3)
    h_at = 0.5 * (hv[tri[:, [1, 2, 0]]] + hv[tri[:, [2, 0, 1]]])

    hk3 = np.repeat(hk[:, None, :], 3, axis=1)
    max_hd = _product_norm2(hk3, d_at).max(axis=1)
    l2_term = (_product_norm2(_inv(hk3), h_at) ** 2).mean(axis=1)

    theta = det_hk ** -0.25 * np.sqrt(max_hd) * np.sqrt(l2_term)
    tensors = theta[:, None] * hk
    field = MetricField(tensors=tensors, sigma_h=0.0, mode="anisotropic")
    field.sigma_h = field.recompute_sigma(mesh)
    return field


def isotropic_metric(mesh, hessian_field):
    """Isotropic variant: M_K = ||H_K||_2 I (exponent 4/(d+2) = 1 at d=2)."""
    hk = element_average_hessian(mesh, hessian_field)
    scale = st.norm2(hk)
    tensors = np.zeros((mesh.num_triangles, 3))
    tensors[:, 0] = scale
    tensors[:, 2] = scale
    field = MetricField(tensors=tensors, sigma_h=0.0, mode="isotropic")
    field.sigma_h = field.recompute_sigma(mesh)
    return field


def uniform_metric(mesh, value=1.0):
    """Identity-mode metric (uniform meshes after normalization)."""
    tensors = np.zeros((mesh.num_triangles, 3))
    tensors[:, 0] = value
    tensors[:, 2] = value
    field = MetricField(tensors=tensors, sigma_h=0.0, mode="identity")
    field.sigma_h = field.recompute_sigma(mesh)
    return field


def normalize_to_target(mesh, field, n_target):
    """Scale the metric so its total volume equals the element-count goal.

    At d=2 the volume scales linearly, so s = n_target / sigma_h is exact;
    a floor on the metric eigenvalues forbids unbounded elements where the
    Hessian vanishes.
    """
    if n_target < 1:
        raise ValueError("target element count must be >= 1")
    tensors = field.tensors
    if field.sigma_h > 0.0:
        tensors = (n_target / field.sigma_h) * tensors
    floor = (LENGTH_FLOOR_FRACTION / mesh.diameter()) ** 2
    w, v = st.eig(tensors)
    if np.any(w[..., 0] < floor):
        w = np.maximum(w, floor)
        tensors = st._recompose(w, v)
    out = MetricField(tensors=tensors, sigma_h=0.0, mode=field.mode)
    out.sigma_h = out.recompute_sigma(mesh)
    return out


def alignment_ratios(mesh, field):
    """Per-element ratio tr(B) / (d det(B)^(1/d)) with B = F'^T M_K F';
    equals 1 exactly when the element is equilateral in the metric."""
    jac = affine_jacobians(mesh.vertices, mesh.triangles)
    m = st.to_matrix(field.tensors)
    b = np.swapaxes(jac, -1, -2) @ m @ jac
    tr = b[:, 0, 0] + b[:, 1, 1]
    det_b = b[:, 0, 0] * b[:, 1, 1] - b[:, 0, 1] * b[:, 1, 0]
    return 0.5 * tr / np.sqrt(np.maximum(det_b, 1e-300))


def quality(mesh, field):
    """Equidistribution and alignment constants with decile histograms."""
    areas = triangle_areas(mesh.vertices, mesh.triangles)
    vol = areas * np.sqrt(st.det(field.tensors))
    sigma = float(vol.sum())
    eq = vol * mesh.num_triangles / sigma
    ali = alignment_ratios(mesh, field)
    deciles = np.arange(0, 101, 10)
    return QualityReport(c_eq=float(eq.max()), c_ali=float(ali.max()),
                         eq_deciles=np.percentile(eq, deciles),
                         ali_deciles=np.percentile(ali, deciles))


def metric_edge_length(m_a, m_b, edge):
    """Edge length in the metric: sqrt(e^T Mbar e) with Mbar the average
    of the endpoint tensors."""
    mbar = 0.5 * (np.asarray(m_a, dtype=float) + np.asarray(m_b, dtype=float))
    return np.sqrt(np.maximum(st.matvec_quadratic(mbar, edge), 0.0))
