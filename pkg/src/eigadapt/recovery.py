"""Per-vertex Hessian recovery by local least-squares quadratic fits.

At each vertex a full quadratic p(x, y) is fitted to the nodal values on
the vertex plus its neighborhood patch, in coordinates centered at the
vertex and scaled by the patch radius (which makes the conditioning
independent of the element size); the recovered Hessian is the constant
Hessian of that quadratic.  The patch starts at ring 1 and grows to ring 2
when it is too small or too ill-conditioned.
"""

from dataclasses import dataclass, field

import numpy as np

from . import symtensor as st
from .errors import RecoveryError

__all__ = ["HessianField", "recover_hessian", "recover_hessians",
           "build_majorant"]

_COND_LIMIT = 1e8
_MIN_POINTS = 6


@dataclass
class HessianField:
    """Per-vertex symmetric tensors (nv, 3) with a provenance label."""
    values: np.ndarray
    label: str = ""
    alpha: float | None = None


def _field_values(h):
    return np.asarray(getattr(h, "values", h), dtype=float)


def recover_hessians(mesh, nodal_values, labels=None):
    """Recover Hessian fields for one or several nodal value vectors.

    `nodal_values` has shape (nv,) or (nfields, nv); all fields share the
    per-vertex patch factorization, so recovering the eigenfunctions of one
    solve together is much cheaper than one call per function.
    """
    u = np.asarray(nodal_values, dtype=float)
    single = u.ndim == 1
    u = np.atleast_2d(u)
    nfields, nv = u.shape
    if nv != mesh.num_vertices:
        raise ValueError("nodal values do not match vertex count")

    out = np.zeros((nfields, nv, 3))
    verts = mesh.vertices
    for v in range(nv):
        patch = mesh.vertex_patch(v, ring=1)
        coeffs = _fit_vertex(verts, u, v, patch)
        if coeffs is None:
            patch = mesh.vertex_patch(v, ring=2)
            coeffs = _fit_vertex(verts, u, v, patch, strict=True)
        ring = 2
        while coeffs is None and ring < 5:
            # very coarse neighborhoods (a lone corner element in a flat
            # metric region) can leave ring 2 short of the 6 fit points
            ring += 1
            patch = _grow_patch(mesh, v, patch)
            coeffs = _fit_vertex(verts, u, v, patch, strict=True)
        if coeffs is None:
            raise RecoveryError(
                "quadratic fit patch still deficient at ring %d for "
                "vertex %d" % (ring, v), vertex=v)
        out[:, v, :] = coeffs

    if labels is None:
        labels = ["u%d" % (j + 1) for j in range(nfields)]
    fields = [HessianField(values=out[j], label=labels[j])
              for j in range(nfields)]
    return fields[0] if single else fields


def recover_hessian(mesh, nodal_values, label=""):
    """Single-field convenience wrapper around :func:`recover_hessians`."""
    h = recover_hessians(mesh, np.asarray(nodal_values, dtype=float))
    if label:
        h.label = label
    return h


def _grow_patch(mesh, v, patch):
    grown = set(patch.tolist())
    for w in patch:
        grown.update(mesh.vertex_patch(int(w), ring=1).tolist())
    grown.discard(v)
    return np.array(sorted(grown), dtype=np.int64)


def _fit_vertex(verts, u, v, patch, strict=False):
    pts = np.concatenate([[v], patch])
    if len(pts) < _MIN_POINTS:
        return None
    xy = verts[pts] - verts[v]
    radius = np.max(np.hypot(xy[:, 0], xy[:, 1]))
    xy = xy / radius
    X = np.empty((len(pts), 6))
    X[:, 0] = 1.0
    X[:, 1] = xy[:, 0]
    X[:, 2] = xy[:, 1]
    X[:, 3] = xy[:, 0] ** 2
    X[:, 4] = xy[:, 0] * xy[:, 1]
    X[:, 5] = xy[:, 1] ** 2

    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    if s[-1] == 0.0:
        return None
    cond_normal = (s[0] / s[-1]) ** 2
    if cond_normal > _COND_LIMIT and not strict:
        return None
    if s[-1] <= 1e-13 * s[0]:
        return None  # numerically rank deficient even at ring 2
    coeffs = Vt.T @ ((U.T @ u[:, pts].T) / s[:, None])
    scale = radius ** 2
    return np.stack([2.0 * coeffs[3] / scale,
                     coeffs[4] / scale,
                     2.0 * coeffs[5] / scale], axis=-1)


def build_majorant(hessian_fields, alpha):
    """Pointwise SPD majorant of the regularized Hessian magnitudes.

    Each field is replaced by |H| + alpha I and the results are folded with
    the metric intersection in list order; the output dominates every
    regularized input in the PSD order and has smallest eigenvalue >= alpha.
    """
    if alpha <= 0.0:
        raise ValueError("majorant regularization alpha must be positive")
    if isinstance(hessian_fields, HessianField):
        hessian_fields = [hessian_fields]
    values = [_field_values(h) for h in hessian_fields]
    if not values:
        raise ValueError("need at least one Hessian field")
    regs = [st.abs_regularize(val, alpha) for val in values]
    out = st.sequential_intersection(regs)
    return HessianField(values=out, label="majorant", alpha=alpha)
