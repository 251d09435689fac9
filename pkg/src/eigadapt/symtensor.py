"""Closed-form algebra for symmetric 2x2 tensors.

Tensors are stored in compact form as arrays with trailing dimension 3,
``t = [a11, a12, a22]``; all functions broadcast over leading dimensions,
so a field of tensors is simply an ``(n, 3)`` array.  This layout is the
atom for Hessians, metric tensors and diffusion tensors throughout the
package.
"""

import numpy as np

__all__ = [
    "sym2", "to_matrix", "from_matrix", "identity",
    "eig", "abs_regularize", "intersect", "sequential_intersection",
    "norm2", "det", "trace", "eigenvalues", "is_spd", "check_spd",
    "matvec_quadratic",
]


def sym2(a11, a12, a22):
    """Pack entries into the compact representation."""
    t = np.stack(np.broadcast_arrays(
        np.asarray(a11, dtype=float),
        np.asarray(a12, dtype=float),
        np.asarray(a22, dtype=float)), axis=-1)
    if not np.all(np.isfinite(t)):
        raise ValueError("symmetric tensor entries must be finite")
    return t


def identity(shape=()):
    """Identity tensor broadcast to the given leading shape."""
    t = np.zeros(tuple(shape) + (3,))
    t[..., 0] = 1.0
    t[..., 2] = 1.0
    return t


def to_matrix(t):
    """Expand compact tensors to full ``(..., 2, 2)`` matrices."""
    t = np.asarray(t, dtype=float)
    m = np.empty(t.shape[:-1] + (2, 2))
    m[..., 0, 0] = t[..., 0]
    m[..., 0, 1] = t[..., 1]
    m[..., 1, 0] = t[..., 1]
    m[..., 1, 1] = t[..., 2]
    return m


def from_matrix(m):
    """Compact a full symmetric matrix, averaging the off-diagonal pair."""
    m = np.asarray(m, dtype=float)
    return np.stack([m[..., 0, 0],
                     0.5 * (m[..., 0, 1] + m[..., 1, 0]),
                     m[..., 1, 1]], axis=-1)


def trace(t):
    t = np.asarray(t, dtype=float)
    return t[..., 0] + t[..., 2]


def det(t):
    t = np.asarray(t, dtype=float)
    return t[..., 0] * t[..., 2] - t[..., 1] ** 2


def eigenvalues(t):
    """Eigenvalue pair ``(..., 2)`` in ascending order, closed form."""
    t = np.asarray(t, dtype=float)
    half_tr = 0.5 * (t[..., 0] + t[..., 2])
    disc = np.hypot(0.5 * (t[..., 0] - t[..., 2]), t[..., 1])
    return np.stack([half_tr - disc, half_tr + disc], axis=-1)


def eig(t):
    """Eigendecomposition ``t = V diag(w) V^T``.

    Returns ``(w, V)`` with ``w`` ascending and the eigenvectors in the
    columns of ``V``; ``V`` is orthonormal.  The off-diagonal branch picks
    whichever of the two analytic eigenvector formulas has the larger norm,
    which avoids cancellation when the tensor is nearly diagonal.
    """
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("eig: non-finite tensor entries")
    a, b, c = t[..., 0], t[..., 1], t[..., 2]
    half_tr = 0.5 * (a + c)
    disc = np.hypot(0.5 * (a - c), b)
    wmin = half_tr - disc
    wmax = half_tr + disc

    # candidate eigenvectors for wmax: (b, wmax-a) and (wmax-c, b)
    v1x, v1y = b, wmax - a
    v2x, v2y = wmax - c, b
    n1 = np.hypot(v1x, v1y)
    n2 = np.hypot(v2x, v2y)
    use1 = n1 >= n2
    vx = np.where(use1, v1x, v2x)
    vy = np.where(use1, v1y, v2y)
    n = np.hypot(vx, vy)
    degenerate = n == 0.0          # multiple of the identity
    n = np.where(degenerate, 1.0, n)
    vx = np.where(degenerate, 1.0, vx) / n
    vy = np.where(degenerate, 0.0, vy) / n
    # deterministic sign: largest-magnitude component positive
    flip = np.where(np.abs(vx) >= np.abs(vy), vx, vy) < 0.0
    sgn = np.where(flip, -1.0, 1.0)
    vx = vx * sgn
    vy = vy * sgn

    w = np.stack([wmin, wmax], axis=-1)
    V = np.empty(t.shape[:-1] + (2, 2))
    V[..., 0, 1] = vx
    V[..., 1, 1] = vy
    # eigenvector for wmin is the 90-degree rotation
    V[..., 0, 0] = -vy
    V[..., 1, 0] = vx
    return w, V


def _recompose(w, V):
    """Compact ``V diag(w) V^T``."""
    a = (w[..., 0] * V[..., 0, 0] ** 2 + w[..., 1] * V[..., 0, 1] ** 2)
    b = (w[..., 0] * V[..., 0, 0] * V[..., 1, 0]
         + w[..., 1] * V[..., 0, 1] * V[..., 1, 1])
    c = (w[..., 0] * V[..., 1, 0] ** 2 + w[..., 1] * V[..., 1, 1] ** 2)
    return np.stack([a, b, c], axis=-1)


def norm2(t):
    """Matrix 2-norm: the largest absolute eigenvalue."""
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("norm2: non-finite tensor entries")
    half_tr = 0.5 * (t[..., 0] + t[..., 2])
    disc = np.hypot(0.5 * (t[..., 0] - t[..., 2]), t[..., 1])
    return np.abs(half_tr) + disc


def abs_regularize(t, alpha):
    """Matrix absolute value plus ``alpha`` times the identity.

    Computed spectrally: each eigenvalue becomes ``|w| + alpha``, so the
    result is SPD whenever ``alpha > 0`` or the input is nonsingular.
    """
    if alpha < 0.0:
        raise ValueError("abs_regularize: alpha must be nonnegative")
    w, V = eig(t)
    w = np.abs(w) + alpha
    if alpha == 0.0 and np.any(w == 0.0):
        raise ValueError(
            "abs_regularize: singular input with alpha = 0 gives a "
            "semidefinite result")
    return _recompose(w, V)


def is_spd(t):
    """True where both eigenvalues are strictly positive."""
    t = np.asarray(t, dtype=float)
    return (t[..., 0] > 0.0) & (det(t) > 0.0)


def check_spd(t, label="tensor"):
    t = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(t)):
        raise ValueError("%s has non-finite entries" % label)
    if not np.all(is_spd(t)):
        raise ValueError("%s is not symmetric positive definite" % label)
    return t


def intersect(a, b):
    """SPD majorant of two SPD tensors via simultaneous diagonalization.

    With ``X^T a X = diag(sigma)`` and ``X^T b X = I`` the result is
    ``X^{-T} diag(max(1, sigma)) X^{-1}``, the smallest tensor dominating
    both in the PSD order obtainable this way.  The congruence is computed
    through the Cholesky factor of ``b``.
    """
    a = check_spd(a, "intersect: first argument")
    b = check_spd(b, "intersect: second argument")
    a, b = np.broadcast_arrays(a, b)

    l11 = np.sqrt(b[..., 0])
    l21 = b[..., 1] / l11
    l22 = np.sqrt(b[..., 2] - l21 ** 2)

    # W = L^{-1} A L^{-T}, exact 2x2 forward/back substitution
    ia = a[..., 0] / l11
    ib = a[..., 1] / l11
    w11 = ia / l11
    w12 = (ib - l21 * w11) / l22
    w22 = (a[..., 2] - 2.0 * l21 * ib + l21 ** 2 * w11) / l22 ** 2
    w = np.stack([w11, w12, w22], axis=-1)

    sigma, V = eig(w)
    sigma = np.maximum(1.0, sigma)
    # X^{-T} = L V, so the result is (L V) diag(sigma) (L V)^T
    LV = np.empty(V.shape)
    LV[..., 0, :] = l11[..., None] * V[..., 0, :]
    LV[..., 1, :] = (l21[..., None] * V[..., 0, :]
                     + l22[..., None] * V[..., 1, :])
    return _recompose(sigma, LV)


def sequential_intersection(tensors):
    """Left fold of :func:`intersect` in list order."""
    if isinstance(tensors, np.ndarray):
        tensors = list(tensors) if tensors.ndim > 1 else [tensors]
    else:
        tensors = list(tensors)
    if len(tensors) == 0:
        raise ValueError("sequential_intersection: empty tensor list")
    out = check_spd(np.asarray(tensors[0], dtype=float),
                    "sequential_intersection: element 0")
    for i, t in enumerate(tensors[1:], start=1):
        out = intersect(out, t)
    return out


def matvec_quadratic(t, e):
    """Quadratic form ``e^T t e`` for 2-vectors ``e`` (broadcasting)."""
    t = np.asarray(t, dtype=float)
    e = np.asarray(e, dtype=float)
    return (t[..., 0] * e[..., 0] ** 2
            + 2.0 * t[..., 1] * e[..., 0] * e[..., 1]
            + t[..., 2] * e[..., 1] ** 2)
