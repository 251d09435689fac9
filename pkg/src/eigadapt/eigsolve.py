"""Smallest eigenpairs of the sparse generalized problem A u = lambda M u.

The workhorse is shift-invert Lanczos at shift 0 (ARPACK through scipy,
with the factorization of A done once by SuperLU), followed by a
Rayleigh-Ritz cleanup in the returned subspace so the eigenvectors are
M-orthonormal to machine precision.  Small problems fall back to a dense
solve, which doubles as the oracle path in the tests.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

from .errors import ConvergenceError, SolveError

__all__ = ["EigenSolution", "smallest_eigenpairs"]

_DENSE_CUTOFF = 64
_MAX_RESTARTS = 500


@dataclass
class EigenSolution:
    """k smallest eigenpairs, nondecreasing, with M-orthonormal vectors."""
    eigenvalues: np.ndarray      # (k,)
    eigenvectors: np.ndarray     # (n, k), columns
    residuals: np.ndarray        # (k,) relative residual norms
    iterations: int              # inner solve applications (0 for dense path)


def _normalize_signs(vectors):
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0.0] = 1.0
    return vectors * signs


def _rayleigh_ritz(A, M, V):
    """Re-solve the k-dimensional problem in span(V); returns sorted
    eigenvalues and an M-orthonormal basis."""
    AV = A @ V
    MV = M @ V
    ga = V.T @ AV
    gm = V.T @ MV
    ga = 0.5 * (ga + ga.T)
    gm = 0.5 * (gm + gm.T)
    w, C = scipy.linalg.eigh(ga, gm)
    return w, V @ C


def _residuals(A, M, w, V):
    r = A @ V - M @ V * w[None, :]
    num = np.linalg.norm(r, axis=0)
    den = np.abs(w) * np.linalg.norm(M @ V, axis=0)
    return num / np.where(den > 0.0, den, 1.0)


def smallest_eigenpairs(A, M, k, tol=1e-8, seed=0, v0=None):
    """Compute the k smallest eigenpairs of A u = lambda M u, A and M SPD.

    Deterministic for a fixed seed (or a supplied starting vector v0).
    Raises ConvergenceError with the best iterate if ARPACK stalls, and
    SolveError if the factorization breaks down or eigenvalues come out
    nonpositive.
    """
    n = A.shape[0]
    if A.shape != (n, n) or M.shape != (n, n):
        raise ValueError("A and M must be square and of equal dimension")
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    if not 0.0 < tol <= 1e-2:
        raise ValueError("tol must lie in (0, 1e-2]")

    iterations = 0
    if n <= max(_DENSE_CUTOFF, 2 * k + 2):
        Ad = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M, dtype=float)
        try:
            w, V = scipy.linalg.eigh(Ad, Md)
        except scipy.linalg.LinAlgError as exc:
            raise SolveError("dense generalized eigensolve failed: %s" % exc)
        w, V = w[:k], V[:, :k]
    else:
        Ac = sp.csc_matrix(A)
        try:
            lu = splu(Ac)
        except RuntimeError as exc:
            raise SolveError("sparse factorization of A failed: %s" % exc)

        counter = [0]

        def op(x):
            counter[0] += 1
            return lu.solve(x)

        opinv = LinearOperator(A.shape, matvec=op, dtype=float)
        if v0 is None:
            v0 = np.random.default_rng(seed).standard_normal(n)
        try:
            w, V = eigsh(A, k=k, M=sp.csr_matrix(M), sigma=0.0, which="LM",
                         v0=v0, tol=min(tol, 1e-10), maxiter=_MAX_RESTARTS,
                         OPinv=opinv)
        except ArpackNoConvergence as exc:
            got = len(exc.eigenvalues)
            if got:
                wb, Vb = _rayleigh_ritz(A, M, exc.eigenvectors)
                res = _residuals(A, M, wb, Vb)
            else:
                wb = Vb = res = None
            raise ConvergenceError(
                "eigensolver converged only %d of %d pairs within %d "
                "restarts" % (got, k, _MAX_RESTARTS),
                eigenvalues=wb, eigenvectors=Vb, residuals=res)
        iterations = counter[0]

    w, V = _rayleigh_ritz(A, M, V)
    order = np.argsort(w, kind="stable")
    w = w[order]
    V = _normalize_signs(V[:, order])
    if w[0] <= 0.0:
        raise SolveError("nonpositive eigenvalue %.3e; matrix pair not SPD"
                         % w[0])
    res = _residuals(A, M, w, V)
    if np.any(res > tol):
        raise ConvergenceError(
            "residuals %.3e exceed tolerance %.3e" % (res.max(), tol),
            eigenvalues=w, eigenvectors=V, residuals=res)
    return EigenSolution(eigenvalues=w, eigenvectors=V,
                         residuals=res, iterations=iterations)
