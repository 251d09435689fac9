import numpy as np
import pytest

from eigadapt import symtensor as st


def random_spd(rng, n=1, log_range=3.0):
    """Random SPD tensors: random rotation, log-uniform eigenvalues."""
    theta = rng.uniform(0.0, np.pi, size=n)
    w = np.exp(rng.uniform(-log_range, log_range, size=(n, 2)))
    c, s = np.cos(theta), np.sin(theta)
    a11 = w[:, 0] * c ** 2 + w[:, 1] * s ** 2
    a12 = (w[:, 0] - w[:, 1]) * c * s
    a22 = w[:, 0] * s ** 2 + w[:, 1] * c ** 2
    return np.stack([a11, a12, a22], axis=-1)


class TestEig:
    def test_diagonal(self):
        w, V = st.eig(st.sym2(2.0, 0.0, 3.0))
        assert np.allclose(w, [2.0, 3.0])
        assert np.allclose(np.abs(V), np.eye(2))

    def test_offdiagonal_hand(self):
        # [[0,2],[2,0]]: characteristic polynomial lambda^2 - 4
        w, V = st.eig(st.sym2(0.0, 2.0, 0.0))
        assert np.allclose(w, [-2.0, 2.0])
        r = 1.0 / np.sqrt(2.0)
        assert np.allclose(np.abs(V[:, 1]), [r, r])
        assert np.allclose(np.abs(V[:, 0]), [r, r])
        assert np.isclose(V[:, 0] @ V[:, 1], 0.0)

    def test_identity(self):
        w, V = st.eig(st.identity())
        assert np.allclose(w, [1.0, 1.0])
        assert np.allclose(V @ V.T, np.eye(2), atol=1e-12)

    def test_reconstruction_and_orthonormality_random(self):
        rng = np.random.default_rng(1234)
        t = random_spd(rng, 1000)
        t[::3, 1] *= -1.0          # mix in indefinite tensors
        t[::5] -= 2.0 * st.identity((t[::5].shape[0],))
        w, V = st.eig(t)
        recon = st._recompose(w, V)
        scale = np.maximum(st.norm2(t), 1e-30)
        assert np.max(np.abs(recon - t).max(axis=-1) / scale) <= 1e-12
        gram = np.einsum("nij,nik->njk", V, V)
        assert np.max(np.abs(gram - np.eye(2))) <= 1e-12
        assert np.all(w[:, 0] <= w[:, 1])

    def test_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            st.eig(np.array([np.nan, 0.0, 1.0]))


class TestAbsRegularize:
    def test_offdiagonal(self):
        out = st.abs_regularize(st.sym2(0.0, 2.0, 0.0), 0.01)
        assert np.allclose(out, st.sym2(2.01, 0.0, 2.01), atol=1e-14)

    def test_diagonal_singular(self):
        out = st.abs_regularize(st.sym2(2.0, 0.0, 0.0), 0.01)
        assert np.allclose(out, st.sym2(2.01, 0.0, 0.01), atol=1e-14)

    def test_identity_alpha_zero(self):
        assert np.allclose(st.abs_regularize(st.identity(), 0.0),
                           st.identity(), atol=1e-15)

    def test_spd_alpha_zero_is_identity_map(self):
        rng = np.random.default_rng(77)
        t = random_spd(rng, 200)
        out = st.abs_regularize(t, 0.0)
        scale = st.norm2(t)
        assert np.max(np.abs(out - t).max(axis=-1) / scale) <= 1e-12

    def test_singular_alpha_zero_raises(self):
        with pytest.raises(ValueError):
            st.abs_regularize(st.sym2(2.0, 0.0, 0.0), 0.0)

    def test_negative_alpha_raises(self):
        with pytest.raises(ValueError):
            st.abs_regularize(st.identity(), -1.0)


class TestIntersect:
    def test_identity_pair(self):
        assert np.allclose(st.intersect(st.identity(), st.identity()),
                           st.identity(), atol=1e-14)

    def test_crossed_diagonals(self):
        out = st.intersect(st.sym2(4.0, 0.0, 1.0), st.sym2(1.0, 0.0, 4.0))
        assert np.allclose(out, st.sym2(4.0, 0.0, 4.0), atol=1e-12)

    def test_dominating_argument(self):
        out = st.intersect(st.sym2(9.0, 0.0, 1.0), st.identity())
        assert np.allclose(out, st.sym2(9.0, 0.0, 1.0), atol=1e-12)

    def test_majorizes_both_random(self):
        rng = np.random.default_rng(42)
        a = random_spd(rng, 1000)
        b = random_spd(rng, 1000)
        c = st.intersect(a, b)
        tol = 1e-10 * st.norm2(c)
        assert np.all(st.eigenvalues(c - a)[:, 0] >= -tol)
        assert np.all(st.eigenvalues(c - b)[:, 0] >= -tol)

    def test_self_intersection_random(self):
        rng = np.random.default_rng(43)
        a = random_spd(rng, 1000)
        c = st.intersect(a, a)
        assert np.max(np.abs(c - a).max(axis=-1) / st.norm2(a)) <= 1e-10

    def test_non_spd_rejected(self):
        with pytest.raises(ValueError):
            st.intersect(st.sym2(1.0, 0.0, -1.0), st.identity())
        with pytest.raises(ValueError):
            st.intersect(st.identity(), st.sym2(0.0, 0.0, 1.0))


class TestSequentialIntersection:
    def test_single(self):
        assert np.allclose(st.sequential_intersection([st.identity()]),
                           st.identity())

    def test_pair(self):
        out = st.sequential_intersection(
            [st.sym2(4.0, 0.0, 1.0), st.sym2(1.0, 0.0, 4.0)])
        assert np.allclose(out, st.sym2(4.0, 0.0, 4.0), atol=1e-12)

    def test_identity_idempotent(self):
        out = st.sequential_intersection([st.identity()] * 4)
        assert np.allclose(out, st.identity(), atol=1e-12)

    def test_repeated_argument_idempotent(self):
        rng = np.random.default_rng(9)
        a = random_spd(rng, 50)
        out = st.sequential_intersection([a] * 5)
        assert np.max(np.abs(out - a).max(axis=-1) / st.norm2(a)) <= 1e-9

    def test_majorizes_all_inputs(self):
        rng = np.random.default_rng(10)
        ts = [random_spd(rng, 100) for _ in range(4)]
        out = st.sequential_intersection(ts)
        tol = 1e-10 * st.norm2(out)
        for t in ts:
            assert np.all(st.eigenvalues(out - t)[:, 0] >= -tol)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            st.sequential_intersection([])


class TestNorm2:
    def test_diagonal(self):
        assert st.norm2(st.sym2(4.0, 0.0, 1.0)) == 4.0

    def test_offdiagonal(self):
        assert np.isclose(st.norm2(st.sym2(0.0, 2.0, 0.0)), 2.0)

    def test_zero(self):
        assert st.norm2(np.zeros(3)) == 0.0


def test_quadratic_form_matches_dense():
    rng = np.random.default_rng(5)
    t = random_spd(rng, 64)
    e = rng.standard_normal((64, 2))
    dense = np.einsum("ni,nij,nj->n", e, st.to_matrix(t), e)
    assert np.allclose(st.matvec_quadratic(t, e), dense, rtol=1e-12)
