import numpy as np
import pytest

from icgopt import spectral
from icgopt.spectral import dg, diag_extract, eps_transfer, lift, svd, vectorize


def frob(Z):
    return float(np.linalg.norm(Z))


class TestSvd:
    def test_identity(self):
        t = svd(np.eye(3))
        assert np.allclose(t.s, [1.0, 1.0, 1.0])

    def test_diagonal_reorder(self):
        t = svd(dg([1.0, 3.0, 2.0], 3, 3))
        assert np.allclose(t.s, [3.0, 2.0, 1.0])
        # frames of a diagonal matrix are signed permutations
        assert np.allclose(np.abs(t.P.T @ t.P), np.eye(3), atol=1e-12)
        assert np.allclose(np.sort(np.abs(t.P).ravel()), np.sort(np.eye(3).ravel()), atol=1e-12)

    @pytest.mark.parametrize("seed", range(8))
    def test_reconstruction(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(4, 3))
        t = svd(Z)
        assert frob(lift(t, t.s) - Z) <= spectral.RECONSTRUCTION_TOL * (1 + frob(Z))

    @pytest.mark.parametrize("seed", range(8))
    def test_factor_invariants(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(5, 7))
        t = svd(Z)
        r = t.rank_bound
        assert np.max(np.abs(t.P.T @ t.P - np.eye(r))) <= spectral.ORTHONORMALITY_TOL
        assert np.max(np.abs(t.Q.T @ t.Q - np.eye(r))) <= spectral.ORTHONORMALITY_TOL
        assert np.all(np.diff(t.s) <= 0)
        assert np.all(t.s >= 0)

    def test_zero_matrix_convention(self):
        t = svd(np.zeros((3, 2)))
        assert np.allclose(t.s, 0)
        assert np.allclose(t.P, np.eye(3, 2))
        assert np.allclose(t.Q, np.eye(2, 2))

    def test_nonfinite_rejected(self):
        Z = np.ones((2, 2))
        Z[0, 1] = np.nan
        with pytest.raises(ValueError):
            svd(Z)


class TestDg:
    def test_definition(self):
        assert np.array_equal(dg([1.0, 2.0], 2, 3), [[1, 0, 0], [0, 2, 0]])

    def test_degenerate_empty(self):
        assert dg([], 0, 0).shape == (0, 0)

    def test_scalar(self):
        assert np.array_equal(dg([5.0], 1, 1), [[5.0]])

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            dg([1.0, 2.0, 3.0], 2, 3)


class TestDiagExtract:
    def test_definition(self):
        assert np.array_equal(diag_extract([[1.0, 2.0], [3.0, 4.0]]), [1.0, 4.0])

    def test_round_trip_with_dg(self):
        assert np.array_equal(diag_extract(dg([7.0, 8.0], 2, 2)), [7.0, 8.0])

    def test_rectangular(self):
        rng = np.random.default_rng(0)
        Z = rng.normal(size=(3, 2))
        assert np.array_equal(diag_extract(Z), [Z[0, 0], Z[1, 1]])


class TestLiftVectorize:
    def _identity_triple(self, m, n):
        r = min(m, n)
        return spectral.SpectralTriple(np.eye(m, r), np.ones(r), np.eye(n, r))

    def test_lift_identity_frames(self):
        t = self._identity_triple(2, 2)
        assert np.array_equal(lift(t, [1.0, 2.0]), dg([1.0, 2.0], 2, 2))

    def test_lift_reconstructs(self):
        rng = np.random.default_rng(1)
        Z = rng.normal(size=(4, 3))
        t = svd(Z)
        assert frob(lift(t, t.s) - Z) <= 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_lift_vectorize_round_trip(self, seed):
        rng = np.random.default_rng(seed)
        t = svd(rng.normal(size=(5, 3)))
        u = rng.normal(size=3)
        assert np.allclose(vectorize(t, lift(t, u)), u, atol=1e-12)

    def test_vectorize_identity_frames(self):
        t = self._identity_triple(2, 2)
        assert np.array_equal(vectorize(t, dg([3.0, 1.0], 2, 2)), [3.0, 1.0])

    @pytest.mark.parametrize("seed", range(5))
    def test_vectorize_contraction(self, seed):
        # frame coordinates never exceed the Frobenius norm
        rng = np.random.default_rng(seed)
        t = svd(rng.normal(size=(4, 4)))
        U = rng.normal(size=(4, 4))
        assert np.linalg.norm(vectorize(t, U)) <= frob(U) + 1e-12

    def test_shape_errors(self):
        t = self._identity_triple(3, 2)
        with pytest.raises(ValueError):
            lift(t, [1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            vectorize(t, np.zeros((2, 2)))


class TestEpsTransfer:
    def test_simultaneous_svd_keeps_eps(self):
        Z = dg([3.0, 1.0], 2, 2)
        S = dg([2.0, 0.5], 2, 2)
        assert eps_transfer(S, Z, 1.5) == pytest.approx(1.5, abs=1e-12)

    def test_antidiagonal_case(self):
        # sigma products 2, matrix inner product 0
        Z = np.eye(2)
        S = np.array([[0.0, 1.0], [1.0, 0.0]])
        assert eps_transfer(S, Z, 2.0) == pytest.approx(0.0, abs=1e-12)

    def test_self_pair_norm_identity(self):
        rng = np.random.default_rng(2)
        Z = rng.normal(size=(3, 3))
        assert eps_transfer(Z, Z, 0.0) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("seed", range(20))
    def test_von_neumann_slack(self, seed):
        rng = np.random.default_rng(seed)
        Z = rng.normal(size=(4, 5))
        S = rng.normal(size=(4, 5))
        # the trace gap is nonnegative, so eps = 0 can only shrink
        gap = -eps_transfer(S, Z, 0.0)
        assert gap >= -1e-10
        # and any eps at least the gap keeps the transferred value nonnegative
        assert eps_transfer(S, Z, gap + 0.1) >= 0.1 - 1e-10

    def test_negative_eps_rejected(self):
        with pytest.raises(ValueError):
            eps_transfer(np.eye(2), np.eye(2), -1.0)


def _nuclear_gap(S, Z, w):
    """Conjugate gap of the w * nuclear norm: value + conjugate - pairing."""
    sz = np.linalg.svd(Z, compute_uv=False)
    ss = np.linalg.svd(S, compute_uv=False)
    if ss.max(initial=0.0) > w * (1 + 1e-12):
        return np.inf
    return w * sz.sum() - float(np.vdot(Z, S))


def _l1_gap(s_vec, z_vec, w):
    if np.max(np.abs(s_vec), initial=0.0) > w * (1 + 1e-12):
        return np.inf
    return w * np.abs(z_vec).sum() - float(z_vec @ s_vec)


class TestSubdifferentialTransfer:
    """Membership transfers between matrix and vector sides with the shifted eps."""

    @pytest.mark.parametrize("seed", range(25))
    def test_both_directions(self, seed):
        rng = np.random.default_rng(seed)
        w = 0.5 + rng.uniform()
        Z = rng.normal(size=(5, 4))
        S = rng.normal(size=(5, 4))
        S *= w / np.linalg.svd(S, compute_uv=False).max() * rng.uniform(0.2, 1.0)
        gap = _nuclear_gap(S, Z, w)
        for extra in (0.0, 0.3, 2.0):
            eps = gap + extra
            eps_v = eps_transfer(S, Z, eps)
            vec_gap = _l1_gap(np.linalg.svd(S, compute_uv=False), np.linalg.svd(Z, compute_uv=False), w)
            # matrix membership (eps >= gap) holds iff vector membership at eps_v
            assert eps >= gap - 1e-8
            assert eps_v >= vec_gap - 1e-8
        # now break membership: an eps below the gap fails on both sides
        if gap > 1e-6:
            eps_bad = gap * 0.5
            eps_v_bad = eps_transfer(S, Z, eps_bad)
            vec_gap = _l1_gap(np.linalg.svd(S, compute_uv=False), np.linalg.svd(Z, compute_uv=False), w)
            assert eps_bad < gap
            assert eps_v_bad < vec_gap + 1e-8
