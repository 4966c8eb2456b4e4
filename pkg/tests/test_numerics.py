import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from iterblue.errors import ContractError, DimensionError, NotPositiveDefiniteError, RankError
from iterblue.numerics import cholesky_spd, lstsq, mat_mul, solve_spd


def random_spd(rng, n, eps=1e-6):
    m = rng.standard_normal((n, n))
    return m.T @ m + eps * np.eye(n)


class TestMatMul:
    def test_identity(self, rng):
        a = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(mat_mul(np.eye(3), a), a)

    def test_annihilator(self, rng):
        a = rng.standard_normal((3, 4))
        np.testing.assert_array_equal(mat_mul(a, np.zeros((4, 2))), np.zeros((3, 2)))

    def test_hand_expansion(self):
        np.testing.assert_array_equal(mat_mul([[1, 2], [3, 4]], [[1], [1]]), [[3], [7]])

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mat_mul(np.ones((2, 3)), np.ones((2, 3)))

    def test_rejects_non_finite(self):
        with pytest.raises(ContractError):
            mat_mul([[np.nan]], [[1.0]])

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_associative(self, seed):
        r = np.random.default_rng(seed)
        a, b, c = r.standard_normal((4, 5)), r.standard_normal((5, 3)), r.standard_normal((3, 6))
        left = mat_mul(mat_mul(a, b), c)
        right = mat_mul(a, mat_mul(b, c))
        # relative to the scale of the summed products
        scale = np.abs(a) @ np.abs(b) @ np.abs(c)
        assert np.all(np.abs(left - right) <= 1e-12 * scale)


class TestSolveSpd:
    def test_identity(self, rng):
        b = rng.standard_normal((4, 2))
        np.testing.assert_array_equal(solve_spd(np.eye(4), b), b)

    def test_diagonal_scaling(self):
        np.testing.assert_allclose(solve_spd(4 * np.eye(2), [[8], [4]]), [[2], [1]], rtol=0, atol=1e-15)

    def test_round_trip(self, rng):
        m = rng.standard_normal((6, 6))
        a = m.T @ m + np.eye(6)
        x0 = rng.standard_normal((6, 3))
        np.testing.assert_allclose(solve_spd(a, a @ x0), x0, atol=1e-8)

    def test_vector_rhs(self, rng):
        a = random_spd(rng, 5, 1.0)
        x0 = rng.standard_normal(5)
        np.testing.assert_allclose(solve_spd(a, a @ x0), x0, atol=1e-10)

    def test_rejects_asymmetric(self):
        with pytest.raises(ContractError):
            solve_spd([[2.0, 1.0], [0.0, 2.0]], [[1.0], [1.0]])

    def test_tolerates_roundoff_asymmetry(self, rng):
        a = random_spd(rng, 4, 1.0)
        a[0, 1] *= 1 + 1e-13
        solve_spd(a, np.ones((4, 1)))

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefiniteError):
            solve_spd([[1.0, 0.0], [0.0, -1.0]], [[1.0], [1.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            solve_spd(np.eye(3), np.ones((2, 1)))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1), st.integers(1, 8))
    def test_residual_bound(self, seed, n):
        r = np.random.default_rng(seed)
        a = random_spd(r, n)
        b = r.standard_normal((n, 2))
        x = solve_spd(a, b)
        assert np.linalg.norm(a @ x - b) <= 1e-8 * np.linalg.norm(b)

    def test_batch_matches_single_bitwise(self, rng):
        a = np.stack([random_spd(rng, 5, 1.0) for _ in range(4)])
        b = rng.standard_normal((4, 5, 2))
        batch = solve_spd(a, b)
        for t in range(4):
            np.testing.assert_array_equal(batch[t], solve_spd(a[t], b[t]))

    def test_cholesky_factor(self, rng):
        a = random_spd(rng, 5, 1.0)
        low = cholesky_spd(a)
        np.testing.assert_allclose(low @ low.T, a, atol=1e-12)
        np.testing.assert_array_equal(np.triu(low, 1), 0.0)


class TestLstsq:
    def test_square_exact(self, rng):
        a = rng.standard_normal((4, 4)) + 4 * np.eye(4)
        x0 = rng.standard_normal(4)
        np.testing.assert_allclose(lstsq(a, a @ x0), x0, atol=1e-12)

    def test_mean_of_two(self):
        np.testing.assert_allclose(lstsq([[1.0], [1.0]], [1.0, 3.0]), [2.0], atol=1e-15)

    def test_noiseless_tall(self, rng):
        a = rng.standard_normal((7, 3))
        x0 = rng.standard_normal(3)
        np.testing.assert_allclose(lstsq(a, a @ x0), x0, atol=1e-10)

    def test_rank_deficient(self):
        a = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]])
        with pytest.raises(RankError):
            lstsq(a, [1.0, 2.0, 3.0])

    def test_zero_matrix(self):
        with pytest.raises(RankError):
            lstsq(np.zeros((3, 2)), np.ones(3))

    def test_wide_rejected(self):
        with pytest.raises(DimensionError):
            lstsq(np.ones((2, 3)), np.ones(2))

    @settings(max_examples=60, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_agrees_with_normal_equations(self, seed):
        r = np.random.default_rng(seed)
        a = r.standard_normal((9, 4))
        if np.linalg.cond(a) > 1e6:
            return
        y = r.standard_normal(9)
        x_qr = lstsq(a, y)
        x_ne = solve_spd(a.T @ a, a.T @ y)
        assert np.linalg.norm(x_qr - x_ne) <= 1e-8 * np.linalg.norm(x_ne)

    def test_batched(self, rng):
        a = rng.standard_normal((5, 7, 3))
        y = rng.standard_normal((5, 7))
        out = lstsq(a, y)
        for t in range(5):
            np.testing.assert_array_equal(out[t], lstsq(a[t], y[t]))
