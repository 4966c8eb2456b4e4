import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import iterblue.estimators as est
from iterblue.errors import DivergenceError, EstimationError, NotPositiveDefiniteError, RankError
from iterblue.estimators import (
    IterationConfig,
    LinearProblem,
    blue,
    iterate_batch,
    iterative_blue,
    ls_estimate,
    oracle_blue_perfect_cww,
    oracle_blue_perfect_model,
)
from iterblue.models import Convolution, Unstructured, conv_matrix, cov_convolution
from iterblue.simulation import ScenarioConfig, gen_scenario

REFERENCE_C_EE = np.diag([1e-4, 1e-5, 1e-6, 1e-6, 1e-6])
X_TRUE = np.array([1.0, 0.5, 0.25])


def normal_equations(h, c, y):
    """Textbook BLUE with an explicitly inverted weight matrix."""
    w = np.linalg.inv(c)
    return np.linalg.inv(h.T @ w @ h) @ (h.T @ w @ y)


def reference_problem(seed=7, sigma=1e-6):
    return gen_scenario(ScenarioConfig(sigma_n_sq=sigma, seed=seed))


class TestLsEstimate:
    def test_noiseless(self, rng):
        h = rng.standard_normal((7, 3))
        np.testing.assert_allclose(ls_estimate(h, h @ X_TRUE), X_TRUE, atol=1e-10)

    def test_identity_model(self, rng):
        y = rng.standard_normal(4)
        np.testing.assert_allclose(ls_estimate(np.eye(4), y), y, atol=1e-15)

    def test_reference_draw_matches_normal_equations(self):
        s = reference_problem()
        h, y = s.H_hat, s.y
        oracle = np.linalg.solve(h.T @ h, h.T @ y)
        np.testing.assert_allclose(ls_estimate(h, y), oracle, rtol=1e-9, atol=0)

    def test_rank_error(self):
        with pytest.raises(RankError):
            ls_estimate(np.ones((4, 2)), np.ones(4))


class TestBlue:
    def test_scaled_identity_is_ls(self, rng):
        h, y = rng.standard_normal((7, 3)), rng.standard_normal(7)
        np.testing.assert_allclose(blue(h, 0.37 * np.eye(7), y), ls_estimate(h, y), rtol=1e-10, atol=1e-12)

    def test_noiseless_exact(self, rng):
        h = rng.standard_normal((6, 2))
        m = rng.standard_normal((6, 6))
        c = m @ m.T + 0.1 * np.eye(6)
        np.testing.assert_allclose(blue(h, c, h @ [2.0, -1.0]), [2.0, -1.0], atol=1e-10)

    def test_explicit_inverse_oracle(self, rng):
        h = rng.standard_normal((3, 2))
        c = np.diag([0.5, 2.0, 0.01])
        y = rng.standard_normal(3)
        np.testing.assert_allclose(blue(h, c, y), normal_equations(h, c, y), rtol=1e-9)

    def test_correlated_weight_oracle(self, rng):
        h = rng.standard_normal((7, 3))
        c = cov_convolution(REFERENCE_C_EE, X_TRUE, 1e-4 * np.eye(7))
        y = rng.standard_normal(7)
        np.testing.assert_allclose(blue(h, c, y), normal_equations(h, c, y), rtol=1e-9)

    def test_rejects_indefinite(self, rng):
        with pytest.raises(NotPositiveDefiniteError):
            blue(rng.standard_normal((3, 2)), -np.eye(3), np.ones(3))

    @settings(max_examples=50, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.floats(1e-3, 1e3),
        st.floats(1e-3, 1e3),
    )
    def test_scale_equivariance(self, seed, alpha, beta):
        r = np.random.default_rng(seed)
        h, y = r.standard_normal((7, 3)), r.standard_normal(7)
        m = r.standard_normal((7, 7))
        c = m @ m.T + np.eye(7)
        base = blue(h, c, y)
        tol = 1e-10 * np.linalg.norm(base)
        assert np.linalg.norm(blue(h, c, alpha * y) - alpha * base) <= 1e-10 * alpha * np.linalg.norm(base)
        assert np.linalg.norm(blue(h, beta * c, y) - base) <= tol

    def test_unbiased_on_true_model(self, rng):
        trials = 100_000
        h = conv_matrix(rng.standard_normal(5), 3)
        m = rng.standard_normal((7, 7))
        c_nn = 1e-2 * (m @ m.T / 7 + np.eye(7))
        low = np.linalg.cholesky(c_nn)
        y = h @ X_TRUE + rng.standard_normal((trials, 7)) @ low.T
        err = blue(np.broadcast_to(h, (trials, 7, 3)), c_nn, y) - X_TRUE
        z = np.abs(err.mean(axis=0)) / (err.std(axis=0, ddof=1) / np.sqrt(trials))
        assert np.all(z < 4)

    def test_stacked_weights(self, rng):
        h = rng.standard_normal((4, 7, 3))
        y = rng.standard_normal((4, 7))
        c = np.stack([np.diag(rng.uniform(0.1, 1, 7)) for _ in range(4)])
        out = blue(h, c, y)
        for t in range(4):
            np.testing.assert_array_equal(out[t], blue(h[t], c[t], y[t]))


class TestOracles:
    def test_perfect_model_exact_without_errors(self):
        s = gen_scenario(ScenarioConfig(c_ee=((0.0,) * 5,) * 5, sigma_n_sq=0.0, seed=3))
        np.testing.assert_allclose(oracle_blue_perfect_model(s.H_true, 1e-6 * np.eye(7), s.y), X_TRUE, atol=1e-12)

    def test_delegation_bitwise(self):
        s = reference_problem()
        c = s.problem.covariance(X_TRUE)
        np.testing.assert_array_equal(
            oracle_blue_perfect_model(s.H_true, s.c_nn, s.y), blue(s.H_true, s.c_nn, s.y)
        )
        np.testing.assert_array_equal(oracle_blue_perfect_cww(s.H_hat, c, s.y), blue(s.H_hat, c, s.y))

    def test_perfect_cww_collapses_without_model_error(self):
        s = reference_problem()
        c_ww = cov_convolution(np.zeros((5, 5)), X_TRUE, s.c_nn)
        np.testing.assert_array_equal(
            oracle_blue_perfect_cww(s.H_hat, c_ww, s.y), blue(s.H_hat, s.c_nn, s.y)
        )


def unstructured_problem(rng, v, sigma=1e-3, n_y=8, n_x=3):
    h_hat = rng.standard_normal((n_y, n_x))
    y = h_hat @ rng.standard_normal(n_x) + np.sqrt(sigma) * rng.standard_normal(n_y)
    return LinearProblem(y, h_hat, sigma * np.eye(n_y), Unstructured(v))


class TestIterativeBlue:
    def test_zero_iterations_is_ls(self):
        s = reference_problem()
        trace = iterative_blue(s.problem, IterationConfig(n_iter=0))
        assert trace.iterations_run == 0
        np.testing.assert_array_equal(trace.final, ls_estimate(s.H_hat, s.y))

    def test_records_every_iterate(self):
        s = reference_problem()
        trace = iterative_blue(s.problem, IterationConfig(n_iter=4))
        assert len(trace.estimates) == 5 and trace.iterations_run == 4
        assert not trace.stopped_early
        for k in range(4):
            expected = blue(s.H_hat, s.problem.covariance(trace.estimates[k]), s.y)
            np.testing.assert_array_equal(trace.estimates[k + 1], expected)

    def test_no_uncertainty_constant_trace(self, rng):
        p = unstructured_problem(rng, np.zeros((8, 3)))
        trace = iterative_blue(p, IterationConfig(n_iter=5))
        target = blue(p.h_hat, p.c_nn, p.y)
        for x in trace.estimates[1:]:
            np.testing.assert_array_equal(x, target)

    def test_constant_variance_degenerates_to_ls(self, rng):
        p = unstructured_problem(rng, np.full((8, 3), 0.02))
        trace = iterative_blue(p, IterationConfig(n_iter=10))
        for x in trace.estimates:
            np.testing.assert_allclose(x, trace.estimates[0], rtol=0, atol=1e-12)

    def test_early_stop(self):
        s = reference_problem()
        trace = iterative_blue(s.problem, IterationConfig(n_iter=50, stop_tol=1e-8))
        assert trace.stopped_early and trace.iterations_run < 50
        a, b = trace.estimates[-2], trace.estimates[-1]
        assert np.linalg.norm(b - a) <= 1e-8 * np.linalg.norm(a)

    def test_deterministic(self):
        s = reference_problem(seed=11)
        t1 = iterative_blue(s.problem).as_array()
        t2 = iterative_blue(reference_problem(seed=11).problem).as_array()
        np.testing.assert_array_equal(t1, t2)

    def test_single_matches_batch_row(self):
        s = reference_problem(seed=5)
        single = iterative_blue(s.problem, IterationConfig(n_iter=6)).as_array()
        batch, div, k, _ = iterate_batch(s.H_hat[None], s.y[None], s.problem.covariance, 6)
        assert k == 6 and not div.any()
        np.testing.assert_array_equal(batch[0], single)

    def test_divergence_detected_with_trace(self, monkeypatch):
        s = reference_problem()
        calls = {"n": 0}
        real = est.blue

        def flaky(h, c, y):
            calls["n"] += 1
            out = real(h, c, y)
            return out * np.inf if calls["n"] == 3 else out

        monkeypatch.setattr(est, "blue", flaky)
        with pytest.raises(DivergenceError) as info:
            iterative_blue(s.problem, IterationConfig(n_iter=10))
        assert info.value.trace.iterations_run == 2

    def test_norm_explosion_is_divergence(self, monkeypatch):
        s = reference_problem()
        monkeypatch.setattr(est, "blue", lambda h, c, y: np.full(3, 1e15))
        with pytest.raises(DivergenceError) as info:
            iterative_blue(s.problem, IterationConfig(n_iter=3))
        assert info.value.trace.iterations_run == 0

    def test_solver_error_carries_trace(self, monkeypatch):
        s = reference_problem()
        real = est.blue
        calls = {"n": 0}

        def failing(h, c, y):
            calls["n"] += 1
            if calls["n"] == 2:
                raise NotPositiveDefiniteError("boom")
            return real(h, c, y)

        monkeypatch.setattr(est, "blue", failing)
        with pytest.raises(EstimationError) as info:
            iterative_blue(s.problem, IterationConfig(n_iter=5))
        assert info.value.trace.iterations_run == 1
        assert not isinstance(info.value, DivergenceError)

    def test_plug_in_covariances_are_spd(self):
        cfgs = [ScenarioConfig(sigma_n_sq=s, seed=i) for i, s in enumerate([1e-8, 1e-6, 1e-3])]
        for cfg in cfgs:
            s = gen_scenario(cfg)
            seen = []

            def check(k, c):
                assert np.max(np.abs(c - np.swapaxes(c, -1, -2))) <= 1e-12 * np.abs(c).max()
                assert np.linalg.eigvalsh(c).min() > 0
                seen.append(k)

            iterate_batch(s.H_hat[None], s.y[None], s.problem.covariance, 10, on_covariance=check)
            assert seen == list(range(10))

    def test_batch_flags_divergent_rows_only(self, monkeypatch):
        s = reference_problem()
        h = np.stack([s.H_hat, s.H_hat, s.H_hat])
        y = np.stack([s.y, s.y, s.y])
        real = est.blue
        calls = {"n": 0}

        def poisoned(h, c, y):
            calls["n"] += 1
            out = real(h, c, y)
            if calls["n"] == 2:
                out[1] = np.nan
            return out

        monkeypatch.setattr(est, "blue", poisoned)
        out, div, k, _ = iterate_batch(h, y, s.problem.covariance, 4)
        np.testing.assert_array_equal(div, [False, True, False])
        assert k == 4
        assert np.all(np.isfinite(out[[0, 2]]))
        assert np.all(np.isfinite(out[1, :2])) and np.all(np.isnan(out[1, 2:]))
        np.testing.assert_array_equal(out[0], out[2])


class TestLinearProblem:
    def test_requires_positive_definite_noise(self, rng):
        with pytest.raises(NotPositiveDefiniteError):
            LinearProblem(np.ones(7), rng.standard_normal((7, 3)), np.zeros((7, 7)), Convolution(REFERENCE_C_EE, 3))

    def test_shape_consistency(self, rng):
        from iterblue.errors import DimensionError

        with pytest.raises(DimensionError):
            LinearProblem(np.ones(6), rng.standard_normal((7, 3)), np.eye(7), Convolution(REFERENCE_C_EE, 3))
        with pytest.raises(DimensionError):
            LinearProblem(np.ones(7), rng.standard_normal((7, 2)), np.eye(7), Convolution(REFERENCE_C_EE, 3))

    def test_iteration_config_validation(self):
        with pytest.raises(ValueError):
            IterationConfig(n_iter=-1)
        with pytest.raises(ValueError):
            IterationConfig(stop_tol=-0.1)
