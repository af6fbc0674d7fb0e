"""Tests for the gradient oracles and their analytic constants."""

import numpy as np
import pytest

from qgm_sim.oracles import (
    ProblemSpec,
    finite_difference_check,
    nonconvex_toy_gradient,
    quadratic_family,
    quadratic_gradient,
    rosenbrock_gradient,
    toy2d_gradient,
    worker_rng,
)


class TestToy2d:
    def test_worker0_from_origin_points_down(self):
        """Target (0,5): grad = ((0,0)-(0,5))/5 = (0,-1); descending moves
        toward the target.  Loss is the distance 5."""
        s = toy2d_gradient(0, np.zeros(2))
        np.testing.assert_allclose(s.grad, [0.0, -1.0], atol=0)
        assert s.loss == 5.0

    def test_worker1_from_origin_points_left(self):
        s = toy2d_gradient(1, np.zeros(2))
        np.testing.assert_allclose(s.grad, [-1.0, 0.0], atol=0)
        assert s.loss == 4.0

    def test_at_target_zero_and_converged(self):
        s = toy2d_gradient(1, np.array([4.0, 0.0]))
        assert np.all(s.grad == 0.0) and s.loss == 0.0 and s.converged

    def test_unit_magnitude_everywhere_else(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.normal(scale=3, size=2)
            assert np.linalg.norm(toy2d_gradient(0, x).grad) == pytest.approx(1.0)

    def test_scale_knob(self):
        s = toy2d_gradient(0, np.zeros(2), scale=2.5)
        np.testing.assert_allclose(s.grad, [0.0, -2.5])


class TestRosenbrock:
    def test_global_minimum(self):
        s = rosenbrock_gradient(np.array([1.0, 1.0]))
        assert s.loss == 0.0
        np.testing.assert_allclose(s.grad, [0.0, 0.0], atol=0)

    def test_origin_by_substitution(self):
        """f(0,0) = 0 + 100 * 1 = 100; df/dx = -4*0*(0) + 200*(0-1) = -200;
        df/dy = 2*(0-0) = 0."""
        s = rosenbrock_gradient(np.zeros(2))
        assert s.loss == 100.0
        np.testing.assert_allclose(s.grad, [-200.0, 0.0], atol=0)

    def test_finite_differences_at_2_2(self):
        assert finite_difference_check(rosenbrock_gradient, np.array([2.0, 2.0])) <= 1e-6

    def test_finite_differences_at_20_random_points(self):
        rng = np.random.default_rng(12)
        for _ in range(20):
            x = rng.uniform(-2, 2, size=2)
            assert finite_difference_check(rosenbrock_gradient, x, h=1e-5) <= 1e-5


class TestNonconvexToy:
    def test_stationary_at_origin(self):
        """u = e^0 (0 - sin 0) = 0 and tanh(0) = 0, so both components
        vanish."""
        s = nonconvex_toy_gradient(np.zeros(2))
        np.testing.assert_allclose(s.grad, [0.0, 0.0], atol=0)
        # loss = log(2) + 10 log(2)
        assert s.loss == pytest.approx(11 * np.log(2.0))

    def test_finite_differences_at_paper_start_point(self):
        assert finite_difference_check(nonconvex_toy_gradient, np.array([-2.0, 0.0])) <= 1e-6

    def test_finite_differences_in_box(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            x = rng.uniform(-3, 3, size=2)
            assert finite_difference_check(nonconvex_toy_gradient, x, h=1e-5) <= 1e-4

    def test_no_overflow_far_out(self):
        s = nonconvex_toy_gradient(np.array([50.0, 0.0]))
        assert np.all(np.isfinite(s.grad)) and np.isfinite(s.loss)


class TestQuadraticFamily:
    def test_zero_gradient_at_local_minimizer(self):
        spec = quadratic_family(dim=4, n_workers=3, zeta_c=0.7, cond=4.0)
        x_w = spec.worker_b(1) / spec.a_diag  # argmin of f_1
        s = quadratic_gradient(spec, 1, x_w, step=0)
        np.testing.assert_allclose(s.grad, np.zeros(4), atol=1e-14)
        assert s.loss == pytest.approx(0.0, abs=1e-28)

    def test_homogeneous_when_zeta_zero(self):
        spec = quadratic_family(dim=4, n_workers=3, zeta_c=0.0)
        x = np.array([0.3, -1.0, 2.0, 0.0])
        grads = [quadratic_gradient(spec, w, x, 0).grad for w in range(3)]
        assert all(np.array_equal(g, grads[0]) for g in grads)
        mean = np.mean(grads, axis=0)
        measured = np.mean([np.sum((g - mean) ** 2) for g in grads])
        assert measured <= 1e-30  # only averaging round-off
        assert spec.heterogeneity_bound == 0.0

    def test_measured_heterogeneity_never_exceeds_bound(self):
        """With shared diagonal A the cross-worker variance is independent
        of x and bounded by zeta_c^2 * max(a)^2 * (1 - 1/n); equality holds
        when A = I."""
        rng = np.random.default_rng(2)
        for cond in (1.0, 9.0):
            spec = quadratic_family(dim=8, n_workers=4, zeta_c=1.3, cond=cond)
            for _ in range(10):
                x = rng.normal(size=8)
                grads = [spec.sample_mean_part(w, x) for w in range(4)]
                mean = np.mean(grads, axis=0)
                measured = np.mean([np.sum((g - mean) ** 2) for g in grads])
                assert measured <= spec.heterogeneity_bound + 1e-12
                if cond == 1.0:
                    assert measured == pytest.approx(spec.heterogeneity_bound)

    def test_monte_carlo_unbiasedness(self):
        """Mean of 1e5 noisy draws approaches the analytic gradient within
        3 (sigma_c / sqrt(N)) sqrt(dim) per coordinate."""
        spec = quadratic_family(dim=4, n_workers=2, zeta_c=0.5, sigma_c=0.1)
        x = np.array([0.5, -0.2, 1.0, 0.7])
        exact = spec.sample_mean_part(0, x)
        n_draws = 10**5
        acc = np.zeros(4)
        for step in range(n_draws):
            acc += quadratic_gradient(spec, 0, x, step).grad
        tol = 3 * (0.1 / np.sqrt(n_draws)) * np.sqrt(4)
        np.testing.assert_allclose(acc / n_draws, exact, atol=tol)

    def test_analytic_constants(self):
        spec = quadratic_family(dim=4, n_workers=4, zeta_c=2.0, sigma_c=0.3, cond=9.0)
        assert spec.smoothness == pytest.approx(9.0)        # max(a)^2 = sqrt(9)^2
        assert spec.noise_bound == pytest.approx(4 * 0.09)
        assert spec.heterogeneity_bound == pytest.approx(4.0 * 9.0 * 0.75)
        np.testing.assert_allclose(spec.mean_gradient(spec.x_star), np.zeros(4), atol=1e-12)

    def test_quadratic_central_differences_are_exact(self):
        spec = quadratic_family(dim=3, n_workers=3, zeta_c=0.4, cond=2.0)
        rng = np.random.default_rng(8)
        for _ in range(5):
            x = rng.normal(size=3)
            err = finite_difference_check(lambda p: quadratic_gradient(spec, 2, p, 0), x)
            assert err <= 1e-7

    def test_heterogeneity_requires_enough_dimensions(self):
        with pytest.raises(ValueError, match="dim >= n_workers"):
            quadratic_family(dim=2, n_workers=4, zeta_c=1.0)


class TestRngStreams:
    def test_same_key_same_stream(self):
        a = worker_rng(123, worker=4, step=9).standard_normal(6)
        b = worker_rng(123, worker=4, step=9).standard_normal(6)
        assert np.array_equal(a, b)

    def test_distinct_keys_distinct_streams(self):
        base = worker_rng(123, 4, 9).standard_normal(6)
        assert not np.array_equal(base, worker_rng(123, 5, 9).standard_normal(6))
        assert not np.array_equal(base, worker_rng(123, 4, 10).standard_normal(6))
        assert not np.array_equal(base, worker_rng(124, 4, 9).standard_normal(6))

    def test_noisy_sample_is_pure(self):
        spec = quadratic_family(dim=4, n_workers=2, sigma_c=0.5)
        x = np.ones(4)
        s1 = spec.sample(1, x, step=7)
        s2 = spec.sample(1, x, step=7)
        assert np.array_equal(s1.grad, s2.grad)
