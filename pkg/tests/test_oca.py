import numpy as np
import pytest

from tiltba.errors import FactorizationError
from tiltba.oca import (
    AdaptiveConfig,
    OCAConfig,
    bisect_lambda,
    direction_recurrence,
    oca_adaptive_solve,
    oca_directions,
    oca_solve,
)
from tiltba.synth import SynthConfig, generate
from tiltba.trace import Termination

from toys import Quadratic, random_spd

HALF_SQUARE = Quadratic([[1.0]])


def matrix_power_iterates(H, b, x0, lam, steps):
    """x_{k+1} - x* = M^{k+1} (x_k - x*) with M = lam (lam I + H)^-1, by explicit powers."""
    x_star = np.linalg.solve(H, b)
    M = lam * np.linalg.inv(lam * np.eye(len(H)) + H)
    xs, x = [], np.array(x0, dtype=float)
    for k in range(steps):
        x = x_star + np.linalg.matrix_power(M, k + 1) @ (x - x_star)
        xs.append(x)
    return xs


class TestDirections:
    def test_first_direction(self):
        assert oca_directions(HALF_SQUARE, [1.0], 0, 1.0)[0] == pytest.approx(0.5)

    def test_second_direction(self):
        assert oca_directions(HALF_SQUARE, [1.0], 1, 1.0)[0] == pytest.approx(0.75)

    def test_closed_form_1d(self):
        for lam in (0.3, 1.0, 4.0):
            for k in range(6):
                expected = 1 - (lam / (1 + lam)) ** (k + 1)
                assert oca_directions(HALF_SQUARE, [1.0], k, lam)[0] == pytest.approx(expected, rel=1e-14)

    def test_zero_gradient(self):
        prob = Quadratic(np.diag([1.0, 2.0, 3.0]))
        for k in range(5):
            np.testing.assert_array_equal(oca_directions(prob, np.zeros(3), k, 0.7), 0.0)

    def test_inner_cap(self):
        capped = oca_directions(HALF_SQUARE, [1.0], 10, 1.0, inner_cap=1)
        assert capped[0] == pytest.approx(0.75)

    def test_indefinite_system(self):
        with pytest.raises(FactorizationError, match="increase lambda"):
            direction_recurrence(np.ones(2), np.diag([1.0, -5.0]), 1.0, 0)

    def test_contraction(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            H = random_spd(rng, 5)
            grad = rng.normal(size=5)
            lam = rng.uniform(0.1, 5)
            rho = np.linalg.norm(lam * np.linalg.inv(lam * np.eye(5) + H), 2)
            assert rho < 1
            gs = [direction_recurrence(grad, H, lam, k) for k in range(8)]
            for l in range(1, 7):
                lhs = np.linalg.norm(gs[l + 1] - gs[l])
                assert lhs <= rho * np.linalg.norm(gs[l] - gs[l - 1]) * (1 + 1e-10) + 1e-15

    def test_spectral_radius_monotone_in_lambda(self):
        rng = np.random.default_rng(1)
        lams = np.geomspace(1e-3, 1e3, 40)
        for _ in range(10):
            H = random_spd(rng, 5, lo=0.0, hi=10.0)
            radii = [
                np.abs(np.linalg.eigvals(lam * np.linalg.inv(lam * np.eye(5) + H))).max()
                for lam in lams
            ]
            assert np.all(np.diff(radii) >= -1e-12)


class TestFixedSolve:
    def test_one_dimensional_iterates(self):
        report = oca_solve(HALF_SQUARE, [1.0], OCAConfig(lambda0=1.0, max_iter=2))
        assert report.params[0] == pytest.approx(0.125, rel=1e-15)
        first = oca_solve(HALF_SQUARE, [1.0], OCAConfig(lambda0=1.0, max_iter=1))
        assert first.params[0] == pytest.approx(0.5, rel=1e-15)

    def test_zero_gradient_start(self):
        report = oca_solve(Quadratic(np.eye(3)), np.zeros(3))
        assert report.termination is Termination.CONVERGED
        assert report.iterations == 1 and report.trace[0].step_norm == 0.0

    def test_matches_matrix_power_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(10):
            H = random_spd(rng, 5)
            b = rng.normal(size=5)
            x0 = rng.normal(size=5) * 10
            lam = rng.uniform(0.2, 3.0)
            prob = Quadratic(H, b)
            oracle = matrix_power_iterates(H, b, x0, lam, 10)
            x = x0
            for k in range(10):
                x = x - direction_recurrence(prob.gradient(x), H, lam, k)
                np.testing.assert_allclose(x, oracle[k], rtol=0, atol=1e-10 * (1 + np.abs(x0).max()))

    def test_solver_iterates_match_oracle(self):
        rng = np.random.default_rng(3)
        H = random_spd(rng, 5)
        b = rng.normal(size=5)
        x0 = rng.normal(size=5)
        for steps in (1, 4, 10):
            report = oca_solve(Quadratic(H, b), x0, OCAConfig(lambda0=1.0, max_iter=steps, epsilon=1e-300))
            np.testing.assert_allclose(
                report.params, matrix_power_iterates(H, b, x0, 1.0, steps)[-1], atol=1e-10
            )

    def test_indefinite_reports_failure(self):
        prob = Quadratic(np.diag([1.0, -5.0]))
        report = oca_solve(prob, np.ones(2), OCAConfig(lambda0=1.0))
        assert report.termination is Termination.NUMERICAL_FAILURE
        assert "increase lambda" in report.message

    def test_deterministic(self):
        ds, _ = generate(SynthConfig(seed=1))
        a = oca_solve(ds, ds.initial_params(), OCAConfig(lambda0=0.5))
        b = oca_solve(ds, ds.initial_params(), OCAConfig(lambda0=0.5))
        key = lambda r: [(t.cost, t.l1, t.step_norm, t.damping_or_weight) for t in r.trace]
        assert key(a) == key(b)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            OCAConfig(lambda0=0.0)
        with pytest.raises(ValueError):
            AdaptiveConfig(lambda0=1.0, lambda1=2.0)
        with pytest.raises(ValueError):
            OCAConfig(inner_cap=0)


class _FlatCost(Quadratic):
    """Quadratic gradient and Hessian, but a cost that never changes."""

    def cost(self, x):
        return 1.0


class TestBisection:
    def test_monotone_hand_trace(self):
        x = np.array([1.0])
        g_prev = oca_directions(HALF_SQUARE, x, 0, 1.0)
        cost1 = HALF_SQUARE.cost(x - g_prev)
        probes = []
        lam, g = bisect_lambda(HALF_SQUARE, x, 0, 1.0, cost1, 0.1, probes=probes)
        assert [c for c, _ in probes] == [0.5, 0.25, 0.125, 0.0625]
        assert lam == 0.0625
        assert g[0] == pytest.approx(1 / 1.0625)

    def test_tie_breaks_immediately(self):
        prob = _FlatCost([[1.0]])
        probes = []
        lam, _ = bisect_lambda(prob, [1.0], 0, 1.0, 1.0, 0.1, probes=probes)
        assert lam == 0.5 and len(probes) == 1

    def test_degenerate_interval(self):
        probes = []
        lam, g = bisect_lambda(HALF_SQUARE, [1.0], 0, 0.08, 0.0, threshold=0.1, probes=probes)
        assert lam == 0.04 and len(probes) == 1
        assert g[0] == pytest.approx(1 / 1.04)

    def test_never_exceeds_previous(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            H = random_spd(rng, 4)
            prob = Quadratic(H, rng.normal(size=4))
            x = rng.normal(size=4)
            lam_prev = rng.uniform(0.2, 5)
            cost1 = prob.cost(x - direction_recurrence(prob.gradient(x), H, lam_prev, 2))
            for strict in (False, True):
                lam, _ = bisect_lambda(prob, x, 2, lam_prev, cost1, strict=strict)
                assert 0 < lam <= lam_prev

    def test_strict_keeps_best_probe(self):
        rng = np.random.default_rng(5)
        H = random_spd(rng, 4)
        prob = Quadratic(H, rng.normal(size=4))
        x = rng.normal(size=4)
        cost1 = prob.cost(x - direction_recurrence(prob.gradient(x), H, 2.0, 1))
        probes = []
        lam, g = bisect_lambda(prob, x, 1, 2.0, cost1, strict=True, probes=probes)
        assert prob.cost(x - g) == min(c for _, c in probes)

    def test_failed_probes_count_as_infinite(self):
        # lam I + H is indefinite for lam < 1, so every probe below 1 fails
        prob = Quadratic(np.diag([2.0, -1.0]))
        probes = []
        result = bisect_lambda(prob, np.ones(2), 0, 1.5, 10.0, probes=probes)
        assert probes[0] == (0.75, np.inf)
        assert result is None or result[0] > 1.0


class TestAdaptive:
    def test_lambda_non_increasing_on_quadratic(self):
        rng = np.random.default_rng(6)
        H = random_spd(rng, 5)
        prob = Quadratic(H, rng.normal(size=5))
        report = oca_adaptive_solve(prob, rng.normal(size=5) * 10, AdaptiveConfig(lambda0=4.0, lambda1=4.0))
        lams = report.column("damping_or_weight")
        assert report.converged
        assert np.all(np.diff(lams[1:]) <= 0)

    def test_first_two_iterations_match_fixed(self):
        ds, _ = generate(SynthConfig(seed=2))
        x0 = ds.initial_params()
        fixed = oca_solve(ds, x0, OCAConfig(lambda0=0.5, max_iter=2))
        adaptive = oca_adaptive_solve(ds, x0, AdaptiveConfig(lambda0=0.5, lambda1=0.5, max_iter=2))
        assert [t.cost for t in fixed.trace] == [t.cost for t in adaptive.trace]

    def test_large_noise_instance(self):
        ds, _ = generate(SynthConfig(noise_a=10, noise_b=10, seed=0))
        x0 = ds.initial_params()
        adaptive = oca_adaptive_solve(ds, x0, AdaptiveConfig(lambda0=1e5, lambda1=1e5))
        assert adaptive.converged and adaptive.iterations <= 20
        fixed = oca_solve(ds, x0, OCAConfig(lambda0=1.0))
        assert fixed.termination is Termination.NUMERICAL_FAILURE

    def test_deterministic(self):
        ds, _ = generate(SynthConfig(noise_a=10, noise_b=10, seed=0))
        x0 = ds.initial_params()
        config = AdaptiveConfig(lambda0=1e5, lambda1=1e5)
        a, b = oca_adaptive_solve(ds, x0, config), oca_adaptive_solve(ds, x0, config)
        np.testing.assert_array_equal(a.column("damping_or_weight"), b.column("damping_or_weight"))
        np.testing.assert_array_equal(a.params, b.params)
