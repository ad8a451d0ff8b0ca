import math

import numpy as np
import pytest

from tiltba.calculus import gradient, linearize
from tiltba.errors import FactorizationError
from tiltba.lm import LMConfig, lm_solve, lm_step, mu_update, predicted_change, trust_ratio
from tiltba.model import Dataset, project_many
from tiltba.synth import SynthConfig, generate
from tiltba.trace import Termination

from toys import LinearResidual, small_dataset


class TestStep:
    J = np.array([[1.0]])
    phi = np.array([-5.0])

    def test_gauss_newton_limit(self):
        assert lm_step(self.J, self.phi, 1e-12)[0] == pytest.approx(5.0, rel=1e-10)

    def test_unit_damping(self):
        assert lm_step(self.J, self.phi, 1.0)[0] == pytest.approx(2.5, rel=1e-14)

    def test_zero_residual(self):
        for mu in (1e-6, 1.0, 1e6):
            np.testing.assert_array_equal(lm_step(self.J, np.zeros(1), mu), [0.0])

    def test_rejects_non_positive_mu(self):
        with pytest.raises(ValueError):
            lm_step(self.J, self.phi, 0.0)

    def test_factorization_failure_surfaces(self):
        # rank-one J^T J swamps mu at working precision
        with pytest.raises(FactorizationError):
            lm_step(np.array([[1e8, 1e8]]), np.array([1.0]), 1e-15)


class TestTrustRatio:
    def test_linear_model_is_exact(self):
        rng = np.random.default_rng(0)
        A, b = rng.normal(size=(6, 3)), rng.normal(size=6)
        prob = LinearResidual(A, b)
        x = rng.normal(size=3)
        phi, J = prob.linearize(x)
        d = lm_step(J, phi, 0.3)
        xi = trust_ratio(prob.cost(x), prob.cost(x + d), J, phi, d)
        assert xi == pytest.approx(1.0, rel=1e-10)

    def test_no_change(self):
        J, phi, d = np.eye(2), np.array([1.0, 1.0]), np.array([-0.5, -0.5])
        assert predicted_change(J, phi, d) < 0
        assert trust_ratio(3.0, 3.0, J, phi, d) == 0.0

    def test_half_of_predicted(self):
        # P(d) - Phi = phi d + d^2 / 2 = -4 for J = 1, d = 1
        J, phi, d = np.array([[1.0]]), np.array([-4.5]), np.array([1.0])
        assert predicted_change(J, phi, d) == pytest.approx(-4.0)
        assert trust_ratio(10.0, 8.0, J, phi, d) == pytest.approx(0.5)


class TestMuUpdate:
    @pytest.mark.parametrize("xi, expected", [(0.1, 10.0), (0.5, 1.0), (0.9, 0.1)])
    def test_branches(self, xi, expected):
        assert mu_update(1.0, xi, LMConfig()) == pytest.approx(expected)

    def test_boundaries_keep_mu(self):
        assert mu_update(2.0, 0.25) == 2.0
        assert mu_update(2.0, 0.75) == 2.0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            LMConfig(mu0=0)
        with pytest.raises(ValueError):
            LMConfig(ratio_low=0.8, ratio_high=0.5)


class TestSolve:
    def test_zero_residual_start(self):
        rng = np.random.default_rng(1)
        ds = small_dataset(rng, 3, 4)
        uv = project_many(ds.cameras[ds.image], ds.points[ds.marker])
        ds = Dataset(ds.cameras, ds.points, ds.marker, ds.image, uv, ds.visible)
        report = lm_solve(ds, ds.initial_params())
        assert report.termination is Termination.CONVERGED
        assert report.iterations == 1
        assert report.trace[0].step_norm == 0.0

    def test_linear_least_squares(self):
        rng = np.random.default_rng(2)
        A, b = rng.normal(size=(10, 4)), rng.normal(size=10)
        prob = LinearResidual(A, b)
        report = lm_solve(prob, np.zeros(4), LMConfig(mu0=1e-10))
        assert report.converged and report.iterations <= 3
        x = report.params
        np.testing.assert_allclose(x, np.linalg.lstsq(A, b, rcond=None)[0], rtol=1e-9)
        assert np.linalg.norm(A.T @ (A @ x - b)) < 1e-8

    def test_large_damping_follows_gradient(self):
        rng = np.random.default_rng(3)
        ds = small_dataset(rng, 3, 4)
        x = ds.initial_params()
        phi, J = linearize(ds, x)
        d = lm_step(J, phi, 1e12)
        g = gradient(ds, x)
        cos = -(d @ g) / (np.linalg.norm(d) * np.linalg.norm(g))
        assert cos > 0.9999

    def test_mu_changes_by_fixed_factors(self):
        ds, _ = generate(SynthConfig(seed=4))
        report = lm_solve(ds, ds.initial_params(), LMConfig(mu0=1.0))
        mus = report.column("damping_or_weight")
        assert np.all(mus > 0)
        ratios = mus[1:] / mus[:-1]
        assert np.all(np.isclose(ratios[:, None], [10.0, 1.0, 0.1], rtol=1e-12).any(axis=1))

    def test_converged_final_step_below_epsilon(self):
        ds, _ = generate(SynthConfig(seed=5))
        config = LMConfig(mu0=1.0)
        report = lm_solve(ds, ds.initial_params(), config)
        assert report.converged
        assert report.trace[-1].step_norm < config.epsilon
        assert [r.iter for r in report.trace] == list(range(1, report.iterations + 1))

    def test_deterministic(self):
        ds, _ = generate(SynthConfig(seed=6))
        a = lm_solve(ds, ds.initial_params(), LMConfig(mu0=0.1))
        b = lm_solve(ds, ds.initial_params(), LMConfig(mu0=0.1))
        key = lambda r: [(t.iter, t.cost, t.l1, t.step_norm, t.damping_or_weight) for t in r.trace]
        assert key(a) == key(b)
        np.testing.assert_array_equal(a.params, b.params)

    def test_max_iter(self):
        ds, _ = generate(SynthConfig(seed=7))
        report = lm_solve(ds, ds.initial_params(), LMConfig(max_iter=2))
        assert report.termination is Termination.MAX_ITER
        assert report.iterations == 2

    def test_reject_increase_never_raises_cost(self):
        ds, _ = generate(SynthConfig(noise_a=10, noise_b=10, seed=0))
        x0 = ds.initial_params()
        report = lm_solve(ds, x0, LMConfig(mu0=0.01, max_iter=60, reject_increase=True))
        costs = report.column("cost")
        assert np.all(np.diff(costs) <= 1e-9 * costs[:-1])

    def test_invalid_start(self):
        ds = small_dataset(np.random.default_rng(8))
        x = ds.initial_params()
        x[0] = math.nan
        with pytest.raises(ValueError):
            lm_solve(ds, x)
