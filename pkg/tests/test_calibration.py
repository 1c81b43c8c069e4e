"""Calibration-model checks against dense joint-Gaussian oracles."""

import numpy as np
import pytest
import sympy as sp

from gpcalib.calibration import (
    CalibParams,
    ComputerModel,
    FieldDataset,
    ParamTransform,
    PriorSpec,
    log_prior,
    marginal_loglik,
    mean_basis_eval,
    predict,
    transform_params,
    untransform_params,
)
from gpcalib.discrepancy import DiscrepancySpec, GASP, SGASP, scaled_cov
from gpcalib.kernels import KernelSpec, corr_matrix
from gpcalib.linalg import MVNModel, mvn_logdensity


def _constant_model(bounds=((0.0, 10.0),)):
    return ComputerModel(
        evaluator=lambda X, th: np.full(np.atleast_2d(X).shape[0], th[0]),
        theta_bounds=bounds,
        vectorized=True,
    )


def _dataset(n=6, seed=0, p=1):
    rng = np.random.default_rng(seed)
    X = np.sort(rng.uniform(size=(n, p)), axis=0)
    y = rng.normal(size=n)
    return FieldDataset(X, y, [[0.0, 1.0]] * p)


def _spec(mode=GASP, p=1, gamma=0.5, lam=None, basis=()):
    return DiscrepancySpec(
        mode, KernelSpec("matern52", [gamma] * p), mean_basis=list(basis), lam=lam
    )


class TestFieldDataset:
    def test_rejects_duplicates(self):
        with pytest.raises(ValueError):
            FieldDataset([[0.1], [0.1], [0.5]], [1.0, 2.0, 3.0], [[0, 1]])

    def test_rejects_out_of_domain(self):
        with pytest.raises(ValueError):
            FieldDataset([[0.1], [1.5]], [1.0, 2.0], [[0, 1]])

    def test_rejects_single_row(self):
        with pytest.raises(ValueError):
            FieldDataset([[0.1]], [1.0], [[0, 1]])


class TestMeanBasis:
    def test_empty_basis_gives_zero(self):
        spec = _spec()
        np.testing.assert_array_equal(
            mean_basis_eval(np.zeros((4, 1)), spec, []), np.zeros(4)
        )

    def test_intercept(self):
        spec = _spec(basis=[lambda X: np.ones(len(X))])
        np.testing.assert_allclose(
            mean_basis_eval(np.zeros((3, 1)), spec, [2.5]), 2.5
        )

    def test_linear_basis_hand_values(self):
        spec = _spec(basis=[lambda X: np.ones(len(X)), lambda X: X[:, 0]])
        out = mean_basis_eval(np.array([[0.0], [1.0]]), spec, [1.0, 2.0])
        np.testing.assert_allclose(out, [1.0, 3.0])


class TestMarginalLoglik:
    def test_matches_dense_assembly(self):
        data = _dataset(n=6, seed=1)
        model = _constant_model()
        for mode, lam in ((GASP, None), (SGASP, 3.0)):
            spec = _spec(mode=mode, lam=lam)
            params = CalibParams([1.2], [], [2.0], 0.8, 0.05)
            got = marginal_loglik(params, data, model, spec)
            kern = spec.kernel.with_ranges(1.0 / params.psi_delta)
            wspec = spec.with_kernel(kern)
            K = corr_matrix(data.X, data.X, kern) if mode == GASP else scaled_cov(data.X, wspec)
            cov = params.sigma2_delta * (K + params.eta * np.eye(data.n))
            mean = np.full(data.n, 1.2)
            want = mvn_logdensity(data.y, MVNModel(mean=mean, covariance=cov))
            assert np.isclose(got, want, atol=1e-10)

    def test_scaled_matches_plain_at_vanishing_lambda(self):
        data = _dataset(n=12, seed=2)
        model = _constant_model()
        plain = _spec(GASP)
        scaled = _spec(SGASP, lam=1e-10)
        for theta in np.linspace(0.05, 9.95, 10):
            params = CalibParams([theta], [], [2.0], 1.0, 0.01)
            a = marginal_loglik(params, data, model, plain)
            b = marginal_loglik(params, data, model, scaled)
            assert abs(a - b) <= 1e-6

    def test_row_permutation_invariance(self):
        data = _dataset(n=8, seed=3)
        rng = np.random.default_rng(0)
        perm = rng.permutation(data.n)
        permuted = FieldDataset(data.X[perm], data.y[perm], data.domain)
        model = _constant_model()
        spec = _spec(SGASP)
        params = CalibParams([0.7], [], [1.5], 1.1, 0.1)
        # constraint points default to the design, so pin them to keep the
        # transform identical across orderings
        pinned = DiscrepancySpec(SGASP, spec.kernel, constraint_points=data.X, lam=4.0)
        a = marginal_loglik(params, data, model, pinned)
        b = marginal_loglik(params, permuted, model, pinned)
        assert np.isclose(a, b, rtol=1e-10)

    def test_finite_with_prior_on_interior(self):
        data = _dataset(n=10, seed=4)
        model = _constant_model()
        spec = _spec(GASP)
        prior = PriorSpec.default(data)
        params = CalibParams([2.0], [], [3.0], 0.5, 0.2)
        total = marginal_loglik(params, data, model, spec) + log_prior(
            params, prior, model.theta_bounds
        )
        assert np.isfinite(total)


class TestLoglikDifferenceIdentity:
    """E[loglik(true mean) - loglik(shifted mean)] = half the shifted quad form."""

    def test_symbolic_three_dimensional(self):
        y = sp.Matrix(sp.symbols("y0 y1 y2"))
        A = sp.Matrix(3, 3, sp.symbols("a0:9"))
        A = (A + A.T) / 2  # stands for the inverse covariance
        one = sp.ones(3, 1)
        diff = sp.expand((((y - one).T * A * (y - one))[0] - (y.T * A * y)[0]) / 2)
        for yi in y:
            assert sp.diff(diff, yi, 2) == 0  # no quadratic y terms survive
        expect = diff.subs({s: 0 for s in y})  # E[y] = 0 kills the linear part
        assert sp.simplify(expect - (one.T * A * one)[0] / 2) == 0

    def test_monte_carlo_small(self):
        n, reps = 30, 200
        x = np.linspace(0, 1, n)[:, None]
        kern = KernelSpec("pow_exp", [0.3], roughness=[1.9])
        R = corr_matrix(x, x, kern)
        jitter = 1e-8 * np.eye(n)
        L = np.linalg.cholesky(R + jitter)
        oracle = 0.5 * np.ones(n) @ np.linalg.solve(R + jitter, np.ones(n))
        data_domain = [[0.0, 1.0]]
        model = _constant_model(bounds=((-1.0, 2.0),))
        spec = DiscrepancySpec(GASP, kern)
        diffs = []
        rng = np.random.default_rng(42)
        for _ in range(reps):
            y = L @ rng.normal(size=n)
            data = FieldDataset(x, y, data_domain)
            p0 = CalibParams([0.0], [], [1.0 / 0.3], 1.0, 0.0)
            p1 = CalibParams([1.0], [], [1.0 / 0.3], 1.0, 0.0)
            diffs.append(
                marginal_loglik(p0, data, model, spec)
                - marginal_loglik(p1, data, model, spec)
            )
        diffs = np.asarray(diffs)
        se = diffs.std(ddof=1) / np.sqrt(reps)
        assert abs(diffs.mean() - oracle) <= 3 * se


class TestLogPrior:
    def test_scale_prior_in_sigma2(self):
        prior = PriorSpec(jr_a=-0.5, jr_b=1.0, jr_C=[1.0])
        base = CalibParams([0.5], [], [1.0], 1.0, 0.0)
        double = CalibParams([0.5], [], [1.0], 2.0, 0.0)
        a = log_prior(base, prior)
        b = log_prior(double, prior)
        assert np.isclose(a - b, np.log(2.0), rtol=1e-12)

    def test_theta_outside_box(self):
        prior = PriorSpec(jr_a=-0.5, jr_b=1.0, jr_C=[1.0])
        params = CalibParams([5.0], [], [1.0], 1.0, 0.0)
        assert log_prior(params, prior, theta_bounds=[[0.0, 1.0]]) == -np.inf

    def test_scalar_value(self):
        # p=1, C=1, a=-1/2, b=1, psi=1, eta=0, sigma2=1 -> log(1^(-1/2) e^-1) = -1
        prior = PriorSpec(jr_a=-0.5, jr_b=1.0, jr_C=[1.0])
        params = CalibParams([0.5], [], [1.0], 1.0, 0.0)
        assert np.isclose(log_prior(params, prior), -1.0, rtol=1e-12)

    def test_default_hyperparameters(self):
        data = _dataset(n=9, p=2, seed=6)
        prior = PriorSpec.default(data)
        assert prior.jr_a == 0.5 - 2
        assert prior.jr_b == 1.0
        np.testing.assert_allclose(prior.jr_C, 1.0 * 9 ** (-0.5), rtol=1e-12)


class TestPredict:
    def test_interpolates_at_tiny_nugget(self):
        data = _dataset(n=7, seed=7)
        model = _constant_model()
        for mode, lam in ((GASP, None), (SGASP, None)):
            spec = _spec(mode=mode, lam=lam)
            params = CalibParams([1.0], [], [2.0], 1.0, 1e-10)
            out = predict(params, data, model, spec, data.X)
            np.testing.assert_allclose(out.full_mean, data.y, atol=1e-6)

    def test_far_field_reverts_to_model(self):
        X = np.array([[0.01], [0.02], [0.03]])
        data = FieldDataset(X, [5.0, 6.0, 7.0], [[0.0, 1.0]])
        model = _constant_model()
        spec = _spec(GASP, gamma=1e-3)
        params = CalibParams([2.0], [], [1e3], 1.5, 0.1)
        out = predict(params, data, model, spec, [[0.99]])
        assert np.isclose(out.full_mean[0], 2.0, atol=1e-9)
        assert np.isclose(out.variance[0], 1.5 * (1.0 + 0.1), rtol=1e-9)

    @pytest.mark.parametrize("mode", [GASP, SGASP])
    def test_augmented_covariance_oracle(self, mode):
        # oracle: dense conditioning of sigma2*K_joint + sigma2_0*I over the
        # stacked (train, new) points, restricted to observed coordinates
        data = _dataset(n=6, seed=8)
        model = _constant_model()
        xstar = np.array([[0.37], [0.81]])
        spec = DiscrepancySpec(
            mode,
            KernelSpec("matern52", [0.5]),
            constraint_points=data.X if mode == SGASP else None,
            lam=3.0 if mode == SGASP else None,
        )
        params = CalibParams([1.3], [], [2.0], 0.9, 0.08)
        joint = np.vstack([data.X, xstar])
        kern = spec.kernel.with_ranges(1.0 / params.psi_delta)
        if mode == GASP:
            Kj = corr_matrix(joint, joint, kern)
        else:
            Kj = scaled_cov(joint, spec.with_kernel(kern))
        sigma2, s20 = params.sigma2_delta, params.sigma2_noise
        cov = sigma2 * Kj + s20 * np.eye(len(joint))
        n = data.n
        mean_obs = np.full(n, 1.3)
        mean_new = np.full(2, 1.3)
        resid = data.y - mean_obs
        inv = np.linalg.inv(cov[:n, :n])
        mean_oracle = mean_new + cov[n:, :n] @ inv @ resid
        var_oracle = np.diag(cov[n:, n:] - cov[n:, :n] @ inv @ cov[:n, n:])
        out = predict(params, data, model, spec, xstar)
        np.testing.assert_allclose(out.full_mean, mean_oracle, atol=1e-8)
        np.testing.assert_allclose(out.variance, var_oracle, atol=1e-8)

    def test_variance_at_least_noise(self):
        data = _dataset(n=10, seed=9)
        model = _constant_model()
        spec = _spec(SGASP)
        params = CalibParams([1.0], [], [3.0], 1.2, 0.3)
        out = predict(params, data, model, spec, np.linspace(0, 1, 50)[:, None])
        assert np.all(out.variance >= params.sigma2_noise - 1e-12)


class TestParamTransform:
    def _params(self):
        return CalibParams([2.5], [0.3], [np.e, 0.5], 1.7, 0.02)

    def test_round_trip(self):
        tr = ParamTransform([[0.0, 10.0]], n_basis=1, p_x=2)
        params = self._params()
        z = tr.to_vector(params)
        back = tr.from_vector(z)
        np.testing.assert_allclose(back.theta, params.theta, rtol=1e-12)
        np.testing.assert_allclose(back.beta_delta, params.beta_delta, rtol=1e-12)
        np.testing.assert_allclose(back.psi_delta, params.psi_delta, rtol=1e-12)
        assert np.isclose(back.sigma2_delta, params.sigma2_delta, rtol=1e-12)
        assert np.isclose(back.eta, params.eta, rtol=1e-9, atol=1e-12)

    def test_round_trip_random(self):
        rng = np.random.default_rng(10)
        tr = ParamTransform([[0.0, 10.0], [-3.0, 4.0]], n_basis=0, p_x=1)
        for _ in range(20):
            params = CalibParams(
                [rng.uniform(0.1, 9.9), rng.uniform(-2.9, 3.9)],
                [],
                [rng.uniform(0.01, 100)],
                rng.uniform(1e-4, 1e4),
                rng.uniform(0, 10),
            )
            back = tr.from_vector(tr.to_vector(params))
            np.testing.assert_allclose(back.theta, params.theta, rtol=1e-12, atol=1e-12)
            np.testing.assert_allclose(back.psi_delta, params.psi_delta, rtol=1e-12)
            assert np.isclose(back.eta, params.eta, rtol=1e-9, atol=1e-12)

    def test_eta_zero_round_trips(self):
        tr = ParamTransform([[0.0, 1.0]], n_basis=0, p_x=1)
        params = CalibParams([0.5], [], [1.0], 1.0, 0.0)
        back = tr.from_vector(tr.to_vector(params))
        assert abs(back.eta) <= 1e-12

    def test_center_maps_to_zero(self):
        tr = ParamTransform([[2.0, 6.0]], n_basis=0, p_x=1)
        z = tr.to_vector(CalibParams([4.0], [], [1.0], 1.0, 0.0))
        assert abs(z[0]) < 1e-12

    def test_log_psi_coordinate(self):
        z = transform_params(CalibParams([0.5], [], [np.e], 1.0, 0.0), [[0.0, 1.0]])
        assert np.isclose(z[1], 1.0, rtol=1e-12)

    def test_module_level_wrappers(self):
        params = CalibParams([0.5], [], [2.0], 1.0, 0.1)
        z = transform_params(params, [[0.0, 1.0]])
        back = untransform_params(z, [[0.0, 1.0]], n_basis=0, p_x=1)
        np.testing.assert_allclose(back.psi_delta, params.psi_delta, rtol=1e-12)
