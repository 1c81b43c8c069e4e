"""Two-step calibration baselines and design utilities.

* ``l2_calibrate`` - regress the field data on a Gaussian process first, then
  pick the parameters minimizing the squared distance between that surrogate
  and the computer model over the input domain.
* ``ls_calibrate`` - least squares on the raw observations, then a Gaussian
  process on the residuals for prediction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .calibration import (
    CalibParams,
    ComputerModel,
    FieldDataset,
    PredictiveResult,
    PriorSpec,
    predict,
)
from .design import maximin_lhd, scale_to_domain  # noqa: F401  (maximin_lhd re-exported)
from .discrepancy import GASP, DiscrepancySpec
from .inference import MleResult, mle_fit
from .kernels import KernelSpec
from .workers import thread_map


def _zero_model() -> ComputerModel:
    return ComputerModel(
        evaluator=lambda X, theta: np.zeros(np.atleast_2d(X).shape[0]),
        theta_bounds=[[-1.0, 1.0]],
        vectorized=True,
    )


def _intercept(X):
    return np.ones(np.atleast_2d(X).shape[0])


@dataclass
class SurrogateFit:
    """Constant-mean Gaussian-process regression of observations on inputs."""

    data: FieldDataset
    spec: DiscrepancySpec
    params: CalibParams
    fit: MleResult

    def predict(self, Xstar) -> PredictiveResult:
        return predict(self.params, self.data, _zero_model(), self.spec, Xstar)

    def mean(self, Xstar) -> np.ndarray:
        return self.predict(Xstar).full_mean


def fit_field_gasp(
    data: FieldDataset,
    seed: int = 0,
    n_starts: int = 10,
    penalized: bool = True,
) -> SurrogateFit:
    """Fit a constant-mean Matern GP with nugget to (X, y).

    ``penalized`` regularizes the inverse ranges and nugget ratio with the
    jointly robust prior (posterior-mode fit); the raw likelihood tends to
    chase tiny ranges that interpolate the noise.
    """
    spec = DiscrepancySpec(
        GASP,
        KernelSpec("matern52", data.lengths / 2.0),
        mean_basis=[_intercept],
    )
    prior = PriorSpec.default(data) if penalized else None
    fit = mle_fit(
        data,
        _zero_model(),
        spec,
        n_starts=n_starts,
        seed=seed,
        optimize_theta=False,
        prior=prior,
    )
    return SurrogateFit(data=data, spec=spec, params=fit.best_params, fit=fit)


def _multistart_theta(objective, bounds, n_starts: int, seed: int):
    """Multi-start bounded quasi-Newton over the parameter box."""
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    p = bounds.shape[0]
    U = maximin_lhd(max(n_starts, 2), p, iterations=50, seed=seed)[:n_starts]
    starts = scale_to_domain(U, bounds)

    def run(item):
        idx, x0 = item
        res = minimize(
            objective,
            x0,
            method="L-BFGS-B",
            bounds=[tuple(b) for b in bounds],
            options={"ftol": 1e-12},
        )
        return idx, res

    results = thread_map(run, list(enumerate(starts)))
    usable = [(i, r) for i, r in results if np.isfinite(r.fun)]
    if not usable:
        raise RuntimeError("theta optimization failed from every start")
    idx, best = min(usable, key=lambda t: (t[1].fun, t[0]))
    return np.atleast_1d(best.x), float(best.fun), results


@dataclass
class L2Result:
    theta_hat: np.ndarray
    l2_loss_at_opt: float
    surrogate: SurrogateFit
    per_start: list


def l2_calibrate(
    data: FieldDataset,
    model: ComputerModel,
    quad_points: int | None = None,
    seed: int = 0,
    n_starts: int = 10,
) -> L2Result:
    """Two-step L2 calibration.

    Step 1 regresses the field data on a Gaussian process; step 2 minimizes
    the quadrature approximation of the squared distance between that
    surrogate and the computer model over the domain.  In one dimension the
    quadrature is a uniform midpoint grid (default 1000 points); in higher
    dimensions, seeded Monte Carlo (default 10^4 points).
    """
    surrogate = fit_field_gasp(data, seed=seed)
    p = data.p
    rng = np.random.default_rng(seed)
    if p == 1:
        m = quad_points or 1000
        lo, hi = data.domain[0]
        grid = (lo + (hi - lo) * (np.arange(m) + 0.5) / m).reshape(-1, 1)
    else:
        m = quad_points or 10_000
        grid = scale_to_domain(rng.uniform(size=(m, p)), data.domain)
    yhat = surrogate.mean(grid)
    volume = float(np.prod(data.lengths))

    def objective(theta):
        fm = model.evaluate(grid, theta)
        return float(np.mean((yhat - fm) ** 2))

    theta_hat, best, per_start = _multistart_theta(
        objective, model.theta_bounds, n_starts, seed
    )
    return L2Result(
        theta_hat=theta_hat,
        l2_loss_at_opt=best * volume,
        surrogate=surrogate,
        per_start=per_start,
    )


@dataclass
class LsResult:
    theta_hat: np.ndarray
    sse_at_opt: float
    residual_fit: SurrogateFit
    per_start: list

    def predict_full(self, model: ComputerModel, Xstar) -> np.ndarray:
        """Computer model at the least-squares parameters plus the residual GP."""
        return model.evaluate(Xstar, self.theta_hat) + self.residual_fit.mean(Xstar)


def ls_calibrate(
    data: FieldDataset,
    model: ComputerModel,
    n_starts: int = 10,
    seed: int = 0,
) -> LsResult:
    """Least-squares calibration followed by a GP fit of the residuals."""

    def objective(theta):
        resid = data.y - model.evaluate(data.X, theta)
        return float(resid @ resid)

    theta_hat, sse, per_start = _multistart_theta(
        objective, model.theta_bounds, n_starts, seed
    )
    resid = data.y - model.evaluate(data.X, theta_hat)
    resid_data = FieldDataset(data.X, resid, data.domain)
    residual_fit = fit_field_gasp(resid_data, seed=seed)
    return LsResult(
        theta_hat=theta_hat,
        sse_at_opt=sse,
        residual_fit=residual_fit,
        per_start=per_start,
    )
