"""Field-data calibration model: likelihood, priors, transforms, prediction.

The sampling model for ``n`` field observations is

    y_i = f(x_i, theta) + mu(x_i) + delta(x_i) + eps_i,

with ``f`` the computer model, ``mu`` an optional regression mean, ``delta``
a discrepancy process (plain, scaled, or orthogonal; see
:mod:`gpcalib.discrepancy`) and i.i.d. Gaussian noise.  Marginally,

    y | params ~ MN(f + mu, sigma2 * (K + eta * I)),

where ``K`` is the discrepancy correlation matrix of the chosen mode and
``eta`` is the noise-to-discrepancy variance ratio.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.special import expit

from . import discrepancy as dm
from .discrepancy import DiscrepancySpec
from .kernels import corr_matrix
from .linalg import LOG_2PI, cholesky_with_jitter

EXACT = "exact"
EMULATED = "emulated"

#: Additive floor used when log-transforming the nugget ratio, so eta = 0 maps
#: to a finite coordinate and back exactly.
ETA_FLOOR = 1e-12


@dataclass(frozen=True)
class FieldDataset:
    """Observed field data on a rectangular input domain.

    Duplicate design rows are rejected: they make the discrepancy correlation
    matrix exactly singular when the nugget ratio is zero.
    """

    X: np.ndarray
    y: np.ndarray
    domain: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[0] == 1 and np.asarray(self.X).ndim == 1 and np.asarray(self.X).size > 1:
            X = X.T
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        domain = np.atleast_2d(np.asarray(self.domain, dtype=float))
        if X.shape[0] != y.size:
            raise ValueError("X and y disagree on the number of observations")
        if X.shape[0] < 2:
            raise ValueError("need at least two observations")
        if domain.shape != (X.shape[1], 2) or np.any(domain[:, 1] <= domain[:, 0]):
            raise ValueError("domain must be one (lower, upper) pair per input dimension")
        if np.any(X < domain[:, 0]) or np.any(X > domain[:, 1]):
            raise ValueError("design rows must lie inside the domain rectangle")
        if np.unique(X, axis=0).shape[0] != X.shape[0]:
            raise ValueError("duplicated design rows are not allowed")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "domain", domain)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def lengths(self) -> np.ndarray:
        return self.domain[:, 1] - self.domain[:, 0]


@dataclass(frozen=True)
class ComputerModel:
    """Deterministic computer model ``f(x, theta)`` with a parameter box.

    ``evaluator`` takes a single input vector and a parameter vector and
    returns a scalar; set ``vectorized=True`` when it instead accepts an
    (m, p) array of inputs and returns an (m,) vector.  ``theta_grad``, when
    supplied, maps ``(X, theta)`` to the (m, p_theta) array of parameter
    derivatives and is used instead of finite differences.
    """

    evaluator: Callable
    theta_bounds: np.ndarray
    kind: str = EXACT
    vectorized: bool = False
    theta_grad: Callable | None = None

    def __post_init__(self):
        bounds = np.atleast_2d(np.asarray(self.theta_bounds, dtype=float))
        if bounds.shape[1] != 2 or np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ValueError("theta_bounds must be rows of (lower, upper)")
        if self.kind not in (EXACT, EMULATED):
            raise ValueError("kind must be 'exact' or 'emulated'")
        object.__setattr__(self, "theta_bounds", bounds)

    @property
    def p_theta(self) -> int:
        return self.theta_bounds.shape[0]

    def evaluate(self, X, theta) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.vectorized:
            return np.asarray(self.evaluator(X, theta), dtype=float).reshape(X.shape[0])
        return np.array([float(self.evaluator(x, theta)) for x in X])

    def grad_fn(self, theta, step: float = 1e-4) -> Callable:
        """Parameter-gradient function at fixed theta (analytic if available)."""
        if self.theta_grad is not None:
            theta = np.atleast_1d(np.asarray(theta, dtype=float))
            return lambda X: np.atleast_2d(np.asarray(self.theta_grad(np.atleast_2d(X), theta), dtype=float))
        return dm.model_grad_fd(self, theta, step)


@dataclass(frozen=True)
class CalibParams:
    """Full parameter vector of the calibration model.

    ``psi_delta`` are inverse ranges (1/gamma per input dimension),
    ``sigma2_delta`` the discrepancy variance and ``eta`` the
    noise-to-discrepancy variance ratio, so the noise variance is
    ``eta * sigma2_delta``.
    """

    theta: np.ndarray
    beta_delta: np.ndarray
    psi_delta: np.ndarray
    sigma2_delta: float
    eta: float

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        beta = np.asarray(self.beta_delta, dtype=float).reshape(-1)
        psi = np.atleast_1d(np.asarray(self.psi_delta, dtype=float))
        if np.any(psi <= 0) or not np.all(np.isfinite(psi)):
            raise ValueError("psi_delta must be positive")
        if not self.sigma2_delta > 0:
            raise ValueError("sigma2_delta must be positive")
        if self.eta < 0:
            raise ValueError("eta must be non-negative")
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "beta_delta", beta)
        object.__setattr__(self, "psi_delta", psi)
        object.__setattr__(self, "sigma2_delta", float(self.sigma2_delta))
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def sigma2_noise(self) -> float:
        return self.eta * self.sigma2_delta

    def gamma(self) -> np.ndarray:
        return 1.0 / self.psi_delta


@dataclass(frozen=True)
class PriorSpec:
    """Prior over the transformed calibration parameters.

    The correlation parameters get the jointly robust prior

        pi(psi, eta) ~ (sum_l C_l psi_l + eta)^a * exp(-b (sum_l C_l psi_l + eta)),

    the discrepancy variance the scale prior 1/sigma2, and theta either a
    uniform over its box (default) or a user log-density.
    """

    jr_a: float
    jr_b: float
    jr_C: np.ndarray
    theta_log_prior: Callable | None = None

    def __post_init__(self):
        C = np.atleast_1d(np.asarray(self.jr_C, dtype=float))
        p = C.size
        if not self.jr_a > -p - 1:
            raise ValueError("jr_a must exceed -p_x - 1")
        if not self.jr_b > 0:
            raise ValueError("jr_b must be positive")
        if np.any(C <= 0):
            raise ValueError("jr_C must be positive")
        object.__setattr__(self, "jr_C", C)

    @classmethod
    def default(cls, data: FieldDataset, theta_log_prior: Callable | None = None) -> "PriorSpec":
        p = data.p
        C = data.lengths * data.n ** (-1.0 / p)
        return cls(jr_a=0.5 - p, jr_b=1.0, jr_C=C, theta_log_prior=theta_log_prior)


@dataclass
class PredictiveResult:
    """Per-point predictive summaries at new inputs."""

    model_mean: np.ndarray
    full_mean: np.ndarray
    variance: np.ndarray


def basis_matrix(X, spec: DiscrepancySpec) -> np.ndarray:
    """Mean-basis design matrix H with one column per basis function."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if spec.n_basis == 0:
        return np.zeros((X.shape[0], 0))
    return np.column_stack([np.asarray(h(X), dtype=float).reshape(-1) for h in spec.mean_basis])


def mean_basis_eval(X, spec: DiscrepancySpec, beta) -> np.ndarray:
    """Mean discrepancy ``sum_j h_j(x_i) beta_j``; zero when the basis is empty."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta = np.asarray(beta, dtype=float).reshape(-1)
    if spec.n_basis == 0:
        return np.zeros(X.shape[0])
    if beta.size != spec.n_basis:
        raise ValueError("beta length does not match the mean basis")
    return basis_matrix(X, spec) @ beta


def theta_in_bounds(theta, bounds) -> bool:
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    bounds = np.atleast_2d(np.asarray(bounds, dtype=float))
    return bool(np.all(theta >= bounds[:, 0]) and np.all(theta <= bounds[:, 1]))


class LikelihoodCore:
    """Marginal likelihood evaluator with reusable correlation factorizations.

    Splitting the computation into a correlation part (depends on psi, eta
    and, in orthogonal mode, theta) and a mean part (theta, beta) lets
    samplers re-use the Cholesky factor across mean-only updates.
    """

    def __init__(self, data: FieldDataset, model: ComputerModel, spec: DiscrepancySpec):
        if spec.kernel.dim != data.p:
            raise ValueError("kernel dimension does not match the data")
        if spec.constraint_points is not None:
            pts = spec.constraint_points
            if np.any(pts < data.domain[:, 0]) or np.any(pts > data.domain[:, 1]):
                raise ValueError("constraint points must lie inside the domain")
        self.data = data
        self.model = model
        self.spec = spec
        self.H = basis_matrix(data.X, spec)
        self._theta_cache: tuple[bytes, np.ndarray] | None = None

    @property
    def corr_depends_on_theta(self) -> bool:
        return self.spec.mode == dm.OGASP

    def mean_vector(self, theta, beta) -> np.ndarray:
        key = np.atleast_1d(np.asarray(theta, dtype=float)).tobytes()
        if self._theta_cache is not None and self._theta_cache[0] == key:
            fm = self._theta_cache[1]
        else:
            fm = self.model.evaluate(self.data.X, theta)
            self._theta_cache = (key, fm)
        if self.H.shape[1]:
            return fm + self.H @ np.asarray(beta, dtype=float).reshape(-1)
        return fm

    def corr_target(self, psi, theta=None) -> np.ndarray:
        """Discrepancy correlation matrix K for the current mode."""
        kern = self.spec.kernel.with_ranges(1.0 / np.asarray(psi, dtype=float))
        spec = self.spec.with_kernel(kern)
        X = self.data.X
        if spec.mode == dm.GASP:
            return corr_matrix(X, X, kern)
        if spec.mode == dm.SGASP:
            return dm.scaled_cov(X, spec)
        if theta is None:
            raise ValueError("orthogonal mode needs theta to build the correlation")
        grad = self.model.grad_fn(theta)
        return dm.ogasp_kernel(
            X, X, kern, grad, self.data.domain, spec.quad_points
        )

    def corr_chol(self, psi, eta, theta=None):
        """Cholesky factor of K + eta I (correlation scale) and the jitter used."""
        K = self.corr_target(psi, theta)
        if eta > 0:
            K = K + eta * np.eye(self.data.n)
        return cholesky_with_jitter(K)

    def loglik_from_chol(self, L, resid, sigma2: float) -> float:
        n = self.data.n
        alpha = solve_triangular(L, resid, lower=True)
        quad = float(alpha @ alpha)
        return (
            -0.5 * n * (LOG_2PI + np.log(sigma2))
            - float(np.sum(np.log(np.diag(L))))
            - 0.5 * quad / sigma2
        )

    def loglik(self, params: CalibParams) -> float:
        L, _ = self.corr_chol(params.psi_delta, params.eta, params.theta)
        resid = self.data.y - self.mean_vector(params.theta, params.beta_delta)
        return self.loglik_from_chol(L, resid, params.sigma2_delta)


def marginal_loglik(
    params: CalibParams,
    data: FieldDataset,
    model: ComputerModel,
    spec: DiscrepancySpec,
) -> float:
    """Exact Gaussian log-likelihood of the field data.

    The covariance is ``sigma2 * (K + eta I)`` with ``K`` the mode-specific
    discrepancy correlation; the mean is the computer model plus the mean
    discrepancy.
    """
    return LikelihoodCore(data, model, spec).loglik(params)


def log_prior(params: CalibParams, prior: PriorSpec, theta_bounds=None) -> float:
    """Unnormalized log prior; -inf outside the support."""
    if theta_bounds is not None and not theta_in_bounds(params.theta, theta_bounds):
        return -np.inf
    if prior.theta_log_prior is not None:
        lp_theta = float(prior.theta_log_prior(params.theta))
        if not np.isfinite(lp_theta):
            return -np.inf
    else:
        lp_theta = 0.0
    psi = params.psi_delta
    if prior.jr_C.size != psi.size:
        raise ValueError("prior C length does not match psi")
    t = float(prior.jr_C @ psi + params.eta)
    if not t > 0:
        return -np.inf
    return lp_theta + prior.jr_a * np.log(t) - prior.jr_b * t - np.log(params.sigma2_delta)


@dataclass(frozen=True)
class ParamTransform:
    """Bijection between CalibParams and an unconstrained vector.

    Layout: scaled-logit theta per component, beta unchanged, log psi per
    dimension, log sigma2, log(eta + floor).
    """

    theta_bounds: np.ndarray
    n_basis: int
    p_x: int

    def __post_init__(self):
        object.__setattr__(
            self, "theta_bounds", np.atleast_2d(np.asarray(self.theta_bounds, dtype=float))
        )

    @property
    def p_theta(self) -> int:
        return self.theta_bounds.shape[0]

    @property
    def dim(self) -> int:
        return self.p_theta + self.n_basis + self.p_x + 2

    def to_vector(self, params: CalibParams) -> np.ndarray:
        a, b = self.theta_bounds[:, 0], self.theta_bounds[:, 1]
        u = (params.theta - a) / (b - a)
        if np.any(u <= 0) or np.any(u >= 1):
            raise ValueError("theta must be strictly inside its box to transform")
        z_theta = np.log(u) - np.log1p(-u)
        return np.concatenate(
            [
                z_theta,
                params.beta_delta,
                np.log(params.psi_delta),
                [np.log(params.sigma2_delta)],
                [np.log(params.eta + ETA_FLOOR)],
            ]
        )

    def from_vector(self, z) -> CalibParams:
        z = np.asarray(z, dtype=float).reshape(-1)
        if z.size != self.dim:
            raise ValueError(f"expected vector of length {self.dim}, got {z.size}")
        pt, q, px = self.p_theta, self.n_basis, self.p_x
        a, b = self.theta_bounds[:, 0], self.theta_bounds[:, 1]
        theta = a + (b - a) * expit(z[:pt])
        beta = z[pt : pt + q]
        psi = np.exp(z[pt + q : pt + q + px])
        sigma2 = float(np.exp(z[pt + q + px]))
        eta = max(float(np.exp(z[pt + q + px + 1])) - ETA_FLOOR, 0.0)
        return CalibParams(theta, beta, psi, sigma2, eta)

    def log_jacobian(self, z) -> float:
        """log |d(original)/d(transformed)| at the transformed point z."""
        z = np.asarray(z, dtype=float).reshape(-1)
        pt, q, px = self.p_theta, self.n_basis, self.p_x
        widths = self.theta_bounds[:, 1] - self.theta_bounds[:, 0]
        u = expit(z[:pt])
        lj_theta = float(np.sum(np.log(widths) + np.log(u) + np.log1p(-u)))
        lj_rest = float(np.sum(z[pt + q :]))
        return lj_theta + lj_rest


def transform_params(params: CalibParams, theta_bounds) -> np.ndarray:
    """Map parameters to the unconstrained optimizer/sampler scale."""
    tr = ParamTransform(theta_bounds, params.beta_delta.size, params.psi_delta.size)
    return tr.to_vector(params)


def untransform_params(z, theta_bounds, n_basis: int, p_x: int) -> CalibParams:
    """Inverse of :func:`transform_params`."""
    return ParamTransform(theta_bounds, n_basis, p_x).from_vector(z)


def predict(
    params: CalibParams,
    data: FieldDataset,
    model: ComputerModel,
    spec: DiscrepancySpec,
    Xstar,
) -> PredictiveResult:
    """Plug-in predictive distribution at new inputs.

    Per new point x*: the model-only mean ``f(x*, theta) + mu(x*)``, the full
    mean adding the conditional discrepancy, and the predictive variance
    ``sigma2 * c* + sigma2 * eta`` where ``c*`` is the conditional
    correlation-scale variance.
    """
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    if Xstar.shape[1] != data.p:
        raise ValueError("prediction inputs do not match the data dimension")
    core = LikelihoodCore(data, model, spec)
    kern = spec.kernel.with_ranges(1.0 / params.psi_delta)
    wspec = spec.with_kernel(kern)

    if spec.mode == dm.GASP:
        r = corr_matrix(data.X, Xstar, kern)
        c0 = np.ones(Xstar.shape[0])
    elif spec.mode == dm.SGASP:
        r, c0 = dm.scaled_cross_cov(data.X, Xstar, wspec)
    else:
        grad = model.grad_fn(params.theta)
        r = dm.ogasp_kernel(data.X, Xstar, kern, grad, data.domain, spec.quad_points)
        c0 = np.diag(
            dm.ogasp_kernel(Xstar, Xstar, kern, grad, data.domain, spec.quad_points)
        ).copy()

    L, _ = core.corr_chol(params.psi_delta, params.eta, params.theta)
    resid = data.y - core.mean_vector(params.theta, params.beta_delta)
    alpha = cho_solve((L, True), resid)
    solved = cho_solve((L, True), r)

    model_mean = model.evaluate(Xstar, params.theta) + mean_basis_eval(
        Xstar, spec, params.beta_delta
    )
    full_mean = model_mean + r.T @ alpha
    cstar = np.maximum(c0 - np.einsum("ij,ij->j", r, solved), 0.0)
    variance = params.sigma2_delta * cstar + params.sigma2_noise
    return PredictiveResult(model_mean=model_mean, full_mean=full_mean, variance=variance)


def initial_params(
    data: FieldDataset,
    model: ComputerModel,
    spec: DiscrepancySpec,
    theta=None,
    eta: float = 0.01,
) -> CalibParams:
    """Reasonable starting point: box-center theta, half-domain ranges."""
    bounds = model.theta_bounds
    if theta is None:
        theta = 0.5 * (bounds[:, 0] + bounds[:, 1])
    psi = 2.0 / data.lengths
    beta = np.zeros(spec.n_basis)
    resid = data.y - model.evaluate(data.X, theta)
    sigma2 = float(np.var(resid))
    if not sigma2 > 0:
        sigma2 = 1.0
    return CalibParams(theta, beta, psi, sigma2, eta)
