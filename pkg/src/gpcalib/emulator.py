"""Gaussian-process emulator for computationally expensive computer models.

Fit on design runs over the joint (variable input, parameter) space; the
trend coefficients and process variance are integrated out analytically and
the range parameters are estimated by the marginal posterior mode.  The
predictive distribution at a new point is a Student-t with ``D - q`` degrees
of freedom.  A fitted emulator can stand in for the real computer model in
calibration; its hyperparameters are never revisited there.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from .calibration import EMULATED, ComputerModel
from .design import maximin_lhd
from .discrepancy import DiscrepancySpec, SGASP, scaled_cov, scaled_cross_cov
from .kernels import KernelSpec, corr_matrix
from .linalg import NumericalError, cholesky_with_jitter
from .workers import thread_map

_BAD = 1e10


def _intercept(Z):
    return np.ones(np.atleast_2d(Z).shape[0])


@dataclass
class EmulatorModel:
    """Fitted emulator state.

    ``design`` stacks the variable inputs and parameters column-wise; the
    mean basis functions act on that joint input.
    """

    design: np.ndarray
    outputs: np.ndarray
    mean_basis: Sequence[Callable]
    kernel: KernelSpec
    beta_hat: np.ndarray
    sigma2_hat: float
    _L: np.ndarray = field(repr=False)
    _LM: np.ndarray = field(repr=False)
    _alpha: np.ndarray = field(repr=False)
    _RinvH: np.ndarray = field(repr=False)

    @property
    def n_design(self) -> int:
        return self.design.shape[0]

    @property
    def dof(self) -> int:
        return self.n_design - len(self.mean_basis)

    def basis(self, Z) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return np.column_stack([np.asarray(h(Z), dtype=float).reshape(-1) for h in self.mean_basis])


def _prepare_design(design, outputs):
    design = np.atleast_2d(np.asarray(design, dtype=float))
    outputs = np.atleast_1d(np.asarray(outputs, dtype=float))
    if design.shape[0] != outputs.size:
        raise ValueError("design and outputs disagree on the number of runs")
    if np.unique(design, axis=0).shape[0] != design.shape[0]:
        raise ValueError("design rows must be distinct")
    return design, outputs


def _gls_pieces(L, H, y):
    """Generalized-least-squares quantities given the correlation factor."""
    RinvH = cho_solve((L, True), H)
    M = H.T @ RinvH
    LM = np.linalg.cholesky(M + 1e-12 * np.trace(M) / M.shape[0] * np.eye(M.shape[0]))
    Rinvy = cho_solve((L, True), y)
    beta = cho_solve((LM, True), H.T @ Rinvy)
    resid = y - H @ beta
    quad = float(resid @ cho_solve((L, True), resid))
    return RinvH, LM, beta, quad


def emulator_fit(
    design,
    outputs,
    mean_basis: Sequence[Callable] | None = None,
    kernel_family: str = "matern52",
    seed: int = 0,
    n_starts: int = 10,
    ranges=None,
) -> EmulatorModel:
    """Fit the emulator by maximizing the marginal posterior of the ranges.

    The trend coefficients and variance carry the scale-invariant prior
    ``1/sigma2`` and are integrated out; the inverse ranges get the jointly
    robust prior, evaluated on the log-inverse-range scale.  Passing
    ``ranges`` skips the range optimization and keeps them fixed.
    """
    design, outputs = _prepare_design(design, outputs)
    D, p = design.shape
    if mean_basis is None:
        mean_basis = [_intercept]
    mean_basis = list(mean_basis)
    q = len(mean_basis)
    if D <= q + 2:
        raise ValueError("need more design runs than basis functions plus two")
    H = np.column_stack([np.asarray(h(design), dtype=float).reshape(-1) for h in mean_basis])
    if np.linalg.matrix_rank(H) < q:
        raise ValueError("mean basis is rank deficient on the design")

    lengths = design.max(axis=0) - design.min(axis=0)
    lengths = np.where(lengths > 0, lengths, 1.0)
    C = lengths * D ** (-1.0 / p)
    a, b = 0.5 - p, 1.0

    def objective(log_psi) -> float:
        psi = np.exp(log_psi)
        kern = KernelSpec(kernel_family, 1.0 / psi)
        try:
            R = corr_matrix(design, design, kern)
            L, _ = cholesky_with_jitter(R)
            _, LM, _, quad = _gls_pieces(L, H, outputs)
        except (NumericalError, np.linalg.LinAlgError):
            return _BAD
        quad = max(quad, 1e-300)
        lp = (
            -float(np.sum(np.log(np.diag(L))))
            - float(np.sum(np.log(np.diag(LM))))
            - 0.5 * (D - q) * np.log(quad)
        )
        t = float(C @ psi)
        lp += a * np.log(t) - b * t + float(np.sum(log_psi))
        if not np.isfinite(lp):
            return _BAD
        return -lp

    if ranges is not None:
        psi = 1.0 / np.atleast_1d(np.asarray(ranges, dtype=float))
        return _finalize(design, outputs, mean_basis, kernel_family, psi, H)

    U = maximin_lhd(max(n_starts, 2), p, iterations=50, seed=seed)[:n_starts]
    lo = np.log(0.5 / lengths)
    hi = np.log(50.0 / lengths)
    starts = lo + U * (hi - lo)
    bounds = [(np.log(1e-2 / L_), np.log(1e4 / L_)) for L_ in lengths]

    def grad(x, step=1e-5):
        g = np.empty_like(x)
        for j in range(x.size):
            e = np.zeros_like(x)
            e[j] = step
            g[j] = (objective(x + e) - objective(x - e)) / (2.0 * step)
        return g

    def run_start(item):
        idx, x0 = item
        res = minimize(
            objective,
            x0,
            jac=grad,
            method="L-BFGS-B",
            bounds=bounds,
            options={"ftol": 1e-12, "gtol": 1e-8},
        )
        return idx, res

    results = thread_map(run_start, list(enumerate(starts)))
    usable = [(i, r) for i, r in results if np.isfinite(r.fun) and r.fun < _BAD / 2]
    if not usable:
        raise NumericalError("emulator range optimization failed from every start")
    best_idx, best = min(usable, key=lambda t: (t[1].fun, t[0]))
    return _finalize(design, outputs, mean_basis, kernel_family, np.exp(best.x), H)


def _finalize(design, outputs, mean_basis, kernel_family, psi, H) -> EmulatorModel:
    D, q = design.shape[0], H.shape[1]
    kern = KernelSpec(kernel_family, 1.0 / psi)
    R = corr_matrix(design, design, kern)
    L, _ = cholesky_with_jitter(R)
    RinvH, LM, beta, quad = _gls_pieces(L, H, outputs)
    sigma2 = max(quad, 0.0) / (D - q)
    alpha = cho_solve((L, True), outputs - H @ beta)
    return EmulatorModel(
        design=design,
        outputs=outputs,
        mean_basis=mean_basis,
        kernel=kern,
        beta_hat=beta,
        sigma2_hat=float(sigma2),
        _L=L,
        _LM=LM,
        _alpha=alpha,
        _RinvH=RinvH,
    )


def emulator_predict(model: EmulatorModel, xstar, thetastar=None):
    """Student-t predictive at new joint inputs.

    ``xstar`` may already contain the full joint input; otherwise pass the
    parameter part separately and it is appended to every row.  Returns
    ``(mean, variance, dof)``: the variance is ``sigma2_hat`` times the
    conditional correlation plus the trend-estimation inflation term, and the
    degrees of freedom are the number of runs minus the trend dimension.
    """
    Z = np.atleast_2d(np.asarray(xstar, dtype=float))
    if thetastar is not None:
        theta = np.atleast_1d(np.asarray(thetastar, dtype=float))
        Z = np.hstack([Z, np.tile(theta, (Z.shape[0], 1))])
    if Z.shape[1] != model.design.shape[1]:
        raise ValueError("prediction inputs do not match the design dimension")
    r = corr_matrix(model.design, Z, model.kernel)
    h = model.basis(Z)
    mean = h @ model.beta_hat + r.T @ model._alpha
    Rinv_r = cho_solve((model._L, True), r)
    u = h.T - model._RinvH.T @ r
    w = solve_triangular(model._LM, u, lower=True)
    cstar = 1.0 - np.einsum("ij,ij->j", r, Rinv_r) + np.einsum("ij,ij->j", w, w)
    variance = model.sigma2_hat * np.maximum(cstar, 0.0)
    return mean, variance, model.dof


def emulator_predict_scaled(model: EmulatorModel, xstar, lam: float | None = None):
    """Predictive mean/variance under the shrunk (scaled-process) covariance.

    Applies the discretized L2 shrinkage with constraint points at the
    design (scaling ``lam``, default half the number of runs) to the fitted
    kernel, then re-estimates the trend by generalized least squares under
    the transformed correlation.
    """
    Z = np.atleast_2d(np.asarray(xstar, dtype=float))
    D = model.n_design
    spec = DiscrepancySpec(SGASP, model.kernel, lam=lam if lam is not None else D / 2.0)
    Rz = scaled_cov(model.design, spec)
    L, _ = cholesky_with_jitter(Rz)
    H = model.basis(model.design)
    RinvH, LM, beta, quad = _gls_pieces(L, H, model.outputs)
    sigma2 = max(quad, 0.0) / model.dof
    alpha = cho_solve((L, True), model.outputs - H @ beta)
    rz, cz = scaled_cross_cov(model.design, Z, spec)
    h = model.basis(Z)
    mean = h @ beta + rz.T @ alpha
    Rinv_rz = cho_solve((L, True), rz)
    u = h.T - RinvH.T @ rz
    w = solve_triangular(LM, u, lower=True)
    cstar = cz - np.einsum("ij,ij->j", rz, Rinv_rz) + np.einsum("ij,ij->j", w, w)
    variance = sigma2 * np.maximum(cstar, 0.0)
    return mean, variance, model.dof


def as_computer_model(
    model: EmulatorModel,
    p_x: int,
    theta_bounds,
    draw: bool = False,
    seed: int = 0,
) -> ComputerModel:
    """Wrap a fitted emulator as a calibration computer model.

    The default evaluator is the (deterministic) predictive mean.  With
    ``draw=True`` each evaluation adds Student-t predictive noise from a
    dedicated generator; use only for sensitivity studies, since a stochastic
    model invalidates likelihood caching guarantees.
    """
    theta_bounds = np.atleast_2d(np.asarray(theta_bounds, dtype=float))
    if p_x + theta_bounds.shape[0] != model.design.shape[1]:
        raise ValueError("p_x plus the parameter count must match the design columns")
    rng = np.random.default_rng(seed)

    def evaluator(X, theta):
        mean, var, dof = emulator_predict(model, X, theta)
        if draw:
            return mean + np.sqrt(np.maximum(var, 0.0)) * rng.standard_t(dof, size=mean.size)
        return mean

    return ComputerModel(
        evaluator=evaluator,
        theta_bounds=theta_bounds,
        kind=EMULATED,
        vectorized=True,
    )
