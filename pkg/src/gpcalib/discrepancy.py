"""Discrepancy-process covariance transforms.

Three priors for the discrepancy between reality and a computer model:

* ``gasp`` - a plain zero-mean Gaussian process with product correlation.
* ``sgasp`` - the scaled process, whose sample paths are tilted toward a small
  L2 norm.  Discretizing the norm over constraint points gives a closed-form
  covariance: the plain correlation minus a shrinkage term that equals the
  posterior covariance of a zero-mean process observed at the constraint
  points with i.i.d. noise variance ``N_C / lambda``.
* ``ogasp`` - a process constrained to be orthogonal to the computer model's
  parameter gradient, enforcing the first-order optimality condition of the
  L2 loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_solve

from .kernels import KernelSpec, corr_matrix
from .linalg import NumericalError, cholesky_with_jitter

GASP = "gasp"
SGASP = "sgasp"
OGASP = "ogasp"

_MODES = (GASP, SGASP, OGASP)


@dataclass
class DiscrepancySpec:
    """Configuration of the discrepancy prior.

    Parameters
    ----------
    mode : str
        One of ``"gasp"``, ``"sgasp"``, ``"ogasp"``.
    kernel : KernelSpec
        Base correlation over the variable inputs.
    mean_basis : sequence of callables, optional
        Basis functions ``h_j(x)`` of the mean discrepancy regression; each
        maps an (m, p) array of inputs to an (m,) vector.  Empty means a zero
        mean discrepancy.
    constraint_points : ndarray, optional
        Points discretizing the L2 norm in ``sgasp`` mode.  ``None`` means
        "use the observed design".
    lam : float, optional
        Positive scaling parameter of the shrinkage; larger values pull the
        sample paths harder toward zero.  ``None`` means ``n/2`` with ``n``
        the number of observations.
    quad_points : int, optional
        Quadrature points per axis for the ``ogasp`` orthogonality integrals.
        ``None`` picks 200 in one dimension, 40 per axis in two, 10 above.
    """

    mode: str
    kernel: KernelSpec
    mean_basis: Sequence[Callable] = field(default_factory=list)
    constraint_points: np.ndarray | None = None
    lam: float | None = None
    quad_points: int | None = None

    def __post_init__(self):
        if self.mode not in _MODES:
            raise ValueError(f"unknown discrepancy mode {self.mode!r}")
        if self.lam is not None and not self.lam > 0:
            raise ValueError("lam must be positive")
        if self.constraint_points is not None:
            pts = np.atleast_2d(np.asarray(self.constraint_points, dtype=float))
            if pts.shape[1] != self.kernel.dim:
                raise ValueError("constraint points do not match the kernel dimension")
            self.constraint_points = pts

    @property
    def n_basis(self) -> int:
        return len(self.mean_basis)

    def resolved_constraints(self, X: np.ndarray) -> tuple[np.ndarray, float]:
        """Constraint points and scaling for a given observed design."""
        XC = self.constraint_points if self.constraint_points is not None else np.asarray(X, dtype=float)
        lam = self.lam if self.lam is not None else X.shape[0] / 2.0
        return np.atleast_2d(XC), float(lam)

    def with_kernel(self, kernel: KernelSpec) -> "DiscrepancySpec":
        return DiscrepancySpec(
            self.mode, kernel, self.mean_basis, self.constraint_points, self.lam, self.quad_points
        )


def _constraint_chol(XC: np.ndarray, lam: float, kernel: KernelSpec):
    """Cholesky factor of R^C + (N_C / lambda) I over the constraint points."""
    NC = XC.shape[0]
    RC = corr_matrix(XC, XC, kernel)
    L, _ = cholesky_with_jitter(RC + (NC / lam) * np.eye(NC))
    return L


def scaled_cov(X, spec: DiscrepancySpec) -> np.ndarray:
    """Shrunk correlation matrix of the discretized scaled process.

    ``R_z = R - rC' (RC + (N_C/lambda) I)^-1 rC`` where ``RC`` is the
    correlation over the constraint points and ``rC`` the constraint-to-data
    cross-correlation.
    """
    if spec.mode != SGASP:
        raise ValueError("scaled_cov requires sgasp mode")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    XC, lam = spec.resolved_constraints(X)
    R = corr_matrix(X, X, spec.kernel)
    rC = corr_matrix(XC, X, spec.kernel)
    L = _constraint_chol(XC, lam, spec.kernel)
    Rz = R - rC.T @ cho_solve((L, True), rC)
    return 0.5 * (Rz + Rz.T)


def scaled_cross_cov(X, Xstar, spec: DiscrepancySpec):
    """Cross-covariance and prior variance of the scaled process at new points.

    Returns
    -------
    (r_z, c_z_diag) : cross-covariance (n, k) between the observed design and
        the new points, and the transformed prior variance (k,) at the new
        points, both under the shrunk kernel.
    """
    if spec.mode != SGASP:
        raise ValueError("scaled_cross_cov requires sgasp mode")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Xstar = np.atleast_2d(np.asarray(Xstar, dtype=float))
    XC, lam = spec.resolved_constraints(X)
    L = _constraint_chol(XC, lam, spec.kernel)
    r_data_star = corr_matrix(X, Xstar, spec.kernel)
    rC_data = corr_matrix(XC, X, spec.kernel)
    rC_star = corr_matrix(XC, Xstar, spec.kernel)
    solved = cho_solve((L, True), rC_star)
    r_z = r_data_star - rC_data.T @ solved
    c_z_diag = 1.0 - np.einsum("ij,ij->j", rC_star, solved)
    return r_z, c_z_diag


def quadrature_grid(domain, quad_points: int):
    """Midpoint-rule tensor grid over a rectangle.

    Returns the grid points (N, p) and the scalar cell volume.
    """
    domain = np.atleast_2d(np.asarray(domain, dtype=float))
    if domain.shape[1] != 2 or np.any(domain[:, 1] <= domain[:, 0]):
        raise ValueError("domain must be rows of (lower, upper) with lower < upper")
    axes = [
        lo + (hi - lo) * (np.arange(quad_points) + 0.5) / quad_points
        for lo, hi in domain
    ]
    mesh = np.meshgrid(*axes, indexing="ij")
    points = np.column_stack([m.ravel() for m in mesh])
    volume = float(np.prod((domain[:, 1] - domain[:, 0]) / quad_points))
    return points, volume


def default_quad_points(p: int) -> int:
    return {1: 200, 2: 40}.get(p, 10)


def ogasp_kernel(Xa, Xb, base_kernel: KernelSpec, model_grad, domain, quad_points: int | None = None):
    """Orthogonally-constrained covariance between two sets of points.

    Subtracts from the base correlation the projection onto the computer
    model's parameter gradient, so that sample paths integrate to zero
    against each gradient component over the domain:

    ``c_o(x, x') = c(x, x') - g(x)' G^-1 g(x')`` with
    ``g(x) = int D(xi) c(x, xi) dxi`` and
    ``G = int int D(xi) D(xi')' c(xi, xi') dxi dxi'``,
    both integrals evaluated by a midpoint rule on a fixed grid.

    Parameters
    ----------
    model_grad : callable
        Maps an (m, p) array of inputs to the (m, p_theta) array of
        derivatives of the computer model with respect to its parameters.
    """
    Xa = np.atleast_2d(np.asarray(Xa, dtype=float))
    Xb = np.atleast_2d(np.asarray(Xb, dtype=float))
    p = base_kernel.dim
    if quad_points is None:
        quad_points = default_quad_points(p)
    grid, w = quadrature_grid(domain, quad_points)
    D = np.atleast_2d(np.asarray(model_grad(grid), dtype=float))
    if D.shape[0] != grid.shape[0]:
        D = D.T
    if D.shape[0] != grid.shape[0]:
        raise ValueError("model_grad must return one row per grid point")
    p_theta = D.shape[1]

    g_a = corr_matrix(Xa, grid, base_kernel) @ D * w
    g_b = corr_matrix(Xb, grid, base_kernel) @ D * w
    Cgg = corr_matrix(grid, grid, base_kernel)
    G = (w * w) * (D.T @ Cgg @ D)
    trace = float(np.trace(G))
    if not trace > 0:
        raise NumericalError(
            "gradient projection matrix is singular; increase quad_points or "
            "check the model gradient"
        )
    # relative ridge for conditioning plus an absolute floor (scaled by the
    # squared domain volume, the gradient-free magnitude of G) so the
    # correction vanishes, rather than staying scale-invariant, as the
    # gradient magnitude goes to zero
    domain = np.atleast_2d(np.asarray(domain, dtype=float))
    volume2 = float(np.prod(domain[:, 1] - domain[:, 0])) ** 2
    G = G + (1e-10 * trace / p_theta + 1e-12 * volume2) * np.eye(p_theta)
    try:
        LG, _ = cholesky_with_jitter(G)
    except NumericalError as err:
        raise NumericalError(
            "gradient projection matrix is singular; increase quad_points"
        ) from err
    C = corr_matrix(Xa, Xb, base_kernel)
    return C - g_a @ cho_solve((LG, True), g_b.T)


def model_grad_fd(model, theta, step: float = 1e-4):
    """Central-difference derivative of a computer model w.r.t. its parameters.

    Returns a function mapping an (m, p) array of variable inputs to the
    (m, p_theta) derivative array at the fixed ``theta``.  ``theta`` must sit
    at least ``step`` inside its box so both offsets stay feasible.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    bounds = np.atleast_2d(np.asarray(model.theta_bounds, dtype=float))
    if step <= 0:
        raise ValueError("step must be positive")
    if np.any(theta - step < bounds[:, 0]) or np.any(theta + step > bounds[:, 1]):
        raise ValueError("theta must be interior to its box by at least step")

    def grad(X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty((X.shape[0], theta.size))
        for j in range(theta.size):
            hi = theta.copy()
            lo = theta.copy()
            hi[j] += step
            lo[j] -= step
            out[:, j] = (model.evaluate(X, hi) - model.evaluate(X, lo)) / (2.0 * step)
        return out

    return grad
