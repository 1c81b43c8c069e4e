"""One-dimensional correlation functions and product-form correlation matrices.

All kernels here are stationary correlations (unit variance): ``c(0) = 1`` and
``0 < c(d) <= 1`` for every admissible parameter set.  Multi-dimensional
correlations are products of one-dimensional correlations, one factor per
input coordinate, each with its own range parameter.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MATERN52 = "matern52"
POW_EXP = "pow_exp"

_FAMILIES = (MATERN52, POW_EXP)

#: Default roughness of the power-exponential correlation.
DEFAULT_ROUGHNESS = 1.9


@dataclass(frozen=True)
class KernelSpec:
    """Correlation family plus per-dimension range (and roughness) parameters.

    Parameters
    ----------
    family : str
        Either ``"matern52"`` or ``"pow_exp"``.
    ranges : array_like
        Positive range parameter per input dimension, in the units of that
        coordinate.
    roughness : array_like, optional
        Power-exponential exponent per dimension, each in (0, 2].  Ignored by
        the Matern family.  Defaults to 1.9 for every dimension.
    """

    family: str
    ranges: np.ndarray
    roughness: np.ndarray | None = field(default=None)

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ValueError(f"unknown kernel family {self.family!r}")
        ranges = np.atleast_1d(np.asarray(self.ranges, dtype=float))
        if ranges.ndim != 1 or ranges.size == 0:
            raise ValueError("ranges must be a non-empty 1-D array")
        if not np.all(np.isfinite(ranges)) or np.any(ranges <= 0):
            raise ValueError("all range parameters must be finite and positive")
        object.__setattr__(self, "ranges", ranges)
        if self.family == POW_EXP:
            rough = self.roughness
            if rough is None:
                rough = np.full(ranges.size, DEFAULT_ROUGHNESS)
            rough = np.atleast_1d(np.asarray(rough, dtype=float))
            if rough.size == 1 and ranges.size > 1:
                rough = np.full(ranges.size, rough[0])
            if rough.shape != ranges.shape:
                raise ValueError("roughness must match ranges in length")
            if np.any(rough <= 0) or np.any(rough > 2):
                raise ValueError("roughness must lie in (0, 2]")
            object.__setattr__(self, "roughness", rough)
        else:
            object.__setattr__(self, "roughness", None)

    @property
    def dim(self) -> int:
        return self.ranges.size

    def with_ranges(self, ranges) -> "KernelSpec":
        """Copy of this spec with new range parameters."""
        return KernelSpec(self.family, ranges, self.roughness)


def _check_distance(d):
    d = np.asarray(d, dtype=float)
    if not np.all(np.isfinite(d)) or np.any(d < 0):
        raise ValueError("distances must be finite and non-negative")
    return d


def matern52(d, gamma: float):
    """Matern correlation with smoothness 5/2.

    ``c(d) = (1 + sqrt(5) d/gamma + 5 d^2 / (3 gamma^2)) exp(-sqrt(5) d/gamma)``
    """
    d = _check_distance(d)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError("gamma must be finite and positive")
    u = np.sqrt(5.0) * d / gamma
    return (1.0 + u + u * u / 3.0) * np.exp(-u)


def pow_exp(d, gamma: float, nu: float = DEFAULT_ROUGHNESS):
    """Power-exponential correlation ``c(d) = exp(-(d/gamma)^nu)``.

    Zero distance short-circuits to 1 so that exponents below 1 never see
    ``0**nu``.
    """
    d = _check_distance(d)
    if not np.isfinite(gamma) or gamma <= 0:
        raise ValueError("gamma must be finite and positive")
    if not 0 < nu <= 2:
        raise ValueError("nu must lie in (0, 2]")
    scaled = d / gamma
    out = np.exp(-np.where(scaled > 0, scaled, 1.0) ** nu)
    return np.where(scaled > 0, out, 1.0)


def _corr_1d(d, spec: KernelSpec, dim: int):
    if spec.family == MATERN52:
        return matern52(d, spec.ranges[dim])
    return pow_exp(d, spec.ranges[dim], spec.roughness[dim])


def product_corr(xa, xb, spec: KernelSpec) -> float:
    """Product-form correlation between two input points.

    The correlation is the product over coordinates of the one-dimensional
    correlation at distance ``|xa_l - xb_l|``.
    """
    xa = np.atleast_1d(np.asarray(xa, dtype=float))
    xb = np.atleast_1d(np.asarray(xb, dtype=float))
    if xa.shape != xb.shape or xa.size != spec.dim:
        raise ValueError(
            f"input dimension mismatch: {xa.shape} vs {xb.shape} vs spec dim {spec.dim}"
        )
    out = 1.0
    for l in range(spec.dim):
        out *= float(_corr_1d(abs(xa[l] - xb[l]), spec, l))
    return out


def corr_matrix(X1, X2, spec: KernelSpec) -> np.ndarray:
    """Correlation matrix between two sets of input points.

    Parameters
    ----------
    X1, X2 : array_like, shapes (m, p) and (k, p)
        Input designs; 1-D arrays are treated as single-column designs.

    Returns
    -------
    ndarray, shape (m, k)
        Entry (i, j) is ``product_corr(X1[i], X2[j], spec)``.
    """
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    X2 = np.atleast_2d(np.asarray(X2, dtype=float))
    if X1.shape[1] != spec.dim or X2.shape[1] != spec.dim:
        raise ValueError(
            f"designs have {X1.shape[1]} and {X2.shape[1]} columns, spec expects {spec.dim}"
        )
    out = np.ones((X1.shape[0], X2.shape[0]))
    for l in range(spec.dim):
        d = np.abs(X1[:, l, None] - X2[None, :, l])
        out *= _corr_1d(d, spec, l)
    return out
