"""Parameter estimation: multi-start quasi-Newton MLE and blockwise
adaptive random-walk Metropolis with a conjugate draw for the discrepancy
variance."""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import minimize

from .calibration import (
    CalibParams,
    ComputerModel,
    FieldDataset,
    LikelihoodCore,
    ParamTransform,
    PredictiveResult,
    PriorSpec,
    initial_params,
    log_prior,
    predict,
)
from .discrepancy import DiscrepancySpec
from .linalg import NumericalError
from .design import maximin_lhd
from .workers import thread_map

_BAD_OBJECTIVE = 1e10


class OptimizationError(RuntimeError):
    """Every optimization start failed; carries per-start diagnostics."""

    def __init__(self, message, per_start=None):
        super().__init__(message)
        self.per_start = per_start or []


def _fd_grad(fun, x, step: float = 1e-5):
    """Central-difference gradient on the transformed scale."""
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = step
        g[j] = (fun(x + e) - fun(x - e)) / (2.0 * step)
    return g


@dataclass
class MleResult:
    best_params: CalibParams
    best_loglik: float
    per_start: list
    sigma2_profiled: bool = True


def _param_names(p_theta: int, n_basis: int, p_x: int) -> list[str]:
    names = [f"theta_{i+1}" for i in range(p_theta)]
    names += [f"beta_{i+1}" for i in range(n_basis)]
    names += [f"psi_{i+1}" for i in range(p_x)]
    names += ["sigma2_delta", "eta"]
    return names


def _start_matrix(
    data: FieldDataset,
    tr: ParamTransform,
    free_idx: np.ndarray,
    n_starts: int,
    seed: int,
    psi_rel_range=(0.5, 50.0),
    eta_range=(1e-4, 1.0),
):
    """Space-filling starts over the transformed free coordinates."""
    U = maximin_lhd(max(n_starts, 2), free_idx.size, iterations=50, seed=seed)[:n_starts]
    pt, q, px = tr.p_theta, tr.n_basis, tr.p_x
    ybar, ystd = float(np.mean(data.y)), float(np.std(data.y)) + 1e-9
    lo = np.empty(tr.dim)
    hi = np.empty(tr.dim)
    # theta start range: central 98% of the box, mapped through the logit
    lo[:pt] = np.log(0.01 / 0.99)
    hi[:pt] = np.log(0.99 / 0.01)
    lo[pt : pt + q] = ybar - 2 * ystd
    hi[pt : pt + q] = ybar + 2 * ystd
    lengths = data.lengths
    lo[pt + q : pt + q + px] = np.log(psi_rel_range[0] / lengths)
    hi[pt + q : pt + q + px] = np.log(psi_rel_range[1] / lengths)
    lo[pt + q + px] = 0.0  # sigma2 slot, unused for starts
    hi[pt + q + px] = 0.0
    lo[pt + q + px + 1] = np.log(eta_range[0])
    hi[pt + q + px + 1] = np.log(eta_range[1])
    starts = lo[free_idx] + U * (hi[free_idx] - lo[free_idx])
    return starts


def _optimizer_bounds(data: FieldDataset, tr: ParamTransform, free_idx: np.ndarray):
    pt, q, px = tr.p_theta, tr.n_basis, tr.p_x
    lo = np.empty(tr.dim)
    hi = np.empty(tr.dim)
    lo[:pt], hi[:pt] = -16.6, 16.6
    lo[pt : pt + q], hi[pt : pt + q] = -1e6, 1e6
    lengths = data.lengths
    lo[pt + q : pt + q + px] = np.log(1e-2 / lengths)
    hi[pt + q : pt + q + px] = np.log(1e4 / lengths)
    lo[pt + q + px], hi[pt + q + px] = -50.0, 50.0
    lo[pt + q + px + 1], hi[pt + q + px + 1] = np.log(1e-9), np.log(1e3)
    return [(lo[j], hi[j]) for j in free_idx]


def mle_fit(
    data: FieldDataset,
    model: ComputerModel,
    spec: DiscrepancySpec,
    n_starts: int = 10,
    seed: int = 0,
    sigma2_fixed: float | None = None,
    optimize_theta: bool = True,
    prior: PriorSpec | None = None,
    grad_step: float = 1e-5,
    maxiter: int = 500,
) -> MleResult:
    """Maximize the marginal likelihood over transformed parameters.

    The discrepancy variance is profiled out analytically unless
    ``sigma2_fixed`` pins it.  ``prior`` adds the correlation-parameter prior
    (plus transform Jacobian) to the objective, turning the fit into a
    posterior-mode search; used for surrogate regressions where the raw
    likelihood is prone to overfitting the range parameters.
    """
    core = LikelihoodCore(data, model, spec)
    tr = ParamTransform(model.theta_bounds, spec.n_basis, data.p)
    pt, q, px = tr.p_theta, tr.n_basis, tr.p_x
    n = data.n

    base = initial_params(data, model, spec)
    if sigma2_fixed is not None:
        if not sigma2_fixed > 0:
            raise ValueError("sigma2_fixed must be positive")
        base = CalibParams(base.theta, base.beta_delta, base.psi_delta, sigma2_fixed, base.eta)
    z_template = tr.to_vector(base)

    free = []
    if optimize_theta:
        free.extend(range(pt))
    free.extend(range(pt, pt + q + px))  # beta and psi
    free.append(pt + q + px + 1)  # eta
    free_idx = np.asarray(free, dtype=int)

    def objective(zfree) -> float:
        z = z_template.copy()
        z[free_idx] = zfree
        params = tr.from_vector(z)
        try:
            L, _ = core.corr_chol(params.psi_delta, params.eta, params.theta)
        except NumericalError:
            return _BAD_OBJECTIVE
        resid = data.y - core.mean_vector(params.theta, params.beta_delta)
        alpha = solve_triangular(L, resid, lower=True)
        quad = float(alpha @ alpha)
        logdet = float(np.sum(np.log(np.diag(L))))
        if sigma2_fixed is not None:
            s2 = sigma2_fixed
            ll = -0.5 * n * np.log(2 * np.pi * s2) - logdet - 0.5 * quad / s2
        else:
            s2 = max(quad / n, 1e-300)
            ll = -0.5 * n * (np.log(2 * np.pi * s2) + 1.0) - logdet
        if prior is not None:
            t = float(prior.jr_C @ params.psi_delta + params.eta)
            ll += prior.jr_a * np.log(t) - prior.jr_b * t
            ll += float(np.sum(np.log(params.psi_delta))) + np.log(params.eta + 1e-12)
        if not np.isfinite(ll):
            return _BAD_OBJECTIVE
        return -ll

    starts = _start_matrix(data, tr, free_idx, n_starts, seed)
    bounds = _optimizer_bounds(data, tr, free_idx)

    def run_start(item):
        idx, x0 = item
        res = minimize(
            objective,
            x0,
            jac=lambda x: _fd_grad(objective, x, grad_step),
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": maxiter, "ftol": 1e-8},
        )
        # a start counts as converged when it reached a finite optimum; an
        # abnormal line-search exit at a good value is still usable, so the
        # raw optimizer verdict is kept only as a diagnostic
        ok = np.isfinite(res.fun) and res.fun < _BAD_OBJECTIVE / 2
        return {
            "index": idx,
            "converged": bool(ok),
            "loglik": -float(res.fun),
            "x": np.asarray(res.x),
            "optimizer_success": bool(res.success),
            "message": str(res.message),
        }

    per_start = thread_map(run_start, list(enumerate(starts)))
    usable = [s for s in per_start if s["converged"]]
    if not usable:
        raise OptimizationError("no optimization start converged", per_start)
    best = max(usable, key=lambda s: (s["loglik"], -s["index"]))

    z = z_template.copy()
    z[free_idx] = best["x"]
    params = tr.from_vector(z)
    if sigma2_fixed is None:
        L, _ = core.corr_chol(params.psi_delta, params.eta, params.theta)
        resid = data.y - core.mean_vector(params.theta, params.beta_delta)
        alpha = solve_triangular(L, resid, lower=True)
        s2 = max(float(alpha @ alpha) / n, 1e-300)
        params = CalibParams(params.theta, params.beta_delta, params.psi_delta, s2, params.eta)
    loglik = core.loglik(params)
    return MleResult(
        best_params=params,
        best_loglik=loglik,
        per_start=per_start,
        sigma2_profiled=sigma2_fixed is None,
    )


# ---------------------------------------------------------------------------
# Adaptive random-walk Metropolis
# ---------------------------------------------------------------------------


class AdaptiveRWSampler:
    """Blockwise Gaussian random-walk Metropolis.

    Proposal scales follow a Robbins-Monro recursion toward the target
    acceptance rate during the adaptation phase and are frozen afterwards.
    An optional ``gibbs`` hook runs after the Metropolis blocks each
    iteration and may move coordinates by an exact conditional draw.
    """

    def __init__(
        self,
        logpost,
        blocks: dict,
        x0,
        rng: np.random.Generator,
        initial_scale: float = 0.1,
        target_accept: float = 0.3,
        gibbs=None,
    ):
        self.logpost = logpost
        self.blocks = {name: np.asarray(idx, dtype=int) for name, idx in blocks.items()}
        self.x = np.asarray(x0, dtype=float).copy()
        self.rng = rng
        self.scales = {name: float(initial_scale) for name in self.blocks}
        self.target = target_accept
        self.gibbs = gibbs
        self.lp = float(logpost(self.x))
        if not np.isfinite(self.lp):
            raise ValueError("log posterior is not finite at the initial point")
        self._accepted = {name: 0 for name in self.blocks}
        self._proposed = {name: 0 for name in self.blocks}

    def run(self, n_iter: int, adapt_until: int) -> np.ndarray:
        dim = self.x.size
        out = np.empty((n_iter, dim))
        for i in range(n_iter):
            adapting = i < adapt_until
            step_size = (i + 1) ** -0.6
            for name, idx in self.blocks.items():
                prop = self.x.copy()
                prop[idx] = prop[idx] + self.scales[name] * self.rng.standard_normal(idx.size)
                lp_new = float(self.logpost(prop))
                if np.isfinite(lp_new):
                    alpha = float(np.exp(min(0.0, lp_new - self.lp)))
                else:
                    alpha = 0.0
                if self.rng.random() < alpha:
                    self.x = prop
                    self.lp = lp_new
                    accepted = 1
                else:
                    accepted = 0
                if adapting:
                    self.scales[name] = float(
                        np.clip(
                            self.scales[name] * np.exp(step_size * (alpha - self.target)),
                            1e-6,
                            1e4,
                        )
                    )
                else:
                    self._proposed[name] += 1
                    self._accepted[name] += accepted
            if self.gibbs is not None:
                self.x = self.gibbs(self.x, self.rng)
                self.lp = float(self.logpost(self.x))
            out[i] = self.x
        return out

    @property
    def acceptance_rates(self) -> dict:
        return {
            name: (self._accepted[name] / self._proposed[name]) if self._proposed[name] else float("nan")
            for name in self.blocks
        }


@dataclass
class PosteriorChain:
    """MCMC output in the original parameterization, one row per iteration."""

    samples: np.ndarray
    burn_in: int
    acceptance_rates: dict
    rng_seed: int
    param_names: list
    theta_bounds: np.ndarray
    n_basis: int
    p_x: int
    proposal_scales: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.samples.ndim != 2:
            raise ValueError("samples must be a 2-D array")
        if not 0 <= self.burn_in < self.samples.shape[0]:
            raise ValueError("need samples beyond the burn-in")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    def post_burn_in(self) -> np.ndarray:
        return self.samples[self.burn_in :]

    def params_at(self, i: int) -> CalibParams:
        row = self.samples[i]
        pt = self.theta_bounds.shape[0]
        q, px = self.n_basis, self.p_x
        return CalibParams(
            theta=row[:pt],
            beta_delta=row[pt : pt + q],
            psi_delta=row[pt + q : pt + q + px],
            sigma2_delta=row[pt + q + px],
            eta=row[pt + q + px + 1],
        )


class _CalibPosterior:
    """Log posterior on the transformed scale with correlation-factor reuse."""

    def __init__(self, core: LikelihoodCore, prior: PriorSpec, tr: ParamTransform):
        self.core = core
        self.prior = prior
        self.tr = tr
        self._chol = OrderedDict()
        self._resid = OrderedDict()

    def _corr_key(self, params: CalibParams) -> bytes:
        key = params.psi_delta.tobytes() + np.float64(params.eta).tobytes()
        if self.core.corr_depends_on_theta:
            key += params.theta.tobytes()
        return key

    def chol_for(self, params: CalibParams):
        key = self._corr_key(params)
        hit = self._chol.get(key)
        if hit is not None:
            self._chol.move_to_end(key)
            return hit
        L, _ = self.core.corr_chol(params.psi_delta, params.eta, params.theta)
        self._chol[key] = L
        while len(self._chol) > 4:
            self._chol.popitem(last=False)
        return L

    def resid_for(self, params: CalibParams) -> np.ndarray:
        key = params.theta.tobytes() + params.beta_delta.tobytes()
        hit = self._resid.get(key)
        if hit is not None:
            self._resid.move_to_end(key)
            return hit
        resid = self.core.data.y - self.core.mean_vector(params.theta, params.beta_delta)
        self._resid[key] = resid
        while len(self._resid) > 4:
            self._resid.popitem(last=False)
        return resid

    def quad_for(self, params: CalibParams) -> float:
        L = self.chol_for(params)
        alpha = solve_triangular(L, self.resid_for(params), lower=True)
        return float(alpha @ alpha)

    def __call__(self, z) -> float:
        try:
            params = self.tr.from_vector(z)
        except (ValueError, OverflowError):
            return -np.inf
        lp = log_prior(params, self.prior, self.core.model.theta_bounds)
        if not np.isfinite(lp):
            return -np.inf
        lp += self.tr.log_jacobian(z)
        try:
            L = self.chol_for(params)
        except NumericalError:
            return -np.inf
        ll = self.core.loglik_from_chol(L, self.resid_for(params), params.sigma2_delta)
        return ll + lp


def mcmc_run(
    data: FieldDataset,
    model: ComputerModel,
    spec: DiscrepancySpec,
    prior: PriorSpec | None = None,
    S: int = 50_000,
    burn_in: int = 10_000,
    seed: int = 0,
    initial: CalibParams | None = None,
    initial_scale: float = 0.1,
    target_accept: float = 0.3,
    update_theta: bool = True,
    update_corr: bool = True,
    update_beta: bool = True,
) -> PosteriorChain:
    """Blockwise Metropolis sampler for the calibration posterior.

    Blocks: the calibration parameters, the correlation parameters
    (inverse ranges and nugget ratio, jointly), and the mean-basis
    coefficients; the discrepancy variance is refreshed each iteration by its
    exact inverse-gamma conditional under the 1/sigma2 prior.  Proposal
    scales adapt during burn-in only.  The returned chain stores every
    iteration in the original parameterization.
    """
    if S <= burn_in or burn_in < 0:
        raise ValueError("need S > burn_in >= 0")
    if prior is None:
        prior = PriorSpec.default(data)
    core = LikelihoodCore(data, model, spec)
    tr = ParamTransform(model.theta_bounds, spec.n_basis, data.p)
    pt, q, px = tr.p_theta, tr.n_basis, tr.p_x
    if initial is None:
        initial = initial_params(data, model, spec)
    z0 = tr.to_vector(initial)

    posterior = _CalibPosterior(core, prior, tr)

    blocks = {}
    if update_theta:
        blocks["theta"] = np.arange(pt)
    if update_beta and q > 0:
        blocks["beta"] = np.arange(pt, pt + q)
    if update_corr:
        blocks["corr"] = np.concatenate(
            [np.arange(pt + q, pt + q + px), [pt + q + px + 1]]
        )
    sigma2_idx = pt + q + px
    n = data.n

    def gibbs_sigma2(z, rng):
        params = tr.from_vector(z)
        quad = posterior.quad_for(params)
        draw = quad / 2.0 / rng.gamma(n / 2.0)
        z = z.copy()
        z[sigma2_idx] = np.log(draw)
        return z

    rng = np.random.default_rng(seed)
    sampler = AdaptiveRWSampler(
        posterior,
        blocks,
        z0,
        rng,
        initial_scale=initial_scale,
        target_accept=target_accept,
        gibbs=gibbs_sigma2,
    )
    z_samples = sampler.run(S, adapt_until=burn_in)

    samples = np.empty_like(z_samples)
    for i in range(S):
        p = tr.from_vector(z_samples[i])
        samples[i] = np.concatenate(
            [p.theta, p.beta_delta, p.psi_delta, [p.sigma2_delta], [p.eta]]
        )
    return PosteriorChain(
        samples=samples,
        burn_in=burn_in,
        acceptance_rates=sampler.acceptance_rates,
        rng_seed=seed,
        param_names=_param_names(pt, q, px),
        theta_bounds=model.theta_bounds,
        n_basis=q,
        p_x=px,
        proposal_scales=dict(sampler.scales),
    )


def posterior_summary(chain: PosteriorChain) -> dict:
    """Medians, means and central 95% intervals on post-burn-in samples."""
    kept = chain.post_burn_in()
    if kept.shape[0] < 100:
        raise ValueError("need at least 100 post-burn-in samples to summarize")
    out = {}
    for j, name in enumerate(chain.param_names):
        col = kept[:, j]
        lo, hi = np.percentile(col, [2.5, 97.5])
        out[name] = {
            "median": float(np.median(col)),
            "mean": float(np.mean(col)),
            "lower95": float(lo),
            "upper95": float(hi),
        }
    return out


def predict_posterior(
    chain: PosteriorChain,
    data: FieldDataset,
    model: ComputerModel,
    spec: DiscrepancySpec,
    Xstar,
    thin: int = 25,
) -> PredictiveResult:
    """Posterior-averaged prediction over every ``thin``-th retained sample.

    Means are averaged across samples; the reported variance is the mean of
    the per-sample variances plus the across-sample variance of the full
    means (law of total variance).
    """
    if thin < 1:
        raise ValueError("thin must be >= 1")
    idx = list(range(chain.burn_in, chain.n_samples, thin))

    def one(i):
        return predict(chain.params_at(i), data, model, spec, Xstar)

    results = thread_map(one, idx)
    model_means = np.stack([r.model_mean for r in results])
    full_means = np.stack([r.full_mean for r in results])
    variances = np.stack([r.variance for r in results])
    total_var = variances.mean(axis=0) + full_means.var(axis=0)
    return PredictiveResult(
        model_mean=model_means.mean(axis=0),
        full_mean=full_means.mean(axis=0),
        variance=total_var,
    )
