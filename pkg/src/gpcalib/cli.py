"""Command-line front end: data ingestion, calibration runs, prediction, and
scripted experiments.

Exit codes: 0 success, 1 invalid configuration, 2 data error, 3 numerical
failure.  All file outputs use 17-significant-digit scientific notation so a
written value reads back bit-identically.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time

import numpy as np

from .baselines import l2_calibrate, ls_calibrate
from .calibration import CalibParams, ComputerModel, FieldDataset, predict
from .discrepancy import DiscrepancySpec, GASP, OGASP, SGASP
from .emulator import as_computer_model, emulator_fit
from .experiments import EXPERIMENTS
from .inference import (
    OptimizationError,
    PosteriorChain,
    mcmc_run,
    mle_fit,
    posterior_summary,
    predict_posterior,
)
from .kernels import KernelSpec
from .linalg import NumericalError
from .models import builtin_model

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

_MODES = ("gasp", "sgasp", "ogasp", "l2", "ls")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Missing or malformed input data."""


def _fmt(v) -> str:
    return f"{float(v):.16e}"


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {
    "mode",
    "data",
    "domain",
    "model",
    "kernel",
    "lambda",
    "quad_points",
    "mcmc",
    "mle",
    "predict",
    "truth",
    "output_dir",
}
_MODEL_KEYS = {"name", "theta_bounds", "emulator_design", "p_x"}
_MCMC_KEYS = {"samples", "burn_in", "thin", "seed"}
_MLE_KEYS = {"n_starts", "seed", "sigma2_fixed"}


def _check_keys(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(unknown)}")


def load_config(path: str) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError as err:
        raise ConfigError(f"config file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise ConfigError(f"config is not valid JSON: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    _check_keys(cfg, _TOP_KEYS, "config")
    for key in ("mode", "data", "model", "output_dir"):
        if key not in cfg:
            raise ConfigError(f"config is missing required key {key!r}")
    if cfg["mode"] not in _MODES:
        raise ConfigError(f"mode must be one of {_MODES}, got {cfg['mode']!r}")
    if not isinstance(cfg["model"], dict):
        raise ConfigError("model must be an object")
    _check_keys(cfg["model"], _MODEL_KEYS, "model")
    if "mcmc" in cfg:
        _check_keys(cfg["mcmc"], _MCMC_KEYS, "mcmc")
    if "mle" in cfg:
        _check_keys(cfg["mle"], _MLE_KEYS, "mle")
    if "lambda" in cfg and not float(cfg["lambda"]) > 0:
        raise ConfigError("lambda must be positive")
    if "kernel" in cfg and cfg["kernel"] not in ("matern52", "pow_exp"):
        raise ConfigError("kernel must be 'matern52' or 'pow_exp'")
    return cfg


# ---------------------------------------------------------------------------
# CSV input/output
# ---------------------------------------------------------------------------


def _read_csv(path: str):
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty file")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                try:
                    rows.append([float(c) for c in row])
                except ValueError as err:
                    raise DataError(f"{path}:{lineno}: non-numeric value") from err
    except FileNotFoundError as err:
        raise DataError(f"data file not found: {path}") from err
    if not rows:
        raise DataError(f"{path}: no data rows")
    matrix = np.asarray(rows, dtype=float)
    if matrix.shape[1] != len(header):
        raise DataError(f"{path}: rows do not match the header width")
    return [h.strip() for h in header], matrix


def _expect_header(header, prefix_cols, tail, path):
    expected = [f"x{i+1}" for i in range(prefix_cols)] + list(tail)
    if header != expected:
        raise DataError(f"{path}: expected header {','.join(expected)}, got {','.join(header)}")


def read_field_csv(path: str):
    """Observations with header x1,...,xp,y."""
    header, M = _read_csv(path)
    if len(header) < 2 or header[-1] != "y":
        raise DataError(f"{path}: expected header x1,...,xp,y")
    p = len(header) - 1
    _expect_header(header, p, ["y"], path)
    return M[:, :p], M[:, p]


def read_inputs_csv(path: str):
    """Prediction inputs with header x1,...,xp."""
    header, M = _read_csv(path)
    p = len(header)
    _expect_header(header, p, [], path)
    return M


def read_truth_csv(path: str):
    """Held-out truth with header x1,...,xp,y_true."""
    header, M = _read_csv(path)
    if len(header) < 2 or header[-1] != "y_true":
        raise DataError(f"{path}: expected header x1,...,xp,y_true")
    p = len(header) - 1
    _expect_header(header, p, ["y_true"], path)
    return M[:, :p], M[:, p]


def _write_table(path, header, matrix):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in np.atleast_2d(matrix):
            w.writerow([_fmt(v) for v in row])


def _update_summary(outdir: str, fields: dict):
    path = os.path.join(outdir, "summary.json")
    summary = {}
    if os.path.exists(path):
        with open(path) as fh:
            summary = json.load(fh)
    summary.update(fields)
    os.makedirs(outdir, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
    return summary


# ---------------------------------------------------------------------------
# Assembly from configuration
# ---------------------------------------------------------------------------


def _build_data(cfg) -> FieldDataset:
    X, y = read_field_csv(cfg["data"])
    if "domain" in cfg:
        domain = np.asarray(cfg["domain"], dtype=float)
    else:
        domain = np.column_stack([X.min(axis=0), X.max(axis=0)])
    try:
        return FieldDataset(X, y, domain)
    except ValueError as err:
        raise DataError(str(err)) from err


def _build_model(cfg) -> ComputerModel:
    mc = cfg["model"]
    if "name" in mc:
        try:
            return builtin_model(mc["name"], mc.get("theta_bounds"))
        except KeyError as err:
            raise ConfigError(str(err)) from err
    if "emulator_design" in mc:
        if "p_x" not in mc or "theta_bounds" not in mc:
            raise ConfigError("emulator models need p_x and theta_bounds")
        header, M = _read_csv(mc["emulator_design"])
        if header[-1] != "y":
            raise DataError(f"{mc['emulator_design']}: last column must be y")
        em = emulator_fit(M[:, :-1], M[:, -1])
        return as_computer_model(em, int(mc["p_x"]), mc["theta_bounds"])
    raise ConfigError("model needs either a builtin 'name' or an 'emulator_design'")


def _build_spec(cfg, data: FieldDataset) -> DiscrepancySpec:
    family = cfg.get("kernel", "matern52")
    kern = KernelSpec(family, data.lengths / 2.0)
    mode = cfg["mode"] if cfg["mode"] in (GASP, SGASP, OGASP) else GASP
    return DiscrepancySpec(mode, kern, lam=cfg.get("lambda"))


def _prediction_table(outdir, Xstar, result):
    sd = np.sqrt(np.maximum(result.variance, 0.0))
    table = np.column_stack(
        [
            Xstar,
            result.model_mean,
            result.full_mean,
            result.variance,
            result.full_mean - 1.959963984540054 * sd,
            result.full_mean + 1.959963984540054 * sd,
        ]
    )
    header = [f"x{i+1}" for i in range(Xstar.shape[1])] + [
        "model_only_mean",
        "full_mean",
        "variance",
        "lower95",
        "upper95",
    ]
    _write_table(os.path.join(outdir, "prediction.csv"), header, table)


def _maybe_truth_mse(cfg, outdir, Xstar, result):
    if "truth" not in cfg:
        return
    Xt, ytrue = read_truth_csv(cfg["truth"])
    if Xt.shape != Xstar.shape or not np.allclose(Xt, Xstar, atol=1e-12):
        raise DataError("truth file inputs do not match the prediction inputs")
    _update_summary(
        outdir,
        {
            "mse_fm": float(np.mean((ytrue - result.model_mean) ** 2)),
            "mse_fm_delta": float(np.mean((ytrue - result.full_mean) ** 2)),
        },
    )


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_calibrate(cfg: dict) -> int:
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    data = _build_data(cfg)
    model = _build_model(cfg)
    mode = cfg["mode"]
    mle_cfg = cfg.get("mle", {})
    seed = int(mle_cfg.get("seed", 0))
    t0 = time.time()

    if mode in ("l2", "ls"):
        if mode == "l2":
            res = l2_calibrate(
                data,
                model,
                quad_points=cfg.get("quad_points"),
                seed=seed,
                n_starts=int(mle_cfg.get("n_starts", 10)),
            )
            fields = {
                "mode": mode,
                "theta_hat": res.theta_hat.tolist(),
                "l2_loss": res.l2_loss_at_opt,
                "seed": seed,
                "timing_seconds": time.time() - t0,
            }
            predictor = res.surrogate
        else:
            res = ls_calibrate(
                data, model, n_starts=int(mle_cfg.get("n_starts", 10)), seed=seed
            )
            fields = {
                "mode": mode,
                "theta_hat": res.theta_hat.tolist(),
                "sse": res.sse_at_opt,
                "seed": seed,
                "timing_seconds": time.time() - t0,
            }
            predictor = None
        _update_summary(outdir, fields)
        if "predict" in cfg:
            from .calibration import PredictiveResult

            Xstar = read_inputs_csv(cfg["predict"])
            model_mean = model.evaluate(Xstar, res.theta_hat)
            if mode == "l2":
                surrogate = predictor.predict(Xstar)
                out = PredictiveResult(
                    model_mean=model_mean,
                    full_mean=surrogate.full_mean,
                    variance=surrogate.variance,
                )
            else:
                resid_pred = res.residual_fit.predict(Xstar)
                out = PredictiveResult(
                    model_mean=model_mean,
                    full_mean=model_mean + resid_pred.full_mean,
                    variance=resid_pred.variance,
                )
            _prediction_table(outdir, Xstar, out)
            _maybe_truth_mse(cfg, outdir, Xstar, out)
        return EXIT_OK

    spec = _build_spec(cfg, data)
    summary_fields = {"mode": mode}
    if "mle" in cfg:
        fit = mle_fit(
            data,
            model,
            spec,
            n_starts=int(mle_cfg.get("n_starts", 10)),
            seed=seed,
            sigma2_fixed=mle_cfg.get("sigma2_fixed"),
        )
        p = fit.best_params
        payload = {
            "theta": p.theta.tolist(),
            "beta": p.beta_delta.tolist(),
            "psi": p.psi_delta.tolist(),
            "gamma": p.gamma().tolist(),
            "sigma2_delta": p.sigma2_delta,
            "eta": p.eta,
            "sigma2_noise": p.sigma2_noise,
            "loglik": fit.best_loglik,
            "sigma2_profiled": fit.sigma2_profiled,
            "seed": seed,
            "per_start": [
                {k: v for k, v in s.items() if k != "x"} for s in fit.per_start
            ],
        }
        with open(os.path.join(outdir, "mle.json"), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
        summary_fields["mle_theta"] = p.theta.tolist()
        summary_fields["mle_loglik"] = fit.best_loglik

    if "mcmc" in cfg:
        mcfg = cfg["mcmc"]
        S = int(mcfg.get("samples", 50_000))
        burn_in = int(mcfg.get("burn_in", 10_000))
        thin = int(mcfg.get("thin", 25))
        mcmc_seed = int(mcfg.get("seed", 0))
        t1 = time.time()
        chain = mcmc_run(data, model, spec, S=S, burn_in=burn_in, seed=mcmc_seed)
        kept = chain.post_burn_in()[::thin]
        _write_table(os.path.join(outdir, "posterior.csv"), chain.param_names, kept)
        summary_fields.update(
            {
                "posterior": posterior_summary(chain),
                "acceptance_rates": chain.acceptance_rates,
                "proposal_scales": chain.proposal_scales,
                "seed": mcmc_seed,
                "samples": S,
                "burn_in": burn_in,
                "thin": thin,
                "mcmc_seconds": time.time() - t1,
            }
        )
    summary_fields["timing_seconds"] = time.time() - t0
    _update_summary(outdir, summary_fields)
    return EXIT_OK


def _load_chain(cfg, outdir, model, data) -> PosteriorChain | None:
    path = os.path.join(outdir, "posterior.csv")
    if not os.path.exists(path):
        return None
    header, M = _read_csv(path)
    return PosteriorChain(
        samples=M,
        burn_in=0,
        acceptance_rates={},
        rng_seed=int(cfg.get("mcmc", {}).get("seed", 0)),
        param_names=header,
        theta_bounds=model.theta_bounds,
        n_basis=0,
        p_x=data.p,
    )


def cmd_predict(cfg: dict) -> int:
    if "predict" not in cfg:
        raise ConfigError("predict command needs a 'predict' input path")
    outdir = cfg["output_dir"]
    data = _build_data(cfg)
    model = _build_model(cfg)
    mode = cfg["mode"]
    if mode in ("l2", "ls"):
        raise ConfigError(
            "l2/ls predictions are written by the calibrate command; rerun it "
            "with a 'predict' path"
        )
    spec = _build_spec(cfg, data)
    Xstar = read_inputs_csv(cfg["predict"])
    chain = _load_chain(cfg, outdir, model, data)
    if chain is not None:
        out = predict_posterior(chain, data, model, spec, Xstar, thin=1)
    else:
        mle_path = os.path.join(outdir, "mle.json")
        if not os.path.exists(mle_path):
            raise DataError(
                f"no posterior.csv or mle.json under {outdir}; run calibrate first"
            )
        with open(mle_path) as fh:
            payload = json.load(fh)
        params = CalibParams(
            payload["theta"],
            payload["beta"],
            payload["psi"],
            payload["sigma2_delta"],
            payload["eta"],
        )
        out = predict(params, data, model, spec, Xstar)
    _prediction_table(outdir, Xstar, out)
    _maybe_truth_mse(cfg, outdir, Xstar, out)
    return EXIT_OK


def cmd_experiment(name: str, seed: int, outdir: str) -> int:
    if name not in EXPERIMENTS:
        raise ConfigError(
            f"unknown experiment {name!r}; choices: {sorted(EXPERIMENTS)}"
        )
    EXPERIMENTS[name](seed=seed, outdir=outdir)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="gpcalib",
        description="Calibrate imperfect computer models with GP discrepancies.",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("calibrate", "predict"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to a JSON run configuration")
    pe = sub.add_parser("experiment")
    pe.add_argument("name", help=f"one of {sorted(EXPERIMENTS)}")
    pe.add_argument("--seed", type=int, default=0)
    pe.add_argument("--outdir", default="out")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.command == "experiment":
            return cmd_experiment(args.name, args.seed, args.outdir)
        cfg = load_config(args.config)
        if args.command == "calibrate":
            return cmd_calibrate(cfg)
        return cmd_predict(cfg)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return EXIT_DATA
    except (NumericalError, OptimizationError) as err:
        print(f"numerical failure: {err}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
