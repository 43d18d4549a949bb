"""End-to-end runs: selection, final fit, and the result document.

A run selects any hyper-parameters the caller left unset (by leave-one-out
cross-validation), fits the requested model, and assembles a JSON-ready
document: config echo, selection scores, coefficients, per-component
observed-fitted correlations, divergence, and average marginal effects per
covariate.  Documents are deterministic for a fixed config, dataset, and
seed: no timestamps or wall-clock values are included (timing goes to the
log instead).
"""

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._parallel import resolve_threads
from .exceptions import InvalidParameters, MissingColumn
from .inference import (
    average_marginal_effects,
    bootstrap_ame_standard_errors,
    bootstrap_covariance,
    gwar_marginal_effects,
    sandwich_covariance,
    slx_effects,
)
from .optim import LmOptions
from .regression import fit_alpha_regression
from .selection import CvGrid, default_h_grid, loocv_alpha, loocv_gwar, loocv_slx
from .spatial import contiguity_matrix, fit_alpha_slx, fit_gwar

log = logging.getLogger(__name__)

MODELS = ("alpha", "slx", "gwar")


@dataclass
class RunConfig:
    model: str = "alpha"
    alpha: Optional[float] = None
    k: Optional[int] = None
    h: Optional[float] = None
    grid: CvGrid = field(default_factory=CvGrid)
    solver: LmOptions = field(default_factory=LmOptions)
    bootstrap_replicates: int = 0
    seed: int = 0
    threads: int = 1
    with_se: bool = False

    def __post_init__(self):
        if self.model not in MODELS:
            raise InvalidParameters(f"model must be one of {MODELS}")


def _correlations(Y, fitted):
    out = []
    for j in range(Y.shape[1]):
        sy, sf = np.std(Y[:, j]), np.std(fitted[:, j])
        if sy == 0 or sf == 0:
            out.append(None)
        else:
            out.append(float(np.corrcoef(Y[:, j], fitted[:, j])[0, 1]))
    return out


def _ame_table(effects_fn, p):
    return {f"x{k}": [float(v) for v in effects_fn(k)] for k in range(1, p + 1)}


def run_fit(config, Y, X, coords=None, covariate_names=None):
    """Run selection (if needed) and the final fit; return the result document."""
    threads = resolve_threads(config.threads)
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1] - 1
    if config.model in ("slx", "gwar") and coords is None:
        raise MissingColumn(
            f"model {config.model!r} requires latitude and longitude columns"
        )
    if config.model == "gwar" and (config.with_se or config.bootstrap_replicates):
        raise InvalidParameters(
            "standard errors are not available for the locally weighted model"
        )
    t0 = time.perf_counter()

    selection = None
    if config.model == "alpha":
        alpha = config.alpha
        if alpha is None:
            cv = loocv_alpha(Y, X, config.grid, config.solver, threads=threads)
            selection = _selection_doc(cv)
            alpha = cv.best[0]
        fit = fit_alpha_regression(Y, X, alpha, opts=config.solver)
        hyper = {"alpha": float(alpha)}
        doc_fit = {
            "coefficients": fit.coefficients.tolist(),
            "sse": fit.sse,
            "kld": fit.kld,
            "iterations": fit.lm.iterations,
            "converged_by": fit.lm.converged_by.value,
        }
        ame = _ame_table(lambda k: average_marginal_effects(fit, k), p)
        margins = {"ame": ame}
        se = _standard_errors(config, Y, X, alpha, fit, threads)
    elif config.model == "slx":
        alpha, k = config.alpha, config.k
        if alpha is None or k is None:
            grid = _narrow(config.grid,
                           alphas=None if alpha is None else (alpha,),
                           ks=None if k is None else (k,), hs=None)
            if grid.ks is None:
                grid = CvGrid(alphas=grid.alphas,
                              ks=tuple(kk for kk in (3, 5, 7, 9) if kk <= Y.shape[0] - 2),
                              hs=None)
            cv = loocv_slx(Y, X, coords, grid, config.solver, threads=threads)
            selection = _selection_doc(cv)
            alpha, k = cv.best
        W = contiguity_matrix(coords, int(k))
        fit = fit_alpha_slx(Y, X, W, alpha, opts=config.solver)
        hyper = {"alpha": float(alpha), "k": int(k)}
        doc_fit = {
            "beta": fit.beta.tolist(),
            "gamma": fit.gamma.tolist(),
            "coefficients": fit.coefficients.tolist(),
            "sse": fit.sse,
            "kld": fit.kld,
            "iterations": fit.lm.iterations,
            "converged_by": fit.lm.converged_by.value,
        }
        margins = {
            "ame_direct": _ame_table(
                lambda kk: slx_effects(fit, kk).direct.mean(axis=0), p),
            "ame_indirect": _ame_table(
                lambda kk: slx_effects(fit, kk).indirect.mean(axis=0), p),
            "ame_total": _ame_table(
                lambda kk: slx_effects(fit, kk).total.mean(axis=0), p),
        }
        X_aug = np.hstack([X, W @ X[:, 1:]])
        se = _standard_errors(config, Y, X_aug, alpha, fit, threads)
    else:  # gwar
        alpha, h = config.alpha, config.h
        if alpha is None or h is None:
            grid = _narrow(config.grid,
                           alphas=None if alpha is None else (alpha,),
                           ks=None, hs=None if h is None else (h,))
            if grid.hs is None:
                grid = CvGrid(alphas=grid.alphas, ks=None,
                              hs=tuple(default_h_grid(coords)))
            cv = loocv_gwar(Y, X, coords, grid, config.solver, threads=threads)
            selection = _selection_doc(cv)
            alpha, h = cv.best
        fit = fit_gwar(Y, X, coords, alpha, h, opts=config.solver, threads=threads)
        hyper = {"alpha": float(alpha), "h": float(h)}
        doc_fit = {
            "local_coefficients": fit.local_coefficients.tolist(),
            "global_coefficients": fit.global_coefficients.tolist(),
            "kld": fit.kld,
        }
        margins = {
            "ame": _ame_table(
                lambda kk: gwar_marginal_effects(fit, kk).mean(axis=0), p)
        }
        se = None

    doc = {
        "config": _config_doc(config),
        "selection": selection,
        "hyperparameters": hyper,
        "fit": doc_fit | {
            "observed_fitted_correlation": _correlations(Y, fit.fitted)
        },
        "marginal_effects": margins,
        "standard_errors": se,
    }
    if covariate_names:
        doc["covariate_names"] = list(covariate_names)
    log.info("run completed in %.2fs", time.perf_counter() - t0)
    return doc, fit


def _narrow(grid, alphas, ks, hs):
    return CvGrid(
        alphas=grid.alphas if alphas is None else alphas,
        ks=grid.ks if ks is None else ks,
        hs=grid.hs if hs is None else hs,
    )


def _selection_doc(cv):
    doc = {
        "alphas": list(cv.alphas),
        "scores": cv.scores.tolist(),
        "best": list(cv.best),
    }
    if cv.ks is not None:
        doc["ks"] = list(cv.ks)
    if cv.hs is not None:
        doc["hs"] = list(cv.hs)
    return doc


def _config_doc(config):
    return {
        "model": config.model,
        "alpha": config.alpha,
        "k": config.k,
        "h": config.h,
        "grid": {
            "alphas": list(config.grid.alphas),
            "ks": None if config.grid.ks is None else list(config.grid.ks),
            "hs": None if config.grid.hs is None else list(config.grid.hs),
        },
        "solver": {
            "max_iterations": config.solver.max_iterations,
            "sse_rel_tol": config.solver.sse_rel_tol,
            "grad_inf_tol": config.solver.grad_inf_tol,
            "initial_damping_scale": config.solver.initial_damping_scale,
            "damping_increase": config.solver.damping_increase,
            "damping_decrease": config.solver.damping_decrease,
        },
        "bootstrap_replicates": config.bootstrap_replicates,
        "seed": config.seed,
        "threads": config.threads,
        "with_se": config.with_se,
    }


def _standard_errors(config, Y, X_model, alpha, fit, threads):
    """Sandwich SEs by default; pairs bootstrap when replicates requested.

    Also attaches the covariance matrix to the fit object.
    """
    if not (config.with_se or config.bootstrap_replicates):
        return None
    shape = (X_model.shape[1], Y.shape[1] - 1)
    if config.bootstrap_replicates:
        cov = bootstrap_covariance(
            Y, X_model, alpha, opts=config.solver,
            replicates=config.bootstrap_replicates, seed=config.seed,
            threads=threads,
        )
        ame_se = bootstrap_ame_standard_errors(
            Y, X_model, alpha, opts=config.solver,
            replicates=config.bootstrap_replicates, seed=config.seed,
            threads=threads,
        )
        fit.covariance = cov.matrix
        return {
            "kind": cov.kind,
            "replicates": cov.replicates,
            "failed_replicates": cov.failed_replicates,
            "coefficients": _se_matrix(cov.matrix, shape).tolist(),
            "ame": ame_se.tolist(),
        }
    cov = sandwich_covariance(Y, X_model, alpha, fit.coefficients)
    fit.covariance = cov.matrix
    return {
        "kind": cov.kind,
        "coefficients": _se_matrix(cov.matrix, shape).tolist(),
    }


def _se_matrix(cov, shape):
    return np.sqrt(np.diag(cov)).reshape(shape, order="F")
