"""Marginal effects and coefficient uncertainty.

Marginal effects of covariate ``k`` on the mean composition follow from the
multinomial-logit map: with ``s_i = sum_j B[k, j] * mu[i, j+1]``,

    d mu_i1     / d x_k = -mu_i1 * s_i
    d mu_i(l+1) / d x_k =  mu_i(l+1) * (B[k, l] - s_i)

so every effects row sums to zero exactly: raising one component must lower
others by the same total.  Lagged-covariate fits decompose into direct
(local beta), indirect (spillover gamma) and total (beta + gamma) effects
with identical functional form, and locally weighted fits evaluate the same
formula per location with that location's coefficients.

Coefficient covariance comes in three flavors: the sandwich estimator
``H^-1 J H^-1 / n`` built from per-observation mean Jacobians and residual
outer products, its spherical special case ``sigma2 * H^-1 / n``, and a
nonparametric pairs bootstrap that resamples whole observation rows.
"""

from dataclasses import dataclass

import numpy as np

from ._parallel import parallel_map
from .exceptions import (
    CovarianceNotPsd,
    InterceptEffectRequested,
    InvalidParameters,
    NumericalError,
    SingularH,
)
from .regression import (
    _mean_jacobian,
    fit_alpha_regression,
    sse,
    transformed_mean,
)
from .simplex import alpha_transform

COND_LIMIT = 1e12
PSD_TOL = -1e-10


def marginal_effects(B, mu, k):
    """Per-observation effects of covariate ``k`` on every component.

    ``B`` is the (p+1) x d coefficient matrix (row 0 is the intercept), so
    ``k`` indexes both the covariate and its coefficient row; ``mu`` holds
    the fitted compositions.  Returns an n x D table whose rows sum to 0.
    """
    B = np.asarray(B, dtype=np.float64)
    mu = np.atleast_2d(np.asarray(mu, dtype=np.float64))
    if k == 0:
        raise InterceptEffectRequested("the intercept has no marginal effect")
    if not 1 <= k < B.shape[0]:
        raise InvalidParameters(f"covariate index {k} outside 1..{B.shape[0] - 1}")
    bk = B[k]  # length d, coefficient of covariate k per non-reference component
    s = mu[:, 1:] @ bk
    coeff_full = np.concatenate([[0.0], bk])  # implicit zero for the reference
    return mu * (coeff_full[None, :] - s[:, None])


def average_marginal_effects(fit, k):
    """Columnwise mean of the per-observation effects table; sums to 0."""
    table = marginal_effects(fit.coefficients, fit.fitted, k)
    return table.mean(axis=0)


@dataclass
class SlxEffects:
    direct: np.ndarray
    indirect: np.ndarray
    total: np.ndarray


def slx_effects(fit, k):
    """Direct, indirect, and total effect tables for a lagged-covariate fit.

    Direct uses the local coefficients, indirect the spillover ones with the
    same formula, and total their sum; totals equal direct plus indirect
    exactly because the formula is linear in the coefficient row.
    """
    direct = marginal_effects(fit.beta, fit.fitted, k)
    indirect = marginal_effects(fit.gamma, fit.fitted, k)
    total = marginal_effects(fit.beta + fit.gamma, fit.fitted, k)
    return SlxEffects(direct=direct, indirect=indirect, total=total)


def gwar_marginal_effects(fit, k):
    """Location-specific effects: each row evaluated with its own coefficients."""
    n = fit.fitted.shape[0]
    rows = [
        marginal_effects(fit.local_coefficients[i], fit.fitted[i : i + 1], k)[0]
        for i in range(n)
    ]
    return np.vstack(rows)


@dataclass
class CovarianceEstimate:
    matrix: np.ndarray
    kind: str  # "sandwich" | "spherical" | "bootstrap"
    replicates: int = 0
    failed_replicates: int = 0


def _enforce_psd(M):
    M = 0.5 * (M + M.T)
    eigvals, eigvecs = np.linalg.eigh(M)
    if np.any(eigvals < PSD_TOL * max(1.0, eigvals.max(initial=0.0))):
        raise CovarianceNotPsd(
            f"covariance estimate has eigenvalue {eigvals.min():.3e}"
        )
    eigvals = np.maximum(eigvals, 0.0)
    return (eigvecs * eigvals) @ eigvecs.T


def sandwich_covariance(Y, X, alpha, B_hat, kind="sandwich"):
    """Asymptotic covariance of ``vec(B_hat)`` from the NLS sandwich form.

    With per-observation mean Jacobians ``G_i`` and transformed-space
    residuals ``e_i``:

        H = (1/n) sum G_i' G_i,    J = (1/n) sum G_i' e_i e_i' G_i,

    the estimate is ``H^-1 J H^-1 / n``.  ``kind="spherical"`` instead
    returns ``sigma2 * H^-1 / n`` with ``sigma2 = SSE / (n d - (p+1) d)``,
    valid when residuals are i.i.d. with a scalar covariance.
    """
    if kind not in ("sandwich", "spherical"):
        raise InvalidParameters(f"unknown covariance kind {kind!r}")
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    B_hat = np.asarray(B_hat, dtype=np.float64)
    n, D = Y.shape
    d = D - 1
    A = _mean_jacobian(X, B_hat, alpha)  # (n, d, d)
    G = np.einsum("imk,ia->imka", A, X).reshape(n, d, B_hat.size)
    H = np.einsum("imp,imq->pq", G, G) / n
    if np.linalg.cond(H) > COND_LIMIT:
        raise SingularH(
            f"curvature matrix condition number exceeds {COND_LIMIT:.0e}"
        )
    H_inv = np.linalg.inv(H)
    if kind == "spherical":
        dof = n * d - B_hat.size
        if dof <= 0:
            raise InvalidParameters("nonpositive degrees of freedom")
        sigma2 = sse(Y, X, alpha, B_hat) / dof
        cov = sigma2 * H_inv / n
    else:
        eps = alpha_transform(Y, alpha) - transformed_mean(X, B_hat, alpha)
        S = np.einsum("im,imp->ip", eps, G)
        J = S.T @ S / n
        cov = H_inv @ J @ H_inv / n
    return CovarianceEstimate(matrix=_enforce_psd(cov), kind=kind)


def bootstrap_covariance(Y, X, alpha, opts=None, replicates=200, seed=0, threads=1):
    """Pairs-bootstrap covariance of ``vec(B_hat)``.

    Observation rows ``(y_i, x_i)`` are resampled with replacement and the
    model refit per replicate; replicate RNG streams derive from the seed by
    replicate index, so results are identical for any thread count.  Failed
    replicates are dropped and counted; more than 20% failing is an error.
    """
    draws, failed = _bootstrap_draws(Y, X, alpha, opts, replicates, seed, threads)
    cov = np.cov(np.vstack(draws), rowvar=False, ddof=1)
    return CovarianceEstimate(
        matrix=np.atleast_2d(cov),
        kind="bootstrap",
        replicates=len(draws),
        failed_replicates=failed,
    )


def bootstrap_ame_standard_errors(Y, X, alpha, opts=None, replicates=200, seed=0,
                                  threads=1):
    """Bootstrap standard errors of the average marginal effects.

    Re-evaluates the AME of every covariate on each bootstrap refit and
    returns a p x D matrix of standard deviations across replicates.
    """
    Y = np.asarray(Y, dtype=np.float64)
    p = np.asarray(X).shape[1] - 1

    def ame_stat(fit):
        return np.stack([average_marginal_effects(fit, k) for k in range(1, p + 1)])

    draws, _ = _bootstrap_draws(
        Y, X, alpha, opts, replicates, seed, threads, stat=ame_stat
    )
    return np.std(np.stack(draws), axis=0, ddof=1)


def _bootstrap_draws(Y, X, alpha, opts, replicates, seed, threads, stat=None):
    if replicates < 2:
        raise InvalidParameters("bootstrap needs at least 2 replicates")
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n = Y.shape[0]
    base = fit_alpha_regression(Y, X, alpha, opts=opts)
    theta_hat = base.lm.theta

    def one(rep):
        rng = np.random.default_rng([seed, rep])
        idx = rng.integers(0, n, size=n)
        try:
            fit = fit_alpha_regression(
                Y[idx], X[idx], alpha, opts=opts, theta0=theta_hat
            )
        except NumericalError:
            return None
        return stat(fit) if stat is not None else fit.lm.theta.copy()

    results = parallel_map(one, range(replicates), threads=threads)
    draws = [r for r in results if r is not None]
    failed = replicates - len(draws)
    if failed > 0.2 * replicates:
        raise NumericalError(
            f"{failed} of {replicates} bootstrap replicates failed to fit"
        )
    return draws, failed
