"""Compositional regression through the power-parameterized transform.

The conditional mean of a D-part composition given covariates ``x`` is the
multinomial-logit map of linear predictors ``eta_j = x' beta_j``:

    mu_1     = 1 / (1 + sum_j exp(eta_j))
    mu_{j+1} = exp(eta_j) / (1 + sum_j exp(eta_j)),   j = 1..d,  d = D-1

with component 1 as the reference.  Coefficients are estimated by nonlinear
least squares in transformed space,

    SSE(B) = sum_i || z(y_i) - z(mu_i) ||^2,

where ``z`` is the transform of :mod:`alphareg.simplex` at a fixed power
``alpha``.  A useful identity collapses the two-step transform of the fitted
mean: the power transform of ``mu`` equals the multinomial-logit map of
``alpha * eta``, so transformed means never require forming ``mu`` first.

The analytic gradient and Hessian of ``l = -SSE/2`` are assembled from the
chain of three Jacobians (Helmert rows, power transform in ``mu``,
multinomial logit in ``eta``); both are exposed for diagnostics and
covariance estimation, while the solver consumes the stacked residual
Jacobian built from the same chain.

Parameter layout: ``theta = B.ravel(order="F")`` stacks coefficient columns
component by component, so ``theta[k*(p+1) + a]`` is covariate ``a`` of
non-reference component ``k+2``.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import DimensionMismatch, NonpositiveFitted, ShapeMismatch
from .optim import LmOptions, LmResult, ResidualSystem, levenberg_marquardt
from .simplex import alpha_transform, helmert_submatrix, _check_alpha

LINPRED_CLAMP = 700.0
MU_FLOOR = 1e-300


@dataclass
class FitResult:
    """Converged fit of the compositional regression at a fixed alpha."""

    coefficients: np.ndarray  # (p+1) x d
    fitted: np.ndarray  # n x D compositions
    sse: float
    kld: float
    alpha: float
    lm: LmResult
    covariance: Optional[np.ndarray] = None


def _check_design(X, B):
    X = np.asarray(X, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if X.ndim != 2 or B.ndim != 2:
        raise DimensionMismatch("design and coefficient matrices must be 2-D")
    if X.shape[1] != B.shape[0]:
        raise DimensionMismatch(
            f"design has {X.shape[1]} columns but coefficients have {B.shape[0]} rows"
        )
    return X, B


def theta_to_coef(theta, n_cols, d):
    return np.asarray(theta, dtype=np.float64).reshape((n_cols, d), order="F")


def coef_to_theta(B):
    return np.asarray(B, dtype=np.float64).ravel(order="F")


def fitted_mean(X, B):
    """Multinomial-logit mean compositions, one row per observation.

    Linear predictors are clamped to +-700 before exponentiation so the map
    never overflows; rows sum to 1 with all entries in (0, 1).
    """
    X, B = _check_design(X, B)
    eta = np.clip(X @ B, -LINPRED_CLAMP, LINPRED_CLAMP)
    e = np.exp(eta)
    denom = 1.0 + e.sum(axis=1, keepdims=True)
    return np.hstack([1.0 / denom, e / denom])


def transformed_mean(X, B, alpha):
    """Transformed fitted means, computed without forming the compositions.

    Uses the collapse of power transform and logit map: the stay-in-simplex
    power of the fitted mean equals the logit map of ``alpha * eta``.  At
    ``alpha == 0`` the transformed mean is linear: ``eta_full @ H.T`` with
    ``eta_full = (0, eta_1, ..., eta_d)``.
    """
    alpha = _check_alpha(alpha)
    X, B = _check_design(X, B)
    d = B.shape[1]
    H = helmert_submatrix(d + 1)
    if alpha == 0.0:
        eta = np.clip(X @ B, -LINPRED_CLAMP, LINPRED_CLAMP)
        return eta @ H[:, 1:].T
    u = fitted_mean(X, alpha * B)
    return ((d + 1) * u - 1.0) @ H.T / alpha


def _check_response(Y, X, B):
    Y = np.asarray(Y, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if Y.shape[0] != np.asarray(X).shape[0]:
        raise DimensionMismatch("response and design row counts differ")
    if Y.shape[1] != B.shape[1] + 1:
        raise DimensionMismatch(
            f"response has {Y.shape[1]} components but coefficients cover "
            f"{B.shape[1] + 1}"
        )
    return Y


def sse(Y, X, alpha, B):
    """Sum of squared residuals between transformed data and fitted means."""
    Y = _check_response(Y, X, B)
    r = alpha_transform(Y, alpha) - transformed_mean(X, B, alpha)
    return float(np.sum(r * r))


def kld(observed, fitted):
    """Kullback-Leibler divergence of fitted from observed compositions.

    ``sum_ij y_ij * log(y_ij / mu_ij)`` with the convention 0*log(0) = 0, so
    zeros in the observed data contribute nothing and need no imputation.
    """
    obs = np.atleast_2d(np.asarray(observed, dtype=np.float64))
    fit = np.atleast_2d(np.asarray(fitted, dtype=np.float64))
    if obs.shape != fit.shape:
        raise ShapeMismatch(f"observed {obs.shape} vs fitted {fit.shape}")
    if np.any(fit <= 0):
        raise NonpositiveFitted("fitted compositions must be strictly positive")
    mask = obs > 0
    terms = np.zeros_like(obs)
    terms[mask] = obs[mask] * np.log(obs[mask] / fit[mask])
    return float(terms.sum())


# -- derivative chain ---------------------------------------------------------

def _power_jacobian(mu, alpha):
    """d u_l / d mu_p for the stay-in-simplex power transform, per row.

    Compact form with T = sum_j mu_j**alpha:
        (alpha * mu_p**(alpha-1) / T) * (delta_lp - mu_l**alpha / T)
    Returns an (n, D, D) array indexed [i, l, p].
    """
    mu = np.maximum(mu, MU_FLOOR)
    ma = mu**alpha
    T = ma.sum(axis=1, keepdims=True)
    u = ma / T
    mp = mu ** (alpha - 1.0)
    D = mu.shape[1]
    eye = np.eye(D)
    return (alpha * mp / T)[:, None, :] * (eye[None, :, :] - u[:, :, None])


def _logit_jacobian(mu):
    """d mu_p / d eta_k for the multinomial-logit map, per row.

    ``mu_p * (delta_{p,k+1} - mu_{k+1})``; returns (n, D, d) indexed [i, p, k].
    """
    D = mu.shape[1]
    E = np.eye(D)[:, 1:]
    return mu[:, :, None] * (E[None, :, :] - mu[:, None, 1:])


def _mean_jacobian(X, B, alpha):
    """Sensitivity of the transformed mean to the linear predictors.

    Returns A with shape (n, d, d): ``A[i, m, k] = d z(mu_i)_m / d eta_{ik}``.
    The full parameter Jacobian is ``A[i, m, k] * X[i, a]``.
    """
    X, B = _check_design(X, B)
    n = X.shape[0]
    d = B.shape[1]
    D = d + 1
    H = helmert_submatrix(D)
    if alpha == 0.0:
        return np.broadcast_to(H[:, 1:], (n, d, d)).copy()
    mu = fitted_mean(X, B)
    Ju = _power_jacobian(mu, alpha)
    C = _logit_jacobian(mu)
    return (D / alpha) * np.einsum("ml,ilp,ipk->imk", H, Ju, C, optimize=True)


def gradient(Y, X, alpha, B):
    """Gradient of ``l = -SSE/2`` with respect to ``theta = vec(B)``.

    Assembled as ``sum_i sum_m r_im * A[i, m, k] * x_ia`` with the residuals
    ``r = z(y) - z(mu)`` and the chain Jacobian of :func:`_mean_jacobian`.
    """
    alpha = _check_alpha(alpha)
    X, B = _check_design(X, B)
    Y = _check_response(Y, X, B)
    r = alpha_transform(Y, alpha) - transformed_mean(X, B, alpha)
    A = _mean_jacobian(X, B, alpha)
    return np.einsum("im,imk,ia->ka", r, A, X, optimize=True).ravel()


def hessian_gauss_newton(Y, X, alpha, B):
    """First-order (Gauss-Newton) block of the Hessian of ``l = -SSE/2``.

    ``-sum_i sum_m (dm_im/dtheta)(dm_im/dtheta)'``; symmetric and negative
    semi-definite by construction, and equal to ``-J'J`` for the stacked
    residual Jacobian consumed by the solver.
    """
    alpha = _check_alpha(alpha)
    X, B = _check_design(X, B)
    A = _mean_jacobian(X, B, alpha)
    P = B.size
    blocks = np.einsum("imk,ia,imq,ib->kaqb", A, X, A, X, optimize=True)
    return -blocks.reshape(P, P)


def _power_hessian(mu, alpha):
    """Second derivatives d2 u_l / (d mu_p d mu_q), shape (n, D, D, D).

    General Kronecker-delta form, symmetric in (p, q):
        a(a-1) mu_l^(a-2) d_lp d_lq / T
      - a^2 mu_l^(a-1) mu_q^(a-1) d_lp / T^2
      - a^2 mu_l^(a-1) mu_p^(a-1) d_lq / T^2
      - a(a-1) mu_l^a mu_p^(a-2) d_pq / T^2
      + 2 a^2 mu_l^a mu_p^(a-1) mu_q^(a-1) / T^3
    """
    a = alpha
    mu = np.maximum(mu, MU_FLOOR)
    D = mu.shape[1]
    ma = mu**a
    m1 = mu ** (a - 1.0)
    m2 = mu ** (a - 2.0)
    T = ma.sum(axis=1)
    eye = np.eye(D)
    t1 = np.einsum("il,lp,lq->ilpq", a * (a - 1.0) * m2 / T[:, None], eye, eye)
    t2 = -(a * a) * np.einsum("il,iq,lp->ilpq", m1 / T[:, None] ** 2, m1, eye)
    t3 = -(a * a) * np.einsum("il,ip,lq->ilpq", m1 / T[:, None] ** 2, m1, eye)
    t4 = -a * (a - 1.0) * np.einsum("il,ip,pq->ilpq", ma / T[:, None] ** 2, m2, eye)
    t5 = 2.0 * a * a * np.einsum("il,ip,iq->ilpq", ma / T[:, None] ** 3, m1, m1)
    return t1 + t2 + t3 + t4 + t5


def _logit_hessian(mu):
    """Second derivatives d2 mu_q / (d eta_k d eta_k'), shape (n, D, d, d).

    ``mu_q * (d_{q,k+1} d_{q,k'+1} - d_{q,k+1} mu_{k'+1} - d_{q,k'+1} mu_{k+1}
    - mu_{k+1} d_{kk'} + 2 mu_{k+1} mu_{k'+1})``.
    """
    D = mu.shape[1]
    d = D - 1
    E = np.eye(D)[:, 1:]
    mm = mu[:, 1:]
    part = (
        (E[:, :, None] * E[:, None, :])[None, :, :, :]
        - E[None, :, :, None] * mm[:, None, None, :]
        - E[None, :, None, :] * mm[:, None, :, None]
        - np.eye(d)[None, None, :, :] * mm[:, None, :, None]
        + 2.0 * mm[:, None, :, None] * mm[:, None, None, :]
    )
    return mu[:, :, None, None] * part


def hessian_exact(Y, X, alpha, B):
    """Exact Hessian of ``l = -SSE/2``: Gauss-Newton block plus the
    residual-weighted second-derivative correction.

    The correction applies the product rule to the Jacobian chain, combining
    the power-transform Hessian contracted with two logit Jacobians and the
    logit Hessian contracted with the power Jacobian.  It vanishes when the
    residuals are identically zero.
    """
    alpha = _check_alpha(alpha)
    X, B = _check_design(X, B)
    Y = _check_response(Y, X, B)
    P = B.size
    H1 = hessian_gauss_newton(Y, X, alpha, B)
    if alpha == 0.0:
        return H1  # transformed mean is linear in B
    d = B.shape[1]
    D = d + 1
    Hm = helmert_submatrix(D)
    mu = fitted_mean(X, B)
    r = alpha_transform(Y, alpha) - transformed_mean(X, B, alpha)
    Ju = _power_jacobian(mu, alpha)
    C = _logit_jacobian(mu)
    Hu = _power_hessian(mu, alpha)
    D2 = _logit_hessian(mu)
    t_power = np.einsum("ilqp,ipj,iqk->ilkj", Hu, C, C, optimize=True)
    t_logit = np.einsum("ilq,iqkj->ilkj", Ju, D2, optimize=True)
    s = (D / alpha) * np.einsum("ml,ilkj->imkj", Hm, t_power + t_logit, optimize=True)
    w2 = np.einsum("im,imkj->ikj", r, s, optimize=True)
    H2 = np.einsum("ikj,ia,ib->kajb", w2, X, X, optimize=True).reshape(P, P)
    return H1 + H2


# -- fitting ------------------------------------------------------------------

def residual_system(Y, X, alpha, weights=None):
    """Stacked residual system for the solver.

    Residual row order is observation-major: entry ``i*d + m`` is component
    score ``m`` of observation ``i``.  Per-observation weights (length n)
    are expanded to all d component residuals of that observation.
    """
    alpha = _check_alpha(alpha)
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    n, D = Y.shape
    if X.shape[0] != n:
        raise DimensionMismatch("response and design row counts differ")
    d = D - 1
    n_cols = X.shape[1]
    y_a = alpha_transform(Y, alpha)

    def res(theta):
        B = theta_to_coef(theta, n_cols, d)
        return (y_a - transformed_mean(X, B, alpha)).ravel()

    def jac(theta):
        B = theta_to_coef(theta, n_cols, d)
        A = _mean_jacobian(X, B, alpha)
        return -np.einsum("imk,ia->imka", A, X).reshape(n * d, n_cols * d)

    w = None
    if weights is not None:
        w = np.repeat(np.asarray(weights, dtype=np.float64), d)
    return ResidualSystem(
        residual_fn=res,
        jacobian_fn=jac,
        n_params=n_cols * d,
        n_residuals=n * d,
        weights=w,
    )


def fit_alpha_regression(Y, X, alpha, opts=None, theta0=None, weights=None):
    """Estimate the coefficient matrix at a fixed alpha.

    Starts from ``B = 0`` (uniform fitted compositions) unless ``theta0`` is
    given; deterministic for fixed inputs.  ``weights`` (length n,
    nonnegative) fit the kernel-weighted objective used by the locally
    weighted model.
    """
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    d = Y.shape[1] - 1
    n_cols = X.shape[1]
    system = residual_system(Y, X, alpha, weights=weights)
    if theta0 is None:
        theta0 = np.zeros(n_cols * d)
    lm = levenberg_marquardt(system, theta0, opts or LmOptions())
    B = theta_to_coef(lm.theta, n_cols, d)
    mu = fitted_mean(X, B)
    return FitResult(
        coefficients=B,
        fitted=mu,
        sse=sse(Y, X, alpha, B),
        kld=kld(Y, mu),
        alpha=float(alpha),
        lm=lm,
    )


def predict(X_new, fit):
    """Mean compositions at new covariate rows."""
    return fitted_mean(X_new, fit.coefficients)
