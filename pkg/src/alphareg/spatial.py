"""Geographic machinery and the two spatial regression models.

Locations are mapped from (latitude, longitude) degrees to unit 3-vectors

    c = (cos(lat), sin(lat) cos(lon), sin(lat) sin(lon))

(angles in radians), so squared distances are chordal: ``d2 = 2 (1 - c_i'c_j)``.
Subtracting raw degrees would misjudge pairs that straddle the +-180
longitude seam; the chordal route does not.

Two models build on the plain compositional regression:

* the lagged-covariate model adds neighborhood averages ``W x`` of the
  covariates as extra regressors (coefficients split into local ``beta``
  and spillover ``gamma``), and
* the locally weighted model refits at every location with Gaussian kernel
  weights ``w_ij = exp((c_i'c_j - 1) / h^2)``, giving location-specific
  coefficient matrices.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ._parallel import parallel_map
from .exceptions import (
    DegenerateWeights,
    DimensionMismatch,
    InvalidK,
    NonpositiveBandwidth,
    OutOfRangeCoordinate,
)
from .optim import LmOptions, LmResult
from .regression import (
    coef_to_theta,
    fit_alpha_regression,
    fitted_mean,
    kld,
    theta_to_coef,
)

COINCIDENT_DIST_SQ = 1e-12  # floor for inverse-distance weights
ROUNDING_DIST_SQ = 1e-15  # below the resolution of 2*(1 - c'c) in doubles


def to_cartesian(lat, lon):
    """Unit 3-vector(s) for coordinates given in degrees.

    Latitude must lie in [-90, 90] and longitude in (-180, 180].
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(lat < -90) or np.any(lat > 90):
        raise OutOfRangeCoordinate("latitude outside [-90, 90]")
    if np.any(lon <= -180) or np.any(lon > 180):
        raise OutOfRangeCoordinate("longitude outside (-180, 180]")
    nu = np.radians(lat)
    v = np.radians(lon)
    cart = np.stack(
        [np.cos(nu), np.sin(nu) * np.cos(v), np.sin(nu) * np.sin(v)], axis=-1
    )
    return cart


@dataclass
class GeoCoordinates:
    """Per-observation coordinates with cached unit vectors."""

    lat: np.ndarray
    lon: np.ndarray
    cart: np.ndarray

    @classmethod
    def from_degrees(cls, lat, lon):
        lat = np.atleast_1d(np.asarray(lat, dtype=np.float64))
        lon = np.atleast_1d(np.asarray(lon, dtype=np.float64))
        if lat.shape != lon.shape:
            raise DimensionMismatch("latitude and longitude lengths differ")
        return cls(lat=lat, lon=lon, cart=to_cartesian(lat, lon))

    @property
    def n(self):
        return self.lat.shape[0]


def chordal_distance_sq(ci, cj):
    """Squared straight-line distance between unit vectors: 2 (1 - ci'cj).

    Symmetric, in [0, 4]; tiny negatives from rounding are clamped to 0.
    """
    ci = np.asarray(ci, dtype=np.float64)
    cj = np.asarray(cj, dtype=np.float64)
    d2 = np.maximum(2.0 * (1.0 - np.sum(ci * cj, axis=-1)), 0.0)
    return np.where(d2 < ROUNDING_DIST_SQ, 0.0, d2)


def pairwise_chordal_sq(cart):
    """n x n matrix of squared chordal distances with an exactly zero diagonal."""
    gram = cart @ cart.T
    d2 = np.maximum(2.0 * (1.0 - gram), 0.0)
    d2[d2 < ROUNDING_DIST_SQ] = 0.0
    np.fill_diagonal(d2, 0.0)
    return d2


def contiguity_matrix(coords, k):
    """Row-standardized k-nearest-neighbor inverse squared-distance weights.

    Each row keeps its k nearest non-self neighbors at weight ``1/d2``
    (capped at 1e12 for coincident locations) and zeros elsewhere, then is
    divided by its sum.  Distance ties at the k-th position keep the
    lower-index observation.
    """
    n = coords.n
    if not 1 <= k <= n - 1:
        raise InvalidK(f"k must satisfy 1 <= k <= n-1 = {n - 1}, got {k}")
    d2 = pairwise_chordal_sq(coords.cart)
    np.fill_diagonal(d2, np.inf)
    W = np.zeros((n, n))
    for i in range(n):
        # stable sort keeps the lower index first among tied distances
        neighbors = np.argsort(d2[i], kind="stable")[:k]
        W[i, neighbors] = 1.0 / np.maximum(d2[i, neighbors], COINCIDENT_DIST_SQ)
    return W / W.sum(axis=1, keepdims=True)


def gaussian_kernel_weights(coords, focal, h):
    """Gaussian kernel weights of every location relative to a focal one.

    Uses the simplification ``exp(-d2/(2 h^2)) = exp((c_i'c_j - 1)/h^2)``;
    the focal location's own weight is exactly 1.
    """
    if h <= 0:
        raise NonpositiveBandwidth(f"bandwidth must be > 0, got {h}")
    w = np.exp(_dot_gap(coords.cart @ coords.cart[focal]) / (h * h))
    w[focal] = 1.0
    return w


def _dot_gap(dots):
    """Clamp c'c - 1 into [-2, 0], snapping sub-resolution gaps to 0."""
    gap = np.minimum(dots - 1.0, 0.0)
    return np.where(gap > -0.5 * ROUNDING_DIST_SQ, 0.0, gap)


def kernel_weights_at(coords, cart_point, h):
    """Kernel weights of training locations relative to an arbitrary point."""
    if h <= 0:
        raise NonpositiveBandwidth(f"bandwidth must be > 0, got {h}")
    dots = coords.cart @ np.asarray(cart_point, dtype=np.float64)
    return np.exp(_dot_gap(dots) / (h * h))


def spatial_lag(W, X):
    """Neighborhood averages of the covariates (the intercept is never lagged)."""
    W = np.asarray(W, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    if W.shape[0] != W.shape[1] or W.shape[0] != X.shape[0]:
        raise DimensionMismatch(
            f"weight matrix {W.shape} does not conform with design {X.shape}"
        )
    return W @ X[:, 1:]


@dataclass
class SlxFit:
    """Fit with spatially lagged covariates.

    ``beta`` holds intercept and local covariate coefficients; ``gamma`` has
    the same shape with a structurally zero intercept row, so both slot into
    the marginal-effects formulas unchanged.  ``coefficients`` is the full
    matrix on the augmented design ``[X | WX]``.
    """

    beta: np.ndarray
    gamma: np.ndarray
    coefficients: np.ndarray
    fitted: np.ndarray
    sse: float
    kld: float
    alpha: float
    lm: LmResult
    covariance: Optional[np.ndarray] = None


def fit_alpha_slx(Y, X, W, alpha, opts=None, theta0=None):
    """Fit the lagged-covariate model: linear predictors ``x'b + (Wx)'g``.

    Reduces by construction to the plain regression on the augmented design
    ``[X | WX]``; the coefficient matrix is split back into local and
    spillover parts.
    """
    X = np.asarray(X, dtype=np.float64)
    p = X.shape[1] - 1
    X_aug = np.hstack([X, spatial_lag(W, X)])
    fit = fit_alpha_regression(Y, X_aug, alpha, opts=opts, theta0=theta0)
    C = fit.coefficients
    d = C.shape[1]
    beta = C[: p + 1]
    gamma = np.vstack([np.zeros((1, d)), C[p + 1 :]])
    return SlxFit(
        beta=beta,
        gamma=gamma,
        coefficients=C,
        fitted=fit.fitted,
        sse=fit.sse,
        kld=fit.kld,
        alpha=fit.alpha,
        lm=fit.lm,
    )


@dataclass
class GwarFit:
    """Locally weighted fit: one coefficient matrix per location.

    Training inputs and the global warm-start solution are retained so that
    out-of-sample locations can be fit on demand (see :func:`predict_gwar`).
    """

    local_coefficients: np.ndarray  # n x (p+1) x d
    alpha: float
    h: float
    fitted: np.ndarray
    kld: float
    global_coefficients: np.ndarray
    train_Y: np.ndarray
    train_X: np.ndarray
    train_coords: GeoCoordinates
    opts: LmOptions


def _local_theta(Y, X, alpha, weights, theta0, opts):
    fit = fit_alpha_regression(Y, X, alpha, opts=opts, theta0=theta0, weights=weights)
    return fit.lm.theta


def fit_gwar(Y, X, coords, alpha, h, opts=None, threads=1):
    """Fit the locally weighted model at every observed location.

    Each location minimizes the kernel-weighted squared residuals over the
    whole sample; local solves warm-start from the global fit.  The n local
    problems are independent and run on ``threads`` workers with results
    gathered by location index.
    """
    Y = np.asarray(Y, dtype=np.float64)
    X = np.asarray(X, dtype=np.float64)
    opts = opts or LmOptions()
    n, D = Y.shape
    d = D - 1
    global_fit = fit_alpha_regression(Y, X, alpha, opts=opts)
    theta_g = global_fit.lm.theta

    def solve_location(i):
        w = gaussian_kernel_weights(coords, i, h)
        others = np.delete(w, i)
        if others.size and np.max(others) == 0.0:
            raise DegenerateWeights(
                f"all non-self kernel weights underflowed at location {i} (h={h:g})"
            )
        return _local_theta(Y, X, alpha, w, theta_g, opts)

    thetas = parallel_map(solve_location, range(n), threads=threads)
    local = np.stack([theta_to_coef(t, X.shape[1], d) for t in thetas])
    fitted = np.vstack([fitted_mean(X[i : i + 1], local[i]) for i in range(n)])
    return GwarFit(
        local_coefficients=local,
        alpha=float(alpha),
        h=float(h),
        fitted=fitted,
        kld=kld(Y, fitted),
        global_coefficients=global_fit.coefficients,
        train_Y=Y,
        train_X=X,
        train_coords=coords,
        opts=opts,
    )


def predict_gwar(fit, X_new, coords_new, threads=1):
    """Mean compositions at new locations.

    Each new location gets its own kernel-weighted fit on the training data
    only (warm-started from the stored global solution), evaluated at the
    matching row of ``X_new``.
    """
    X_new = np.asarray(X_new, dtype=np.float64)
    theta_g = coef_to_theta(fit.global_coefficients)
    n_cols = fit.train_X.shape[1]
    d = fit.train_Y.shape[1] - 1

    def solve_new(j):
        w = kernel_weights_at(fit.train_coords, coords_new.cart[j], fit.h)
        if np.max(w) == 0.0:
            raise DegenerateWeights(
                f"all kernel weights underflowed at prediction point {j} (h={fit.h:g})"
            )
        local_fit = fit_alpha_regression(
            fit.train_Y, fit.train_X, fit.alpha,
            opts=fit.opts, theta0=theta_g, weights=w,
        )
        return fitted_mean(X_new[j : j + 1], local_fit.coefficients)[0]

    rows = parallel_map(solve_new, range(coords_new.n), threads=threads)
    return np.vstack(rows)
