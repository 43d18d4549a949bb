"""Geographic machinery and the two spatial models: coordinate mapping,
chordal distances, neighbor weights, kernels, and the fits built on them."""

import numpy as np
import pytest

from alphareg import (
    DegenerateWeights,
    DimensionMismatch,
    GeoCoordinates,
    InvalidK,
    NonpositiveBandwidth,
    OutOfRangeCoordinate,
    chordal_distance_sq,
    contiguity_matrix,
    fit_alpha_regression,
    fit_alpha_slx,
    fit_gwar,
    fitted_mean,
    gaussian_kernel_weights,
    predict_gwar,
    spatial_lag,
    to_cartesian,
)
from alphareg.datasets import synthesize


def random_coords(rng, n, lat_span=(30.0, 45.0), lon_span=(10.0, 30.0)):
    return GeoCoordinates.from_degrees(
        rng.uniform(*lat_span, size=n), rng.uniform(*lon_span, size=n)
    )


class TestCartesian:
    def test_origin(self):
        np.testing.assert_allclose(to_cartesian(0.0, 0.0), [1.0, 0.0, 0.0], atol=1e-15)

    def test_ninety(self):
        np.testing.assert_allclose(to_cartesian(90.0, 0.0), [0.0, 1.0, 0.0], atol=1e-15)

    def test_unit_norm_random(self, rng):
        cart = to_cartesian(rng.uniform(-90, 90, 100), rng.uniform(-179, 180, 100))
        np.testing.assert_allclose(np.linalg.norm(cart, axis=1), 1.0, atol=1e-12)

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeCoordinate):
            to_cartesian(91.0, 0.0)
        with pytest.raises(OutOfRangeCoordinate):
            to_cartesian(0.0, -180.0)


class TestChordal:
    def test_self_distance_zero(self):
        c = to_cartesian(40.0, 20.0)
        assert chordal_distance_sq(c, c) == 0.0

    def test_orthogonal_unit_vectors(self):
        assert abs(chordal_distance_sq([1, 0, 0], [0, 1, 0]) - 2.0) < 1e-15

    def test_matches_squared_norm(self, rng):
        a = to_cartesian(rng.uniform(-89, 89, 50), rng.uniform(-179, 180, 50))
        b = to_cartesian(rng.uniform(-89, 89, 50), rng.uniform(-179, 180, 50))
        direct = np.sum((a - b) ** 2, axis=1)
        np.testing.assert_allclose(chordal_distance_sq(a, b), direct, atol=1e-12)

    def test_longitude_wraparound(self):
        # +-179 degrees must look exactly like +-1 degree, at any latitude
        for lat in (0.0, 40.0, -63.0):
            far = chordal_distance_sq(to_cartesian(lat, 179.0), to_cartesian(lat, -179.0))
            near = chordal_distance_sq(to_cartesian(lat, 1.0), to_cartesian(lat, -1.0))
            assert abs(far - near) < 1e-12


class TestContiguity:
    def test_two_points(self):
        coords = GeoCoordinates.from_degrees([10.0, 12.0], [20.0, 22.0])
        W = contiguity_matrix(coords, 1)
        np.testing.assert_allclose(W, [[0.0, 1.0], [1.0, 0.0]])

    def test_collinear_middle_picks_nearer(self):
        # three points along a meridian; the middle one is closer to the first
        coords = GeoCoordinates.from_degrees([10.0, 11.0, 14.0], [25.0, 25.0, 25.0])
        W = contiguity_matrix(coords, 1)
        assert W[1, 0] == 1.0 and W[1, 2] == 0.0

    def test_row_standardized_random(self, rng):
        coords = random_coords(rng, 40)
        W = contiguity_matrix(coords, 6)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(np.diag(W) == 0.0)
        assert np.all((W > 0).sum(axis=1) == 6)

    def test_tie_keeps_lower_index(self):
        # longitudes symmetric about the focal point give exactly tied distances
        coords = GeoCoordinates.from_degrees([10.0, 10.0, 10.0], [20.0, 21.0, 19.0])
        W = contiguity_matrix(coords, 1)
        assert W[0, 1] == 1.0 and W[0, 2] == 0.0

    def test_coincident_locations_run(self):
        coords = GeoCoordinates.from_degrees([10.0, 10.0, 11.0], [20.0, 20.0, 21.0])
        W = contiguity_matrix(coords, 2)
        np.testing.assert_allclose(W.sum(axis=1), 1.0, atol=1e-12)

    def test_invalid_k(self, rng):
        coords = random_coords(rng, 5)
        with pytest.raises(InvalidK):
            contiguity_matrix(coords, 5)
        with pytest.raises(InvalidK):
            contiguity_matrix(coords, 0)


class TestKernel:
    def test_self_weight_is_one(self, rng):
        coords = random_coords(rng, 10)
        w = gaussian_kernel_weights(coords, 4, 0.01)
        assert w[4] == 1.0

    def test_flat_limit(self, rng):
        coords = random_coords(rng, 10)
        w = gaussian_kernel_weights(coords, 0, 1e6)
        np.testing.assert_allclose(w, 1.0, atol=1e-9)

    def test_two_algebraic_forms_agree(self, rng):
        coords = random_coords(rng, 20)
        h = 0.05
        w = gaussian_kernel_weights(coords, 3, h)
        d2 = chordal_distance_sq(coords.cart, coords.cart[3])
        np.testing.assert_allclose(w, np.exp(-d2 / (2 * h * h)), atol=1e-14)

    def test_nonpositive_bandwidth(self, rng):
        coords = random_coords(rng, 4)
        with pytest.raises(NonpositiveBandwidth):
            gaussian_kernel_weights(coords, 0, 0.0)


class TestSpatialLag:
    def test_two_neighbor_average(self):
        W = np.array([[0.0, 0.5, 0.5], [1.0, 0.0, 0.0], [0.5, 0.5, 0.0]])
        X = np.column_stack([np.ones(3), [1.0, 3.0, 5.0]])
        lag = spatial_lag(W, X)
        np.testing.assert_allclose(lag[:, 0], [4.0, 1.0, 2.0])

    def test_constant_covariate_unchanged(self, rng):
        coords = random_coords(rng, 12)
        W = contiguity_matrix(coords, 3)
        X = np.column_stack([np.ones(12), np.full(12, 7.0)])
        np.testing.assert_allclose(spatial_lag(W, X)[:, 0], 7.0, atol=1e-12)

    def test_permutation_equivariance(self, rng):
        coords = random_coords(rng, 15)
        W = contiguity_matrix(coords, 4)
        X = np.column_stack([np.ones(15), rng.normal(size=15)])
        perm = rng.permutation(15)
        lag = spatial_lag(W, X)
        lag_perm = spatial_lag(W[np.ix_(perm, perm)], X[perm])
        np.testing.assert_allclose(lag_perm, lag[perm], atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            spatial_lag(np.eye(3), np.ones((4, 2)))


class TestSlxFit:
    def test_reduces_to_augmented_plain_fit(self, rng):
        sim = synthesize(n=80, D=3, p=2, alpha=0.5, noise_scale=0.05,
                         spatial_mode="slx", seed=5)
        W = contiguity_matrix(sim["coords"], 5)
        slx = fit_alpha_slx(sim["Y"], sim["X"], W, 0.5)
        X_aug = np.hstack([sim["X"], spatial_lag(W, sim["X"])])
        plain = fit_alpha_regression(sim["Y"], X_aug, 0.5)
        np.testing.assert_array_equal(slx.coefficients, plain.coefficients)
        assert slx.gamma.shape == slx.beta.shape
        assert np.all(slx.gamma[0] == 0.0)

    def test_recovers_nonspatial_truth_when_gamma_zero(self, rng):
        sim = synthesize(n=500, D=3, p=2, alpha=0.5, noise_scale=0.02,
                         spatial_mode="none", seed=9)
        coords = random_coords(rng, 500)
        W = contiguity_matrix(coords, 5)
        slx = fit_alpha_slx(sim["Y"], sim["X"], W, 0.5)
        assert np.max(np.abs(slx.beta - sim["B"])) < 1e-2

    def test_fitted_rows_sum_to_one(self, rng):
        sim = synthesize(n=50, D=4, p=1, alpha=1.0, noise_scale=0.05,
                         spatial_mode="slx", seed=2)
        W = contiguity_matrix(sim["coords"], 4)
        slx = fit_alpha_slx(sim["Y"], sim["X"], W, 1.0)
        np.testing.assert_allclose(slx.fitted.sum(axis=1), 1.0, atol=1e-12)


class TestGwarFit:
    def test_flat_kernel_matches_global(self):
        sim = synthesize(n=60, D=3, p=1, alpha=0.5, noise_scale=0.05,
                         spatial_mode="two_cluster", seed=3)
        gfit = fit_gwar(sim["Y"], sim["X"], sim["coords"], 0.5, 1e6)
        glob = fit_alpha_regression(sim["Y"], sim["X"], 0.5)
        gap = np.max(np.abs(gfit.local_coefficients - glob.coefficients))
        assert gap < 1e-6

    def test_two_cluster_sign_recovery(self):
        sim = synthesize(n=120, D=3, p=1, alpha=0.5, noise_scale=0.02,
                         spatial_mode="two_cluster", seed=8)
        gfit = fit_gwar(sim["Y"], sim["X"], sim["coords"], 0.5, 0.01)
        signs = np.sign(gfit.local_coefficients[:, 1, :])
        truth0 = np.sign(sim["B"][1])
        expected = np.where(sim["clusters"][:, None] == 0, truth0, -truth0)
        agreement = np.mean(np.all(signs == expected, axis=1))
        assert agreement >= 0.9

    def test_degenerate_weights(self, rng):
        coords = random_coords(rng, 12)
        sim = synthesize(n=12, D=3, p=1, alpha=0.5, noise_scale=0.05, seed=1)
        with pytest.raises(DegenerateWeights):
            fit_gwar(sim["Y"], sim["X"], coords, 0.5, 1e-9)

    def test_kld_and_fitted_rows(self):
        sim = synthesize(n=40, D=3, p=1, alpha=0.5, noise_scale=0.05,
                         spatial_mode="two_cluster", seed=4)
        gfit = fit_gwar(sim["Y"], sim["X"], sim["coords"], 0.5, 0.02)
        np.testing.assert_allclose(gfit.fitted.sum(axis=1), 1.0, atol=1e-12)
        assert gfit.kld >= 0.0


class TestGwarPredict:
    def test_coincident_location_reproduces_fitted(self):
        sim = synthesize(n=40, D=3, p=1, alpha=0.5, noise_scale=0.05,
                         spatial_mode="two_cluster", seed=6)
        gfit = fit_gwar(sim["Y"], sim["X"], sim["coords"], 0.5, 0.02)
        coords_new = GeoCoordinates.from_degrees(sim["coords"].lat[:3],
                                                 sim["coords"].lon[:3])
        mu = predict_gwar(gfit, sim["X"][:3], coords_new)
        np.testing.assert_allclose(mu, gfit.fitted[:3], atol=1e-6)

    def test_flat_kernel_matches_global_prediction(self, rng):
        sim = synthesize(n=40, D=3, p=1, alpha=0.5, noise_scale=0.05,
                         spatial_mode="two_cluster", seed=7)
        gfit = fit_gwar(sim["Y"], sim["X"], sim["coords"], 0.5, 1e6)
        glob = fit_alpha_regression(sim["Y"], sim["X"], 0.5)
        coords_new = random_coords(rng, 5, lat_span=(36.0, 41.0), lon_span=(20.0, 26.0))
        X_new = np.hstack([np.ones((5, 1)), rng.normal(size=(5, 1))])
        mu = predict_gwar(gfit, X_new, coords_new)
        np.testing.assert_allclose(mu, fitted_mean(X_new, glob.coefficients), atol=1e-6)
        np.testing.assert_allclose(mu.sum(axis=1), 1.0, atol=1e-12)
