"""Stationary Gaussian field tests: spectra, sampling, scores, conditioning."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wsgm.errors import ConfigurationError, DomainError, ResourceLimitError
from wsgm.gauss import (
    SpectrumSpec,
    StationaryGaussian,
    analytic_normalizer,
    build_spectrum,
    condition_number,
    conditional_gaussian,
    dense_covariance,
    sample,
    score_exact,
    wavelet_covariance,
    wavelet_scale_blocks,
)
from wsgm.wavelet import make_filters, operator_matrices

RNG = np.random.default_rng


def white(side, dims=1, mean=0.0):
    return StationaryGaussian(
        spectrum=np.ones((side,) * dims), mean=mean, side=side, dims=dims
    )


def test_build_spectrum_hand_case_l4():
    # Wrapped 1D frequencies at L = 4 are {0, pi/2, -pi, -pi/2}; evaluate
    # P = (1 + |w|)^-1 by hand and rescale to sum to 4.
    raw = np.array(
        [1.0, 1.0 / (1 + np.pi / 2), 1.0 / (1 + np.pi), 1.0 / (1 + np.pi / 2)]
    )
    expected = raw * 4.0 / raw.sum()
    g = build_spectrum(SpectrumSpec(eta=1.0, xi=1.0, side=4, dims=1))
    np.testing.assert_allclose(g.spectrum, expected, atol=1e-12)
    assert abs(g.spectrum.sum() - 4.0) < 1e-10


def test_build_spectrum_monotone_decay():
    g = build_spectrum(SpectrumSpec(eta=3.0, xi=1.0, side=16, dims=2))
    w = np.sqrt(
        sum(
            a**2
            for a in np.meshgrid(
                *([2 * np.pi * np.fft.fftfreq(16)] * 2), indexing="ij"
            )
        )
    )
    order = np.argsort(w.ravel())
    p_sorted = g.spectrum.ravel()[order]
    assert np.all(np.diff(p_sorted) <= 1e-12)


def test_build_spectrum_rejects_bad_params():
    with pytest.raises(ConfigurationError):
        build_spectrum(SpectrumSpec(eta=-1.0, xi=1.0, side=8))
    with pytest.raises(ConfigurationError):
        build_spectrum(SpectrumSpec(eta=1.0, xi=0.0, side=8))


def test_stationary_gaussian_rejects_nonpositive_spectrum():
    with pytest.raises(DomainError):
        StationaryGaussian(spectrum=np.array([1.0, -0.5]), mean=0.0, side=2, dims=1)


def test_sample_white_noise_moments():
    rng = RNG(10)
    g = white(8)
    xs = sample(g, rng, 100_000)
    se = 1.0 / np.sqrt(xs.shape[0])
    assert np.abs(xs.mean(axis=0)).max() < 3 * se
    assert np.abs(xs.var(axis=0) - 1.0).max() < 3 * np.sqrt(2) * se


def test_sample_lag0_variance_equals_mean_spectrum():
    rng = RNG(11)
    g = build_spectrum(SpectrumSpec(eta=1.0, xi=0.5, side=16, dims=1))
    xs = sample(g, rng, 60_000)
    target = g.spectrum.mean()
    per_site = xs.var(axis=0)
    se = target * np.sqrt(2.0 / xs.shape[0])
    assert np.abs(per_site - target).max() < 4 * se


def test_sample_nonzero_mean():
    rng = RNG(12)
    g = StationaryGaussian(
        spectrum=np.ones((8, 8)), mean=2.5, side=8, dims=2
    )
    xs = sample(g, rng, 20_000)
    se = 1.0 / np.sqrt(xs.shape[0])
    assert np.abs(xs.mean(axis=0) - 2.5).max() < 4 * se


def test_sample_covariance_matches_dense_oracle():
    # Independent route: the dense covariance assembled from the spectrum
    # must match the empirical covariance of the FFT-filtered samples.
    rng = RNG(13)
    g = build_spectrum(SpectrumSpec(eta=1.5, xi=1.0, side=6, dims=1))
    xs = sample(g, rng, 120_000)
    emp = np.cov(xs.T, bias=True)
    ref = dense_covariance(g)
    se = np.sqrt((np.outer(np.diag(ref), np.diag(ref)) + ref**2) / xs.shape[0])
    assert np.all(np.abs(emp - ref) < 4 * se + 1e-12)


def test_condition_number_cases():
    assert condition_number(white(4)) == 1.0
    g = StationaryGaussian(
        spectrum=np.array([2.0, 0.5]), mean=0.0, side=2, dims=1
    )
    assert condition_number(g) == 4.0


def test_condition_number_grows_linearly_with_side():
    kappas = []
    for side in (16, 32, 64, 128, 256):
        g = build_spectrum(
            SpectrumSpec(eta=1.0, xi=2 * np.pi / side, side=side, dims=1)
        )
        kappas.append(condition_number(g))
    ratios = np.array(kappas[1:]) / np.array(kappas[:-1])
    assert np.all(ratios > 1.6) and np.all(ratios < 2.4)


def test_score_identity_covariance_is_negative_state():
    rng = RNG(14)
    g = white(8, dims=2)
    x = rng.standard_normal((8, 8))
    for t in (0.0, 0.3, 2.0):
        np.testing.assert_allclose(score_exact(g, t, x), -x, atol=1e-12)


def test_score_large_time_limit():
    rng = RNG(15)
    g = build_spectrum(SpectrumSpec(eta=1.0, xi=1.0, side=8, dims=1))
    x = rng.standard_normal(8)
    np.testing.assert_allclose(score_exact(g, 40.0, x), -x, atol=1e-10)


def test_score_matches_finite_difference_oracle():
    # log p_t is an exact quadratic, so central differences of the dense
    # log-density are exact up to rounding.
    rng = RNG(16)
    g = build_spectrum(SpectrumSpec(eta=1.2, xi=0.7, side=8, dims=1))
    sigma = dense_covariance(g)
    for t in (0.0, 0.3, 1.7):
        decay = np.exp(-2 * t)
        sigma_t = decay * sigma + (1 - decay) * np.eye(8)

        def log_density(v):
            return -0.5 * v @ np.linalg.solve(sigma_t, v)

        for _ in range(7):
            x = rng.standard_normal(8)
            s = score_exact(g, t, x)
            h = 1e-5
            fd = np.zeros(8)
            for i in range(8):
                e = np.zeros(8)
                e[i] = h
                fd[i] = (log_density(x + e) - log_density(x - e)) / (2 * h)
            assert np.abs(s - fd).max() < 1e-6 * max(1.0, np.abs(s).max())


def test_score_rejects_negative_time():
    with pytest.raises(DomainError):
        score_exact(white(4), -0.1, np.zeros(4))


def test_conditional_gaussian_white_is_independent():
    f = make_filters("haar")
    a_mat, gamma = conditional_gaussian(white(8), f, gamma1=1.0)
    np.testing.assert_allclose(a_mat, 0.0, atol=1e-10)
    np.testing.assert_allclose(gamma, np.eye(4), atol=1e-10)


def brute_force_conditional(g, filters, gamma1):
    """Schur-complement oracle from the permuted full covariance."""
    sigma = dense_covariance(g)
    gmat, gbar = operator_matrices(filters, g.side, g.dims)
    w = np.vstack([gbar, gmat]) / gamma1
    joint = w @ sigma @ w.T
    nb = gbar.shape[0]
    vbar, cov, vlow = joint[:nb, :nb], joint[:nb, nb:], joint[nb:, nb:]
    a_mat = cov @ np.linalg.inv(vlow)
    return a_mat, vbar - a_mat @ cov.T


def test_conditional_gaussian_matches_schur_oracle():
    f = make_filters("haar")
    p = np.array([3.0, 1.0, 0.4, 1.0])  # symmetric under omega -> -omega
    g = StationaryGaussian(spectrum=p, mean=0.0, side=4, dims=1)
    a_mat, gamma = conditional_gaussian(g, f, gamma1=1.3)
    a_ref, gamma_ref = brute_force_conditional(g, f, 1.3)
    np.testing.assert_allclose(a_mat, a_ref, atol=1e-10)
    np.testing.assert_allclose(gamma, gamma_ref, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([8, 16]))
def test_conditional_gaussian_schur_property(seed, side):
    rng = RNG(seed)
    p = np.exp(rng.uniform(-1.5, 1.5, side))
    p = 0.5 * (p + np.roll(p[::-1], 1))  # enforce P(-w) = P(w)
    g = StationaryGaussian(spectrum=p, mean=0.0, side=side, dims=1)
    f = make_filters("daubechies", 2)
    a_mat, gamma = conditional_gaussian(g, f, gamma1=1.0)
    a_ref, gamma_ref = brute_force_conditional(g, f, 1.0)
    np.testing.assert_allclose(a_mat, a_ref, atol=1e-8)
    np.testing.assert_allclose(gamma, gamma_ref, atol=1e-8)
    # conditioning can only reduce total variance
    var_detail, _, _ = wavelet_scale_blocks(g, f, 1.0)
    assert np.trace(gamma) <= np.trace(var_detail) + 1e-10


def test_conditional_gaussian_joint_rebuild():
    g = build_spectrum(SpectrumSpec(eta=1.0, xi=0.8, side=8, dims=2))
    f = make_filters("haar")
    gamma1 = analytic_normalizer(g, f)
    a_mat, gamma = conditional_gaussian(g, f, gamma1)
    var_detail, var_low, cov = wavelet_scale_blocks(g, f, gamma1)
    np.testing.assert_allclose(a_mat @ var_low, cov, atol=1e-8)
    np.testing.assert_allclose(
        gamma + a_mat @ var_low @ a_mat.T, var_detail, atol=1e-8
    )
    eigs = np.linalg.eigvalsh(gamma)
    assert eigs.min() > -1e-10


def test_wavelet_covariance_white_is_identity():
    f = make_filters("daubechies", 4)
    cov = wavelet_covariance(white(32), f, levels=3)
    np.testing.assert_allclose(cov, np.eye(32), atol=1e-10)


def test_wavelet_covariance_unit_diagonal_and_psd():
    g = build_spectrum(SpectrumSpec(eta=1.0, xi=0.4, side=32, dims=1))
    f = make_filters("daubechies", 4)
    cov = wavelet_covariance(g, f, levels=3)
    np.testing.assert_allclose(np.diag(cov), 1.0, atol=1e-8)
    np.testing.assert_allclose(cov, cov.T, atol=1e-12)
    assert np.linalg.eigvalsh(cov).min() > -1e-10


def test_wavelet_covariance_whitens_multiscale_spectrum():
    # Pixel-domain condition number grows with side; the normalized
    # multiscale coefficients stay uniformly conditioned.
    f = make_filters("daubechies", 4)
    pixel, multi = [], []
    for side in (16, 64):
        g = build_spectrum(
            SpectrumSpec(eta=1.0, xi=2 * np.pi / side, side=side, dims=1)
        )
        pixel.append(condition_number(g))
        cov = wavelet_covariance(g, f, levels=int(np.log2(side)) - 2)
        eigs = np.linalg.eigvalsh(cov)
        multi.append(eigs.max() / eigs.min())
    assert pixel[1] / pixel[0] > 3.0
    assert multi[1] / multi[0] < 2.0


def test_dense_paths_respect_size_cap():
    g = white(128, dims=2)
    with pytest.raises(ResourceLimitError):
        dense_covariance(g)


def test_analytic_normalizer_matches_empirical():
    rng = RNG(17)
    g = build_spectrum(SpectrumSpec(eta=1.0, xi=0.5, side=32, dims=1))
    f = make_filters("daubechies", 2)
    exact = analytic_normalizer(g, f)
    from wsgm.wavelet import estimate_normalizers

    xs = sample(g, rng, 4000)
    est = estimate_normalizers(xs, 1, f, dims=1)
    assert abs(est.gamma[0] / exact - 1.0) < 0.05
