"""Bernoulli-Gaussian denoiser closed forms vs integration and Monte Carlo."""

import numpy as np
import pytest
from scipy import integrate

from ssmamp.denoiser import (
    BernoulliGaussianPrior,
    DIVERGENCE_CEILING,
    nle_cross_covariance,
    nle_output_variance,
    orthogonal_nle,
    posterior_mean_product,
)
from ssmamp.errors import DegenerateDivergence, NonpositiveVariance


def _posterior_moments_oracle(r, v, mu):
    """E{x | r} and E{|x|^2 | r} by direct 2-D integration over the slab.

    p(r | x) = exp(-|r - x|^2 / v) / (pi v); the spike contributes a point
    mass at 0.  Integration in real/imag parts of x.
    """
    s = 1.0 / mu
    lim = 6.0 * np.sqrt(s)

    def weight(xr, xi):
        x = xr + 1j * xi
        like = np.exp(-abs(r - x) ** 2 / v) / (np.pi * v)
        prior = np.exp(-abs(x) ** 2 / s) / (np.pi * s)
        return like * prior

    def integ(f):
        val, _ = integrate.dblquad(
            lambda xi, xr: f(xr, xi) * weight(xr, xi),
            -lim, lim, lambda _: -lim, lambda _: lim,
            epsabs=1e-13, epsrel=1e-11,
        )
        return val

    z_slab = integ(lambda xr, xi: 1.0)
    z_spike = (1.0 - mu) * np.exp(-abs(r) ** 2 / v) / (np.pi * v)
    z = mu * z_slab + z_spike
    mean = (
        mu * (integ(lambda xr, xi: xr) + 1j * integ(lambda xr, xi: xi)) / z
    )
    second = mu * integ(lambda xr, xi: xr**2 + xi**2) / z
    return mean, second - abs(mean) ** 2


@pytest.mark.parametrize("mu", [0.1, 0.5, 1.0])
@pytest.mark.parametrize("v", [0.05, 0.5, 2.0])
@pytest.mark.parametrize("r", [0.2 + 0.1j, 1.5, -0.8 + 2.0j])
def test_posterior_against_integration_oracle(mu, v, r):
    prior = BernoulliGaussianPrior(mu)
    mean_o, var_o = _posterior_moments_oracle(r, v, mu)
    mean = prior.posterior_mean(np.array([r]), v)[0]
    var = prior.posterior_var(np.array([r]), v)[0]
    assert abs(mean - mean_o) <= 1e-8
    assert abs(var - var_o) <= 1e-8


def test_mmse_against_monte_carlo():
    rng = np.random.default_rng(0)
    n = 10**6
    for mu, v in [(0.1, 0.3), (0.1, 0.02), (0.5, 1.0), (1.0, 0.5)]:
        prior = BernoulliGaussianPrior(mu)
        b = rng.random(n) < mu
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(
            2 * mu
        )
        x = b * g
        w = np.sqrt(v / 2) * (
            rng.standard_normal(n) + 1j * rng.standard_normal(n)
        )
        err = np.abs(prior.posterior_mean(x + w, v) - x) ** 2
        mc = float(np.mean(err))
        se = float(np.std(err) / np.sqrt(n))
        assert abs(prior.mmse(v) - mc) <= 3.0 * se


def test_mmse_gaussian_closed_form():
    prior = BernoulliGaussianPrior(1.0)
    for v in (0.01, 0.3, 5.0):
        assert prior.mmse(v) == pytest.approx(v / (1.0 + v), rel=1e-12)


def test_mmse_bounds_and_monotonicity():
    prior = BernoulliGaussianPrior(0.1)
    vs = np.logspace(-4, 2, 25)
    ms = np.array([prior.mmse(v) for v in vs])
    assert np.all(ms > 0.0)
    assert np.all(ms < np.minimum(vs, 1.0) + 1e-12)
    assert np.all(np.diff(ms) > 0.0)


def test_orthogonal_nle_is_divergence_free():
    """Empirical error of the orthogonalized output decorrelates from the
    observation noise; the plain posterior mean does not."""
    rng = np.random.default_rng(1)
    n = 200000
    mu, v = 0.1, 0.3
    prior = BernoulliGaussianPrior(mu)
    b = rng.random(n) < mu
    g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2 * mu)
    x = b * g
    w = np.sqrt(v / 2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    out = orthogonal_nle(x + w, v, prior)
    corr_orth = np.vdot(out.x_next - x, w) / n
    corr_post = np.vdot(prior.posterior_mean(x + w, v) - x, w) / n
    assert abs(corr_orth) <= 5.0 / np.sqrt(n) * v
    assert abs(corr_post) > 10.0 * abs(corr_orth)
    # error variance matches the harmonic prediction
    emp = float(np.mean(np.abs(out.x_next - x) ** 2))
    assert emp == pytest.approx(out.v_next, rel=0.05)


def test_nle_output_variance_harmonic_identity():
    prior = BernoulliGaussianPrior(0.2)
    v = 0.4
    m = prior.mmse(v)
    assert nle_output_variance(v, prior) == pytest.approx(
        1.0 / (1.0 / m - 1.0 / v), rel=1e-12
    )


def test_degenerate_divergence_raises():
    prior = BernoulliGaussianPrior(1.0)
    # for the Gaussian prior mmse/v = 1/(1+v) -> 1 as v -> 0
    with pytest.raises(DegenerateDivergence):
        nle_output_variance(1e-14, prior)


def test_nonpositive_variance_raises():
    prior = BernoulliGaussianPrior(0.1)
    with pytest.raises(NonpositiveVariance):
        prior.posterior_mean(np.array([1.0]), 0.0)


def test_posterior_mean_product_against_monte_carlo():
    rng = np.random.default_rng(2)
    n = 400000
    mu = 0.1
    prior = BernoulliGaussianPrior(mu)
    for v1, v2, rho in [(0.3, 0.2, 0.5), (0.5, 0.5, 0.99), (1.0, 0.05, 0.0)]:
        c = rho * np.sqrt(v1 * v2)
        b = rng.random(n) < mu
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(
            2 * mu
        )
        x = b * g
        e1 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        e2 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        w1 = np.sqrt(v1) * e1
        w2 = c / np.sqrt(v1) * e1 + np.sqrt(max(v2 - c**2 / v1, 0.0)) * e2
        p1 = prior.posterior_mean(x + w1, v1)
        p2 = prior.posterior_mean(x + w2, v2)
        prod = p1 * np.conj(p2)
        mc = float(np.mean(np.real(prod)))
        se = float(np.std(np.real(prod)) / np.sqrt(n))
        q = posterior_mean_product(v1, v2, c, prior)
        assert abs(q - mc) <= 4.0 * se


def test_nle_cross_covariance_against_monte_carlo():
    rng = np.random.default_rng(3)
    n = 400000
    mu = 0.1
    prior = BernoulliGaussianPrior(mu)
    for v1, v2, rho in [(0.3, 0.2, 0.5), (0.4, 0.4, 1.0)]:
        c = rho * np.sqrt(v1 * v2)
        b = rng.random(n) < mu
        g = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(
            2 * mu
        )
        x = b * g
        e1 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        e2 = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2)
        w1 = np.sqrt(v1) * e1
        w2 = c / np.sqrt(v1) * e1 + np.sqrt(max(v2 - c**2 / v1, 0.0)) * e2
        f1 = orthogonal_nle(x + w1, v1, prior).x_next - x
        f2 = orthogonal_nle(x + w2, v2, prior).x_next - x
        prod = np.real(f1 * np.conj(f2))
        mc = float(np.mean(prod))
        se = float(np.std(prod) / np.sqrt(n))
        pred = nle_cross_covariance(v1, v2, c, prior)
        assert abs(pred - mc) <= 4.0 * se


def test_nle_cross_covariance_diagonal_consistency():
    """At c = v the pair collapses to one observation, so the cross
    covariance must equal the scalar output variance."""
    prior = BernoulliGaussianPrior(0.1)
    for v in (0.05, 0.3, 1.0):
        diag = nle_cross_covariance(v, v, v, prior)
        assert diag == pytest.approx(nle_output_variance(v, prior), rel=1e-6)


def test_nle_cross_covariance_clamps_correlation():
    prior = BernoulliGaussianPrior(0.1)
    v = 0.3
    # upstream roundoff can hand in c slightly above sqrt(v1 v2)
    val = nle_cross_covariance(v, v, v * (1.0 + 1e-12), prior)
    assert val == pytest.approx(nle_output_variance(v, prior), rel=1e-6)


def test_divergence_ceiling_constant():
    assert 0.0 < 1.0 - DIVERGENCE_CEILING < 1e-10
