import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, special, stats

from bnppca.directional import (
    _bingham_gibbs, sample_bingham_sphere, sample_sig, sample_uniform_stiefel, sample_vmf_sphere,
    sig_log_density, sig_mean, sig_var, stiefel_log_volume, vmf_log_density)
from bnppca.special import log_lower_gamma

from conftest import mc_se


# Stiefel volume and uniform draws

def test_stiefel_volume_small_cases():
    assert stiefel_log_volume(1, 1) == pytest.approx(math.log(2.0), abs=1e-14)
    assert stiefel_log_volume(2, 1) == pytest.approx(math.log(2 * math.pi), abs=1e-14)
    assert stiefel_log_volume(3, 1) == pytest.approx(math.log(4 * math.pi), abs=1e-14)
    assert stiefel_log_volume(5, 0) == 0.0


@pytest.mark.parametrize("D", range(1, 11))
def test_stiefel_volume_single_column_is_sphere_area(D):
    area = math.log(2.0) + 0.5 * D * math.log(math.pi) - special.gammaln(D / 2)
    assert abs(stiefel_log_volume(D, 1) - area) < 1e-12


def test_stiefel_volume_orthogonal_group_recursion():
    # vol V_K(R^D) = vol V_{K-1}(R^D) * area(S^{D-K})
    for D in (3, 6):
        for K in range(1, D + 1):
            step = stiefel_log_volume(D - K + 1, 1)
            assert stiefel_log_volume(D, K) == pytest.approx(stiefel_log_volume(D, K - 1) + step, abs=1e-12)


@pytest.mark.parametrize("D,K", [(0, 0), (3, 4), (2, -1)])
def test_stiefel_domain_errors(D, K, rng):
    with pytest.raises(ValueError):
        stiefel_log_volume(D, K)
    with pytest.raises(ValueError):
        sample_uniform_stiefel(D, K, rng)


def test_uniform_stiefel_1x1_is_fair_sign(rng):
    x = np.array([sample_uniform_stiefel(1, 1, rng)[0, 0] for _ in range(20000)])
    assert set(np.unique(x)) == {-1.0, 1.0}
    p = np.mean(x > 0)
    assert abs(p - 0.5) < 4 * math.sqrt(0.25 / x.size)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.data())
def test_uniform_stiefel_is_orthonormal(D, data):
    K = data.draw(st.integers(0, D))
    P = sample_uniform_stiefel(D, K, np.random.default_rng(data.draw(st.integers(0, 2**32 - 1))))
    assert P.shape == (D, K)
    assert np.linalg.norm(P.T @ P - np.eye(K)) < 1e-10


def test_uniform_stiefel_mean_is_zero(rng):
    X = np.array([sample_uniform_stiefel(3, 1, rng)[:, 0] for _ in range(100000)])
    m = X.mean(axis=0)
    se = X.std(axis=0, ddof=1) / math.sqrt(X.shape[0])
    assert np.all(np.abs(m) < 4 * se)


def test_uniform_stiefel_rotation_invariance(rng):
    R = sample_uniform_stiefel(4, 4, np.random.default_rng(5))
    a = np.array([sample_uniform_stiefel(4, 2, rng) for _ in range(4000)])
    b = np.array([R @ sample_uniform_stiefel(4, 2, rng) for _ in range(4000)])
    c = np.array([0.3, -1.0, 0.5, 2.0])
    fs = (lambda P: P[:, 0] @ c, lambda P: P[:, 1] @ c, lambda P: P[0, 0] * P[1, 1])
    # family-wise level 0.01 over the three functionals
    for f in fs:
        assert stats.ks_2samp([f(P) for P in a], [f(P) for P in b]).pvalue > 0.01 / len(fs)


# von Mises-Fisher

def test_vmf_zero_concentration_is_uniform(rng):
    mu = np.array([0.0, 0.0, 1.0])
    X = np.array([sample_vmf_sphere(mu, 0.0, rng) for _ in range(50000)])
    assert np.linalg.norm(X.mean(axis=0)) < 0.02
    # cosine with mu is uniform on [-1, 1] on the 2-sphere
    assert stats.kstest(X[:, 2], "uniform", args=(-1, 2)).pvalue > 0.01


def _cosine_mean_by_quadrature(p, kappa):
    f = lambda t, k: t ** k * math.exp(kappa * (t - 1)) * (1 - t * t) ** ((p - 3) / 2)
    num = integrate.quad(f, -1, 1, args=(1,), epsabs=1e-13)[0]
    den = integrate.quad(f, -1, 1, args=(0,), epsabs=1e-13)[0]
    return num / den


def test_vmf_mean_resultant_kappa10(rng):
    mu = np.array([1.0, 0.0, 0.0])
    t = np.array([sample_vmf_sphere(mu, 10.0, rng) @ mu for _ in range(100000)])
    ref = _cosine_mean_by_quadrature(3, 10.0)
    # Bessel-ratio closed form agrees with the quadrature
    assert ref == pytest.approx(special.iv(1.5, 10) / special.iv(0.5, 10), rel=1e-10)
    assert abs(t.mean() - ref) < 3 * mc_se(t)


@pytest.mark.parametrize("p,kappa", [(2, 1.5), (5, 4.0), (16, 30.0), (36, 0.7)])
def test_vmf_cosine_law(p, kappa, rng):
    mu = np.zeros(p)
    mu[-1] = 1.0
    t = np.array([sample_vmf_sphere(mu, kappa, rng) @ mu for _ in range(20000)])
    assert abs(t.mean() - _cosine_mean_by_quadrature(p, kappa)) < 4 * mc_se(t)


def test_vmf_two_point_sphere(rng):
    kappa = 0.8
    x = np.array([sample_vmf_sphere(np.array([1.0]), kappa, rng)[0] for _ in range(40000)])
    p = math.exp(kappa) / (math.exp(kappa) + math.exp(-kappa))
    assert abs(np.mean(x == 1.0) - p) < 4 * math.sqrt(p * (1 - p) / x.size)


def test_vmf_errors(rng):
    with pytest.raises(ValueError):
        sample_vmf_sphere(np.array([1.0, 0.0]), -1.0, rng)
    with pytest.raises(ValueError):
        vmf_log_density(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 1.0)


def test_vmf_density_zero_concentration():
    x = np.array([0.6, 0.8, 0.0])
    assert vmf_log_density(x, np.array([0.0, 0.0, 1.0]), 0.0) == 0.0


@pytest.mark.parametrize("p,kappa", [(4, 3.0), (2, 0.5), (9, 25.0)])
def test_vmf_density_integrates_to_one(p, kappa):
    # t = mu'x has density c (1-t^2)^{(p-3)/2} under the uniform measure
    c = math.exp(special.gammaln(p / 2) - special.gammaln((p - 1) / 2)) / math.sqrt(math.pi)
    mu = np.eye(p)[0]

    def f(t):
        x = np.zeros(p)
        x[0], x[1] = t, math.sqrt(max(0.0, 1 - t * t))
        return math.exp(vmf_log_density(x, mu, kappa)) * c * (1 - t * t) ** ((p - 3) / 2)
    total = integrate.quad(f, -1, 1, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    assert abs(total - 1.0) < 1e-8


def test_vmf_density_symmetric(rng):
    x = sample_uniform_stiefel(5, 1, rng)[:, 0]
    y = sample_uniform_stiefel(5, 1, rng)[:, 0]
    assert vmf_log_density(x, y, 2.3) == pytest.approx(vmf_log_density(y, x, 2.3), rel=1e-14)


# Bingham

def test_bingham_zero_is_uniform(rng):
    X = np.array([sample_bingham_sphere(np.zeros((3, 3)), rng) for _ in range(30000)])
    C = X.T @ X / X.shape[0]
    assert np.abs(C - np.eye(3) / 3).max() < 0.015


def _bingham_2d_moment(l1, l2):
    f = lambda th, k: math.cos(th) ** (2 * k) * math.exp(l1 * math.cos(th) ** 2 + l2 * math.sin(th) ** 2)
    return (integrate.quad(f, 0, 2 * math.pi, args=(1,))[0]
            / integrate.quad(f, 0, 2 * math.pi, args=(0,))[0])


def test_bingham_diag20_first_moment(rng):
    x1sq = np.array([sample_bingham_sphere(np.diag([20.0, 0.0]), rng)[0] ** 2 for _ in range(50000)])
    assert abs(x1sq.mean() - _bingham_2d_moment(20.0, 0.0)) < 3 * mc_se(x1sq)


def test_bingham_isotropic_shift_is_uniform(rng):
    X = np.array([sample_bingham_sphere(7.5 * np.eye(4), rng) for _ in range(20000)])
    assert np.abs(X.T @ X / X.shape[0] - np.eye(4) / 4).max() < 0.015


def test_bingham_shift_invariance(rng):
    L = np.array([[3.0, 1.0, 0.0], [1.0, -2.0, 0.5], [0.0, 0.5, 0.0]])
    A = np.diag([1.0, 2.0, -1.0])
    a = [x @ A @ x for x in (sample_bingham_sphere(L, rng) for _ in range(8000))]
    b = [x @ A @ x for x in (sample_bingham_sphere(L + 4.0 * np.eye(3), rng) for _ in range(8000))]
    assert stats.ks_2samp(a, b).pvalue > 0.01


def _bingham_second_moments_by_weighting(L, rng, n=400000):
    # importance weights exp(x'Lx) against uniform draws: an oracle independent of the sampler
    X = rng.standard_normal((n, L.shape[0]))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    lw = np.einsum("ij,jk,ik->i", X, L, X)
    w = np.exp(lw - lw.max())
    return (X * w[:, None]).T @ X / w.sum()


@pytest.mark.parametrize("q", [3, 6])
def test_bingham_second_moments_higher_dim(q, rng):
    B = np.random.default_rng(q).standard_normal((q, q))
    L = 1.5 * (B + B.T)
    X = np.array([sample_bingham_sphere(L, rng) for _ in range(30000)])
    ref = _bingham_second_moments_by_weighting(L, np.random.default_rng(7))
    emp = X.T @ X / X.shape[0]
    # per-entry standard errors of the outer-product means
    se = np.sqrt(np.var(np.einsum("ni,nj->nij", X, X), axis=0) / X.shape[0])
    assert np.all(np.abs(emp - ref) < 4 * se + 3e-3)


def test_bingham_gibbs_fallback_moments(rng):
    lam = np.array([-12.0, -3.0, 0.0])
    X = np.array([_bingham_gibbs(lam, rng) for _ in range(6000)])
    ref = _bingham_second_moments_by_weighting(np.diag(lam), np.random.default_rng(3))
    emp = X.T @ X / X.shape[0]
    se = np.sqrt(np.var(X * X, axis=0) / X.shape[0])
    assert np.all(np.abs(np.diag(emp) - np.diag(ref)) < 4 * se + 2e-3)


def test_bingham_errors(rng):
    with pytest.raises(ValueError):
        sample_bingham_sphere(np.array([[0.0, 1.0], [0.0, 0.0]]), rng)
    with pytest.raises(ValueError):
        sample_bingham_sphere(np.zeros((2, 3)), rng)


def test_bingham_output_is_unit(rng):
    L = np.diag([300.0, 0.0, -50.0, 2.0])
    for _ in range(200):
        assert abs(np.linalg.norm(sample_bingham_sphere(L, rng)) - 1) < 1e-12


# shifted inverse gamma

def sig_cdf(x, a, b):
    # P(X <= x) = P(W >= 1/(1+x)) with W ~ Gamma(a, rate b) truncated to (0, 1)
    x = np.asarray(x, dtype=float)
    return 1.0 - np.exp([log_lower_gamma(a, b / (1.0 + v)) - log_lower_gamma(a, b) for v in x])


def test_sig_mode(rng):
    x = sample_sig(1.0, 6.0, rng, size=1000000)
    # log-density is smooth; locate the peak of a fine histogram near the mode
    h, edges = np.histogram(x, bins=np.linspace(0, 6, 61))
    centre = 0.5 * (edges[1:] + edges[:-1])
    assert abs(centre[np.argmax(h)] - 2.0) < 0.3


def test_sig_mean_a2_b1(rng):
    x = sample_sig(2.0, 1.0, rng, size=1000000)
    ref = 1.0 * math.exp(log_lower_gamma(1.0, 1.0) - log_lower_gamma(2.0, 1.0)) - 1.0
    assert sig_mean(2.0, 1.0) == pytest.approx(ref, rel=1e-14)
    assert abs(x.mean() - ref) < 3 * mc_se(x)


@pytest.mark.parametrize("a,b", [(1.0, 6.0), (1.0, 0.1), (5.0, 0.5), (60.5, 3.0), (500.0, 0.5)])
def test_sig_sampler_matches_cdf(a, b, rng):
    # covers the gamma-rejection, inverse-cdf and far-tail branches
    x = sample_sig(a, b, rng, size=20000)
    assert np.all(x > 0) and np.all(np.isfinite(x))
    assert stats.kstest(x, lambda v: sig_cdf(v, a, b)).pvalue > 0.01


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, 1000.0), st.floats(1e-4, 1000.0), st.integers(0, 2**32 - 1))
def test_sig_draws_positive(a, b, seed):
    x = sample_sig(a, b, np.random.default_rng(seed), size=50)
    assert np.all(x > 0) and np.all(np.isfinite(x))


def test_sig_density_integrates_to_one():
    f = lambda x: math.exp(sig_log_density(x, 1.5, 6.0))
    total = integrate.quad(f, 0, np.inf, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
    assert abs(total - 1.0) < 1e-8


def test_sig_variance_by_quadrature():
    a, b = 3.5, 6.0
    m1 = integrate.quad(lambda x: x * math.exp(sig_log_density(x, a, b)), 0, np.inf, epsrel=1e-12)[0]
    m2 = integrate.quad(lambda x: x * x * math.exp(sig_log_density(x, a, b)), 0, np.inf, epsrel=1e-12)[0]
    assert sig_mean(a, b) == pytest.approx(m1, abs=1e-8)
    assert abs(sig_var(a, b) - (m2 - m1 * m1)) < 1e-6


def test_sig_small_b_limit_shape():
    # a = 1, b -> 0: density proportional to (1+x)^-2
    x = np.array([0.01, 0.5, 3.0, 50.0, 1000.0])
    r = np.exp(sig_log_density(x, 1.0, 1e-9)) * (1 + x) ** 2
    assert np.ptp(r) / r.mean() < 1e-6


def test_sig_moments_infinite_for_small_shape():
    assert sig_mean(1.0, 0.1) == np.inf
    assert sig_var(2.0, 0.1) == np.inf


def test_sig_domain_errors(rng):
    with pytest.raises(ValueError):
        sig_log_density(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        sample_sig(0.0, 1.0, rng)
    with pytest.raises(ValueError):
        sig_mean(1.0, -1.0)
