"""Samplers and log-densities on spheres, the Stiefel manifold and the positive reals.

Sphere densities are taken with respect to the normalized uniform measure,
so the uniform distribution has log-density 0.
"""
import math

import numpy as np
from numba import njit
from scipy import special

from .special import log_lower_gamma, log_vmf_normalizer


def _check_unit(x, name):
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if abs(np.linalg.norm(x) - 1.0) > 1e-8:
        raise ValueError(f"{name} must have unit norm")
    return x


def stiefel_log_volume(D, K):
    """log of the volume of the Stiefel manifold of D x K orthonormal frames."""
    if D < 1 or K < 0 or K > D:
        raise ValueError(f"need 0 <= K <= D and D >= 1, got D={D}, K={K}")
    i = np.arange(1, K + 1)
    return float(K * math.log(2.0) + 0.5 * D * K * math.log(math.pi)
                 - 0.25 * K * (K - 1) * math.log(math.pi)
                 - np.sum(special.gammaln(0.5 * (D - i + 1))))


def sample_uniform_stiefel(D, K, rng):
    """Haar-uniform D x K orthonormal matrix (QR of a Gaussian, diag(R) > 0)."""
    if D < 1 or K < 0 or K > D:
        raise ValueError(f"need 0 <= K <= D, got D={D}, K={K}")
    if K == 0:
        return np.zeros((D, 0))
    Q, R = np.linalg.qr(rng.standard_normal((D, K)))
    s = np.sign(np.diag(R))
    s[s == 0] = 1.0
    return Q * s


@njit(cache=True)
def wood_cosine(p, kappa, rng):
    """Draw t = mu'x for x ~ vMF(mu, kappa) on S^{p-1}, p >= 2 (Wood 1994)."""
    if kappa == 0.0:
        # t is distributed as 2 Beta((p-1)/2, (p-1)/2) - 1 under the uniform law
        return 2.0 * rng.beta(0.5 * (p - 1), 0.5 * (p - 1)) - 1.0
    pm1 = p - 1.0
    b = pm1 / (2.0 * kappa + math.sqrt(4.0 * kappa * kappa + pm1 * pm1))
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + pm1 * math.log(1.0 - x0 * x0)
    while True:
        z = rng.beta(0.5 * pm1, 0.5 * pm1)
        denom = 1.0 - (1.0 - b) * z
        w = (1.0 - (1.0 + b) * z) / denom
        if kappa * w + pm1 * math.log(1.0 - x0 * w) - c >= math.log(rng.random()):
            return w


@njit(cache=True)
def _vmf_draw(mu, kappa, rng):
    p = mu.shape[0]
    if p == 1:
        # two-point sphere: P(x = mu) = e^k / (e^k + e^-k)
        if rng.random() < 1.0 / (1.0 + math.exp(-2.0 * kappa)):
            return mu.copy()
        return -mu
    t = wood_cosine(p, kappa, rng)
    g = rng.standard_normal(p)
    g -= mu * np.dot(mu, g)
    g /= np.linalg.norm(g)
    return t * mu + math.sqrt(max(0.0, 1.0 - t * t)) * g


def sample_vmf_sphere(mu, kappa, rng):
    """Exact draw from the von Mises-Fisher law with mean direction mu."""
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    mu = _check_unit(mu, "mu")
    return _vmf_draw(np.ascontiguousarray(mu), float(kappa), rng)


def vmf_log_density(x, mu, kappa):
    """Normalized vMF log-density w.r.t. the uniform probability measure on the sphere."""
    x = _check_unit(x, "x")
    mu = _check_unit(mu, "mu")
    if x.shape != mu.shape:
        raise ValueError("x and mu must have the same dimension")
    if kappa < 0:
        raise ValueError("kappa must be nonnegative")
    return float(kappa * (mu @ x) - log_vmf_normalizer(x.size, float(kappa)))


def _acg_root(lam):
    # solve sum 1/(b + 2 lam_i) = 1 for b in (0, q]; the function is decreasing in b
    q = lam.size
    f = lambda b: np.sum(1.0 / (b + 2.0 * lam)) - 1.0
    if f(q) >= 0:
        return float(q)
    lo, hi = 1e-12, float(q)
    if f(lo) <= 0:
        return lo
    from scipy.optimize import brentq
    return brentq(f, lo, hi, xtol=1e-12)


def _bingham_gibbs(lam, rng, sweeps=50):
    # exact pairwise-rotation Gibbs on the diagonal Bingham exp(sum lam_i x_i^2), used
    # when the ACG envelope is hopeless; every pair update leaves the law invariant
    q = lam.size
    x = rng.standard_normal(q)
    x /= np.linalg.norm(x)
    for _ in range(sweeps):
        for i in range(q):
            for j in range(i + 1, q):
                r = math.hypot(x[i], x[j])
                if r == 0.0:
                    continue
                # (x_i, x_j) = r (cos th, sin th); density ∝ exp(r^2 (li-lj)/2 cos 2th)
                phi = rng.vonmises(0.0, r * r * abs(lam[i] - lam[j]) / 2.0)
                th = phi / 2.0 + (math.pi if rng.random() < 0.5 else 0.0)
                if lam[i] < lam[j]:
                    th += math.pi / 2.0
                x[i], x[j] = r * math.cos(th), r * math.sin(th)
    return x


def sample_bingham_sphere(Lambda, rng, max_tries=100000):
    """Exact draw from the Bingham density ∝ exp(x' Lambda x) on the unit sphere.

    Rejection from an angular central Gaussian envelope (Kent, Ganeiber & Mardia
    2018); falls back to a pairwise Gibbs chain if acceptance drops below 1e-3.
    """
    Lambda = np.asarray(Lambda, dtype=float)
    if Lambda.ndim != 2 or Lambda.shape[0] != Lambda.shape[1]:
        raise ValueError("Lambda must be square")
    if not np.allclose(Lambda, Lambda.T, rtol=1e-10, atol=1e-12 * (1 + np.abs(Lambda).max(initial=0))):
        raise ValueError("Lambda must be symmetric")
    q = Lambda.shape[0]
    if q == 1:
        return np.array([1.0 if rng.random() < 0.5 else -1.0])
    w, V = np.linalg.eigh(0.5 * (Lambda + Lambda.T))
    # exp(x' Lambda x) ∝ exp(-x' A x) with A = w_max I - Lambda >= 0
    lam = w[-1] - w
    if np.all(lam <= 1e-14 * max(1.0, abs(w[-1]))):
        y = rng.standard_normal(q)
        return V @ (y / np.linalg.norm(y))
    b = _acg_root(lam)
    omega = 1.0 + 2.0 * lam / b
    sd = 1.0 / np.sqrt(omega)
    log_m = -0.5 * (q - b) + 0.5 * q * math.log(q / b)
    for tries in range(1, max_tries + 1):
        y = sd * rng.standard_normal(q)
        y /= np.linalg.norm(y)
        log_ratio = -np.sum(lam * y * y) + 0.5 * q * math.log(np.sum(omega * y * y)) - log_m
        if math.log(rng.random()) < log_ratio:
            return V @ y
        if tries >= 3000:
            # nothing accepted in 3000 proposals: acceptance is below 1e-3
            break
    return V @ _bingham_gibbs(w - w[-1], rng)


def _check_sig(a, b):
    if not (a > 0 and b > 0):
        raise ValueError(f"sIG parameters must be positive, got a={a}, b={b}")


def sig_log_density(x, a, b):
    """log density b^a/γ(a,b) (1+x)^{-(a+1)} exp(-b/(1+x)) of the shifted inverse gamma."""
    _check_sig(a, b)
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise ValueError("sIG support is x > 0")
    out = a * np.log(b) - log_lower_gamma(a, b) - (a + 1.0) * np.log1p(x) - b / (1.0 + x)
    return float(out) if out.ndim == 0 else out


def sig_mean(a, b):
    """E[X] = b γ(a-1,b)/γ(a,b) - 1, finite for a > 1."""
    _check_sig(a, b)
    if a <= 1:
        return np.inf
    return float(b * math.exp(log_lower_gamma(a - 1.0, b) - log_lower_gamma(a, b)) - 1.0)


def sig_var(a, b):
    """Var[X] = b^2 (γ(a-2,b)/γ(a,b) - (γ(a-1,b)/γ(a,b))^2), finite for a > 2."""
    _check_sig(a, b)
    if a <= 2:
        return np.inf
    g = log_lower_gamma(a, b)
    r1 = math.exp(log_lower_gamma(a - 1.0, b) - g)
    r2 = math.exp(log_lower_gamma(a - 2.0, b) - g)
    return float(b * b * (r2 - r1 * r1))


def sample_sig(a, b, rng, size=None):
    """Draw from sIG(a, b): with w = 1/(1+x), w ~ Gamma(a, rate b) truncated to (0, 1)."""
    _check_sig(a, b)
    n = 1 if size is None else int(np.prod(size))
    w = _truncated_gamma_unit(a, b, n, rng)
    x = np.maximum((1.0 - w) / w, np.finfo(float).tiny)
    return float(x[0]) if size is None else x.reshape(size)


def _truncated_gamma_unit(a, b, n, rng):
    mass = special.gammainc(a, b)  # P(Gamma(a, rate b) < 1)
    out = np.empty(n)
    if mass >= 0.2:
        filled = 0
        while filled < n:
            g = rng.gamma(a, 1.0 / b, size=max(16, int(1.5 * (n - filled) / mass)))
            g = g[g < 1.0]
            take = min(g.size, n - filled)
            out[filled:filled + take] = g[:take]
            filled += take
    elif mass > 1e-200:
        u = rng.random(n)
        out[:] = special.gammaincinv(a, u * mass) / b
    else:
        # far tail, only reachable with a > b: w^{a-1} e^{-bw} = w^{a-b-1} * w^b e^{-bw},
        # propose Beta(a-b, 1) and accept with w^b e^{-bw} / e^{-b}
        filled = 0
        while filled < n:
            w = rng.beta(a - b, 1.0, size=n - filled)
            w = w[np.log(rng.random(w.size)) < b * (np.log(w) + 1.0 - w)]
            out[filled:filled + w.size] = w
            filled += w.size
    return np.clip(out, np.finfo(float).tiny, 1.0 - 1e-16)
