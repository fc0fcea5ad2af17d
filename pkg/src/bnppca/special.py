"""Scalar special functions compiled with numba.

These are called from inside the jitted Gibbs kernels, so they cannot lean on
scipy.special. Each one is checked against scipy in the test suite.
"""
import math

import numpy as np
from numba import njit

_EPS = 1e-17
_TINY = 1e-300


@njit(cache=True)
def log_lower_gamma(a, x):
    """log of the (unregularized) lower incomplete gamma function γ(a, x).

    Series expansion below x = a + 1, Lentz continued fraction for the upper
    function above it. Relative error is ~1e-14 or better for a in (0, 1e5].
    """
    if x <= 0.0:
        return -np.inf
    if x < a + 1.0:
        ap = a
        term = 1.0 / a
        total = term
        for _ in range(1000000):
            ap += 1.0
            term *= x / ap
            total += term
            if term < total * _EPS:
                break
        return -x + a * math.log(x) + math.log(total)
    # upper function Γ(a, x) by modified Lentz
    bb = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / bb
    h = d
    for i in range(1, 1000000):
        an = -i * (i - a)
        bb += 2.0
        d = an * d + bb
        if abs(d) < _TINY:
            d = _TINY
        c = bb + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    lg = math.lgamma(a)
    log_upper = -x + a * math.log(x) + math.log(h)
    return lg + math.log1p(-math.exp(log_upper - lg))


@njit(cache=True)
def log_vmf_normalizer(p, kappa):
    """log E[exp(kappa * t)] for t the first coordinate of a uniform point on S^{p-1}.

    This is log 0F1(; p/2; kappa^2/4), i.e. the vMF normalizing constant with
    respect to the normalized uniform measure. Power series for moderate kappa,
    Hankel expansion of the Bessel function for large kappa.
    """
    if kappa <= 0.0:
        return 0.0
    nu = 0.5 * p - 1.0
    if kappa > max(25.0, nu * nu):
        return (math.lgamma(0.5 * p) + (1.0 - 0.5 * p) * math.log(0.5 * kappa)
                + _log_bessel_i_large(nu, kappa))
    z = 0.25 * kappa * kappa
    b = 0.5 * p
    # locate the largest term, then sum relative to it
    lt = 0.0
    lmax = 0.0
    k = 0
    while True:
        step = math.log(z) - math.log((b + k) * (k + 1.0))
        if step <= 0.0:
            break
        lt += step
        k += 1
    lmax = lt
    kmax = k
    if kmax == 0:
        tail = 0.0
        term = 1.0
        for j in range(100000):
            term *= z / ((b + j) * (j + 1.0))
            tail += term
            if term < tail * _EPS:
                break
        return math.log1p(tail)
    total = 1.0
    # walk down from the peak
    term = 1.0
    for j in range(kmax, 0, -1):
        term *= (b + j - 1.0) * j / z
        total += term
        if term < total * _EPS:
            break
    term = 1.0
    j = kmax
    while True:
        term *= z / ((b + j) * (j + 1.0))
        total += term
        j += 1
        if term < total * _EPS:
            break
    return lmax + math.log(total)


@njit(cache=True)
def _log_bessel_i_large(nu, x):
    # asymptotic series exp(x)/sqrt(2 pi x) * sum (-1)^k a_k(nu) / x^k,
    # stopped at the smallest term (terminates for half-integer nu)
    mu = 4.0 * nu * nu
    total = 1.0
    term = 1.0
    prev = 1e300
    for k in range(1, 500):
        term *= -(mu - (2.0 * k - 1.0) ** 2) / (8.0 * k * x)
        if term == 0.0:
            break
        at = abs(term)
        if at > prev:
            break
        total += term
        prev = at
        if at < abs(total) * _EPS:
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def harmonic_number(n):
    """H_n = sum_{i=1}^n 1/i."""
    return float(np.sum(1.0 / np.arange(1, n + 1))) if n > 0 else 0.0
