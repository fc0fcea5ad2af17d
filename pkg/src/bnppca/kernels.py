"""Jitted building blocks of the activation sweep.

Layout used inside the sweep: P is a D x D buffer whose first K columns are
the active directions, Zt and Tt are N x D (observation-major) holding the
activations and the projections <p_k, y_n>, m holds row counts of Z.
"""
import math

import numpy as np
from numba import njit

from .directional import wood_cosine
from .special import log_lower_gamma, log_vmf_normalizer

CONCENTRATION_MODES = {"raw": 0, "likelihood": 1, "per_observation": 2}


@njit(cache=True)
def shared_log_odds(m_minus, N, energy_minus, s, a, b, h=0.5):
    """log P(z=1)/P(z=0) for an entry whose row is used by m_minus > 0 other observations.

    energy_minus = sum over those others of <p,y>^2/(2 sigma2); s is the same
    quantity for the current observation. delta2 is integrated out. h is the
    power of 1/(1+delta2) contributed by each activation (1/2 for the Gaussian
    marginal).
    """
    A = a + h * m_minus
    B = b + energy_minus
    return (math.log(m_minus) - math.log(N - m_minus) + s
            + log_lower_gamma(A + h, B + s) - log_lower_gamma(A, B)
            + A * math.log(B) - (A + h) * math.log(B + s))


@njit(cache=True)
def singleton_evidence(s, a, b, h=0.5):
    """log evidence of a direction active for one observation only, delta2 integrated."""
    return (a * math.log(b) - log_lower_gamma(a, b) + s
            + log_lower_gamma(a + h, b + s) - (a + h) * math.log(b + s))


@njit(cache=True)
def prob_from_log_odds(lo):
    if lo >= 0.0:
        return 1.0 / (1.0 + math.exp(-lo))
    e = math.exp(lo)
    return e / (1.0 + e)


@njit(cache=True)
def concentration(lam, sigma2, N, mode):
    if mode == 0:
        return lam
    if mode == 1:
        return lam / (2.0 * sigma2)
    return lam / (2.0 * sigma2 * N)


@njit(cache=True)
def count_masses(card, D, alpha):
    """Unnormalized masses of the proposal for the number of new singletons, 0..D-card."""
    w0 = card / D
    out = np.empty(D - card + 1)
    for k in range(D - card + 1):
        out[k] = (1.0 - w0) * math.exp(-alpha + k * math.log(alpha) - math.lgamma(k + 1.0))
    out[0] += w0
    return out


@njit(cache=True)
def count_log_mass(k, card, D, alpha):
    w = count_masses(card, D, alpha)
    return math.log(w[k]) - math.log(w.sum())


@njit(cache=True)
def draw_count(card, D, alpha, rng):
    w = count_masses(card, D, alpha)
    u = rng.random() * w.sum()
    acc = 0.0
    for k in range(w.shape[0]):
        acc += w[k]
        if u < acc:
            return k
    return w.shape[0] - 1


@njit(cache=True)
def top_complement_eig(C, E, r):
    """Leading eigenpair of C restricted to the orthogonal complement of E[:, :r]."""
    D = C.shape[0]
    Pj = np.eye(D)
    if r > 0:
        Er = np.ascontiguousarray(E[:, :r])
        Pj -= Er @ Er.T
    M = Pj @ C @ Pj
    M = 0.5 * (M + M.T)
    w, V = np.linalg.eigh(M)
    lam = max(w[D - 1], 0.0)
    v = Pj @ np.ascontiguousarray(V[:, D - 1])
    nv = np.linalg.norm(v)
    if nv < 0.5:
        # C vanishes on the complement: any complement direction will do
        j = np.argmax(np.diag(Pj))
        v = Pj[:, j].copy()
        nv = np.linalg.norm(v)
        lam = 0.0
    v /= nv
    for i in range(D):
        if abs(v[i]) > 1e-12:
            if v[i] < 0.0:
                v = -v
            break
    return v, lam


@njit(cache=True)
def draw_sym_vmf(v, kappa, E, r, rng):
    """Draw from ½vMF(v, kappa) + ½vMF(-v, kappa) on the unit sphere of span(E[:, :r])⊥."""
    D = v.shape[0]
    L = D - r
    if L == 1:
        x = v.copy()
    else:
        t = wood_cosine(L, kappa, rng)
        g = rng.standard_normal(D)
        for j in range(r):
            c = 0.0
            for i in range(D):
                c += E[i, j] * g[i]
            for i in range(D):
                g[i] -= c * E[i, j]
        g -= v * np.dot(v, g)
        g /= np.linalg.norm(g)
        x = t * v + math.sqrt(max(0.0, 1.0 - t * t)) * g
    if rng.random() < 0.5:
        x = -x
    return x


@njit(cache=True)
def log_sym_vmf(x, v, kappa, L):
    c = 0.0
    for i in range(x.shape[0]):
        c += x[i] * v[i]
    kt = kappa * abs(c)
    return kt + math.log1p(math.exp(-2.0 * kt)) - math.log(2.0) - log_vmf_normalizer(L, kappa)


@njit(cache=True)
def draw_sequence(count, E, r, C, v0, lam0, sigma2, N, mode, rng, out):
    """Draw `count` directions one after the other, each in the complement of E and
    the previous draws. Writes them to out[:, :count] and E[:, r:r+count]; returns
    the log proposal density."""
    D = C.shape[0]
    total = 0.0
    for i in range(count):
        if i == 0:
            v, lam = v0, lam0
        else:
            v, lam = top_complement_eig(C, E, r + i)
        kap = concentration(lam, sigma2, N, mode)
        x = draw_sym_vmf(v, kap, E, r + i, rng)
        total += log_sym_vmf(x, v, kap, D - r - i)
        E[:, r + i] = x
        out[:, i] = x
    return total


@njit(cache=True)
def sequence_log_density(dirs, count, E, r, C, v0, lam0, sigma2, N, mode):
    """Log density of draw_sequence producing dirs[:, :count]; scribbles on E[:, r:]."""
    D = C.shape[0]
    total = 0.0
    for i in range(count):
        if i == 0:
            v, lam = v0, lam0
        else:
            v, lam = top_complement_eig(C, E, r + i)
        kap = concentration(lam, sigma2, N, mode)
        total += log_sym_vmf(dirs[:, i], v, kap, D - r - i)
        E[:, r + i] = dirs[:, i]
    return total


@njit(cache=True)
def singleton_log_ratio(s_new, s_old, card, D, N, alpha, a, b, logq_fwd, logq_rev, h=0.5):
    """log MH ratio for replacing the singletons with energies s_old by ones with s_new."""
    kstar = s_new.shape[0]
    kappa = s_old.shape[0]
    out = 0.0
    for i in range(kstar):
        out += singleton_evidence(s_new[i], a, b, h)
    for i in range(kappa):
        out -= singleton_evidence(s_old[i], a, b, h)
    # Poisson(alpha/N) law of the number of singletons; exp(-alpha/N) cancels
    out += (kstar - kappa) * math.log(alpha / N) + math.lgamma(kappa + 1.0) - math.lgamma(kstar + 1.0)
    out += count_log_mass(kappa, card, D, alpha) - count_log_mass(kstar, card, D, alpha)
    return out + logq_rev - logq_fwd


@njit(cache=True)
def shuffle_prefix(idx, n, rng):
    for i in range(n - 1, 0, -1):
        j = rng.integers(0, i + 1)
        idx[i], idx[j] = idx[j], idx[i]


@njit(cache=True)
def z_sweep(Y, C, P, Zt, Tt, K, m, sigma2, alpha, a, b, h, mode, order, rng, stats):
    """One pass over observations: Gibbs on shared entries, MH on singletons.

    Mutates P, Zt, Tt, m in place and returns the new K. stats[0] counts
    non-trivial singleton proposals, stats[1] accepted ones.
    """
    D, N = Y.shape
    inv2s2 = 1.0 / (2.0 * sigma2)
    energy = np.zeros(D)
    for k in range(K):
        acc = 0.0
        for n in range(N):
            if Zt[n, k]:
                acc += Tt[n, k] * Tt[n, k]
        energy[k] = acc * inv2s2
    E = np.empty((D, D))
    new_dirs = np.empty((D, D))
    old_dirs = np.empty((D, D))
    keep = np.empty(D, dtype=np.int64)
    sing = np.empty(D, dtype=np.int64)
    cache_ok = False
    cache_v = np.zeros(D)
    cache_lam = 0.0
    for idx in range(N):
        n = order[idx]
        for k in range(K):
            z = Zt[n, k]
            mm = m[k] - z
            if mm == 0:
                continue
            s = Tt[n, k] * Tt[n, k] * inv2s2
            lo = shared_log_odds(mm, N, energy[k] - z * s, s, a, b, h)
            newz = 1 if rng.random() < prob_from_log_odds(lo) else 0
            if newz != z:
                Zt[n, k] = newz
                m[k] += newz - z
                energy[k] += (newz - z) * s
        nk = 0
        ns = 0
        for k in range(K):
            if Zt[n, k] == 1 and m[k] == 1:
                sing[ns] = k
                ns += 1
            else:
                keep[nk] = k
                nk += 1
        kstar = draw_count(nk, D, alpha, rng)
        if ns == 0 and kstar == 0:
            continue
        stats[0] += 1
        for i in range(nk):
            E[:, i] = P[:, keep[i]]
        if ns == 0 and cache_ok:
            v0, lam0 = cache_v, cache_lam
        else:
            v0, lam0 = top_complement_eig(C, E, nk)
            if ns == 0:
                cache_v, cache_lam, cache_ok = v0, lam0, True
        logq_fwd = draw_sequence(kstar, E, nk, C, v0, lam0, sigma2, N, mode, rng, new_dirs)
        # the order in which the current singletons are scored is an auxiliary
        # variable that must be uniform; refresh it before every move
        shuffle_prefix(sing, ns, rng)
        for i in range(ns):
            old_dirs[:, i] = P[:, sing[i]]
        logq_rev = sequence_log_density(old_dirs, ns, E, nk, C, v0, lam0, sigma2, N, mode)
        yn = np.ascontiguousarray(Y[:, n])
        s_new = np.empty(kstar)
        for i in range(kstar):
            t = 0.0
            for j in range(D):
                t += new_dirs[j, i] * yn[j]
            s_new[i] = t * t * inv2s2
        s_old = np.empty(ns)
        for i in range(ns):
            s_old[i] = Tt[n, sing[i]] * Tt[n, sing[i]] * inv2s2
        lr = singleton_log_ratio(s_new, s_old, nk, D, N, alpha, a, b, logq_fwd, logq_rev, h)
        if math.log(rng.random()) < lr:
            stats[1] += 1
            # keep[] is increasing, so moving columns left in place is safe
            for i in range(nk):
                j = keep[i]
                if j != i:
                    P[:, i] = P[:, j]
                    Zt[:, i] = Zt[:, j]
                    Tt[:, i] = Tt[:, j]
                    m[i] = m[j]
                    energy[i] = energy[j]
            for i in range(kstar):
                c = nk + i
                d = np.ascontiguousarray(new_dirs[:, i])
                P[:, c] = d
                Zt[:, c] = 0
                Zt[n, c] = 1
                Tt[:, c] = d @ Y
                m[c] = 1
                energy[c] = s_new[i]
            K = nk + kstar
            cache_ok = False
    return K
