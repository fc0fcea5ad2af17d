"""Indian buffet process: mass function, buffet simulation and the alpha update.

Binary activation matrices are K x N arrays (row k = direction k, column n =
observation n), matching how the sampler stores Z.
"""
import logging
from collections import Counter

import numpy as np
from scipy import special

from .special import harmonic_number

log = logging.getLogger(__name__)

ALPHA_SHAPE_FLOOR = 1e-2


def _as_binary(Z, N=None):
    Z = np.asarray(Z)
    if Z.ndim != 2:
        if Z.size == 0 and N is not None:
            return np.zeros((0, N), dtype=np.uint8)
        raise ValueError("Z must be a K x N array")
    if Z.size and not np.isin(Z, (0, 1)).all():
        raise ValueError("Z entries must be 0 or 1")
    return Z.astype(np.uint8, copy=False)


def ibp_log_prob(Z, alpha, N=None, labeled=False):
    """log IBP mass of Z.

    With labeled=False this is the mass of the equivalence class of Z (rows
    up to permutation), which carries 1/prod(K_h!) over groups of identical
    rows. With labeled=True it is the mass of Z as an ordered list of rows,
    which carries 1/K! instead; that is the law the sampler's state follows.
    N is only needed when Z has no rows and no column count.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    Z = _as_binary(Z, N)
    K = Z.shape[0]
    if Z.shape[1]:
        N = Z.shape[1]
    if N is None or N < 1:
        raise ValueError("need N >= 1")
    m = Z.sum(axis=1).astype(float)
    if np.any(m == 0):
        raise ValueError("Z has an all-zero row")
    out = K * np.log(alpha) - alpha * harmonic_number(N)
    out += np.sum(special.gammaln(N - m + 1) + special.gammaln(m) - special.gammaln(N + 1))
    if labeled:
        out -= special.gammaln(K + 1)
    else:
        counts = Counter(row.tobytes() for row in Z)
        out -= sum(special.gammaln(c + 1) for c in counts.values())
    return float(out)


def sample_ibp(alpha, N, rng):
    """Simulate the buffet for N customers; returns a K x N uint8 matrix."""
    if alpha <= 0 or N < 1:
        raise ValueError("need alpha > 0 and N >= 1")
    rows = []
    m = []
    for n in range(1, N + 1):
        for k in range(len(rows)):
            if rng.random() < m[k] / n:
                rows[k].append(n - 1)
                m[k] += 1
        for _ in range(rng.poisson(alpha / n)):
            rows.append([n - 1])
            m.append(1)
    Z = np.zeros((len(rows), N), dtype=np.uint8)
    for k, cols in enumerate(rows):
        Z[k, cols] = 1
    return Z


def sample_alpha_posterior(K, N, rng, shape_floor=ALPHA_SHAPE_FLOOR):
    """Draw alpha | K ~ Gamma(shape K, rate H_N) under the 1/alpha prior.

    The K = 0 conditional is improper; the shape is floored at shape_floor.
    """
    if N < 1 or K < 0:
        raise ValueError("need N >= 1 and K >= 0")
    shape = float(K)
    if K == 0:
        log.debug("alpha update with K=0: shape floored at %g", shape_floor)
        shape = shape_floor
    alpha = rng.gamma(shape, 1.0 / harmonic_number(N))
    # a tiny shape can underflow to exactly 0
    return max(alpha, np.finfo(float).tiny)
