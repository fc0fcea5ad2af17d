"""Post-chain estimators of the latent dimension and of the basis."""
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import special, stats
from scipy.optimize import linear_sum_assignment

from .directional import sample_uniform_stiefel
from .model import orthonormal_complement, polar_orthonormalize


class ConditionUnmetError(ValueError):
    """No sample in the trace has the requested dimension."""

    def __init__(self, K_hat, available):
        self.K_hat = K_hat
        self.available = sorted(set(int(k) for k in available))
        near = sorted(self.available, key=lambda k: (abs(k - K_hat), k))[:3]
        super().__init__(f"no sample with K={K_hat}; nearest available K: {near}")
        self.nearest = near


def projection_cdf(lam, L):
    """cdf of |<p, u>| for p uniform on the unit sphere of an L-dimensional space
    and u a fixed unit vector of that space.

    The squared projection is Beta(1/2, (L-1)/2) distributed, so this is a
    regularized incomplete beta function. L = 1 is the step at 1.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any((lam < 0) | (lam > 1)):
        raise ValueError("lambda must lie in [0, 1]")
    if L < 1:
        raise ValueError("L must be at least 1")
    if L == 1:
        out = (lam >= 1.0).astype(float)
    else:
        out = special.betainc(0.5, 0.5 * (L - 1), lam * lam)
    return float(out) if out.ndim == 0 else out


def _ks_array(trace_or_K):
    if hasattr(trace_or_K, "samples"):
        return np.array([s.K for s in trace_or_K.samples], dtype=int)
    return np.asarray(trace_or_K, dtype=int)


def k_mmap(trace):
    """Most frequent K among the samples; ties go to the smaller K."""
    K = _ks_array(trace)
    if K.size == 0:
        raise ValueError("empty trace")
    return int(np.argmax(np.bincount(K)))


def integrated_autocorr_time(x):
    """Integrated autocorrelation time by Geyer's initial monotone sequence."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 4:
        return 1.0
    mu = x.mean()
    x = x - mu
    var = x @ x / n
    # a series that is constant up to rounding has no meaningful correlation
    if var <= (1e-10 * max(abs(mu), 1e-150)) ** 2:
        return 1.0
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    prev = np.inf
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        pair = min(pair, prev)
        tau += 2.0 * pair
        prev = pair
    return max(tau, 1.0)


def effective_sample_size(x):
    return len(x) / integrated_autocorr_time(x)


def thin_by_autocorrelation(x):
    """Keep every tau-th draw (tau rounded) so that about an effective sample size remains."""
    step = max(1, int(round(integrated_autocorr_time(x))))
    return np.asarray(x)[::step]


@dataclass
class KsReport:
    level: float
    per_K: list = field(default_factory=list)
    k_ks: int = 0
    k_mmap: int = None

    def to_json(self):
        return asdict(self)

    def rejections(self, Ks):
        """Rejection decisions for the requested K values (None where untested)."""
        got = {r["K"]: r["rejected"] for r in self.per_K}
        return [got.get(K) for K in Ks]


def _full_basis(state, rng):
    """Active directions sorted by activation count (stable), completed by a
    uniformly random orthonormal basis of their complement."""
    D, K = state.P.shape
    freq = state.Z.sum(axis=1)
    Pa = state.P[:, np.argsort(-freq, kind="stable")]
    if K == D:
        return Pa
    Nc = orthonormal_complement(Pa)
    return np.hstack([Pa, Nc @ sample_uniform_stiefel(D - K, D - K, rng)])


def projection_statistics(trace, rng):
    """omega[K, j, t] for K = 0..D-2, j = K..D-1 (NaN elsewhere).

    For iteration t with completed basis p_1..p_D and fixed random unit
    vectors u_j, omega is |<p_j, u~_j>| where u~_j is u_j projected onto the
    complement of p_1..p_K and renormalized.
    """
    D, T = trace.D, len(trace.samples)
    U = rng.standard_normal((D, D))
    U /= np.linalg.norm(U, axis=0)
    omega = np.full((max(D - 1, 0), D, T), np.nan)
    for t, s in enumerate(trace.samples):
        G = _full_basis(s, rng).T @ U  # G[i, j] = <p_i, u_j>
        head = np.vstack([np.zeros(D), np.cumsum(G * G, axis=0)])
        diag = np.abs(np.diag(G))
        for K in range(D - 1):
            rest = np.maximum(1.0 - head[K, K:], 1e-300)
            omega[K, K:, t] = np.minimum(diag[K:] / np.sqrt(rest), 1.0)
    return omega


def k_ks(trace, data=None, level=0.05, rng=None, thin=True):
    """Smallest K whose complement projections look uniform (one-sample KS test).

    Each per-direction series is thinned by its integrated autocorrelation
    time before pooling. K = D-1 leaves a one-dimensional complement where
    the statistic is identically 1; it is not tested and is returned when
    every smaller K is rejected. data is accepted for interface symmetry and
    is not needed: the test only uses the sampled bases.
    """
    if len(trace.samples) == 0:
        raise ValueError("empty trace")
    if not 0 < level < 1:
        raise ValueError("level must be in (0, 1)")
    rng = np.random.default_rng() if rng is None else rng
    D = trace.D
    omega = projection_statistics(trace, rng)
    report = KsReport(level=level, k_mmap=k_mmap(trace))
    chosen = None
    for K in range(D - 1):
        series = omega[K, K:]
        pooled = np.concatenate([thin_by_autocorrelation(x) if thin else x for x in series])
        res = stats.kstest(pooled, lambda x, L=D - K: projection_cdf(np.clip(x, 0, 1), L))
        rejected = bool(res.pvalue < level)
        report.per_K.append({"K": K, "stat": float(res.statistic), "pvalue": float(res.pvalue),
                             "rejected": rejected, "n": int(pooled.size)})
        if chosen is None and not rejected:
            chosen = K
    report.k_ks = D - 1 if chosen is None else chosen
    return report.k_ks, report


@dataclass
class MmseEstimate:
    P: np.ndarray        # D x K_hat, column order of the first qualifying sample
    delta2: np.ndarray   # mean scale of each matched column
    activation: np.ndarray  # K_hat x N activation frequencies
    n_samples: int

    def sorted_by_scale(self):
        """Same estimate with columns ordered by decreasing mean delta2."""
        o = np.argsort(-self.delta2, kind="stable")
        return MmseEstimate(self.P[:, o], self.delta2[o], self.activation[o], self.n_samples)


def _match_columns(ref, P):
    """Permutation and signs of P's columns that best align them with ref."""
    C = ref.T @ P
    _, cols = linear_sum_assignment(-np.abs(C))
    signs = np.sign(C[np.arange(C.shape[0]), cols])
    signs[signs == 0] = 1.0
    return cols, signs


def conditional_mmse(trace, K_hat):
    """Average of the samples with K = K_hat after matching each sample's
    columns (permutation and sign) to the first such sample, projected back
    onto the orthonormal matrices."""
    qual = [s for s in trace.samples if s.K == K_hat]
    if not qual:
        raise ConditionUnmetError(K_hat, [s.K for s in trace.samples])
    ref = qual[0].P
    P = np.zeros_like(ref)
    d2 = np.zeros(K_hat)
    act = np.zeros((K_hat, qual[0].Z.shape[1]))
    for s in qual:
        cols, signs = _match_columns(ref, s.P)
        P += s.P[:, cols] * signs
        d2 += s.delta2[cols]
        act += s.Z[cols]
    n = len(qual)
    return MmseEstimate(polar_orthonormalize(P / n), d2 / n, act / n, n)


def conditional_mmse_P(trace, K_hat):
    return conditional_mmse(trace, K_hat).P


def alignment_scores(P_true, P_hat, match=False):
    """|<p_k, p_hat_k>| per column of P_true.

    With match=True the columns of P_hat are first assigned to those of P_true
    to maximize the total score; P_hat may then have a different number of
    columns, and true columns left without a partner score 0.
    """
    P_true = np.asarray(P_true, dtype=float)
    P_hat = np.asarray(P_hat, dtype=float)
    if match:
        if P_true.shape[0] != P_hat.shape[0]:
            raise ValueError(f"dimension mismatch {P_true.shape} vs {P_hat.shape}")
        out = np.zeros(P_true.shape[1])
        if P_true.shape[1] and P_hat.shape[1]:
            C = np.abs(P_true.T @ P_hat)
            rows, cols = linear_sum_assignment(-C)
            out[rows] = C[rows, cols]
        return out
    if P_true.shape != P_hat.shape:
        raise ValueError(f"shape mismatch {P_true.shape} vs {P_hat.shape}")
    return np.abs(np.sum(P_true * P_hat, axis=0))
