"""Data containers and the evaluable log-posteriors of the collapsed model.

Model: y_n = sum_k z_kn x_kn p_k + e_n with x_kn ~ N(0, delta2_k sigma2),
e_n ~ N(0, sigma2 I), P orthonormal. The coefficients x are always integrated
out. Reference measures: P has density 1 w.r.t. the normalized uniform
measure on its Stiefel manifold (its prior is uniform on the full orthogonal
group, so this does not depend on K); Z is an ordered list of rows under the
labeled IBP mass (see ibp.ibp_log_prob).
"""
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .ibp import ALPHA_SHAPE_FLOOR, ibp_log_prob
from .special import harmonic_number, log_lower_gamma

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class Dataset:
    """D x N observations (one column per observation)."""
    Y: np.ndarray
    centered: bool = False
    original_mean: np.ndarray = None
    gram: np.ndarray = field(init=False, repr=False, compare=False)
    trace: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Y = np.ascontiguousarray(np.asarray(self.Y, dtype=float))
        if Y.ndim != 2 or Y.shape[1] < 1 or Y.shape[0] < 1:
            raise ValueError("Y must be a non-empty D x N matrix")
        if not np.all(np.isfinite(Y)):
            raise ValueError("Y has non-finite entries")
        object.__setattr__(self, "Y", Y)
        if self.original_mean is None:
            object.__setattr__(self, "original_mean", np.zeros(Y.shape[0]))
        object.__setattr__(self, "gram", Y @ Y.T)
        object.__setattr__(self, "trace", float(np.einsum("ij,ij->", Y, Y)))

    @classmethod
    def from_array(cls, Y, center=True):
        Y = np.asarray(Y, dtype=float)
        if not center:
            return cls(Y)
        mean = Y.mean(axis=1)
        return cls(Y - mean[:, None], centered=True, original_mean=mean)

    @property
    def D(self):
        return self.Y.shape[0]

    @property
    def N(self):
        return self.Y.shape[1]


@dataclass(frozen=True)
class Hyperparams:
    a_delta: float = 1.0
    b_delta: float = 0.1
    ks_level: float = 0.05
    n_burn: int = 100
    n_iter: int = 1000
    seed: int = 0
    # concentration rule for the singleton birth proposal, see gibbs.concentration
    proposal_concentration: str = "raw"
    reorthonormalize_every: int = 100
    random_scan: bool = False
    # hold alpha at this value instead of sampling it
    fixed_alpha: float = None
    # power of 1/(1+delta2) each activation contributes to the integrated
    # likelihood; 1/2 is the Gaussian marginal, 1 gives a sparser posterior
    activation_exponent: float = 0.5

    def __post_init__(self):
        if not (self.a_delta > 0 and self.b_delta > 0):
            raise ValueError("a_delta and b_delta must be positive")
        if not 0 < self.ks_level < 1:
            raise ValueError("ks_level must be in (0, 1)")
        if self.n_burn < 0 or self.n_iter < 1:
            raise ValueError("need n_burn >= 0 and n_iter >= 1")
        if self.proposal_concentration not in ("raw", "likelihood", "per_observation"):
            raise ValueError(f"unknown proposal_concentration {self.proposal_concentration!r}")
        if self.fixed_alpha is not None and not self.fixed_alpha > 0:
            raise ValueError("fixed_alpha must be positive")
        if not self.activation_exponent > 0:
            raise ValueError("activation_exponent must be positive")


@dataclass(frozen=True)
class LatentState:
    """P is D x K, Z is K x N (uint8), delta2 has length K."""
    P: np.ndarray
    Z: np.ndarray
    delta2: np.ndarray
    sigma2: float
    alpha: float

    @property
    def K(self):
        return self.P.shape[1]

    def validate(self, data=None, tol=1e-10):
        K = self.P.shape[1]
        if self.Z.shape[0] != K or self.delta2.shape != (K,):
            raise ValueError("P, Z and delta2 disagree on K")
        if K > self.P.shape[0]:
            raise ValueError("K exceeds D")
        if np.linalg.norm(self.P.T @ self.P - np.eye(K)) > tol:
            raise ValueError("P is not orthonormal")
        if K and np.any(self.Z.sum(axis=1) == 0):
            raise ValueError("Z has an all-zero row")
        if np.any(self.delta2 <= 0) or self.sigma2 <= 0 or self.alpha <= 0:
            raise ValueError("delta2, sigma2 and alpha must be positive")
        if data is not None and (self.P.shape[0] != data.D or self.Z.shape[1] != data.N):
            raise ValueError("state does not match data dimensions")
        return self


def _check(P, Z, sigma2, data):
    P = np.asarray(P, dtype=float).reshape(data.D, -1)
    Z = np.asarray(Z, dtype=np.uint8).reshape(-1, data.N)
    if P.shape[1] != Z.shape[0]:
        raise ValueError("P and Z disagree on K")
    if sigma2 <= 0:
        raise ValueError("sigma2 must be positive")
    return P, Z


def _noise_terms(sigma2, data):
    ND = data.N * data.D
    return -0.5 * ND * np.log(2 * np.pi * sigma2) - data.trace / (2 * sigma2)


def log_marginal_posterior(state, hyper, data):
    """Joint log-posterior of (P, Z, delta2, sigma2, alpha) with coefficients integrated out.

    No constants are dropped: Gaussian likelihood with its 2*pi terms, the
    normalized sIG prior per direction, the labeled IBP mass, and the
    unnormalized Jeffreys terms -log sigma2 - log alpha.
    """
    P, Z = _check(state.P, state.Z, state.sigma2, data)
    if state.alpha <= 0:
        raise ValueError("alpha must be positive")
    d2 = np.asarray(state.delta2, dtype=float)
    a, b = hyper.a_delta, hyper.b_delta
    s2 = state.sigma2
    t2 = (P.T @ data.Y) ** 2
    m = Z.sum(axis=1)
    out = _noise_terms(s2, data)
    h = hyper.activation_exponent
    out += np.sum(-h * m * np.log1p(d2) + (d2 / (1 + d2)) * np.sum(Z * t2, axis=1) / (2 * s2))
    out += np.sum(a * np.log(b) - log_lower_gamma(a, b) - (a + 1) * np.log1p(d2) - b / (1 + d2))
    out += ibp_log_prob(Z, state.alpha, N=data.N, labeled=True)
    return float(out - np.log(s2) - np.log(state.alpha))


def log_direction_evidence(m, energy, a, b, h=0.5):
    """log of the per-direction factor once delta2 is integrated against sIG(a, b).

    m active observations with summed energy sum <p,y>^2/(2 sigma2) = energy give
    b^a/γ(a,b) · e^energy · γ(a + h m, b + energy) / (b + energy)^(a + h m).
    """
    A = a + h * m
    B = b + energy
    return a * np.log(b) - log_lower_gamma(a, b) + energy + log_lower_gamma(A, B) - A * np.log(B)


def log_collapsed_posterior(P, Z, sigma2, hyper, data, alpha=None):
    """log-posterior of (P, Z, sigma2[, alpha]) with every delta2 integrated out.

    If alpha is None it is integrated out as well against the 1/alpha prior,
    giving Γ(K)/H_N^K; for K = 0 that integral diverges and the same shape
    floor as the alpha update is used.
    """
    P, Z = _check(P, Z, sigma2, data)
    K = P.shape[1]
    a, b = hyper.a_delta, hyper.b_delta
    energy = np.sum(Z * (P.T @ data.Y) ** 2, axis=1) / (2 * sigma2)
    m = Z.sum(axis=1)
    out = _noise_terms(sigma2, data) - np.log(sigma2)
    out += sum(log_direction_evidence(m[k], energy[k], a, b, hyper.activation_exponent) for k in range(K))
    if alpha is None:
        # ibp mass at alpha = 1 minus its alpha-dependent part, then the alpha integral
        H = harmonic_number(data.N)
        shape = K if K > 0 else ALPHA_SHAPE_FLOOR
        out += ibp_log_prob(Z, 1.0, N=data.N, labeled=True) + H
        out += special.gammaln(shape) - shape * np.log(H)
    else:
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        out += ibp_log_prob(Z, alpha, N=data.N, labeled=True) - np.log(alpha)
    return float(out)


def _fix_signs(M):
    # make the largest-magnitude entry of each column positive
    if M.shape[1] == 0:
        return M
    idx = np.argmax(np.abs(M), axis=0)
    s = np.sign(M[idx, np.arange(M.shape[1])])
    s[s == 0] = 1.0
    return M * s


def orthonormal_complement(Psub):
    """D x (D-m) orthonormal basis of the orthogonal complement of span(Psub)."""
    Psub = np.asarray(Psub, dtype=float)
    if Psub.ndim != 2:
        raise ValueError("Psub must be a matrix")
    D, m = Psub.shape
    if m > D or np.linalg.norm(Psub.T @ Psub - np.eye(m)) > ORTHO_TOL:
        raise ValueError("Psub must have orthonormal columns")
    if m == 0:
        return np.eye(D)
    Q, _ = np.linalg.qr(Psub, mode="complete")
    N = Q[:, m:]
    # one pass of re-projection removes the O(eps) leakage of the Householder basis
    N = N - Psub @ (Psub.T @ N)
    N, _ = np.linalg.qr(N)
    return _fix_signs(N)


def leading_eigpair(M):
    """Top eigenvector (first non-negligible coordinate positive) and eigenvalue."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError("M must be square")
    scale = max(1.0, np.abs(M).max(initial=0.0))
    if np.abs(M - M.T).max(initial=0.0) > 1e-10 * scale:
        raise ValueError("M must be symmetric")
    w, V = np.linalg.eigh(0.5 * (M + M.T))
    v = V[:, -1]
    nz = np.flatnonzero(np.abs(v) > 1e-12)
    if nz.size and v[nz[0]] < 0:
        v = -v
    return v, float(w[-1])


def polar_orthonormalize(P):
    """Closest orthonormal matrix (orthogonal polar factor)."""
    if P.shape[1] == 0:
        return P
    U, _, Vt = np.linalg.svd(P, full_matrices=False)
    return U @ Vt
