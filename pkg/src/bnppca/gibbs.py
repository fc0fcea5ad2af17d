"""Collapsed Gibbs sampler: activation sweep with singleton MH, then directions,
scales, noise variance and the IBP parameter.

The per-move functions (gibbs_update_shared_z, propose_singletons, ...) act on
an immutable LatentState and exist for testing and small experiments. run_chain
drives the same jitted kernels on mutable buffers.
"""
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .directional import sample_bingham_sphere, sample_sig, sample_uniform_stiefel
from .ibp import ALPHA_SHAPE_FLOOR, sample_alpha_posterior, sample_ibp
from .model import LatentState, orthonormal_complement, polar_orthonormalize

log = logging.getLogger(__name__)

NOISE_RATE_FLOOR = 1e-12


@dataclass(frozen=True)
class SingletonProposal:
    kappa_star: int
    new_directions: np.ndarray  # D x kappa_star

    def __post_init__(self):
        if self.new_directions.shape[1] != self.kappa_star:
            raise ValueError("kappa_star must equal the number of proposed directions")


@dataclass
class SweepDiagnostics:
    singleton_mh_proposed: int = 0
    singleton_mh_accepted: int = 0
    K_per_iteration: list = field(default_factory=list)
    wall_time: float = 0.0
    alpha_floor_hits: int = 0
    noise_rate_clamps: int = 0


@dataclass
class ChainTrace:
    """Kept (post burn-in) samples in order, plus sampler diagnostics."""
    samples: list
    diagnostics: SweepDiagnostics
    D: int
    N: int

    def __len__(self):
        return len(self.samples)

    @property
    def K(self):
        return np.array([s.K for s in self.samples], dtype=int)


def _mode(name):
    try:
        return kernels.CONCENTRATION_MODES[name]
    except KeyError:
        raise ValueError(f"unknown concentration rule {name!r}") from None


def _energy(p, y, sigma2):
    t = float(p @ y)
    return t * t / (2.0 * sigma2)


def gibbs_update_shared_z(k, n, state, hyper, data, rng):
    """Resample z_kn given everything else (delta2 integrated); returns the new bit."""
    z = state.Z[k]
    m_minus = int(z.sum()) - int(z[n])
    if m_minus <= 0:
        raise ValueError(f"entry ({k}, {n}) belongs to a singleton; use the MH move")
    t2 = (state.P[:, k] @ data.Y) ** 2 / (2.0 * state.sigma2)
    e_minus = float(np.sum(z * t2) - z[n] * t2[n])
    lo = kernels.shared_log_odds(m_minus, data.N, e_minus, float(t2[n]), hyper.a_delta, hyper.b_delta,
                                 hyper.activation_exponent)
    return int(rng.random() < kernels.prob_from_log_odds(lo))


def shared_z_log_odds(k, n, state, hyper, data):
    z = state.Z[k]
    m_minus = int(z.sum()) - int(z[n])
    t2 = (state.P[:, k] @ data.Y) ** 2 / (2.0 * state.sigma2)
    e_minus = float(np.sum(z * t2) - z[n] * t2[n])
    return kernels.shared_log_odds(m_minus, data.N, e_minus, float(t2[n]), hyper.a_delta, hyper.b_delta,
                                 hyper.activation_exponent)


def singleton_split(n, state):
    """Indices of rows that are singletons of observation n, and of all other rows."""
    m = state.Z.sum(axis=1)
    single = (state.Z[:, n] == 1) & (m == 1)
    return np.flatnonzero(single), np.flatnonzero(~single)


def _retained_basis(state, keep, D):
    E = np.zeros((D, D))
    E[:, :keep.size] = state.P[:, keep]
    return E


def propose_singletons(n, state, data, rng, concentration="raw"):
    """Draw the number of new singletons for observation n, then their directions."""
    D = data.D
    _, keep = singleton_split(n, state)
    kstar = kernels.draw_count(keep.size, D, float(state.alpha), rng)
    E = _retained_basis(state, keep, D)
    out = np.zeros((D, D))
    if kstar:
        v0, lam0 = kernels.top_complement_eig(data.gram, E, keep.size)
        kernels.draw_sequence(kstar, E, keep.size, data.gram, v0, lam0, state.sigma2,
                              data.N, _mode(concentration), rng, out)
    return SingletonProposal(kstar, out[:, :kstar].copy())


def singleton_log_acceptance(n, state, proposal, hyper, data, concentration="raw", order=None):
    """log of the MH ratio for swapping the singletons of n for the proposed ones.

    The reverse proposal density scores the current singletons in the given
    order (a permutation of 0..kappa-1, increasing if None). That order is an
    auxiliary variable which accept_singletons draws uniformly each time;
    fixing it would bias the move.
    """
    D = data.D
    sing, keep = singleton_split(n, state)
    if order is not None:
        order = np.asarray(order)
        if sorted(order.tolist()) != list(range(sing.size)):
            raise ValueError("order must be a permutation of the current singletons")
        sing = sing[order]
    if keep.size + proposal.kappa_star > D:
        raise ValueError("proposal would exceed D directions")
    mode = _mode(concentration)
    E = _retained_basis(state, keep, D)
    v0, lam0 = kernels.top_complement_eig(data.gram, E, keep.size)
    new = np.ascontiguousarray(proposal.new_directions, dtype=float)
    old = np.ascontiguousarray(state.P[:, sing])
    logq_fwd = kernels.sequence_log_density(new, new.shape[1], E.copy(), keep.size, data.gram,
                                            v0, lam0, state.sigma2, data.N, mode)
    logq_rev = kernels.sequence_log_density(old, old.shape[1], E.copy(), keep.size, data.gram,
                                            v0, lam0, state.sigma2, data.N, mode)
    y = data.Y[:, n]
    s_new = np.array([_energy(new[:, i], y, state.sigma2) for i in range(new.shape[1])])
    s_old = np.array([_energy(old[:, i], y, state.sigma2) for i in range(old.shape[1])])
    return kernels.singleton_log_ratio(s_new, s_old, keep.size, D, data.N, float(state.alpha),
                                       hyper.a_delta, hyper.b_delta, logq_fwd, logq_rev,
                                       hyper.activation_exponent)


def accept_singletons(n, state, proposal, hyper, data, rng):
    """MH accept/reject of a singleton proposal; returns the resulting state.

    On acceptance the old singletons are removed and the new directions are
    appended in proposal order, each with a scale drawn from its conditional.
    """
    sing, keep = singleton_split(n, state)
    lr = singleton_log_acceptance(n, state, proposal, hyper, data, hyper.proposal_concentration,
                                  order=rng.permutation(sing.size))
    if not np.log(rng.random()) < lr:
        return state
    new = proposal.new_directions
    kstar = new.shape[1]
    Znew = np.zeros((kstar, data.N), dtype=np.uint8)
    Znew[:, n] = 1
    a = hyper.a_delta + hyper.activation_exponent
    d2 = [sample_sig(a, hyper.b_delta + _energy(new[:, i], data.Y[:, n], state.sigma2), rng)
          for i in range(kstar)]
    return LatentState(
        P=np.hstack([state.P[:, keep], new]),
        Z=np.vstack([state.Z[keep], Znew]),
        delta2=np.concatenate([state.delta2[keep], d2]),
        sigma2=state.sigma2, alpha=state.alpha)


def direction_precision(k, P, Z, delta2, sigma2, data):
    """Complement basis of the other directions and the Bingham parameter of direction k."""
    others = np.delete(np.arange(P.shape[1]), k)
    Nc = orthonormal_complement(P[:, others])
    Yk = data.Y[:, Z[k].astype(bool)]
    G = Nc.T @ Yk
    c = delta2[k] / (1.0 + delta2[k])
    return Nc, (c / (2.0 * sigma2)) * (G @ G.T)


def sample_direction(k, state, hyper, data, rng):
    """Draw p_k from its Bingham conditional on the complement of the other directions."""
    Nc, Lam = direction_precision(k, state.P, state.Z, state.delta2, state.sigma2, data)
    return Nc @ sample_bingham_sphere(Lam, rng)


def scale_params(m, energy, hyper):
    return hyper.a_delta + hyper.activation_exponent * m, hyper.b_delta + energy


def sample_scale(k, state, hyper, data, rng):
    """Draw delta2_k from its shifted inverse gamma conditional."""
    z = state.Z[k]
    energy = float(np.sum(z * (state.P[:, k] @ data.Y) ** 2)) / (2.0 * state.sigma2)
    return sample_sig(*scale_params(int(z.sum()), energy, hyper), rng)


def noise_rate(P, Z, delta2, data):
    """Rate of the inverse gamma conditional of sigma2 (before flooring)."""
    if P.shape[1] == 0:
        return 0.5 * data.trace
    c = delta2 / (1.0 + delta2)
    explained = np.sum(c[:, None] * Z * (P.T @ data.Y) ** 2)
    return 0.5 * (data.trace - explained)


def _draw_noise(rate, data, rng):
    clamped = rate <= 0
    if clamped:
        log.debug("noise rate %g clamped to %g", rate, NOISE_RATE_FLOOR)
        rate = NOISE_RATE_FLOOR
    return rate / rng.gamma(0.5 * data.N * data.D), clamped


def sample_noise(state, hyper, data, rng):
    """Draw sigma2 ~ InverseGamma(ND/2, rate)."""
    return _draw_noise(noise_rate(state.P, state.Z, state.delta2, data), data, rng)[0]


def initial_state(data, hyper, rng):
    """K from IBP(alpha=1) (capped at D), uniform P, delta2 from the prior,
    sigma2 = tr(YY')/(ND), alpha = 1."""
    Z = sample_ibp(1.0, data.N, rng)[: data.D]
    K = Z.shape[0]
    P = sample_uniform_stiefel(data.D, K, rng)
    d2 = np.array([sample_sig(hyper.a_delta, hyper.b_delta, rng) for _ in range(K)])
    return LatentState(P, Z, d2, data.trace / (data.N * data.D), 1.0)


class _Buffers:
    """Mutable working copy of a LatentState in the kernel layout."""

    def __init__(self, state, data):
        D, N = data.D, data.N
        K = state.K
        self.K = K
        self.P = np.zeros((D, D))
        self.P[:, :K] = state.P
        self.Zt = np.zeros((N, D), dtype=np.uint8)
        self.Zt[:, :K] = state.Z.T
        self.Tt = np.zeros((N, D))
        self.Tt[:, :K] = data.Y.T @ state.P
        self.m = np.zeros(D, dtype=np.int64)
        self.m[:K] = state.Z.sum(axis=1)
        self.delta2 = np.zeros(D)
        self.delta2[:K] = state.delta2
        self.sigma2 = float(state.sigma2)
        self.alpha = float(state.alpha)

    def energy(self, k):
        t = self.Tt[:, k]
        return float(np.dot(self.Zt[:, k], t * t)) / (2.0 * self.sigma2)

    def snapshot(self):
        K = self.K
        return LatentState(self.P[:, :K].copy(), np.ascontiguousarray(self.Zt[:, :K].T),
                           self.delta2[:K].copy(), self.sigma2, self.alpha)


def _update_directions(buf, data, hyper, rng, order):
    K = buf.K
    P = buf.P[:, :K]
    Zk = buf.Zt[:, :K].T
    for k in order:
        buf.delta2[k] = sample_sig(*scale_params(buf.m[k], buf.energy(k), hyper), rng)
        Nc, Lam = direction_precision(k, P, Zk, buf.delta2, buf.sigma2, data)
        p = Nc @ sample_bingham_sphere(Lam, rng)
        buf.P[:, k] = p
        buf.Tt[:, k] = data.Y.T @ p
        # refreshing delta2 against the new direction keeps every draw a
        # conditional of the collapsed target
        buf.delta2[k] = sample_sig(*scale_params(buf.m[k], buf.energy(k), hyper), rng)


def gibbs_sweep(buf, data, hyper, rng, diag, it=0):
    """One full sweep in place: activations, directions and scales, sigma2, alpha."""
    N = data.N
    order = rng.permutation(N) if hyper.random_scan else np.arange(N)
    stats = np.zeros(2, dtype=np.int64)
    buf.K = kernels.z_sweep(data.Y, data.gram, buf.P, buf.Zt, buf.Tt, buf.K, buf.m,
                            buf.sigma2, buf.alpha, hyper.a_delta, hyper.b_delta,
                            hyper.activation_exponent, _mode(hyper.proposal_concentration), order, rng, stats)
    diag.singleton_mh_proposed += int(stats[0])
    diag.singleton_mh_accepted += int(stats[1])
    K = buf.K
    korder = rng.permutation(K) if hyper.random_scan else range(K)
    _update_directions(buf, data, hyper, rng, korder)
    rate = noise_rate(buf.P[:, :K], buf.Zt[:, :K].T, buf.delta2[:K], data)
    buf.sigma2, clamped = _draw_noise(rate, data, rng)
    diag.noise_rate_clamps += int(clamped)
    if hyper.fixed_alpha is None:
        buf.alpha = sample_alpha_posterior(K, N, rng)
        diag.alpha_floor_hits += int(K == 0)
    every = hyper.reorthonormalize_every
    if every and (it + 1) % every == 0 and K:
        buf.P[:, :K] = polar_orthonormalize(buf.P[:, :K])
        buf.Tt[:, :K] = data.Y.T @ buf.P[:, :K]
    diag.K_per_iteration.append(K)


def run_chain(data, hyper, rng, init=None, callback=None):
    """Run n_burn + n_iter sweeps and return the kept samples.

    rng is the only source of randomness, so a fixed seed reproduces the
    trace bit for bit. callback(it, state_buffers) is called after every sweep.
    """
    if data.N < 2:
        raise ValueError("need at least two observations")
    start = time.perf_counter()
    state = initial_state(data, hyper, rng) if init is None else init.validate(data, tol=1e-8)
    buf = _Buffers(state, data)
    if hyper.fixed_alpha is not None:
        buf.alpha = float(hyper.fixed_alpha)
    diag = SweepDiagnostics()
    samples = []
    for it in range(hyper.n_burn + hyper.n_iter):
        gibbs_sweep(buf, data, hyper, rng, diag, it)
        if it >= hyper.n_burn:
            samples.append(buf.snapshot())
        if callback is not None:
            callback(it, buf)
    diag.wall_time = time.perf_counter() - start
    if diag.alpha_floor_hits:
        log.info("alpha shape floor %g used in %d sweeps", ALPHA_SHAPE_FLOOR, diag.alpha_floor_hits)
    return ChainTrace(samples, diag, data.D, data.N)
