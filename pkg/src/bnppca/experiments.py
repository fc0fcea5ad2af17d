"""Seeded replicate runs and the summaries behind the benchmark figures."""
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numpy as np
from scipy.stats import gaussian_kde

from .estimators import ConditionUnmetError, alignment_scores, conditional_mmse, k_ks, k_mmap
from .gibbs import run_chain
from .model import Dataset
from .synth import generate


def chain_rng(seed, chain=0):
    """Stream for chain number `chain` of a run seeded with `seed`."""
    return np.random.default_rng([seed, chain])


def ks_rng(seed):
    return np.random.default_rng([seed, 2**31])


def worker_count(requested=None):
    """Process count: the request, capped by BNPPCA_THREADS and the CPU count."""
    n = requested or os.cpu_count() or 1
    cap = os.environ.get("BNPPCA_THREADS")
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def fit(Y, hyper, chain=0, center=True):
    data = Dataset.from_array(Y, center=center)
    return data, run_chain(data, hyper, chain_rng(hyper.seed, chain))


def summarize(trace, data, hyper, truth=None, with_ks=True):
    """Dimension estimates and posterior summaries of one chain as plain data."""
    out = {"seed": hyper.seed, "D": data.D, "N": data.N,
           "k_hist": np.bincount(trace.K, minlength=data.D + 1).tolist(),
           "k_mmap": k_mmap(trace),
           "alpha": [float(s.alpha) for s in trace.samples],
           "sigma2_mean": float(np.mean([s.sigma2 for s in trace.samples])),
           "mh_proposed": trace.diagnostics.singleton_mh_proposed,
           "mh_accepted": trace.diagnostics.singleton_mh_accepted,
           "wall_time": trace.diagnostics.wall_time}
    if with_ks:
        kks, report = k_ks(trace, data, hyper.ks_level, ks_rng(hyper.seed))
        out["k_ks"] = kks
        out["ks_report"] = report.to_json()
    try:
        est = conditional_mmse(trace, out["k_mmap"]).sorted_by_scale()
        out["delta2_hat"] = est.delta2.tolist()
        out["P_hat"] = est.P.tolist()
    except ConditionUnmetError:
        est = None
    if truth is not None and truth.H.shape[1] > 0:
        P_hat = est.P if est is not None else np.zeros((data.D, 0))
        out["alignment"] = alignment_scores(truth.H, P_hat, match=True).tolist()
    return out


def run_replicate(config, hyper, with_ks=True):
    """Generate the scenario with config.seed, fit one chain, summarize it."""
    t0 = time.perf_counter()
    ds, truth = generate(config)
    data, trace = fit(ds.Y, replace(hyper, seed=config.seed))
    out = summarize(trace, data, replace(hyper, seed=config.seed), truth, with_ks)
    out.update(K_true=config.K, total_time=time.perf_counter() - t0)
    return out


def _run(args):
    return run_replicate(*args)


def run_replicates(configs, hyper, with_ks=True, workers=None):
    """run_replicate over configs, in worker processes when more than one is allowed.

    Results come back in input order, so the output does not depend on
    scheduling.
    """
    jobs = [(c, hyper, with_ks) for c in configs]
    n = min(worker_count(workers), len(jobs))
    if n <= 1:
        return [_run(j) for j in jobs]
    with ProcessPoolExecutor(n) as ex:
        return list(ex.map(_run, jobs))


def rejection_matrix(results, Ks):
    """Fraction of replicates rejecting H0 at each K (NaN where never tested)."""
    rows = []
    for r in results:
        got = {e["K"]: e["rejected"] for e in r["ks_report"]["per_K"]}
        rows.append([float(got[K]) if K in got else np.nan for K in Ks])
    return np.nanmean(np.array(rows, dtype=float), axis=0) if rows else np.full(len(Ks), np.nan)


def alpha_density(alpha_samples, grid):
    """Gaussian kernel density estimate of alpha's posterior on grid (Scott bandwidth).
    Constant samples (alpha held fixed) give zeros."""
    a = np.asarray(alpha_samples, dtype=float)
    if a.size < 2 or np.ptp(a) == 0:
        return np.zeros(len(grid))
    return gaussian_kde(a)(grid)
