"""bnppca command line: generate | fit | estimate | report.

Exit codes: 0 success, 2 usage error, 3 unreadable or invalid data,
4 numerical failure.
"""
import argparse
import hashlib
import json
import logging
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import numba
import numpy as np
import scipy

from . import io
from .estimators import ConditionUnmetError, alignment_scores, conditional_mmse, k_ks, k_mmap
from .experiments import alpha_density, chain_rng, ks_rng, rejection_matrix, worker_count
from .gibbs import run_chain
from .model import Dataset, Hyperparams
from .synth import PRESETS, SCHEDULES, ScenarioConfig, generate, preset

EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 2, 3, 4

log = logging.getLogger("bnppca")


class UsageError(Exception):
    pass


def _versions():
    try:
        from importlib.metadata import version
        pkg = version("artifact")
    except Exception:
        pkg = "unknown"
    return {"bnppca": pkg, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _config_hash(cfg):
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, default=str).encode()).hexdigest()[:16]


def _write_manifest(outdir, command, cfg, seed, outputs, timings, extra=None):
    """The manifest lists only files that exist; it is written last."""
    missing = [p for p in outputs if not os.path.exists(os.path.join(outdir, p))]
    if missing:
        raise RuntimeError(f"outputs not written: {missing}")
    man = {"command": command, "config": cfg, "config_hash": _config_hash(cfg), "seed": seed,
           "versions": _versions(), "timings": timings, "outputs": sorted(outputs)}
    if extra:
        man.update(extra)
    io.write_json(os.path.join(outdir, "manifest.json"), man)


def _outdir(path):
    if not path:
        raise UsageError("an output directory is required (-o)")
    os.makedirs(path, exist_ok=True)
    return path


def _args_dict(args):
    return {k: v for k, v in vars(args).items() if k not in ("func", "o")}


# generate

def _scenario(args):
    if args.preset:
        cfg = preset(args.preset, D=args.D, N=args.N, seed=args.seed)
        over = {k: v for k, v in (("K", args.K), ("sigma2", args.sigma2),
                                 ("schedule", args.schedule)) if v is not None}
        if over:
            cfg = replace(cfg, **over)
        return cfg
    if args.D is None or args.K is None or args.N is None:
        raise UsageError("give --preset or all of --D, --K, --N")
    return ScenarioConfig(D=args.D, K=args.K, N=args.N,
                          schedule=args.schedule or "proportional_inverse",
                          sigma2=0.01 if args.sigma2 is None else args.sigma2, seed=args.seed)


def cmd_generate(args):
    out = _outdir(args.o)
    t0 = time.perf_counter()
    try:
        cfg = _scenario(args)
        cfg.deltas()
    except ValueError as e:
        raise UsageError(str(e)) from None
    ds, truth = generate(cfg)
    io.write_data_csv(os.path.join(out, "data.csv"), ds.Y, header=args.header)
    io.write_ground_truth(os.path.join(out, "truth.json"), truth)
    _write_manifest(out, "generate", _args_dict(args), args.seed, ["data.csv", "truth.json"],
                    {"generate": time.perf_counter() - t0},
                    {"scenario": {"D": cfg.D, "K": cfg.K, "N": cfg.N, "sigma2": cfg.sigma2,
                                  "deltas": cfg.deltas().tolist()}})
    print(f"wrote {cfg.D} x {cfg.N} data with K={cfg.K} to {out}")


# fit

def _fit_one(job):
    Y, center, hyper, chain = job
    data = Dataset.from_array(Y, center=center)
    return run_chain(data, hyper, chain_rng(hyper.seed, chain))


def _hyper(args, **kw):
    try:
        return Hyperparams(a_delta=args.a_delta, b_delta=args.b_delta, ks_level=args.level,
                           n_burn=args.burn, n_iter=args.iters, seed=args.seed,
                           proposal_concentration=args.concentration,
                           activation_exponent=args.activation_exponent, **kw)
    except ValueError as e:
        raise UsageError(str(e)) from None


def cmd_fit(args):
    out = _outdir(args.o)
    if args.chains < 1:
        raise UsageError("--chains must be positive")
    hyper = _hyper(args)
    Y = io.read_data_csv(args.data)
    if Y.shape[1] < 2:
        raise io.DataFormatError(f"{args.data}: need at least two observations (columns)")
    data = Dataset.from_array(Y, center=not args.no_center)
    t0 = time.perf_counter()
    jobs = [(Y, not args.no_center, hyper, c) for c in range(args.chains)]
    n = min(worker_count(), len(jobs))
    if n > 1:
        with ProcessPoolExecutor(n) as ex:
            traces = list(ex.map(_fit_one, jobs))
    else:
        traces = [_fit_one(j) for j in jobs]
    outputs, hist = [], np.zeros(data.D + 1, dtype=int)
    for c, tr in enumerate(traces):
        name = f"trace_{c}.tsv"
        io.write_trace(os.path.join(out, name), tr, first_iter=hyper.n_burn)
        d = tr.diagnostics
        io.write_json(os.path.join(out, f"diagnostics_{c}.json"), {
            "singleton_mh_proposed": d.singleton_mh_proposed,
            "singleton_mh_accepted": d.singleton_mh_accepted,
            "alpha_floor_hits": d.alpha_floor_hits, "noise_rate_clamps": d.noise_rate_clamps,
            "K_per_iteration": d.K_per_iteration})
        outputs += [name, f"diagnostics_{c}.json"]
        hist += np.bincount(tr.K, minlength=data.D + 1)
    _write_tsv(os.path.join(out, "k_histogram.tsv"), ["K", "count", "frequency"],
               [[k, int(hist[k]), hist[k] / hist.sum()] for k in range(data.D + 1)])
    outputs.append("k_histogram.tsv")
    _write_manifest(out, "fit", _args_dict(args), args.seed, outputs,
                    {"fit": time.perf_counter() - t0},
                    {"centered": not args.no_center, "mean": data.original_mean.tolist(),
                     "D": data.D, "N": data.N})
    print(f"{args.chains} chain(s), K_mMAP of merged samples = {int(np.argmax(hist))}")


# estimate

def _merge(traces):
    first = traces[0]
    for t in traces[1:]:
        if (t.D, t.N) != (first.D, first.N):
            raise io.DataFormatError("traces disagree on D or N")
    samples = [s for t in traces for s in t.samples]
    return type(first)(samples, first.diagnostics, first.D, first.N)


def cmd_estimate(args):
    out = _outdir(args.o)
    t0 = time.perf_counter()
    traces = []
    for p in args.trace:
        if not os.path.exists(p):
            raise io.DataFormatError(f"missing trace {p}")
        traces.append(io.read_trace(p)[0])
    trace = _merge(traces)
    if len(trace.samples) == 0:
        raise io.DataFormatError("trace has no samples")
    if not 0 < args.level < 1:
        raise UsageError("--level must be in (0, 1)")
    kk, report = k_ks(trace, None, args.level, ks_rng(args.seed))
    km = k_mmap(trace)
    res = {"k_mmap": km, "k_ks": kk, "ks_report": report.to_json(), "D": trace.D, "N": trace.N,
           "k_hist": np.bincount(trace.K, minlength=trace.D + 1).tolist(),
           "alpha": [float(s.alpha) for s in trace.samples], "traces": list(args.trace)}
    outputs = ["estimate.json"]
    try:
        est = conditional_mmse(trace, km).sorted_by_scale()
    except ConditionUnmetError:
        est = None
    if est is not None:
        res["delta2_hat"] = est.delta2.tolist()
        res["delta2_samples_summary"] = _delta2_summary(trace, km)
        io.write_data_csv(os.path.join(out, "p_hat.csv"), est.P)
        outputs.append("p_hat.csv")
    if args.truth:
        truth = io.read_ground_truth(args.truth)
        if truth.H.shape[0] != trace.D:
            raise io.DataFormatError("ground truth dimension differs from the trace")
        if truth.H.shape[1]:
            P_hat = est.P if est is not None else np.zeros((trace.D, 0))
            res["alignment"] = alignment_scores(truth.H, P_hat, match=True).tolist()
        res["K_true"] = int(truth.H.shape[1])
    io.write_json(os.path.join(out, "estimate.json"), res)
    _write_manifest(out, "estimate", _args_dict(args), args.seed, outputs,
                    {"estimate": time.perf_counter() - t0})
    print(f"K_mMAP = {km}, K_KS = {kk}")


def _delta2_summary(trace, K_hat):
    """Quantiles of the sorted delta2 values over samples with K = K_hat."""
    d = np.array([np.sort(s.delta2)[::-1] for s in trace.samples if s.K == K_hat])
    q = np.quantile(d, [0.05, 0.5, 0.95], axis=0)
    return {"q05": q[0].tolist(), "median": q[1].tolist(), "q95": q[2].tolist()}


# report

def _write_tsv(path, header, rows):
    with open(path, "w") as fh:
        fh.write("\t".join(header) + "\n")
        for r in rows:
            fh.write("\t".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)
                               for v in r) + "\n")


def _load_estimates(paths):
    res = []
    for p in paths:
        if os.path.isdir(p):
            p = os.path.join(p, "estimate.json")
        r = io.read_json(p)
        r["source"] = p
        res.append(r)
    return res


def cmd_report(args):
    out = _outdir(args.o)
    if not args.inputs:
        raise UsageError("no estimate files given")
    t0 = time.perf_counter()
    est = _load_estimates(args.inputs)
    Dmax = max(r["D"] for r in est)
    _write_tsv(os.path.join(out, "k_posterior.tsv"),
               ["source", "D", "N", "k_mmap", "k_ks"] + [f"P_K{k}" for k in range(Dmax + 1)],
               [[r["source"], r["D"], r["N"], r["k_mmap"], r["k_ks"]]
                + list(np.pad(np.array(r["k_hist"], float) / sum(r["k_hist"]),
                              (0, Dmax + 1 - len(r["k_hist"]))))
                for r in est])
    _write_tsv(os.path.join(out, "delta2_summary.tsv"), ["source", "k", "q05", "median", "q95"],
               [[r["source"], k + 1, q05, med, q95] for r in est if "delta2_samples_summary" in r
                for k, (q05, med, q95) in enumerate(zip(*(r["delta2_samples_summary"][c]
                                                          for c in ("q05", "median", "q95"))))])
    _write_tsv(os.path.join(out, "alignment.tsv"), ["source", "k", "alignment"],
               [[r["source"], k + 1, a] for r in est for k, a in enumerate(r.get("alignment", []))])
    amax = max(max(r["alpha"]) for r in est)
    grid = np.linspace(0.0, 1.1 * amax if amax > 0 else 1.0, 201)
    _write_tsv(os.path.join(out, "alpha_density.tsv"), ["source", "alpha", "density"],
               [[r["source"], a, d] for r in est for a, d in zip(grid, alpha_density(r["alpha"], grid))])
    # rejection frequencies per (D, N) across replicates, columns K = 0..5
    Ks = list(range(6))
    cells = sorted({(r["D"], r["N"]) for r in est})
    rows = []
    for D, N in cells:
        group = [r for r in est if (r["D"], r["N"]) == (D, N)]
        freq = rejection_matrix(group, Ks)
        kks = np.bincount([r["k_ks"] for r in group], minlength=D + 1)
        rows.append([D, N, len(group)] + list(freq) + [int(kks[0])])
    _write_tsv(os.path.join(out, "ks_rejections.tsv"),
               ["D", "N", "replicates"] + [f"reject_K{k}" for k in Ks] + ["k_ks_zero"], rows)
    outputs = ["k_posterior.tsv", "delta2_summary.tsv", "alignment.tsv", "alpha_density.tsv",
               "ks_rejections.tsv"]
    _write_manifest(out, "report", _args_dict(args), None, outputs,
                    {"report": time.perf_counter() - t0})
    print(f"report over {len(est)} estimate(s) written to {out}")


def build_parser():
    p = argparse.ArgumentParser(prog="bnppca", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a benchmark scenario")
    g.add_argument("--preset", choices=PRESETS)
    g.add_argument("--D", type=int)
    g.add_argument("--K", type=int)
    g.add_argument("--N", type=int)
    g.add_argument("--sigma2", type=float)
    g.add_argument("--schedule", choices=SCHEDULES)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--header", action="store_true", help="write a header row in data.csv")
    g.add_argument("-o", help="output directory")
    g.set_defaults(func=cmd_generate)

    f = sub.add_parser("fit", help="run the Gibbs sampler on a data CSV")
    f.add_argument("data")
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--chains", type=int, default=1)
    f.add_argument("--burn", type=int, default=100)
    f.add_argument("--iters", type=int, default=1000)
    f.add_argument("--level", type=float, default=0.05)
    f.add_argument("--no-center", action="store_true")
    f.add_argument("--a-delta", type=float, default=1.0)
    f.add_argument("--b-delta", type=float, default=0.1)
    f.add_argument("--concentration", default="raw",
                   choices=("raw", "likelihood", "per_observation"))
    f.add_argument("--activation-exponent", type=float, default=0.5)
    f.add_argument("-o", help="output directory")
    f.set_defaults(func=cmd_fit)

    e = sub.add_parser("estimate", help="dimension and basis estimates from traces")
    e.add_argument("trace", nargs="+")
    e.add_argument("--truth", help="ground-truth JSON for alignment scores")
    e.add_argument("--level", type=float, default=0.05)
    e.add_argument("--seed", type=int, default=0, help="seed of the KS test's random vectors")
    e.add_argument("-o", help="output directory")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("report", help="plot-ready tables from estimate outputs")
    r.add_argument("inputs", nargs="*", help="estimate.json files or directories holding one")
    r.add_argument("-o", help="output directory")
    r.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as e:
        parser.print_usage(sys.stderr)
        print(f"bnppca: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (io.DataFormatError, ValueError) as e:
        print(f"bnppca: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (FloatingPointError, np.linalg.LinAlgError, ArithmeticError, RuntimeError) as e:
        print(f"bnppca: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
