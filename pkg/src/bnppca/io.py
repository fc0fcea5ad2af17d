"""Plain-text formats: data CSV, ground-truth JSON and chain traces.

Trace files are tab-separated with one record per kept iteration:

    # bnppca-trace D=<D> N=<N>
    iter  K  sigma2  alpha  delta2  P  Z

delta2 and P are comma-separated lists of Python float reprs (P flattened
column by column, active columns only), Z is the K x N activation matrix as a
row-major string of 0/1 characters. Float reprs round-trip exactly, so a
trace read back equals the one written bit for bit.
"""
import json

import numpy as np

from .gibbs import ChainTrace, SweepDiagnostics
from .model import LatentState
from .synth import GroundTruth

TRACE_COLUMNS = ("iter", "K", "sigma2", "alpha", "delta2", "P", "Z")


class DataFormatError(ValueError):
    """Input file could not be parsed."""


def _floats(x):
    return ",".join(repr(float(v)) for v in np.ravel(x))


def _parse_floats(s):
    return np.array([float(v) for v in s.split(",")]) if s else np.zeros(0)


def format_record(it, state):
    K = state.K
    bits = "".join("1" if b else "0" for b in np.ravel(state.Z)) if K else ""
    return "\t".join([str(it), str(K), repr(float(state.sigma2)), repr(float(state.alpha)),
                      _floats(state.delta2), _floats(state.P.T), bits])


def parse_record(line, D, N):
    f = line.rstrip("\n").split("\t")
    if len(f) != len(TRACE_COLUMNS):
        raise DataFormatError(f"expected {len(TRACE_COLUMNS)} fields, got {len(f)}")
    it, K = int(f[0]), int(f[1])
    d2 = _parse_floats(f[4])
    P = _parse_floats(f[5])
    if d2.size != K or P.size != D * K or len(f[6]) != K * N:
        raise DataFormatError(f"record {it}: field sizes do not match K={K}")
    Z = np.frombuffer(f[6].encode(), dtype=np.uint8) - ord("0")
    return it, LatentState(P.reshape(K, D).T.copy(), Z.reshape(K, N).copy(), d2,
                           float(f[2]), float(f[3]))


def write_trace(path, trace, first_iter=0):
    with open(path, "w") as fh:
        fh.write(f"# bnppca-trace D={trace.D} N={trace.N}\n")
        fh.write("\t".join(TRACE_COLUMNS) + "\n")
        for i, s in enumerate(trace.samples):
            fh.write(format_record(first_iter + i, s) + "\n")


def read_trace(path):
    """Read a trace file; returns (ChainTrace, iteration indices)."""
    with open(path) as fh:
        head = fh.readline().split()
        try:
            meta = dict(tok.split("=") for tok in head[2:])
            D, N = int(meta["D"]), int(meta["N"])
        except (KeyError, ValueError, IndexError):
            raise DataFormatError(f"{path}: not a trace file") from None
        if fh.readline().rstrip("\n").split("\t") != list(TRACE_COLUMNS):
            raise DataFormatError(f"{path}: bad column header")
        its, samples = [], []
        for line in fh:
            if line.strip():
                it, s = parse_record(line, D, N)
                its.append(it)
                samples.append(s)
    diag = SweepDiagnostics(K_per_iteration=[s.K for s in samples])
    return ChainTrace(samples, diag, D, N), np.array(its, dtype=int)


def write_data_csv(path, Y, header=False):
    """D rows by N columns; an optional first row names the observations."""
    Y = np.asarray(Y, dtype=float)
    with open(path, "w") as fh:
        if header:
            fh.write(",".join(f"y{n}" for n in range(Y.shape[1])) + "\n")
        for row in Y:
            fh.write(_floats(row) + "\n")


def read_data_csv(path):
    """Read a D x N matrix, skipping a non-numeric first row if there is one."""
    try:
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as e:
        raise DataFormatError(f"cannot read {path}: {e}") from None
    if not lines:
        raise DataFormatError(f"{path}: empty file")
    try:
        [float(v) for v in lines[0].split(",")]
    except ValueError:
        lines = lines[1:]
    try:
        Y = np.array([[float(v) for v in ln.split(",")] for ln in lines])
    except ValueError as e:
        raise DataFormatError(f"{path}: {e}") from None
    if Y.ndim != 2 or Y.size == 0:
        raise DataFormatError(f"{path}: rows have different lengths")
    if not np.all(np.isfinite(Y)):
        raise DataFormatError(f"{path}: non-finite entries")
    return Y


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, ValueError) as e:
        raise DataFormatError(f"cannot read {path}: {e}") from None


def write_ground_truth(path, gt):
    write_json(path, gt.to_json())


def read_ground_truth(path):
    return GroundTruth.from_json(read_json(path))
