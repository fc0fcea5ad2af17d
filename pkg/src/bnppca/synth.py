"""Synthetic data from the generative model and the benchmark scenario presets."""
from dataclasses import dataclass, field

import numpy as np

from .directional import sample_uniform_stiefel
from .model import Dataset

SCHEDULES = ("proportional_inverse", "fifty_over_k", "zero", "anisotropic")


@dataclass(frozen=True)
class ScenarioConfig:
    D: int
    K: int
    N: int
    schedule: object = "proportional_inverse"  # a name from SCHEDULES or an explicit list
    sigma2: float = 0.01
    c: float = 50.0
    p: float = 2.2
    seed: int = 0

    def __post_init__(self):
        if min(self.D, self.N) < 1 or self.K < 0 or self.K > self.D:
            raise ValueError(f"need D, N >= 1 and 0 <= K <= D, got {self.D, self.K, self.N}")
        if self.sigma2 <= 0:
            raise ValueError("sigma2 must be positive")
        self.deltas()

    def deltas(self):
        """The K scale factors delta2_1..delta2_K."""
        k = np.arange(1, self.K + 1, dtype=float)
        s = self.schedule
        if isinstance(s, str):
            if s == "proportional_inverse":
                out = self.c / k
            elif s == "fifty_over_k":
                out = 50.0 / k
            elif s == "zero":
                out = np.zeros(self.K)
            elif s == "anisotropic":
                out = self.c / k ** self.p
            else:
                raise ValueError(f"unknown schedule {s!r}; choose from {SCHEDULES} or a list")
        else:
            out = np.asarray(s, dtype=float)
            if out.shape != (self.K,):
                raise ValueError("explicit schedule must have K entries")
        if np.any(out < 0) or not np.all(np.isfinite(out)):
            raise ValueError("scale factors must be finite and nonnegative")
        return out


@dataclass(frozen=True)
class GroundTruth:
    H: np.ndarray
    deltas: np.ndarray
    sigma2: float

    def to_json(self):
        return {"D": int(self.H.shape[0]), "K": int(self.H.shape[1]),
                "H": self.H.T.tolist(), "deltas": self.deltas.tolist(), "sigma2": self.sigma2}

    @classmethod
    def from_json(cls, d):
        H = np.asarray(d["H"], dtype=float).reshape(d["K"], d["D"]).T
        return cls(H, np.asarray(d["deltas"], dtype=float), float(d["sigma2"]))


def generate(config, rng=None):
    """y_n = H u_n + e_n with H uniform on the Stiefel manifold,
    u_n ~ N(0, sigma2 diag(deltas)) and e_n ~ N(0, sigma2 I).

    The data are returned uncentered; rng defaults to one seeded by config.seed.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    D, K, N = config.D, config.K, config.N
    d2 = config.deltas()
    H = sample_uniform_stiefel(D, K, rng)
    U = rng.standard_normal((K, N)) * np.sqrt(d2 * config.sigma2)[:, None]
    Y = H @ U + np.sqrt(config.sigma2) * rng.standard_normal((D, N))
    return Dataset(Y), GroundTruth(H, d2, config.sigma2)


_GRIDS = {
    "fig3_grid": {"D": (16, 25, 36), "N": (100, 200, 500, 1000, 5000)},
    "whitenoise": {"D": (9, 16, 25, 36), "N": (500,)},
    "anisotropic": {"D": (16,), "N": (200, 2000)},
}

PRESETS = ("fig1a", "fig1b", "fig3_grid", "whitenoise", "anisotropic200", "anisotropic2000")


def preset(name, D=None, N=None, seed=0):
    """Benchmark scenario by name. Grid presets take D (and N) to pick a cell,
    defaulting to the first one."""
    if name == "fig1a":
        cfg = dict(D=16, K=4, N=100, schedule="proportional_inverse")
    elif name == "fig1b":
        cfg = dict(D=36, K=6, N=500, schedule="proportional_inverse")
    elif name == "fig3_grid":
        D = D or 16
        K = int(round(np.sqrt(D)))
        cfg = dict(D=D, K=K, N=N or 100, schedule="fifty_over_k")
    elif name == "whitenoise":
        cfg = dict(D=D or 9, K=0, N=N or 500, schedule="zero")
    elif name in ("anisotropic200", "anisotropic2000"):
        cfg = dict(D=D or 16, K=D or 16, N=N or int(name[len("anisotropic"):]),
                   schedule="anisotropic", c=10.0, p=2.2)
    else:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    if D is not None and name in ("fig1a", "fig1b"):
        cfg["D"] = D
    if N is not None:
        cfg["N"] = N
    return ScenarioConfig(seed=seed, **cfg)


def preset_grid(name):
    """All (D, N) cells of a grid preset as a list of configs."""
    key = "anisotropic" if name.startswith("anisotropic") else name
    if key not in _GRIDS:
        return [preset(name)]
    return [preset(name, D=D, N=N) for D in _GRIDS[key]["D"] for N in _GRIDS[key]["N"]]
