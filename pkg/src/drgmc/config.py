"""Run configuration: a flat, validated record of every knob a chain needs.

Defaults reproduce the desk-scale elliptic study: unit square, 20 x 20
cells, exponential prior kernel (sigma_u = 1.25, s_0 = 0.0625), 25 interior
sensors, SNR 10, 2500 iterations with 500 burn-in, and the adaptation
schedule n_lag = 200, m_max = 100, Delta_LIS = 1e-5.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields

import yaml

ALGORITHMS = ("pcn", "inf-mala", "inf-hmc", "dr-inf-mmala", "dr-inf-mhmc",
              "dili", "adr-inf-mmala", "adr-inf-mhmc")

MODELS = ("elliptic", "linear-gaussian")

# Step sizes frozen by scripts/tune_steps.py on the default elliptic
# problem (20 x 20, SNR 10, seed 0): every kernel bisected into the same
# 60-70% acceptance band, leapfrog ceiling I = 4 for Hamiltonian kernels.
DEFAULT_STEPS = {
    "pcn": {"h": 0.0222},
    "inf-mala": {"h": 0.1356},
    "inf-hmc": {"h": 0.1356, "n_leapfrog": 4},
    "dr-inf-mmala": {"h": 0.0624},
    "dr-inf-mhmc": {"h": 0.0222, "n_leapfrog": 4},
    "dili": {"h_r": 0.2943, "h_perp": 0.0294},
    "adr-inf-mmala": {"h": 0.8274},
    "adr-inf-mhmc": {"h": 0.2943, "n_leapfrog": 4},
}


@dataclass
class RunConfig:
    model: str = "elliptic"
    algorithm: str = "pcn"
    nx: int = 20
    ny: int = 20
    sigma_u: float = 1.25
    s_0: float = 0.0625
    snr: float = 10.0
    noiseless: bool = False
    h: float | None = None
    h_r: float | None = None
    h_perp: float | None = None
    n_leapfrog: int | None = None
    eps: float | None = None
    gamma_r: int = 1
    gamma_perp: int = 0
    rank: int = 5
    threshold: float = 0.01
    max_rank: int = 30
    iterations: int = 2500
    burn_in: int = 500
    n_lag: int = 200
    m_max: int = 100
    delta_lis: float = 1e-5
    n_b: int = 50
    seed: int = 0
    data_seed: int = 20260815
    # linear-gaussian model shape (ignored by the elliptic model)
    lin_n: int = 8
    lin_m: int = 4
    lin_noise: float = 0.5
    out_dir: str | None = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        def bad(key, msg):
            raise ValueError(f"config key '{key}': {msg}")

        if self.model not in MODELS:
            bad("model", f"must be one of {MODELS}")
        if self.algorithm not in ALGORITHMS:
            bad("algorithm", f"must be one of {ALGORITHMS}")
        if self.iterations <= self.burn_in or self.burn_in < 0:
            bad("iterations", "must exceed burn_in, and burn_in must be >= 0")
        if self.nx < 2 or self.ny < 2:
            bad("nx", "mesh needs at least 2 cells per direction")
        if self.sigma_u <= 0 or self.s_0 <= 0:
            bad("sigma_u", "prior scales must be positive")
        if self.snr <= 0:
            bad("snr", "must be positive")
        for key in ("h", "h_r", "h_perp", "eps"):
            val = getattr(self, key)
            if val is not None and val <= 0:
                bad(key, "must be positive when given")
        if self.n_leapfrog is not None and self.n_leapfrog < 1:
            bad("n_leapfrog", "must be >= 1")
        if self.gamma_r not in (0, 1) or self.gamma_perp not in (0, 1):
            bad("gamma_r", "gamma flags must be 0 or 1")
        if self.rank < 1 or self.max_rank < 1:
            bad("rank", "ranks must be >= 1")
        if not 0 < self.threshold:
            bad("threshold", "must be positive")
        if self.n_lag < 1 or self.m_max < 1 or self.n_b < 1:
            bad("n_lag", "adaptation cadences must be >= 1")
        if self.delta_lis <= 0:
            bad("delta_lis", "must be positive")
        if self.lin_n < 1 or self.lin_m < 1:
            bad("lin_n", "linear model shape must be positive")

    def resolved_steps(self):
        """Fill unset step-size fields from the per-algorithm defaults."""
        base = dict(DEFAULT_STEPS[self.algorithm])
        out = {"h": self.h, "h_r": self.h_r, "h_perp": self.h_perp,
               "n_leapfrog": self.n_leapfrog, "eps": self.eps}
        for key, val in base.items():
            if out.get(key) is None:
                out[key] = val
        if out["h"] is None and out["h_r"] is not None:
            out["h"] = out["h_r"]
        if out["n_leapfrog"] is None:
            out["n_leapfrog"] = 1
        return out

    def to_dict(self):
        return asdict(self)

    def hash(self):
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


def from_dict(data):
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValueError(f"config key '{unknown[0]}': unknown key"
                         + (f" (also: {', '.join(unknown[1:])})" if len(unknown) > 1 else ""))
    return RunConfig(**data)


def from_yaml(path):
    with open(path) as fh:
        data = yaml.safe_load(fh) or {}
    if not isinstance(data, dict):
        raise ValueError(f"config file {path}: expected a mapping at top level")
    return from_dict(data)


def to_yaml(config, path):
    with open(path, "w") as fh:
        yaml.safe_dump(config.to_dict(), fh, sort_keys=True)
