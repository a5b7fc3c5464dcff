"""Experiment configuration files.

A config is a flat JSON object. Matrices are nested row lists; scalars may
be given bare for 1x1 matrices. Exactly one of ``Qhat``/``Qbar`` and one of
``Bhat``/``Bbar`` must be present. Duplicate keys are rejected.

Example::

    {"Q": 0.1, "Qhat": 0.2, "B": 0.1, "Bhat": 0.2, "beta": 20,
     "gamma": 0.05, "gamma0": 0.05, "D": 0.05, "R": 0.2,
     "x0_mean": 1, "x0_cov": 1, "lambda": 0.001,
     "T": 1, "n": 100, "N": 100, "Ntilde": 100, "r": 0.05,
     "theta0": -2, "zeta0": -2}
"""

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .linalg import DimensionError
from .model import ModelParams, PolicyParams, validate

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "loads", "emit", "dumps", "TABLE_DEFAULTS"]

MODEL_KEYS = ("Q", "B", "beta", "gamma", "gamma0", "D", "R", "x0_mean", "x0_cov", "lambda")
PAIRS = (("Qhat", "Qbar"), ("Bhat", "Bbar"))
RUN_KEYS = ("T", "n", "N", "Ntilde", "r", "seed", "rho_schedule", "k_max", "theta0", "zeta0",
            "entropy_mode", "smoothing_dim")
INT_KEYS = ("n", "N", "Ntilde", "seed", "k_max")

TABLE_DEFAULTS = dict(
    T=1.0, n=100, N=100, Ntilde=100, r=0.05, seed=0,
    rho_schedule=[[100, 0.5], [200, 0.9], [350, 1.2]], k_max=350,
    entropy_mode="sampled", smoothing_dim="d",
)


class ConfigError(ValueError):
    """All problems found in a config, one per line."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass
class ExperimentConfig:
    model: ModelParams
    raw: dict
    theta0: Optional[PolicyParams] = None
    run: dict = field(default_factory=dict)


def _no_duplicates(pairs):
    out, dups = {}, []
    for k, v in pairs:
        if k in out:
            dups.append(k)
        out[k] = v
    if dups:
        out["__duplicates__"] = dups
    return out


def _matrix(v, name, problems):
    try:
        arr = np.atleast_2d(np.asarray(v, dtype=float))
    except (TypeError, ValueError):
        problems.append(f"{name}: not a numeric matrix")
        return None
    if arr.ndim != 2:
        problems.append(f"{name}: must be a scalar or a list of rows")
        return None
    if not np.all(np.isfinite(arr)):
        problems.append(f"{name}: non-finite entries")
        return None
    return arr


def loads(text):
    """Parse config text; raises ConfigError listing every problem."""
    try:
        raw = json.loads(text, object_pairs_hook=_no_duplicates)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"invalid JSON: {exc}"]) from None
    if not isinstance(raw, dict):
        raise ConfigError(["config must be a JSON object"])
    problems = []
    for k in raw.pop("__duplicates__", []):
        problems.append(f"duplicate key {k!r}")
    known = set(MODEL_KEYS) | {k for pair in PAIRS for k in pair} | set(RUN_KEYS)
    for k in raw:
        if k not in known:
            problems.append(f"unknown key {k!r}")
    for k in MODEL_KEYS:
        if k not in raw:
            problems.append(f"missing key {k!r}")
    for a, b in PAIRS:
        if (a in raw) == (b in raw):
            problems.append(f"exactly one of {a!r}, {b!r} is required")

    mats = {}
    for k in ("Q", "B", "gamma", "gamma0", "D", "R", "x0_cov", "Qhat", "Qbar", "Bhat", "Bbar"):
        if k in raw:
            mats[k] = _matrix(raw[k], k, problems)
    mean = None
    if "x0_mean" in raw:
        try:
            mean = np.atleast_1d(np.asarray(raw["x0_mean"], dtype=float)).reshape(-1)
        except (TypeError, ValueError):
            problems.append("x0_mean: not numeric")
    scal = {}
    for k in ("beta", "lambda"):
        if k in raw:
            try:
                scal[k] = float(raw[k])
            except (TypeError, ValueError):
                problems.append(f"{k}: not a number")
    run = dict(TABLE_DEFAULTS)
    for k in RUN_KEYS:
        if k in raw:
            run[k] = raw[k]
    for k in INT_KEYS:
        v = run.get(k)
        if not (isinstance(v, int) and not isinstance(v, bool)):
            problems.append(f"{k}: must be an integer")
    for k in ("T", "r"):
        try:
            run[k] = float(run[k])
        except (TypeError, ValueError):
            problems.append(f"{k}: not a number")
    if not problems:
        if run["T"] <= 0:
            problems.append("T must be > 0")
        if run["r"] <= 0:
            problems.append("r must be > 0")
        if run["n"] < 1 or run["N"] < 1 or run["Ntilde"] < 1:
            problems.append("n, N and Ntilde must be >= 1")
        if run["k_max"] < 0:
            problems.append("k_max must be >= 0")
        if not (0 <= run["seed"] < 2**64):
            problems.append("seed must fit in 64 bits unsigned")
        sched = run["rho_schedule"]
        try:
            ent = [(float(a), float(b)) for a, b in sched]
            if not ent or any(y <= x for (x, _), (y, _) in zip(ent, ent[1:])) or any(b < 0 for _, b in ent):
                raise ValueError
        except (TypeError, ValueError):
            problems.append("rho_schedule must be a list of [threshold, rho] with increasing thresholds")
    if problems:
        raise ConfigError(problems)

    q = mats["Q"]
    b = mats["B"]
    qbar = mats["Qhat"] - q if "Qhat" in mats else mats["Qbar"]
    bbar = mats["Bhat"] - b if "Bhat" in mats else mats["Bbar"]
    if qbar.shape != q.shape or bbar.shape != b.shape:
        raise ConfigError(["Qhat/Qbar and Bhat/Bbar must match the shapes of Q and B"])
    try:
        p = ModelParams(
            B=b, Bbar=bbar, D=mats["D"], gamma=mats["gamma"], gamma0=mats["gamma0"],
            Q=q, Qbar=qbar, R=mats["R"], beta=scal["beta"], lam=scal["lambda"],
            x0_mean=mean, x0_cov=mats["x0_cov"],
        )
    except (DimensionError, ValueError) as exc:
        raise ConfigError([f"dimension mismatch: {exc}"]) from None
    viol = validate(p)
    if viol:
        raise ConfigError(viol)

    theta0 = None
    if "theta0" in raw or "zeta0" in raw:
        if not ("theta0" in raw and "zeta0" in raw):
            raise ConfigError(["theta0 and zeta0 must be given together"])
        try:
            theta0 = PolicyParams(raw["theta0"], raw["zeta0"])
        except (DimensionError, ValueError) as exc:
            raise ConfigError([f"theta0/zeta0: {exc}"]) from None
        if theta0.theta.shape != (p.m, p.d):
            raise ConfigError([f"theta0/zeta0 must be {p.m}x{p.d}"])
    return ExperimentConfig(model=p, raw=raw, theta0=theta0, run=run)


def parse_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc}"]) from None
    return loads(text)


def dumps(cfg):
    """Serialize back to config text (raw keys preserved as given)."""
    return json.dumps(cfg.raw, indent=2) + "\n"


def emit(cfg, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(cfg))
