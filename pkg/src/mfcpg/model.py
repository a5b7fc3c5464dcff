"""Problem data for the entropy-regularized LQ mean-field control problem
with common noise, plus the derived analytic quantities.

State dynamics (conditional mean E0 given the common noise):

    dX = (B X + Bbar E0[X] + D a) dt + gamma dW + gamma0 dW0

with Gaussian randomized actions. The cost decouples into a fluctuation
part Y = X - E0[X] and a mean part Z = E0[X], which is why most quantities
come in (plain, hatted) pairs: (B, Bhat), (Q, Qhat), (M, Mhat).
"""

from dataclasses import dataclass, field

import numpy as np

from .linalg import DimensionError, RiccatiError, as_matrix, is_stable, min_eig, solve_riccati, sym

__all__ = [
    "ModelParams",
    "PolicyParams",
    "AnalyticSolution",
    "validate",
    "upsilon",
    "solve_optimal",
    "table1_params",
]


@dataclass(frozen=True)
class ModelParams:
    """All problem data. ``Bhat`` and ``Qhat`` are derived, never stored."""

    B: np.ndarray
    Bbar: np.ndarray
    D: np.ndarray
    gamma: np.ndarray
    gamma0: np.ndarray
    Q: np.ndarray
    Qbar: np.ndarray
    R: np.ndarray
    beta: float
    lam: float
    x0_mean: np.ndarray
    x0_cov: np.ndarray

    def __post_init__(self):
        for name in ("B", "Bbar", "D", "gamma", "gamma0", "Q", "Qbar", "R", "x0_cov"):
            arr = as_matrix(getattr(self, name), name)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        mean = np.atleast_1d(np.asarray(self.x0_mean, dtype=float)).reshape(-1)
        if not np.all(np.isfinite(mean)):
            raise ValueError("x0_mean has non-finite entries")
        mean.setflags(write=False)
        object.__setattr__(self, "x0_mean", mean)
        object.__setattr__(self, "beta", float(self.beta))
        object.__setattr__(self, "lam", float(self.lam))
        problems = _shape_problems(self)
        if problems:
            raise DimensionError("; ".join(problems))

    @property
    def d(self):
        return self.B.shape[0]

    @property
    def m(self):
        return self.D.shape[1]

    @property
    def Bhat(self):
        return self.B + self.Bbar

    @property
    def Qhat(self):
        return self.Q + self.Qbar

    @property
    def M(self):
        """Var(X0) + gamma gamma^T / beta."""
        return self.x0_cov + self.gamma @ self.gamma.T / self.beta

    @property
    def Mhat(self):
        """E[X0] E[X0]^T + gamma0 gamma0^T / beta."""
        return np.outer(self.x0_mean, self.x0_mean) + self.gamma0 @ self.gamma0.T / self.beta

    def replace(self, **changes):
        """Copy with some fields replaced (``Bhat``/``Qhat`` accepted too)."""
        kw = {f: getattr(self, f) for f in self.__dataclass_fields__}
        bhat = changes.pop("Bhat", None)
        qhat = changes.pop("Qhat", None)
        kw.update(changes)
        if bhat is not None:
            kw["Bbar"] = np.asarray(bhat, dtype=float) - np.asarray(kw["B"], dtype=float)
        if qhat is not None:
            kw["Qbar"] = np.asarray(qhat, dtype=float) - np.asarray(kw["Q"], dtype=float)
        return ModelParams(**kw)


def _shape_problems(p):
    d, m = p.B.shape[0], p.D.shape[1]
    out = []
    if p.B.shape != (d, d):
        out.append(f"B must be square, got {p.B.shape}")
    for name in ("Bbar", "Q", "Qbar", "x0_cov"):
        if getattr(p, name).shape != (d, d):
            out.append(f"{name} must be {d}x{d}, got {getattr(p, name).shape}")
    if p.D.shape[0] != d:
        out.append(f"D must have {d} rows, got {p.D.shape}")
    if p.R.shape != (m, m):
        out.append(f"R must be {m}x{m}, got {p.R.shape}")
    for name in ("gamma", "gamma0"):
        if getattr(p, name).shape[0] != d:
            out.append(f"{name} must have {d} rows, got {getattr(p, name).shape}")
    if p.x0_mean.shape != (d,):
        out.append(f"x0_mean must have length {d}, got {p.x0_mean.shape}")
    return out


@dataclass(frozen=True)
class PolicyParams:
    """Gaussian policy gains: action mean is theta (x - E0 x) + zeta E0 x."""

    theta: np.ndarray
    zeta: np.ndarray

    def __post_init__(self):
        th = as_matrix(self.theta, "theta")
        ze = as_matrix(self.zeta, "zeta")
        if th.shape != ze.shape:
            raise DimensionError(f"theta {th.shape} and zeta {ze.shape} differ in shape")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "zeta", ze)

    def norm(self):
        """Norm on the product space: sqrt(|theta|_F^2 + |zeta|_F^2)."""
        return float(np.sqrt(np.sum(self.theta**2) + np.sum(self.zeta**2)))

    def inner(self, other):
        return float(np.sum(self.theta * other.theta) + np.sum(self.zeta * other.zeta))

    def __add__(self, other):
        return PolicyParams(self.theta + other.theta, self.zeta + other.zeta)

    def __sub__(self, other):
        return PolicyParams(self.theta - other.theta, self.zeta - other.zeta)

    def scaled(self, c):
        return PolicyParams(c * self.theta, c * self.zeta)


@dataclass(frozen=True)
class AnalyticSolution:
    K: np.ndarray
    Lambda: np.ndarray
    theta_opt: np.ndarray
    zeta_opt: np.ndarray
    M: np.ndarray
    Mhat: np.ndarray
    upsilon: float
    J1_opt: float
    J2_opt: float
    J_opt: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "J_opt", self.J1_opt + self.J2_opt + self.upsilon)

    @property
    def policy(self):
        return PolicyParams(self.theta_opt, self.zeta_opt)


def validate(p):
    """Check the standing assumptions.

    Returns a list of human-readable violations; empty means valid. Each
    positive-definiteness failure reports the offending smallest eigenvalue.
    """
    out = []
    if not np.isfinite(p.beta) or p.beta <= 0:
        out.append(f"beta must be > 0 (got {p.beta})")
    if not np.isfinite(p.lam) or p.lam <= 0:
        out.append(f"lambda must be > 0 (got {p.lam})")
    checks = [("Q", p.Q), ("Qhat", p.Qhat), ("R", p.R)]
    if p.beta > 0:
        checks += [("M", p.M), ("Mhat", p.Mhat)]
    for name, mat in checks:
        if not np.allclose(mat, mat.T, atol=1e-12, rtol=0):
            out.append(f"{name} not symmetric")
        ev = min_eig(mat)
        if ev <= 0:
            out.append(f"{name} not SPD (smallest eigenvalue {ev:.6g})")
    if not np.allclose(p.x0_cov, p.x0_cov.T, atol=1e-12, rtol=0):
        out.append("x0_cov not symmetric")
    elif min_eig(p.x0_cov) < -1e-12:
        out.append(f"x0_cov not PSD (smallest eigenvalue {min_eig(p.x0_cov):.6g})")
    return out


def upsilon(p):
    """Entropy constant (1/beta) (-(lam m / 2) log(pi lam) + (lam / 2) log|det R|)."""
    lam, m = p.lam, p.m
    _, logdet = np.linalg.slogdet(p.R)
    return (-0.5 * lam * m * np.log(np.pi * lam) + 0.5 * lam * logdet) / p.beta


def solve_optimal(p):
    """Optimal gains and costs from the two Riccati equations."""
    K = solve_riccati(p.B, p.D, p.R, p.Q, p.beta)
    Lam = solve_riccati(p.Bhat, p.D, p.R, p.Qhat, p.beta)
    theta = -np.linalg.solve(p.R, p.D.T @ K)
    zeta = -np.linalg.solve(p.R, p.D.T @ Lam)
    half = 0.5 * p.beta * np.eye(p.d)
    if not (is_stable(p.B - half + p.D @ theta) and is_stable(p.Bhat - half + p.D @ zeta)):
        raise RiccatiError("optimal gains are not stabilizing")
    M, Mhat = p.M, p.Mhat
    return AnalyticSolution(
        K=sym(K),
        Lambda=sym(Lam),
        theta_opt=theta,
        zeta_opt=zeta,
        M=M,
        Mhat=Mhat,
        upsilon=float(upsilon(p)),
        J1_opt=float(np.sum(K * M)),
        J2_opt=float(np.sum(Lam * Mhat)),
    )


def table1_params(lam=0.001):
    """The scalar benchmark instance used throughout the tests and demos."""
    return ModelParams(
        B=[[0.1]],
        Bbar=[[0.1]],
        D=[[0.05]],
        gamma=[[0.05]],
        gamma0=[[0.05]],
        Q=[[0.1]],
        Qbar=[[0.1]],
        R=[[0.2]],
        beta=20.0,
        lam=lam,
        x0_mean=[1.0],
        x0_cov=[[1.0]],
    )
