"""N-particle Euler scheme for the controlled mean-field dynamics and the
population cost estimator.

One episode simulates N exchangeable particles on the grid t_l = l h,
h = T / n. The conditional mean is replaced by the empirical particle mean
mu_l, all particles share the common-noise increment, and each particle draws
its own Gaussian action

    a_l^j = theta (X_l^j - mu_l) + zeta mu_l + S xi_l^j,    S = sqrt(lam/2 R^{-1}).

The estimator is the left-endpoint Riemann sum

    j_pop = h/N sum_j sum_{l<n} e^{-beta t_l} [ (X-mu)^T Q (X-mu) + mu^T Qhat mu
                                             + a^T R a + lam log p(a) ].

Episodes are simulated in fixed-size blocks so that every floating point
operation, and therefore every result, is independent of the thread count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import streams
from .csvio import write_csv

__all__ = [
    "SimConfig",
    "EpisodeResult",
    "EpisodeOverflowError",
    "TrajectorySummary",
    "run_episode",
    "simulate_batch",
    "aggregate_mean_identity",
    "entropy_constant",
    "policy_sqrt_cov",
    "dump_trajectory",
]

BLOCK = 16
OVERFLOW_LIMIT = 1e12


class EpisodeOverflowError(OverflowError):
    """A particle state left [-1e12, 1e12]; ``episode`` indexes the batch."""

    def __init__(self, episode, step):
        self.episode, self.step = episode, step
        super().__init__(f"episode {episode}: particle state exceeded {OVERFLOW_LIMIT:g} at step {step}")


@dataclass(frozen=True)
class SimConfig:
    T: float = 1.0
    n: int = 100
    N: int = 100
    seed: int = 0
    entropy_mode: str = "sampled"
    lam: Optional[float] = None  # None: use the model's lambda
    threads: int = 1

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be > 0")
        if int(self.n) < 1 or int(self.N) < 1:
            raise ValueError("n and N must be >= 1")
        if self.entropy_mode not in ("sampled", "analytic"):
            raise ValueError(f"unknown entropy_mode {self.entropy_mode!r}")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")

    @property
    def h(self):
        return self.T / self.n


@dataclass
class TrajectorySummary:
    """Per-step population statistics kept for diagnostics.

    ``mu`` has n+1 rows; noise averages are over particles at each step.
    """

    mu: np.ndarray  # (n+1, d)
    second_moment: np.ndarray  # (n+1, d, d) cross-sectional mean of Y Y^T
    idio_mean: np.ndarray  # (n, dW)
    action_mean: np.ndarray  # (n, m)
    common: np.ndarray  # (n, d0)
    h: float
    zeta: np.ndarray
    lam: float


@dataclass
class EpisodeResult:
    j_pop: float
    summary: Optional[TrajectorySummary] = None


class _EpisodeOverflow(Exception):
    def __init__(self, episode, step):
        self.episode, self.step = episode, step


def policy_sqrt_cov(p, lam):
    """Symmetric square root of lam/2 R^{-1} via eigendecomposition of R."""
    w, v = np.linalg.eigh(p.R)
    return (v * np.sqrt(0.5 * lam / w)) @ v.T


def entropy_constant(p, lam):
    """Exact expectation of log p(a) under the Gaussian policy."""
    m = p.m
    if lam == 0:
        return 0.0
    _, logdet = np.linalg.slogdet(p.R)
    return 0.5 * logdet - 0.5 * m * np.log(np.pi * lam) - 0.5 * m


def _sqrt_psd(a):
    w, v = np.linalg.eigh(0.5 * (a + a.T))
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def _mv(mat, x):
    """Batched small matrix-vector product, summation order fixed by shape.

    ``mat``: (..., r, c) broadcastable against ``x``: (..., c) -> (..., r).
    """
    return (mat * x[..., None, :]).sum(axis=-1)


def _quad(mat, x):
    return (x * _mv(mat, x)).sum(axis=-1)


def _draw_noise(p, c, key):
    d, m = p.d, p.m
    n, N = int(c.n), int(c.N)
    x0 = streams.stream(c.seed, *key, streams.INIT).standard_normal((N, d))
    w = streams.stream(c.seed, *key, streams.IDIO).standard_normal((n, N, p.gamma.shape[1]))
    w0 = streams.stream(c.seed, *key, streams.COMMON).standard_normal((n, p.gamma0.shape[1]))
    xi = streams.stream(c.seed, *key, streams.ACTION).standard_normal((n, N, m))
    return x0, w, w0, xi


def _simulate_block(thetas, zetas, p, c, noises, keep_summary):
    E = len(noises)
    n, N = int(c.n), int(c.N)
    h = c.h
    sqh = np.sqrt(h)
    lam = p.lam if c.lam is None else float(c.lam)
    S = policy_sqrt_cov(p, lam)
    B, Bbar, D, R = p.B, p.Bbar, p.D, p.R
    Q, Qhat = p.Q, p.Qhat
    G, G0 = p.gamma, p.gamma0
    log_norm = None
    if lam > 0:
        _, logdet = np.linalg.slogdet(R)
        log_norm = 0.5 * logdet - 0.5 * p.m * np.log(np.pi * lam)
    ent_const = entropy_constant(p, lam)

    th = thetas[:, None, :, :]  # (E, 1, m, d)
    ze = zetas  # (E, m, d)
    x0_sqrt = _sqrt_psd(p.x0_cov)

    X = np.stack([p.x0_mean + _mv(x0_sqrt, nz[0]) for nz in noises])  # (E, N, d)
    W = np.stack([nz[1] for nz in noises])  # (E, n, N, dW)
    W0 = np.stack([nz[2] for nz in noises])  # (E, n, d0)
    XI = np.stack([nz[3] for nz in noises])  # (E, n, N, m)

    total = np.zeros(E)
    summaries = None
    if keep_summary:
        summaries = dict(
            mu=np.empty((E, n + 1, p.d)),
            second=np.empty((E, n + 1, p.d, p.d)),
        )
    for l in range(n):
        mu = X.sum(axis=1) / N  # (E, d)
        Y = X - mu[:, None, :]
        if keep_summary:
            summaries["mu"][:, l] = mu
            summaries["second"][:, l] = np.einsum("eji,ejk->eik", Y, Y) / N
        noise_a = _mv(S, XI[:, l])  # (E, N, m)
        a_mean = _mv(th, Y) + _mv(ze, mu)[:, None, :]
        a = a_mean + noise_a
        run = _quad(Q, Y) + _quad(Qhat, mu)[:, None] + _quad(R, a)  # (E, N)
        if lam > 0:
            if c.entropy_mode == "sampled":
                diff = a - a_mean
                run = run + lam * (log_norm - _quad(R, diff) / lam)
            else:
                run = run + lam * ent_const
        total += np.exp(-p.beta * l * h) * run.sum(axis=1)
        drift = _mv(B, X) + _mv(Bbar, mu)[:, None, :] + _mv(D, a)
        X = X + drift * h + sqh * _mv(G, W[:, l]) + sqh * _mv(G0, W0[:, l])[:, None, :]
        ok = np.all(np.abs(X) <= OVERFLOW_LIMIT, axis=(1, 2))
        if not np.all(ok):
            raise _EpisodeOverflow(int(np.argmin(ok)), l + 1)
    j_pop = total * h / N

    out = []
    for e in range(E):
        summ = None
        if keep_summary:
            mu = X[e].sum(axis=0) / N
            Y = X[e] - mu
            summaries["mu"][e, n] = mu
            summaries["second"][e, n] = Y.T @ Y / N
            summ = TrajectorySummary(
                mu=summaries["mu"][e],
                second_moment=summaries["second"][e],
                idio_mean=W[e].sum(axis=1) / N,
                action_mean=XI[e].sum(axis=1) / N,
                common=W0[e],
                h=h,
                zeta=zetas[e].copy(),
                lam=lam,
            )
        out.append(EpisodeResult(float(j_pop[e]), summ))
    return out


def simulate_batch(thetas, zetas, p, c, keys, keep_summary=False):
    """Simulate one episode per (theta_i, zeta_i, key_i).

    ``thetas``/``zetas`` are (E, m, d) arrays; ``keys`` a list of E integer
    tuples naming each episode's noise streams. Results come back in input
    order and do not depend on ``c.threads``.
    """
    thetas = np.asarray(thetas, dtype=float).reshape(-1, p.m, p.d)
    zetas = np.asarray(zetas, dtype=float).reshape(-1, p.m, p.d)
    keys = [tuple(k) for k in keys]
    if not (len(thetas) == len(zetas) == len(keys)):
        raise ValueError("thetas, zetas and keys must have equal length")

    def work(start):
        sl = slice(start, start + BLOCK)
        noises = [_draw_noise(p, c, k) for k in keys[sl]]
        try:
            return _simulate_block(thetas[sl], zetas[sl], p, c, noises, keep_summary)
        except _EpisodeOverflow as exc:
            raise EpisodeOverflowError(start + exc.episode, exc.step) from None

    starts = range(0, len(keys), BLOCK)
    threads = max(1, int(c.threads))
    if threads == 1 or len(starts) == 1:
        blocks = [work(s) for s in starts]
    else:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            blocks = list(ex.map(work, starts))
    return [r for b in blocks for r in b]


def run_episode(pol, p, c, key=(streams.EPISODE, 0), keep_summary=False):
    """Simulate a single population episode at ``pol`` and return j_pop."""
    th = pol.theta[None]
    ze = pol.zeta[None]
    return simulate_batch(th, ze, p, c, [key], keep_summary=keep_summary)[0]


def aggregate_mean_identity(summary, p):
    """Max deviation between stored particle means and the closed recursion

    mu_{l+1} = mu_l + ((Bhat + D zeta) mu_l + D S xibar_l) h
               + sqrt(h) gamma wbar_l + sqrt(h) gamma0 w0_l,

    which holds exactly because the fluctuations average to zero.
    """
    h = summary.h
    sqh = np.sqrt(h)
    S = policy_sqrt_cov(p, summary.lam)
    A = p.Bhat + p.D @ summary.zeta
    mu = summary.mu
    pred = (
        mu[:-1]
        + (mu[:-1] @ A.T + summary.action_mean @ (p.D @ S).T) * h
        + sqh * summary.idio_mean @ p.gamma.T
        + sqh * summary.common @ p.gamma0.T
    )
    return float(np.max(np.abs(pred - mu[1:]))) if len(pred) else 0.0


def dump_trajectory(summary, path):
    """Write per-step mean and cross-sectional second moments to CSV."""
    n1, d = summary.mu.shape
    header = ["l", "t"] + [f"mu_{i}" for i in range(d)]
    header += [f"m2_{i}{k}" for i in range(d) for k in range(d)]
    rows = (
        [l, l * summary.h, *summary.mu[l], *summary.second_moment[l].reshape(-1)]
        for l in range(n1)
    )
    write_csv(path, header, rows)
