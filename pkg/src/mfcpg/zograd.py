"""Zeroth-order (sphere-smoothed) gradient estimation from population episodes.

For perturbations U_i, V_i uniform on the radius-r Frobenius sphere,

    g_theta = (d / r^2) (1/Ntilde) sum_i j_pop(theta + U_i, zeta + V_i) U_i

and likewise for g_zeta with V_i. This is an unbiased estimate of the
gradient of the ball-smoothed cost when the multiplier equals the dimension
of the sphere's ambient space; by default the state dimension d is used.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import streams
from .exact_pg import gradient, stability_check
from .linalg import StabilityError
from .model import PolicyParams
from .popsim import EpisodeOverflowError, SimConfig, simulate_batch

__all__ = ["GradConfig", "GradientEstimate", "sample_sphere", "estimate_gradient", "estimator_diagnostics"]


@dataclass(frozen=True)
class GradConfig:
    r: float = 0.05
    Ntilde: int = 100
    sim: SimConfig = field(default_factory=SimConfig)
    smoothing_dim: str = "d"  # "d" or "md"
    episodes_per_perturbation: int = 1
    check_stability: bool = False

    def __post_init__(self):
        if not self.r > 0:
            raise ValueError("r must be > 0")
        if int(self.Ntilde) < 1:
            raise ValueError("Ntilde must be >= 1")
        if self.smoothing_dim not in ("d", "md"):
            raise ValueError("smoothing_dim must be 'd' or 'md'")
        if int(self.episodes_per_perturbation) < 1:
            raise ValueError("episodes_per_perturbation must be >= 1")


@dataclass
class GradientEstimate:
    g_theta: np.ndarray
    g_zeta: np.ndarray
    per_episode_costs: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None

    @property
    def policy(self):
        return PolicyParams(self.g_theta, self.g_zeta)


def sample_sphere(r, m, d, rng):
    """Uniform draw from the Frobenius sphere of radius ``r`` in R^{m x d}."""
    if not r > 0:
        raise ValueError("r must be > 0")
    while True:
        g = rng.standard_normal((m, d))
        nrm = np.sqrt(np.sum(g * g))
        if nrm > 0:
            return g * (r / nrm)


def _multiplier(p, gc):
    return float(p.d if gc.smoothing_dim == "d" else p.m * p.d)


def estimate_gradient(pol, p, gc, key=(streams.ITERATION, 0)):
    """One-point zeroth-order estimate of (grad J1, grad J2) at ``pol``.

    ``key`` names the estimator's random streams; perturbation i draws its
    sphere points from ``(*key, SPHERE, i)`` and its episodes from
    ``(*key, i, e)``.
    """
    key = tuple(key)
    m, d = p.m, p.d
    nt = int(gc.Ntilde)
    reps = int(gc.episodes_per_perturbation)
    U = np.empty((nt, m, d))
    V = np.empty((nt, m, d))
    for i in range(nt):
        rng = streams.stream(gc.sim.seed, *key, streams.SPHERE, i)
        U[i] = sample_sphere(gc.r, m, d, rng)
        V[i] = sample_sphere(gc.r, m, d, rng)
    thetas = pol.theta[None] + U
    zetas = pol.zeta[None] + V
    if gc.check_stability:
        for i in range(nt):
            s, sh = stability_check(PolicyParams(thetas[i], zetas[i]), p)
            if not (s and sh):
                raise StabilityError(f"perturbed gains of episode {i} leave S x S-hat")
    th_rep = np.repeat(thetas, reps, axis=0)
    ze_rep = np.repeat(zetas, reps, axis=0)
    keys = [(*key, i, e) for i in range(nt) for e in range(reps)]
    try:
        res = simulate_batch(th_rep, ze_rep, p, gc.sim, keys)
    except EpisodeOverflowError as exc:
        raise OverflowError(
            f"perturbation episode {exc.episode // reps} diverged: particle state exceeded "
            f"1e12 at step {exc.step}"
        ) from None
    costs = np.array([r_.j_pop for r_ in res]).reshape(nt, reps).mean(axis=1)
    scale = _multiplier(p, gc) / gc.r**2
    g_theta = scale * (np.sum(costs[:, None, None] * U, axis=0) / nt)
    g_zeta = scale * (np.sum(costs[:, None, None] * V, axis=0) / nt)
    return GradientEstimate(g_theta, g_zeta, costs, U, V)


def estimator_diagnostics(pol, p, gc, repeats=20, key=(streams.ITERATION, 0), sensitivity=True):
    """Empirical error decomposition of the estimator at ``pol``.

    Returns a dict with the exact gradient, the mean, bias and spread of
    ``repeats`` independent estimates, the spread ``jpop_sd`` of single
    unperturbed population costs and, if ``sensitivity``, for each of
    T (doubled at fixed h), n and N doubled: the shift of the mean estimate
    and the new ``jpop_sd``. These are empirical proxies for the
    truncation, discretization, particle and statistical error channels.
    """
    key = tuple(key)
    g1, g2 = gradient(pol, p)
    exact = np.concatenate([g1.ravel(), g2.ravel()])

    def batch(cfg):
        ests = [estimate_gradient(pol, p, cfg, key=(*key, j)) for j in range(repeats)]
        return np.array([np.concatenate([e.g_theta.ravel(), e.g_zeta.ravel()]) for e in ests])

    def jpop_sd(sim):
        th = np.repeat(pol.theta[None], repeats, axis=0)
        ze = np.repeat(pol.zeta[None], repeats, axis=0)
        res = simulate_batch(th, ze, p, sim, [(*key, streams.EVAL, j) for j in range(repeats)])
        j = np.array([x.j_pop for x in res])
        return float(j.std(ddof=1)) if repeats > 1 else float("nan")

    base = batch(gc)
    mean = base.mean(axis=0)
    sd = base.std(axis=0, ddof=1) if repeats > 1 else np.full_like(mean, np.nan)
    se = sd / np.sqrt(repeats)
    out = dict(
        exact=exact,
        mean=mean,
        bias=mean - exact,
        bias_norm=float(np.linalg.norm(mean - exact)),
        se=se,
        se_norm=float(np.linalg.norm(se)),
        spread=sd,
        estimates=base,
        within_1e2=float(np.mean(np.all(np.abs(base - exact) <= 1e-2, axis=1))),
        jpop_sd=jpop_sd(gc.sim),
    )
    if sensitivity:
        sim = gc.sim
        variants = {
            "T": SimConfig(**{**sim.__dict__, "T": 2 * sim.T, "n": 2 * sim.n}),
            "n": SimConfig(**{**sim.__dict__, "n": 2 * sim.n}),
            "N": SimConfig(**{**sim.__dict__, "N": 2 * sim.N}),
        }
        sens = {}
        for name, s in variants.items():
            g = GradConfig(**{**gc.__dict__, "sim": s})
            sens[name] = dict(mean_shift=batch(g).mean(axis=0) - mean, jpop_sd=jpop_sd(s))
        out["sensitivity"] = sens
    return out
