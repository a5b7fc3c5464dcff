"""Model-free stochastic policy gradient: Theta <- Theta - rho_k g_hat(Theta)."""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from . import streams
from .exact_pg import GDTrace, IterateRecord, cost, stability_check
from .linalg import StabilityError
from .model import PolicyParams, solve_optimal
from .popsim import run_episode
from .zograd import GradConfig, estimate_gradient

__all__ = ["StepSchedule", "MFRunConfig", "model_free_pg", "multi_seed_study", "moving_average", "descent_fraction"]


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise constant steps: ``rho_at(k)`` is the rho of the first entry
    with ``k <= threshold``; past the last threshold the last rho is kept.
    """

    entries: Tuple[Tuple[float, float], ...]

    def __post_init__(self):
        ent = tuple((float(k), float(r)) for k, r in self.entries)
        if not ent:
            raise ValueError("schedule needs at least one entry")
        ks = [k for k, _ in ent]
        if any(b <= a for a, b in zip(ks, ks[1:])):
            raise ValueError("schedule thresholds must be strictly increasing")
        if any(r < 0 for _, r in ent):
            raise ValueError("schedule steps must be non-negative")
        object.__setattr__(self, "entries", ent)

    @classmethod
    def constant(cls, rho):
        return cls(((np.inf, rho),))

    @classmethod
    def benchmark(cls):
        return cls(((100, 0.5), (200, 0.9), (350, 1.2)))

    def rho_at(self, k):
        for thr, rho in self.entries:
            if k <= thr:
                return rho
        return self.entries[-1][1]


@dataclass(frozen=True)
class MFRunConfig:
    theta0: PolicyParams
    schedule: StepSchedule = field(default_factory=StepSchedule.benchmark)
    k_max: int = 350
    gc: GradConfig = field(default_factory=GradConfig)
    eval_mode: str = "analytic"
    eval_episodes: int = 1

    def __post_init__(self):
        if int(self.k_max) < 0:
            raise ValueError("k_max must be >= 0")
        if self.eval_mode not in ("analytic", "none"):
            raise ValueError("eval_mode must be 'analytic' or 'none'")


def moving_average(x, window=10):
    """Trailing moving average; the first entries average what is available."""
    x = np.asarray(x, dtype=float)
    c = np.cumsum(np.insert(x, 0, 0.0))
    idx = np.arange(1, len(x) + 1)
    lo = np.maximum(idx - window, 0)
    return (c[idx] - c[lo]) / (idx - lo)


def _with_seed(gc, seed):
    sim = gc.sim.__class__(**{**gc.sim.__dict__, "seed": int(seed)})
    return GradConfig(**{**gc.__dict__, "sim": sim})


def model_free_pg(cfg, p, seed=None):
    """Run ``cfg.k_max`` model-free updates from ``cfg.theta0``.

    Row k of the returned trace describes Theta_k: the evaluation-episode
    cost ``jpop``, the estimate's norms and, with ``eval_mode="analytic"``,
    the exact J and its relative error. The step from Theta_k to Theta_{k+1}
    uses ``schedule.rho_at(k)``. On simulator overflow or loss of stability
    the trace is returned partial with ``error`` set.
    """
    gc = cfg.gc if seed is None else _with_seed(cfg.gc, seed)
    analytic = cfg.eval_mode == "analytic"
    sol = solve_optimal(p) if analytic else None
    pol = cfg.theta0
    if analytic:
        s, sh = stability_check(pol, p)
        if not s:
            raise StabilityError("theta0 not in S")
        if not sh:
            raise StabilityError("zeta0 not in S-hat")
    trace = GDTrace(J_opt=sol.J_opt if analytic else None)

    for k in range(int(cfg.k_max) + 1):
        rec = IterateRecord(k=k, theta=pol.theta.copy(), zeta=pol.zeta.copy())
        trace.records.append(rec)
        try:
            jp = [
                run_episode(pol, p, gc.sim, key=(streams.EVAL, k, e)).j_pop
                for e in range(int(cfg.eval_episodes))
            ]
            rec.jpop = float(np.mean(jp))
        except OverflowError as exc:
            trace.error = f"iteration {k}: {exc}"
            return trace
        exact = None
        if analytic:
            try:
                exact = cost(pol, p)
            except StabilityError as exc:
                rec.stable = False
                trace.error = f"iteration {k}: {exc}"
                return trace
            rec.J1, rec.J2, rec.J = exact.J1, exact.J2, exact.J
            rec.J_err_rel = (exact.J - sol.J_opt) / sol.J_opt
        if k == int(cfg.k_max):
            break
        try:
            est = estimate_gradient(pol, p, gc, key=(streams.ITERATION, k))
        except OverflowError as exc:
            trace.error = f"iteration {k}: {exc}"
            return trace
        rho = cfg.schedule.rho_at(k)
        rec.rho = rho
        rec.grad_norm_theta = float(np.linalg.norm(est.g_theta))
        rec.grad_norm_zeta = float(np.linalg.norm(est.g_zeta))
        if exact is not None:
            rec.inner_ghat_grad = float(
                np.sum(est.g_theta * exact.grad_theta) + np.sum(est.g_zeta * exact.grad_zeta)
            )
        pol = PolicyParams(pol.theta - rho * est.g_theta, pol.zeta - rho * est.g_zeta)
    return trace


def descent_fraction(trace, p):
    """Fraction of steps with <g_hat, grad J> >= 1/2 |grad J|^2."""
    hits = []
    for rec in trace.records:
        if rec.inner_ghat_grad is None:
            continue
        c = cost(PolicyParams(rec.theta, rec.zeta), p)
        g2 = float(np.sum(c.grad_theta**2) + np.sum(c.grad_zeta**2))
        hits.append(rec.inner_ghat_grad >= 0.5 * g2)
    return float(np.mean(hits)) if hits else float("nan")


def multi_seed_study(cfg, p, seeds: Sequence[int], eps=0.05):
    """Run ``model_free_pg`` per seed and count eps-successes.

    A seed succeeds when its final iterate satisfies
    J(Theta_kmax) - J* <= eps (J(Theta_0) - J*).
    """
    seeds = list(seeds)
    if not seeds:
        return dict(seeds=[], final_ratio=[], success=[], successes=0, fraction=float("nan"), traces=[])
    if cfg.eval_mode != "analytic":
        raise ValueError("multi_seed_study needs eval_mode='analytic'")
    s0, s0h = stability_check(cfg.theta0, p)
    if not (s0 and s0h):
        raise StabilityError("theta0 not in S" if not s0 else "zeta0 not in S-hat")
    sol = solve_optimal(p)
    j0 = cost(cfg.theta0, p).J
    gap0 = j0 - sol.J_opt
    ratios, ok, traces = [], [], []
    for s in seeds:
        tr = model_free_pg(cfg, p, seed=s)
        last = tr.last
        ratio = float("inf") if (tr.error or last.J is None) else (last.J - sol.J_opt) / gap0
        ratios.append(ratio)
        ok.append(bool(ratio <= eps))
        traces.append(tr)
    return dict(
        seeds=seeds,
        final_ratio=ratios,
        success=ok,
        successes=int(sum(ok)),
        fraction=sum(ok) / len(seeds),
        traces=traces,
    )
