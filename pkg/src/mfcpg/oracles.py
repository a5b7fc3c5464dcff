"""Independent checks for the solvers and the simulator.

None of these share code paths with the quantities they verify: gradients
are checked by finite differences of the cost, Lyapunov solutions by direct
quadrature of the integral representation, scalar Riccati solutions by the
quadratic formula and costs by Monte Carlo.
"""

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad_vec
from scipy.linalg import expm

from . import streams
from .exact_pg import cost
from .linalg import StabilityError, is_stable
from .model import PolicyParams
from .popsim import simulate_batch

__all__ = [
    "fd_gradient",
    "ScalarClosedForms",
    "scalar_closed_forms",
    "lyapunov_quadrature",
    "mc_cost",
    "run_checks",
]


def fd_gradient(pol, p, h=1e-6):
    """Central finite differences of J1 in theta and J2 in zeta, entrywise."""
    gt = np.zeros_like(pol.theta)
    gz = np.zeros_like(pol.zeta)
    for idx in np.ndindex(pol.theta.shape):
        e = np.zeros_like(pol.theta)
        e[idx] = h
        plus = cost(PolicyParams(pol.theta + e, pol.zeta + e), p)
        minus = cost(PolicyParams(pol.theta - e, pol.zeta - e), p)
        gt[idx] = (plus.J1 - minus.J1) / (2 * h)
        gz[idx] = (plus.J2 - minus.J2) / (2 * h)
    return gt, gz


@dataclass(frozen=True)
class ScalarClosedForms:
    """Explicit formulas for d = m = 1."""

    K: float
    Lambda: float
    theta_opt: float
    zeta_opt: float
    M: float
    Mhat: float
    B: float
    Bhat: float
    D: float
    Q: float
    Qhat: float
    R: float
    beta: float

    def _gap(self, b, g):
        gap = self.beta - 2.0 * (b + self.D * g)
        if not gap > 0:
            raise StabilityError(f"gain {g} is not stabilizing (beta - 2(B + D g) = {gap})")
        return gap

    def Sigma_theta(self, theta):
        return self.M / self._gap(self.B, theta)

    def K_theta(self, theta):
        return (self.Q + self.R * theta**2) / self._gap(self.B, theta)

    def SigmaHat_zeta(self, zeta):
        return self.Mhat / self._gap(self.Bhat, zeta)

    def Lambda_zeta(self, zeta):
        return (self.Qhat + self.R * zeta**2) / self._gap(self.Bhat, zeta)

    def J1(self, theta):
        return self.K_theta(theta) * self.M

    def J2(self, zeta):
        return self.Lambda_zeta(zeta) * self.Mhat


def _positive_root(a, b, c):
    # a x^2 + b x + c = 0 with a > 0, c < 0; stable form of the positive root
    disc = np.sqrt(b * b - 4 * a * c)
    return (2 * c) / (-b - disc) if b > 0 else (-b + disc) / (2 * a)


def scalar_closed_forms(p):
    """Quadratic-formula Riccati solutions and scalar Lyapunov formulas."""
    if p.d != 1 or p.m != 1:
        raise ValueError("scalar_closed_forms needs d = m = 1")
    B, Bh, D, R = p.B[0, 0], p.Bhat[0, 0], p.D[0, 0], p.R[0, 0]
    Q, Qh, beta = p.Q[0, 0], p.Qhat[0, 0], p.beta
    a = D * D / R
    # (D^2/R) K^2 + (beta - 2B) K - Q = 0
    K = _positive_root(a, beta - 2 * B, -Q) if a > 0 else Q / (beta - 2 * B)
    Lam = _positive_root(a, beta - 2 * Bh, -Qh) if a > 0 else Qh / (beta - 2 * Bh)
    return ScalarClosedForms(
        K=float(K),
        Lambda=float(Lam),
        theta_opt=float(-D * K / R),
        zeta_opt=float(-D * Lam / R),
        M=float(p.M[0, 0]),
        Mhat=float(p.Mhat[0, 0]),
        B=float(B),
        Bhat=float(Bh),
        D=float(D),
        Q=float(Q),
        Qhat=float(Qh),
        R=float(R),
        beta=float(beta),
    )


def lyapunov_quadrature(a, c, tail=1e-14, epsabs=1e-12, epsrel=1e-10):
    """Integral of e^{At} C e^{A^T t} over [0, t_end], where t_end is the
    first time with ||e^{At}||_2^2 < ``tail``.
    """
    a = np.asarray(a, dtype=float)
    c = np.asarray(c, dtype=float)
    if not is_stable(a):
        raise StabilityError("quadrature needs a stable matrix")
    t_end = 1.0
    while np.linalg.norm(expm(a * t_end), 2) ** 2 >= tail:
        t_end *= 2.0
    # split so the integrand decays by a bounded factor on each piece
    alpha = -max(np.linalg.eigvals(a).real)
    pieces = max(1, int(np.ceil(t_end * alpha / 4)))
    edges = np.linspace(0.0, t_end, pieces + 1)

    def f(t):
        e = expm(a * t)
        return e @ c @ e.T

    total = np.zeros_like(c)
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = quad_vec(f, lo, hi, epsabs=epsabs, epsrel=epsrel)
        total += val
    return 0.5 * (total + total.T)


def mc_cost(pol, p, c, episodes, seed=None):
    """Monte Carlo mean of j_pop and its standard error (None for 1 episode)."""
    episodes = int(episodes)
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if seed is not None:
        c = c.__class__(**{**c.__dict__, "seed": int(seed)})
    th = np.repeat(pol.theta[None], episodes, axis=0)
    ze = np.repeat(pol.zeta[None], episodes, axis=0)
    keys = [(streams.EPISODE, i) for i in range(episodes)]
    j = np.array([r.j_pop for r in simulate_batch(th, ze, p, c, keys)])
    mean = float(j.mean())
    se = float(j.std(ddof=1) / np.sqrt(episodes)) if episodes > 1 else None
    return mean, se


def _random_stable(rng, d, shift=0.5):
    a = rng.standard_normal((d, d))
    return a - (max(np.linalg.eigvals(a).real) + shift + rng.random()) * np.eye(d)


def run_checks(p, sim=None, mc_episodes=50, seed=0):
    """Oracle suite as a list of (name, passed, detail) tuples."""
    from .exact_pg import gradient
    from .linalg import solve_lyapunov, riccati_residual, solve_riccati
    from .model import solve_optimal
    from .popsim import SimConfig

    out = []
    sol = solve_optimal(p)
    rng = np.random.default_rng(seed)

    # Riccati consistency and first-order optimality
    c_opt = cost(sol.policy, p)
    err = max(np.max(np.abs(c_opt.K_theta - sol.K)), np.max(np.abs(c_opt.Lambda_zeta - sol.Lambda)))
    out.append(("riccati consistency K_theta* = K", err <= 1e-8, f"max diff {err:.3e}"))
    gn = max(np.linalg.norm(c_opt.grad_theta), np.linalg.norm(c_opt.grad_zeta))
    out.append(("zero gradient at optimum", gn <= 1e-8, f"norm {gn:.3e}"))
    res = np.linalg.norm(riccati_residual(sol.K, p.B, p.D, p.R, p.Q, p.beta))
    out.append(("riccati residual", res <= 1e-9, f"{res:.3e}"))

    if p.d == 1 and p.m == 1:
        sc = scalar_closed_forms(p)
        diff = max(abs(sc.K - sol.K[0, 0]), abs(sc.Lambda - sol.Lambda[0, 0]))
        out.append(("scalar closed forms", diff <= 1e-12, f"max diff {diff:.3e}"))

    # gradient vs finite differences near the optimum
    pol = PolicyParams(
        sol.theta_opt + 0.3 * rng.standard_normal(sol.theta_opt.shape),
        sol.zeta_opt + 0.3 * rng.standard_normal(sol.zeta_opt.shape),
    )
    try:
        ga, gza = gradient(pol, p)
        gf, gzf = fd_gradient(pol, p)
        rel = max(
            np.max(np.abs(ga - gf)) / max(np.max(np.abs(ga)), 1e-12),
            np.max(np.abs(gza - gzf)) / max(np.max(np.abs(gza)), 1e-12),
        )
        out.append(("gradient vs finite differences", rel <= 1e-5, f"rel err {rel:.3e}"))
    except StabilityError as exc:
        out.append(("gradient vs finite differences", False, str(exc)))

    # Lyapunov against quadrature
    a = _random_stable(rng, p.d)
    cm = rng.standard_normal((p.d, p.d))
    cm = cm @ cm.T
    diff = np.max(np.abs(solve_lyapunov(a, cm) - lyapunov_quadrature(a, cm)))
    out.append(("lyapunov vs quadrature", diff <= 1e-6, f"max diff {diff:.3e}"))

    # Riccati on a random instance
    d, m = p.d, p.m
    q = rng.standard_normal((d, d))
    r = rng.standard_normal((m, m))
    kk = solve_riccati(rng.standard_normal((d, d)), rng.standard_normal((d, m)),
                       r @ r.T + np.eye(m), q @ q.T + np.eye(d), 1.0)
    out.append(("riccati random instance", np.all(np.linalg.eigvalsh(kk) > 0), "K positive definite"))

    # Monte Carlo cost at the optimum
    sim = sim or SimConfig(seed=seed)
    mean, se = mc_cost(sol.policy, p, sim, mc_episodes)
    gap = abs(mean - sol.J_opt)
    budget = 3 * (se or 0.0) + 0.01
    out.append(("monte carlo cost at optimum", gap <= budget, f"|{mean:.6g} - {sol.J_opt:.6g}| vs {budget:.3g}"))
    return out
