"""Model-based costs, gradients, level-set constants and exact gradient descent.

For a gain theta the fluctuation part of the state is driven by the shifted
closed loop ``Xi = B - beta/2 I + D theta``. Two Lyapunov equations give the
discounted covariance ``Sigma_theta`` and the cost matrix ``K_theta``:

    Xi Sigma + Sigma Xi^T + M = 0,        Xi^T K + K Xi + Q + theta^T R theta = 0

and ``J1 = K_theta : M``, ``grad J1 = 2 (R theta + D^T K_theta) Sigma_theta``.
The mean part is identical with ``(Bhat, Qhat, Mhat, zeta)``.
"""

from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .linalg import StabilityError, is_stable, min_eig, solve_lyapunov
from .model import PolicyParams, solve_optimal, upsilon

__all__ = [
    "CostDecomposition",
    "LevelSetConstants",
    "IterateRecord",
    "GDTrace",
    "closed_loops",
    "stability_check",
    "cost",
    "gradient",
    "constants",
    "exact_gd",
]


@dataclass(frozen=True)
class CostDecomposition:
    J1: float
    J2: float
    upsilon: float
    J: float
    K_theta: np.ndarray
    Lambda_zeta: np.ndarray
    Sigma_theta: np.ndarray
    SigmaHat_zeta: np.ndarray
    E_theta: np.ndarray
    EHat_zeta: np.ndarray

    @property
    def grad_theta(self):
        return 2.0 * self.E_theta @ self.Sigma_theta

    @property
    def grad_zeta(self):
        return 2.0 * self.EHat_zeta @ self.SigmaHat_zeta


@dataclass
class IterateRecord:
    k: int
    theta: np.ndarray
    zeta: np.ndarray
    J1: Optional[float] = None
    J2: Optional[float] = None
    J: Optional[float] = None
    grad_norm_theta: Optional[float] = None
    grad_norm_zeta: Optional[float] = None
    stable: bool = True
    rho: Optional[float] = None
    jpop: Optional[float] = None
    J_err_rel: Optional[float] = None
    inner_ghat_grad: Optional[float] = None


@dataclass
class GDTrace:
    records: List[IterateRecord] = field(default_factory=list)
    J_opt: Optional[float] = None
    rho: Optional[float] = None
    converged: bool = False
    error: Optional[str] = None

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records], dtype=float)

    @property
    def last(self):
        return self.records[-1]


def closed_loops(pol, p):
    """Shifted closed-loop matrices for the fluctuation and mean dynamics."""
    half = 0.5 * p.beta * np.eye(p.d)
    return p.B - half + p.D @ pol.theta, p.Bhat - half + p.D @ pol.zeta


def _check_shapes(pol, p):
    if pol.theta.shape != (p.m, p.d):
        raise ValueError(f"gains must be {p.m}x{p.d}, got {pol.theta.shape}")


def stability_check(pol, p):
    """(theta in S, zeta in S-hat)."""
    _check_shapes(pol, p)
    xi, xi_hat = closed_loops(pol, p)
    return is_stable(xi), is_stable(xi_hat)


def _branch(gain, xi, q, r, dmat, mm):
    sigma = solve_lyapunov(xi, mm)
    kk = solve_lyapunov(xi.T, q + gain.T @ r @ gain)
    e = r @ gain + dmat.T @ kk
    return sigma, kk, e


def cost(pol, p):
    """Exact cost decomposition J = J1(theta) + J2(zeta) + upsilon(lambda).

    Raises StabilityError if either gain is not stabilizing.
    """
    _check_shapes(pol, p)
    xi, xi_hat = closed_loops(pol, p)
    if not is_stable(xi):
        raise StabilityError("theta not in S")
    if not is_stable(xi_hat):
        raise StabilityError("zeta not in S-hat")
    sig, kth, e = _branch(pol.theta, xi, p.Q, p.R, p.D, p.M)
    sig_h, lam_z, e_h = _branch(pol.zeta, xi_hat, p.Qhat, p.R, p.D, p.Mhat)
    j1 = float(np.sum(kth * p.M))
    j2 = float(np.sum(lam_z * p.Mhat))
    ups = float(upsilon(p))
    return CostDecomposition(
        J1=j1,
        J2=j2,
        upsilon=ups,
        J=j1 + j2 + ups,
        K_theta=kth,
        Lambda_zeta=lam_z,
        Sigma_theta=sig,
        SigmaHat_zeta=sig_h,
        E_theta=e,
        EHat_zeta=e_h,
    )


def gradient(pol, p):
    """(grad J1(theta), grad J2(zeta)) = (2 E_theta Sigma_theta, 2 Ehat_zeta Sigmahat_zeta)."""
    c = cost(pol, p)
    return c.grad_theta, c.grad_zeta


@dataclass(frozen=True)
class LevelSetConstants:
    """Bounds on the sublevel sets S(level), S-hat(level_hat).

    ``*_naive`` entries are the textbook formulas, which rely on
    Sigma_theta >= M; the unsuffixed bounds replace sigma_min(M) in those
    steps by the provable lower bound sigma_min(M) / (2 ||Xi||_2) and are the
    ones used for step sizes and in tests.
    """

    level: float
    level_hat: float
    Bd_K: float
    Bd_Sigma: float
    Bd_E: float
    Bd_theta: float
    Bd_E_naive: float
    Bd_theta_naive: float
    Bd_Lambda: float
    Bd_SigmaHat: float
    Bd_EHat: float
    Bd_zeta: float
    Bd_EHat_naive: float
    Bd_zeta_naive: float
    sigma_floor: float
    sigma_floor_hat: float
    Lip_Sigma: float
    Lip_K: float
    Lip_SigmaHat: float
    Lip_Lambda: float
    L: float
    L_hat: float
    L_check: float
    kappa1_naive: float
    kappa2_naive: float
    kappa1_corrected: float
    kappa2_corrected: float
    rho_max: float

    @property
    def kappa_tilde(self):
        """max(kappa1, kappa2, 2 / L_check) + 1/2 with the corrected constants."""
        return max(self.kappa1_corrected, self.kappa2_corrected, 2.0 / self.L_check) + 0.5

    def rate(self, rho):
        """Guaranteed per-step contraction factor of J - J* for step ``rho``."""
        return 1.0 - rho * (2.0 - rho * self.L_check) / (2.0 * self.kappa_tilde)


def _smin(a):
    return float(np.linalg.svd(np.atleast_2d(a), compute_uv=False)[-1])


def _branch_constants(level, j_opt, b, dmat, r, q, mm, beta, sigma_opt):
    s_m = _smin(mm)
    s_r = _smin(r)
    nr = float(np.linalg.norm(r, "fro"))
    nd = float(np.linalg.norm(dmat, "fro"))
    nd2 = float(np.linalg.norm(dmat, 2))
    shift_norm = float(np.linalg.norm(b, 2)) + 0.5 * beta

    bd_k = level / s_m
    bd_sigma = level / _smin(q)
    bd_e_naive = np.sqrt(nr * (level - j_opt) / s_m)
    bd_theta_naive = (bd_e_naive + nd * bd_k) / s_r
    # The policy-improvement gain -R^{-1} D^T K_theta has norm <= |D|_2 Bd_K / smin(R).
    improve_norm = nd2 * nd2 * bd_k / s_r
    floor_e = s_m / (2.0 * (shift_norm + improve_norm))
    bd_e = np.sqrt(nr * (level - j_opt) / floor_e)
    bd_theta = (bd_e + nd * bd_k) / s_r
    sigma_floor = s_m / (2.0 * (shift_norm + nd2 * bd_theta))

    lip_sigma = 2.0 * nd * bd_sigma**2 / s_m
    lip_k = 2.0 * (bd_e + nr * bd_theta) * bd_sigma / s_m
    lip = 2.0 * ((nr + nd * lip_k) * bd_sigma + bd_e * lip_sigma)
    sig_norm = float(np.linalg.norm(sigma_opt, "fro"))
    kappa_naive = sig_norm / (4.0 * s_r * s_m**2)
    kappa_corr = sig_norm / (4.0 * s_r * sigma_floor**2)
    return dict(
        Bd_K=bd_k,
        Bd_Sigma=bd_sigma,
        Bd_E=float(bd_e),
        Bd_theta=float(bd_theta),
        Bd_E_naive=float(bd_e_naive),
        Bd_theta_naive=float(bd_theta_naive),
        sigma_floor=float(sigma_floor),
        Lip_Sigma=lip_sigma,
        Lip_K=lip_k,
        L=lip,
        kappa_naive=kappa_naive,
        kappa_corrected=kappa_corr,
    )


def constants(level, level_hat, p, sol=None):
    """Level-set bounds, Lipschitz and gradient-domination constants.

    Requires ``level > J1*`` and ``level_hat > J2*``.
    """
    sol = sol or solve_optimal(p)
    if not level > sol.J1_opt:
        raise ValueError(f"level {level} must exceed J1* = {sol.J1_opt}")
    if not level_hat > sol.J2_opt:
        raise ValueError(f"level_hat {level_hat} must exceed J2* = {sol.J2_opt}")
    c_opt = cost(sol.policy, p)
    a = _branch_constants(level, sol.J1_opt, p.B, p.D, p.R, p.Q, p.M, p.beta, c_opt.Sigma_theta)
    h = _branch_constants(
        level_hat, sol.J2_opt, p.Bhat, p.D, p.R, p.Qhat, p.Mhat, p.beta, c_opt.SigmaHat_zeta
    )
    l_check = max(a["L"], h["L"])
    return LevelSetConstants(
        level=float(level),
        level_hat=float(level_hat),
        Bd_K=a["Bd_K"],
        Bd_Sigma=a["Bd_Sigma"],
        Bd_E=a["Bd_E"],
        Bd_theta=a["Bd_theta"],
        Bd_E_naive=a["Bd_E_naive"],
        Bd_theta_naive=a["Bd_theta_naive"],
        Bd_Lambda=h["Bd_K"],
        Bd_SigmaHat=h["Bd_Sigma"],
        Bd_EHat=h["Bd_E"],
        Bd_zeta=h["Bd_theta"],
        Bd_EHat_naive=h["Bd_E_naive"],
        Bd_zeta_naive=h["Bd_theta_naive"],
        sigma_floor=a["sigma_floor"],
        sigma_floor_hat=h["sigma_floor"],
        Lip_Sigma=a["Lip_Sigma"],
        Lip_K=a["Lip_K"],
        Lip_SigmaHat=h["Lip_Sigma"],
        Lip_Lambda=h["Lip_K"],
        L=a["L"],
        L_hat=h["L"],
        L_check=l_check,
        kappa1_naive=a["kappa_naive"],
        kappa2_naive=h["kappa_naive"],
        kappa1_corrected=a["kappa_corrected"],
        kappa2_corrected=h["kappa_corrected"],
        rho_max=2.0 / l_check,
    )


def _record(k, pol, c, rho, j_opt):
    return IterateRecord(
        k=k,
        theta=pol.theta.copy(),
        zeta=pol.zeta.copy(),
        J1=c.J1,
        J2=c.J2,
        J=c.J,
        grad_norm_theta=float(np.linalg.norm(c.grad_theta)),
        grad_norm_zeta=float(np.linalg.norm(c.grad_zeta)),
        stable=True,
        rho=rho,
        J_err_rel=(c.J - j_opt) / j_opt,
    )


def exact_gd(pol0, p, rho="auto", k_max=1000, eps_rel=None, level=None, level_hat=None):
    """Exact policy gradient descent with a constant step.

    Parameters
    ----------
    pol0 : PolicyParams
        Initial gains; must lie in S x S-hat.
    rho : float or "auto"
        Step size. ``"auto"`` uses 0.9 * 2 / L_check(level, level_hat), the
        levels defaulting to J1(theta0), J2(zeta0).
    k_max : int
        Maximum number of updates.
    eps_rel : float, optional
        Stop once (J - J*) / J* <= eps_rel.

    Raises
    ------
    StabilityError
        If Theta0 or any iterate leaves S x S-hat; the message carries the
        iterate index.
    """
    sol = solve_optimal(p)
    s0, s0h = stability_check(pol0, p)
    if not s0:
        raise StabilityError("theta0 not in S")
    if not s0h:
        raise StabilityError("zeta0 not in S-hat")
    c = cost(pol0, p)
    if rho == "auto":
        lv = level if level is not None else c.J1
        lvh = level_hat if level_hat is not None else c.J2
        # at the optimum itself the level set is degenerate; any small step is a no-op
        lv = max(lv, sol.J1_opt * (1 + 1e-9) + 1e-15)
        lvh = max(lvh, sol.J2_opt * (1 + 1e-9) + 1e-15)
        rho = 0.9 * constants(lv, lvh, p, sol).rho_max
    rho = float(rho)
    if rho < 0:
        raise ValueError("rho must be non-negative")

    trace = GDTrace(J_opt=sol.J_opt, rho=rho)
    pol = pol0
    trace.records.append(_record(0, pol, c, rho, sol.J_opt))
    for k in range(1, k_max + 1):
        if eps_rel is not None and trace.last.J_err_rel <= eps_rel:
            trace.converged = True
            break
        pol = PolicyParams(pol.theta - rho * c.grad_theta, pol.zeta - rho * c.grad_zeta)
        try:
            c = cost(pol, p)
        except StabilityError as exc:
            raise StabilityError(f"iterate {k} left S x S-hat ({exc}); step {rho} too large")
        trace.records.append(_record(k, pol, c, rho, sol.J_opt))
    if eps_rel is not None and trace.last.J_err_rel <= eps_rel:
        trace.converged = True
    return trace
