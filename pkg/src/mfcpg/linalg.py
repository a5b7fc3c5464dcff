"""Small dense matrix solvers: stability tests, continuous Lyapunov and
algebraic Riccati equations.

Everything here is sized for the low-dimensional problems of the package
(d, m up to about 20). The Lyapunov solver vectorizes the equation through
the Kronecker identity; the Riccati solver is a Newton-Kleinman iteration
built on top of it.
"""

import warnings

import numpy as np

__all__ = [
    "DimensionError",
    "StabilityError",
    "ConvergenceError",
    "RiccatiError",
    "as_matrix",
    "is_stable",
    "spectral_abscissa",
    "solve_lyapunov",
    "solve_riccati",
    "riccati_residual",
    "sym",
    "min_eig",
    "frob",
]

MARGINAL_TOL = 1e-12


class DimensionError(ValueError):
    """Raised on inconsistent matrix shapes."""


class StabilityError(ArithmeticError):
    """Raised when a matrix required to be stable is not."""


class ConvergenceError(ArithmeticError):
    """Raised when a solver misses its residual tolerance."""


class RiccatiError(ConvergenceError):
    """Raised when no stabilizing positive definite Riccati solution is found.

    Attributes
    ----------
    history : list of float
        Residual norm after each Newton step (may be empty).
    """

    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


def as_matrix(a, name="matrix"):
    """Return ``a`` as a finite 2-D float array (scalars become 1x1)."""
    arr = np.atleast_2d(np.asarray(a, dtype=float))
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} has non-finite entries")
    return arr


def _square(a, name):
    a = as_matrix(a, name)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def sym(a):
    return 0.5 * (a + a.T)


def frob(a):
    return float(np.linalg.norm(a, "fro"))


def min_eig(a):
    """Smallest eigenvalue of the symmetric part of ``a``."""
    return float(np.linalg.eigvalsh(sym(as_matrix(a)))[0])


def spectral_abscissa(a):
    """Largest real part among the eigenvalues of ``a``."""
    a = _square(a, "A")
    return float(np.max(np.linalg.eigvals(a).real))


def is_stable(a, margin=0.0):
    """True iff every eigenvalue of ``a`` has real part < -margin."""
    if margin < 0:
        raise ValueError("margin must be >= 0")
    alpha = spectral_abscissa(a)
    if margin == 0.0 and -MARGINAL_TOL <= alpha < 0:
        warnings.warn(
            f"marginally stable matrix: spectral abscissa {alpha:.3e}",
            RuntimeWarning,
            stacklevel=2,
        )
    return alpha < -margin


def solve_lyapunov(a, c, rtol=1e-10):
    r"""Solve the continuous Lyapunov equation :math:`A X + X A^T + C = 0`.

    Parameters
    ----------
    a : (d, d) array_like
        Stable matrix (all eigenvalues in the open left half plane).
    c : (d, d) array_like
        Symmetric right-hand side.
    rtol : float
        Residual tolerance, relative to ``1 + ||C||_F``.

    Returns
    -------
    x : (d, d) ndarray
        The unique (symmetric) solution.

    Raises
    ------
    StabilityError
        If ``a`` is not stable.
    ConvergenceError
        If the residual exceeds ``rtol * (1 + ||C||_F)``.
    """
    a = _square(a, "A")
    c = _square(c, "C")
    d = a.shape[0]
    if c.shape != a.shape:
        raise DimensionError(f"C shape {c.shape} does not match A shape {a.shape}")
    if not is_stable(a):
        raise StabilityError(
            f"Lyapunov operator matrix is not stable "
            f"(spectral abscissa {spectral_abscissa(a):.6g})"
        )
    eye = np.eye(d)
    # Row-major vec: vec(A X) = (A kron I) vec(X), vec(X A^T) = (I kron A) vec(X).
    op = np.kron(a, eye) + np.kron(eye, a)
    x = np.linalg.solve(op, -c.reshape(-1)).reshape(d, d)
    x = sym(x)
    res = frob(a @ x + x @ a.T + c)
    if res > rtol * (1.0 + frob(c)):
        # one step of iterative refinement before giving up
        dx = np.linalg.solve(op, -(a @ x + x @ a.T + c).reshape(-1)).reshape(d, d)
        x = sym(x + dx)
        res = frob(a @ x + x @ a.T + c)
        if res > rtol * (1.0 + frob(c)):
            raise ConvergenceError(f"Lyapunov residual {res:.3e} above tolerance")
    return x


def riccati_residual(k, a, dmat, r, q, beta):
    """Riccati residual -beta K + K A + A^T K + Q - K D R^{-1} D^T K."""
    g = dmat @ np.linalg.solve(r, dmat.T)
    return -beta * k + k @ a + a.T @ k + q - k @ g @ k


def _initial_gain(shifted, dmat):
    """A gain F with ``shifted + D F`` stable.

    First try F = -c D^T with c doubling from 1; if that family never
    stabilizes, fall back to Bass's construction F = -D^T Z^{-1} with
    -(A + w I) Z - Z (A + w I)^T + 2 D D^T = 0, which places the closed loop
    left of -w whenever (A, D) is controllable.
    """
    m = dmat.shape[1]
    f = np.zeros((m, shifted.shape[0]))
    if is_stable(shifted):
        return f
    c = 1.0
    while c <= 2.0**30:
        f = -c * dmat.T
        if is_stable(shifted + dmat @ f):
            return f
        c *= 2.0
    w = float(np.linalg.norm(shifted, 2)) + 1.0
    try:
        z = solve_lyapunov(-(shifted + w * np.eye(shifted.shape[0])), 2.0 * dmat @ dmat.T)
    except (StabilityError, ConvergenceError):
        return None
    if min_eig(z) <= 0:
        return None
    f = -np.linalg.solve(z, dmat).T
    return f if is_stable(shifted + dmat @ f) else None


def _polish(k, res, shifted, a, dmat, r, q, beta, history, steps=4):
    # a few extra Newton steps after convergence; keep the best iterate
    best, best_res = k, res
    for _ in range(steps):
        if best_res == 0.0:
            break
        f = -np.linalg.solve(r, dmat.T @ k)
        try:
            k = sym(solve_lyapunov((shifted + dmat @ f).T, q + f.T @ r @ f))
        except (StabilityError, ConvergenceError):
            break
        res = frob(riccati_residual(k, a, dmat, r, q, beta))
        history.append(res)
        if res < best_res:
            best, best_res = k, res
    return best, best_res


def solve_riccati(a, dmat, r, q, beta, tol=1e-10, max_iter=200):
    r"""Stabilizing solution of the discounted algebraic Riccati equation

    .. math:: -\beta K + K A + A^T K + Q - K D R^{-1} D^T K = 0

    by Newton-Kleinman iteration. Each step solves one Lyapunov equation for
    the cost of the current gain and then improves the gain greedily.

    Returns
    -------
    k : (d, d) ndarray
        Symmetric positive definite solution; the closed loop
        ``A - beta/2 I - D R^{-1} D^T K`` is stable.

    Raises
    ------
    RiccatiError
        No stabilizing initial gain, loss of stability, non-positive-definite
        limit or residual above ``tol * (1 + ||Q||_F)`` after ``max_iter``
        steps. The residual history is attached.
    """
    a = _square(a, "A")
    q = _square(q, "Q")
    r = _square(r, "R")
    dmat = as_matrix(dmat, "D")
    d = a.shape[0]
    if dmat.shape[0] != d or r.shape[0] != dmat.shape[1] or q.shape != a.shape:
        raise DimensionError(
            f"inconsistent shapes A{a.shape} D{dmat.shape} R{r.shape} Q{q.shape}"
        )
    if beta <= 0:
        raise ValueError("beta must be positive")
    shifted = a - 0.5 * beta * np.eye(d)
    target = tol * (1.0 + frob(q))
    history = []

    f = _initial_gain(shifted, dmat)
    if f is None:
        raise RiccatiError("no stabilizing initial gain found", history)
    k = None
    for _ in range(max_iter):
        closed = shifted + dmat @ f
        try:
            k = solve_lyapunov(closed.T, q + f.T @ r @ f)
        except StabilityError as exc:
            raise RiccatiError(f"Newton iterate lost stability: {exc}", history)
        res = frob(riccati_residual(k, a, dmat, r, q, beta))
        history.append(res)
        if res < target:
            break
        f = -np.linalg.solve(r, dmat.T @ k)
    else:
        raise RiccatiError(
            f"Newton-Kleinman did not reach residual {target:.1e} "
            f"in {max_iter} iterations (last {history[-1]:.3e})",
            history,
        )
    k, res = _polish(k, res, shifted, a, dmat, r, q, beta, history)
    if min_eig(k) <= 0:
        raise RiccatiError("Riccati solution is not positive definite", history)
    gain = -np.linalg.solve(r, dmat.T @ k)
    if not is_stable(shifted + dmat @ gain):
        raise RiccatiError("Riccati closed loop is not stable", history)
    return k
