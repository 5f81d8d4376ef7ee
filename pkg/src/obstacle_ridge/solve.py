"""Representer-coefficient solvers: ridge and norm-constrained ERM.

The ridge system is (G_n + n*lam*I) c = y. Callers pass ``n_lambda`` (the
product n*lam) explicitly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from .errors import ConvergenceError, FactorizationError, ParamError, ShapeError, SingularSystemError
from .gram import GramMatrix, stable_cholesky

__all__ = [
    "RidgeSolution",
    "ErmSolution",
    "ridge_solve",
    "h_norm_sq",
    "erm_solve",
    "RESIDUAL_RTOL",
    "LAMBDA_FLOOR",
]

RESIDUAL_RTOL = 1e-8
LAMBDA_FLOOR = 1e-14
ERM_RTOL = 1e-6
ERM_MAX_ITER = 200


@dataclass(frozen=True)
class RidgeSolution:
    c: np.ndarray
    applied_jitter: float
    residual_norm: float


@dataclass(frozen=True)
class ErmSolution:
    c: np.ndarray
    lambda_active: float
    norm_sq: float
    trace: list = field(default_factory=list, repr=False)  # (lam, c'Gc) per evaluation

    def __iter__(self):
        # allows ``c, lam = erm_solve(...)``
        return iter((self.c, self.lambda_active))


def _check_system(gm: GramMatrix, y):
    y = np.asarray(y, dtype=float)
    if y.shape != (gm.size,):
        raise ShapeError(f"y must have shape ({gm.size},), got {y.shape}")
    return y


def _factor(A: np.ndarray, scale: float):
    L, tau = stable_cholesky(A, scale)
    return (L, True), tau


def ridge_solve(gm: GramMatrix, y, n_lambda: float, max_refine: int = 30) -> RidgeSolution:
    """Solve (G + n_lambda I) c = y by Cholesky with jitter fallback and iterative refinement."""
    y = _check_system(gm, y)
    n_lambda = float(n_lambda)
    if not n_lambda >= 0:
        raise ParamError(f"n_lambda must be >= 0, got {n_lambda}")
    A = np.asarray(gm.entries, dtype=float) + n_lambda * np.eye(gm.size)
    factor, tau = _factor(A, gm.gamma)
    c = linalg.cho_solve(factor, y, check_finite=False)
    target = RESIDUAL_RTOL * np.linalg.norm(y)
    res = np.linalg.norm(y - A @ c)
    for _ in range(max_refine):
        if res <= target:
            break
        c_new = c + linalg.cho_solve(factor, y - A @ c, check_finite=False)
        res_new = np.linalg.norm(y - A @ c_new)
        if not res_new < res:
            break
        c, res = c_new, res_new
    if res > target:
        raise SingularSystemError(
            f"residual {res:.3e} exceeds {RESIDUAL_RTOL:g}*|y| (n_lambda={n_lambda:g}, jitter={tau:g})"
        )
    return RidgeSolution(c=c, applied_jitter=tau, residual_norm=float(res))


def h_norm_sq(gm: GramMatrix, c) -> float:
    """Energy of sum_i c_i (G(x_i, .) ^ gamma), i.e. c' G c clamped at zero."""
    c = np.asarray(c, dtype=float)
    if c.shape != (gm.size,):
        raise ShapeError(f"c must have shape ({gm.size},), got {c.shape}")
    return max(float(c @ (gm.entries @ c)), 0.0)


def erm_solve(gm: GramMatrix, y, M: float) -> ErmSolution:
    """Minimize (1/n)|y - G c|^2 subject to c' G c <= M^2.

    The KKT path is the ridge path c(lam) = (G + n lam I)^-1 y, along which
    c' G c decreases in lam. One eigendecomposition of G makes each path
    evaluation O(n); lam is found by bisection in log-space.
    """
    y = _check_system(gm, y)
    M = float(M)
    if not M > 0:
        raise ParamError(f"norm bound M must be positive, got {M}")
    n = gm.size
    A = np.asarray(gm.entries, dtype=float)
    if not np.all(np.isfinite(A)):
        raise FactorizationError("Gram matrix has non-finite entries")
    w, Q = linalg.eigh(A, check_finite=False)
    w = np.maximum(w, 0.0)
    b = Q.T @ y
    M2 = M * M
    trace = []

    def norm_sq(lam):
        val = float(np.sum(w * (b / (w + n * lam)) ** 2))
        trace.append((lam, val))
        return val

    def coef(lam):
        return Q @ (b / (w + n * lam))

    base = norm_sq(LAMBDA_FLOOR)
    if base <= M2:
        return ErmSolution(coef(LAMBDA_FLOOR), 0.0, base, trace)

    hi = 1.0
    while norm_sq(hi) >= M2:
        hi *= 2.0
        if hi > 1e300:
            raise ConvergenceError("could not bracket the norm constraint")
    lo = LAMBDA_FLOOR
    for _ in range(ERM_MAX_ITER):
        mid = np.sqrt(lo * hi)
        val = norm_sq(mid)
        if abs(val - M2) <= ERM_RTOL * M2:
            return ErmSolution(coef(mid), float(mid), val, trace)
        if val > M2:
            lo = mid
        else:
            hi = mid
    raise ConvergenceError(f"ERM bisection did not reach {ERM_RTOL:g} relative accuracy in {ERM_MAX_ITER} steps")
