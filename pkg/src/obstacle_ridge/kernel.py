"""Green functions of transient Dirichlet spaces and their level-set geometry.

Only the free-space Euclidean kernel

    G(x, y) = c(d) * |x - y|**(2 - d),   c(d) = Gamma(d/2 - 1) / (2 pi**(d/2))

is provided concretely. Other spaces plug in by subclassing
:class:`GreenKernel`; radial kernels only need :meth:`GreenKernel.profile`,
and the level radius then falls back to bracketing + Brent root finding.

All evaluators broadcast over leading axes: points have shape ``(..., d)``.
"""
from __future__ import annotations

import abc
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import DimensionError, ParamError, ShapeError

__all__ = [
    "SpaceParams",
    "GreenKernel",
    "EuclideanGreenKernel",
    "green_constant",
    "green_eval",
    "level_radius",
    "truncated_eval",
    "euclidean_kernel",
]


def green_constant(d: int) -> float:
    """Return c(d) = Gamma(d/2 - 1) / (2 pi^(d/2)) for the Euclidean kernel."""
    if int(d) != d or d < 3:
        raise DimensionError(f"dimension must be an integer >= 3, got {d}")
    d = int(d)
    if d < 300:
        return float(special.gamma(d / 2.0 - 1.0) / (2.0 * math.pi ** (d / 2.0)))
    # direct form overflows; the log form loses a few ulps only
    return float(math.exp(special.gammaln(d / 2.0 - 1.0) - math.log(2.0) - (d / 2.0) * math.log(math.pi)))


@dataclass(frozen=True)
class SpaceParams:
    """Constants of the ambient space: volume exponent, walk exponent, c(d)."""

    dimension: int
    walk_exponent: float = 2.0
    green_constant: float = float("nan")

    def __post_init__(self):
        if int(self.dimension) != self.dimension or self.dimension < 3:
            raise DimensionError(f"dimension must be an integer >= 3, got {self.dimension}")
        if math.isnan(self.green_constant):
            object.__setattr__(self, "green_constant", green_constant(self.dimension))
        if not self.green_constant > 0:
            raise ParamError("green_constant must be positive")

    @property
    def volume_exponent(self) -> float:
        return float(self.dimension)


class GreenKernel(abc.ABC):
    """Interface for the Green function G(x, y) of a transient Dirichlet form.

    Subclasses describing radial kernels implement :meth:`profile`; a kernel
    that is not a function of distance overrides :meth:`eval` and
    :meth:`level_radius` directly.
    """

    params: SpaceParams

    @property
    def dimension(self) -> int:
        return self.params.dimension

    @abc.abstractmethod
    def profile(self, r):
        """G as a function of distance, ``r >= 0``; must return inf at 0."""

    def _check(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        d = self.dimension
        if x.ndim == 0 or y.ndim == 0 or x.shape[-1] != d or y.shape[-1] != d:
            raise ShapeError(
                f"points must have trailing dimension {d}, got shapes {x.shape} and {y.shape}"
            )
        return x, y

    def distance(self, x, y):
        x, y = self._check(x, y)
        return np.sqrt(np.sum((x - y) ** 2, axis=-1))

    def eval(self, x, y):
        return self.profile(self.distance(x, y))

    def level_radius(self, gamma: float) -> float:
        """Radius R with profile(R) = gamma, by bracketing and Brent's method."""
        gamma = _check_gamma(gamma)
        f = lambda r: math.log(float(self.profile(r))) - math.log(gamma)
        lo, hi = 1.0, 1.0
        while f(lo) <= 0:
            lo *= 0.5
        while f(hi) >= 0:
            hi *= 2.0
        return float(optimize.brentq(f, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500))


class EuclideanGreenKernel(GreenKernel):
    """G(x, y) = c(d) |x - y|^(2-d) on R^d, d >= 3, with closed-form level sets."""

    def __init__(self, d: int):
        self.params = SpaceParams(dimension=d)

    def __repr__(self):
        return f"EuclideanGreenKernel(d={self.dimension})"

    def profile(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            out = self.params.green_constant * r ** (2.0 - self.dimension)
        return out if out.ndim else float(out)

    def level_radius(self, gamma: float) -> float:
        gamma = _check_gamma(gamma)
        return float((gamma / self.params.green_constant) ** (-1.0 / (self.dimension - 2)))


def euclidean_kernel(d: int) -> EuclideanGreenKernel:
    return EuclideanGreenKernel(d)


def _check_gamma(gamma) -> float:
    gamma = float(gamma)
    if not (gamma > 0 and math.isfinite(gamma)):
        raise ParamError(f"threshold gamma must be positive and finite, got {gamma}")
    return gamma


def green_eval(k: GreenKernel, x, y):
    """G(x, y); ``inf`` on the diagonal x == y."""
    return k.eval(x, y)


def level_radius(k: GreenKernel, gamma: float) -> float:
    """Radius of the obstacle {y : G(x, y) >= gamma}."""
    return k.level_radius(gamma)


def truncated_eval(k: GreenKernel, x, y, gamma: float):
    """min(G(x, y), gamma), finite everywhere including the diagonal."""
    gamma = _check_gamma(gamma)
    out = np.minimum(k.eval(x, y), gamma)
    return out if np.ndim(out) else float(out)
