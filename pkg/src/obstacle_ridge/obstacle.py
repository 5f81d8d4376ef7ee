"""Ball obstacles, equilibrium potentials/measures and capacitary means.

For a threshold ``gamma`` the obstacle around ``x`` is the super-level set
``{y : G(x, y) >= gamma}``, a ball of radius ``R = level_radius(gamma)`` for
radial kernels. Its equilibrium measure is uniform on the sphere
``dB(x, R)`` with total mass ``1/gamma`` (the capacity), so the capacitary
mean of ``h`` is the plain spherical average of ``h`` over ``dB(x, R)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import ParamError, ShapeError
from .kernel import GreenKernel, _check_gamma

__all__ = [
    "Obstacle",
    "EquilibriumMeasure",
    "SphereQuadrature",
    "sphere_quadrature",
    "make_obstacle",
    "equilibrium_potential",
    "capacitary_mean",
    "radial_sphere_mean",
    "axial_order",
]

DETERMINISTIC = "deterministic"
MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class EquilibriumMeasure:
    """Uniform measure on dB(center, radius) with total mass 1/gamma."""

    center: np.ndarray
    radius: float
    total_mass: float

    @property
    def capacity(self) -> float:
        return self.total_mass


@dataclass(frozen=True)
class Obstacle:
    center: np.ndarray
    threshold: float
    radius: float

    @property
    def measure(self) -> EquilibriumMeasure:
        return EquilibriumMeasure(self.center, self.radius, 1.0 / self.threshold)

    def contains(self, y) -> np.ndarray:
        """Closed-ball membership, ``|y - center| <= radius``."""
        y = np.asarray(y, dtype=float)
        return np.linalg.norm(y - self.center, axis=-1) <= self.radius


@dataclass(frozen=True)
class SphereQuadrature:
    """Weighted node set on the unit sphere S^(d-1); weights sum to one."""

    mode: str
    dimension: int
    level: int
    nodes: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    seed: int | None = None

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def descriptor(self) -> str:
        s = f"{self.mode}:d={self.dimension}:level={self.level}"
        return s + (f":seed={self.seed}" if self.mode == MONTE_CARLO else "")


def _product_shape(n: int) -> tuple[int, int]:
    # maximise the exactness degree min(2*n_polar - 1, n_azimuth - 1)
    best = None
    for n_polar in range(1, n + 1):
        if n % n_polar:
            continue
        n_az = n // n_polar
        deg = min(2 * n_polar - 1, n_az - 1)
        if best is None or deg > best[0]:
            best = (deg, n_polar, n_az)
    return best[1], best[2]


def _gauss_product_rule(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre in cos(theta) times the trapezoid rule in phi on S^2."""
    n_polar, n_az = _product_shape(n)
    t, w = np.polynomial.legendre.leggauss(n_polar)
    phi = (np.arange(n_az) + 0.5) * (2.0 * np.pi / n_az)
    T, P = np.meshgrid(t, phi, indexing="ij")
    s = np.sqrt(1.0 - T**2)
    nodes = np.stack([s * np.cos(P), s * np.sin(P), T], axis=-1).reshape(-1, 3)
    weights = np.repeat(w / 2.0, n_az) / n_az
    return nodes, weights


def sphere_quadrature(d: int, level: int = 3, seed: int = 0, mode: str | None = None) -> SphereQuadrature:
    """Build the node set used for spherical averages.

    d = 3 defaults to a deterministic Gauss product rule with
    ``100 * 4**(level-1)`` nodes; d > 3 defaults to ``1000 * 4**(level-1)``
    uniform directions drawn from normalized Gaussians seeded by ``seed``.
    """
    if int(level) != level or level < 1:
        raise ParamError(f"quadrature level must be an integer >= 1, got {level}")
    if int(d) != d or d < 2:
        raise ParamError(f"bad dimension {d}")
    level, d = int(level), int(d)
    if mode is None:
        mode = DETERMINISTIC if d == 3 else MONTE_CARLO
    if mode == DETERMINISTIC:
        if d != 3:
            raise ParamError("deterministic sphere quadrature is only available for d = 3")
        nodes, weights = _gauss_product_rule(100 * 4 ** (level - 1))
        seed = None
    elif mode == MONTE_CARLO:
        n = 1000 * 4 ** (level - 1)
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
        g = rng.standard_normal((n, d))
        nodes = g / np.linalg.norm(g, axis=1, keepdims=True)
        weights = np.full(n, 1.0 / n)
        seed = int(seed)
    else:
        raise ParamError(f"unknown quadrature mode {mode!r}")
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return SphereQuadrature(mode, d, level, nodes, weights, seed)


def make_obstacle(k: GreenKernel, x, gamma: float) -> Obstacle:
    gamma = _check_gamma(gamma)
    x = np.asarray(x, dtype=float)
    if x.shape != (k.dimension,):
        raise ShapeError(f"center must have shape ({k.dimension},), got {x.shape}")
    x = x.copy()
    x.setflags(write=False)
    return Obstacle(center=x, threshold=gamma, radius=k.level_radius(gamma))


def equilibrium_potential(k: GreenKernel, o: Obstacle, y):
    """e_x(y) = min(G(x, y), gamma) / gamma, equal to 1 on the closed obstacle."""
    out = np.minimum(k.eval(o.center, y), o.threshold) / o.threshold
    return out if np.ndim(out) else float(out)


def capacitary_mean(k: GreenKernel, o: Obstacle, q: SphereQuadrature, h) -> float:
    """Spherical average of ``h`` over dB(center, R) under the quadrature ``q``.

    ``h`` receives an ``(m, d)`` array of points; a callable that only takes a
    single point is applied row by row.
    """
    if q.dimension != k.dimension:
        raise ShapeError(f"quadrature is for d={q.dimension}, kernel has d={k.dimension}")
    pts = o.center + o.radius * q.nodes
    try:
        vals = np.asarray(h(pts), dtype=float)
    except (TypeError, ValueError):
        vals = None
    if vals is None or vals.shape != (len(pts),):
        vals = np.array([float(h(p)) for p in pts])
    return float(q.weights @ vals)


def axial_order(q: SphereQuadrature | None) -> int:
    """Number of 1-D Gauss nodes used by :func:`radial_sphere_mean` for ``q``."""
    level = 3 if q is None else q.level
    return min(32 * level, 256)


@lru_cache(maxsize=64)
def _gl(order: int):
    x, w = np.polynomial.legendre.leggauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def radial_sphere_mean(k: GreenKernel, dist, sphere_radius: float, gamma: float, order: int = 96):
    """Average of min(G(z, .), gamma) over a sphere of radius ``sphere_radius``
    whose center lies at distance ``dist`` from ``z``.

    The integrand depends only on the polar angle theta about the axis
    through ``z``, so the (d-1)-sphere average collapses to

        int_0^pi f(theta) sin(theta)^(d-2) dtheta / B(1/2, (d-1)/2).

    The truncation is active on a polar cap; that cap is integrated in closed
    form (regularized incomplete beta), and the smooth remainder by
    Gauss-Legendre in theta, so the kink never sits inside a Gauss panel.
    Requires a radial kernel. Vectorized over ``dist``.
    """
    gamma = _check_gamma(gamma)
    d = k.dimension
    a = 0.5 * (d - 3)
    D = np.atleast_1d(np.asarray(dist, dtype=float))
    R = float(sphere_radius)
    rho = k.level_radius(gamma)  # truncation radius around z
    out = np.empty_like(D)

    small = D <= 1e-300
    out[small] = min(float(k.profile(R)), gamma) if R > 0 else gamma
    Dm = D[~small]
    if R == 0:
        out[~small] = np.minimum(k.profile(Dm), gamma)
        return out if np.ndim(dist) else float(out[0])

    # truncation active for cos(theta) > t_star
    t_star = (Dm**2 + R**2 - rho**2) / (2.0 * Dm * R)
    t_star = np.clip(t_star, -1.0, 1.0)
    theta_star = np.arccos(t_star)
    u_star = 0.5 * (1.0 + t_star)
    cap_frac = 1.0 - special.betainc(a + 1.0, a + 1.0, u_star)

    x, w = _gl(order)
    half = 0.5 * (np.pi - theta_star)[:, None]
    theta = theta_star[:, None] + half * (x[None, :] + 1.0)
    s = np.sqrt(np.maximum(Dm[:, None] ** 2 + R**2 - 2.0 * Dm[:, None] * R * np.cos(theta), 0.0))
    f = np.minimum(k.profile(s), gamma)
    jac = np.sin(theta) ** (d - 2) if d > 2 else 1.0
    norm = special.beta(0.5, 0.5 * (d - 1))
    smooth = (half[:, 0] * np.sum(w[None, :] * f * jac, axis=1)) / norm
    out[~small] = smooth + gamma * cap_frac
    return out if np.ndim(dist) else float(out[0])
