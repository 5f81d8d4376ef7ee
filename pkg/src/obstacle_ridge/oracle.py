"""Independent Monte-Carlo and harmonicity oracles, plus capacitary Poincare checks.

Monte-Carlo draws are generated in fixed-size blocks, block ``b`` from the
stream ``SeedSequence(seed, spawn_key=(b,))``, and concatenated in block
order before a single numpy reduction. Worker count therefore never changes
a result.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import GeometryError, ParamError
from .kernel import GreenKernel, _check_gamma
from .obstacle import Obstacle, SphereQuadrature, axial_order, capacitary_mean, radial_sphere_mean

__all__ = [
    "McEstimate",
    "RatioEstimate",
    "mc_sphere_mean",
    "harmonicity_residual",
    "uniform_cube_sampler",
    "poincare_ratio",
    "second_moment_ratio",
    "poincare_slope",
    "BLOCK",
]

BLOCK = 65536


@dataclass(frozen=True)
class McEstimate:
    value: float
    std_error: float
    samples: int
    seed: int


@dataclass(frozen=True)
class RatioEstimate:
    value: float
    std_error: float
    samples: int
    seed: int
    degenerate: bool = False


def _blocks(total: int, block: int):
    return [(b, min(block, total - b * block)) for b in range((total + block - 1) // block)]


def _block_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=(int(b),)))


def _map_blocks(fn, total, seed, threads, block=BLOCK):
    jobs = _blocks(total, block)
    run = lambda job: fn(_block_rng(seed, job[0]), job[1])
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            parts = list(ex.map(run, jobs))
    else:
        parts = [run(j) for j in jobs]
    return np.concatenate(parts)


def mc_sphere_mean(center, R: float, h, samples: int, seed: int, threads: int = 1) -> McEstimate:
    """Plain Monte-Carlo average of ``h`` over the sphere dB(center, R)."""
    if int(samples) != samples or samples < 100:
        raise ParamError("samples must be an integer >= 100")
    center = np.asarray(center, dtype=float)
    d = center.shape[-1]

    def block(rng, m):
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return np.asarray(h(center + R * g), dtype=float).reshape(m)

    vals = _map_blocks(block, int(samples), seed, threads)
    mean = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    return McEstimate(mean, se, int(samples), int(seed))


def harmonicity_residual(k: GreenKernel, o: Obstacle, y, rho: float, q: SphereQuadrature) -> float:
    """|mean of gamma*e_x over dB(y, rho) - gamma*e_x(y)| for a ball clear of the obstacle."""
    y = np.asarray(y, dtype=float)
    if rho < 0:
        raise ParamError("rho must be >= 0")
    dist = float(k.distance(o.center, y))
    if not dist > o.radius + rho:
        raise GeometryError(f"B(y, {rho:g}) meets the obstacle (|y - x| = {dist:g}, R = {o.radius:g})")
    if rho == 0:
        return 0.0
    pot = lambda p: np.minimum(k.eval(o.center, p), o.threshold)
    ball = Obstacle(center=y, threshold=o.threshold, radius=float(rho))
    return abs(capacitary_mean(k, ball, q, pot) - float(pot(y)))


def uniform_cube_sampler(d: int):
    """Sampler for the uniform measure on [0, 1]^d: ``sampler(rng, m) -> (m, d)``."""
    return lambda rng, m: rng.uniform(0.0, 1.0, size=(m, d))


def _target_parts(g):
    centers = np.asarray(g.centers, dtype=float)
    return centers, np.asarray(g.a, dtype=float), float(g.tau), float(g.energy)


def _smoothing_samples(k, g, gamma, sampler, N, q, seed, threads):
    """Per-sample (g(x), P_x^gamma g) for x drawn from the sampler."""
    if N < 1000:
        raise ParamError("N must be >= 1000")
    gamma = _check_gamma(gamma)
    centers, a, tau, _ = _target_parts(g)
    R = k.level_radius(gamma)
    order = axial_order(q)
    d = k.dimension

    def block(rng, m):
        x = np.asarray(sampler(rng, m), dtype=float)
        D = cdist(x, centers)
        with np.errstate(divide="ignore"):
            gx = np.minimum(k.profile(D), tau) @ a
        # each term is radial about z_k, so its sphere mean is a 1-D integral
        px = radial_sphere_mean(k, D.ravel(), R, tau, order).reshape(D.shape) @ a
        return np.stack([gx, px], axis=1)

    vals = _map_blocks(block, int(N), seed, threads, block=4096)
    if vals.shape[1] != 2 or d != centers.shape[1]:
        raise ParamError("target dimension does not match the kernel")
    return vals[:, 0], vals[:, 1]


def poincare_ratio(k: GreenKernel, g, gamma: float, sampler, N: int, q: SphereQuadrature | None = None,
                   seed: int = 0, threads: int = 1) -> RatioEstimate:
    """MC estimate of int (g - P_x^gamma g)^2 dnu / E(g, g).

    ``g`` is a finite truncated-representer combination exposing ``centers``,
    ``a``, ``tau`` and its exact ``energy`` (e.g. a SyntheticTarget).
    """
    _, a, _, energy = _target_parts(g)
    if energy <= 0 or not np.any(a):
        return RatioEstimate(0.0, 0.0, int(N), int(seed), degenerate=True)
    gx, px = _smoothing_samples(k, g, gamma, sampler, N, q, seed, threads)
    sq = (gx - px) ** 2
    return RatioEstimate(float(np.mean(sq) / energy), float(np.std(sq, ddof=1) / math.sqrt(len(sq)) / energy),
                         int(N), int(seed))


def second_moment_ratio(k: GreenKernel, g, gamma: float, sampler, N: int, q: SphereQuadrature | None = None,
                        seed: int = 0, threads: int = 1) -> RatioEstimate:
    """MC estimate of int (P_x g)^2 dnu / (gamma^(beta/(beta-alpha)) E(g,g) + ||g||^2_{L^2(nu)}).

    Numerator and the L^2 term come from the same draws; the standard error
    is the delta-method one.
    """
    _, a, _, energy = _target_parts(g)
    if energy <= 0 or not np.any(a):
        return RatioEstimate(0.0, 0.0, int(N), int(seed), degenerate=True)
    alpha, beta = float(k.params.volume_exponent), float(k.params.walk_exponent)
    gx, px = _smoothing_samples(k, g, gamma, sampler, N, q, seed, threads)
    offset = gamma ** (beta / (beta - alpha)) * energy
    denom = offset + float(np.mean(gx**2))
    r = float(np.mean(px**2) / denom)
    lin = (px**2 - r * gx**2) / denom
    return RatioEstimate(r, float(np.std(lin, ddof=1) / math.sqrt(len(lin))), int(N), int(seed))


def poincare_slope(k: GreenKernel, g, gammas, sampler, N: int, seeds, q: SphereQuadrature | None = None,
                   threads: int = 1) -> tuple[float, list]:
    """Log-log slope of the seed-averaged Poincare ratio against gamma."""
    from .experiments import fit_loglog_slope

    means = []
    for gamma in gammas:
        vals = [poincare_ratio(k, g, gamma, sampler, N, q, seed=s, threads=threads).value for s in seeds]
        means.append(float(np.mean(vals)))
    slope, _ = fit_loglog_slope(gammas, means)
    return slope, means
