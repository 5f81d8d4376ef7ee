"""Renormalized Gram matrices (G_n)_ij = gamma^2 E(e_i, e_j).

By the defining property of the equilibrium measure, gamma^2 E(e_i, e_j) is
the average of min(G(x_i, .), gamma) over dB(x_j, R). When the two obstacles
are well separated (|x_i - x_j| >= 2R) the truncation is inactive on that
sphere and the mean-value property gives G(x_i, x_j) exactly (fast path).
Otherwise the average is evaluated numerically.
"""
from __future__ import annotations

import hashlib
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist

from .errors import FactorizationError, ShapeError
from .kernel import GreenKernel, _check_gamma, truncated_eval
from .obstacle import SphereQuadrature, axial_order, capacitary_mean, make_obstacle, radial_sphere_mean

__all__ = [
    "GramMatrix",
    "SEPARATION_FACTOR",
    "gram_entry",
    "assemble_gram",
    "psd_jitter",
    "stable_cholesky",
    "JITTER_LADDER",
    "gram_cache_key",
    "save_gram",
    "load_gram",
]

# pairs at distance >= 2R * SEPARATION_FACTOR take the analytic fast path
SEPARATION_FACTOR = 1.0 + 1e-9

# relative jitter levels tried by psd_jitter, in units of gamma
JITTER_LADDER = (0.0,) + tuple(10.0**e for e in range(-12, -2))

_MAGIC = b"OGRM"
_VERSION = 1
_HEADER = struct.Struct("<4sIQd")


@dataclass(frozen=True)
class GramMatrix:
    entries: np.ndarray
    gamma: float
    fast_path_count: int = 0
    jitter: float = 0.0

    @property
    def size(self) -> int:
        return self.entries.shape[0]


def _separated(dist, radius):
    return dist >= 2.0 * radius * SEPARATION_FACTOR


def gram_entry(k: GreenKernel, xi, xj, gamma: float, q: SphereQuadrature | None = None, path: str = "auto") -> float:
    """One Gram entry.

    ``path`` selects the route: ``"auto"`` (identical points -> gamma,
    separated -> fast path, otherwise the axial reduction), ``"fast"``,
    ``"axial"`` (1-D reduction of the spherical mean), or ``"sphere"`` (the
    symmetrized average of the two spherical means under ``q``).
    """
    gamma = _check_gamma(gamma)
    xi = np.asarray(xi, dtype=float)
    xj = np.asarray(xj, dtype=float)
    dist = float(k.distance(xi, xj))
    R = k.level_radius(gamma)
    if path == "auto":
        if dist == 0.0:
            return gamma
        path = "fast" if _separated(dist, R) else "axial"
    if path == "fast":
        return float(min(k.profile(dist), gamma))
    if path == "axial":
        return float(radial_sphere_mean(k, dist, R, gamma, axial_order(q)))
    if path == "sphere":
        if q is None:
            raise ValueError("the sphere path needs a SphereQuadrature")
        oi, oj = make_obstacle(k, xi, gamma), make_obstacle(k, xj, gamma)
        a = capacitary_mean(k, oj, q, lambda y: truncated_eval(k, xi, y, gamma))
        b = capacitary_mean(k, oi, q, lambda y: truncated_eval(k, xj, y, gamma))
        return 0.5 * (a + b)
    raise ValueError(f"unknown path {path!r}")


def assemble_gram(k: GreenKernel, points, gamma: float, q: SphereQuadrature | None = None,
                  threads: int = 1, chunk: int = 4096) -> GramMatrix:
    """Dense symmetric Gram matrix over ``points`` (n x d).

    Overlapping pairs are split into fixed-size chunks evaluated by a thread
    pool; each chunk writes disjoint entries, so the result does not depend
    on ``threads``.
    """
    gamma = _check_gamma(gamma)
    X = np.asarray(points, dtype=float)
    if X.ndim != 2 or X.shape[1] != k.dimension or X.shape[0] < 1:
        raise ShapeError(f"points must be an (n, {k.dimension}) array with n >= 1, got {X.shape}")
    n = X.shape[0]
    R = k.level_radius(gamma)
    D = cdist(X, X)
    with np.errstate(divide="ignore"):
        G = np.minimum(k.profile(D), gamma)

    pi, pj = np.nonzero(np.triu(~_separated(D, R), k=1))
    fast_count = n * (n - 1) // 2 - len(pi)
    if len(pi):
        dist = D[pi, pj]
        order = axial_order(q)
        chunks = [slice(s, s + chunk) for s in range(0, len(dist), chunk)]
        work = lambda sl: radial_sphere_mean(k, dist[sl], R, gamma, order)
        if threads > 1 and len(chunks) > 1:
            with ThreadPoolExecutor(max_workers=threads) as ex:
                parts = list(ex.map(work, chunks))
        else:
            parts = [work(sl) for sl in chunks]
        vals = np.concatenate(parts)
        G[pi, pj] = vals
        G[pj, pi] = vals
    np.fill_diagonal(G, gamma)
    G.setflags(write=False)
    return GramMatrix(entries=G, gamma=gamma, fast_path_count=fast_count)


def stable_cholesky(A: np.ndarray, scale: float):
    """Lower Cholesky factor of A + tau*I for the first tau = rel*scale on :data:`JITTER_LADDER`
    whose smallest pivot is resolved (pivot^2 > n * eps * max diag). Returns (L, tau).

    The pivot test matters because rounding can make a singular matrix
    factor with a pivot of order sqrt(eps).
    """
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise FactorizationError("matrix has non-finite entries")
    n = A.shape[0]
    floor = n * np.finfo(float).eps * max(float(np.max(np.abs(np.diag(A)))), scale)
    for rel in JITTER_LADDER:
        tau = rel * scale
        try:
            L = linalg.cholesky(A + tau * np.eye(n), lower=True, check_finite=False)
        except linalg.LinAlgError:
            continue
        if float(np.min(np.diag(L))) ** 2 > floor:
            return L, tau
    raise FactorizationError(f"no Cholesky factorization with jitter up to {JITTER_LADDER[-1]:g}*scale")


def psd_jitter(gm: GramMatrix) -> GramMatrix:
    """Add the smallest tau*I from :data:`JITTER_LADDER` (in units of gamma) that gives a stable Cholesky factor."""
    A = np.asarray(gm.entries, dtype=float)
    _, tau = stable_cholesky(A, gm.gamma)
    out = A + tau * np.eye(A.shape[0]) if tau else A
    out.setflags(write=False)
    return replace(gm, entries=out, jitter=gm.jitter + tau)


def gram_cache_key(points, gamma: float, q: SphereQuadrature | None) -> str:
    X = np.ascontiguousarray(np.asarray(points, dtype="<f8"))
    h = hashlib.sha256()
    h.update(struct.pack("<QQ", *X.shape))
    h.update(X.tobytes())
    h.update(float(gamma).hex().encode())
    h.update(b"axial" if q is None else q.descriptor.encode())
    return h.hexdigest()


def save_gram(path, gm: GramMatrix) -> None:
    """Write ``gm`` as header {"OGRM", u32 version, u64 n, f64 gamma} + upper triangle (row-major)."""
    n = gm.size
    iu = np.triu_indices(n)
    body = np.ascontiguousarray(np.asarray(gm.entries)[iu], dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, n, float(gm.gamma)))
        fh.write(body.tobytes())


def load_gram(path) -> GramMatrix:
    """Read a file written by :func:`save_gram`. ``fast_path_count`` is not stored and comes back as -1."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError("truncated Gram cache file")
    magic, version, n, gamma = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != _VERSION:
        raise ValueError(f"not an OGRM v{_VERSION} file")
    m = n * (n + 1) // 2
    if len(raw) != _HEADER.size + 8 * m:
        raise ValueError("Gram cache file has the wrong length")
    body = np.frombuffer(raw, dtype="<f8", count=m, offset=_HEADER.size)
    G = np.empty((n, n))
    iu = np.triu_indices(n)
    G[iu] = body
    G[(iu[1], iu[0])] = body
    G.setflags(write=False)
    return GramMatrix(entries=G, gamma=gamma, fast_path_count=-1)
