"""Fit/predict API for renormalized ridge regression and its constrained-ERM variant.

The fitted function is

    f(x) = sum_i c_i * min(G(X_i, x), gamma)

with c solving (G_n + n*lam*I) c = y (ridge) or the norm-constrained least
squares problem (ERM).
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ParamError, ShapeError
from .gram import GramMatrix, assemble_gram
from .kernel import EuclideanGreenKernel, SpaceParams, _check_gamma
from .obstacle import SphereQuadrature, axial_order, capacitary_mean, make_obstacle, radial_sphere_mean
from .solve import erm_solve, h_norm_sq, ridge_solve

__all__ = [
    "Dataset",
    "FittedModel",
    "Schedule",
    "schedule_params",
    "fit",
    "erm_fit",
    "predict",
    "smoothed_predict",
    "save_model",
    "load_model",
    "model_to_dict",
    "model_from_dict",
    "FORMAT_VERSION",
]

FORMAT_VERSION = 1
_CHUNK_ELEMS = 2_000_000


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.atleast_1d(np.asarray(self.y, dtype=float))
        if X.ndim != 2 or X.shape[0] < 1:
            raise ShapeError(f"X must be an (n, d) array with n >= 1, got {X.shape}")
        if y.shape != (X.shape[0],):
            raise ShapeError(f"y must have shape ({X.shape[0]},), got {y.shape}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ParamError("dataset contains non-finite entries")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class FittedModel:
    centers: np.ndarray
    c: np.ndarray
    gamma: float
    lam: float
    space: SpaceParams
    jitter: float = 0.0
    mode: str = "ridge"
    norm_sq: float = float("nan")
    config: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def kernel(self) -> EuclideanGreenKernel:
        return EuclideanGreenKernel(self.space.dimension)

    @property
    def n(self) -> int:
        return len(self.c)

    @property
    def radius(self) -> float:
        return self.kernel.level_radius(self.gamma)


@dataclass(frozen=True)
class Schedule:
    """Parameter schedule gamma_n, lambda_n with the theory's exponents (alpha = d, beta = 2).

    ``linked=True`` replaces the free lambda0 * n^(-2/(d+2)) by
    kappa * gamma^(2/(2-d)), which has the same growth order.
    """

    gamma0: float = 1.0
    lambda0: float = 1.0
    mode: str = "ridge"
    d: int = 3
    linked: bool = False
    kappa: float = 1.0

    def __post_init__(self):
        if self.mode not in ("ridge", "erm"):
            raise ParamError(f"mode must be 'ridge' or 'erm', got {self.mode!r}")
        if not (self.gamma0 > 0 and self.lambda0 > 0 and self.kappa > 0):
            raise ParamError("gamma0, lambda0 and kappa must be positive")
        if self.d < 3:
            raise ParamError("d must be >= 3")


def schedule_params(s: Schedule, n: int) -> tuple[float, float]:
    """(gamma, lambda) for sample size n; lambda is 0 in ERM mode."""
    if int(n) != n or n < 1:
        raise ParamError(f"n must be a positive integer, got {n}")
    d, alpha, beta = s.d, float(s.d), 2.0
    if s.mode == "erm":
        return s.gamma0 * n ** ((alpha - 2.0) / (2.0 * alpha)), 0.0
    gamma = s.gamma0 * n ** ((alpha - beta) / (alpha + beta))
    if s.linked:
        lam = s.kappa * gamma ** (beta / (beta - alpha))
    else:
        lam = s.lambda0 * n ** (-beta / (alpha + beta))
    return gamma, lam


def fit(ds: Dataset, gamma: float, lam: float, q: SphereQuadrature | None = None,
        threads: int = 1, gram: GramMatrix | None = None) -> FittedModel:
    """Assemble the Gram matrix and solve the ridge system with n*lam."""
    gamma = _check_gamma(gamma)
    if not lam > 0:
        raise ParamError(f"lambda must be positive, got {lam}")
    k = EuclideanGreenKernel(ds.d)
    gm = gram if gram is not None else assemble_gram(k, ds.X, gamma, q, threads=threads)
    sol = ridge_solve(gm, ds.y, ds.n * lam)
    return FittedModel(
        centers=ds.X, c=sol.c, gamma=gamma, lam=float(lam), space=k.params,
        jitter=sol.applied_jitter, mode="ridge", norm_sq=h_norm_sq(gm, sol.c),
    )


def erm_fit(ds: Dataset, gamma: float, M: float, q: SphereQuadrature | None = None,
            threads: int = 1, gram: GramMatrix | None = None) -> FittedModel:
    """Constrained least squares over the smoothed M-ball; records the active multiplier as ``lam``."""
    gamma = _check_gamma(gamma)
    k = EuclideanGreenKernel(ds.d)
    gm = gram if gram is not None else assemble_gram(k, ds.X, gamma, q, threads=threads)
    sol = erm_solve(gm, ds.y, M)
    return FittedModel(
        centers=ds.X, c=sol.c, gamma=gamma, lam=sol.lambda_active, space=k.params,
        mode="erm", norm_sq=h_norm_sq(gm, sol.c),
    )


def _queries(m: FittedModel, x):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    Xq = np.atleast_2d(x)
    if Xq.ndim != 2 or Xq.shape[1] != m.space.dimension:
        raise ShapeError(f"query points must have dimension {m.space.dimension}, got shape {x.shape}")
    return Xq, single


def _chunks(n_rows: int, n_cols: int):
    step = max(1, _CHUNK_ELEMS // max(n_cols, 1))
    for s in range(0, n_rows, step):
        yield slice(s, min(s + step, n_rows))


def predict(m: FittedModel, x):
    """sum_i c_i min(G(X_i, x), gamma); accepts one point or an (m, d) batch."""
    Xq, single = _queries(m, x)
    k = m.kernel
    out = np.empty(len(Xq))
    for sl in _chunks(len(Xq), m.n):
        with np.errstate(divide="ignore"):
            K = np.minimum(k.profile(cdist(Xq[sl], m.centers)), m.gamma)
        out[sl] = K @ m.c
    return float(out[0]) if single else out


def smoothed_predict(m: FittedModel, x, q: SphereQuadrature | None = None, method: str = "axial"):
    """Capacitary mean of the fitted function over dB(x, R(gamma)).

    ``method="axial"`` averages each radial term by the 1-D reduction;
    ``method="sphere"`` averages the whole sum with the node set ``q``.
    """
    Xq, single = _queries(m, x)
    k = m.kernel
    R = k.level_radius(m.gamma)
    out = np.empty(len(Xq))
    if method == "axial":
        order = axial_order(q)
        for sl in _chunks(len(Xq), m.n * order):
            D = cdist(Xq[sl], m.centers)
            S = radial_sphere_mean(k, D.ravel(), R, m.gamma, order).reshape(D.shape)
            out[sl] = S @ m.c
    elif method == "sphere":
        if q is None:
            raise ValueError("method='sphere' needs a SphereQuadrature")
        for i, xq in enumerate(Xq):
            out[i] = capacitary_mean(k, make_obstacle(k, xq, m.gamma), q, lambda y: predict(m, y))
    else:
        raise ValueError(f"unknown method {method!r}")
    return float(out[0]) if single else out


def _hex(a) -> list[str]:
    return [float(v).hex() for v in np.ravel(a)]


def _unhex(items) -> np.ndarray:
    return np.array([float.fromhex(s) for s in items], dtype=float)


def model_to_dict(m: FittedModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "mode": m.mode,
        "d": m.space.dimension,
        "n": m.n,
        "gamma": float(m.gamma).hex(),
        "lambda": float(m.lam).hex(),
        "jitter": float(m.jitter).hex(),
        "norm_sq": float(m.norm_sq).hex(),
        "space": {
            "dimension": m.space.dimension,
            "walk_exponent": float(m.space.walk_exponent).hex(),
            "green_constant": float(m.space.green_constant).hex(),
        },
        "centers": _hex(m.centers),
        "c": _hex(m.c),
        "config": m.config,
    }


def model_from_dict(doc: dict) -> FittedModel:
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"unsupported model format_version {doc.get('format_version')!r}")
    d, n = int(doc["d"]), int(doc["n"])
    sp = doc["space"]
    space = SpaceParams(int(sp["dimension"]), float.fromhex(sp["walk_exponent"]), float.fromhex(sp["green_constant"]))
    centers = _unhex(doc["centers"]).reshape(n, d)
    c = _unhex(doc["c"])
    if c.shape != (n,):
        raise ValueError("coefficient vector length does not match n")
    return FittedModel(
        centers=centers, c=c, gamma=float.fromhex(doc["gamma"]), lam=float.fromhex(doc["lambda"]),
        space=space, jitter=float.fromhex(doc["jitter"]), mode=doc["mode"],
        norm_sq=float.fromhex(doc["norm_sq"]), config=doc.get("config", {}),
    )


def save_model(m: FittedModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(m), fh, indent=1)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
