"""Synthetic rate studies and the ill-posedness demonstration.

Every random quantity is drawn from its own stream,
``SeedSequence(entropy=seed, spawn_key=(stream, *ids))``, so cells can run
in any order or in parallel and still reproduce bit for bit.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import integrate, special, stats
from scipy.spatial.distance import cdist, pdist

from .errors import GeometryError, ObstacleRidgeError, ParamError
from .estimator import Dataset, FittedModel, Schedule, erm_fit, fit, predict, schedule_params
from .gram import assemble_gram
from .kernel import EuclideanGreenKernel, _check_gamma
from .obstacle import sphere_quadrature

__all__ = [
    "SyntheticTarget",
    "ExperimentConfig",
    "CellResult",
    "RateStudyResult",
    "IllposedResult",
    "stream",
    "synth_target",
    "sample_dataset",
    "mse_estimate",
    "fit_loglog_slope",
    "run_rate_study",
    "bump",
    "bump_energy",
    "illposed_demo",
    "CellError",
    "calibrate_lambda0",
    "default_widths",
    "shallower_count",
]

# stream identifiers for SeedSequence spawn keys
_TARGET, _COVARIATES, _NOISE, _TEST, _DEMO = 0, 1, 2, 3, 4


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for (seed, keys); the SeedSequence hash is the mixing function."""
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in keys)))


@dataclass(frozen=True)
class SyntheticTarget:
    """f*(x) = sum_k a_k min(G(z_k, x), tau); ``energy`` is the exact Dirichlet energy a' G a."""

    centers: np.ndarray
    a: np.ndarray
    tau: float
    energy: float

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def h_norm(self) -> float:
        return math.sqrt(self.energy)

    def __call__(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        k = EuclideanGreenKernel(self.d)
        with np.errstate(divide="ignore"):
            return np.minimum(k.profile(cdist(x, self.centers)), self.tau) @ self.a


def synth_target(d: int, K: int, tau: float, seed: int, a=None) -> SyntheticTarget:
    """Random truncated-representer target: centers in [0.2, 0.8]^d, a_k ~ U[-1, 1].

    ``a`` may be given explicitly to pin the coefficients.
    """
    if int(K) != K or K < 1:
        raise ParamError(f"K must be a positive integer, got {K}")
    tau = _check_gamma(tau)
    rng = stream(seed, _TARGET)
    z = rng.uniform(0.2, 0.8, size=(K, d))
    coef = rng.uniform(-1.0, 1.0, size=K)
    if a is not None:
        coef = np.asarray(a, dtype=float)
        if coef.shape != (K,):
            raise ParamError(f"a must have length {K}")
    gm = assemble_gram(EuclideanGreenKernel(d), z, tau)
    energy = max(float(coef @ gm.entries @ coef), 0.0)
    return SyntheticTarget(centers=z, a=coef, tau=tau, energy=energy)


def sample_dataset(t: SyntheticTarget, n: int, noise_sd: float, seed: int) -> Dataset:
    """X ~ U([0,1]^d) i.i.d., Y = f*(X) + N(0, noise_sd^2), from independent streams."""
    if int(n) != n or n < 1:
        raise ParamError(f"n must be a positive integer, got {n}")
    if not noise_sd >= 0:
        raise ParamError("noise_sd must be >= 0")
    X = stream(seed, _COVARIATES, n).uniform(0.0, 1.0, size=(n, t.d))
    eps = stream(seed, _NOISE, n).standard_normal(n) * noise_sd
    return Dataset(X, t(X) + eps)


def mse_estimate(m: FittedModel, t, n_test: int, seed: int, return_se: bool = False):
    """Monte-Carlo estimate of ||f_hat - f*||^2 in L^2(U[0,1]^d).

    ``t`` is any callable on (m, d) arrays (a SyntheticTarget or another model's predictor).
    """
    if n_test < 1000:
        raise ParamError("n_test must be >= 1000")
    x = stream(seed, _TEST).uniform(0.0, 1.0, size=(int(n_test), m.space.dimension))
    sq = (predict(m, x) - np.asarray(t(x), dtype=float)) ** 2
    val = float(np.mean(sq))
    if return_se:
        return val, float(np.std(sq, ddof=1) / math.sqrt(len(sq)))
    return val


def fit_loglog_slope(n_values, y_values) -> tuple[float, float]:
    """Least-squares slope of log y on log n and its standard error."""
    ln = np.log(np.asarray(n_values, dtype=float))
    ly = np.log(np.asarray(y_values, dtype=float))
    if len(ln) < 2:
        return float("nan"), float("nan")
    res = stats.linregress(ln, ly)
    se = float(res.stderr) if len(ln) > 2 else 0.0
    return float(res.slope), se


@dataclass
class ExperimentConfig:
    d: int = 3
    n_grid: list = field(default_factory=lambda: [256, 512, 1024, 2048, 4096])
    seeds: list = field(default_factory=lambda: [0, 1, 2, 3, 4])
    gamma0: float = 1.0
    lambda0: float = 0.25
    mode: str = "ridge"
    noise_sd: float = 0.5
    n_test: int = 10_000
    quad_level: int = 3
    K: int = 5
    tau: float = 1.0
    target_seed: int = 12345
    erm_radius_factor: float = 2.0
    linked: bool = False
    kappa: float = 1.0
    slope_band: tuple = (-0.55, -0.25)

    def __post_init__(self):
        self.n_grid = [int(v) for v in self.n_grid]
        self.seeds = [int(v) for v in self.seeds]
        self.slope_band = tuple(float(v) for v in self.slope_band)
        if not self.n_grid or any(b <= a for a, b in zip(self.n_grid, self.n_grid[1:])):
            raise ParamError("n_grid must be non-empty and strictly increasing")
        if not self.seeds:
            raise ParamError("seeds must be non-empty")
        if self.noise_sd < 0:
            raise ParamError("noise_sd must be >= 0")
        if self.mode not in ("ridge", "erm"):
            raise ParamError(f"unknown mode {self.mode!r}")

    @property
    def schedule(self) -> Schedule:
        return Schedule(self.gamma0, self.lambda0, self.mode, self.d, self.linked, self.kappa)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["slope_band"] = list(self.slope_band)
        return out


@dataclass(frozen=True)
class CellResult:
    n: int
    seed: int
    gamma: float
    lam: float
    mse: float
    wall_ms: float


@dataclass
class RateStudyResult:
    config: ExperimentConfig
    cells: list
    n_values: list
    mean_mse: list
    slope: float
    slope_se: float
    target_l2_sq: float = float("nan")

    @property
    def in_band(self) -> bool:
        lo, hi = self.config.slope_band
        return bool(np.isfinite(self.slope) and lo <= self.slope <= hi)

    def mse_table(self) -> np.ndarray:
        """MSE array indexed [seed index, n index]."""
        seeds = self.config.seeds
        tab = np.empty((len(seeds), len(self.n_values)))
        for cell in self.cells:
            tab[seeds.index(cell.seed), self.n_values.index(cell.n)] = cell.mse
        return tab

    def per_seed_slopes(self) -> list:
        return [fit_loglog_slope(self.n_values, row)[0] for row in self.mse_table()]


class CellError(ObstacleRidgeError):
    """A rate-study cell failed; ``n`` and ``seed`` identify it."""

    def __init__(self, n, seed, cause):
        super().__init__(f"cell (n={n}, seed={seed}) failed: {cause!r}")
        self.n, self.seed, self.cause = n, seed, cause


def _run_cell(cfg: ExperimentConfig, target: SyntheticTarget, n: int, seed: int, q) -> CellResult:
    t0 = time.perf_counter()
    try:
        gamma, lam = schedule_params(cfg.schedule, n)
        ds = sample_dataset(target, n, cfg.noise_sd, seed)
        if cfg.mode == "erm":
            m = erm_fit(ds, gamma, cfg.erm_radius_factor * target.h_norm, q)
            lam = m.lam
        else:
            m = fit(ds, gamma, lam, q)
        mse = mse_estimate(m, target, cfg.n_test, _test_seed(seed, n))
    except Exception as exc:  # noqa: BLE001 - re-raised with the cell identity
        raise CellError(n, seed, exc) from exc
    return CellResult(n, seed, float(gamma), float(lam), mse, 1e3 * (time.perf_counter() - t0))


def _test_seed(seed: int, n: int) -> int:
    return int(np.random.SeedSequence(entropy=int(seed), spawn_key=(_TEST, int(n))).generate_state(1, np.uint64)[0])


def run_rate_study(cfg: ExperimentConfig, threads: int = 1, progress=None) -> RateStudyResult:
    """Fit every (n, seed) cell, then regress log(mean MSE over seeds) on log n."""
    target = synth_target(cfg.d, cfg.K, cfg.tau, cfg.target_seed)
    q = sphere_quadrature(cfg.d, cfg.quad_level, seed=cfg.target_seed)
    jobs = [(n, s) for n in cfg.n_grid for s in cfg.seeds]

    def work(job):
        cell = _run_cell(cfg, target, job[0], job[1], q)
        if progress is not None:
            progress(cell)
        return cell

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            cells = list(ex.map(work, jobs))
    else:
        cells = [work(j) for j in jobs]
    mean_mse = [float(np.mean([c.mse for c in cells if c.n == n])) for n in cfg.n_grid]
    slope, se = fit_loglog_slope(cfg.n_grid, mean_mse)
    x = stream(cfg.target_seed, _TEST, 0).uniform(0.0, 1.0, size=(cfg.n_test, cfg.d))
    l2 = float(np.mean(target(x) ** 2))
    return RateStudyResult(cfg, cells, list(cfg.n_grid), mean_mse, slope, se, l2)


CALIBRATION_GRID = (0.0625, 0.125, 0.25, 0.5, 1.0, 2.0)
CALIBRATION_SEEDS = (100, 101, 102, 103, 104)


def calibrate_lambda0(cfg: ExperimentConfig, candidates=CALIBRATION_GRID, seeds=CALIBRATION_SEEDS,
                      n: int | None = None) -> tuple[float, dict]:
    """Pick lambda0 by held-out MSE at the smallest grid size.

    The calibration seeds must not overlap the study seeds. Only the
    constant is tuned; the n-exponent of the schedule stays fixed.
    """
    if set(seeds) & set(cfg.seeds):
        raise ParamError("calibration seeds must be disjoint from the study seeds")
    n = cfg.n_grid[0] if n is None else int(n)
    scores = {}
    for lam0 in candidates:
        trial = replace(cfg, lambda0=float(lam0), mode="ridge", n_grid=[n], seeds=list(seeds))
        scores[float(lam0)] = run_rate_study(trial).mean_mse[0]
    best = min(scores, key=lambda v: (scores[v], v))
    return best, scores


def shallower_count(erm: RateStudyResult, ridge: RateStudyResult) -> tuple[int, int]:
    """Seeds on which the ERM per-seed slope is strictly shallower than the ridge one."""
    if erm.config.seeds != ridge.config.seeds or erm.n_values != ridge.n_values:
        raise ParamError("studies must share seeds and n grid")
    pairs = zip(erm.per_seed_slopes(), ridge.per_seed_slopes())
    return sum(1 for e, r in pairs if e > r), len(erm.config.seeds)


# --- ill-posedness demonstration ------------------------------------------

BUMP_PROFILE = "(1 - r^2)^2 for r < 1, else 0"


def bump(r):
    """C^1 radial bump b(r) = (1 - r^2)^2 on the unit ball, b(0) = 1."""
    r = np.asarray(r, dtype=float)
    return np.where(r < 1.0, (1.0 - r * r) ** 2, 0.0)


def bump_energy(d: int) -> float:
    """E_b = int_{R^d} |grad b|^2 = |S^(d-1)| int_0^1 (4 r (1 - r^2))^2 r^(d-1) dr."""
    surface = 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)
    # polynomial integrand of degree d + 5: Gauss-Legendre with d + 6 nodes is exact
    radial, _ = integrate.fixed_quad(lambda r: (4.0 * r * (1.0 - r * r)) ** 2 * r ** (d - 1), 0.0, 1.0, n=d + 6)
    return float(surface * radial)


@dataclass
class IllposedResult:
    d: int
    points: np.ndarray
    values: np.ndarray
    widths: list
    interpolates: list
    max_interp_error: list
    energy: list
    l2_norm_sq: list
    energy_exponent: float
    bump_energy: float
    min_separation: float

    def rows(self):
        for i, h in enumerate(self.widths):
            yield {
                "h": h,
                "interpolates": self.interpolates[i],
                "max_interp_error": self.max_interp_error[i],
                "energy": self.energy[i],
                "l2_norm_sq": self.l2_norm_sq[i],
                "l2_norm": math.sqrt(self.l2_norm_sq[i]),
            }


def default_widths(d: int, seed: int, n_points: int = 10, count: int = 6) -> list:
    """Geometric grid h_k = 0.9 * s/2 * 2^-k below half the minimum separation s."""
    X = stream(seed, _DEMO, 0).uniform(0.0, 1.0, size=(n_points, d))
    s = float(np.min(pdist(X)))
    return [0.45 * s * 0.5**k for k in range(count)]


def illposed_demo(d: int, h_grid=None, seed: int = 0, n_points: int = 10, n_mc: int = 20_000) -> IllposedResult:
    """Interpolating bump sums g_h = sum_i Y_i b((x - X_i)/h) with vanishing energy.

    Every g_h fits the data exactly while int |grad g_h|^2 = sum Y_i^2 h^(d-2) E_b
    and ||g_h||_{L^2} both go to zero with h.
    """
    if int(d) != d or d < 3:
        raise ParamError("d must be an integer >= 3")
    if h_grid is None:
        h_grid = default_widths(d, seed, n_points)
    widths = [float(h) for h in h_grid]
    if any(h <= 0 for h in widths) or any(b >= a for a, b in zip(widths, widths[1:])):
        raise ParamError("widths must be positive and strictly decreasing")
    X = stream(seed, _DEMO, 0).uniform(0.0, 1.0, size=(n_points, d))
    Y = stream(seed, _DEMO, 1).standard_normal(n_points)
    sep = float(np.min(pdist(X)))
    if widths[0] >= 0.5 * sep:
        raise GeometryError(f"width {widths[0]:g} >= half the minimum separation {0.5 * sep:g}")
    E_b = bump_energy(d)
    # g_h lives on the disjoint balls B(X_i, h): sample each ball uniformly,
    # reusing the same unit-ball draws for every width
    rng = stream(seed, _DEMO, 2)
    V = rng.standard_normal((n_points, n_mc, d))
    V /= np.linalg.norm(V, axis=-1, keepdims=True)
    V *= rng.uniform(0.0, 1.0, size=(n_points, n_mc, 1)) ** (1.0 / d)
    b2 = bump(np.linalg.norm(V, axis=-1)) ** 2
    ball = math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0)
    DX = cdist(X, X)
    interp, errs, energy, l2 = [], [], [], []
    for h in widths:
        gX = bump(DX / h) @ Y
        err = float(np.max(np.abs(gX - Y)))
        errs.append(err)
        interp.append(err == 0.0)
        energy.append(float(np.sum(Y**2) * h ** (d - 2) * E_b))
        P = X[:, None, :] + h * V
        inside = np.all((P >= 0.0) & (P <= 1.0), axis=-1)
        l2.append(float(ball * h**d * np.sum(Y**2 * np.mean(b2 * inside, axis=1))))
    slope, _ = fit_loglog_slope(widths, energy)
    return IllposedResult(d, X, Y, widths, interp, errs, energy, l2, slope, E_b, sep)
