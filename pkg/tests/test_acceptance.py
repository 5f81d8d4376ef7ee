"""Acceptance criteria 1-8, each at its stated tolerance and runtime budget.

Run with ``pytest tests/test_acceptance.py -v``; one pass/fail line per
criterion is printed in the terminal summary.
"""
import time

import numpy as np
import pytest

from obstacle_ridge import checks, cli
from obstacle_ridge.experiments import (ExperimentConfig, calibrate_lambda0, illposed_demo, run_rate_study,
                                        shallower_count)


def test_criterion_1_gram(verdict):
    t0 = time.perf_counter()
    diag = checks.check_gram_diagonal(n=500)
    agree = checks.check_gram_fast_vs_sphere(pairs=1000, level=2)
    dt = time.perf_counter() - t0
    ok = diag.passed and agree.passed and dt < 10
    verdict(1, "gram correctness", ok,
            f"diag max err {diag.value:.1e}, fast vs quadrature rel {agree.value:.2e} (<= 1e-6), {dt:.1f}s (< 10s)")


def test_criterion_2_representer(verdict):
    t0 = time.perf_counter()
    res, pert, cons = checks.representer_checks(n=512, directions=100)
    dt = time.perf_counter() - t0
    ok = res.passed and pert.passed and cons.passed and dt < 30
    verdict(2, "representer identities", ok,
            f"residual {res.value:.1e}*|y| (<= 1e-8), objective decrease {pert.value:.1e} (<= 1e-12), "
            f"means vs Gc {cons.value:.1e}*gamma (<= 1e-8), n=512, {dt:.1f}s (< 30s)")


def test_criterion_3_potential_theory(verdict):
    harm = checks.check_harmonicity(cases=100)
    eq = checks.check_equilibrium_potential()
    one = checks.check_constant_mean()
    ok = harm.passed and eq.passed and one.passed
    verdict(3, "potential-theory identities", ok,
            f"harmonicity rel {harm.value:.1e} (<= 1e-8), equilibrium potential {eq.value:.1e} (<= 1e-12), "
            f"mean of 1 err {one.value:.1e} (<= 1e-14)")


def test_criterion_4_poincare(verdict):
    t0 = time.perf_counter()
    slope, finite = checks.poincare_checks(gamma_bar=2.0, N=10_000, seeds=5)[:2]
    dt = time.perf_counter() - t0
    ok = slope.passed and finite.passed and dt < 300
    verdict(4, "capacitary Poincare scaling", ok,
            f"slope {slope.value:.3f} (<= -1.7, theory -2), ratios finite/positive: {finite.passed}, {dt:.1f}s")


@pytest.fixture(scope="module")
def ridge_study():
    cfg = ExperimentConfig(mode="ridge", noise_sd=0.5, K=5)
    t0 = time.perf_counter()
    lam0, scores = calibrate_lambda0(cfg)
    cfg.lambda0 = lam0
    res = run_rate_study(cfg)
    return res, time.perf_counter() - t0, scores


def test_criterion_5_ridge_rate(verdict, ridge_study):
    res, dt, scores = ridge_study
    ok = res.in_band and dt < 900
    verdict(5, "ridge rate", ok,
            f"slope {res.slope:.3f} +- {res.slope_se:.3f} in [-0.55, -0.25] (theory -0.4), "
            f"lambda0={res.config.lambda0:g} (held-out calibration), {dt:.0f}s (< 900s)")


def test_criterion_6_erm_rate(verdict, ridge_study):
    ridge, _, _ = ridge_study
    cfg = ExperimentConfig(mode="erm", noise_sd=0.5, K=5, erm_radius_factor=2.0, slope_band=(-0.50, -0.17))
    t0 = time.perf_counter()
    res = run_rate_study(cfg)
    dt = time.perf_counter() - t0
    count, total = shallower_count(res, ridge)
    ok = res.in_band and count >= 4 and dt < 1200
    verdict(6, "ERM rate", ok,
            f"slope {res.slope:.3f} in [-0.50, -0.17] (theory -1/3), shallower than ridge on {count}/{total} seeds "
            f"(>= 4), {dt:.0f}s (< 1200s)")


def test_criterion_7_illposed(verdict):
    worst_exp, interp, mono = 0.0, True, True
    for d in (3, 4, 5):
        r = illposed_demo(d, seed=0)
        worst_exp = max(worst_exp, abs(r.energy_exponent - (d - 2)))
        interp &= all(r.interpolates)
        mono &= all(b < a for a, b in zip(r.l2_norm_sq, r.l2_norm_sq[1:]))
    ok = worst_exp <= 1e-6 and interp and mono
    verdict(7, "ill-posedness demo", ok,
            f"exponent error {worst_exp:.1e} (<= 1e-6), exact interpolation {interp}, L2 decreasing {mono} (d=3,4,5)")


def _cli_runs(tmp, threads):
    rng = np.random.default_rng(3)
    X = rng.uniform(size=(300, 3))
    y = np.cos(5 * X[:, 1]) + 0.1 * rng.standard_normal(300)
    data = tmp / "train.csv"
    if not data.exists():
        data.write_text("x1,x2,x3,y\n" + "".join(",".join(repr(float(v)) for v in (*x, t)) + "\n"
                                                 for x, t in zip(X, y)))
        (tmp / "query.csv").write_text("x1,x2,x3\n" + "".join(",".join(repr(float(v)) for v in x) + "\n"
                                                            for x in rng.uniform(size=(50, 3))))
    out = tmp / f"t{threads}"
    out.mkdir()
    t = ["--threads", str(threads)]
    # predict runs read one shared model so that their flags are identical
    shared = tmp / "t1" / "model.json"
    study = ["--n-grid", "128,256,512", "--seeds", "0,1,2", "--n-test", "2000"]
    runs = [
        ["fit", "--data", str(data), "--out", str(out / "model.json")],
        ["fit", "--data", str(data), "--mode", "erm", "--erm-bound", "1.0", "--out", str(out / "erm.json")],
        ["predict", "--model", str(shared), "--data", str(tmp / "query.csv"), "--hex",
         "--out", str(out / "pred.csv")],
        ["predict", "--model", str(shared), "--data", str(tmp / "query.csv"), "--smoothed",
         "--out", str(out / "smooth.csv")],
        ["rate-study", *study, "--band", "-9", "9", "--out", str(out / "ridge")],
        ["erm-study", *study, "--band", "-9", "9", "--compare-ridge", "--min-shallower", "0",
         "--out", str(out / "erm")],
        ["check", "--out", str(out / "check.txt")],
        ["illposed", "--d", "4", "--out", str(out / "illposed.csv")],
    ]
    codes = [cli.main(r + t) for r in runs]
    return out, codes


def test_criterion_8_determinism(verdict, tmp_path):
    a, codes_a = _cli_runs(tmp_path, 1)
    b, codes_b = _cli_runs(tmp_path, 4)
    files = sorted(p.name for p in a.iterdir())
    same = [p for p in files if (a / p).read_bytes() == (b / p).read_bytes()]
    ok = codes_a == codes_b == [0] * len(codes_a) and same == files and len(files) == 10
    verdict(8, "determinism", ok,
            f"{len(same)}/{len(files)} CLI artifacts byte-identical across --threads 1 vs 4, exit codes {codes_a}")
