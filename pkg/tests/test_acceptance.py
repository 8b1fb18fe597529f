"""Acceptance suite: one test per acceptance criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers
and then asserts at the stated tolerance. Run with ``pytest -s -m acceptance``
to see the lines inline; ``pytest -v`` shows pass/fail per criterion.
"""

from __future__ import annotations

import csv
import filecmp
import math
import time

import numpy as np
import pytest

from vrclt import (
    AlgorithmKind,
    Polynomial,
    QuadraticGaussianProblem,
    RngStream,
    SolverConfig,
    run,
)
from vrclt.cli import main as cli_main
from vrclt.inference import (
    ReplicationEnsemble,
    clt_diagnostics,
    gaussian_coverage,
    rescaled_errors,
    scaling_for,
)
from vrclt.numerics import f_cdf, f_quantile
from vrclt.problems import spd_with_spectrum
from vrclt.schedules import batch_size
from vrclt.theory import (
    companion_matrix,
    delta_method_covariances,
    limit_covariance_for,
    limit_covariance_geometric,
    limit_covariance_polynomial,
    lyapunov_residual,
    one_step_bound,
)

pytestmark = pytest.mark.acceptance

VR = [AlgorithmKind.VR_SGD, AlgorithmKind.VR_ACCELERATED, AlgorithmKind.VR_HEAVY_BALL]


def report(number: int, ok: bool, detail: str, seconds: float, budget: float) -> None:
    within = seconds < budget
    verdict = "PASS" if ok and within else "FAIL"
    print(f"\n{verdict} criterion {number}: {detail} [{seconds:.1f}s, budget {budget:.0f}s]")


def quadratic(eigs, seed: int, noise=1.0, x_star=None) -> QuadraticGaussianProblem:
    """Quadratic with the given Hessian spectrum in a random orthonormal basis."""
    m = len(eigs)
    h = spd_with_spectrum(eigs, RngStream(seed, (0,)))
    xs = np.ones(m) / math.sqrt(m) if x_star is None else np.asarray(x_star, float)
    return QuadraticGaussianProblem(h, xs, noise)


def paths(problem, config, count: int, seed: int, tag: int):
    return [run(config, problem, RngStream(seed, (tag, i))) for i in range(count)]


# ---------------------------------------------------------------------------


def test_criterion_01_geometric_rate():
    t0 = time.perf_counter()
    p = quadratic(np.linspace(1.0, 10.0, 5), seed=11)
    cfg = SolverConfig.with_defaults(AlgorithmKind.VR_SGD, p, 30)
    trajs = paths(p, cfg, 100, seed=101, tag=1)
    mean_err = np.mean([np.sqrt(t.sq_err) for t in trajs], axis=0)
    k = np.arange(31)
    slope = np.polyfit(k, np.log(mean_err), 1)[0]
    target = 0.5 * math.log(float(cfg.schedule.rho))
    rel = abs(slope - target) / abs(target)
    dt = time.perf_counter() - t0
    ok = rel <= 0.15
    report(1, ok, f"slope={slope:.5f} target={target:.5f} rel={rel:.3f} (tol 0.15)", dt, 30)
    assert ok and dt < 30


def _iterations_to(problem, kind, tol, count, seed, tag):
    cfg0 = SolverConfig.with_defaults(kind, problem, 1)
    # enough steps for the error to fall past tol at rate sqrt(rho), while
    # keeping the batch sizes inside 64-bit integers
    log_rho = math.log(float(cfg0.schedule.rho))
    steps = min(int(math.ceil(2.0 * math.log(tol) / (0.5 * log_rho))) + 20, int(62 * math.log(2) / -log_rho) - 1)
    cfg = SolverConfig.with_defaults(kind, problem, steps)
    trajs = paths(problem, cfg, count, seed, tag)
    attr = "sq_err_y" if kind is AlgorithmKind.VR_ACCELERATED else "sq_err"
    err = np.mean([np.sqrt(getattr(t, attr)) for t in trajs], axis=0)
    rel = err / err[0]
    hit = np.nonzero(rel <= tol)[0]
    return int(hit[0]) if hit.size else None


def test_criterion_02_acceleration_constant():
    t0 = time.perf_counter()
    lines, ok = [], True
    for i, kappa in enumerate([16.0, 100.0]):
        p = quadratic(np.linspace(1.0, kappa, 5), seed=21 + i)
        k_sgd = _iterations_to(p, AlgorithmKind.VR_SGD, 1e-3, 100, seed=202, tag=10 + i)
        k_acc = _iterations_to(p, AlgorithmKind.VR_ACCELERATED, 1e-3, 100, seed=202, tag=20 + i)
        ratio = k_sgd / k_acc if k_sgd and k_acc else float("nan")
        good = math.sqrt(kappa) / 2 <= ratio <= 2 * math.sqrt(kappa)
        ok &= good
        lines.append(f"kappa={kappa:g}: iters sgd={k_sgd} acc={k_acc} ratio={ratio:.2f} sqrt(kappa)={math.sqrt(kappa):.1f}")
    dt = time.perf_counter() - t0
    report(2, ok, "; ".join(lines) + " (ratio within factor 2 of sqrt(kappa))", dt, 120)
    assert ok and dt < 120


def test_criterion_03_polynomial_rate():
    t0 = time.perf_counter()
    p = quadratic(np.linspace(1.0, 10.0, 5), seed=31)
    v = 2.0
    lines, ok = [], True
    k = np.arange(201)
    window = (k >= 20) & (k <= 200)
    for j, kind in enumerate(VR):
        cfg = SolverConfig.with_defaults(kind, p, 200, schedule=Polynomial(v))
        trajs = paths(p, cfg, 100, seed=303, tag=j)
        mse = np.mean([t.sq_err for t in trajs], axis=0)
        slope = np.polyfit(np.log(k[window]), np.log(mse[window]), 1)[0]
        rel = abs(slope + v) / v
        ok &= rel <= 0.15
        lines.append(f"{kind.value} slope={slope:.3f}")
    dt = time.perf_counter() - t0
    report(3, ok, ", ".join(lines) + f" (target {-v:g} within 15%)", dt, 120)
    assert ok and dt < 120


def test_criterion_04_one_step_recursions():
    t0 = time.perf_counter()
    p = quadratic(np.linspace(1.0, 10.0, 5), seed=41)
    nu_sq = float(np.trace(p.noise_cov))
    n_paths, K = 10_000, 20
    lines, ok = [], True
    for j, kind in enumerate([AlgorithmKind.VR_SGD, AlgorithmKind.VR_HEAVY_BALL]):
        cfg = SolverConfig.with_defaults(kind, p, K)
        sq = np.array([t.sq_err for t in paths(p, cfg, n_paths, seed=404, tag=j)])
        if kind is AlgorithmKind.VR_SGD:
            cur, prev = sq[:, 1:], sq[:, :-1]
        else:
            # stacked state (x_{k+1}; x_k) against (x_k; x_{k-1}), with x_{-1} = x_0
            cur = sq[:, 1:] + sq[:, :-1]
            prev = np.concatenate([2 * sq[:, :1], cur[:, :-1]], axis=1)
        worst, violations = -np.inf, 0
        for kk in range(K):
            lhs = cur[:, kk].mean()
            se = cur[:, kk].std(ddof=1) / math.sqrt(n_paths)
            rhs = one_step_bound(kind, cfg.alpha, p.eta, p.lip, prev[:, kk].mean(), nu_sq, batch_size(cfg.schedule, kk))
            z = (lhs - rhs) / se
            worst = max(worst, z)
            violations += lhs > rhs + 4 * se
        ok &= violations == 0
        lines.append(f"{kind.value}: {violations}/{K} steps above bound+4se (max z={worst:.1f})")
    dt = time.perf_counter() - t0
    report(4, ok, "; ".join(lines), dt, 60)
    assert ok and dt < 60


def test_criterion_05_limit_covariance_machinery():
    t0 = time.perf_counter()
    gen = RngStream(505, (0,)).gen
    worst_res = worst_gap = worst_rel = 0.0
    for _ in range(20):
        m = int(gen.integers(1, 5))
        a = gen.standard_normal((m, m))
        a *= gen.uniform(0.3, 0.9) / max(abs(np.linalg.eigvals(a)))
        b = gen.standard_normal((m, m))
        s0 = b @ b.T + 0.1 * np.eye(m)
        geo = limit_covariance_geometric(a, None, s0)
        worst_res = max(worst_res, lyapunov_residual(a, s0, geo.sigma))
        v = float(gen.uniform(0.5, 3.0))
        poly = limit_covariance_polynomial(a, None, s0, v)
        worst_gap = max(worst_gap, poly.residual)
        rel = np.linalg.norm(poly.sigma - geo.sigma) / np.linalg.norm(geo.sigma)
        worst_rel = max(worst_rel, rel)
    dt = time.perf_counter() - t0
    ok = worst_res < 1e-10 and worst_gap < 1e-6 and worst_rel < 1e-5
    report(
        5, ok,
        f"max Lyapunov residual={worst_res:.2e} (<1e-10), max k-vs-2k gap={worst_gap:.2e} (<1e-6), "
        f"max rel diff={worst_rel:.2e} (<1e-5)", dt, 30,
    )
    assert ok and dt < 30


CLT_S0 = np.array([[1.0, 0.3], [0.3, 0.5]])


def clt_problem() -> QuadraticGaussianProblem:
    return quadratic([1.0, 4.0], seed=61, noise=CLT_S0, x_star=[1 / math.sqrt(2), -1 / math.sqrt(2)])


def clt_ensemble(p, kind, k: int, count: int, seed: int, tag: int):
    cfg = SolverConfig.with_defaults(kind, p, k)
    trajs = paths(p, cfg, count, seed, tag)
    ens = ReplicationEnsemble(
        np.array([t.primary() for t in trajs]), k, scaling=scaling_for(cfg),
        previous=np.array([t.primary_prev() for t in trajs]),
    )
    return cfg, trajs, ens


def test_criterion_06_empirical_clt():
    t0 = time.perf_counter()
    p = clt_problem()
    lines, ok = [], True
    for j, kind in enumerate(VR):
        cfg, _, ens = clt_ensemble(p, kind, 50, 2000, seed=606, tag=j)
        z = rescaled_errors(ens, p.x_star)
        lim = limit_covariance_for(kind, p.H, p.noise_cov, cfg.alpha, cfg.beta, cfg.schedule)
        d = clt_diagnostics(z, lim.marginal(2))
        good = d["cov_rel_distance"] < 0.30 and d["normal_ok"]
        ok &= good
        lines.append(
            f"{kind.value}: covrel={d['cov_rel_distance']:.3f} "
            f"skew={max(map(abs, d['skewness'])):.3f} kurt={max(map(abs, d['excess_kurtosis'])):.3f} "
            f"ks={max(d['ks']):.4f}/{d['ks_critical_1pct']:.4f}"
        )
    dt = time.perf_counter() - t0
    report(6, ok, "; ".join(lines), dt, 180)
    assert ok and dt < 180


def test_criterion_07_delta_method():
    t0 = time.perf_counter()
    p = clt_problem()
    k = 50
    cfg, trajs, ens = clt_ensemble(p, AlgorithmKind.VR_SGD, k, 2000, seed=707, tag=0)
    lim = limit_covariance_for(AlgorithmKind.VR_SGD, p.H, p.noise_cov, cfg.alpha, 0.0, cfg.schedule)
    grad_cov_theory, gap_theory = delta_method_covariances(p.H, lim.sigma)
    rho = float(cfg.schedule.rho)
    gaps = np.array([t.subopt[-1] for t in trajs]) / (cfg.alpha**2 * rho**k)
    gap_se = gaps.std(ddof=1) / math.sqrt(gaps.size)
    gap_z = (gaps.mean() - gap_theory) / gap_se
    grads = rescaled_errors(ens, p.x_star) @ p.H.T
    emp = np.cov(grads, rowvar=False)
    rel = np.linalg.norm(emp - grad_cov_theory) / np.linalg.norm(grad_cov_theory)
    dt = time.perf_counter() - t0
    ok = abs(gap_z) <= 4 and rel < 0.30
    report(
        7, ok,
        f"gap mean={gaps.mean():.4f} theory={gap_theory:.4f} z={gap_z:.2f} (|z|<=4); "
        f"gradient cov rel={rel:.3f} (<0.30)", dt, 120,
    )
    assert ok and dt < 120


def test_criterion_08_gaussian_region_law():
    t0 = time.perf_counter()
    delta, reps = 0.05, 10_000
    se = math.sqrt(delta * (1 - delta) / reps)
    lines, ok = [], True
    for j, (m, n) in enumerate([(1, 5), (2, 6), (5, 10)]):
        gen = RngStream(808, (j,))
        b = gen.child().gen.standard_normal((m, m))
        cov = b @ b.T + np.eye(m)
        cover = gaussian_coverage(m, n, delta, reps, gen, cov=cov, mean=np.arange(m, dtype=float))
        good = abs(cover - (1 - delta)) <= 2 * se
        ok &= good
        lines.append(f"(m={m},n={n}) coverage={cover:.4f}")
    dt = time.perf_counter() - t0
    report(8, ok, ", ".join(lines) + f" (0.95 +/- {2 * se:.4f})", dt, 60)
    assert ok and dt < 60


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_criterion_09_coverage_table(tmp_path):
    t0 = time.perf_counter()
    code = cli_main([
        "coverage", "--out-dir", str(tmp_path), "--seed", "0", "--quiet",
        "--set", "coverage.N_max=[1000]", "--set", "coverage.meta_reps=1000",
        "--set", "coverage.n=[6,8,10,15]", "--set", "coverage.delta=0.05",
    ])
    assert code == 0
    rows = _read_csv(tmp_path / "coverage.csv")
    lines, ok = [], True
    for kind in VR:
        cov = {int(r["n"]): float(r["coverage"]) for r in rows if r["algorithm"] == kind.value}
        in_10 = 0.89 <= cov[10] <= 0.99
        in_15 = 0.93 <= cov[15] <= 1.0
        mono = True
        ns = sorted(cov)
        for a, b in zip(ns, ns[1:]):
            sa = math.sqrt(cov[a] * (1 - cov[a]) / 1000)
            sb = math.sqrt(cov[b] * (1 - cov[b]) / 1000)
            mono &= cov[b] >= cov[a] - 2 * math.hypot(sa, sb)
        ok &= in_10 and in_15 and mono
        lines.append(
            f"{kind.value}: " + " ".join(f"n={n}:{cov[n]:.3f}" for n in ns)
            + f" monotone={'yes' if mono else 'no'}"
        )
    dt = time.perf_counter() - t0
    report(9, ok, "; ".join(lines), dt, 600)
    assert ok and dt < 600


def test_criterion_10_special_functions():
    t0 = time.perf_counter()
    worst = 0.0
    for d1 in np.geomspace(1, 200, 20):
        for d2 in np.geomspace(1, 200, 20):
            for p in (0.01, 0.5, 0.95, 0.999):
                q = f_quantile(d1, d2, p)
                worst = max(worst, abs(f_cdf(d1, d2, q) - p))
    gen = RngStream(1010, (0,)).gen
    n = 10_000_000
    samples = (gen.chisquare(5, n) / 5) / (gen.chisquare(10, n) / 10)
    samples.sort()
    z99 = 2.5758293035489004
    half = z99 * math.sqrt(n * 0.95 * 0.05)
    lo = samples[int(math.floor(n * 0.95 - half)) - 1]
    hi = samples[int(math.ceil(n * 0.95 + half)) - 1]
    q = f_quantile(5, 10, 0.95)
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and lo <= q <= hi
    report(10, ok, f"max round-trip error={worst:.2e} (<=1e-9); q={q:.6f} MC 99% CI=[{lo:.6f}, {hi:.6f}]", dt, 60)
    assert ok and dt < 60


def test_criterion_11_determinism(tmp_path):
    t0 = time.perf_counter()
    dirs = [tmp_path / name for name in ("a", "b", "c")]
    for d, workers in zip(dirs, (1, 1, 8)):
        assert cli_main(["coverage", "--out-dir", str(d), "--seed", "17", "--quiet", "--workers", str(workers)]) == 0
    same_runs = filecmp.cmp(dirs[0] / "coverage.csv", dirs[1] / "coverage.csv", shallow=False)
    same_workers = filecmp.cmp(dirs[0] / "coverage.csv", dirs[2] / "coverage.csv", shallow=False)
    dt = time.perf_counter() - t0
    ok = same_runs and same_workers
    report(11, ok, f"identical across runs={same_runs}, across --workers 1 vs 8={same_workers}", dt, 600)
    assert ok and dt < 600


def test_supplement_heavy_ball_recursion_with_operator_norm():
    """Not a criterion: the stacked heavy-ball recursion with the contraction
    replaced by the squared 2-norm of the stacked iteration matrix, which is
    what a Euclidean one-step argument actually yields."""
    p = quadratic(np.linspace(1.0, 10.0, 5), seed=41)
    cfg = SolverConfig.with_defaults(AlgorithmKind.VR_HEAVY_BALL, p, 20)
    h3 = companion_matrix("P3_core", cfg.alpha, cfg.beta, None, p.H).matrix
    contraction = float(np.linalg.norm(h3, 2) ** 2)
    nu_sq = float(np.trace(p.noise_cov))
    n_paths = 10_000
    sq = np.array([t.sq_err for t in paths(p, cfg, n_paths, seed=404, tag=1)])
    cur = sq[:, 1:] + sq[:, :-1]
    prev = np.concatenate([2 * sq[:, :1], cur[:, :-1]], axis=1)
    for kk in range(20):
        bound = contraction * prev[:, kk].mean() + cfg.alpha**2 * nu_sq / batch_size(cfg.schedule, kk)
        se = cur[:, kk].std(ddof=1) / math.sqrt(n_paths)
        assert cur[:, kk].mean() <= bound + 4 * se
