"""Replication ensembles, Hotelling confidence regions and CLT diagnostics.

Given ``n`` independent terminal iterates ``x_1..x_n`` with sample mean
``xbar`` and unbiased covariance ``S``, the region

    { x : n (xbar - x)^T S^-1 (xbar - x) <= m (n-1)/(n-m) F_{1-delta}(m, n-m) }

has coverage ``1 - delta`` exactly when the replicates are Gaussian, and
asymptotically for the rescaled-Gaussian limits of the VR methods. No
estimate of the limiting covariance itself is required.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import NotPositiveDefinite, SingularCovariance, TooFewReplicates
from .numerics import RngStream, cholesky, f_quantile, normal_cdf
from .problems import StochasticProblem
from .schedules import AlgorithmKind, Geometric, cumulative_oracle_calls, steps_for_budget
from .solvers import SolverConfig, run

KS_CRIT_1PCT = 1.6276  # asymptotic Kolmogorov 99% quantile
Z_95 = 1.959963984540054


# ---------------------------------------------------------------------------
# parallel helper
# ---------------------------------------------------------------------------


def resolve_workers(workers: int) -> int:
    if workers < 0:
        raise ValueError("workers must be >= 0")
    return workers or (os.cpu_count() or 1)


def ordered_map(fn, tasks: list, workers: int = 1) -> list:
    """``[fn(t) for t in tasks]``, optionally in worker processes.

    Results come back in task order, so any reduction over them is
    independent of the worker count and of scheduling.
    """
    workers = resolve_workers(workers)
    if workers == 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    chunk = max(1, len(tasks) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks, chunksize=chunk))


# ---------------------------------------------------------------------------
# ensembles and regions
# ---------------------------------------------------------------------------


@dataclass
class ReplicationEnsemble:
    """Terminal iterates of ``n`` replications at step ``k``.

    ``scaling`` is ``{"kind": "geometric", "rho": .., "alpha": ..}`` or
    ``{"kind": "polynomial", "v": .., "alpha": ..}``. ``previous`` optionally
    holds the iterates at step ``k-1`` for stacked analyses.
    """

    iterates: np.ndarray
    k: int
    scaling: dict | None = None
    previous: np.ndarray | None = None

    def __post_init__(self):
        self.iterates = np.atleast_2d(np.asarray(self.iterates, dtype=float))
        if self.iterates.shape[0] < 2:
            raise TooFewReplicates("an ensemble needs at least two replications")
        if self.previous is not None:
            self.previous = np.atleast_2d(np.asarray(self.previous, dtype=float))
            if self.previous.shape != self.iterates.shape:
                raise ValueError("previous iterates must match the shape of the terminal iterates")

    @property
    def n(self) -> int:
        return self.iterates.shape[0]

    @property
    def dim(self) -> int:
        return self.iterates.shape[1]

    def stacked(self) -> np.ndarray:
        if self.previous is None:
            raise ValueError("ensemble does not carry previous iterates")
        return np.hstack([self.iterates, self.previous])


def ensemble_mean_cov(ensemble) -> tuple[np.ndarray, np.ndarray]:
    """Sample mean and unbiased sample covariance of the replicates."""
    x = ensemble.iterates if isinstance(ensemble, ReplicationEnsemble) else np.atleast_2d(np.asarray(ensemble, float))
    n = x.shape[0]
    if n < 2:
        raise TooFewReplicates("need at least two replicates")
    xbar = x.mean(axis=0)
    d = x - xbar
    s = d.T @ d / (n - 1)
    return xbar, 0.5 * (s + s.T)


def hotelling_statistic(xbar, s, n: int, x) -> float:
    """``n (xbar - x)^T S^-1 (xbar - x)`` via a Cholesky solve."""
    try:
        fac = cholesky(np.atleast_2d(s))
    except NotPositiveDefinite as exc:
        raise SingularCovariance(f"sample covariance is singular: {exc}") from None
    d = np.atleast_1d(np.asarray(xbar, float) - np.asarray(x, float))
    z = fac.solve_lower(d)
    return float(n * (z @ z))


def f_threshold(m: int, n: int, delta: float) -> tuple[float, float]:
    """``(threshold, z)`` with ``z = F_{1-delta}(m, n-m)``."""
    if n <= m:
        raise TooFewReplicates(f"need n >= m+1 replications, got n={n}, m={m}")
    if not 0 < delta < 1:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")
    z = f_quantile(m, n - m, 1.0 - delta)
    return m * (n - 1) / (n - m) * z, z


@dataclass
class ConfidenceRegion:
    center: np.ndarray
    shape: np.ndarray
    n: int
    m: int
    threshold: float
    z: float
    delta: float
    _factor: object = field(default=None, repr=False)

    def statistic(self, x) -> float:
        d = self.center - np.asarray(x, float)
        w = self._factor.solve_lower(d)
        return float(self.n * (w @ w))

    def contains(self, x) -> bool:
        return self.statistic(x) <= self.threshold

    def volume(self) -> float:
        """Lebesgue volume of the ellipsoid."""
        m = self.m
        unit_ball = math.pi ** (m / 2) / math.gamma(m / 2 + 1)
        log_det = self._factor.logdet()
        return unit_ball * (self.threshold / self.n) ** (m / 2) * math.exp(0.5 * log_det)


def confidence_region(ensemble, delta: float, stacked: bool = False) -> ConfidenceRegion:
    """Hotelling region for the mean of the replicates.

    ``stacked=True`` builds the ``2m``-dimensional region for (current,
    previous) iterates instead of the ``m``-dimensional one.
    """
    if isinstance(ensemble, ReplicationEnsemble):
        x = ensemble.stacked() if stacked else ensemble.iterates
    else:
        x = np.atleast_2d(np.asarray(ensemble, float))
    n, m = x.shape
    threshold, z = f_threshold(m, n, delta)
    xbar, s = ensemble_mean_cov(x)
    try:
        fac = cholesky(s)
    except NotPositiveDefinite as exc:
        raise SingularCovariance(f"sample covariance is singular: {exc}") from None
    return ConfidenceRegion(xbar, s, n, m, threshold, z, delta, fac)


def contains(region: ConfidenceRegion, x) -> bool:
    return region.contains(x)


# ---------------------------------------------------------------------------
# coverage
# ---------------------------------------------------------------------------


@dataclass
class CoverageResult:
    coverage: float
    half_width: float
    covered: np.ndarray
    volumes: np.ndarray
    statistics: np.ndarray
    n: int
    n_max: int
    delta: float
    meta_reps: int
    steps: int
    oracle_calls: int
    algorithm: str


def binomial_half_width(p: float, reps: int) -> float:
    return Z_95 * math.sqrt(p * (1.0 - p) / reps)


def _coverage_task(args):
    problem, config, n, delta, stacked, seed, prefix, meta = args
    xs, prev = [], []
    for i in range(n):
        traj = run(config, problem, RngStream(seed, prefix + (meta, i)))
        xs.append(traj.primary())
        prev.append(traj.primary_prev())
    ens = ReplicationEnsemble(np.array(xs), config.steps, previous=np.array(prev))
    region = confidence_region(ens, delta, stacked=stacked)
    target = np.concatenate([problem.x_star, problem.x_star]) if stacked else problem.x_star
    stat = region.statistic(target)
    return stat <= region.threshold, region.volume(), stat


def coverage_experiment(
    problem: StochasticProblem,
    config: SolverConfig,
    n: int,
    n_max: int,
    delta: float,
    meta_reps: int,
    seed: int,
    namespace: tuple = (),
    workers: int = 1,
    stacked: bool = False,
) -> CoverageResult:
    """Fraction of ``meta_reps`` independent regions that contain ``x*``.

    Each meta-replication runs ``n`` solver replications, each stopped at the
    first step whose cumulative oracle calls reach ``n_max``; the last batch
    is spent in full. ``config.steps`` is overwritten by that step count.
    Replication ``i`` of meta-replication ``r`` uses stream
    ``(seed, namespace + (r, i))``.
    """
    m = 2 * problem.dim if stacked else problem.dim
    if n <= m:
        raise TooFewReplicates(f"need n >= m+1 replications, got n={n}, m={m}")
    if config.kind is AlgorithmKind.BASELINE_SGD:
        steps = int(n_max)
    else:
        steps = steps_for_budget(config.schedule, n_max)
    cfg = SolverConfig(
        config.kind,
        config.alpha,
        config.x0,
        steps,
        beta=config.beta,
        schedule=config.schedule,
        baseline_step=config.baseline_step,
    )
    prefix = tuple(int(s) for s in namespace)
    tasks = [(problem, cfg, n, delta, stacked, seed, prefix, r) for r in range(meta_reps)]
    out = ordered_map(_coverage_task, tasks, workers)
    covered = np.array([o[0] for o in out], dtype=bool)
    volumes = np.array([o[1] for o in out])
    stats = np.array([o[2] for o in out])
    p = float(covered.mean())
    calls = steps if cfg.kind is AlgorithmKind.BASELINE_SGD else cumulative_oracle_calls(cfg.schedule, steps)
    return CoverageResult(
        p, binomial_half_width(p, meta_reps), covered, volumes, stats, n, int(n_max), delta, meta_reps,
        steps, calls, cfg.kind.value,
    )


def gaussian_coverage(m: int, n: int, delta: float, meta_reps: int, rng: RngStream, cov=None, mean=None) -> float:
    """Coverage of the region when the replicates are exactly Gaussian."""
    mean = np.zeros(m) if mean is None else np.asarray(mean, float)
    lower = np.eye(m) if cov is None else cholesky(cov).lower
    threshold, _ = f_threshold(m, n, delta)
    hits = 0
    for _ in range(meta_reps):
        x = mean + rng.gen.standard_normal((n, m)) @ lower.T
        xbar, s = ensemble_mean_cov(x)
        hits += hotelling_statistic(xbar, s, n, mean) <= threshold
    return hits / meta_reps


# ---------------------------------------------------------------------------
# rescaled errors and diagnostics
# ---------------------------------------------------------------------------


def rescale_factor(scaling: dict, k: int) -> float:
    """``alpha^-1 rho^(-k/2)`` (geometric) or ``alpha^-1 k^(v/2)`` (polynomial)."""
    alpha = float(scaling["alpha"])
    if scaling["kind"] == "geometric":
        return math.exp(-0.5 * k * math.log(float(scaling["rho"]))) / alpha
    if scaling["kind"] == "polynomial":
        return (k ** (0.5 * float(scaling["v"])) if k > 0 else 1.0) / alpha
    raise ValueError(f"unknown scaling kind {scaling['kind']!r}")


def scaling_for(config: SolverConfig) -> dict:
    s = config.schedule
    if isinstance(s, Geometric):
        return {"kind": "geometric", "rho": float(s.rho), "alpha": config.alpha}
    return {"kind": "polynomial", "v": float(s.v), "alpha": config.alpha}


def rescaled_errors(ensemble: ReplicationEnsemble, x_star, stacked: bool = False) -> np.ndarray:
    """Per-replication rescaled errors ``factor * (x_k - x*)``.

    With ``stacked=True`` each row is ``factor * (x_k - x*, x_{k-1} - x*)``,
    both blocks scaled with the same ``k``.
    """
    if ensemble.scaling is None:
        raise ValueError("ensemble carries no scaling metadata")
    c = rescale_factor(ensemble.scaling, ensemble.k)
    xs = np.asarray(x_star, float)
    if stacked:
        return c * (ensemble.stacked() - np.concatenate([xs, xs]))
    return c * (ensemble.iterates - xs)


def ks_statistic(z) -> float:
    """One-sample Kolmogorov-Smirnov distance to the standard normal."""
    z = np.sort(np.asarray(z, float))
    n = z.size
    cdf = normal_cdf(z)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


def _moments(x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mu = x.mean(axis=0)
    d = x - mu
    m2 = (d**2).mean(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        skew = (d**3).mean(axis=0) / m2**1.5
        kurt = (d**4).mean(axis=0) / m2**2 - 3.0
    return mu, skew, kurt


def clt_diagnostics(
    samples,
    sigma_theory,
    hessian=None,
    gap_samples=None,
    skew_tol: float = 0.25,
    kurt_tol: float = 0.5,
) -> dict:
    """Compare rescaled-error samples against ``N(0, sigma_theory)``.

    ``gap_samples`` are optional rescaled suboptimality gaps
    ``alpha^-2 rho^-k (f(x_k) - f*)``; their mean is compared with
    ``tr(H Sigma)/2``.
    """
    x = np.atleast_2d(np.asarray(samples, float))
    if x.shape[0] == 1:
        x = x.T
    n, m = x.shape
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    sig = np.atleast_2d(np.asarray(sigma_theory, float))
    if sig.shape != (m, m):
        raise ValueError(f"Sigma is {sig.shape}, samples have dimension {m}")
    mu, skew, kurt = _moments(x)
    d = x - mu
    emp = d.T @ d / (n - 1)
    rel = float(np.linalg.norm(emp - sig) / np.linalg.norm(sig))
    sd = np.sqrt(np.diag(sig))
    ks = np.array([ks_statistic(x[:, i] / sd[i]) for i in range(m)])
    crit = KS_CRIT_1PCT / math.sqrt(n)
    finite = np.all(np.isfinite(skew)) and np.all(np.isfinite(kurt))
    normal_ok = bool(
        finite and np.all(np.abs(skew) < skew_tol) and np.all(np.abs(kurt) < kurt_tol) and np.all(ks < crit)
    )
    report = {
        "n": n,
        "dim": m,
        "mean": mu.tolist(),
        "skewness": skew.tolist(),
        "excess_kurtosis": kurt.tolist(),
        "empirical_cov": emp.tolist(),
        "cov_rel_distance": rel,
        "ks": ks.tolist(),
        "ks_critical_1pct": crit,
        "normal_ok": normal_ok,
    }
    if hessian is not None and gap_samples is not None:
        h = np.atleast_2d(np.asarray(hessian, float))
        g = np.asarray(gap_samples, float)
        target = 0.5 * float(np.trace(h @ sig))
        se = float(g.std(ddof=1) / math.sqrt(g.size))
        report["gap_mean"] = float(g.mean())
        report["gap_se"] = se
        report["gap_theory"] = target
        report["gap_z"] = (float(g.mean()) - target) / se if se > 0 else float("inf")
    return report
