"""Command-line driver: ``vrclt {rates,clt,coverage,compare}``.

Configuration is one JSON document (``--config``) merged over built-in
defaults, then patched with ``--set dotted.key=value``. Values given to
``--set`` are parsed as JSON when possible and kept as strings otherwise.
Unknown keys are rejected.

Exit status: 0 on success, 2 for configuration errors, 3 for numerical
failures.
"""

from __future__ import annotations

import argparse
import copy
import csv
import io
import json
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigError, InadmissibleParameter, NumericalError, VrcltError
from .inference import (
    ReplicationEnsemble,
    clt_diagnostics,
    coverage_experiment,
    ordered_map,
    rescale_factor,
    rescaled_errors,
    resolve_workers,
    scaling_for,
)
from .numerics import RngStream
from .problems import (
    LinearRegressionProblem,
    QuadraticGaussianProblem,
    noise_bound_surrogate,
    spd_with_spectrum,
)
from .schedules import (
    AlgorithmKind,
    Geometric,
    Polynomial,
    batch_size,
    cap_binds,
    describe,
    steps_for_budget,
)
from .solvers import (
    BaselineStep,
    SolverConfig,
    accelerated_beta,
    default_hyperparameters,
    heavy_ball_beta,
    run,
    validate,
)
from .theory import delta_method_covariances, limit_covariance_for, mse_upper_bound

EXPERIMENTS = ("rates", "clt", "coverage", "compare")
EXPERIMENT_IDS = {name: i + 1 for i, name in enumerate(EXPERIMENTS)}
ALGO_IDS = {
    AlgorithmKind.VR_SGD: 0,
    AlgorithmKind.VR_ACCELERATED: 1,
    AlgorithmKind.VR_HEAVY_BALL: 2,
    AlgorithmKind.BASELINE_SGD: 3,
}
PROBLEM_STREAM = 7

DEFAULTS: dict = {
    "problem": {
        "type": "linreg",
        "dim": 5,
        "R_u": [0.5, 0.75, 1.0, 1.25, 1.5],
        "sigma_nu": 1.0,
        "x_star": "unit",
        "basis": "random",
        "basis_seed": 0,
    },
    "algorithms": ["vr_sgd", "vr_accelerated", "vr_heavy_ball"],
    "alpha": "default",
    "beta": "default",
    "schedule": {"kind": "geometric-default"},
    "steps": 30,
    "x0": "zero",
    "store": "terminal",
    "trajectories": 100,
    "seed": None,
    "clt": {"k": 50, "paths": 2000, "stacked": False},
    "coverage": {
        "n": [6, 8, 10, 15],
        "N_max": [1000, 10000, 100000],
        "delta": 0.05,
        "meta_reps": 200,
        "stacked": False,
    },
    "compare": {"N_max": 100000, "baseline_step": {"rule": "matrix", "c": 1.0}, "points": 40},
}

PROBLEM_KEYS = {
    "quadratic": {"type", "dim", "eigenvalues", "noise_cov", "noise_scale", "x_star", "basis", "basis_seed"},
    "linreg": {"type", "dim", "R_u", "sigma_nu", "x_star", "basis", "basis_seed"},
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def _merge(base: dict, patch: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in patch.items():
        where = f"{path}{key}"
        if key not in base:
            if path == "problem.":
                out[key] = val  # problem keys are checked per problem type
                continue
            raise ConfigError(f"unknown config key '{where}'")
        if isinstance(base[key], dict) and key != "schedule" and isinstance(val, dict):
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> dict:
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got '{assignment}'")
    key, raw = assignment.split("=", 1)
    parts = key.strip().split(".")
    patch: dict = {}
    node = patch
    for p in parts[:-1]:
        node[p] = {}
        node = node[p]
    node[parts[-1]] = _parse_value(raw)
    if parts == ["problem"] and isinstance(patch["problem"], dict):
        # a whole problem replaces the current one, as in a config file
        merged = copy.deepcopy(cfg)
        merged["problem"] = {}
        return _merge(merged, patch)
    if parts[0] == "schedule" and len(parts) > 1:
        merged = copy.deepcopy(cfg)
        merged["schedule"] = {**cfg["schedule"], **patch["schedule"]}
        return merged
    return _merge(cfg, patch)


def load_config(path: str | None, overrides: list[str]) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config '{path}': {exc}") from None
        try:
            user = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: top level must be a JSON object")
        user.pop("experiment", None)
        if "problem" in user and isinstance(user["problem"], dict):
            # a user problem replaces the default one rather than merging into it
            cfg["problem"] = {}
        cfg = _merge(cfg, user)
    for ov in overrides:
        cfg = apply_override(cfg, ov)
    return cfg


def _req_int(value, key: str, minimum: int = 1) -> int:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
        raise ConfigError(f"'{key}' must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"'{key}' must be >= {minimum}, got {value}")
    return int(value)


def _req_float(value, key: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"'{key}' must be a number, got {value!r}")
    return float(value)


def _vector(spec, dim: int, key: str) -> np.ndarray:
    if spec == "zero":
        return np.zeros(dim)
    if spec == "ones":
        return np.ones(dim)
    if spec == "unit":
        return np.ones(dim) / math.sqrt(dim)
    if isinstance(spec, list) and len(spec) == dim:
        return np.array([_req_float(v, key) for v in spec])
    raise ConfigError(f"'{key}' must be 'zero', 'ones', 'unit' or a list of {dim} numbers, got {spec!r}")


def build_problem(spec: dict):
    kind = spec.get("type")
    if kind not in PROBLEM_KEYS:
        raise ConfigError(f"'problem.type' must be 'quadratic' or 'linreg', got {kind!r}")
    extra = set(spec) - PROBLEM_KEYS[kind]
    if extra:
        raise ConfigError(f"unknown config key 'problem.{sorted(extra)[0]}' for problem type {kind}")
    dim = _req_int(spec.get("dim"), "problem.dim")
    basis = spec.get("basis", "diagonal")
    if basis not in ("diagonal", "random"):
        raise ConfigError(f"'problem.basis' must be 'diagonal' or 'random', got {basis!r}")
    brng = RngStream(_req_int(spec.get("basis_seed", 0), "problem.basis_seed", 0), PROBLEM_STREAM)
    x_star = _vector(spec.get("x_star", "unit"), dim, "problem.x_star")

    def spectrum(values, key):
        if not isinstance(values, list) or len(values) != dim:
            raise ConfigError(f"'{key}' must list {dim} eigenvalues")
        vals = [_req_float(v, key) for v in values]
        if min(vals) <= 0:
            raise ConfigError(f"'{key}' eigenvalues must be positive")
        return spd_with_spectrum(vals, brng if basis == "random" else None)

    if kind == "quadratic":
        h = spectrum(spec.get("eigenvalues"), "problem.eigenvalues")
        noise = spec.get("noise_cov", "isotropic")
        scale = _req_float(spec.get("noise_scale", 1.0), "problem.noise_scale")
        if noise == "isotropic":
            s0 = scale * np.eye(dim)
        elif isinstance(noise, list):
            s0 = np.array(noise, dtype=float)
            if s0.shape != (dim, dim):
                raise ConfigError(f"'problem.noise_cov' must be {dim}x{dim}")
            if np.min(np.linalg.eigvalsh(0.5 * (s0 + s0.T))) < -1e-12:
                raise ConfigError("'problem.noise_cov' must be positive semidefinite")
        else:
            raise ConfigError(f"'problem.noise_cov' must be 'isotropic' or a matrix, got {noise!r}")
        return QuadraticGaussianProblem(h, x_star, s0)
    r_spec = spec.get("R_u", "identity")
    r = np.eye(dim) if r_spec == "identity" else spectrum(r_spec, "problem.R_u")
    sigma = _req_float(spec.get("sigma_nu", 1.0), "problem.sigma_nu")
    if sigma <= 0:
        raise ConfigError("'problem.sigma_nu' must be positive")
    return LinearRegressionProblem(r, sigma, x_star)


def _schedule_for(spec: dict, kind: AlgorithmKind, problem):
    if not isinstance(spec, dict):
        raise ConfigError("'schedule' must be an object")
    allowed = {"kind", "rho", "v", "cap"}
    extra = set(spec) - allowed
    if extra:
        raise ConfigError(f"unknown config key 'schedule.{sorted(extra)[0]}'")
    cap = spec.get("cap")
    if cap is not None:
        cap = _req_int(cap, "schedule.cap")
    try:
        if spec.get("kind") == "geometric-default":
            return Geometric(default_hyperparameters(kind, problem.eta, problem.lip)[2], cap)
        if spec.get("kind") == "geometric":
            return Geometric(_req_float(spec.get("rho"), "schedule.rho"), cap)
        if spec.get("kind") == "polynomial":
            return Polynomial(_req_float(spec.get("v"), "schedule.v"), cap)
    except InadmissibleParameter as exc:
        raise ConfigError(f"'schedule': {exc}") from None
    raise ConfigError(f"'schedule.kind' must be geometric, polynomial or geometric-default, got {spec.get('kind')!r}")


def _param(value, kind: AlgorithmKind, key: str):
    if isinstance(value, dict):
        unknown = set(value) - {k.value for k in AlgorithmKind}
        if unknown:
            raise ConfigError(f"unknown algorithm '{key}.{sorted(unknown)[0]}'")
        value = value.get(kind.value, "default")
    if value == "default":
        return None
    return _req_float(value, key)


def build_solver(cfg: dict, kind: AlgorithmKind, problem, steps: int) -> SolverConfig:
    x0 = _vector(cfg["x0"], problem.dim, "x0")
    store = cfg["store"]
    if store not in ("terminal", "full"):
        raise ConfigError(f"'store' must be 'terminal' or 'full', got {store!r}")
    if kind is AlgorithmKind.BASELINE_SGD:
        bs = cfg["compare"]["baseline_step"]
        if not isinstance(bs, dict) or set(bs) - {"rule", "c"}:
            raise ConfigError("'compare.baseline_step' must be {rule, c}")
        try:
            step = BaselineStep(bs.get("rule", "matrix"), _req_float(bs.get("c", 1.0), "compare.baseline_step.c"))
        except ValueError as exc:
            raise ConfigError(f"'compare.baseline_step': {exc}") from None
        return SolverConfig(kind, step.c, x0, steps, baseline_step=step, store=store)
    a_def, b_def, _ = default_hyperparameters(kind, problem.eta, problem.lip)
    alpha = _param(cfg["alpha"], kind, "alpha")
    beta = _param(cfg["beta"], kind, "beta")
    if alpha is None:
        alpha = a_def
    if beta is None:
        if kind is AlgorithmKind.VR_ACCELERATED:
            beta = accelerated_beta(alpha, problem.eta)
        elif kind is AlgorithmKind.VR_HEAVY_BALL:
            beta = heavy_ball_beta(alpha, problem.eta, problem.lip)
        else:
            beta = b_def
    sc = SolverConfig(kind, alpha, x0, steps, beta=beta, schedule=_schedule_for(cfg["schedule"], kind, problem), store=store)
    try:
        validate(sc, problem.eta, problem.lip)
    except InadmissibleParameter as exc:
        raise ConfigError(f"{kind.value}: {exc}") from None
    return sc


def _algorithms(cfg: dict, allow_baseline: bool = False) -> list[AlgorithmKind]:
    algs = cfg["algorithms"]
    if isinstance(algs, str):
        algs = [algs]
    if not isinstance(algs, list) or not algs:
        raise ConfigError("'algorithms' must be a non-empty list")
    out = []
    for a in algs:
        try:
            k = AlgorithmKind.parse(a)
        except ValueError as exc:
            raise ConfigError(f"'algorithms': {exc}") from None
        if k is AlgorithmKind.BASELINE_SGD and not allow_baseline:
            raise ConfigError("'algorithms': the baseline is only available in the compare experiment")
        if k not in out:
            out.append(k)
    return out


# ---------------------------------------------------------------------------
# output helpers
# ---------------------------------------------------------------------------


def fmt(x) -> str:
    """Deterministic text form for CSV cells."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format(x, ".12g")
    return str(x)


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    path.write_bytes(buf.getvalue().encode("utf-8"))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def write_json(path: Path, obj) -> None:
    path.write_bytes((json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode("utf-8"))


def sig4(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x):
            return str(x)
        return format(x, ".4g")
    return str(x)


def emit_summary(rows: list[dict], seed: int, title: str = "", stream=None) -> str:
    """Aligned text table (numbers to 4 significant digits) with the seed echoed."""
    if not rows:
        raise ValueError("nothing to summarize")
    cols = list(rows[0].keys())
    cells = [[sig4(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = []
    if title:
        lines.append(title)
    lines.append("  ".join(c.rjust(w) for c, w in zip(cols, widths)))
    for row in cells:
        lines.append("  ".join(v.rjust(w) for v, w in zip(row, widths)))
    lines.append(f"seed: {seed}")
    text = "\n".join(lines) + "\n"
    if stream is not None:
        stream.write(text)
    return text


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------


def _path_task(args):
    problem, config, seed, stream = args
    traj = run(config, problem, RngStream(seed, stream))
    keep = {
        "sq_err": traj.sq_err,
        "subopt": traj.subopt,
        "cum_calls": traj.cum_calls,
        "x": traj.x,
        "x_prev": traj.x_prev,
        "y": traj.y,
        "y_prev": traj.y_prev,
    }
    return keep


def _run_paths(problem, config, seed, prefix, count, workers):
    tasks = [(problem, config, seed, prefix + (i,)) for i in range(count)]
    return ordered_map(_path_task, tasks, workers)


def _coords(kind, algorithm=None, extra=""):
    name = algorithm.value if algorithm is not None else ""
    return f"[{kind}{' ' + name if name else ''}{' ' + extra if extra else ''}]"


def exp_rates(cfg, problem, seed, out: Path, workers: int, quiet: bool):
    algs = _algorithms(cfg)
    steps = _req_int(cfg["steps"], "steps", 0)
    count = _req_int(cfg["trajectories"], "trajectories")
    solvers = {k: build_solver(cfg, k, problem, steps) for k in algs}
    out.mkdir(parents=True, exist_ok=True)
    x0 = solvers[algs[0]].x0
    nu_sq = noise_bound_surrogate(problem, x0)
    e0 = float((x0 - problem.x_star) @ (x0 - problem.x_star))
    rows, summary, meta = [], [], {"nu_sq_surrogate": nu_sq, "nu_sq_note": "trace of noise covariance at x0 (surrogate)", "algorithms": {}}
    for kind in algs:
        sc = solvers[kind]
        paths = _run_paths(problem, sc, seed, (EXPERIMENT_IDS["rates"], ALGO_IDS[kind]), count, workers)
        sq = np.array([p["sq_err"] for p in paths])
        mean_err = np.sqrt(sq).mean(axis=0)
        mse = sq.mean(axis=0)
        cum = paths[0]["cum_calls"]
        for k in range(steps + 1):
            try:
                bound = mse_upper_bound(kind, sc.schedule, k, problem.eta, problem.lip, sc.alpha, nu_sq, e0, beta=sc.beta)
            except InadmissibleParameter:
                bound = float("nan")
            rows.append([kind.value, k, batch_size(sc.schedule, k), int(cum[k]), mean_err[k], mse[k], bound])
        meta["algorithms"][kind.value] = {
            "alpha": sc.alpha,
            "beta": sc.beta,
            "schedule": describe(sc.schedule),
            "cap_binds": bool(steps and cap_binds(sc.schedule, steps - 1)),
        }
        summary.append({"algorithm": kind.value, "steps": steps, "oracle_calls": int(cum[-1]), "final_mse": float(mse[-1])})
    write_csv(out / "rates.csv", ["algorithm", "k", "N_k", "cum_oracle", "mean_err", "mse", "theory_bound"], rows)
    write_json(out / "rates.json", {"seed": seed, "trajectories": count, **meta})
    return summary


def _hist_rows(samples: np.ndarray, label: str):
    rows = []
    for j in range(samples.shape[1]):
        col = samples[:, j]
        edges = np.histogram_bin_edges(col, bins="fd")
        counts, _ = np.histogram(col, bins=edges)
        for c, lo, hi in zip(counts, edges[:-1], edges[1:]):
            rows.append([label, j + 1, lo, hi, int(c)])
    return rows


def exp_clt(cfg, problem, seed, out: Path, workers: int, quiet: bool):
    algs = _algorithms(cfg)
    ccfg = cfg["clt"]
    if set(ccfg) - {"k", "paths", "stacked"}:
        raise ConfigError(f"unknown config key 'clt.{sorted(set(ccfg) - {'k', 'paths', 'stacked'})[0]}'")
    k = _req_int(ccfg["k"], "clt.k")
    count = _req_int(ccfg["paths"], "clt.paths", 100)
    stacked = bool(ccfg["stacked"])
    solvers = {a: build_solver(cfg, a, problem, k) for a in algs}
    out.mkdir(parents=True, exist_ok=True)
    m = problem.dim
    h, s0 = problem.hessian_at_opt, problem.noise_cov_at_opt
    sample_rows, hist_rows, summary = [], [], []
    for kind in algs:
        sc = solvers[kind]
        try:
            lc = limit_covariance_for(kind, h, s0, sc.alpha, sc.beta, sc.schedule)
        except NumericalError as exc:
            raise type(exc)(f"{_coords('clt', kind)} limiting covariance: {exc}") from None
        paths = _run_paths(problem, sc, seed, (EXPERIMENT_IDS["clt"], ALGO_IDS[kind]), count, workers)
        use_y = kind is AlgorithmKind.VR_ACCELERATED
        cur = np.array([p["y"] if use_y else p["x"] for p in paths])
        prev = np.array([p["y_prev"] if use_y else p["x_prev"] for p in paths])
        scaling = scaling_for(sc)
        ens = ReplicationEnsemble(cur, k, scaling, prev)
        want_stacked = stacked and kind is not AlgorithmKind.VR_SGD
        e = rescaled_errors(ens, problem.x_star, stacked=want_stacked)
        sigma = lc.sigma if (want_stacked or kind is AlgorithmKind.VR_SGD) else lc.marginal(m)
        gaps = None
        if kind is AlgorithmKind.VR_SGD:
            c = rescale_factor(scaling, k)
            gaps = c**2 * np.array([p["subopt"][-1] for p in paths])
        diag = clt_diagnostics(e, sigma, h if gaps is not None else None, gaps)
        grad_cov, gap_mean = delta_method_covariances(h, lc.sigma[:m, :m])
        for i, row in enumerate(e):
            sample_rows.append([kind.value, i, *row])
        hist_rows.extend(_hist_rows(e, kind.value))
        write_json(
            out / f"clt_{kind.value}.json",
            {
                "seed": seed,
                "algorithm": kind.value,
                "k": k,
                "paths": count,
                "stacked": want_stacked,
                "scaling": scaling,
                "sigma": sigma,
                "sigma_full": lc.sigma,
                "residual": lc.residual,
                "terms_used": lc.terms_used,
                "construction": lc.construction,
                "norm_bounds": {lc.extra["companion"]: {"bound": lc.extra["norm_bound"], "measured": lc.extra["measured"]}},
                "grad_cov": grad_cov,
                "subopt_mean_theory": gap_mean,
                "diagnostics": diag,
            },
        )
        summary.append(
            {
                "algorithm": kind.value,
                "k": k,
                "paths": count,
                "cov_rel_dist": diag["cov_rel_distance"],
                "max_abs_skew": float(np.max(np.abs(diag["skewness"]))),
                "max_abs_exkurt": float(np.max(np.abs(diag["excess_kurtosis"]))),
                "max_ks": float(np.max(diag["ks"])),
                "ks_crit": diag["ks_critical_1pct"],
            }
        )
    width = max(len(r) for r in sample_rows) - 2
    write_csv(out / "clt_samples.csv", ["algorithm", "path", *[f"e{j + 1}" for j in range(width)]], sample_rows)
    write_csv(out / "clt_hist.csv", ["algorithm", "coord", "bin_left", "bin_right", "count"], hist_rows)
    return summary


def exp_coverage(cfg, problem, seed, out: Path, workers: int, quiet: bool):
    algs = _algorithms(cfg)
    cv = cfg["coverage"]
    allowed = {"n", "N_max", "delta", "meta_reps", "stacked"}
    if set(cv) - allowed:
        raise ConfigError(f"unknown config key 'coverage.{sorted(set(cv) - allowed)[0]}'")
    ns = [_req_int(n, "coverage.n", 2) for n in (cv["n"] if isinstance(cv["n"], list) else [cv["n"]])]
    nmax = [_req_int(v, "coverage.N_max") for v in (cv["N_max"] if isinstance(cv["N_max"], list) else [cv["N_max"]])]
    delta = _req_float(cv["delta"], "coverage.delta")
    if not 0 < delta < 1:
        raise ConfigError("'coverage.delta' must lie in (0, 1)")
    reps = _req_int(cv["meta_reps"], "coverage.meta_reps")
    stacked = bool(cv["stacked"])
    m = problem.dim * (2 if stacked else 1)
    for n in ns:
        if n <= m:
            raise ConfigError(f"'coverage.n' = {n} must exceed the region dimension {m}")
    solvers = {a: build_solver(cfg, a, problem, 1) for a in algs}
    out.mkdir(parents=True, exist_ok=True)
    rows, records, summary = [], [], []
    for kind in algs:
        cells = sorted(((b, n) for b in nmax for n in ns))
        for b, n in cells:
            ns_idx, b_idx = ns.index(n), nmax.index(b)
            try:
                res = coverage_experiment(
                    problem, solvers[kind], n, b, delta, reps, seed,
                    namespace=(EXPERIMENT_IDS["coverage"], ALGO_IDS[kind], b_idx, ns_idx),
                    workers=workers, stacked=stacked and kind is not AlgorithmKind.VR_SGD,
                )
            except VrcltError as exc:
                raise type(exc)(f"{_coords('coverage', kind, f'N_max={b} n={n}')} {exc}") from None
            rows.append([kind.value, b, n, res.steps, res.oracle_calls, res.coverage, res.half_width, float(np.mean(res.volumes))])
            records.append(
                {
                    "algorithm": kind.value,
                    "n": n,
                    "N_max": b,
                    "delta": delta,
                    "coverage": res.coverage,
                    "half_width": res.half_width,
                    "meta_reps": reps,
                    "seed": seed,
                    "steps": res.steps,
                    "oracle_calls": res.oracle_calls,
                }
            )
            summary.append({"algorithm": kind.value, "N_max": b, "n": n, "coverage": res.coverage, "half_width": res.half_width})
    header = ["algorithm", "N_max", "n", "steps", "oracle_calls", "coverage", "half_width", "mean_volume"]
    write_csv(out / "coverage.csv", header, rows)
    write_json(out / "coverage.json", records)
    return summary


def _log_grid(n_max: int, points: int) -> list[int]:
    g = np.unique(np.round(np.logspace(0, math.log10(n_max), points)).astype(np.int64))
    return [int(v) for v in g]


def exp_compare(cfg, problem, seed, out: Path, workers: int, quiet: bool):
    cc = cfg["compare"]
    allowed = {"N_max", "baseline_step", "points"}
    if set(cc) - allowed:
        raise ConfigError(f"unknown config key 'compare.{sorted(set(cc) - allowed)[0]}'")
    n_max = _req_int(cc["N_max"], "compare.N_max")
    points = _req_int(cc["points"], "compare.points", 2)
    count = _req_int(cfg["trajectories"], "trajectories")
    algs = [a for a in _algorithms(cfg, allow_baseline=True) if a is not AlgorithmKind.BASELINE_SGD]
    algs.append(AlgorithmKind.BASELINE_SGD)
    solvers = {}
    for kind in algs:
        if kind is AlgorithmKind.BASELINE_SGD:
            solvers[kind] = build_solver(cfg, kind, problem, n_max)
        else:
            sc = build_solver(cfg, kind, problem, 1)
            sc.steps = steps_for_budget(sc.schedule, n_max)
            solvers[kind] = sc
    out.mkdir(parents=True, exist_ok=True)
    rows, summary = [], []
    grid = _log_grid(n_max, points)
    for kind in algs:
        sc = solvers[kind]
        paths = _run_paths(problem, sc, seed, (EXPERIMENT_IDS["compare"], ALGO_IDS[kind]), count, workers)
        sq = np.array([p["sq_err"] for p in paths]).mean(axis=0)
        cum = paths[0]["cum_calls"]
        if kind is AlgorithmKind.BASELINE_SGD:
            idx = [0] + grid
        else:
            idx = range(len(cum))
        for k in idx:
            rows.append([kind.value, int(k), int(cum[k]), sq[k]])
        summary.append({"algorithm": kind.value, "steps": sc.steps, "oracle_calls": int(cum[-1]), "final_mse": float(sq[-1])})
    write_csv(out / "compare.csv", ["algorithm", "k", "cum_oracle", "mse"], rows)
    return summary


RUNNERS = {"rates": exp_rates, "clt": exp_clt, "coverage": exp_coverage, "compare": exp_compare}


def resolve_seed(flag, cfg_seed) -> int:
    for cand, name in ((flag, "--seed"), (cfg_seed, "seed")):
        if cand is not None:
            return _req_int(cand, name, 0)
    env = os.environ.get("VRCLT_SEED")
    if env is not None:
        try:
            return _req_int(int(env), "VRCLT_SEED", 0)
        except ValueError:
            raise ConfigError(f"VRCLT_SEED must be a non-negative integer, got {env!r}") from None
    return 0


def run_experiment(experiment: str, cfg: dict, out_dir: str, seed: int, workers: int = 1, quiet: bool = False):
    if experiment not in RUNNERS:
        raise ConfigError(f"unknown experiment {experiment!r}")
    problem = build_problem(cfg["problem"])
    summary = RUNNERS[experiment](cfg, problem, seed, Path(out_dir), resolve_workers(workers), quiet)
    if not quiet:
        emit_summary(summary, seed, title=experiment, stream=sys.stdout)
    return summary


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vrclt", description="Variance-reduced SGD experiments")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--config", help="JSON configuration file")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config entry by dotted path (repeatable)")
    p.add_argument("--out-dir", default="vrclt-out", help="directory for CSV/JSON outputs")
    p.add_argument("--seed", type=int, default=None, help="master seed (falls back to config, then VRCLT_SEED)")
    p.add_argument("--workers", type=int, default=1, help="worker processes, 0 = one per CPU")
    p.add_argument("--quiet", action="store_true", help="suppress the summary table")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 0:
            raise ConfigError("--workers must be >= 0")
        cfg = load_config(args.config, args.overrides)
        seed = resolve_seed(args.seed, cfg.get("seed"))
        run_experiment(args.experiment, cfg, args.out_dir, seed, args.workers, args.quiet)
    except (ConfigError, InadmissibleParameter) as exc:
        print(f"vrclt: config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"vrclt: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
