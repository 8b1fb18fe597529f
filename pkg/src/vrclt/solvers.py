"""Variance-reduced gradient iterations and a decreasing-step SGD baseline.

All three VR methods draw one batch of ``N_k`` sampled gradients per step,
with ``N_k`` given by a :mod:`~vrclt.schedules` schedule:

* ``vr_sgd``:          ``x+ = x - alpha g(x)``
* ``vr_accelerated``:  ``y+ = x - alpha g(x)``, ``x+ = y+ + beta (y+ - y)``
* ``vr_heavy_ball``:   ``x+ = x - alpha g(x) + beta (x - x_prev)``

``g`` is the batch-mean sampled gradient. The baseline uses a single sample
per step with step ``c/(k+1)`` or ``H^-1/(k+1)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InadmissibleAlpha, InadmissibleBeta, MatrixStepUnavailable
from .numerics import RngStream, cholesky
from .problems import StochasticProblem
from .schedules import (
    AlgorithmKind,
    BatchSchedule,
    Geometric,
    batch_size,
    default_rho,
)

ADMISSIBILITY_RTOL = 1e-12


@dataclass(frozen=True)
class BaselineStep:
    """Step rule for the decreasing-step baseline.

    ``rule="scalar"`` uses ``c/(k+1)``; ``rule="matrix"`` uses ``c H^-1/(k+1)``
    with ``H`` the Hessian at the optimum (``c = 1`` is the usual choice).
    """

    rule: str = "scalar"
    c: float = 1.0

    def __post_init__(self):
        if self.rule not in ("scalar", "matrix"):
            raise ValueError(f"unknown baseline step rule {self.rule!r}")
        if self.c < 0:
            raise ValueError("baseline step constant must be non-negative")


@dataclass
class SolverConfig:
    kind: AlgorithmKind
    alpha: float
    x0: np.ndarray
    steps: int
    beta: float = 0.0
    schedule: BatchSchedule | None = None
    baseline_step: BaselineStep | None = None
    store: str = "terminal"

    def __post_init__(self):
        self.kind = AlgorithmKind.parse(self.kind)
        self.x0 = np.asarray(self.x0, dtype=float).copy()
        if int(self.steps) != self.steps or self.steps < 0:
            raise ValueError(f"steps must be a non-negative integer, got {self.steps}")
        self.steps = int(self.steps)
        if self.store not in ("terminal", "full"):
            raise ValueError(f"store must be 'terminal' or 'full', got {self.store!r}")
        if self.kind is AlgorithmKind.BASELINE_SGD:
            if self.baseline_step is None:
                self.baseline_step = BaselineStep("scalar", self.alpha)
        elif self.schedule is None:
            raise ValueError(f"{self.kind.value} needs a batch schedule")

    @classmethod
    def with_defaults(cls, kind, problem: StochasticProblem, steps: int, schedule=None, x0=None, **kw):
        """Config with the default step size, momentum and geometric schedule."""
        kind = AlgorithmKind.parse(kind)
        if x0 is None:
            x0 = np.zeros(problem.dim)
        if kind is AlgorithmKind.BASELINE_SGD:
            step = kw.pop("baseline_step", None) or BaselineStep("matrix", 1.0)
            return cls(kind, step.c, x0, steps, baseline_step=step, **kw)
        alpha, beta, rho = default_hyperparameters(kind, problem.eta, problem.lip)
        if schedule is None:
            schedule = Geometric(rho)
        return cls(kind, alpha, x0, steps, beta=beta, schedule=schedule, **kw)


def default_hyperparameters(kind, eta: float, lip: float) -> tuple[float, float, float]:
    """Default ``(alpha, beta, rho)``; ``beta`` is 0 for plain VR-SGD."""
    kind = AlgorithmKind.parse(kind)
    rho = default_rho(kind, eta, lip)
    kappa = lip / eta
    sk = math.sqrt(kappa)
    if kind is AlgorithmKind.VR_SGD:
        return 2.0 / (eta + lip), 0.0, rho
    if kind is AlgorithmKind.VR_ACCELERATED:
        return 1.0 / lip, (sk - 1.0) / (sk + 1.0), rho
    return 4.0 / (math.sqrt(eta) + math.sqrt(lip)) ** 2, ((sk - 1.0) / (sk + 1.0)) ** 2, rho


def accelerated_beta(alpha: float, eta: float) -> float:
    g = math.sqrt(alpha * eta)
    return (1.0 - g) / (1.0 + g)


def heavy_ball_beta(alpha: float, eta: float, lip: float) -> float:
    return max((1.0 - math.sqrt(alpha * eta)) ** 2, (1.0 - math.sqrt(alpha * lip)) ** 2)


def validate(config: SolverConfig, eta: float, lip: float) -> None:
    """Raise if ``(alpha, beta)`` lie outside the region where the rate results hold."""
    kind, a, b = config.kind, config.alpha, config.beta
    slack = 1.0 + ADMISSIBILITY_RTOL
    if kind is AlgorithmKind.BASELINE_SGD:
        return
    if not a > 0:
        raise InadmissibleAlpha(f"alpha must be positive, got {a}")
    if kind is AlgorithmKind.VR_SGD:
        if a > 2.0 / (eta + lip) * slack:
            raise InadmissibleAlpha(f"vr_sgd needs alpha <= 2/(eta+L) = {2 / (eta + lip):.6g}, got {a}")
    elif kind is AlgorithmKind.VR_ACCELERATED:
        if a > slack / lip:
            raise InadmissibleAlpha(f"vr_accelerated needs alpha <= 1/L = {1 / lip:.6g}, got {a}")
        want = accelerated_beta(a, eta)
        if not math.isclose(b, want, rel_tol=1e-9, abs_tol=1e-12):
            raise InadmissibleBeta(f"vr_accelerated needs beta = (1-gamma)/(1+gamma) = {want:.12g}, got {b}")
    elif kind is AlgorithmKind.VR_HEAVY_BALL:
        if a >= 4.0 / lip:
            raise InadmissibleAlpha(f"vr_heavy_ball needs alpha < 4/L = {4 / lip:.6g}, got {a}")
        want = heavy_ball_beta(a, eta, lip)
        if want >= 1.0:
            raise InadmissibleBeta(f"heavy-ball momentum {want} is not below 1")
        if not math.isclose(b, want, rel_tol=1e-9, abs_tol=1e-12):
            raise InadmissibleBeta(f"vr_heavy_ball needs beta = {want:.12g} for alpha={a}, got {b}")


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------


def vr_sgd_step(x, problem: StochasticProblem, alpha: float, n: int, rng: RngStream) -> np.ndarray:
    return x - alpha * problem.batch_mean(x, n, rng)


def vr_accel_step(x, y, problem: StochasticProblem, alpha: float, beta: float, n: int, rng: RngStream):
    """One accelerated step; returns ``(x_next, y_next)``."""
    y_next = x - alpha * problem.batch_mean(x, n, rng)
    return y_next + beta * (y_next - y), y_next


def vr_heavy_ball_step(x, x_prev, problem: StochasticProblem, alpha: float, beta: float, n: int, rng: RngStream):
    return x - alpha * problem.batch_mean(x, n, rng) + beta * (x - x_prev)


# ---------------------------------------------------------------------------
# trajectories
# ---------------------------------------------------------------------------


@dataclass
class Trajectory:
    """Outcome of one run.

    ``x``/``x_prev`` are the last two primary iterates. For the accelerated
    method ``y``/``y_prev`` hold the last two gradient-step iterates, and
    ``sq_err_y`` tracks ``|y_k - x*|^2``. Per-step arrays have length
    ``steps + 1`` (index ``k`` refers to iterate ``k``); ``batch_sizes`` has
    length ``steps``. ``iterates``/``y_iterates`` are filled only when the
    config asks for ``store="full"``.
    """

    kind: AlgorithmKind
    steps: int
    x: np.ndarray
    x_prev: np.ndarray
    sq_err: np.ndarray
    subopt: np.ndarray
    batch_sizes: np.ndarray
    cum_calls: np.ndarray
    provenance: dict
    y: np.ndarray | None = None
    y_prev: np.ndarray | None = None
    sq_err_y: np.ndarray | None = None
    iterates: list | None = None
    y_iterates: list | None = None
    cap_bound: bool = False
    extra: dict = field(default_factory=dict)

    @property
    def oracle_calls(self) -> int:
        return int(self.cum_calls[-1])

    def primary(self) -> np.ndarray:
        """Terminal iterate used for inference: ``y_k`` if accelerated, else ``x_k``."""
        return self.y if self.kind is AlgorithmKind.VR_ACCELERATED else self.x

    def primary_prev(self) -> np.ndarray:
        return self.y_prev if self.kind is AlgorithmKind.VR_ACCELERATED else self.x_prev


def _batch_sizes(config: SolverConfig) -> tuple[np.ndarray, bool]:
    s = config.schedule
    sizes = np.array([batch_size(s, k) for k in range(config.steps)], dtype=np.int64)
    capped = s.cap is not None and config.steps > 0 and int(sizes.max(initial=0)) >= s.cap
    return sizes, capped


def run(config: SolverConfig, problem: StochasticProblem, rng: RngStream, validate_params: bool = True) -> Trajectory:
    """Run ``config.steps`` iterations; deterministic given ``rng``.

    Set ``validate_params=False`` to run with parameters outside the
    admissible region (e.g. momentum zero with a non-unit condition number).
    """
    if config.kind is AlgorithmKind.BASELINE_SGD:
        return baseline_sgd_run(problem, config.x0, config.steps, config.baseline_step, rng, store=config.store)
    if validate_params:
        validate(config, problem.eta, problem.lip)
    if config.x0.shape != (problem.dim,):
        raise ValueError(f"x0 has shape {config.x0.shape}, problem dimension is {problem.dim}")

    kind, alpha, beta, K = config.kind, config.alpha, config.beta, config.steps
    sizes, capped = _batch_sizes(config)
    full = config.store == "full"
    accel = kind is AlgorithmKind.VR_ACCELERATED

    x = config.x0.copy()
    x_prev = x.copy()
    y = x.copy()
    y_prev = y.copy()
    sq = np.empty(K + 1)
    sub = np.empty(K + 1)
    sq_y = np.empty(K + 1) if accel else None
    xs = problem.x_star
    sq[0] = float((x - xs) @ (x - xs))
    sub[0] = problem.suboptimality(x)
    if accel:
        sq_y[0] = sq[0]
    iterates = [x.copy()] if full else None
    y_iterates = [y.copy()] if (full and accel) else None

    for k in range(K):
        n = int(sizes[k])
        if kind is AlgorithmKind.VR_SGD:
            x_prev, x = x, vr_sgd_step(x, problem, alpha, n, rng)
        elif accel:
            y_prev = y
            x_new, y = vr_accel_step(x, y_prev, problem, alpha, beta, n, rng)
            x_prev, x = x, x_new
            d = y - xs
            sq_y[k + 1] = float(d @ d)
        else:
            x_prev, x = x, vr_heavy_ball_step(x, x_prev, problem, alpha, beta, n, rng)
        d = x - xs
        sq[k + 1] = float(d @ d)
        sub[k + 1] = problem.suboptimality(x)
        if full:
            iterates.append(x.copy())
            if accel:
                y_iterates.append(y.copy())

    cum = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    return Trajectory(
        kind=kind,
        steps=K,
        x=x,
        x_prev=x_prev,
        sq_err=sq,
        subopt=sub,
        batch_sizes=sizes,
        cum_calls=cum,
        provenance={"seed": rng.seed, "stream_id": list(rng.stream_id)},
        y=y if accel else None,
        y_prev=y_prev if accel else None,
        sq_err_y=sq_y,
        iterates=iterates,
        y_iterates=y_iterates,
        cap_bound=capped,
    )


def baseline_sgd_run(
    problem: StochasticProblem,
    x0,
    steps: int,
    step_rule: BaselineStep,
    rng: RngStream,
    store: str = "terminal",
) -> Trajectory:
    """Classical SGD, one fresh sample per step, step ``c/(k+1)`` or ``H^-1/(k+1)``."""
    x = np.asarray(x0, dtype=float).copy()
    if x.shape != (problem.dim,):
        raise ValueError(f"x0 has shape {x.shape}, problem dimension is {problem.dim}")
    if step_rule.rule == "matrix":
        h = getattr(problem, "hessian_at_opt", None)
        if h is None:
            raise MatrixStepUnavailable("matrix step needs a closed-form Hessian")
        factor = cholesky(h)
        precond = factor.solve
    else:
        precond = None
    c = step_rule.c
    xs = problem.x_star
    sq = np.empty(steps + 1)
    sub = np.empty(steps + 1)
    sq[0] = float((x - xs) @ (x - xs))
    sub[0] = problem.suboptimality(x)
    iterates = [x.copy()] if store == "full" else None
    x_prev = x.copy()
    for k in range(steps):
        g = problem.sample_gradient(x, rng)
        step = c * (precond(g) if precond is not None else g)
        x_prev, x = x, x - step / (k + 1)
        d = x - xs
        sq[k + 1] = float(d @ d)
        sub[k + 1] = problem.suboptimality(x)
        if iterates is not None:
            iterates.append(x.copy())
    return Trajectory(
        kind=AlgorithmKind.BASELINE_SGD,
        steps=steps,
        x=x,
        x_prev=x_prev,
        sq_err=sq,
        subopt=sub,
        batch_sizes=np.ones(steps, dtype=np.int64),
        cum_calls=np.arange(steps + 1, dtype=np.int64),
        provenance={"seed": rng.seed, "stream_id": list(rng.stream_id)},
        iterates=iterates,
    )
