"""Rate constants, mean-squared-error bounds and limiting covariances.

Naming: ``e0_sq`` is ``E|x_0 - x*|^2`` and ``nu_sq`` the per-sample noise
bound. Companion matrices come in two groups:

* ``P1`` and ``A`` (``A = I - alpha H``) are symmetric, so their spectral norm
  and spectral radius coincide.
* ``H2``, ``P2``, ``P3_core`` (``H3``) and ``P3`` are ``2m x 2m`` block
  matrices with an identity block in the lower-left corner. They are not
  normal and their 2-norm is always at least 1. Their closed-form bounds
  are bounds on the spectral radius, which is what governs convergence of the
  covariance series, so :meth:`CompanionMatrix.check` compares those bounds
  against the spectral radius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    InadmissibleAlpha,
    InadmissibleParameter,
    InadmissibleRho,
    TruncationNotConverged,
    Unstable,
)
from .numerics import spectral_norm, spectral_radius, sym_eig
from .schedules import AlgorithmKind, BatchSchedule, Geometric, Polynomial

STABILITY_MARGIN = 1e-10
ADMISSIBILITY_RTOL = 1e-12


# ---------------------------------------------------------------------------
# rate constants
# ---------------------------------------------------------------------------


def c_qv(q: float, v: float) -> float:
    """Smallest ``c`` with ``q^x <= c x^-v`` for all ``x > 0``: ``e^-v (v / ln(1/q))^v``."""
    if not 0 <= q < 1:
        raise ValueError(f"q must lie in [0, 1), got {q}")
    if v <= 0:
        raise ValueError(f"v must be positive, got {v}")
    if q == 0:
        return 0.0
    return math.exp(-v) * (v / math.log(1.0 / q)) ** v


@dataclass(frozen=True)
class RateConstants:
    q: float
    gamma: float
    beta_hb: float
    kappa: float
    contraction: float
    c_qv: float | None = None


def sgd_contraction(alpha: float, eta: float, lip: float) -> float:
    q = 1.0 - 2.0 * alpha * eta * lip / (eta + lip)
    return max(q, 0.0)


def _check_alpha(kind: AlgorithmKind, alpha: float, eta: float, lip: float) -> None:
    slack = 1.0 + ADMISSIBILITY_RTOL
    if not alpha > 0:
        raise InadmissibleAlpha(f"alpha must be positive, got {alpha}")
    if kind is AlgorithmKind.VR_SGD and alpha > 2.0 / (eta + lip) * slack:
        raise InadmissibleAlpha(f"alpha={alpha} exceeds 2/(eta+L)={2 / (eta + lip):.6g}")
    if kind is AlgorithmKind.VR_ACCELERATED and alpha > slack / lip:
        raise InadmissibleAlpha(f"alpha={alpha} exceeds 1/L={1 / lip:.6g}")
    if kind is AlgorithmKind.VR_HEAVY_BALL and alpha >= 4.0 / lip:
        raise InadmissibleAlpha(f"alpha={alpha} is not below 4/L={4 / lip:.6g}")
    if kind is AlgorithmKind.BASELINE_SGD:
        raise InadmissibleParameter("no rate constants for the decreasing-step baseline")


def rate_constants(kind, alpha: float, eta: float, lip: float, v: float | None = None) -> RateConstants:
    """Contraction factors for step size ``alpha``.

    ``contraction`` is the factor relevant to ``kind``: ``q`` for VR-SGD,
    ``1 - gamma`` for the accelerated method and ``beta_hb`` for heavy-ball.
    ``c_qv`` is evaluated at that factor when ``v`` is given.
    """
    kind = AlgorithmKind.parse(kind)
    if not 0 < eta <= lip:
        raise InadmissibleParameter(f"need 0 < eta <= L, got eta={eta}, L={lip}")
    _check_alpha(kind, alpha, eta, lip)
    q = sgd_contraction(alpha, eta, lip)
    gamma = math.sqrt(alpha * eta)
    beta_hb = max((1.0 - gamma) ** 2, (1.0 - math.sqrt(alpha * lip)) ** 2)
    contraction = {
        AlgorithmKind.VR_SGD: q,
        AlgorithmKind.VR_ACCELERATED: max(1.0 - gamma, 0.0),
        AlgorithmKind.VR_HEAVY_BALL: beta_hb,
    }[kind]
    c = c_qv(contraction, v) if v is not None else None
    return RateConstants(q, gamma, beta_hb, lip / eta, contraction, c)


# ---------------------------------------------------------------------------
# MSE bounds
# ---------------------------------------------------------------------------


def _poly_sum_coeffs(q: float, v: float) -> tuple[float, float]:
    """``(a, b)`` with ``sum_{t=1}^k q^(k-t) t^-v <= a q^k + b k^-v``."""
    if q == 0:
        return 0.0, 1.0
    return (math.exp(2 * v) / q - 1.0) / (1.0 - q), 2.0 / (q * math.log(1.0 / q))


def _acc_noise_weight(alpha: float, eta: float, gamma: float) -> float:
    return alpha + (1.0 - gamma) * gamma / (2.0 * eta)


def mse_upper_bound(
    kind,
    schedule: BatchSchedule,
    k: int,
    eta: float,
    lip: float,
    alpha: float,
    nu_sq: float,
    e0_sq: float,
    beta: float | None = None,
    target: str = "x",
) -> float:
    """Closed-form upper bound at step ``k``.

    ``target`` selects the quantity bounded:

    * ``"x"``: ``E|x_k - x*|^2`` (all methods);
    * ``"y"``: ``E|y_k - x*|^2`` (accelerated);
    * ``"f"``: ``E f(y_k) - f*`` (accelerated);
    * ``"stacked"``: ``E|(x_k; x_{k-1}) - (x*; x*)|^2`` (heavy-ball).

    Under a polynomial schedule the bounds hold for ``k >= 1``; at ``k = 0``
    the exact value ``e0_sq`` (or ``(eta+L)/2 e0_sq`` for ``"f"``) is returned.
    For the accelerated ``"x"`` target the momentum ``beta`` defaults to
    ``(1-gamma)/(1+gamma)``. The ``x`` bound for heavy-ball at step ``k``
    is the stacked bound of the transition ``k-1 -> k``.
    """
    kind = AlgorithmKind.parse(kind)
    if k < 0:
        raise ValueError("k must be non-negative")
    rc = rate_constants(kind, alpha, eta, lip)
    valid = {
        AlgorithmKind.VR_SGD: ("x",),
        AlgorithmKind.VR_ACCELERATED: ("x", "y", "f"),
        AlgorithmKind.VR_HEAVY_BALL: ("x", "stacked"),
    }[kind]
    if target not in valid:
        raise ValueError(f"target {target!r} not available for {kind.value}; choose from {valid}")
    if nu_sq == 0 and e0_sq == 0:
        return 0.0
    gamma = rc.gamma

    if kind is AlgorithmKind.VR_ACCELERATED:
        if beta is None:
            beta = (1.0 - gamma) / (1.0 + gamma)
        if target == "x":
            if k == 0:
                return float(e0_sq)
            yk = mse_upper_bound(kind, schedule, k, eta, lip, alpha, nu_sq, e0_sq, target="y")
            if isinstance(schedule, Geometric):
                rho = float(schedule.rho)
                # c (2(1+beta)^2 + 2 beta^2 / rho) rho^k with c the y-constant
                return yk * (2 * (1 + beta) ** 2 + 2 * beta**2 / rho)
            ykm1 = mse_upper_bound(kind, schedule, k - 1, eta, lip, alpha, nu_sq, e0_sq, target="y")
            return 2 * (1 + beta) ** 2 * yk + 2 * beta**2 * ykm1
        if target == "y":
            if isinstance(schedule, Polynomial) and k == 0:
                return float(e0_sq)
            return 2.0 / eta * mse_upper_bound(kind, schedule, k, eta, lip, alpha, nu_sq, e0_sq, target="f")
        # target == "f"
        w = _acc_noise_weight(alpha, eta, gamma)
        if isinstance(schedule, Geometric):
            rho = _admissible_rho(schedule, 1.0 - gamma, "1 - gamma")
            const = (eta + lip) / 2 * e0_sq + rho * nu_sq / (rho - (1.0 - gamma)) * w
            return rho**k * const
        if k == 0:
            return (eta + lip) / 2 * e0_sq
        return poly_constant(kind, schedule.v, eta, lip, alpha, nu_sq, e0_sq) * k ** (-schedule.v)

    if kind is AlgorithmKind.VR_SGD:
        if isinstance(schedule, Geometric):
            rho = _admissible_rho(schedule, rc.q, "q")
            return rho**k * (e0_sq + alpha**2 * nu_sq / (1.0 - rc.q / rho))
        if k == 0:
            return float(e0_sq)
        return poly_constant(kind, schedule.v, eta, lip, alpha, nu_sq, e0_sq) * k ** (-schedule.v)

    # heavy-ball
    b = rc.beta_hb
    if target == "stacked":
        # bound on the stacked error after the transition k -> k+1 is
        # evaluated at index k+1; here "stacked" at k refers to (x_k; x_{k-1}).
        if k == 0:
            return 2.0 * e0_sq
    if k == 0:
        return float(e0_sq)
    if isinstance(schedule, Geometric):
        rho = _admissible_rho(schedule, b, "beta")
        return (2.0 * e0_sq + alpha**2 * nu_sq / (1.0 - b / rho)) * rho**k
    return poly_constant(kind, schedule.v, eta, lip, alpha, nu_sq, e0_sq) * k ** (-schedule.v)


def _admissible_rho(schedule: Geometric, contraction: float, name: str) -> float:
    rho = float(schedule.rho)
    if not rho > contraction:
        raise InadmissibleRho(f"rho={rho} must exceed the contraction factor {name}={contraction:.6g}")
    return rho


def poly_constant(kind, v: float, eta: float, lip: float, alpha: float, nu_sq: float, e0_sq: float) -> float:
    """Constant ``C(v)`` multiplying ``k^-v`` in the polynomial-schedule bounds.

    * VR-SGD, bound on ``E|x_k - x*|^2``:
      ``c e0 + a^2 nu^2 c (e^{2v}/q - 1)/(1-q) + 2 a^2 nu^2 / (q ln(1/q))``, ``c = c_{q,v}``.
    * accelerated, bound on ``E f(y_k) - f*``, with ``r = 1 - gamma``:
      ``(eta+L)/2 e0 c + nu^2 (alpha + r gamma/(2 eta)) (c (e^{2v}/r - 1)/gamma + 2/(r ln(1/r)))``.
    * heavy-ball, bound on the stacked error, with ``b = beta``:
      ``2 c e0 + a^2 nu^2 (c (e^{2v}/b - 1)/(1-b) + 2/(b ln(1/b)))``.

    Each is assembled from the one-step recursion, the bound
    ``sum_{t<=k} q^(k-t) t^-v <= q^k (e^{2v}/q - 1)/(1-q) + 2 k^-v/(q ln 1/q)``
    and ``q^k <= c_{q,v} k^-v``.
    """
    kind = AlgorithmKind.parse(kind)
    rc = rate_constants(kind, alpha, eta, lip)
    r = rc.contraction
    a_coef, b_coef = _poly_sum_coeffs(r, v)
    c = c_qv(r, v)
    if kind is AlgorithmKind.VR_SGD:
        return c * e0_sq + alpha**2 * nu_sq * (c * a_coef + b_coef)
    if kind is AlgorithmKind.VR_ACCELERATED:
        w = _acc_noise_weight(alpha, eta, rc.gamma)
        # the accelerated sum bound carries 1/gamma = 1/(1-r) in place of 1/(1-q)
        return (eta + lip) / 2 * e0_sq * c + nu_sq * w * (c * a_coef + b_coef)
    return 2.0 * c * e0_sq + alpha**2 * nu_sq * (c * a_coef + b_coef)


def one_step_bound(kind, alpha: float, eta: float, lip: float, prev: float, nu_sq: float, n_k: int) -> float:
    """Right-hand side of the one-step recursions.

    VR-SGD: ``q prev + alpha^2 nu^2 / N_k`` with ``prev = E|x_k - x*|^2``.
    Heavy-ball: ``beta prev + alpha^2 nu^2 / N_k`` with ``prev`` the stacked MSE.
    """
    kind = AlgorithmKind.parse(kind)
    rc = rate_constants(kind, alpha, eta, lip)
    if kind is AlgorithmKind.VR_SGD:
        return rc.q * prev + alpha**2 * nu_sq / n_k
    if kind is AlgorithmKind.VR_HEAVY_BALL:
        return rc.beta_hb * prev + alpha**2 * nu_sq / n_k
    raise InadmissibleParameter("one-step recursion is stated for vr_sgd and vr_heavy_ball only")


# ---------------------------------------------------------------------------
# companion matrices
# ---------------------------------------------------------------------------

COMPANION_LABELS = ("P1", "A", "H2", "P2", "P3_core", "P3")


@dataclass
class CompanionMatrix:
    label: str
    matrix: np.ndarray
    norm_bound: float
    bound_kind: str  # "norm" or "radius"

    def measured(self) -> float:
        if self.bound_kind == "norm":
            return spectral_norm(self.matrix)
        return spectral_radius(self.matrix)

    def check(self, atol: float | None = None) -> bool:
        """Whether the measured value respects the bound.

        At the default momentum the block matrices have a defective eigenvalue
        sitting exactly on the bound, and computed eigenvalues of a Jordan
        block are only accurate to about ``sqrt(machine eps)``; hence the
        looser default tolerance for radius bounds.
        """
        if atol is None:
            atol = 1e-8 if self.bound_kind == "norm" else 1e-6
        return self.measured() <= self.norm_bound + atol


def companion_matrix(label: str, alpha: float, beta: float, rho: float | None, hessian) -> CompanionMatrix:
    """Assemble a companion matrix and its closed-form bound.

    ``rho`` is needed for the scaled labels ``P1``, ``P2``, ``P3``. The bounds
    use the spectrum of ``hessian``: ``eta`` its smallest eigenvalue and ``L``
    its largest. ``beta`` is ignored for ``P1`` and ``A``.
    """
    h = np.asarray(hessian, dtype=float)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"Hessian must be square, got shape {h.shape}")
    if label not in COMPANION_LABELS:
        raise ValueError(f"unknown companion label {label!r}; choose from {COMPANION_LABELS}")
    m = h.shape[0]
    evals, _ = sym_eig(h)
    eta, lip = float(evals[-1]), float(evals[0])
    eye = np.eye(m)
    a = eye - alpha * h
    if label in ("P1", "P2", "P3"):
        if rho is None or not 0 < rho < 1:
            raise InadmissibleRho(f"{label} needs rho in (0, 1), got {rho}")
        scale = rho**-0.5
    q = sgd_contraction(alpha, eta, lip)
    gamma = math.sqrt(alpha * eta)

    if label == "A":
        return CompanionMatrix(label, a, math.sqrt(q), "norm")
    if label == "P1":
        return CompanionMatrix(label, scale * a, math.sqrt(q / rho), "norm")
    if label in ("H2", "P2"):
        top = np.hstack([(1 + beta) * a, -beta * a])
        mat = np.vstack([top, np.hstack([eye, np.zeros((m, m))])])
        if label == "H2":
            return CompanionMatrix(label, mat, 1.0 - gamma, "radius")
        return CompanionMatrix(label, scale * mat, (1.0 - gamma) / math.sqrt(rho), "radius")
    top = np.hstack([(1 + beta) * eye - alpha * h, -beta * eye])
    mat = np.vstack([top, np.hstack([eye, np.zeros((m, m))])])
    if label == "P3_core":
        return CompanionMatrix(label, mat, math.sqrt(beta), "radius")
    return CompanionMatrix(label, scale * mat, math.sqrt(beta / rho), "radius")


def stacked_input(m: int) -> np.ndarray:
    """``G = [I; 0]`` mapping gradient noise into the stacked state."""
    return np.vstack([np.eye(m), np.zeros((m, m))])


# ---------------------------------------------------------------------------
# limiting covariances
# ---------------------------------------------------------------------------


@dataclass
class LimitCovariance:
    sigma: np.ndarray
    residual: float
    terms_used: int
    construction: str
    extra: dict = field(default_factory=dict)

    def marginal(self, m: int) -> np.ndarray:
        """Leading ``m x m`` block (the current-iterate marginal for stacked states)."""
        return self.sigma[:m, :m]


def _forcing(g, s0) -> np.ndarray:
    s0 = np.atleast_2d(np.asarray(s0, dtype=float))
    g = np.eye(s0.shape[0]) if g is None else np.atleast_2d(np.asarray(g, dtype=float))
    if g.shape[1] != s0.shape[0]:
        raise ValueError(f"G has {g.shape[1]} columns but S0 is {s0.shape[0]}x{s0.shape[0]}")
    m = g @ s0 @ g.T
    return 0.5 * (m + m.T)


def _check_stable(p: np.ndarray) -> float:
    r = spectral_radius(p)
    if r >= 1.0 - STABILITY_MARGIN:
        raise Unstable(f"spectral radius {r:.12g} is not below 1")
    return r


def lyapunov_residual(p, forcing, sigma) -> float:
    p = np.atleast_2d(np.asarray(p, dtype=float))
    return float(np.linalg.norm(sigma - forcing - p @ sigma @ p.T))


def limit_covariance_geometric(p, g, s0, tol: float = 1e-14, max_doublings: int = 200) -> LimitCovariance:
    """Solve ``Sigma = G S0 G^T + P Sigma P^T`` by the doubling iteration.

    After ``j`` doublings ``Sigma`` holds the first ``2^j`` terms of
    ``sum_t P^t G S0 G^T (P^t)^T``. Stops once an update is below
    ``tol * max(1, |Sigma|_F)``.
    """
    p = np.atleast_2d(np.asarray(p, dtype=float))
    forcing = _forcing(g, s0)
    if forcing.shape != p.shape:
        raise ValueError(f"P is {p.shape} but G S0 G^T is {forcing.shape}")
    _check_stable(p)
    sigma = forcing.copy()
    pk = p.copy()
    for j in range(1, max_doublings + 1):
        upd = pk @ sigma @ pk.T
        sigma = sigma + upd
        pk = pk @ pk
        if np.linalg.norm(upd) <= tol * max(1.0, np.linalg.norm(sigma)):
            break
    else:
        raise TruncationNotConverged(f"doubling did not converge in {max_doublings} iterations")
    sigma = 0.5 * (sigma + sigma.T)
    res = lyapunov_residual(p, forcing, sigma)
    return LimitCovariance(sigma, res, 2**j, "lyapunov", {"doublings": j})


def _series_terms(a: np.ndarray, forcing: np.ndarray, rel: float = 1e-18, patience: int = 8, max_terms: int = 10**6):
    """``T_j = A^j F (A^j)^T`` until the terms are negligible for ``patience`` steps in a row."""
    terms = [forcing]
    total = np.linalg.norm(forcing)
    t = forcing
    quiet = 0
    while len(terms) < max_terms:
        t = a @ t @ a.T
        nt = np.linalg.norm(t)
        total += nt
        terms.append(t)
        quiet = quiet + 1 if nt <= rel * max(total, 1e-300) else 0
        if quiet >= patience or nt == 0.0:
            return np.array(terms)
    raise TruncationNotConverged(f"series terms still significant after {max_terms} terms")


def polynomial_partial_sum(a, g, s0, v: float, k: int, _terms: np.ndarray | None = None) -> np.ndarray:
    """``sum_{t=1}^k (k/t)^v A^{k-t} G S0 G^T (A^{k-t})^T``.

    Written with ``j = k - t`` as ``sum_{j<k} (k/(k-j))^v T_j``. Terms beyond the
    point where ``T_j`` is negligible are dropped, so the cost does not grow
    with ``k``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    terms = _series_terms(a, _forcing(g, s0)) if _terms is None else _terms
    if k < 1:
        raise ValueError("k must be at least 1")
    n = min(k, len(terms))
    j = np.arange(n, dtype=float)
    w = (k / (k - j)) ** v
    return np.tensordot(w, terms[:n], axes=1)


def limit_covariance_polynomial(
    a, g, s0, v: float, k_trunc: int = 1000, tol: float = 1e-6, k_max: int = 2**40
) -> LimitCovariance:
    """Limit of the polynomially weighted series, by k-versus-2k doubling.

    Evaluates the partial sum at ``k`` and ``2k``, doubling ``k`` from
    ``k_trunc`` until ``|Sigma(2k) - Sigma(k)|_F < tol``; returns ``Sigma(2k)``.
    The gap shrinks like ``1/k``.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    forcing = _forcing(g, s0)
    if forcing.shape != a.shape:
        raise ValueError(f"A is {a.shape} but G S0 G^T is {forcing.shape}")
    _check_stable(a)
    if v < 0:
        raise ValueError("v must be non-negative")
    terms = _series_terms(a, forcing)
    k = max(int(k_trunc), 1)
    cur = polynomial_partial_sum(a, g, s0, v, k, terms)
    while True:
        nxt = polynomial_partial_sum(a, g, s0, v, 2 * k, terms)
        diff = float(np.linalg.norm(nxt - cur))
        if diff < tol:
            sigma = 0.5 * (nxt + nxt.T)
            return LimitCovariance(sigma, diff, len(terms), "truncated_polynomial", {"k_eval": 2 * k})
        k *= 2
        if 2 * k > k_max:
            raise TruncationNotConverged(f"k-vs-2k gap {diff:.3g} still above tol={tol} at k={k}")
        cur = nxt


def delta_method_covariances(hessian, sigma) -> tuple[np.ndarray, float]:
    """Gradient covariance ``H Sigma H`` and mean suboptimality ``tr(H Sigma)/2``."""
    h = np.atleast_2d(np.asarray(hessian, dtype=float))
    s = np.atleast_2d(np.asarray(sigma, dtype=float))
    if h.shape != s.shape:
        raise ValueError(f"H is {h.shape} but Sigma is {s.shape}")
    return h @ s @ h, 0.5 * float(np.trace(h @ s))


def limit_covariance_for(kind, hessian, s0, alpha: float, beta: float, schedule: BatchSchedule, tol=None):
    """Limiting covariance of the rescaled error for one of the VR methods.

    VR-SGD gives an ``m x m`` matrix. The momentum methods give a ``2m x 2m``
    stacked covariance of (current, previous) primary iterates; use
    :meth:`LimitCovariance.marginal` for the current iterate alone.
    """
    kind = AlgorithmKind.parse(kind)
    h = np.atleast_2d(np.asarray(hessian, dtype=float))
    m = h.shape[0]
    geometric = isinstance(schedule, Geometric)
    rho = float(schedule.rho) if geometric else None
    if kind is AlgorithmKind.VR_SGD:
        label, g = ("P1" if geometric else "A"), None
    elif kind is AlgorithmKind.VR_ACCELERATED:
        label, g = ("P2" if geometric else "H2"), stacked_input(m)
    elif kind is AlgorithmKind.VR_HEAVY_BALL:
        label, g = ("P3" if geometric else "P3_core"), stacked_input(m)
    else:
        raise InadmissibleParameter("no limiting covariance for the baseline")
    cm = companion_matrix(label, alpha, beta, rho, h)
    if geometric:
        out = limit_covariance_geometric(cm.matrix, g, s0, **({"tol": tol} if tol else {}))
    else:
        out = limit_covariance_polynomial(cm.matrix, g, s0, schedule.v, **({"tol": tol} if tol else {}))
    out.extra["companion"] = label
    out.extra["norm_bound"] = cm.norm_bound
    out.extra["measured"] = cm.measured()
    return out
