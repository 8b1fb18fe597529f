"""Small dense linear algebra, seeded random streams and special functions.

Everything here works on plain ``numpy`` arrays. Matrices are 2-d float
arrays; vectors are 1-d.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import NoConvergence, NotPositiveDefinite

CHOLESKY_PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-12


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


class RngStream:
    """Reproducible, independent random stream addressed by ``(seed, stream_id)``.

    ``stream_id`` may be a single non-negative integer or a tuple of them; the
    tuple form lets experiments address streams hierarchically, e.g.
    ``(algorithm, cell, meta_rep, path)``. The bits come from a Philox
    counter-based generator keyed through :class:`numpy.random.SeedSequence`,
    so distinct ids give statistically independent sequences.

    A stream is stateful. Each replication must own its stream; never share
    one between workers.
    """

    __slots__ = ("seed", "stream_id", "gen")

    def __init__(self, seed: int, stream_id: int | Sequence[int] = 0):
        if isinstance(stream_id, (int, np.integer)):
            key = (int(stream_id),)
        else:
            key = tuple(int(s) for s in stream_id)
        if int(seed) < 0 or any(s < 0 for s in key):
            raise ValueError("seed and stream ids must be non-negative")
        self.seed = int(seed)
        self.stream_id = key
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        self.gen = np.random.Generator(np.random.Philox(ss))

    def child(self, *ids: int) -> "RngStream":
        """Fresh stream whose id extends this one's (does not consume draws)."""
        return RngStream(self.seed, self.stream_id + tuple(ids))

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


def standard_normal(rng: RngStream, size=None):
    return rng.gen.standard_normal(size)


def mvn_sample(mean: np.ndarray, cov_factor: "SpdFactor | np.ndarray", rng: RngStream) -> np.ndarray:
    """Draw ``mean + L z`` with ``z`` i.i.d. standard normal."""
    lower = cov_factor.lower if isinstance(cov_factor, SpdFactor) else np.asarray(cov_factor, float)
    mean = np.asarray(mean, dtype=float)
    if lower.shape != (mean.size, mean.size):
        raise ValueError(f"factor shape {lower.shape} does not match mean of size {mean.size}")
    z = rng.gen.standard_normal(mean.size)
    return mean + lower @ z


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------


def _as_square(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def check_symmetric(a: np.ndarray, tol: float = SYMMETRY_TOL) -> None:
    scale = max(np.max(np.abs(a)), 1.0)
    if np.max(np.abs(a - a.T)) > tol * scale:
        raise ValueError("matrix is not symmetric")


@dataclass(frozen=True)
class SpdFactor:
    """Lower-triangular ``L`` with positive diagonal and ``L @ L.T == A``."""

    lower: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.lower.shape[0]

    def reconstruct(self) -> np.ndarray:
        return self.lower @ self.lower.T

    def solve_lower(self, b: np.ndarray) -> np.ndarray:
        """Forward substitution ``L y = b``."""
        return _forward(self.lower, np.asarray(b, dtype=float))

    def solve(self, b: np.ndarray) -> np.ndarray:
        y = self.solve_lower(b)
        return _backward(self.lower.T, y)

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))


def _forward(lower: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = lower.shape[0]
    y = np.array(b, dtype=float, copy=True)
    for i in range(n):
        y[i] = (y[i] - lower[i, :i] @ y[:i]) / lower[i, i]
    return y


def _backward(upper: np.ndarray, b: np.ndarray) -> np.ndarray:
    n = upper.shape[0]
    x = np.array(b, dtype=float, copy=True)
    for i in range(n - 1, -1, -1):
        x[i] = (x[i] - upper[i, i + 1 :] @ x[i + 1 :]) / upper[i, i]
    return x


def cholesky(a) -> SpdFactor:
    """Cholesky–Banachiewicz factorization of a symmetric positive definite matrix.

    Raises :class:`NotPositiveDefinite` when a pivot falls below
    ``1e-12 * max(diag(a))``; for sample covariances this is how a degenerate
    ensemble (n <= m, or identical replicates) shows up.
    """
    a = _as_square(a)
    check_symmetric(a)
    n = a.shape[0]
    dmax = float(np.max(np.diag(a))) if n else 0.0
    if dmax <= 0.0:
        raise NotPositiveDefinite("non-positive diagonal")
    floor = CHOLESKY_PIVOT_TOL * dmax
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= floor:
            raise NotPositiveDefinite(f"pivot {j} = {pivot:.3e} <= {floor:.3e}")
        low[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            low[j + 1 :, j] = (a[j + 1 :, j] - low[j + 1 :, :j] @ low[j, :j]) / low[j, j]
    return SpdFactor(low)


def psd_factor(a) -> np.ndarray:
    """A square root ``B`` with ``B @ B.T == a`` for a symmetric PSD matrix.

    Falls back to an eigen-decomposition when ``a`` is singular (e.g. a zero
    noise covariance), clipping tiny negative eigenvalues.
    """
    a = _as_square(a)
    try:
        return cholesky(a).lower
    except NotPositiveDefinite:
        w, v = sym_eig(a)
        if w[-1] < -1e-10 * max(abs(w[0]), 1.0):
            raise NotPositiveDefinite("matrix has a negative eigenvalue") from None
        return v * np.sqrt(np.clip(w, 0.0, None))


def sym_eig(a) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues in descending order and the matching orthonormal eigenvectors."""
    a = _as_square(a)
    check_symmetric(a, tol=1e-10)
    try:
        w, v = np.linalg.eigh(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    order = np.argsort(w)[::-1]
    return w[order], v[:, order]


def spectral_norm(a, tol: float = 1e-12, max_iter: int = 100_000) -> float:
    """Largest singular value by power iteration on ``A^T A``.

    The starting vector is drawn from a fixed stream so the result is
    reproducible.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if not np.any(a):
        return 0.0
    ata = a.T @ a
    v = RngStream(0x5EED, 1).gen.standard_normal(ata.shape[0])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = ata @ v
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            # start vector landed in the null space; restart orthogonally
            v = np.roll(v, 1) + 1.0
            v /= np.linalg.norm(v)
            continue
        new = float(v @ w)
        v = w / nw
        if abs(new - est) <= tol * 1e-2 * abs(new):
            return math.sqrt(max(new, 0.0))
        est = new
    raise NoConvergence(f"power iteration did not converge in {max_iter} steps")


def spectral_radius(a) -> float:
    a = _as_square(a)
    return float(np.max(np.abs(np.linalg.eigvals(a)))) if a.size else 0.0


# ---------------------------------------------------------------------------
# special functions
# ---------------------------------------------------------------------------

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 100_000


def _log_beta(a: float, b: float) -> float:
    return math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b)


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for the incomplete beta function (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise NoConvergence(f"incomplete beta continued fraction stalled (a={a}, b={b}, x={x})")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """``I_x(a, b)``, the CDF of a Beta(a, b) variate at ``x``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    if x == 0.0 or x == 1.0:
        return float(x)
    log_front = a * math.log(x) + b * math.log1p(-x) - _log_beta(a, b)
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, 1.0 - x) / b


def f_cdf(d1: float, d2: float, x: float) -> float:
    """CDF of the F distribution with ``(d1, d2)`` degrees of freedom."""
    if d1 <= 0 or d2 <= 0:
        raise ValueError("degrees of freedom must be positive")
    if x <= 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    t = d1 * x / (d1 * x + d2)
    return regularized_incomplete_beta(0.5 * d1, 0.5 * d2, t)


def f_sf(d1: float, d2: float, x: float) -> float:
    """Upper tail ``1 - f_cdf``, evaluated without cancellation."""
    if x <= 0.0:
        return 1.0
    if math.isinf(x):
        return 0.0
    u = d2 / (d2 + d1 * x)
    return regularized_incomplete_beta(0.5 * d2, 0.5 * d1, u)


def f_pdf(d1: float, d2: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    h1, h2 = 0.5 * d1, 0.5 * d2
    logp = (
        h1 * math.log(d1 / d2)
        + (h1 - 1.0) * math.log(x)
        - (h1 + h2) * math.log1p(d1 * x / d2)
        - _log_beta(h1, h2)
    )
    return math.exp(logp)


def f_quantile(d1: float, d2: float, p: float, tol: float = 1e-12, max_iter: int = 500) -> float:
    """Inverse of :func:`f_cdf` by safeguarded Newton inside a doubling bracket."""
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while f_cdf(d1, d2, hi) <= p:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            raise NoConvergence("quantile bracket exploded")
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        c = f_cdf(d1, d2, x)
        err = c - p
        if abs(err) <= tol:
            return x
        if err > 0:
            hi = x
        else:
            lo = x
        dens = f_pdf(d1, d2, x)
        step_ok = False
        if dens > 0.0:
            nx = x - err / dens
            if lo < nx < hi:
                x = nx
                step_ok = True
        if not step_ok:
            x = 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * hi:
            return x
    raise NoConvergence(f"f_quantile({d1}, {d2}, {p}) did not converge")


def normal_cdf(x):
    """Standard normal CDF, elementwise."""
    x = np.asarray(x, dtype=float)
    return 0.5 * np.vectorize(math.erfc, otypes=[float])(-x / math.sqrt(2.0))
