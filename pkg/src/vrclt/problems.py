"""Stochastic first-order oracles with known ground truth.

Two families are provided:

* :class:`QuadraticGaussianProblem` -- ``f(x) = 1/2 (x-x*)^T H (x-x*)`` with
  additive, state-independent Gaussian gradient noise.
* :class:`LinearRegressionProblem` -- parameter estimation from scalar
  measurements ``d = u^T x* + nu`` with ``u ~ N(0, R_u)`` and
  ``nu ~ N(0, sigma_nu^2)``; the objective is ``E (d - u^T x)^2``.

Large batches are drawn through an exact distributional shortcut rather
than one sample at a time: for the quadratic family the batch mean of
Gaussian noise is itself Gaussian, and for linear regression the sum of
``N`` per-sample gradients depends on the data only through the Wishart
matrix ``U^T U`` and the vector ``U^T nu``, which we sample jointly
(Bartlett decomposition plus a conditionally Gaussian draw). Both routes
produce the same law as literal averaging, at ``O(m^3)`` cost per batch
independent of ``N``. ``method="direct"`` forces literal averaging.
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import RngStream, psd_factor, sym_eig

DIRECT_BATCH_LIMIT = 64


def random_orthogonal(dim: int, rng: RngStream) -> np.ndarray:
    """Haar-distributed orthogonal matrix from the QR of a Gaussian matrix."""
    g = rng.gen.standard_normal((dim, dim))
    q, r = np.linalg.qr(g)
    return q * np.sign(np.diag(r))


def spd_with_spectrum(eigenvalues, rng: RngStream | None = None) -> np.ndarray:
    """``Q^T diag(eigenvalues) Q``; diagonal when ``rng`` is None."""
    d = np.asarray(eigenvalues, dtype=float)
    if np.any(d <= 0):
        raise ValueError("eigenvalues must be positive")
    if rng is None:
        return np.diag(d)
    q = random_orthogonal(d.size, rng)
    a = q.T @ np.diag(d) @ q
    return 0.5 * (a + a.T)


class StochasticProblem:
    """Interface shared by the oracles.

    Subclasses set ``dim``, ``x_star``, ``eta``, ``lip``, ``hessian_at_opt``
    and ``noise_cov_at_opt``, and implement the methods below.
    """

    dim: int
    x_star: np.ndarray
    eta: float
    lip: float
    hessian_at_opt: np.ndarray | None
    noise_cov_at_opt: np.ndarray

    @property
    def kappa(self) -> float:
        return self.lip / self.eta

    def f_value(self, x) -> float:
        raise NotImplementedError

    def f_star(self) -> float:
        return self.f_value(self.x_star)

    def suboptimality(self, x) -> float:
        """``f(x) - f(x*)`` computed without cancellation."""
        raise NotImplementedError

    def exact_gradient(self, x) -> np.ndarray:
        raise NotImplementedError

    def noise_covariance_at(self, x) -> np.ndarray:
        raise NotImplementedError

    def sample_gradient(self, x, rng: RngStream) -> np.ndarray:
        return self.batch_mean(x, 1, rng)

    def batch_mean(self, x, n: int, rng: RngStream, method: str = "auto") -> np.ndarray:
        """Average of ``n`` i.i.d. sampled gradients at ``x``."""
        raise NotImplementedError

    def batch_gradient(self, x, n: int, rng: RngStream, method: str = "auto"):
        """Return ``(gradient_estimate, noise_realization)`` for a batch of size ``n``."""
        est = self.batch_mean(x, n, rng, method)
        return est, est - self.exact_gradient(x)

    def _vec(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a vector of length {self.dim}, got shape {x.shape}")
        return x

    def describe(self) -> dict:
        raise NotImplementedError


def _check_batch(n: int, method: str):
    if n < 1 or int(n) != n:
        raise ValueError(f"batch size must be a positive integer, got {n}")
    if method not in ("auto", "direct", "aggregate"):
        raise ValueError(f"unknown sampling method {method!r}")


class QuadraticGaussianProblem(StochasticProblem):
    """Quadratic objective with state-independent Gaussian gradient noise."""

    def __init__(self, hessian, x_star, noise_cov):
        h = np.asarray(hessian, dtype=float)
        self.dim = h.shape[0]
        self.H = 0.5 * (h + h.T)
        self.x_star = np.asarray(x_star, dtype=float).reshape(self.dim)
        s = np.asarray(noise_cov, dtype=float)
        if s.ndim == 0:
            s = float(s) * np.eye(self.dim)
        self.noise_cov = 0.5 * (s + s.T)
        evals, _ = sym_eig(self.H)
        if evals[-1] <= 0:
            raise ValueError("Hessian must be positive definite")
        self.eta = float(evals[-1])
        self.lip = float(evals[0])
        self._noise_factor = psd_factor(self.noise_cov) if np.any(self.noise_cov) else None

    @property
    def hessian_at_opt(self) -> np.ndarray:
        return self.H

    @property
    def noise_cov_at_opt(self) -> np.ndarray:
        return self.noise_cov

    def f_value(self, x) -> float:
        return self.suboptimality(x)

    def suboptimality(self, x) -> float:
        d = self._vec(x) - self.x_star
        return 0.5 * float(d @ self.H @ d)

    def exact_gradient(self, x) -> np.ndarray:
        return self.H @ (self._vec(x) - self.x_star)

    def noise_covariance_at(self, x) -> np.ndarray:
        self._vec(x)
        return self.noise_cov.copy()

    def batch_mean(self, x, n: int, rng: RngStream, method: str = "auto") -> np.ndarray:
        _check_batch(n, method)
        grad = self.exact_gradient(x)
        if self._noise_factor is None:
            return grad
        if method == "direct":
            z = rng.gen.standard_normal((n, self.dim))
            return grad + (z @ self._noise_factor.T).mean(axis=0)
        z = rng.gen.standard_normal(self.dim)
        return grad + (self._noise_factor @ z) / math.sqrt(n)

    def describe(self) -> dict:
        return {
            "type": "quadratic",
            "dim": self.dim,
            "eta": self.eta,
            "L": self.lip,
            "x_star": self.x_star.tolist(),
        }


class LinearRegressionProblem(StochasticProblem):
    """Least-squares parameter estimation with Gaussian regressors.

    The objective is ``f(x) = (x-x*)^T R_u (x-x*) + sigma_nu^2``, so the Hessian
    is ``2 R_u``. The per-sample gradient returned is ``2 (u u^T x - d u)``,
    which is unbiased for ``grad f(x) = 2 R_u (x - x*)``. Pass
    ``gradient_scale=1`` to get the unscaled ``u u^T x - d u`` instead
    (then ``f`` and its gradient no longer match by a factor of two).
    """

    def __init__(self, r_u, sigma_nu: float, x_star, gradient_scale: float = 2.0):
        r = np.asarray(r_u, dtype=float)
        self.dim = r.shape[0]
        self.R = 0.5 * (r + r.T)
        if sigma_nu < 0:
            raise ValueError("sigma_nu must be non-negative")
        self.sigma_nu = float(sigma_nu)
        self.x_star = np.asarray(x_star, dtype=float).reshape(self.dim)
        self.scale = float(gradient_scale)
        evals, _ = sym_eig(self.R)
        if evals[-1] <= 0:
            raise ValueError("R_u must be positive definite")
        self.eta = self.scale * float(evals[-1])
        self.lip = self.scale * float(evals[0])
        self._r_factor = psd_factor(self.R)

    @property
    def hessian_at_opt(self) -> np.ndarray:
        return self.scale * self.R

    @property
    def noise_cov_at_opt(self) -> np.ndarray:
        return self.noise_covariance_at(self.x_star)

    def f_value(self, x) -> float:
        return self.suboptimality(x) + self.sigma_nu**2

    def suboptimality(self, x) -> float:
        d = self._vec(x) - self.x_star
        return float(d @ self.R @ d)

    def exact_gradient(self, x) -> np.ndarray:
        return self.scale * (self.R @ (self._vec(x) - self.x_star))

    def noise_covariance_at(self, x) -> np.ndarray:
        """Per-sample gradient noise covariance at ``x``.

        With ``g = u u^T D - nu u`` and ``D = x - x*``, Gaussian fourth moments
        give ``Cov(g) = R D D^T R + (D^T R D) R + sigma^2 R``.
        """
        d = self._vec(x) - self.x_star
        rd = self.R @ d
        cov = np.outer(rd, rd) + float(d @ rd) * self.R + self.sigma_nu**2 * self.R
        return self.scale**2 * cov

    def batch_mean(self, x, n: int, rng: RngStream, method: str = "auto") -> np.ndarray:
        _check_batch(n, method)
        delta = self._vec(x) - self.x_star
        m = self.dim
        if method == "direct" or (method == "auto" and n <= DIRECT_BATCH_LIMIT) or n < m:
            z = rng.gen.standard_normal((n, m + 1))
            u = z[:, :m] @ self._r_factor.T
            resid = u @ delta - self.sigma_nu * z[:, m]
            return self.scale * (u.T @ resid) / n
        # Bartlett: U^T U = B B^T with B = L_R A, A lower triangular,
        # A_ii^2 ~ chi2(n - i), A_ij ~ N(0, 1) below the diagonal.
        # Given U, U^T nu ~ N(0, sigma^2 U^T U), which equals sigma * B z in law.
        n_off = m * (m - 1) // 2
        z = rng.gen.standard_normal(n_off + m)
        chi = rng.gen.chisquare(n - np.arange(m, dtype=float))
        a = np.diag(np.sqrt(chi))
        a[np.tril_indices(m, -1)] = z[:n_off]
        b = self._r_factor @ a
        total = b @ (b.T @ delta) - self.sigma_nu * (b @ z[n_off:])
        return self.scale * total / n

    def describe(self) -> dict:
        return {
            "type": "linreg",
            "dim": self.dim,
            "eta": self.eta,
            "L": self.lip,
            "sigma_nu": self.sigma_nu,
            "gradient_scale": self.scale,
            "x_star": self.x_star.tolist(),
        }


def noise_bound_surrogate(problem: StochasticProblem, x0) -> float:
    """``nu^2`` surrogate: trace of the per-sample noise covariance at ``x0``.

    Exact for state-independent noise; for linear regression no global bound
    exists and this is only a reference value.
    """
    return float(np.trace(problem.noise_covariance_at(x0)))
