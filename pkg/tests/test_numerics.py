import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from vrclt.errors import NotPositiveDefinite
from vrclt.numerics import (
    RngStream,
    cholesky,
    f_cdf,
    f_pdf,
    f_quantile,
    f_sf,
    mvn_sample,
    normal_cdf,
    psd_factor,
    regularized_incomplete_beta,
    spectral_norm,
    spectral_radius,
    sym_eig,
)


def random_spd(m, seed):
    g = RngStream(seed, (99,)).gen.standard_normal((m, m))
    return g @ g.T + m * np.eye(m)


class TestRngStream:
    def test_same_address_same_draws(self):
        a = RngStream(3, (1, 2)).gen.standard_normal(5)
        b = RngStream(3, (1, 2)).gen.standard_normal(5)
        np.testing.assert_array_equal(a, b)

    def test_distinct_addresses_differ(self):
        a = RngStream(3, (1, 2)).gen.standard_normal(5)
        b = RngStream(3, (2, 1)).gen.standard_normal(5)
        c = RngStream(4, (1, 2)).gen.standard_normal(5)
        assert not np.allclose(a, b) and not np.allclose(a, c)

    def test_child_extends_id_without_consuming(self):
        parent = RngStream(1, 5)
        child = parent.child(7)
        assert child.stream_id == (5, 7)
        np.testing.assert_array_equal(parent.gen.standard_normal(3), RngStream(1, 5).gen.standard_normal(3))

    def test_negative_ids_rejected(self):
        with pytest.raises(ValueError):
            RngStream(-1)
        with pytest.raises(ValueError):
            RngStream(0, (1, -2))

    def test_mvn_sample_moments(self):
        cov = np.array([[2.0, 0.5], [0.5, 1.0]])
        f = cholesky(cov)
        rng = RngStream(8)
        x = np.array([mvn_sample(np.array([1.0, -1.0]), f, rng) for _ in range(20000)])
        np.testing.assert_allclose(x.mean(0), [1.0, -1.0], atol=0.05)
        np.testing.assert_allclose(np.cov(x, rowvar=False), cov, atol=0.08)


class TestLinearAlgebra:
    @pytest.mark.parametrize("m", [1, 2, 5, 12])
    def test_cholesky_matches_numpy(self, m):
        a = random_spd(m, m)
        f = cholesky(a)
        np.testing.assert_allclose(f.lower, np.linalg.cholesky(a), rtol=1e-12, atol=1e-12)
        np.testing.assert_allclose(f.reconstruct(), a, rtol=1e-12)
        b = np.arange(1.0, m + 1)
        np.testing.assert_allclose(f.solve(b), np.linalg.solve(a, b), rtol=1e-10)
        np.testing.assert_allclose(f.logdet(), np.linalg.slogdet(a)[1], rtol=1e-12)

    def test_cholesky_rejects_indefinite_and_asymmetric(self):
        with pytest.raises(NotPositiveDefinite):
            cholesky(np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError):
            cholesky(np.array([[1.0, 0.5], [0.0, 1.0]]))

    def test_psd_factor_handles_singular(self):
        v = np.array([[1.0], [2.0]])
        a = v @ v.T
        lf = psd_factor(a)
        np.testing.assert_allclose(lf @ lf.T, a, atol=1e-12)

    def test_sym_eig_descending(self):
        a = random_spd(6, 2)
        w, v = sym_eig(a)
        assert np.all(np.diff(w) <= 0)
        np.testing.assert_allclose(v @ np.diag(w) @ v.T, a, rtol=1e-10)

    def test_spectral_norm_and_radius(self):
        a = np.array([[0.5, 10.0], [0.0, 0.4]])
        assert spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-9)
        assert spectral_radius(a) == pytest.approx(0.5, rel=1e-12)
        assert spectral_norm(np.zeros((3, 3))) == 0.0


class TestSpecialFunctions:
    @pytest.mark.parametrize("a,b,x", [(0.5, 0.5, 0.3), (2, 3, 0.7), (50, 0.8, 0.99), (1e-3, 4, 0.2), (300, 200, 0.6)])
    def test_incomplete_beta_against_scipy(self, a, b, x):
        assert regularized_incomplete_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), rel=1e-11, abs=1e-14)

    def test_incomplete_beta_edges(self):
        assert regularized_incomplete_beta(2, 3, 0.0) == 0.0
        assert regularized_incomplete_beta(2, 3, 1.0) == 1.0

    @settings(max_examples=60, deadline=None)
    @given(
        d1=st.floats(0.5, 300), d2=st.floats(0.5, 300), x=st.floats(1e-4, 50),
    )
    def test_f_cdf_sf_pdf_against_scipy(self, d1, d2, x):
        assert f_cdf(d1, d2, x) == pytest.approx(stats.f.cdf(x, d1, d2), rel=1e-9, abs=1e-13)
        assert f_sf(d1, d2, x) == pytest.approx(stats.f.sf(x, d1, d2), rel=1e-9, abs=1e-13)
        assert f_pdf(d1, d2, x) == pytest.approx(stats.f.pdf(x, d1, d2), rel=1e-8, abs=1e-13)

    def test_f_pdf_integrates_to_cdf(self):
        from scipy.integrate import quad

        val, _ = quad(lambda t: f_pdf(3, 7, t), 0, 2.5)
        assert val == pytest.approx(f_cdf(3, 7, 2.5), rel=1e-9)

    @settings(max_examples=60, deadline=None)
    @given(d1=st.integers(1, 200), d2=st.integers(1, 200), p=st.floats(1e-6, 1 - 1e-6))
    def test_f_quantile_inverts(self, d1, d2, p):
        q = f_quantile(d1, d2, p)
        assert abs(f_cdf(d1, d2, q) - p) <= 1e-9
        assert q == pytest.approx(stats.f.ppf(p, d1, d2), rel=1e-7)

    def test_f_quantile_rejects_bad_p(self):
        for p in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                f_quantile(2, 3, p)

    def test_normal_cdf(self):
        x = np.linspace(-6, 6, 25)
        np.testing.assert_allclose(normal_cdf(x), stats.norm.cdf(x), rtol=1e-13, atol=1e-300)
        assert normal_cdf(0.0) == pytest.approx(0.5)
        assert math.isclose(float(normal_cdf(1.959963984540054)), 0.975, rel_tol=1e-12)
