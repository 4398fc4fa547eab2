import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relenlab.errors import NonFiniteError
from relenlab.torus import TorusGrid, load_snapshot, random_band_limited, save_snapshot

GRID = TorusGrid(1, 256)
X = GRID.coordinates()[0]


class TestGridConstruction:
    def test_rejects_odd_or_small_n(self):
        with pytest.raises(ValueError):
            TorusGrid(1, 7)
        with pytest.raises(ValueError):
            TorusGrid(1, 6)

    def test_rejects_bad_dimension_and_length(self):
        with pytest.raises(ValueError):
            TorusGrid(4, 16)
        with pytest.raises(ValueError):
            TorusGrid(1, 16, length=-1.0)

    def test_shapes(self):
        g = TorusGrid(2, 16, length=3.0)
        assert g.shape == (16, 16)
        assert g.spectral_shape == (16, 9)
        assert g.dx == pytest.approx(3.0 / 16)
        assert g.volume == pytest.approx(9.0)
        assert g.gradient(np.zeros(g.shape)).shape == (2, 16, 16)

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            GRID.gradient(np.zeros(128))
        with pytest.raises(ValueError):
            GRID.divergence(np.zeros((2, 256)))

    def test_non_finite_input_raises(self):
        f = np.zeros(256)
        f[3] = np.nan
        with pytest.raises(NonFiniteError):
            GRID.laplacian(f)


class TestDerivatives:
    """Fourier eigenfunctions and operator identities."""

    def test_gradient_of_constant_is_zero(self):
        assert np.max(np.abs(GRID.gradient(np.full(256, 3.7)))) < 1e-13

    def test_gradient_of_sine(self):
        g = TorusGrid(1, 64, length=5.0)
        x = g.coordinates()[0]
        k = 2 * np.pi / 5.0
        np.testing.assert_allclose(g.gradient(np.sin(k * x))[0], k * np.cos(k * x), atol=1e-13)

    def test_divergence_of_constant_vector(self):
        g = TorusGrid(2, 32)
        v = np.ones((2, 32, 32)) * np.array([1.5, -2.0])[:, None, None]
        assert np.max(np.abs(g.divergence(v))) < 1e-13

    @pytest.mark.parametrize("k", [1, 3, 17])
    def test_laplacian_of_sine(self, k):
        np.testing.assert_allclose(GRID.laplacian(np.sin(k * X)), -k**2 * np.sin(k * X), atol=1e-10)

    def test_div_grad_is_laplacian(self):
        f = random_band_limited(GRID, np.random.default_rng(1), kmax=20)
        np.testing.assert_allclose(GRID.divergence(GRID.gradient(f)), GRID.laplacian(f), atol=1e-12)

    def test_compound_operators_2d(self):
        g = TorusGrid(2, 32)
        rng = np.random.default_rng(2)
        f = random_band_limited(g, rng, kmax=5)
        v = np.stack([random_band_limited(g, rng, kmax=5) for _ in range(2)])
        np.testing.assert_allclose(g.grad_div(v), g.gradient(g.divergence(v)), atol=1e-11)
        np.testing.assert_allclose(g.grad_laplacian(f), g.gradient(g.laplacian(f)), atol=1e-11)
        jac = g.jacobian(v)
        np.testing.assert_allclose(np.trace(jac), g.divergence(v), atol=1e-12)
        np.testing.assert_allclose(g.tensor_divergence(g.identity(f)), g.gradient(f), atol=1e-12)

    def test_nyquist_dropped_from_odd_derivatives(self):
        g = TorusGrid(1, 16)
        alternating = np.cos(8 * g.coordinates()[0])  # pure Nyquist mode
        assert np.max(np.abs(g.gradient(alternating))) < 1e-13
        np.testing.assert_allclose(g.laplacian(alternating), -64 * alternating, atol=1e-10)

    def test_gradient_matches_centered_differences_at_second_order(self):
        errs = []
        for n in (64, 128, 256):
            g = TorusGrid(1, n)
            x = g.coordinates()[0]
            f = np.exp(np.sin(x))
            fd = (np.roll(f, -1) - np.roll(f, 1)) / (2 * g.dx)
            errs.append(np.max(np.abs(g.gradient(f)[0] - fd)))
        assert np.log2(errs[0] / errs[1]) == pytest.approx(2.0, abs=0.05)
        assert np.log2(errs[1] / errs[2]) == pytest.approx(2.0, abs=0.05)

    def test_dealias_filter_keeps_lower_two_thirds(self):
        g = TorusGrid(1, 48)
        x = g.coordinates()[0]
        np.testing.assert_allclose(g.dealias_filter(np.cos(15 * x)), np.cos(15 * x), atol=1e-13)
        assert np.max(np.abs(g.dealias_filter(np.cos(16 * x)))) < 1e-13
        off = TorusGrid(1, 48, dealias=False)
        np.testing.assert_allclose(off.dealias_filter(np.cos(16 * x)), np.cos(16 * x))


class TestEllipticSolves:
    def test_helmholtz_constant_fixed_point(self):
        np.testing.assert_allclose(GRID.helmholtz_inverse(np.full(256, 2.5), 7.0), 2.5, atol=1e-14)

    @pytest.mark.parametrize("k,alpha", [(1, 10.0), (4, 3.0), (20, 1000.0)])
    def test_helmholtz_fourier_mode(self, k, alpha):
        f = np.sin(k * X)
        np.testing.assert_allclose(GRID.helmholtz_inverse(f, alpha), f / (1 + k**2 / alpha), atol=1e-13)
        err = GRID.l2_norm(f - GRID.helmholtz_inverse(f, alpha))
        assert err == pytest.approx((k**2 / alpha) / (1 + k**2 / alpha) * GRID.l2_norm(f), rel=1e-12)
        assert err <= GRID.h2_seminorm(f) / alpha

    def test_helmholtz_rejects_nonpositive_alpha(self):
        with pytest.raises(ValueError):
            GRID.helmholtz_inverse(X, 0.0)

    def test_screened_poisson_constant(self):
        assert np.max(np.abs(GRID.screened_poisson_mean_free(np.full(256, 4.0), 1.0))) < 1e-15

    def test_screened_poisson_modes(self):
        k = 3
        c = GRID.screened_poisson_mean_free(2.0 + np.sin(k * X), 1.0)
        np.testing.assert_allclose(c, np.sin(k * X) / (k**2 + 1), atol=1e-14)
        c0 = GRID.screened_poisson_mean_free(2.0 + np.cos(k * X), 0.0)
        np.testing.assert_allclose(c0, np.cos(k * X) / k**2, atol=1e-14)
        assert abs(GRID.mean(c0)) < 1e-16

    def test_screened_poisson_rejects_negative_beta(self):
        with pytest.raises(ValueError):
            GRID.screened_poisson_mean_free(X, -1.0)


class TestQuadrature:
    def test_constant(self):
        one = np.ones(256)
        assert GRID.integrate(one) == pytest.approx(2 * np.pi, rel=1e-15)
        assert GRID.mean(one) == pytest.approx(1.0)

    def test_sine_norms(self):
        assert GRID.l2_norm(np.sin(X)) ** 2 == pytest.approx(np.pi, rel=1e-14)
        for k in (1, 2, 5):
            assert GRID.h1_seminorm(np.sin(k * X)) ** 2 == pytest.approx(k**2 * np.pi, rel=1e-12)
        assert GRID.linf_norm(-3 * np.cos(X)) == pytest.approx(3.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), kmax=st.integers(1, 40), alpha=st.floats(0.1, 1e4))
def test_helmholtz_inverts_shifted_laplacian(seed, kmax, alpha):
    f = random_band_limited(GRID, np.random.default_rng(seed), kmax=kmax)
    back = GRID.helmholtz_inverse(f - GRID.laplacian(f) / alpha, alpha)
    assert np.max(np.abs(back - f)) <= 1e-12 * max(1.0, np.max(np.abs(f - GRID.laplacian(f) / alpha)))
    assert GRID.l2_norm(GRID.helmholtz_inverse(f, alpha)) <= GRID.l2_norm(f) * (1 + 1e-14)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), dim=st.sampled_from([1, 2]))
def test_divergence_integrates_to_zero(seed, dim):
    g = TorusGrid(dim, 32 if dim == 2 else 128, length=3.3)
    rng = np.random.default_rng(seed)
    v = np.stack([random_band_limited(g, rng, kmax=8) + rng.normal() for _ in range(dim)])
    assert abs(g.integrate(g.divergence(v))) <= 1e-12 * g.l2_norm(v)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_derivatives_match_fourier_formula(seed):
    rng = np.random.default_rng(seed)
    g = TorusGrid(1, 96)
    x = g.coordinates()[0]
    ks = rng.integers(1, 31, size=4)
    amps, phases = rng.normal(size=4), rng.uniform(0, 2 * np.pi, size=4)
    f = sum(a * np.sin(k * x + p) for a, k, p in zip(amps, ks, phases))
    df = sum(a * k * np.cos(k * x + p) for a, k, p in zip(amps, ks, phases))
    scale = np.max(np.abs(df)) + 1.0
    assert np.max(np.abs(g.gradient(f)[0] - df)) <= 1e-12 * scale * 10


class TestRandomFields:
    def test_band_limited_is_mean_free_and_scaled(self):
        f = random_band_limited(GRID, np.random.default_rng(0), kmax=6, amplitude=0.3)
        assert abs(GRID.mean(f)) < 1e-15
        assert np.max(np.abs(f)) == pytest.approx(0.3)
        fh = np.abs(np.fft.rfft(f))
        assert np.max(fh[7:]) < 1e-12 * np.max(fh)

    def test_deterministic_under_seed(self):
        a = random_band_limited(GRID, np.random.default_rng(5))
        b = random_band_limited(GRID, np.random.default_rng(5))
        np.testing.assert_array_equal(a, b)


class TestSnapshots:
    def test_roundtrip(self, tmp_path):
        g = TorusGrid(2, 16, length=4.0)
        rng = np.random.default_rng(0)
        rho = 1 + 0.1 * rng.random(g.shape)
        m = rng.normal(size=(2,) + g.shape)
        header = save_snapshot(tmp_path, g, {"rho": rho, "m": m}, extra={"t": 0.5})
        meta = json.loads(header.read_text())
        assert meta["fields"] == ["rho", "m_0", "m_1"]
        assert (meta["dim"], meta["N"], meta["L"]) == (2, 16, 4.0)
        assert (tmp_path / "snapshot.rho.bin").stat().st_size == 8 * 256
        g2, fields, h2 = load_snapshot(header)
        assert g2 == g
        np.testing.assert_array_equal(fields["rho"], rho)
        np.testing.assert_array_equal(fields["m_1"], m[1])
        assert h2["t"] == 0.5

    def test_rejects_wrong_shape(self, tmp_path):
        with pytest.raises(ValueError):
            save_snapshot(tmp_path, GRID, {"rho": np.zeros(10)})
