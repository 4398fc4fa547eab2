import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relenlab import energy as en
from relenlab.errors import AdmissibilityError, VacuumError
from relenlab.oracle import fit_rate, gateaux_fd, remainder_order, second_variation_fd
from relenlab.torus import TorusGrid

GRID = TorusGrid(1, 64)
X = GRID.coordinates()[0]


class TestFitRate:
    def test_exact_power_law(self):
        xs = [1, 2, 4, 8]
        fit = fit_rate(xs, [3.0 * x**-2 for x in xs])
        assert fit.slope == pytest.approx(-2.0, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.ratios == pytest.approx((4.0, 4.0, 4.0))

    def test_constant_errors(self):
        fit = fit_rate([1, 2, 3], [5.0, 5.0, 5.0])
        assert fit.slope == pytest.approx(0.0, abs=1e-14) and fit.r_squared == 1.0

    def test_noisy_inverse_alpha(self):
        rng = np.random.default_rng(0)
        alphas = np.array([25, 50, 100, 200, 400], dtype=float)
        errs = 2.0 / alphas * np.exp(rng.normal(scale=0.05, size=alphas.size))
        fit = fit_rate(alphas, errs)
        assert -1.15 <= fit.slope <= -0.85
        assert fit.r_squared > 0.95

    @pytest.mark.parametrize("xs,errs", [([1, 2], [1, 1]), ([1, 2, 3], [1, 0, 1]), ([1, 3, 2], [1, 1, 1]),
                                         ([1, 2, 3], [1, np.nan, 1]), ([-1, 2, 3], [1, 1, 1]),
                                         ([1, 2, 3], [1, 1])])
    def test_rejects_bad_input(self, xs, errs):
        with pytest.raises(ValueError):
            fit_rate(xs, errs)


class TestGateaux:
    def test_zero_direction(self):
        assert gateaux_fd(lambda r: 1 / 0, np.ones(4), np.zeros(4)) == 0.0

    def test_linear_functional_is_exact(self):
        w = np.cos(X)
        val = gateaux_fd(lambda r: GRID.inner(w, r), 1 + 0 * X, np.cos(X))
        assert val == pytest.approx(np.pi, rel=1e-8)

    def test_gamma_three_energy(self):
        """``E = int rho^3`` gives ``E'(1)[psi] = 3 int psi``, checked against the closed form."""
        psi = 1 + np.sin(X)
        val = gateaux_fd(lambda r: GRID.integrate(r**3), np.ones_like(X), psi)
        assert val == pytest.approx(3 * 2 * np.pi, rel=1e-7)

    def test_variable_kappa_derivative(self):
        model = en.Korteweg(en.gamma_law(1.0, 1.4), en.power_sum_capillarity([(0.1, 0), (0.1, 2)]))
        rho, psi = 1 + 0.3 * np.sin(X), np.cos(2 * X)
        exact = GRID.inner(model.variational_derivative(GRID, rho), psi)
        assert gateaux_fd(lambda r: model.energy(GRID, r), rho, psi) == pytest.approx(exact, rel=1e-6)

    def test_inadmissible_perturbation(self):
        energy = en.Korteweg(en.gamma_law(), en.constant_capillarity(0.1)).energy
        with pytest.raises(AdmissibilityError, match="perturbed state"):
            gateaux_fd(lambda r: energy(GRID, r), np.full(64, 0.1), np.ones(64), tau=0.2)
        with pytest.raises(VacuumError):
            gateaux_fd(lambda r: energy(GRID, r), np.full(64, 0.1), np.ones(64), tau=0.2)

    def test_bad_step(self):
        with pytest.raises(ValueError):
            gateaux_fd(lambda r: 0.0, np.ones(4), np.ones(4), tau=-1.0)


class TestSecondVariation:
    def test_zero_directions(self):
        assert second_variation_fd(lambda r: 1 / 0, np.ones(4), np.zeros(4), np.ones(4)) == 0.0

    def test_quadratic_functional(self):
        """``E = int rho^2 / 2`` has second variation ``int psi phi``."""
        psi, phi = np.sin(X), np.sin(X) + np.cos(3 * X)
        val = second_variation_fd(lambda r: 0.5 * GRID.integrate(r**2), 1 + 0.2 * np.cos(X), psi, phi)
        assert val == pytest.approx(np.pi, rel=1e-6)

    def test_variable_kappa_hessian_symmetric(self):
        model = en.Korteweg(en.gamma_law(1.0, 1.4), en.power_sum_capillarity([(0.1, 0), (0.1, 2)]))
        energy = lambda r: model.energy(GRID, r)  # noqa: E731
        rho, a, b = 1 + 0.3 * np.sin(X), np.cos(X), np.sin(2 * X)
        ab, ba = second_variation_fd(energy, rho, a, b), second_variation_fd(energy, rho, b, a)
        assert ab == pytest.approx(ba, rel=1e-5)


class TestRemainderOrder:
    def test_quadratic_remainder(self):
        fn = lambda x, xb: np.exp(x) - np.exp(xb) - np.exp(xb) * (x - xb)  # noqa: E731
        fit = remainder_order(fn, np.linspace(0, 1, 5), np.ones(5), [0.1, 0.05, 0.025, 0.0125])
        assert fit.slope == pytest.approx(2.0, abs=0.05)

    def test_gamma_three_relative_energy(self):
        local = en.gamma_law(1.0, 3.0)
        fit = remainder_order(local.relative, np.linspace(0.5, 2, 10), np.ones(10), [0.1, 0.05, 0.025, 0.0125])
        assert fit.slope == pytest.approx(2.0, abs=0.05)

    def test_variable_kappa_relative_tensor(self):
        cap = en.power_sum_capillarity([(1.0, 0), (1.0, 2)])
        rho_b = 1 + 0.2 * np.sin(X)
        q_b = GRID.gradient(rho_b)

        def fn(x, xb):
            return en.relative_H(cap, x, GRID.gradient(x), xb, q_b)
        fit = remainder_order(fn, rho_b, np.cos(X), [0.1, 0.05, 0.025, 0.0125])
        assert fit.slope == pytest.approx(2.0, abs=0.05)

    @pytest.mark.parametrize("scales", [[0.1, 0.05], [0.1, 0.2, 0.05], [0.1, 0.1, 0.05]])
    def test_rejects_bad_scales(self, scales):
        with pytest.raises(ValueError):
            remainder_order(lambda x, xb: x - xb, np.ones(3), np.ones(3), scales)


@settings(max_examples=25, deadline=None)
@given(slope=st.floats(-4.0, 4.0).filter(lambda s: abs(s) > 1e-3), scale=st.floats(1e-6, 1e6))
def test_fit_recovers_any_power_law(slope, scale):
    xs = np.array([1.0, 2.0, 4.0, 8.0])
    fit = fit_rate(xs, scale * xs**slope)
    assert fit.slope == pytest.approx(slope, abs=1e-9)
