import numpy as np
import pytest

import volterra_mv as vm


def ou_model(a=1.0, sigma0=1.0, xi=1.0):
    return vm.mean_field_ou(a, sigma0, vm.InitialCondition.deterministic(xi))


def random_measure(rng, n=16, d=1):
    return vm.EmpiricalMeasure(rng.normal(size=(n, d)))


class TestSeparableModel:
    def kernel_pair(self):
        return vm.power_kernel(0.25), vm.exp_conv_kernel(1.0, 0.3)

    def build(self):
        kb, ks = self.kernel_pair()
        return vm.separable_model(
            kb,
            ks,
            lambda x, mean: 0.7 * (mean - x),
            lambda x, mean: np.full(np.asarray(x).shape + (1,), 0.5),
            vm.InitialCondition.deterministic(0.0),
            lipschitz_f=0.7,
            growth_f=0.7,
        )

    def test_zero_drift_unit_noise_reduction(self):
        kb, ks = self.kernel_pair()
        model = vm.separable_model(
            kb,
            ks,
            lambda x, mean: np.zeros_like(x),
            lambda x, mean: np.ones(np.asarray(x).shape + (1,)),
            vm.InitialCondition.deterministic(0.0),
            lipschitz_f=0.0,
            growth_f=1.0,
        )
        rng = np.random.default_rng(0)
        mu = random_measure(rng)
        x = rng.normal(size=(4, 1))
        assert np.all(model.drift(0.8, 0.2, x, mu) == 0.0)
        assert np.allclose(model.diffusion(0.8, 0.2, x, mu)[:, 0, 0], ks.eval(0.8, 0.2))

    def test_drift_factorisation(self):
        model = self.build()
        kb, _ = self.kernel_pair()
        rng = np.random.default_rng(1)
        mu = random_measure(rng)
        x = rng.normal(size=(8, 1))
        got = model.drift(0.9, 0.4, x, mu)
        assert np.allclose(got, kb.eval(0.9, 0.4) * 0.7 * (mu.mean() - x))

    def test_lipschitz_quotients_bounded(self):
        # sampled quotients never exceed L * kb(t, s) in state or mean
        model = self.build()
        kb, _ = self.kernel_pair()
        lip = model.regularity.lipschitz_f
        rng = np.random.default_rng(2)
        for _ in range(1000):
            s, t = np.sort(rng.uniform(0.01, 1.0, 2))
            if t - s < 1e-3:
                continue
            weight = lip * kb.eval(t, s)
            mu = random_measure(rng, n=8)
            x = rng.normal(size=(1, 1))
            y = rng.normal(size=(1, 1))
            dx = abs((x - y).item())
            if dx > 1e-12:
                q = np.abs(model.drift(t, s, x, mu) - model.drift(t, s, y, mu)) / dx
                assert q.item() <= weight * (1 + 1e-9)
            nu = random_measure(rng, n=8)
            dm = abs((mu.mean() - nu.mean()).item())
            if dm > 1e-12:
                q = np.abs(model.drift(t, s, x, mu) - model.drift(t, s, x, nu)) / dm
                assert q.item() <= weight * (1 + 1e-9)

    def test_growth_bound(self):
        model = self.build()
        k3 = model.regularity.k3
        rng = np.random.default_rng(3)
        for _ in range(500):
            s, t = np.sort(rng.uniform(0.01, 1.0, 2))
            if t - s < 1e-3:
                continue
            mu = random_measure(rng, n=8)
            x = rng.normal(size=(1, 1)) * 3.0
            lhs = np.abs(model.drift(t, s, x, mu)).item()
            rhs = k3.eval(t, s) * (1.0 + abs(x.item()) + vm.w2_to_dirac0(mu))
            assert lhs <= rhs * (1 + 1e-9)

    def test_regularity_kernels_populated(self):
        model = self.build()
        reg = model.regularity
        assert reg.k1 is not None and reg.k2 is not None
        assert reg.gamma == pytest.approx(0.2)  # min(1/2 - 0.25, 1/2 - 0.3)
        # k2 = L^2 ks^2
        _, ks = self.kernel_pair()
        assert reg.k2.eval(0.8, 0.1) == pytest.approx(0.49 * ks.eval(0.8, 0.1) ** 2)


class TestMeanFieldOU:
    def test_zero_rate_gives_zero_drift(self):
        model = ou_model(a=0.0)
        rng = np.random.default_rng(4)
        mu = random_measure(rng)
        assert np.all(model.drift(0.5, 0.1, rng.normal(size=(4, 1)), mu) == 0.0)

    def test_fixed_point_of_mean(self):
        model = ou_model(a=1.0)
        mean = 0.7
        mu = vm.EmpiricalMeasure(np.full((8, 1), mean))
        x = np.full((1, 1), mean)
        assert np.all(model.drift(0.5, 0.1, x, mu) == 0.0)

    def test_direct_formula(self):
        model = ou_model(a=1.0)
        mu = vm.EmpiricalMeasure(np.full((4, 1), 2.0))
        x = np.zeros((1, 1))
        assert model.drift(0.5, 0.1, x, mu).item() == pytest.approx(2.0)

    def test_carries_ou_params(self):
        model = ou_model(a=1.5, sigma0=0.5)
        assert model.ou.a == 1.5 and model.ou.sigma0 == 0.5


class TestOUOracle:
    def test_pure_brownian(self):
        mean, var = vm.ou_oracle(0.0, 1.0, 0.3, 0.0, 1.0)
        assert mean == 0.3 and var == pytest.approx(1.0)

    def test_stationary_variance(self):
        # sigma0^2 / (2a) = 1 = v0: variance constant in time
        for t in (0.0, 0.3, 2.0):
            mean, var = vm.ou_oracle(1.0, np.sqrt(2.0), 0.0, 1.0, t)
            assert var == pytest.approx(1.0, rel=1e-12)

    def test_initial_condition(self):
        mean, var = vm.ou_oracle(1.3, 0.7, -0.2, 0.4, 0.0)
        assert mean == -0.2 and var == pytest.approx(0.4)

    def test_mean_invariance(self):
        for a in (-1.0, 0.0, 2.5):
            for t in (0.1, 1.0):
                mean, _ = vm.ou_oracle(a, 1.0, 0.9, 0.2, t)
                assert mean == 0.9

    def test_variance_ode_residual(self):
        # finite-difference check of v' = -2 a v + sigma0^2
        a, sigma0 = 0.8, 1.3
        h = 1e-6
        for t in (0.2, 0.7):
            _, v0 = vm.ou_oracle(a, sigma0, 0.0, 0.5, t - h)
            _, v1 = vm.ou_oracle(a, sigma0, 0.0, 0.5, t + h)
            _, v = vm.ou_oracle(a, sigma0, 0.0, 0.5, t)
            deriv = (v1 - v0) / (2 * h)
            assert deriv == pytest.approx(-2 * a * v + sigma0**2, abs=1e-5)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValueError):
            vm.ou_oracle(1.0, 1.0, 0.0, -0.1, 1.0)


class TestOULimitModel:
    def test_freezes_mean_at_initial_value(self):
        model = ou_model(a=1.0, xi=0.4)
        frozen = vm.ou_limit_model(model)
        rng = np.random.default_rng(6)
        mu = random_measure(rng)  # must be ignored by the frozen drift
        x = np.zeros((1, 1))
        assert frozen.drift(0.5, 0.1, x, mu).item() == pytest.approx(0.4)

    def test_requires_analytic_law(self):
        model = TestSeparableModel().build()
        with pytest.raises(ValueError):
            vm.ou_limit_model(model)


class TestInitialCondition:
    def test_deterministic_tile(self):
        x0 = vm.InitialCondition.deterministic([1.0, -2.0])
        arr = x0.sample(0, 4, 2)
        assert arr.shape == (4, 2)
        assert np.all(arr == np.array([1.0, -2.0]))

    def test_gaussian_determinism_and_coupling(self):
        x0 = vm.InitialCondition.gaussian(0.5, 2.0)
        small = x0.sample(9, 8, 1)
        again = x0.sample(9, 8, 1)
        big = x0.sample(9, 32, 1)
        assert np.array_equal(small, again)
        # particle i keeps its draw when the ensemble grows
        assert np.array_equal(big[:8], small)
        other = x0.sample(10, 8, 1)
        assert not np.array_equal(other, small)

    def test_gaussian_moments(self):
        x0 = vm.InitialCondition.gaussian(1.0, 0.5)
        arr = x0.sample(3, 200_000, 1)
        assert arr.mean() == pytest.approx(1.0, abs=0.01)
        assert arr.std() == pytest.approx(0.5, abs=0.01)

    def test_validation(self):
        with pytest.raises(ValueError):
            vm.InitialCondition(kind="bogus")
        with pytest.raises(ValueError):
            vm.InitialCondition.deterministic([np.inf])
        with pytest.raises(ValueError):
            vm.InitialCondition.gaussian(0.0, -1.0)
