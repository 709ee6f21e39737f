import math

import numpy as np
import pytest
from scipy import integrate as sp_integrate

import volterra_mv as vm
from volterra_mv import quadrature
from volterra_mv.kernels import fbm_horizon_constant


class TestConstantKernel:
    def test_zero(self):
        k = vm.constant_kernel(0.0)
        assert k.eval(1.0, 0.3) == 0.0

    def test_one(self):
        k = vm.constant_kernel(1.0)
        assert k.eval(0.7, 0.2) == 1.0

    def test_integral(self):
        k = vm.constant_kernel(2.5)
        val = quadrature.integrate(lambda s: k.eval(np.full(np.shape(s), 1.0), s), 0.0, 1.0)
        assert abs(val - 2.5) < 1e-12

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            vm.constant_kernel(-1.0)

    def test_meta(self):
        meta = vm.constant_kernel(1.0).meta
        assert not meta.singular_at_diagonal and not meta.singular_at_zero
        assert meta.stationary and meta.nonnegative


class TestPowerKernel:
    def test_direct_evaluation(self):
        k = vm.power_kernel(0.25)
        assert abs(k.eval(1.0, 0.75) - 0.25**-0.25) < 1e-15
        assert abs(k.eval(1.0, 0.75) - 1.4142135623730951) < 1e-12

    def test_boundary_exclusion(self):
        for alpha in (0.0, 0.5, -0.1, 0.9):
            with pytest.raises(ValueError):
                vm.power_kernel(alpha)
        # the alpha = 0 case is the constant kernel
        assert vm.constant_kernel(1.0).eval(0.5, 0.1) == 1.0

    def test_squared_integral_closed_form(self):
        # int_0^1 (1-s)^(-1/2) ds = 2
        k = vm.power_kernel(0.25)
        val = quadrature.integrate(lambda s: k.eval(np.full(np.shape(s), 1.0), s) ** 2, 0.0, 1.0)
        assert abs(val - 2.0) < 1e-7

    def test_meta(self):
        meta = vm.power_kernel(0.25).meta
        assert meta.singular_at_diagonal and not meta.singular_at_zero
        assert meta.declared_gamma == pytest.approx(0.25)
        assert meta.stationary


class TestExpConvKernel:
    def test_lambda_zero_matches_power(self):
        ke = vm.exp_conv_kernel(0.0, 0.25)
        kp = vm.power_kernel(0.25)
        pts = [(0.9, 0.1), (0.5, 0.25), (1.0, 0.999)]
        for t, s in pts:
            assert ke.eval(t, s) == pytest.approx(kp.eval(t, s), rel=1e-15)

    def test_direct_evaluation(self):
        k = vm.exp_conv_kernel(1.0, 0.25)
        expected = math.exp(-0.25) * 0.25**-0.25
        assert abs(k.eval(1.0, 0.75) - expected) < 1e-15
        assert abs(k.eval(1.0, 0.75) - 1.1013906298063676) < 1e-12

    def test_monotone_in_lambda(self):
        vals = [vm.exp_conv_kernel(lam, 0.25).eval(0.8, 0.3) for lam in (0.0, 0.5, 1.0, 2.0)]
        assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_invalid_rho(self):
        with pytest.raises(ValueError):
            vm.exp_conv_kernel(1.0, 0.5)


class TestFbmKernel:
    def test_h_half_is_brownian(self):
        k = vm.fbm_kernel(0.5)
        for t, s in [(1.0, 0.2), (0.5, 0.499), (0.9, 1e-8)]:
            assert k.eval(t, s) == 1.0
        assert fbm_horizon_constant(0.5) == pytest.approx(1.0, abs=1e-15)

    def test_normalising_constant(self):
        # plug H into the closed form directly
        for hurst in (0.3, 0.7):
            expected = math.sqrt(
                2 * hurst * math.gamma(1.5 - hurst)
                / (math.gamma(hurst + 0.5) * math.gamma(2 - 2 * hurst))
            )
            assert fbm_horizon_constant(hurst) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("hurst", [0.3, 0.7])
    def test_against_adaptive_quadrature_oracle(self, hurst):
        # independent oracle: QUADPACK on the same integral representation
        c_h = fbm_horizon_constant(hurst)
        k = vm.fbm_kernel(hurst)
        for t, s in [(0.8, 0.3), (1.0, 0.05), (0.4, 0.35)]:
            inner, _ = sp_integrate.quad(
                lambda th: (th - s) ** (hurst - 1.5) * (1 - (s / th) ** (0.5 - hurst)),
                s,
                t,
                points=[s],
                limit=400,
            )
            oracle = c_h * (t - s) ** (hurst - 0.5) + c_h * (0.5 - hurst) * inner
            assert k.eval(t, s) == pytest.approx(oracle, rel=1e-9)

    @pytest.mark.parametrize("hurst", [0.3, 0.5, 0.7])
    def test_variance_identity(self, hurst):
        # the kernel represents fractional Brownian motion: int_0^t K^2 = t^(2H)
        k = vm.fbm_kernel(hurst)
        t = 0.8
        val = quadrature.integrate(
            lambda s: k.eval(np.full(np.shape(s), t), s) ** 2, 0.0, t, levels=60
        )
        assert val == pytest.approx(t ** (2 * hurst), rel=1e-7)

    def test_tail_exponent_two_point(self):
        # two-point slope of int_t^t' K(t',s)^2 ds recovers 2H
        k = vm.fbm_kernel(0.3)
        t = 0.5

        def tail(lag):
            tp = t + lag
            return quadrature.integrate(
                lambda s: k.eval(np.full(np.shape(s), tp), s) ** 2, t, tp
            )

        slope = math.log(tail(0.1) / tail(0.01)) / math.log(10.0)
        assert slope == pytest.approx(0.6, abs=0.06)

    def test_quad_tol_convergence(self):
        # halving quad_tol changes eval by less than the previous quad_tol
        rng = np.random.default_rng(7)
        pts = []
        while len(pts) < 20:
            s, t = np.sort(rng.uniform(0.01, 1.0, 2))
            if t - s > 1e-3:
                pts.append((t, s))
        for hurst in (0.3, 0.7):
            coarse = vm.fbm_kernel(hurst, quad_tol=1e-6)
            fine = vm.fbm_kernel(hurst, quad_tol=5e-7)
            for t, s in pts:
                assert abs(coarse.eval(t, s) - fine.eval(t, s)) < 1e-6

    def test_singularity_flags(self):
        assert vm.fbm_kernel(0.3).meta.singular_at_diagonal
        assert not vm.fbm_kernel(0.7).meta.singular_at_diagonal
        assert vm.fbm_kernel(0.3).meta.singular_at_zero
        assert vm.fbm_kernel(0.7).meta.singular_at_zero
        assert not vm.fbm_kernel(0.5).meta.singular_at_zero
        assert vm.fbm_kernel(0.3).meta.declared_gamma == pytest.approx(0.6)

    def test_blows_up_at_zero(self):
        assert vm.fbm_kernel(0.3).eval(0.5, 0.0) == np.inf
        assert vm.fbm_kernel(0.7).eval(0.5, 0.0) == np.inf

    def test_invalid_arguments(self):
        for hurst in (0.0, 1.0, -0.2):
            with pytest.raises(ValueError):
                vm.fbm_kernel(hurst)
        with pytest.raises(ValueError):
            vm.fbm_kernel(0.3, quad_tol=0.0)


class TestEvalDomain:
    def test_rejects_s_at_or_above_t(self):
        k = vm.power_kernel(0.25)
        with pytest.raises(ValueError):
            k.eval(0.5, 0.5)
        with pytest.raises(ValueError):
            k.eval(0.5, 0.7)

    def test_rejects_negative_s_and_t_beyond_horizon(self):
        k = vm.constant_kernel(1.0)
        with pytest.raises(ValueError):
            k.eval(0.5, -0.1)
        with pytest.raises(ValueError):
            k.eval(1.5, 0.1)

    def test_finite_and_nonnegative_on_triangle(self):
        rng = np.random.default_rng(11)
        kernels = [
            vm.constant_kernel(2.0),
            vm.power_kernel(0.25),
            vm.exp_conv_kernel(1.0, 0.3),
            vm.fbm_kernel(0.3),
            vm.fbm_kernel(0.7),
        ]
        s = rng.uniform(1e-4, 1.0, 50)
        t = s + rng.uniform(1e-4, 1.0, 50)
        keep = t <= 1.0
        for k in kernels:
            vals = k.eval(t[keep], s[keep])
            assert np.all(np.isfinite(vals))
            assert np.all(vals >= 0.0)


class TestIntegrabilityProbe:
    def test_constant_beta2(self):
        rep = vm.integrability_probe(vm.constant_kernel(1.0), 2.0, [0.5, 1.0])
        assert rep.constant_estimate == pytest.approx(1.0, abs=1e-10)
        assert len(rep.samples) == 2

    def test_power_beta1_closed_form(self):
        rep = vm.integrability_probe(vm.power_kernel(0.25), 1.0, [1.0])
        assert rep.constant_estimate == pytest.approx(4.0 / 3.0, abs=1e-6)

    def test_power_beta4_divergent(self):
        # 4 * 0.25 = 1: borderline non-integrable
        with pytest.raises(vm.NonIntegrableError) as err:
            vm.integrability_probe(vm.power_kernel(0.25), 4.0, [1.0])
        est = err.value.estimates
        assert len(est) == 3 and est[2] > est[1] > est[0]

    def test_all_builtins_beta1_finite(self):
        for k in (
            vm.constant_kernel(1.0),
            vm.power_kernel(0.4),
            vm.exp_conv_kernel(2.0, 0.25),
            vm.fbm_kernel(0.3),
            vm.fbm_kernel(0.7),
        ):
            rep = vm.integrability_probe(k, 1.0, [0.5, 1.0])
            assert np.isfinite(rep.constant_estimate)

    def test_validation(self):
        with pytest.raises(ValueError):
            vm.integrability_probe(vm.constant_kernel(1.0), 0.5, [1.0])
        with pytest.raises(ValueError):
            vm.integrability_probe(vm.constant_kernel(1.0), 1.0, [])
        with pytest.raises(ValueError):
            vm.integrability_probe(vm.constant_kernel(1.0), 1.0, [1.5])


class TestHoelderProbe:
    LAGS = [2.0**-j for j in range(4, 11)]

    def test_constant_shift_invariant(self):
        rep = vm.hoelder_probe(vm.constant_kernel(1.0), "l1_shift", 0.5, self.LAGS)
        assert not rep.identifiable
        assert rep.excluded == len(self.LAGS)
        assert rep.exponent_estimate is None

    def test_power_l2_tail(self):
        rep = vm.hoelder_probe(vm.power_kernel(0.25), "l2_tail", 0.5, self.LAGS)
        assert rep.exponent_estimate == pytest.approx(0.5, abs=0.1)
        assert rep.r_squared > 0.999

    def test_fbm_l2_tail_high_hurst(self):
        rep = vm.hoelder_probe(vm.fbm_kernel(0.7), "l2_tail", 0.5, self.LAGS)
        assert rep.exponent_estimate == pytest.approx(1.4, abs=0.2)

    def test_constant_l2_tail_linear(self):
        rep = vm.hoelder_probe(vm.constant_kernel(2.0), "l2_tail", 0.5, self.LAGS)
        assert rep.exponent_estimate == pytest.approx(1.0, abs=1e-6)
        assert rep.constant_estimate == pytest.approx(4.0, rel=1e-6)

    def test_l1_and_l2_shift_run_on_power(self):
        rep1 = vm.hoelder_probe(vm.power_kernel(0.25), "l1_shift", 0.5, self.LAGS[:4])
        rep2 = vm.hoelder_probe(vm.power_kernel(0.25), "l2_shift", 0.5, self.LAGS[:4])
        assert rep1.exponent_estimate > 0
        assert rep2.exponent_estimate > 0

    def test_validation(self):
        k = vm.constant_kernel(1.0)
        with pytest.raises(ValueError):
            vm.hoelder_probe(k, "l2_tail", 0.5, [0.01])
        with pytest.raises(ValueError):
            vm.hoelder_probe(k, "l2_tail", 0.9, [0.2, 0.3])
        with pytest.raises(ValueError):
            vm.hoelder_probe(k, "bogus", 0.5, [0.01, 0.02])
        with pytest.raises(ValueError):
            vm.hoelder_probe(k, "l2_tail", 0.5, [-0.01, 0.02])


class TestProbeReport:
    def test_requires_samples(self):
        with pytest.raises(ValueError):
            vm.ProbeReport(samples=(), constant_estimate=0.0)

    def test_r_squared_range(self):
        with pytest.raises(ValueError):
            vm.ProbeReport(samples=((1.0, 1.0),), constant_estimate=1.0, r_squared=1.5)
