import math

import numpy as np
import pytest

from equiheat.groups import SO3, SU2, DomainError, Torus, qconj, qmul
from equiheat.heat import (
    NotInstantiatedError,
    TruncationError,
    bundle_kernel,
    circle_subgroup,
    convolve,
    gaussian_bound_fit,
    h_sigma_kernel,
    heat_kernel_eval,
    heat_kernel_riemannian,
    heat_kernel_series,
    langlands_probe,
    log_heat_kernel_riemannian,
    whole_group,
)


def wrapped_gaussian(t, theta):
    k = np.arange(-20, 21)
    return np.exp(-((theta[:, None] + 2 * np.pi * k) ** 2) / (4 * t)).sum(1) / math.sqrt(4 * math.pi * t)


class TestSeries:
    def test_u1_value_at_one(self):
        direct = math.fsum(math.exp(-n * n) for n in range(-30, 31))
        assert heat_kernel_eval(Torus(1), 1.0, np.zeros((1, 1)))[0] == pytest.approx(direct, abs=1e-13)
        assert direct == pytest.approx(1.7726372, abs=1e-7)

    @pytest.mark.parametrize("t", [1e-3, 0.01, 0.3, 2.0])
    def test_tail_certificate(self, model, t):
        ser = heat_kernel_series(model, t)
        assert ser.tail_bound < 1e-12 * ser.value_at_identity

    @pytest.mark.parametrize("t", [0.01, 0.3, 1.0])
    def test_poisson_oracle(self, t):
        theta = np.linspace(-math.pi, math.pi, 11)
        num = heat_kernel_eval(Torus(1), t, theta[:, None])
        assert np.max(np.abs(num - 2 * math.pi * wrapped_gaussian(t, theta))) < 1e-10

    def test_large_time_flat(self, model, rng):
        g = model.random(rng, 5)
        assert np.allclose(heat_kernel_eval(model, 40.0, g), 1.0, atol=1e-12)

    def test_domain_error(self):
        with pytest.raises(DomainError):
            heat_kernel_series(SU2(), 0.0)

    def test_truncation_error(self):
        with pytest.raises(TruncationError) as exc:
            heat_kernel_series(SU2(), 1e-6, max_level=100)
        assert exc.value.required_level > 100

    def test_so3_is_even_part_of_su2(self, rng):
        g = SO3().random(rng, 4)
        t = 0.2
        two = heat_kernel_eval(SU2(), t, g) + heat_kernel_eval(SU2(), t, -g)
        assert np.allclose(heat_kernel_eval(SO3(), t, g), two / 2)


class TestSemigroup:
    @pytest.mark.parametrize("s,t", [(0.2, 0.3), (0.5, 0.5)])
    def test_convolution(self, model, s, t, rng):
        g = model.random(rng, 3)
        lhs = convolve(model, lambda x: heat_kernel_eval(model, s, x), lambda x: heat_kernel_eval(model, t, x), g, 30)
        assert np.max(np.abs(lhs - heat_kernel_eval(model, s + t, g))) < 1e-8


class TestLogKernel:
    @pytest.mark.parametrize("t", [0.05, 0.3, 1.0])
    def test_matches_series_where_resolved(self, model, t, rng):
        g = model.random(rng, 8)
        p = heat_kernel_riemannian(model, t, g)
        keep = p > 1e-8 * p.max()
        lp = log_heat_kernel_riemannian(model, t, g[keep], floor=np.inf)
        assert np.allclose(np.exp(lp), p[keep], rtol=1e-8)


class TestGaussianBound:
    T = np.geomspace(1e-3, 1.0, 13)

    def test_u1_near_quarter(self):
        fit = gaussian_bound_fit(Torus(1), self.T, np.linspace(0, 0.99 * math.pi, 25))
        assert fit.b >= 0.24 and fit.residual < 1e-9

    def test_all_models(self, model):
        fit = gaussian_bound_fit(model, self.T, np.linspace(0, 0.99 * model.injectivity_radius, 25))
        assert fit.b >= 0.2

    def test_su2_point(self):
        G = SU2()
        fit = gaussian_bound_fit(G, self.T, np.linspace(0, 0.99 * G.injectivity_radius, 25))
        g = G.exp(np.array([1.0, 0.0, 0.0]))
        p = abs(heat_kernel_riemannian(G, 0.05, g[None])[0])
        assert p <= fit.a * 0.05**-1.5 * math.exp(fit.omega * 0.05) * math.exp(-fit.b / 0.05)

    @pytest.mark.parametrize("sigma", [0, 0.5, 1])
    def test_k_averaged(self, sigma):
        G = SU2()
        fit = gaussian_bound_fit(G, self.T, np.linspace(0, 0.99 * G.injectivity_radius, 19), sigma=sigma)
        assert fit.k_averaged_ok

    def test_other_orders_not_instantiated(self):
        with pytest.raises(NotInstantiatedError):
            gaussian_bound_fit(Torus(1), self.T, [0.0, 1.0], q=4)


class TestHSigma:
    def test_trivial_on_bi_invariant(self, rng):
        G = SU2()
        g = G.random(rng, 3)
        f = lambda x: heat_kernel_eval(G, 0.3, x)
        H = h_sigma_kernel(G, f, 0, g, whole_group(G, 10))
        # K = G averaging of a class function returns its mean, p_t integrates to 1
        assert np.allclose(H, 1.0)
        H = h_sigma_kernel(G, f, 0, g, circle_subgroup(G, 64))
        assert not np.allclose(H, 1.0)

    def test_spin_half_trace(self):
        G = SU2()
        t = 0.4
        H = h_sigma_kernel(G, lambda x: heat_kernel_eval(G, t, x), 0.5, G.identity(), whole_group(G, 8))
        assert H == pytest.approx(4 * math.exp(-0.75 * t), abs=1e-12)

    @pytest.mark.parametrize("m", [0, 1, -2, 3])
    def test_u1_projection(self, m):
        U = Torus(1)
        t = 0.4
        th = np.array([[0.3], [1.2], [-2.0]])
        H = h_sigma_kernel(U, lambda x: heat_kernel_eval(U, t, x), m, th)
        # the formula projects onto the dual weight -m
        assert np.allclose(H, np.exp(-t * m * m - 1j * m * th[:, 0]), atol=1e-12)


class TestLanglands:
    @pytest.mark.parametrize("name", ["u1", "su2", "so3", "t2"])
    def test_limit_at_identity(self, name):
        from equiheat.groups import get_group

        G = get_group(name)
        L = langlands_probe(G, [0.1, 0.03, 0.01, 3e-3, 1e-3], [0.0, 0.2, 0.5])
        assert abs(L.c0_estimate / L.c0_expected - 1) < 1e-3
        assert abs(L.ratios[-1, 0] / L.c0_expected - 1) < 0.02

    def test_su2_off_identity(self):
        L = langlands_probe(SU2(), [1e-3], [0.2])
        assert abs(L.ratios[0, 0] / (4 * math.pi) ** -1.5 - 1) < 0.02

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            langlands_probe(SU2(), [0.5], [0.0])


class TestBundleKernel:
    @pytest.mark.parametrize("n", [0, 1, 2])
    def test_identity_weight_oracle(self, n):
        t = 0.4
        j = np.arange(n, 80)
        expected = np.sum((2 * j + 1) * np.exp(-t * (j * (j + 1) - n * n)))
        assert bundle_kernel(SU2(), n, t, SU2().identity()).real[0] == pytest.approx(expected, rel=1e-10)

    @pytest.mark.parametrize("n", [1, -1, 2])
    def test_covariance(self, n, rng):
        G = SU2()
        g = G.random(rng, 1)[0]
        a, b = rng.uniform(0, 4 * np.pi, 2)
        k = np.array([np.cos(a / 2), 0, 0, np.sin(a / 2)])
        k1 = np.array([np.cos(b / 2), 0, 0, np.sin(b / 2)])
        lhs = bundle_kernel(G, n, 0.3, g)
        moved = qmul(qmul(qconj(k), g), k1)
        rhs = np.exp(1j * n * a) * bundle_kernel(G, n, 0.3, moved) * np.exp(-1j * n * b)
        assert abs(lhs[0] - rhs[0]) < 1e-9
