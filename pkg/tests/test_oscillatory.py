import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import erf

from equiheat.groups import SO3, SU2, Torus
from equiheat.oscillatory import (
    BudgetError,
    ConvergenceError,
    DecayViolation,
    OscillatorySpec,
    StratumProximityError,
    asymptotic_compare,
    b_amplitude_probe,
    b_limit,
    b_values,
    cutoff_insensitivity,
    disintegration_sides,
    integral_direct,
    integral_regularized,
    leading_L0,
    localization_probe,
    symbol_probe,
)
from equiheat.spaces import get_space


def bump(center, width):
    center = np.asarray(center, dtype=float)

    def rho(x):
        r = np.linalg.norm(x - center, axis=-1) / width
        return np.where(r < 1, np.exp(-1 / np.maximum(1 - r * r, 1e-300)), 0.0)

    return rho


@pytest.fixture(scope="module")
def t1():
    return get_space("t1")


@pytest.fixture(scope="module")
def s2():
    return get_space("s2")


def t1_spec(space, **kw):
    kw.setdefault("order", 40)
    return OscillatorySpec(space, 0, bump([0.0], 1.0), **kw)


def s2_spec(space, **kw):
    kw.setdefault("order", 40)
    return OscillatorySpec(space, 0, bump([0.3, 0.0], 0.2), **kw)


class TestDirectIntegral:
    @pytest.mark.parametrize("mu", [1e-4, 1e-3, 1e-2, 1e-1])
    def test_t1_closed_form(self, t1, mu):
        spec = t1_spec(t1)
        _, w = spec.x_nodes()
        exact = w.sum() * mu * erf(math.pi / (2 * mu))
        v = integral_direct(spec, mu)
        assert abs(v.value - exact) < 1e-6 * abs(exact)
        assert v.est_error < 1e-6 * abs(exact)

    def test_zero_amplitude(self, t1):
        spec = OscillatorySpec(t1, 0, lambda x: np.zeros(x.shape[:-1]))
        assert integral_direct(spec, 1e-2).value == 0

    def test_fubini_oracle_on_the_double_circle(self, t1):
        spec = t1_spec(t1)
        mu = 0.2
        x, wx = spec.x_nodes()
        n = 600
        th = 2 * math.pi * np.arange(n) / n
        A, B = np.meshgrid(th, th, indexing="ij")
        total = 0.0
        for xi_, wi in zip(x[:, 0], wx):
            q = np.mod(xi_ + A + B, 2 * math.pi)
            ap = t1.charts[0].alpha_prime(q[..., None])
            d = np.mod(q - xi_ + math.pi, 2 * math.pi) - math.pi
            # xi integral of e^{i d xi / mu} e^{-xi^2}
            total += wi * np.mean(ap * math.sqrt(math.pi) * np.exp(-(d / mu) ** 2 / 4))
        assert integral_direct(spec, mu).value == pytest.approx(total, rel=1e-10)

    def test_regularisation_limit(self, t1):
        spec = t1_spec(t1, poly=lambda z: 1 + z[..., 0], poly_degree=1,
                       group_factor=lambda a, b: 1 + 0.5 * np.exp(1j * (a + b)))
        ref = integral_direct(spec, 0.1).value
        damped = integral_regularized(spec, 0.1, 1e-3)
        assert abs(damped - ref) < 1e-9

    def test_budget_error_reports_node_count(self, s2, monkeypatch):
        import equiheat.oscillatory as osc

        monkeypatch.setattr(osc, "MAX_S_NODES", 1000)
        spec = OscillatorySpec(s2, 0, bump([0.0, 0.0], 0.4), order=12)
        with pytest.raises(BudgetError) as err:
            integral_direct(spec, 1e-5)
        assert err.value.required_nodes > 1000

    def test_rejects_nonpositive_mu(self, t1):
        with pytest.raises(ValueError):
            integral_direct(t1_spec(t1), 0.0)

    @settings(max_examples=15, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=3, max_size=3))
    def test_linear_in_the_fiber_polynomial(self, coeffs):
        space = get_space("t1")
        c0, c1, c2 = coeffs
        mk = lambda f: t1_spec(space, poly=f, poly_degree=2, order=24)
        mu = 0.05
        parts = [integral_direct(mk(lambda z, k=k: z[..., 0] ** k), mu).value for k in range(3)]
        full = integral_direct(mk(lambda z: c0 + c1 * z[..., 0] + c2 * z[..., 0] ** 2), mu).value
        assert full == pytest.approx(c0 * parts[0] + c1 * parts[1] + c2 * parts[2], abs=1e-13)


class TestLeadingCoefficient:
    def test_t1_average_over_critical_set(self, t1):
        spec = t1_spec(t1)
        _, w = spec.x_nodes()
        assert leading_L0(spec) == pytest.approx(w.sum() / (2 * math.pi), rel=1e-9)

    def test_support_away_from_critical_set(self, t1):
        spec = t1_spec(t1, group_factor=lambda a, b: np.exp(1j * (a + b)) * 0 + np.cos(a - b) * 0)
        assert leading_L0(spec) == 0

    def test_s2_hessian_is_field_length(self, s2):
        # |det Phi''|^{1/2} = |x| for the rotation field in stereographic coordinates
        spec = s2_spec(s2)
        x, w = spec.x_nodes()
        ref = np.sum(w * math.sqrt(math.pi) / np.linalg.norm(x, axis=-1)) / (2 * math.pi)
        assert leading_L0(spec) == pytest.approx(ref, rel=1e-8)

    def test_stratum_proximity(self, s2):
        spec = OscillatorySpec(s2, 0, bump([0.0, 0.0], 0.3), order=12)
        with pytest.raises(StratumProximityError):
            leading_L0(spec, det_floor=1e-2)


@pytest.fixture(scope="module")
def t1_result():
    spec = t1_spec(get_space("t1"), poly=lambda z: 1 + z[..., 0], poly_degree=1,
                   group_factor=lambda a, b: 1 + 0.5 * np.exp(1j * (a + b)),
                   mu_grid=np.logspace(-4, -1, 7))
    return asymptotic_compare(spec)

@pytest.fixture(scope="module")
def s2_result():
    spec = s2_spec(get_space("s2"), poly=lambda z: 1 + z[..., 0] + 0.5 * z[..., 1] ** 2, poly_degree=2,
                   group_factor=lambda a, b: 1 + 0.5 * np.exp(1j * (a + b)) + 0.2 * np.cos(a - b),
                   mu_grid=np.logspace(-4, -1, 7))
    return asymptotic_compare(spec)


class TestAsymptotics:
    def test_t1_ratio(self, t1_result):
        i = int(np.argmin(np.abs(t1_result.mu - 1e-3)))
        assert abs(t1_result.ratios[i] - 1) < 1e-3

    @pytest.mark.parametrize("which", ["t1_result", "s2_result"])
    def test_slope_is_kappa(self, which, request):
        assert request.getfixturevalue(which).slope == pytest.approx(1.0, abs=0.01)

    def test_t1_remainder_prefers_no_log(self, t1_result):
        assert t1_result.remainder_log_power == 0
        # ratio = 1 - mu/3 + O(mu^2) for this amplitude
        assert t1_result.remainder_C == pytest.approx(1 / 3, rel=0.05)

    def test_s2_ratios_converge(self, s2_result):
        dev = np.abs(s2_result.ratios - 1)
        assert dev[0] < 1e-3
        assert np.all(np.diff(dev) > 0)
        assert s2_result.remainder_log_power == 0

    def test_grid_must_span_two_decades(self, t1):
        with pytest.raises(ValueError):
            asymptotic_compare(t1_spec(t1, mu_grid=[0.01, 0.05]))

    def test_vanishing_leading_term(self, t1):
        spec = t1_spec(t1, group_factor=lambda a, b: np.exp(1j * (a - b)))
        with pytest.raises(ConvergenceError):
            asymptotic_compare(spec)

    def test_serialisation(self, t1_result, tmp_path):
        d = json.loads(t1_result.to_json())
        assert d["kappa"] == 1 and len(d["mu"]) == 7
        path = tmp_path / "osc.csv"
        t1_result.to_csv(path)
        lines = path.read_text().splitlines()
        assert lines[0] == "mu,re,im,ratio,err" and len(lines) == 8


class TestDisintegration:
    @pytest.mark.parametrize("seed", range(5))
    def test_t1_quadrature(self, t1, seed):
        rng = np.random.default_rng(seed)
        c = rng.uniform(-0.4, 0.4)
        a, b = rng.normal(size=2)
        spec = OscillatorySpec(t1, 0, bump([c], 0.5), poly=lambda z: a + b * z[..., 0] ** 2, poly_degree=2,
                               group_factor=lambda u, v: 1 + 0.3 * np.cos(u - v) + 0.2j * np.sin(2 * (u + v)),
                               order=40)
        lhs, rhs = disintegration_sides(spec, budget=1000)
        assert abs(lhs - rhs) < 1e-6 * abs(rhs)

    @pytest.mark.parametrize("seed", range(5))
    def test_s2(self, s2, seed):
        rng = np.random.default_rng(100 + seed)
        r, ang = rng.uniform(0.25, 0.35), rng.uniform(0, 2 * math.pi)
        a = rng.normal(size=3)
        spec = OscillatorySpec(s2, 0, bump([r * math.cos(ang), r * math.sin(ang)], 0.2),
                               poly=lambda z: a[0] + a[1] * z[..., 0] * z[..., 1] + a[2] * z[..., 1] ** 2,
                               poly_degree=2,
                               group_factor=lambda u, v: 1 + 0.4 * np.cos(u - v), order=40)
        lhs, rhs = disintegration_sides(spec, budget=2000)
        assert abs(lhs - rhs) < 1e-3 * abs(rhs)


class TestLocalisation:
    def test_far_from_fixed_set_is_negligible(self, t1):
        spec = t1_spec(t1, poly=lambda z: 1 + z[..., 0], poly_degree=1)
        rep = localization_probe(spec, [0.05, 0.1, 0.2, 0.3], delta=1.0)
        assert rep["N"] >= 3
        assert np.all(rep["differences"] <= rep["C_N"] * rep["mu"] ** min(int(rep["N"]), 50) * (1 + 1e-12))


class TestSymbol:
    def test_t1_fourier_oracle(self, t1):
        x = 0.3
        xi = np.linspace(0, 20, 21)[:, None]
        rep = symbol_probe(t1, 1.0, 0, np.array([x]), xi, order=200)
        y = np.linspace(-math.pi, math.pi, 20001)[:-1]
        ap = t1.charts[0].alpha_prime(y[:, None])
        n = np.arange(-12, 13)
        A = lambda eta: (np.exp(1j * np.outer(eta, y)) @ ap) / len(y)
        oracle = [np.exp(-1j * x * z) * np.sum(np.exp(-n**2 - 1j * n * x) * A(z + n)) for z in xi[:, 0]]
        assert np.max(np.abs(rep.values - np.array(oracle))) < 1e-9

    def test_periodic_symbol_is_gaussian(self, t1):
        xi = np.arange(21.0)[:, None]
        rep = symbol_probe(t1, 1.0, 0, np.array([0.3]), xi, order=60, cutoff=False)
        assert np.max(np.abs(rep.values - np.exp(-xi[:, 0] ** 2))) < 1e-14
        assert rep.tail_exponent == math.inf

    def test_value_at_zero_is_finite(self, t1):
        rep = symbol_probe(t1, 0.3, 0, np.array([0.2]), np.array([[0.0], [1.0], [2.0]]), order=80)
        assert 0 < abs(rep.values[0]) <= 1 + 1e-12

    def test_su2_decay_constants(self):
        space = get_space("su2")
        rng = np.random.default_rng(1)
        d = rng.standard_normal((3, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        xi = (np.linspace(0, 10, 11)[:, None, None] * d[None]).reshape(-1, 3)
        rep = symbol_probe(space, 0.5, 0, np.array([0.1, 0.2, -0.1]), xi, order=30)
        assert set(rep.C) == {0, 1, 2, 3, 4}
        r2 = 1 + np.sum(rep.xi**2, -1)
        for N, C in rep.C.items():
            assert np.isfinite(C)
            assert np.all(np.abs(rep.values) <= C * r2**-N * (1 + 1e-12))
        assert rep.quad_error < 1e-6

    def test_no_smoothing_is_a_violation(self, t1):
        with pytest.raises(DecayViolation):
            symbol_probe(t1, 1e-4, 0, np.array([0.3]), np.linspace(0, 20, 21)[:, None], order=100)


class TestRescaledAmplitude:
    T = [0.5, 0.2, 0.1, 0.05, 0.01, 0.003, 0.001]

    @pytest.mark.parametrize("name,x", [("t1", [0.3]), ("t2", [0.3, -0.2]), ("s2", [0.3, 0.1])])
    def test_uniform_bound_and_limit(self, name, x):
        space = get_space(name)
        rng = np.random.default_rng(0)
        xi = np.concatenate([np.zeros((1, space.n)), rng.uniform(-3, 3, (4, space.n))])
        ks = np.array([[0.0, 0.0], [0.4, -0.4], [0.5, 0.7], [-1.0, 0.2]])
        rep = b_amplitude_probe(space, self.T, xi, ks, x=np.array(x))
        assert rep.bound <= 1 + 1e-9
        # limit approached at rate t^(1/2) or faster
        assert rep.limit_error[-1] < 0.5 * math.sqrt(self.T[-1])
        assert rep.limit_error[-1] < rep.limit_error[0]

    def test_limit_at_zero_frequency(self, t1):
        b = b_values(t1, 0, np.array([0.3]), 1e-3, np.zeros((1, 1)), [0.5], [0.2])
        ap = t1.charts[0].alpha_prime(np.array([[1.0]]))[0]
        assert b[0, 0] == pytest.approx(ap, abs=1e-6)

    def test_vanishes_outside_enlarged_chart(self, t1):
        x = np.array([0.3])
        xi = np.array([[0.0], [1.5]])
        # k1 k . p = pi, at distance > 0.4 from the support of alpha'
        k1 = [math.pi - 0.5]
        assert np.all(b_values(t1, 0, x, 0.01, xi, k1, [0.2], R=0.4) == 0)
        assert np.all(b_limit(t1, 0, x, xi, k1, [0.2]) == 0)

    def test_t_range(self, t1):
        with pytest.raises(ValueError):
            b_amplitude_probe(t1, [1.5], np.zeros((1, 1)), [[0.0, 0.0]])


class TestCutoffInsensitivity:
    @pytest.mark.parametrize("t", [0.05, 0.02, 0.01])
    @pytest.mark.parametrize("sigma", [0, 0.5, 1])
    def test_su2(self, t, sigma):
        assert cutoff_insensitivity(SU2(), sigma, t) < 1e-10

    @pytest.mark.parametrize("model", [Torus(1), SO3()])
    def test_injectivity_radius_pi(self, model):
        # plateau radius below pi/2: the bound is reached for smaller t only
        assert cutoff_insensitivity(model, 1, 0.02) < 1e-10
        assert cutoff_insensitivity(model, 1, 0.05) > 1e-10
