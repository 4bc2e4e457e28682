import json
import math

import numpy as np
import pytest

from equiheat.heat import TruncationError
from equiheat.spaces import get_space, smooth_step
from equiheat.traces import (
    FitError,
    GeometryIncompleteError,
    TraceCurve,
    dyadic_grid,
    fit_small_time,
    kernel_diagonal_trace,
    predicted_leading,
    remainder_constant,
    spectral_trace,
    trace_curve,
)

SPACES = ["t1", "t2", "s2", "su2", "su2-bundle"]


class TestAtlas:
    @pytest.mark.parametrize("name", SPACES)
    def test_partition_of_unity(self, name, rng):
        S = get_space(name)
        p = S.random_points(rng, 500)
        assert np.allclose(sum(c.alpha(p) for c in S.charts), 1.0, atol=1e-14)

    @pytest.mark.parametrize("name", ["s2", "su2"])
    def test_chart_roundtrip_and_push(self, name, rng):
        S = get_space(name)
        p = S.random_points(rng, 40)
        for c in S.charts:
            m = c.alpha(p) > 0
            x = c.to_coords(p[m])
            assert np.allclose(c.from_coords(x), p[m], atol=1e-13)
            V = S.fundamental_fields(p[m])[:, 0]
            h = 1e-6
            fd = (c.to_coords(p[m] + h * V) - c.to_coords(p[m] - h * V)) / (2 * h)
            assert np.allclose(S.chart_fields(c, x)[:, 0], fd, atol=1e-7)

    def test_smooth_step(self):
        assert smooth_step(-0.5) == 0 and smooth_step(0.5) == 1 and smooth_step(0.0) == pytest.approx(0.5)

    @pytest.mark.parametrize("name", SPACES)
    def test_g_fields_resolve_metric(self, name, rng):
        # sum_l C_l C_l^T = g^-1, hence F^ = exp(-|xi|^2)
        S = get_space(name)
        c = S.charts[0]
        x = c.to_coords(S.random_points(rng, 5))
        x = x[c.alpha(c.from_coords(x)) > 0]
        C = S.chart_g_fields(c, x)
        assert np.allclose(np.einsum("nai,naj->nij", C, C), np.linalg.inv(c.metric(x)))


class TestSpectralTrace:
    @pytest.mark.parametrize("m", [0, 1, 2, -3])
    def test_sphere_weight_sum(self, m):
        t = 0.07
        l = np.arange(abs(m), 400)
        assert spectral_trace(get_space("s2"), m, t)[0] == pytest.approx(np.sum(np.exp(-t * l * (l + 1))), rel=1e-13)

    def test_su2_spin_half(self):
        for t in [1e-3, 0.1, 2.0]:
            assert spectral_trace(get_space("su2"), 0.5, t)[0] == pytest.approx(4 * math.exp(-0.75 * t), rel=1e-15)

    def test_circle_trivial(self):
        assert all(spectral_trace(get_space("t1"), 0, t)[0] == 1.0 for t in dyadic_grid())

    def test_bundle(self):
        t, n = 0.2, 1
        j = np.arange(n, 300)
        assert spectral_trace(get_space("su2-bundle"), n, t)[0] == pytest.approx(
            np.sum((2 * j + 1) * np.exp(-t * j * (j + 1))), rel=1e-13)

    def test_tail_certified(self):
        v, tail = spectral_trace(get_space("s2"), 1, 1e-3)
        assert 0 < tail < 1e-12 * v

    def test_budget_exhausted(self):
        with pytest.raises(TruncationError):
            spectral_trace(get_space("s2"), 0, 1e-7, max_level=500)

    def test_isotypic_sum_below_full(self):
        S = get_space("s2")
        t = 0.05
        full = sum(m * math.exp(-t * l) for l, m in zip(*S.full_terms(t, 300)))
        partial = [sum(spectral_trace(S, m, t)[0] for m in range(-M, M + 1)) for M in (0, 3, 10, 40)]
        assert all(a < b for a, b in zip(partial, partial[1:]))
        assert partial[-1] <= full * (1 + 1e-12)
        assert partial[-1] == pytest.approx(full, rel=1e-10)


class TestKernelDiagonal:
    @pytest.mark.parametrize("name", SPACES)
    @pytest.mark.parametrize("t", [0.05, 0.4])
    def test_matches_spectral(self, name, t):
        S = get_space(name)
        for s in S.sigma_labels():
            assert kernel_diagonal_trace(S, sigma=s, t=t) == pytest.approx(spectral_trace(S, s, t)[0], rel=1e-8)

    def test_su2_full_kernel(self):
        S = get_space("su2")
        t = 0.3
        j = 0.5 * np.arange(200)
        assert kernel_diagonal_trace(S, t=t) == pytest.approx(np.sum((2 * j + 1) ** 2 * np.exp(-t * j * (j + 1))), rel=1e-10)

    def test_circle_full_kernel(self):
        t = 0.3
        n = np.arange(-60, 61)
        assert kernel_diagonal_trace(get_space("t1"), t=t) == pytest.approx(np.sum(np.exp(-t * n * n)), rel=1e-12)

    def test_cancelling_kernel(self):
        # a diagonal that is odd under z -> -z integrates to zero
        assert abs(kernel_diagonal_trace(get_space("s2"), lambda p: p[..., 2] ** 3)) < 1e-10


class TestFit:
    def test_constant(self):
        t = dyadic_grid()
        f = fit_small_time(TraceCurve("c", 0, t, np.full_like(t, 2.5), 0 * t))
        assert abs(f.alpha) < 1e-8 and f.coefficient == pytest.approx(2.5)

    @pytest.mark.parametrize("m", [0, 1, 2])
    def test_sphere_exponent(self, m):
        f = fit_small_time(trace_curve(get_space("s2"), m), log_power=1)
        assert abs(f.alpha - 0.5) < 0.02
        assert f.coefficient == pytest.approx(math.sqrt(math.pi) / 2, rel=0.02)

    @pytest.mark.parametrize("sigma,c", [(0, 1), (0.5, 4), (1, 9)])
    def test_su2_exponent(self, sigma, c):
        f = fit_small_time(trace_curve(get_space("su2"), sigma))
        assert abs(f.alpha) < 0.01 and f.coefficient == pytest.approx(c, rel=1e-3)

    def test_uncertainty_covers_truth(self):
        f = fit_small_time(trace_curve(get_space("t2"), 0))
        assert abs(f.alpha - 0.5) < max(5 * f.alpha_err, 1e-6)

    def test_too_few_points(self):
        t = np.array([0.1, 0.05, 0.02])
        with pytest.raises(FitError):
            fit_small_time(TraceCurve("c", 0, t, t**-0.5, 0 * t))

    def test_remainder_law(self):
        c = trace_curve(get_space("s2"), 1)
        f = fit_small_time(c, log_power=1)
        C = remainder_constant(c, f, lam=2)
        assert np.isfinite(C) and C < 10

    def test_json_roundtrip(self, tmp_path):
        c = trace_curve(get_space("s2"), 0)
        back = TraceCurve.from_json(c.to_json())
        assert np.array_equal(back.values, c.values)
        f = fit_small_time(c)
        assert json.loads(f.to_json())["alpha"] == pytest.approx(f.alpha)
        c.to_csv(tmp_path / "c.csv")
        assert (tmp_path / "c.csv").read_text().startswith("t,value,bound")


class TestPrediction:
    class Geo:
        def __init__(self, kappa, vol, isotropy=True):
            self.kappa, self.vol_tilde, self.isotropy = kappa, vol, isotropy

    @pytest.mark.parametrize("m", [0, 1, 2])
    def test_sphere(self, m):
        e, c = predicted_leading(get_space("s2"), m, self.Geo(1, math.pi**1.5))
        assert e == 0.5 and c == pytest.approx(math.sqrt(math.pi) / 2)

    def test_su2_spin_half(self):
        S = get_space("su2")
        assert S.multiplicity(0.5).real == pytest.approx(1.0)
        assert predicted_leading(S, 0.5, self.Geo(3, 1.0)) == (0.0, pytest.approx(4.0))

    def test_missing_geometry(self):
        with pytest.raises(GeometryIncompleteError):
            predicted_leading(get_space("s2"), 0, self.Geo(1, 1.0, isotropy=None))
