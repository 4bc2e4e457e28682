import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from equiheat.groups import (
    SO3,
    SU2,
    DomainError,
    Torus,
    exp_and_log,
    geodesic_distance,
    get_group,
    haar_integrate,
    irrep_data,
    qmul,
    su2_character,
)

vec3 = st.lists(st.floats(-1.0, 1.0), min_size=3, max_size=3)


class TestExpLog:
    @given(vec3, st.floats(0.05, 0.95))
    @settings(max_examples=60, deadline=None)
    def test_su2_roundtrip(self, v, frac):
        v = np.array(v)
        if np.linalg.norm(v) < 1e-3:
            return
        zeta = v / np.linalg.norm(v) * frac * 2 * math.pi
        g = exp_and_log(SU2(), zeta)
        back = exp_and_log(SU2(), g, inverse=True)
        assert np.allclose(back, zeta, atol=1e-10)
        assert math.isclose(geodesic_distance(SU2(), g), np.linalg.norm(zeta), rel_tol=1e-10)

    def test_full_turn_is_minus_one(self):
        g = SU2().exp(np.array([2 * math.pi, 0.0, 0.0]))
        assert np.allclose(g, [-1, 0, 0, 0])

    def test_log_at_cut_locus_raises(self):
        with pytest.raises(DomainError):
            SU2().log(np.array([-1.0, 0, 0, 0]))

    def test_torus_wraps(self):
        u = Torus(1)
        assert np.allclose(u.log(u.exp(np.array([3 * math.pi]))), [-math.pi]) or np.allclose(
            u.log(u.exp(np.array([3 * math.pi]))), [math.pi]
        )

    def test_so3_canonical(self):
        g = SO3().exp(np.array([0.0, 0.0, 2.5]))
        assert g[0] >= 0


class TestDistance:
    @pytest.mark.parametrize("name", ["su2", "so3", "t2"])
    def test_conjugation_invariance(self, name, rng):
        G = get_group(name)
        g, h = G.random(rng, 2)
        lhs = G.distance(G.mul(G.mul(h, g), G.inv(h)))
        assert math.isclose(lhs, G.distance(g), abs_tol=1e-10)

    def test_su2_bound(self, rng):
        d = SU2().distance(SU2().random(rng, 200))
        assert np.all(d <= 2 * math.pi + 1e-12)


class TestCharacters:
    @pytest.mark.parametrize("j", [0.5, 1.0, 1.5, 3.0])
    def test_casimir_from_laplacian(self, j):
        # -sum_a X_a^2 chi_j = j(j+1) chi_j, checked by finite differences
        G = SU2()
        g0 = G.exp(np.array([0.3, -0.4, 0.2]))
        h = 1e-3
        lap = 0.0
        for a in range(3):
            e = np.zeros(3)
            e[a] = h
            lap += su2_character(j, qmul(g0, G.exp(e))) + su2_character(j, qmul(g0, G.exp(-e)))
        lap = (lap - 6 * su2_character(j, g0)) / h**2
        assert math.isclose(-lap, j * (j + 1) * su2_character(j, g0), rel_tol=1e-5)

    def test_character_at_identity_is_dim(self):
        for info in irrep_data(SU2(), 12.0):
            assert math.isclose(info.character(SU2().identity()), info.dim)

    def test_bad_cutoff(self):
        with pytest.raises(DomainError):
            irrep_data(SU2(), 0.0)

    @pytest.mark.parametrize("j1,j2", [(0.5, 0.5), (1.0, 0.5), (1.5, 1.5), (2.0, 3.0)])
    def test_schur_orthogonality(self, j1, j2):
        val = haar_integrate(SU2(), lambda g: su2_character(j1, g) * su2_character(j2, g), order=8)
        assert abs(val - (j1 == j2)) < 1e-12

    def test_so3_only_integer_spins(self):
        assert all(float(i.label) == int(i.label) for i in irrep_data(SO3(), 20.0))


class TestHaar:
    @pytest.mark.parametrize("name", ["u1", "t2", "su2", "so3"])
    def test_total_mass(self, name):
        assert math.isclose(haar_integrate(get_group(name), lambda g: np.ones(len(g))).real, 1.0)

    @pytest.mark.parametrize("name", ["su2", "so3", "t2"])
    def test_left_right_invariance(self, name, rng):
        G = get_group(name)
        h = G.random(rng, 1)[0]

        def phi(g):
            # smooth, band-limited, not a class function
            if g.shape[-1] == 4:
                return g[..., 0] ** 2 + g[..., 1] * g[..., 2] - 0.5 * g[..., 3] * g[..., 0]
            return np.cos(g[..., 0]) + np.sin(g[..., 0] + 2 * g[..., 1])

        base = haar_integrate(G, phi, order=12)
        left = haar_integrate(G, lambda g: phi(G.mul(h, g)), order=12)
        right = haar_integrate(G, lambda g: phi(G.mul(g, h)), order=12)
        assert abs(left - base) < 1e-6 and abs(right - base) < 1e-6
