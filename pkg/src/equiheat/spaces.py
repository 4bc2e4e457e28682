"""Model spaces M with a compact group K, the doubled action of K x K and
exact isotypic spectra.

Points are stored in an ambient form: angles for tori, unit vectors in R^3
for S^2 and unit quaternions for SU(2).  Every space carries an atlas of
charts with a smooth partition of unity; chart coordinates are what the
symplectic and oscillatory modules work in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import sph_harm_y

from .groups import SO3, SU2, Torus, qmul, quat_to_rotation, su2_character

__all__ = [
    "smooth_step",
    "Chart",
    "IsotropyGroup",
    "SpaceModel",
    "CircleSpace",
    "TorusSpace",
    "SphereSpace",
    "SU2BothSided",
    "SU2Bundle",
    "get_space",
]


def _bump(u):
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)


def smooth_step(z, lo: float = -0.5, hi: float = 0.5):
    """C-infinity step: 0 for z <= lo, 1 for z >= hi."""
    u = (np.asarray(z, dtype=float) - lo) / (hi - lo)
    a, b = _bump(u), _bump(1 - u)
    return a / (a + b)


# ---------------------------------------------------------------------------
# charts
# ---------------------------------------------------------------------------

@dataclass
class Chart:
    """A coordinate chart phi: W -> R^n with its share of the partition."""

    name: str
    n: int
    to_coords: Callable
    from_coords: Callable
    metric: Callable  # x -> (..., n, n)
    alpha: Callable  # ambient point -> partition weight
    push: Callable  # (ambient p, ambient tangent v) -> chart components of v
    quad: Callable  # order -> (nodes, weights) covering supp(alpha)
    alpha_prime: Callable = None  # cutoff, 1 on supp(alpha), supported inside the chart

    def density(self, x):
        """j = dx / dM."""
        return 1.0 / np.sqrt(np.linalg.det(self.metric(x)))

    def volume_element(self, x):
        return np.sqrt(np.linalg.det(self.metric(x)))


def _gl(order, a, b):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _split_gl(order, breaks):
    xs, ws = zip(*(_gl(order, a, b) for a, b in zip(breaks[:-1], breaks[1:])))
    return np.concatenate(xs), np.concatenate(ws)


def _ball_rule(n, radius, order, inner=0.0, angular=None):
    """Product rule on the ball |x| <= radius in R^n, n in {1, 2, 3}.

    The radial rule is split at ``inner`` where the partition weight starts
    to fall off.
    """
    breaks = [0.0, inner, radius] if inner > 0 else [0.0, radius]
    r, wr = _split_gl(order, breaks)
    if n == 1:
        x, w = _split_gl(order, [-radius, -inner, inner, radius] if inner > 0 else [-radius, radius])
        return x[:, None], w
    angular = order if angular is None else angular
    nphi = 2 * angular
    phi = 2 * np.pi * np.arange(nphi) / nphi
    if n == 2:
        R, P = np.meshgrid(r, phi, indexing="ij")
        W = np.outer(wr * r, np.full(nphi, 2 * np.pi / nphi))
        return np.stack([R * np.cos(P), R * np.sin(P)], -1).reshape(-1, 2), W.ravel()
    c, wc = np.polynomial.legendre.leggauss(angular)
    R, C, P = np.meshgrid(r, c, phi, indexing="ij")
    S = np.sqrt(1 - C**2)
    W = (wr * r**2)[:, None, None] * wc[None, :, None] * np.full(nphi, 2 * np.pi / nphi)[None, None, :]
    X = np.stack([R * S * np.cos(P), R * S * np.sin(P), R * C], -1)
    return X.reshape(-1, 3), W.ravel()


def _stereo_charts(n: int, radius: float, pole_index: int = 0):
    """Two stereographic charts on the sphere S^n (ambient R^(n+1)) of the given radius.

    The ambient point is a unit vector ``P``; ``P[pole_index]`` is the height.
    Chart "N" projects from the point with height -1, chart "S" from +1.
    """
    others = [i for i in range(n + 1) if i != pole_index]
    rmax = math.sqrt(3.0)  # alpha support: height >= -1/2 (resp. <= 1/2)

    def make(sign, name):
        def to_coords(P):
            P = np.asarray(P, dtype=float)
            return P[..., others] / (1 + sign * P[..., pole_index])[..., None]

        def from_coords(x):
            x = np.asarray(x, dtype=float)
            s = np.sum(x**2, axis=-1)
            out = np.empty(x.shape[:-1] + (n + 1,))
            out[..., pole_index] = sign * (1 - s) / (1 + s)
            out[..., others] = 2 * x / (1 + s)[..., None]
            return out

        def metric(x):
            x = np.asarray(x, dtype=float)
            lam = 2 * radius / (1 + np.sum(x**2, axis=-1))
            return lam[..., None, None] ** 2 * np.eye(n)

        def alpha(P):
            h = np.asarray(P, dtype=float)[..., pole_index]
            up = smooth_step(h)
            return up if sign > 0 else 1 - up

        def push(P, V):
            P = np.asarray(P, dtype=float)
            V = np.asarray(V, dtype=float)
            den = (1 + sign * P[..., pole_index])[..., None]
            return V[..., others] / den - P[..., others] * (sign * V[..., pole_index])[..., None] / den**2

        def alpha_prime(P):
            h = sign * np.asarray(P, dtype=float)[..., pole_index]
            return smooth_step(h, -0.9, -0.6)

        return Chart(name, n, to_coords, from_coords, metric, alpha, push,
                     lambda order, angular=None: _ball_rule(n, rmax, order, 1 / rmax, angular),
                     alpha_prime)

    return [make(+1.0, "N"), make(-1.0, "S")]


def _angle_charts():
    """Two angle charts on the unit circle, centred at 0 and at pi."""
    half = 2 * math.pi / 3  # alpha support: |theta - centre| <= 2 pi / 3

    def make(centre, name, up):
        def to_coords(th):
            th = np.asarray(th, dtype=float)
            return (np.mod(th - centre + math.pi, 2 * math.pi) - math.pi)

        def from_coords(x):
            return np.mod(np.asarray(x, dtype=float) + centre, 2 * math.pi)

        def alpha(th):
            s = smooth_step(np.cos(np.asarray(th, dtype=float)))
            return s if up else 1 - s

        def alpha_prime(th):
            c = np.cos(np.asarray(th, dtype=float))
            return smooth_step(c if up else -c, -0.9, -0.6)

        return centre, to_coords, from_coords, alpha, name, half, alpha_prime

    return [make(0.0, "E", True), make(math.pi, "W", False)]


def _torus_charts(n: int):
    base = _angle_charts()
    charts = []
    for idx in np.ndindex(*(2,) * n):
        parts = [base[i] for i in idx]
        name = "".join(p[4] for p in parts)

        def to_coords(th, parts=parts):
            th = np.asarray(th, dtype=float)
            return np.stack([p[1](th[..., i]) for i, p in enumerate(parts)], -1)

        def from_coords(x, parts=parts):
            x = np.asarray(x, dtype=float)
            return np.stack([p[2](x[..., i]) for i, p in enumerate(parts)], -1)

        def alpha(th, parts=parts):
            th = np.asarray(th, dtype=float)
            out = np.ones(th.shape[:-1])
            for i, p in enumerate(parts):
                out = out * p[3](th[..., i])
            return out

        def alpha_prime(th, parts=parts):
            th = np.asarray(th, dtype=float)
            out = np.ones(th.shape[:-1])
            for i, p in enumerate(parts):
                out = out * p[6](th[..., i])
            return out

        def quad(order, angular=None, n=n, half=parts[0][5]):
            x, w = _split_gl(order, [-half, -half / 2, half / 2, half])
            grids = np.meshgrid(*([x] * n), indexing="ij")
            W = np.ones_like(grids[0])
            for wi in np.meshgrid(*([w] * n), indexing="ij"):
                W = W * wi
            return np.stack(grids, -1).reshape(-1, n), W.ravel()

        charts.append(
            Chart(name, n, to_coords, from_coords,
                  lambda x, n=n: np.broadcast_to(np.eye(n), np.shape(x)[:-1] + (n, n)).copy(),
                  alpha, lambda P, V: np.asarray(V, dtype=float), quad, alpha_prime)
        )
    return charts


# ---------------------------------------------------------------------------
# isotropy groups
# ---------------------------------------------------------------------------

@dataclass
class IsotropyGroup:
    """Principal isotropy subgroup H of K x K with a normalised Haar rule.

    ``pairs`` holds K-parameters ``(k1, k)`` of the nodes.
    """

    description: str
    k1: np.ndarray
    k: np.ndarray
    weights: np.ndarray
    dim: int
    volume: float  # Riemannian volume in the product metric of K x K

    def to_json(self) -> dict:
        return {"description": self.description, "dim": self.dim, "volume": self.volume,
                "nodes": int(len(self.weights))}


def _anti_diagonal_circle(period: float, nodes: int = 64) -> IsotropyGroup:
    th = period * np.arange(nodes) / nodes
    return IsotropyGroup("anti-diagonal circle {(k, k^-1)}", th, -th, np.full(nodes, 1.0 / nodes), 1,
                         period * math.sqrt(2.0))


# ---------------------------------------------------------------------------
# spaces
# ---------------------------------------------------------------------------

class SpaceModel:
    """A compact Riemannian manifold with an isometric action of K x K.

    Subclasses supply the atlas, fundamental vector fields of an orthonormal
    basis of Lie(K x K), the isotypic spectrum and the principal isotropy.
    """

    name: str
    n: int  # dim M
    k_dim: int  # dim K
    g_dim: int  # dim G
    k_volume: float  # Riemannian volume of K
    charts: list[Chart]
    volume: float  # Riemannian volume of M
    special_points: np.ndarray  # representatives of the singular strata

    # --- group data -------------------------------------------------------
    def k_character(self, sigma, kparams) -> np.ndarray:
        raise NotImplementedError

    def irrep_dim(self, sigma) -> int:
        return 1

    def sigma_labels(self) -> list:
        raise NotImplementedError

    def isotropy(self) -> IsotropyGroup:
        raise NotImplementedError

    def multiplicity(self, sigma) -> complex:
        """[(pi_sigma x pi_sigma)|_H : 1] = int_H conj chi(k1) conj chi(k)."""
        H = self.isotropy()
        vals = np.conj(self.k_character(sigma, H.k1)) * np.conj(self.k_character(sigma, H.k))
        return complex(np.sum(H.weights * vals))

    # --- geometry ---------------------------------------------------------
    def random_points(self, rng, size) -> np.ndarray:
        raise NotImplementedError

    def fundamental_fields(self, p) -> np.ndarray:
        """Ambient fundamental fields, shape (..., 2 k_dim, ambient_dim)."""
        raise NotImplementedError

    def chart_fields(self, chart: Chart, x) -> np.ndarray:
        """Fundamental fields in chart components, shape (..., 2 k_dim, n)."""
        p = chart.from_coords(x)
        V = self.fundamental_fields(p)
        P = np.broadcast_to(np.asarray(p)[..., None, :], V.shape)
        return chart.push(P, V)

    def g_fields(self, p) -> np.ndarray:
        """Ambient fundamental fields of an orthonormal basis of Lie(G), where
        G is the group whose heat kernel generates exp(-t Delta_M)."""
        raise NotImplementedError

    def chart_g_fields(self, chart: Chart, x) -> np.ndarray:
        p = chart.from_coords(x)
        V = self.g_fields(p)
        P = np.broadcast_to(np.asarray(p)[..., None, :], V.shape)
        return chart.push(P, V)

    k_period: float = 2 * math.pi  # period of the K parameter

    def g_model(self):
        """The group G acting on M whose heat kernel gives exp(-t Delta_M)."""
        raise NotImplementedError

    def g_act(self, g, p):
        raise NotImplementedError

    def k_act(self, s, p):
        """Action of k1 k, with K parametrised by a circle angle s."""
        raise NotImplementedError(f"{self.name}: K is not a circle")

    def k_in_g(self, s):
        """The circle K inside G, when (k1, k) . p = k1 k . p comes from the G action."""
        raise NotImplementedError(f"{self.name}: K does not sit inside the acting group")

    def chart_for(self, p) -> int:
        """Index of the chart with the largest partition weight at p."""
        a = np.stack([c.alpha(p) for c in self.charts], -1)
        return np.argmax(a, axis=-1)

    # --- spectra ----------------------------------------------------------
    def isotypic_terms(self, sigma, t: float, kmax: int) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues and sigma-isotypic multiplicities of the first kmax+1 levels."""
        raise NotImplementedError

    def full_terms(self, t: float, kmax: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def isotypic_kernel_diagonal(self, sigma, t: float, p) -> np.ndarray:
        """Diagonal of the kernel of P_sigma exp(-t Delta) P_sigma against dM."""
        raise NotImplementedError

    def full_kernel_diagonal(self, t: float, p) -> np.ndarray:
        lam, mult = self.full_terms(t, 4000)
        return np.full(np.shape(p)[:-1], np.sum(mult * np.exp(-t * lam)) / self.volume)

    def __repr__(self):
        return f"<SpaceModel {self.name}>"


class CircleSpace(SpaceModel):
    """T^1 with K = T^1 acting by (k1, k) . x = x + k1 + k."""

    name = "t1"
    n = 1
    g_dim = 1
    k_dim = 1
    k_volume = 2 * math.pi
    volume = 2 * math.pi

    def __init__(self):
        self.charts = _torus_charts(1)
        self.special_points = np.zeros((0, 1))

    def k_character(self, sigma, th):
        return np.exp(1j * float(sigma) * np.asarray(th, dtype=float))

    def sigma_labels(self):
        return [0, 1, 2]

    def isotropy(self):
        return _anti_diagonal_circle(2 * math.pi)

    def random_points(self, rng, size):
        return rng.uniform(0, 2 * math.pi, (size, 1))

    def fundamental_fields(self, p):
        p = np.asarray(p, dtype=float)
        return np.ones(p.shape[:-1] + (2, 1))

    def g_fields(self, p):
        return np.ones(np.shape(p)[:-1] + (1, 1))

    def g_model(self):
        return Torus(1)

    def g_act(self, g, p):
        return np.mod(np.asarray(p, dtype=float) + g, 2 * math.pi)

    def k_act(self, s, p):
        return np.mod(np.asarray(p, dtype=float) + np.asarray(s, dtype=float)[..., None], 2 * math.pi)

    def k_in_g(self, s):
        return np.asarray(s, dtype=float)[..., None]

    def isotypic_terms(self, sigma, t, kmax):
        return np.array([float(sigma) ** 2]), np.array([1.0])

    def full_terms(self, t, kmax):
        k = np.arange(kmax + 1)
        return k.astype(float) ** 2, np.where(k == 0, 1.0, 2.0)

    def isotypic_kernel_diagonal(self, sigma, t, p):
        return np.full(np.shape(p)[:-1], math.exp(-t * float(sigma) ** 2) / (2 * math.pi))


class TorusSpace(SpaceModel):
    """T^2 with K = T^1 rotating the first angle, (k1, k) . x = x + (k1 + k, 0)."""

    name = "t2"
    n = 2
    g_dim = 2
    k_dim = 1
    k_volume = 2 * math.pi
    volume = 4 * math.pi**2

    def __init__(self):
        self.charts = _torus_charts(2)
        self.special_points = np.zeros((0, 2))

    k_character = CircleSpace.k_character
    sigma_labels = CircleSpace.sigma_labels

    def isotropy(self):
        return _anti_diagonal_circle(2 * math.pi)

    def random_points(self, rng, size):
        return rng.uniform(0, 2 * math.pi, (size, 2))

    def fundamental_fields(self, p):
        p = np.asarray(p, dtype=float)
        V = np.zeros(p.shape[:-1] + (2, 2))
        V[..., :, 0] = 1.0
        return V

    def g_fields(self, p):
        return np.broadcast_to(np.eye(2), np.shape(p)[:-1] + (2, 2)).copy()

    def g_model(self):
        return Torus(2)

    def g_act(self, g, p):
        return np.mod(np.asarray(p, dtype=float) + g, 2 * math.pi)

    def k_act(self, s, p):
        s = np.asarray(s, dtype=float)
        shift = np.stack([s, np.zeros_like(s)], -1)
        return np.mod(np.asarray(p, dtype=float) + shift, 2 * math.pi)

    def k_in_g(self, s):
        s = np.asarray(s, dtype=float)
        return np.stack([s, np.zeros_like(s)], -1)

    def isotypic_terms(self, sigma, t, kmax):
        k = np.arange(kmax + 1)
        return float(sigma) ** 2 + k.astype(float) ** 2, np.where(k == 0, 1.0, 2.0)

    def full_terms(self, t, kmax):
        a = np.arange(-kmax, kmax + 1).astype(float) ** 2
        lam = np.add.outer(a, a).ravel()
        lam.sort()
        vals, counts = np.unique(lam, return_counts=True)
        return vals, counts.astype(float)

    def isotypic_kernel_diagonal(self, sigma, t, p):
        lam, mult = self.isotypic_terms(sigma, t, 200)
        return np.full(np.shape(p)[:-1], np.sum(mult * np.exp(-t * lam)) / self.volume)


class SphereSpace(SpaceModel):
    """Unit S^2 with K = SO(2) about the z-axis, (k1, k) . p = R(k1 + k) p."""

    name = "s2"
    n = 2
    g_dim = 3
    k_dim = 1
    k_volume = 2 * math.pi
    volume = 4 * math.pi

    def __init__(self):
        self.charts = _stereo_charts(2, 1.0, pole_index=2)
        self.special_points = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -1.0]])

    k_character = CircleSpace.k_character

    def sigma_labels(self):
        return [0, 1, 2]

    def isotropy(self):
        return _anti_diagonal_circle(2 * math.pi)

    def random_points(self, rng, size):
        v = rng.standard_normal((size, 3))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def fundamental_fields(self, p):
        p = np.asarray(p, dtype=float)
        rot = np.stack([-p[..., 1], p[..., 0], np.zeros(p.shape[:-1])], -1)
        return np.stack([rot, rot], -2)

    def g_fields(self, p):
        # rotations about the three axes, G = SO(3)
        p = np.asarray(p, dtype=float)
        return np.stack([np.cross(np.eye(3)[a], p) for a in range(3)], -2)

    def g_model(self):
        return SO3()

    def g_act(self, g, p):
        return np.einsum("...ij,...j->...i", quat_to_rotation(g), p)

    def k_act(self, s, p):
        s = np.asarray(s, dtype=float)
        p = np.asarray(p, dtype=float)
        c, sn = np.cos(s), np.sin(s)
        return np.stack([c * p[..., 0] - sn * p[..., 1], sn * p[..., 0] + c * p[..., 1], p[..., 2]], -1)

    def k_in_g(self, s):
        s = np.asarray(s, dtype=float)
        z = np.zeros_like(s)
        return SO3.canonical(np.stack([np.cos(s / 2), z, z, np.sin(s / 2)], -1))

    def isotypic_terms(self, sigma, t, kmax):
        m = abs(int(sigma))
        l = np.arange(m, m + kmax + 1).astype(float)
        return l * (l + 1), np.ones_like(l)

    def full_terms(self, t, kmax):
        l = np.arange(kmax + 1).astype(float)
        return l * (l + 1), 2 * l + 1

    def isotypic_kernel_diagonal(self, sigma, t, p):
        p = np.asarray(p, dtype=float)
        m = int(sigma)
        lmax = abs(m) + int(math.ceil(math.sqrt(40.0 / t))) + 2
        polar = np.arccos(np.clip(p[..., 2], -1, 1))
        out = np.zeros(p.shape[:-1])
        for l in range(abs(m), lmax + 1):
            out += math.exp(-t * l * (l + 1)) * np.abs(sph_harm_y(l, m, polar, 0.0)) ** 2
        return out


class SU2BothSided(SpaceModel):
    """M = SU(2) (radius-2 three-sphere) with K = SU(2), (k1, k) . g = k1 g k^-1."""

    name = "su2"
    n = 3
    g_dim = 3
    k_dim = 3
    k_volume = 16 * math.pi**2
    volume = 16 * math.pi**2

    def __init__(self):
        self.charts = _stereo_charts(3, 2.0, pole_index=0)
        self.special_points = np.array([[1.0, 0, 0, 0], [-1.0, 0, 0, 0]])

    def k_character(self, sigma, k):
        return su2_character(float(sigma), k)

    def irrep_dim(self, sigma):
        return int(round(2 * float(sigma) + 1))

    def sigma_labels(self):
        return [0, 0.5, 1]

    def isotropy(self, order: int = 6):
        from .groups import SU2

        nodes, w = SU2().haar_rule(order)
        return IsotropyGroup("diagonal SU(2) {(k, k)}", nodes, nodes, w, 3,
                             16 * math.pi**2 * 2 ** 1.5)

    def multiplicity(self, sigma):
        H = self.isotropy(order=max(4, int(math.ceil(4 * float(sigma))) + 2))
        vals = np.conj(self.k_character(sigma, H.k1)) * np.conj(self.k_character(sigma, H.k))
        return complex(np.sum(H.weights * vals))

    def random_points(self, rng, size):
        v = rng.standard_normal((size, 4))
        return v / np.linalg.norm(v, axis=1, keepdims=True)

    def fundamental_fields(self, g):
        g = np.asarray(g, dtype=float)
        out = []
        for a in range(3):
            e = np.zeros(4)
            e[a + 1] = 0.5
            out.append(qmul(e, g))
        for a in range(3):
            e = np.zeros(4)
            e[a + 1] = 0.5
            out.append(-qmul(g, e))
        return np.stack(out, -2)

    def g_fields(self, g):
        # left translations, G = SU(2)
        return self.fundamental_fields(g)[..., :3, :]

    def g_model(self):
        return SU2()

    def g_act(self, g, p):
        return qmul(g, p)

    def isotypic_terms(self, sigma, t, kmax):
        j = float(sigma)
        return np.array([j * (j + 1)]), np.array([(2 * j + 1) ** 2])

    def full_terms(self, t, kmax):
        j = 0.5 * np.arange(kmax + 1)
        return j * (j + 1), (2 * j + 1) ** 2

    def isotypic_kernel_diagonal(self, sigma, t, p):
        j = float(sigma)
        return np.full(np.shape(p)[:-1], (2 * j + 1) ** 2 * math.exp(-t * j * (j + 1)) / self.volume)


class SU2Bundle(SpaceModel):
    """M = SU(2) with K = U(1) = {exp(theta X_3)} acting on the right,
    (k1, k) . g = g (k1 k)^-1.  Isotypic pieces are sections of the
    homogeneous line bundles over S^2 = SU(2)/U(1)."""

    name = "su2-bundle"
    n = 3
    g_dim = 3
    k_dim = 1
    k_volume = 4 * math.pi
    volume = 16 * math.pi**2

    def __init__(self):
        self.charts = _stereo_charts(3, 2.0, pole_index=0)
        self.special_points = np.zeros((0, 4))

    def k_character(self, sigma, th):
        return np.exp(1j * float(sigma) * np.asarray(th, dtype=float))

    def sigma_labels(self):
        return [0, 1, 2]

    def isotropy(self):
        return _anti_diagonal_circle(4 * math.pi)

    def random_points(self, rng, size):
        return SU2BothSided.random_points(self, rng, size)

    def fundamental_fields(self, g):
        g = np.asarray(g, dtype=float)
        e = np.array([0.0, 0.0, 0.0, 0.5])
        v = -qmul(g, e)
        return np.stack([v, v], -2)

    def g_fields(self, g):
        return SU2BothSided.fundamental_fields(self, g)[..., :3, :]

    k_period = 4 * math.pi

    def g_model(self):
        return SU2()

    def g_act(self, g, p):
        return qmul(g, p)

    def k_act(self, s, p):
        s = np.asarray(s, dtype=float)
        z = np.zeros_like(s)
        kinv = np.stack([np.cos(s / 2), z, z, -np.sin(s / 2)], -1)
        return qmul(p, kinv)

    def isotypic_terms(self, sigma, t, kmax):
        n = float(sigma)
        j = abs(n) + np.arange(kmax + 1)
        return j * (j + 1), 2 * j + 1

    def full_terms(self, t, kmax):
        return SU2BothSided.full_terms(self, t, kmax)

    def isotypic_kernel_diagonal(self, sigma, t, p):
        lam, mult = self.isotypic_terms(sigma, t, int(math.ceil(math.sqrt(40.0 / t))) + 4)
        return np.full(np.shape(p)[:-1], np.sum(mult * np.exp(-t * lam)) / self.volume)


_SPACES = {"t1": CircleSpace, "t2": TorusSpace, "s2": SphereSpace, "su2": SU2BothSided,
           "su2-bundle": SU2Bundle}


def get_space(name: str) -> SpaceModel:
    try:
        return _SPACES[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown space {name!r}; choose from {sorted(_SPACES)}") from None
