"""Compact model groups: U(1), T^n, SU(2) and SO(3).

Elements are numpy arrays with a trailing element axis: an angle tuple of
length ``n`` for tori, a unit quaternion ``(w, x, y, z)`` for SU(2) and
SO(3).  All routines are vectorised over leading axes.

Normalisation.  The Lie algebra basis ``X_1..X_d`` is orthonormal for the
bi-invariant metric.  For SU(2) we take ``X_a = e_a / 2`` (``e_a`` the
imaginary quaternion units), so the Casimir ``-sum X_a^2`` acts on spin ``j``
by ``j(j+1)``; the group is then the round 3-sphere of radius 2, with volume
``16 pi^2`` and injectivity radius ``2 pi``.  For U(1) the Casimir on weight
``n`` is ``n^2`` and the circle has length ``2 pi``.  Haar measures are
normalised to total mass 1; :attr:`GroupModel.volume` is the Riemannian
volume that converts between the two.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import product
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "IrrepInfo",
    "GroupModel",
    "Torus",
    "SU2",
    "SO3",
    "get_group",
    "qmul",
    "qconj",
    "quat_to_rotation",
    "su2_character",
    "euler_to_quat",
    "exp_and_log",
    "geodesic_distance",
    "irrep_data",
    "haar_integrate",
]


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of an operation."""


@dataclass(frozen=True)
class IrrepInfo:
    label: object
    dim: int
    casimir: float
    character: Callable[[np.ndarray], np.ndarray]

    def __repr__(self) -> str:
        return f"IrrepInfo(label={self.label!r}, dim={self.dim}, casimir={self.casimir})"


def _wrap(theta):
    """Reduce angles to (-pi, pi]."""
    w = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    return np.where(w == -np.pi, np.pi, w)


# ---------------------------------------------------------------------------
# quaternion helpers
# ---------------------------------------------------------------------------

def qmul(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    aw, ax, ay, az = np.moveaxis(a, -1, 0)
    bw, bx, by, bz = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def qconj(a):
    a = np.asarray(a, dtype=float)
    return a * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_rotation(q):
    """Rotation matrix of ``v -> q v q^*`` (the covering map SU(2) -> SO(3))."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    R = np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)], -1),
            np.stack([2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)], -1),
            np.stack([2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)], -1),
        ],
        axis=-2,
    )
    return R


def _half_angle(q):
    """psi in [0, pi] with q = cos(psi) + sin(psi) u."""
    q = np.asarray(q, dtype=float)
    v = np.linalg.norm(q[..., 1:], axis=-1)
    return np.arctan2(v, q[..., 0])


# ---------------------------------------------------------------------------
# models
# ---------------------------------------------------------------------------

class GroupModel:
    """Common interface of the bundled compact groups."""

    name: str
    dim: int
    basis_labels: tuple[str, ...]
    metric_scale: float
    injectivity_radius: float
    volume: float
    element_shape: tuple[int, ...]

    def identity(self) -> np.ndarray:
        raise NotImplementedError

    def exp(self, zeta) -> np.ndarray:
        raise NotImplementedError

    def log(self, g) -> np.ndarray:
        raise NotImplementedError

    def mul(self, a, b) -> np.ndarray:
        raise NotImplementedError

    def inv(self, g) -> np.ndarray:
        raise NotImplementedError

    def distance(self, g) -> np.ndarray:
        raise NotImplementedError

    def irreps(self, cutoff: float) -> list[IrrepInfo]:
        raise NotImplementedError

    def haar_rule(self, order: int) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def jacobian(self, zeta) -> np.ndarray:
        """Riemannian density of exponential coordinates relative to d zeta."""
        raise NotImplementedError

    def random(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def heat_levels(self, kmax: int) -> tuple[np.ndarray, np.ndarray]:
        """Casimir eigenvalue and summed ``d_rho^2`` per level ``k = 0..kmax``.

        The level sequence is log-concave in ``k``, which the heat-kernel
        truncation uses for its certified tail bound.
        """
        raise NotImplementedError

    def level_of(self, cutoff: float) -> int:
        """Largest level whose Casimir value is <= cutoff."""
        raise NotImplementedError

    def dist(self, g, h) -> np.ndarray:
        return self.distance(self.mul(self.inv(g), h))

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.name}>"


class Torus(GroupModel):
    """The torus T^n = (R / 2 pi Z)^n with the flat metric."""

    def __init__(self, n: int = 1):
        if n < 1:
            raise ValueError("torus rank must be positive")
        self.n = n
        self.name = "u1" if n == 1 else f"t{n}"
        self.dim = n
        self.basis_labels = tuple(f"X_{i + 1}" for i in range(n))
        self.metric_scale = 1.0
        self.injectivity_radius = math.pi
        self.volume = (2 * math.pi) ** n
        self.element_shape = (n,)

    def identity(self):
        return np.zeros(self.n)

    def exp(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return np.mod(zeta, 2 * np.pi)

    def log(self, g):
        g = np.asarray(g, dtype=float)
        return _wrap(g)

    def mul(self, a, b):
        return np.mod(np.asarray(a, float) + np.asarray(b, float), 2 * np.pi)

    def inv(self, g):
        return np.mod(-np.asarray(g, float), 2 * np.pi)

    def distance(self, g):
        return np.linalg.norm(_wrap(g), axis=-1)

    def irreps(self, cutoff):
        m = int(math.floor(math.sqrt(cutoff)))
        out = []
        for w in product(range(-m, m + 1), repeat=self.n):
            lam = float(sum(k * k for k in w))
            if lam <= cutoff:
                out.append(IrrepInfo(tuple(w), 1, lam, _torus_character(w)))
        out.sort(key=lambda r: (r.casimir, r.label))
        return out

    def character(self, label, g):
        return _torus_character(tuple(np.atleast_1d(label)))(g)

    def haar_rule(self, order):
        n = 2 * order + 2
        theta = 2 * np.pi * np.arange(n) / n
        grids = np.meshgrid(*([theta] * self.n), indexing="ij")
        nodes = np.stack([gr.ravel() for gr in grids], axis=-1)
        weights = np.full(len(nodes), 1.0 / len(nodes))
        return nodes, weights

    def jacobian(self, zeta):
        return np.ones(np.shape(zeta)[:-1])

    def random(self, rng, size):
        return rng.uniform(0, 2 * np.pi, size=(size, self.n))

    def heat_levels(self, kmax):
        k = np.arange(kmax + 1)
        return k.astype(float) ** 2, np.where(k == 0, 1.0, 2.0)

    def level_of(self, cutoff):
        return int(math.floor(math.sqrt(cutoff)))


def _torus_character(w):
    w = np.asarray(w, dtype=float)

    def chi(g):
        return np.exp(1j * (np.asarray(g, float) @ w))

    return chi


def su2_character(j: float, g) -> np.ndarray:
    """chi_j(g) = sin((2j+1) psi) / sin(psi) for g = cos psi + sin psi u."""
    psi = _half_angle(g)
    n = 2 * j + 1
    s = np.sin(psi)
    with np.errstate(invalid="ignore", divide="ignore"):
        val = np.sin(n * psi) / s
    # endpoints: psi = 0 -> n, psi = pi -> (-1)^(2j) n
    near0 = s < 1e-7
    limit = np.where(psi < np.pi / 2, n, n * (-1.0) ** round(2 * j))
    # second-order correction keeps the limit smooth at the endpoints
    d = np.where(psi < np.pi / 2, psi, np.pi - psi)
    corr = limit * (1 - (n * n - 1) * d * d / 6)
    return np.where(near0, corr, val)


class SU2(GroupModel):
    """SU(2) as unit quaternions, X_a = e_a/2 orthonormal."""

    def __init__(self):
        self.name = "su2"
        self.dim = 3
        self.basis_labels = ("X_1", "X_2", "X_3")
        self.metric_scale = 2.0  # radius of the round 3-sphere
        self.injectivity_radius = 2 * math.pi
        self.volume = 16 * math.pi**2
        self.element_shape = (4,)
        self._spins_step = 0.5

    def identity(self):
        return np.array([1.0, 0.0, 0.0, 0.0])

    def exp(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        r = np.linalg.norm(zeta, axis=-1)
        half = r / 2
        # sin(r/2)/r, regular at 0
        sinc = np.where(r > 1e-12, np.sin(half) / np.where(r > 0, r, 1.0), 0.5 - r * r / 48)
        return np.concatenate([np.cos(half)[..., None], zeta * sinc[..., None]], axis=-1)

    def log(self, g):
        g = np.asarray(g, dtype=float)
        psi = _half_angle(g)
        if np.any(2 * psi >= self.injectivity_radius - 1e-12):
            raise DomainError("log requested at or beyond the injectivity radius (g = -1)")
        v = g[..., 1:]
        nv = np.linalg.norm(v, axis=-1)
        scale = np.where(nv > 1e-300, 2 * psi / np.where(nv > 0, nv, 1.0), 2.0)
        return v * scale[..., None]

    def mul(self, a, b):
        return qmul(a, b)

    def inv(self, g):
        return qconj(g)

    def distance(self, g):
        return 2 * _half_angle(g)

    def spins(self, cutoff):
        out = []
        j = 0.0
        while j * (j + 1) <= cutoff:
            out.append(j)
            j += self._spins_step
        return out

    def irreps(self, cutoff):
        return [
            IrrepInfo(j, int(round(2 * j + 1)), j * (j + 1), _bind_su2(j))
            for j in self.spins(cutoff)
        ]

    def character(self, label, g):
        return su2_character(float(label), g)

    def haar_rule(self, order):
        """Euler-angle product rule, exact for matrix coefficients of spin <= order.

        g = exp(alpha X_3) exp(beta X_2) exp(gamma X_3) with alpha, gamma in
        [0, 4 pi) (a double cover, so half-integer weights stay periodic) and
        beta in [0, pi]; Gauss-Legendre in cos(beta) with ``order + 2`` nodes,
        trapezoid in alpha and gamma with ``2 order + 2`` nodes each.
        """
        na, nb, ng = 2 * order + 2, order + 2, 2 * order + 2
        alpha = 4 * np.pi * np.arange(na) / na
        x, wx = np.polynomial.legendre.leggauss(nb)
        beta = np.arccos(x)
        gamma = 4 * np.pi * np.arange(ng) / ng
        A, B, C = np.meshgrid(alpha, beta, gamma, indexing="ij")
        W = np.broadcast_to((wx / 2)[None, :, None], A.shape) / (na * ng)
        nodes = euler_to_quat(A.ravel(), B.ravel(), C.ravel())
        return nodes, W.ravel().copy()

    def jacobian(self, zeta):
        r = np.linalg.norm(np.asarray(zeta, float), axis=-1)
        h = r / 2
        return np.where(h > 1e-8, (np.sin(h) / np.where(h > 0, h, 1.0)) ** 2, 1 - h * h / 3)

    def random(self, rng, size):
        q = rng.standard_normal((size, 4))
        return q / np.linalg.norm(q, axis=-1, keepdims=True)

    def heat_levels(self, kmax):
        j = np.arange(kmax + 1) * self._spins_step
        return j * (j + 1), (2 * j + 1) ** 2

    def level_of(self, cutoff):
        j = (-1 + math.sqrt(1 + 4 * cutoff)) / 2
        return int(math.floor(j / self._spins_step + 1e-12))

    def level_label(self, k):
        return k * self._spins_step


def _bind_su2(j):
    return lambda g: su2_character(j, g)


def euler_to_quat(alpha, beta, gamma):
    a = np.stack([np.cos(alpha / 2), 0 * alpha, 0 * alpha, np.sin(alpha / 2)], -1)
    b = np.stack([np.cos(beta / 2), 0 * beta, np.sin(beta / 2), 0 * beta], -1)
    c = np.stack([np.cos(gamma / 2), 0 * gamma, 0 * gamma, np.sin(gamma / 2)], -1)
    return qmul(qmul(a, b), c)


class SO3(SU2):
    """SO(3) = SU(2)/{+-1}; quaternions are canonicalised to w >= 0."""

    def __init__(self):
        super().__init__()
        self.name = "so3"
        self.injectivity_radius = math.pi
        self.volume = 8 * math.pi**2
        self._spins_step = 1.0

    @staticmethod
    def canonical(q):
        q = np.asarray(q, dtype=float)
        sign = np.where(q[..., :1] < 0, -1.0, 1.0)
        return q * sign

    def exp(self, zeta):
        return self.canonical(super().exp(zeta))

    def log(self, g):
        g = self.canonical(g)
        if np.any(self.distance(g) >= self.injectivity_radius - 1e-12):
            raise DomainError("log requested at or beyond the injectivity radius")
        return super().log(g)

    def mul(self, a, b):
        return self.canonical(qmul(a, b))

    def inv(self, g):
        return self.canonical(qconj(g))

    def distance(self, g):
        return 2 * _half_angle(self.canonical(g))

    def jacobian(self, zeta):
        return super().jacobian(zeta)

    def haar_rule(self, order):
        nodes, w = super().haar_rule(order)
        return self.canonical(nodes), w

    def random(self, rng, size):
        return self.canonical(super().random(rng, size))


_REGISTRY = {
    "u1": lambda: Torus(1),
    "t1": lambda: Torus(1),
    "t2": lambda: Torus(2),
    "t3": lambda: Torus(3),
    "su2": SU2,
    "so3": SO3,
}


def get_group(name: str) -> GroupModel:
    try:
        return _REGISTRY[name.lower()]()
    except KeyError:
        raise KeyError(f"unknown group model {name!r}; choose from {sorted(_REGISTRY)}") from None


# ---------------------------------------------------------------------------
# module-level operations
# ---------------------------------------------------------------------------

def exp_and_log(model: GroupModel, zeta, inverse: bool = False):
    """Exponential map in canonical coordinates, or its inverse when ``inverse``."""
    if inverse:
        z = model.log(zeta)
        return z
    return model.exp(zeta)


def geodesic_distance(model: GroupModel, g) -> np.ndarray:
    return model.distance(g)


def irrep_data(model: GroupModel, cutoff: float) -> list[IrrepInfo]:
    if cutoff <= 0:
        raise DomainError("cutoff must be positive")
    return model.irreps(cutoff)


def haar_integrate(model: GroupModel, phi, order: int = 16) -> complex:
    """Integrate ``phi`` against normalised Haar measure.

    Exact for band-limited integrands up to the rule's order.  The reduction
    uses ``math.fsum`` so the result does not depend on evaluation order.
    """
    nodes, weights = model.haar_rule(order)
    vals = np.asarray(phi(nodes), dtype=complex) * weights
    return complex(math.fsum(vals.real), math.fsum(vals.imag))
