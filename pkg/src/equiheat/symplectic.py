"""Momentum map of the doubled action on T*M, its zero level, isotropy data,
orbit volumes and the Gaussian volume of the reduced space.

All computations happen in chart coordinates ``(x, xi)``.  T*M carries the
Sasaki metric built from the Riemannian metric of M; it is compatible with
the canonical symplectic form, so Riemannian volumes of zero-level pieces
divided by orbit volumes give the reduced Liouville measure.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import qmc

from .spaces import IsotropyGroup, SpaceModel

__all__ = [
    "StratumError",
    "CotangentPoint",
    "RegXiSample",
    "IsotropyReport",
    "CriticalGeometry",
    "momentum_eval",
    "change_chart",
    "lifted_fields",
    "orbit_gram",
    "orbit_frame",
    "sample_regular_zero_level",
    "isotropy_analysis",
    "orbit_volume",
    "fhat",
    "gaussian_volume",
    "critical_geometry",
]

RANK_TOL = 1e-8
AMBIGUOUS_TOL = 1e-6
FD_STEP = 1e-4


class StratumError(ValueError):
    pass


@dataclass
class CotangentPoint:
    chart: int
    x: np.ndarray
    xi: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.xi = np.asarray(self.xi, dtype=float)


# ---------------------------------------------------------------------------
# differential data in a chart
# ---------------------------------------------------------------------------

def _fd(fun, x, h=FD_STEP):
    """Fourth-order central differences: returns d fun / dx_j stacked on axis -1
    of the input dimension, shape fun(x).shape + (n,)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    out = []
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        d = (-fun(x + 2 * e) + 8 * fun(x + e) - 8 * fun(x - e) + fun(x - 2 * e)) / (12 * h)
        out.append(d)
    return np.stack(out, -1)


def christoffel(chart, x):
    """Gamma^m_{jk}, shape (..., m, j, k)."""
    g = chart.metric(x)
    dg = _fd(chart.metric, x)  # (..., i, j, k) = d_k g_ij
    ginv = np.linalg.inv(g)
    # d_j g_lk + d_k g_lj - d_l g_jk
    t = np.einsum("...lkj->...ljk", dg) + dg - np.einsum("...jkl->...ljk", dg)
    return 0.5 * np.einsum("...ml,...ljk->...mjk", ginv, t)


def _frames(chart, x):
    g = chart.metric(x)
    L = np.linalg.cholesky(g)
    return g, L


def _sasaki_coords(L, Gam, xi, xdot, xidot):
    """Map tangent vectors of T*M to Euclidean coordinates of the Sasaki metric.

    ``xdot``, ``xidot`` have shape (..., v, n).  The vertical part is the
    covariant derivative ``xidot_k - Gamma^m_{jk} xdot^j xi_m``.
    """
    D = xidot - np.einsum("...mjk,...vj,...m->...vk", Gam, xdot, xi)
    hor = np.einsum("...ij,...vi->...vj", L, xdot)  # L^T xdot
    ver = np.linalg.solve(L[..., None, :, :], D[..., None])[..., 0]  # L^-1 D
    return np.concatenate([hor, ver], -1)


def lifted_fields(space: SpaceModel, chart, x, xi):
    """Cotangent lifts of the K x K fundamental fields, as (xdot, xidot)."""
    Z = space.chart_fields(chart, x)  # (..., a, m)
    dZ = _fd(lambda y: space.chart_fields(chart, y), x)  # (..., a, m, k) = d_k Z_a^m
    xidot = -np.einsum("...m,...amk->...ak", xi, dZ)
    return Z, xidot, dZ


def orbit_frame(space: SpaceModel, chart, x, xi):
    """Lifted orthonormal generators in Sasaki-orthonormal coordinates, (..., a, 2n)."""
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    _, L = _frames(chart, x)
    Gam = christoffel(chart, x)
    Z, xidot, _ = lifted_fields(space, chart, x, xi)
    return _sasaki_coords(L, Gam, xi, Z, xidot)


def orbit_gram(space: SpaceModel, chart, x, xi):
    """Sasaki Gram matrix of the lifted orthonormal generators, shape (..., a, a)."""
    E = orbit_frame(space, chart, x, xi)
    return np.einsum("...ai,...bi->...ab", E, E)


def _rank_info(E):
    """Singular values of the lifted generators (rows of E)."""
    sv = np.linalg.svd(E, compute_uv=False)
    sv = np.concatenate([sv, np.zeros(sv.shape[:-1] + (E.shape[-2] - sv.shape[-1],))], -1)
    top = np.maximum(sv[..., :1], 1e-300)
    rel = sv / top
    rank = np.sum(rel > AMBIGUOUS_TOL, axis=-1)
    ambiguous = np.any((rel > RANK_TOL) & (rel <= AMBIGUOUS_TOL), axis=-1)
    return sv, rank, ambiguous


def _annihilator(space, chart, x, L):
    """Orthonormal (dual metric) basis of covectors killing the base fields."""
    Z = space.chart_fields(chart, x)
    z = np.einsum("...ij,...ai->...aj", L, Z)  # L^T Z_a
    u, s, vt = np.linalg.svd(z)
    top = np.maximum(s[..., :1], 1e-300)
    r = np.sum(s / top > RANK_TOL, axis=-1)
    return vt, r


# ---------------------------------------------------------------------------
# momentum map
# ---------------------------------------------------------------------------

def momentum_eval(space: SpaceModel, pt: CotangentPoint, X) -> float:
    """``J_X(p, xi) = xi(X~_p)`` for X in Lie(K x K) given in the orthonormal basis."""
    chart = space.charts[pt.chart]
    Z = space.chart_fields(chart, pt.x)
    X = np.asarray(X, dtype=float)
    return float(pt.xi @ (X @ Z))


def change_chart(space: SpaceModel, pt: CotangentPoint, target: int) -> CotangentPoint:
    """Transport a covector to another chart: xi' = (dx'/dx)^-T xi."""
    src, dst = space.charts[pt.chart], space.charts[target]
    if dst.alpha(src.from_coords(pt.x)) <= 0:
        pass  # still defined wherever both charts are
    J = _fd(lambda y: dst.to_coords(src.from_coords(y)), pt.x)  # d x'_i / d x_j
    xp = dst.to_coords(src.from_coords(pt.x))
    return CotangentPoint(target, xp, np.linalg.solve(J.T, pt.xi))


# ---------------------------------------------------------------------------
# zero level and its regular part
# ---------------------------------------------------------------------------

@dataclass
class RegXiSample:
    """Weighted points of the regular zero level.

    ``weights`` realise d(Reg Xi) (Sasaki-induced), already multiplied by the
    quadrature or QMC weights of the parametrisation.
    """

    chart: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    alpha: np.ndarray
    orbit_volume: np.ndarray
    fiber_weight: np.ndarray  # e^{|s|^2} when s is Gaussian-sampled, else 1
    discarded: int
    singular: int
    method: str

    def __len__(self):
        return len(self.weights)

    def momentum_residual(self, space: SpaceModel) -> float:
        worst = 0.0
        for c, chart in enumerate(space.charts):
            m = self.chart == c
            if np.any(m):
                Z = space.chart_fields(chart, self.x[m])
                worst = max(worst, float(np.max(np.abs(np.einsum("na,nka->nk", self.xi[m], Z)))))
        return worst


def _region_nodes(space, chart, method, budget, seed, m, order=None):
    """Nodes (x, s) with weights for the chart region times the fiber R^m.

    Fiber weights for the QMC path include the Gaussian importance factor
    pi^(m/2) e^{|s|^2}.
    """
    n = space.n
    if method == "quadrature":
        order = order or max(12, int(round((budget / (2 * 12 ** max(n - 1, 0))) ** (1 / max(1 + m, 1)))))
        x, wx = chart.quad(order, 12)
        if m == 0:
            return x, np.zeros((len(x), 0)), wx, np.ones(len(x))
        s1, ws1 = np.polynomial.hermite.hermgauss(24)
        grids = np.meshgrid(*([s1] * m), indexing="ij")
        S = np.stack(grids, -1).reshape(-1, m)
        WS = np.ones(len(S))
        for wi in np.meshgrid(*([ws1] * m), indexing="ij"):
            WS = WS * wi.ravel()
        fiber = np.exp(np.sum(S**2, -1))  # hermgauss weight e^{-s^2} divided out later
        X = np.repeat(x, len(S), 0)
        Sx = np.tile(S, (len(x), 1))
        return X, Sx, np.repeat(wx, len(S)) * np.tile(WS, len(x)), np.tile(fiber, len(x))
    # scrambled Sobol on ball x Gaussian fiber
    eng = qmc.Sobol(n + m, scramble=True, seed=seed)
    u = eng.random(budget)
    radius = math.sqrt(3.0) if hasattr(chart, "quad") else 1.0
    x = _ball_from_unit(u[:, :n], radius, space, chart)
    wx = np.full(budget, _ball_volume(n, radius, space) / budget)
    if m:
        from scipy.special import ndtri

        S = ndtri(np.clip(u[:, n:], 1e-16, 1 - 1e-16)) / math.sqrt(2.0)
        fiber = np.exp(np.sum(S**2, -1))
        ws = np.full(budget, math.pi ** (m / 2)) * fiber
        # importance weight pi^(m/2) e^{|s|^2}; F^ e^{-|s|^2} keeps the product tame
        return x, S, wx * ws, np.ones(budget)
    return x, np.zeros((budget, 0)), wx, np.ones(budget)


def _is_torus(space):
    return space.name.startswith("t")


def _ball_from_unit(u, radius, space, chart):
    n = u.shape[1]
    if _is_torus(space):
        half = 2 * math.pi / 3
        return (2 * u - 1) * half
    if n == 2:
        r = radius * np.sqrt(u[:, 0])
        ph = 2 * np.pi * u[:, 1]
        return np.stack([r * np.cos(ph), r * np.sin(ph)], -1)
    r = radius * np.cbrt(u[:, 0])
    c = 2 * u[:, 1] - 1
    ph = 2 * np.pi * u[:, 2]
    sn = np.sqrt(1 - c**2)
    return np.stack([r * sn * np.cos(ph), r * sn * np.sin(ph), r * c], -1)


def _ball_volume(n, radius, space):
    if _is_torus(space):
        return (4 * math.pi / 3) ** n
    return {1: 2 * radius, 2: math.pi * radius**2, 3: 4 / 3 * math.pi * radius**3}[n]


def sample_regular_zero_level(
    space: SpaceModel,
    budget: int = 4096,
    method: str | None = None,
    seed: int = 12345,
    order: int | None = None,
) -> RegXiSample:
    """Weighted sample of Reg Xi over all charts.

    Points are parametrised by base coordinates x and fiber coordinates s,
    ``xi = sum_i s_i nu_i(x)`` with nu an orthonormal basis of the
    annihilator of the base fields.  The weight is the Sasaki volume of the
    parallelepiped spanned by the coordinate vectors.  Points where the
    lifted action drops rank are rejected; points in the ambiguous band are
    discarded and counted.
    """
    if budget < 1000:
        raise ValueError("budget must be at least 1000 points")
    method = method or ("qmc" if space.n >= 3 else "quadrature")
    if method not in ("qmc", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    kappa = isotropy_analysis(space).kappa
    parts = []
    discarded = singular = 0
    for c, chart in enumerate(space.charts):
        # annihilator dimension from a generic point
        x0 = chart.to_coords(space.random_points(np.random.default_rng(seed + c), 1))
        _, L0 = _frames(chart, x0)
        _, r0 = _annihilator(space, chart, x0, L0)
        m = space.n - int(r0[0])
        X, S, W, fiber = _region_nodes(space, chart, method, budget, seed + 7919 * c, m, order)
        p = chart.from_coords(X)
        alpha = chart.alpha(p)
        keep = alpha > 0
        X, S, W, fiber, alpha = X[keep], S[keep], W[keep], fiber[keep], alpha[keep]
        g, L = _frames(chart, X)
        vt, r = _annihilator(space, chart, X, L)
        nu_u = vt[:, space.n - m:, :] if m else np.zeros((len(X), 0, space.n))
        nu = np.einsum("nij,nvj->nvi", L, nu_u)  # covectors L u
        xi = np.einsum("nv,nvi->ni", S, nu) if m else np.zeros_like(X)
        # isotropy rank of the lifted action
        sv, rank, amb = _rank_info(orbit_frame(space, chart, X, xi))
        bad_rank = rank < kappa
        ok = ~amb & ~bad_rank & (r == space.n - m)
        discarded += int(np.sum(amb))
        singular += int(np.sum(bad_rank & ~amb))
        X, S, W, fiber, alpha, xi, nu, sv = X[ok], S[ok], W[ok], fiber[ok], alpha[ok], xi[ok], nu[ok], sv[ok]
        L = L[ok]
        Gam = christoffel(chart, X)
        # coordinate vectors of Reg Xi: (e_j, w_j) and (0, nu_i)
        Z = space.chart_fields(chart, X)
        dZ = _fd(lambda y: space.chart_fields(chart, y), X)
        rhs = -np.einsum("nm,namk->nka", xi, dZ)  # (n, k, a)
        A = Z  # (n, a, m): rows <w, Z_a>
        pinv = np.linalg.pinv(A, rcond=1e-10)  # (n, m, a)
        w = np.einsum("nma,nka->nkm", pinv, rhs)
        eye = np.broadcast_to(np.eye(space.n), (len(X), space.n, space.n))
        xdot = np.concatenate([eye, np.zeros((len(X), m, space.n))], 1)
        xidot = np.concatenate([w, nu], 1)
        E = _sasaki_coords(L, Gam, xi, xdot, xidot)
        dens = np.sqrt(np.abs(np.linalg.det(np.einsum("nai,nbi->nab", E, E))))
        ovol = np.prod(sv[:, :kappa], axis=1) * _orbit_factor(space)
        parts.append((np.full(len(X), c), X, xi, W * dens, alpha, ovol, fiber))
    cat = lambda i: np.concatenate([q[i] for q in parts])
    return RegXiSample(cat(0), cat(1), cat(2), cat(3), cat(4), cat(5), cat(6), discarded, singular, method)


def _orbit_factor(space):
    H = space.isotropy()
    return space.k_volume**2 / H.volume


# ---------------------------------------------------------------------------
# isotropy
# ---------------------------------------------------------------------------

@dataclass
class IsotropyReport:
    kappa: int
    Lambda: int
    isotropy: IsotropyGroup
    isotropy_dims: list

    def to_json(self) -> dict:
        return {"kappa": self.kappa, "Lambda": self.Lambda, "H": self.isotropy.to_json(),
                "isotropy_dims": self.isotropy_dims}


def _random_zero_level_points(space, rng, size):
    """Random points of Xi: random base point, random annihilating covector."""
    out = []
    p = space.random_points(rng, size)
    idx = space.chart_for(p)
    for c, chart in enumerate(space.charts):
        m = idx == c
        if not np.any(m):
            continue
        x = chart.to_coords(p[m])
        _, L = _frames(chart, x)
        vt, r = _annihilator(space, chart, x, L)
        xi = np.zeros_like(x)
        for i in range(len(x)):
            k = space.n - r[i]
            if k:
                u = vt[i, r[i]:, :].T @ rng.standard_normal(k)
                xi[i] = L[i] @ u
        out.append((c, x, xi))
    return out


_ISO_CACHE: dict = {}


def isotropy_analysis(space: SpaceModel, samples: int = 64, seed: int = 0) -> IsotropyReport:
    """kappa from the rank of the lifted generators at random points of Xi,
    Lambda from the number of isotropy types met on generic points and on the
    special points of the space (ordered by dimension)."""
    key = (space.name, samples, seed)
    if key in _ISO_CACHE:
        return _ISO_CACHE[key]
    rng = np.random.default_rng(seed)
    ranks = []
    for c, x, xi in _random_zero_level_points(space, rng, samples):
        sv, rank, amb = _rank_info(orbit_frame(space, space.charts[c], x, xi))
        ranks.extend(rank[~amb].tolist())
    if len(set(ranks)) > 1:
        raise StratumError(f"rank unstable across generic samples: {sorted(set(ranks))}; tighten tolerance")
    kappa = int(ranks[0])
    dims = {2 * space.k_dim - kappa}
    for p in space.special_points:
        c = int(space.chart_for(p[None])[0])
        chart = space.charts[c]
        x = chart.to_coords(p[None])
        sv, rank, amb = _rank_info(orbit_frame(space, chart, x, np.zeros_like(x)))
        dims.add(2 * space.k_dim - int(rank[0]))
    rep = IsotropyReport(kappa, len(dims), space.isotropy(), sorted(dims))
    _ISO_CACHE[key] = rep
    return rep


def orbit_volume(space: SpaceModel, pt: CotangentPoint) -> float:
    """Riemannian (Sasaki) volume of the K x K orbit through (p, xi)."""
    kappa = isotropy_analysis(space).kappa
    chart = space.charts[pt.chart]
    sv, rank, amb = _rank_info(orbit_frame(space, chart, pt.x[None], pt.xi[None]))
    if amb[0] or rank[0] < kappa:
        raise StratumError("point is not in the principal stratum")
    return float(np.prod(sv[0, :kappa]) * _orbit_factor(space))


# ---------------------------------------------------------------------------
# Gaussian volume
# ---------------------------------------------------------------------------

def fhat(space: SpaceModel, chart, x, xi, nodes: int = 200, check: bool = True):
    """``(4 pi)^(-d/2) int exp(i sum_l zeta_l xi(C_l)) exp(-|zeta|^2 / 4) d zeta`` over R^d.

    C_l are the chart components of the G fundamental fields.  The integrand
    is a Gaussian times a plane wave, so the integral reduces to one
    dimension along the wave vector and is done by Gauss-Hermite after
    zeta = 2u; ``check`` compares against half the nodes.
    """
    C = space.chart_g_fields(chart, x)  # (..., l, m)
    v = np.einsum("...m,...lm->...l", np.asarray(xi, dtype=float), C)
    k = np.linalg.norm(v, axis=-1)

    def one_d(nn):
        u, w = np.polynomial.hermite.hermgauss(nn)
        # (4 pi)^(-1/2) * 2 int e^{2 i u k} e^{-u^2} du
        return (np.cos(2 * np.multiply.outer(k, u)) @ w) / math.sqrt(math.pi)

    val = one_d(nodes)
    if check:
        coarse = one_d(nodes // 2)
        err = float(np.max(np.abs(val - coarse))) if np.size(val) else 0.0
        if err > 1e-10:
            raise ArithmeticError(f"zeta integral not converged (change {err:.2g}); enlarge the node count")
    # the remaining d - 1 Gaussian directions integrate to 1 after normalisation
    return val


@dataclass
class CriticalGeometry:
    kappa: int
    Lambda: int
    isotropy: IsotropyGroup
    samples: RegXiSample | None
    vol_tilde: float | None
    vol_err: float | None
    budget: int
    method: str

    def to_json(self) -> str:
        return json.dumps({
            "kappa": self.kappa, "Lambda": self.Lambda, "H": self.isotropy.to_json(),
            "vol_tilde": self.vol_tilde, "vol_err": self.vol_err, "budget": self.budget,
            "method": self.method,
            "discarded": None if self.samples is None else self.samples.discarded,
        })


def _gv_sum(space, smp, alpha_scale):
    total = 0.0
    for c, chart in enumerate(space.charts):
        m = smp.chart == c
        if not np.any(m):
            continue
        F = fhat(space, chart, smp.x[m], smp.xi[m])
        total += float(np.sum(alpha_scale * smp.alpha[m] * F * smp.fiber_weight[m] * smp.weights[m] / smp.orbit_volume[m]))
    return total


def gaussian_volume(
    space: SpaceModel,
    budget: int = 8192,
    method: str | None = None,
    seed: int = 12345,
    alpha_scale: float = 1.0,
    replicas: int = 8,
    order: int = 24,
) -> tuple[float, float]:
    """``vol~(Xi/K) = sum_iota int_{Reg Xi} F^ alpha_iota d(Reg Xi) / vol O``.

    Returns the estimate with an error bar: the spread of independently
    scrambled QMC replicas, or the change under quadrature refinement.
    """
    method = method or ("qmc" if space.n >= 3 else "quadrature")
    if method == "quadrature":
        base = sample_regular_zero_level(space, budget, "quadrature", seed, order=order)
        val = _gv_sum(space, base, alpha_scale)
        fine = sample_regular_zero_level(space, budget, "quadrature", seed, order=int(order * 1.5))
        val2 = _gv_sum(space, fine, alpha_scale)
        return val2, abs(val2 - val)
    vals = []
    per = max(1000, budget // replicas)
    per = 1 << int(math.ceil(math.log2(per)))
    for r in range(replicas):
        smp = sample_regular_zero_level(space, per, "qmc", seed + 1009 * r)
        vals.append(_gv_sum(space, smp, alpha_scale))
    vals = np.array(vals)
    return float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(len(vals)))


def critical_geometry(space: SpaceModel, budget: int = 8192, method: str | None = None,
                      seed: int = 12345) -> CriticalGeometry:
    rep = isotropy_analysis(space)
    method = method or ("qmc" if space.n >= 3 else "quadrature")
    vol, err = gaussian_volume(space, budget, method, seed)
    smp = sample_regular_zero_level(space, min(budget, 1 << 12), method, seed)
    return CriticalGeometry(rep.kappa, rep.Lambda, rep.isotropy, smp, vol, err, budget, method)
