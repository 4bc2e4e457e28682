"""Model oscillatory integrals and decay probes.

The integrals have the form

    I(mu) = int e^{i Phi(p, xi, k1, k) / mu} a(p, xi, k1, k) dx dxi d(k1, k),
    Phi = (phi(k1 k . p) - phi(p)) . xi,

over a chart of a space whose K is a circle, with normalised Haar measure on
K x K.  Amplitudes are products

    a = rho(x) alpha'(k1 k . p) P(xi) e^{-|xi|^2} v(k1, k)

with P a polynomial, so the xi-integral is done exactly by a Gauss-Hermite
rule on the shifted contour xi = eta + i Delta / 2.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .groups import SO3, SU2, GroupModel, Torus
from .heat import heat_kernel_eval, log_heat_kernel_riemannian
from .spaces import SpaceModel, smooth_step

__all__ = [
    "BudgetError",
    "StratumProximityError",
    "ConvergenceError",
    "DecayViolation",
    "BoundGrowthError",
    "OscillatorySpec",
    "OscValue",
    "OscResult",
    "integral_direct",
    "integral_regularized",
    "leading_L0",
    "asymptotic_compare",
    "disintegration_sides",
    "localization_probe",
    "symbol_probe",
    "b_amplitude_probe",
    "cutoff_insensitivity",
]

WINDOW = 15.0  # |Delta| beyond which e^{-|Delta|^2/4} is negligible
STEP = 1.19  # trapezoid step in units of mu / max speed
MAX_S_NODES = 1 << 18


class BudgetError(RuntimeError):
    def __init__(self, message: str, required_nodes: int):
        super().__init__(message)
        self.required_nodes = required_nodes


class StratumProximityError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, worst_mu: float):
        super().__init__(message)
        self.worst_mu = worst_mu


class DecayViolation(RuntimeError):
    def __init__(self, message: str, xi):
        super().__init__(message)
        self.xi = xi


class BoundGrowthError(RuntimeError):
    pass


@dataclass
class OscillatorySpec:
    """Product amplitude on one chart.

    ``rho`` maps chart coordinates (..., n) to reals and must vanish outside
    the region where the chart's alpha is positive.  ``poly`` takes complex
    xi (..., n).  ``group_factor(theta1, theta)`` is a function on K x K.
    """

    space: SpaceModel
    chart: int
    rho: Callable
    poly: Callable = None
    poly_degree: int = 0
    group_factor: Callable = None
    mu_grid: np.ndarray = field(default_factory=lambda: np.logspace(-4, -1, 7))
    order: int = 24
    angular: int = 12

    def __post_init__(self):
        if self.poly is None:
            self.poly = lambda z: np.ones(z.shape[:-1], dtype=complex)
        if self.group_factor is None:
            self.group_factor = lambda a, b: np.ones(np.broadcast(a, b).shape, dtype=complex)
        self.mu_grid = np.asarray(self.mu_grid, dtype=float)

    @property
    def chart_obj(self):
        return self.space.charts[self.chart]

    def amplitude(self, x, xi, theta1, theta):
        """Pointwise amplitude, for brute-force checks."""
        ch = self.chart_obj
        x = np.asarray(x, dtype=float)
        q = self.space.k_act(np.asarray(theta1) + np.asarray(theta), ch.from_coords(x))
        xi = np.asarray(xi)
        return (self.rho(x) * ch.alpha_prime(q) * self.poly(xi.astype(complex))
                * np.exp(-np.sum(np.abs(xi) ** 2, -1)) * self.group_factor(theta1, theta))

    def x_nodes(self):
        x, w = self.chart_obj.quad(self.order, self.angular)
        r = self.rho(x)
        keep = r != 0
        return x[keep], w[keep] * r[keep]


@dataclass
class OscValue:
    value: complex
    est_error: float
    s_nodes: int


def _hermite(n_dim: int, degree: int):
    m = degree // 2 + 2
    t, w = np.polynomial.hermite.hermgauss(m)
    if n_dim == 0:
        return np.zeros((1, 0)), np.ones(1)
    T = np.stack(np.meshgrid(*([t] * n_dim), indexing="ij"), -1).reshape(-1, n_dim)
    W = np.ones(len(T))
    for wi in np.meshgrid(*([w] * n_dim), indexing="ij"):
        W = W * wi.ravel()
    return T, W


def _safe_coords(chart, q, mask):
    """Chart coordinates of q, with points outside the cutoff sent to the centre."""
    centre = chart.from_coords(np.zeros(chart.n))
    q = np.where(mask[..., None], q, centre)
    return chart.to_coords(q)


def _displacements(spec: OscillatorySpec, s, x):
    """(phi(s.p) - phi(p), alpha'(s.p)) for s (Ns,) and x (Nx, n)."""
    ch = spec.chart_obj
    p = ch.from_coords(x)
    S = np.broadcast_to(np.asarray(s, dtype=float)[:, None], (len(s), len(x)))
    q = spec.space.k_act(S, np.broadcast_to(p, (len(s),) + p.shape))
    ap = ch.alpha_prime(q)
    y = _safe_coords(ch, q, ap > 0)
    return y - x[None], ap


def _s_window(spec: OscillatorySpec, x, mu, s_cut=None):
    """Half-width of the s-window and the largest speed inside it."""
    P = spec.space.k_period
    coarse = np.linspace(-P / 2, P / 2, 2049)
    d, ap = _displacements(spec, coarse, x)
    dist = np.linalg.norm(d, axis=-1)
    need = np.any((dist < WINDOW * mu) & (ap > 0), axis=1)
    if s_cut is not None:
        need &= np.abs(coarse) < s_cut
    if not np.any(need):
        return 0.0, 1.0, False
    ds = coarse[1] - coarse[0]
    half = float(np.max(np.abs(coarse[need]))) + 2 * ds
    speed = np.linalg.norm(np.diff(d, axis=0), axis=-1) / ds
    inside = need[:-1] | need[1:]
    vmax = float(np.max(np.where(ap[:-1] > 0, speed, 0.0)[inside]))
    periodic = half >= P / 2
    return min(half, P / 2), max(vmax, 1e-12), periodic


def _s_sum(spec, x, wx, mu, s, ws, s_weight=None):
    T, WH = _hermite(spec.space.n, spec.poly_degree)
    P = spec.space.k_period
    n_th = 32
    th = P * np.arange(n_th) / n_th
    total = 0.0 + 0.0j
    for lo in range(0, len(s), 256):
        sc = s[lo : lo + 256]
        d, ap = _displacements(spec, sc, x)  # (Ns, Nx, n), (Ns, Nx)
        delta = d / mu
        gauss = np.exp(-0.25 * np.sum(delta**2, -1))
        z = T[None, None] + 0.5j * delta[:, :, None, :]
        poly = spec.poly(z) @ WH  # (Ns, Nx)
        gv = np.mean(spec.group_factor(sc[:, None] - th[None], th[None]), axis=1)  # (Ns,)
        vals = (gauss * ap * poly) @ wx
        w = ws[lo : lo + 256] * gv
        if s_weight is not None:
            w = w * s_weight(sc)
        total += np.sum(vals * w)
    return total / P


def integral_direct(spec: OscillatorySpec, mu: float, s_cut: float | None = None,
                    s_weight: Callable | None = None) -> OscValue:
    """I(mu) with a node-doubling error estimate.

    The s = theta1 + theta integral uses a trapezoid rule on the window where
    the phase gradient is not yet large; the step is proportional to mu.
    """
    if not mu > 0:
        raise ValueError("mu must be positive")
    x, wx = spec.x_nodes()
    if len(x) == 0:
        return OscValue(0j, 0.0, 0)
    half, vmax, periodic = _s_window(spec, x, mu, s_cut)
    if half == 0.0:
        return OscValue(0j, 0.0, 0)
    h = STEP * mu / vmax
    n = int(math.ceil(2 * half / h))
    if 2 * n > MAX_S_NODES:
        raise BudgetError(f"mu={mu:g} needs {2 * n} s-nodes, cap is {MAX_S_NODES}", 2 * n)

    def rule(m):
        if periodic:
            s = -half + 2 * half * np.arange(m) / m
            return s, np.full(m, 2 * half / m)
        s = np.linspace(-half, half, m + 1)
        w = np.full(m + 1, 2 * half / m)
        w[[0, -1]] *= 0.5
        return s, w

    coarse = _s_sum(spec, x, wx, mu, *rule(n), s_weight)
    fine = _s_sum(spec, x, wx, mu, *rule(2 * n), s_weight)
    return OscValue(complex(fine), float(abs(fine - coarse)), 2 * n)


def integral_regularized(spec: OscillatorySpec, mu: float, eps: float, xi_nodes: int = 400) -> complex:
    """I(mu) with psi(eps xi) damping and a Gauss-Legendre xi box.

    Diagnostic only: the Gaussian factor already makes the amplitude
    integrable, so the result should not depend on eps.
    """
    n = spec.space.n
    L = min(2.0 / eps, 9.0)
    t, w = np.polynomial.legendre.leggauss(xi_nodes)
    t, w = L * t, L * w
    X = np.stack(np.meshgrid(*([t] * n), indexing="ij"), -1).reshape(-1, n)
    W = np.ones(len(X))
    for wi in np.meshgrid(*([w] * n), indexing="ij"):
        W = W * wi.ravel()
    rad = np.linalg.norm(eps * X, axis=-1)
    W = W * (1 - smooth_step(rad, 1.0, 2.0)) * spec.poly(X.astype(complex)) * np.exp(-np.sum(X**2, -1))

    x, wx = spec.x_nodes()
    half, vmax, periodic = _s_window(spec, x, mu)
    m = int(math.ceil(2 * half / (0.5 * STEP * mu / vmax)))
    s = np.linspace(-half, half, m + 1)
    ws = np.full(m + 1, 2 * half / m)
    ws[[0, -1]] *= 0.5
    P = spec.space.k_period
    th = P * np.arange(32) / 32
    total = 0.0j
    for i, si in enumerate(s):
        d, ap = _displacements(spec, np.array([si]), x)
        ph = np.exp(1j * (d[0] @ X.T) / mu)  # (Nx, Nxi)
        gv = np.mean(spec.group_factor(si - th, th))
        total += ws[i] * gv * np.sum(wx * ap[0] * (ph @ W))
    return complex(total / P)


# ---------------------------------------------------------------------------
# stationary phase
# ---------------------------------------------------------------------------

def _orthonormal_complement(z):
    """Rows spanning z-perp, for each z (N, n)."""
    n = z.shape[-1]
    if n == 1:
        return np.zeros((len(z), 0, 1))
    u = z / np.linalg.norm(z, axis=-1, keepdims=True)
    _, _, vt = np.linalg.svd(u[:, None, :])
    return vt[:, 1:, :]


def _transverse_hessian(spec, x, xi_c, zhat, h=1e-5):
    """Hessian of Phi in (s, b), xi = xi_c + b zhat, by Richardson-extrapolated differences."""

    def phi(s, b):
        d, _ = _displacements(spec, np.array([s]), x)
        return np.sum(d[0] * (xi_c + b * zhat), -1)

    def hess(e):
        f = {(i, j): phi(i * e, j * e) for i in (-1, 0, 1) for j in (-1, 0, 1)}
        hss = (f[1, 0] - 2 * f[0, 0] + f[-1, 0]) / e**2
        hbb = (f[0, 1] - 2 * f[0, 0] + f[0, -1]) / e**2
        hsb = (f[1, 1] - f[1, -1] - f[-1, 1] + f[-1, -1]) / (4 * e * e)
        return np.stack([np.stack([hss, hsb], -1), np.stack([hsb, hbb], -1)], -2)

    return (4 * hess(h / 2) - hess(h)) / 3


def leading_L0(spec: OscillatorySpec, geometry=None, det_floor: float = 1e-12) -> complex:
    """Leading stationary-phase coefficient over Reg C = {s = 0, xi . Z(x) = 0}.

    Reg C is parametrised by (x, c, theta) with xi = sum c_i e_i(x), e_i an
    orthonormal basis of Z(x)-perp, and (k1, k) = (-theta, theta).
    """
    if geometry is not None and getattr(geometry, "kappa", 1) != 1:
        raise ValueError("bundled critical sets have kappa = 1")
    space, ch = spec.space, spec.chart_obj
    x, wx = spec.x_nodes()
    if len(x) == 0:
        return 0j
    Z = space.chart_fields(ch, x)[:, 0, :]
    zn = np.linalg.norm(Z, axis=-1)
    zhat = Z / zn[:, None]
    E = _orthonormal_complement(Z)  # (Nx, n-1, n)
    T, WH = _hermite(space.n - 1, spec.poly_degree)
    P = space.k_period
    th = P * np.arange(32) / 32
    gv = np.mean(spec.group_factor(-th, th))
    total = 0.0j
    for c, wc in zip(T, WH):
        xi_c = np.einsum("i,nij->nj", c, E) if len(c) else np.zeros_like(x)
        H = _transverse_hessian(spec, x, xi_c, zhat)
        det = np.linalg.det(H)
        if np.any(np.abs(det) < det_floor):
            i = int(np.argmin(np.abs(det)))
            raise StratumProximityError(f"transverse Hessian nearly singular at x={x[i]}, |det|={abs(det[i]):.3g}")
        sig = np.sum(np.sign(np.linalg.eigvalsh(H)), -1)
        amp = spec.poly(xi_c.astype(complex)) * np.exp(0.25j * math.pi * sig)
        total += wc * np.sum(wx * amp / np.sqrt(np.abs(det)))
    return complex(total * gv / P)


# ---------------------------------------------------------------------------
# comparison
# ---------------------------------------------------------------------------

@dataclass
class OscResult:
    mu: np.ndarray
    values: np.ndarray
    est_errors: np.ndarray
    L0: complex
    kappa: int
    ratios: np.ndarray
    slope: float
    remainder_C: float
    remainder_log_power: int
    fit_residuals: dict

    def to_json(self) -> str:
        return json.dumps({
            "mu": self.mu.tolist(),
            "re": self.values.real.tolist(),
            "im": self.values.imag.tolist(),
            "est_errors": self.est_errors.tolist(),
            "L0": [self.L0.real, self.L0.imag],
            "kappa": self.kappa,
            "ratio_re": self.ratios.real.tolist(),
            "ratio_im": self.ratios.imag.tolist(),
            "slope": self.slope,
            "remainder_C": self.remainder_C,
            "remainder_log_power": self.remainder_log_power,
            "fit_residuals": self.fit_residuals,
        })

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["mu", "re", "im", "ratio", "err"])
            for m, v, r, e in zip(self.mu, self.values, self.ratios, self.est_errors):
                w.writerow([repr(float(m)), repr(v.real), repr(v.imag), repr(abs(r)), repr(float(e))])


def _remainder_fit(mu, r, lam_max=1):
    """Fit r ~ C mu log(1/mu)^l for l = 0..lam_max; returns the best l."""
    ok = r > 1e-13
    res = {}
    consts = {}
    for l in range(lam_max + 1):
        if np.sum(ok) < 2:
            res[l], consts[l] = 0.0, float(np.max(r / mu)) if len(r) else 0.0
            continue
        base = mu[ok] * np.log(1 / mu[ok]) ** l
        lc = np.log(r[ok]) - np.log(base)
        consts[l] = float(np.exp(np.mean(lc)))
        res[l] = float(np.std(lc))
    best = min(res, key=lambda l: (res[l] - 1e-9 * (l == 0), l))
    return consts[best], best, res


def asymptotic_compare(spec: OscillatorySpec, geometry=None, kappa: int = 1) -> OscResult:
    mu = np.sort(spec.mu_grid)
    if mu[-1] / mu[0] < 100 - 1e-9:
        raise ValueError("the mu grid must span at least two decades")
    if geometry is not None:
        kappa = int(geometry.kappa)
    vals = [integral_direct(spec, m) for m in mu]
    I = np.array([v.value for v in vals])
    err = np.array([v.est_error for v in vals])
    L0 = leading_L0(spec, geometry)
    if L0 == 0:
        raise ConvergenceError("leading coefficient vanishes", float(mu[0]))
    ratios = I / ((2 * math.pi * mu) ** kappa * L0)
    dev = np.abs(ratios - 1)
    if dev[0] > 0.1:
        raise ConvergenceError(f"ratio at mu={mu[0]:g} is {ratios[0]:.6g}", float(mu[int(np.argmax(dev))]))
    slope = float(np.polyfit(np.log(mu), np.log(np.abs(I)), 1)[0])
    C, lp, res = _remainder_fit(mu, dev)
    return OscResult(mu, I, err, L0, kappa, ratios, slope, C, lp, {str(k): v for k, v in res.items()})


def disintegration_sides(spec: OscillatorySpec, sample=None, **sample_kw) -> tuple[complex, complex]:
    """Both sides of the disintegration of Reg C over Reg Xi.

    Left: the Reg C integral of v u / |det Phi''|^{1/2}.  Right: the average
    of v over the principal isotropy times the Reg Xi integral of u divided
    by the orbit volume.  The rho support must lie where alpha of the chart
    is identically 1.
    """
    from .symplectic import sample_regular_zero_level

    space = spec.space
    lhs = leading_L0(spec)
    iso = space.isotropy()
    avg_v = complex(np.sum(iso.weights * spec.group_factor(iso.k1, iso.k)))
    if sample is None:
        sample_kw.setdefault("order", spec.order)
        sample = sample_regular_zero_level(space, **sample_kw)
    m = sample.chart == spec.chart
    x, xi = sample.x[m], sample.xi[m]
    u = spec.rho(x) * spec.poly(xi.astype(complex)) * np.exp(-np.sum(xi**2, -1))
    rhs = avg_v * np.sum(u * sample.weights[m] * sample.fiber_weight[m] / sample.orbit_volume[m])
    return lhs, complex(rhs)


def localization_probe(spec: OscillatorySpec, mu_grid, delta: float = 1.0):
    """Size of I(mu) coming from |s| >= delta/2, and the fitted power N.

    The difference between the full and the localised integral is computed
    directly as the integral against 1 - chi(s), so it is not lost to
    cancellation.
    """
    mu_grid = np.sort(np.asarray(mu_grid, dtype=float))
    chi_c = lambda s: smooth_step(np.abs(s), delta / 2, delta)
    diffs = []
    for m in mu_grid:
        v = integral_direct(spec, m, s_weight=chi_c)
        diffs.append(abs(v.value))
    diffs = np.array(diffs)
    pos = diffs > 0
    if np.sum(pos) >= 2:
        lm, ld = np.log(mu_grid[pos]), np.log(diffs[pos])
        N = float(np.min(np.diff(ld) / np.diff(lm)))
    else:
        N = math.inf
    Nint = int(min(N, 50)) if math.isfinite(N) else 50
    C = float(np.max(diffs / mu_grid**Nint)) if Nint < 50 else 0.0
    return {"mu": mu_grid, "differences": diffs, "N": N, "C_N": C}


# ---------------------------------------------------------------------------
# smoothing symbols
# ---------------------------------------------------------------------------

@dataclass
class SymbolDecay:
    """|a(x, xi)| on a grid with C_N = max |a| (1 + |xi|^2)^N.

    ``tail_exponent`` is the slope of log sup_{|xi'| >= |xi|} |a| against
    log(1 + |xi|^2) over the outer half of the grid.
    """

    xi: np.ndarray
    values: np.ndarray
    C: dict
    quad_error: float
    tail_exponent: float

    def to_json(self) -> str:
        return json.dumps({"xi": self.xi.tolist(), "abs": np.abs(self.values).tolist(),
                           "C": {str(k): v for k, v in self.C.items()}, "quad_error": self.quad_error,
                           "tail_exponent": self.tail_exponent})


def _symbol_values(space, chart, t, x, xi, order, cutoff=True):
    G = space.g_model()
    nodes, w = G.haar_rule(order)
    f = heat_kernel_eval(G, t, nodes)
    if not cutoff:
        # torus: alpha' = 1 and the phase uses the group angle itself
        th = np.mod(nodes + math.pi, 2 * math.pi) - math.pi
        return (w * f) @ np.exp(1j * th @ xi.T)
    p = chart.from_coords(np.asarray(x, dtype=float))
    gp = space.g_act(nodes, p)
    c = chart.alpha_prime(gp)
    keep = c > 0
    y = chart.to_coords(gp[keep])
    wt = w[keep] * f[keep] * c[keep]
    ph = np.exp(1j * (y - x) @ xi.T)
    return wt @ ph


def symbol_probe(space: SpaceModel, t: float, chart: int, x, xi_grid, order: int = 40, n_max: int = 4,
                 cutoff: bool = True) -> SymbolDecay:
    """a_f(x, xi) for f = p_t by Haar quadrature, with decay constants C_N.

    A violation is reported when |a| does not decay: the sup over the outer
    half of the |xi| range is at least 0.9 times the sup over the inner half.
    ``cutoff=False`` (tori only) drops alpha' and reads the phase from the
    group angle, which makes a the Fourier transform of p_t.
    """
    if not cutoff and not space.name.startswith("t"):
        raise ValueError("cutoff=False needs a torus model")
    ch = space.charts[chart]
    xi = np.atleast_2d(np.asarray(xi_grid, dtype=float))
    if xi.shape[-1] != space.n:
        xi = xi.reshape(-1, space.n)
    x = np.asarray(x, dtype=float)
    a = _symbol_values(space, ch, t, x, xi, order, cutoff)
    a2 = _symbol_values(space, ch, t, x, xi, int(order * 1.5), cutoff)
    qerr = float(np.max(np.abs(a - a2)))
    r = np.linalg.norm(xi, axis=-1)
    order_r = np.argsort(r)
    r, av = r[order_r], np.abs(a2[order_r])
    env = np.maximum.accumulate(av[::-1])[::-1]
    mid = 0.5 * r[-1]
    inner, outer = env[r < mid], env[r >= mid]
    if len(inner) and len(outer) and outer[0] >= 0.9 * inner[0] and outer[0] > 10 * qerr:
        raise DecayViolation("|a| does not decay over the grid", xi[order_r][r >= mid][0])
    sel = (r >= mid) & (env > 10 * qerr)
    if np.sum(sel) >= 2:
        tail = float(-np.polyfit(np.log1p(r[sel] ** 2), np.log(env[sel]), 1)[0])
    else:
        tail = math.inf
    r2 = 1 + r**2
    C = {N: float(np.max(av * r2**N)) for N in range(n_max + 1)}
    return SymbolDecay(xi[order_r], a2[order_r], C, qerr, tail)


# ---------------------------------------------------------------------------
# rescaled amplitudes near the identity
# ---------------------------------------------------------------------------

@dataclass
class BAmplitudeReport:
    t: np.ndarray
    sup: np.ndarray
    bound: float
    limit_error: np.ndarray

    def to_json(self) -> str:
        return json.dumps({"t": self.t.tolist(), "sup": self.sup.tolist(), "bound": self.bound,
                           "limit_error": self.limit_error.tolist()})


def _zeta_rule(d, half, m):
    t, w = np.polynomial.legendre.leggauss(m)
    t, w = half * t, half * w
    Z = np.stack(np.meshgrid(*([t] * d), indexing="ij"), -1).reshape(-1, d)
    W = np.ones(len(Z))
    for wi in np.meshgrid(*([w] * d), indexing="ij"):
        W = W * wi.ravel()
    return Z, W


def _beta(r, R, profile="smooth"):
    if profile == "smooth":
        return 1 - smooth_step(r, R / 2, R)
    # a steeper profile with the same plateau
    return 1 - smooth_step(r, R / 2, 0.6 * R)


def b_values(space: SpaceModel, chart: int, x, t: float, xi, k1, k, R: float | None = None,
             nodes: int | None = None, profile: str = "smooth") -> np.ndarray:
    """b(x, xi / sqrt t; k1, k) for arrays xi (M, n) and angles k1, k (K,).

    Returns shape (K, M).
    """
    G = space.g_model()
    ch = space.charts[chart]
    R = 0.9 * G.injectivity_radius if R is None else R
    d = G.dim
    st = math.sqrt(t)
    half = min(R / st, 12.0)
    m = nodes or {1: 160, 2: 64}.get(d, 40)
    Z, W = _zeta_rule(d, half, m)
    r = st * np.linalg.norm(Z, axis=-1)
    keep = r < R
    Z, W, r = Z[keep], W[keep], r[keep]
    g = G.exp(st * Z)
    W = W * t ** (d / 2) * np.exp(log_heat_kernel_riemannian(G, t, g)) * G.jacobian(st * Z) * _beta(r, R, profile)
    p = ch.from_coords(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    k1 = np.atleast_1d(np.asarray(k1, dtype=float))
    k = np.atleast_1d(np.asarray(k, dtype=float))
    out = np.zeros((len(k1), len(xi)), dtype=complex)
    for i in range(len(k1)):
        a1, a2 = space.k_in_g(k1[i]), space.k_in_g(k[i])
        elems = G.mul(G.mul(a1, g), a2)
        q = space.g_act(elems, p)
        ap = ch.alpha_prime(q)
        if not np.any(ap > 0):
            continue
        q0 = space.g_act(G.mul(a1, a2), p)
        y = _safe_coords(ch, q, ap > 0)
        y0 = _safe_coords(ch, q0[None], np.array([ch.alpha_prime(q0) > 0]))[0]
        ph = np.exp(1j * ((y - y0) @ xi.T) / st)
        out[i] = (W * ap) @ ph
    return out


def b_limit(space: SpaceModel, chart: int, x, xi, k1, k) -> np.ndarray:
    """alpha'(q) exp(-sum_l (xi . V_l(q))^2) at q = k1 k . p."""
    G = space.g_model()
    ch = space.charts[chart]
    p = ch.from_coords(np.asarray(x, dtype=float))
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    out = np.zeros((len(np.atleast_1d(k1)), len(xi)))
    for i, (a, b) in enumerate(zip(np.atleast_1d(k1), np.atleast_1d(k))):
        q = space.g_act(G.mul(space.k_in_g(a), space.k_in_g(b)), p)
        ap = float(ch.alpha_prime(q))
        if ap == 0:
            continue
        V = space.chart_g_fields(ch, ch.to_coords(q))  # (d, n)
        out[i] = ap * np.exp(-np.sum((xi @ V.T) ** 2, -1))
    return out


def b_amplitude_probe(space: SpaceModel, t_grid, xi_grid, k_samples, chart: int = 0, x=None,
                      R: float | None = None) -> BAmplitudeReport:
    """Sup of |b| over the grids for each t, and the distance to the t -> 0 limit."""
    t_grid = np.sort(np.asarray(t_grid, dtype=float))[::-1]
    if np.any((t_grid <= 0) | (t_grid >= 1)):
        raise ValueError("t must lie in (0, 1)")
    x = np.zeros(space.n) if x is None else np.asarray(x, dtype=float)
    k_samples = np.atleast_2d(np.asarray(k_samples, dtype=float))
    k1, k = k_samples[:, 0], k_samples[:, 1]
    lim = b_limit(space, chart, x, xi_grid, k1, k)
    sup, lerr = [], []
    for t in t_grid:
        b = b_values(space, chart, x, t, xi_grid, k1, k, R)
        sup.append(float(np.max(np.abs(b))))
        lerr.append(float(np.max(np.abs(b - lim))))
    sup = np.array(sup)
    n = len(sup)
    if n >= 4 and np.max(sup[n // 2:]) > 1.5 * np.max(sup[: n // 2]):
        raise BoundGrowthError(f"sup |b| grows as t -> 0: {sup.tolist()}")
    return BAmplitudeReport(t_grid, sup, float(np.max(sup)), np.array(lerr))


def cutoff_insensitivity(model: GroupModel, sigma, t: float, R: float | None = None, nodes: int = 400) -> float:
    """Relative change of H^sigma_{p_t beta}(e) when beta is replaced by a
    second cutoff with the same plateau of radius R/2 (K = G)."""
    R = 0.95 * model.injectivity_radius if R is None else R
    if isinstance(model, Torus) and model.n == 1:
        r, w = np.polynomial.legendre.leggauss(nodes)
        r, w = 0.5 * R * (r + 1), 0.5 * R * w  # theta in [0, R], doubled by symmetry
        logp = log_heat_kernel_riemannian(model, t, r[:, None])
        dens = 2 * w * np.cos(sigma * r)
        chi = lambda r: np.ones_like(r)
        norm = 1.0
    elif isinstance(model, SU2):
        psi_max = R / 2
        r, w = np.polynomial.legendre.leggauss(nodes)
        psi, w = 0.5 * psi_max * (r + 1), 0.5 * psi_max * w
        g = np.stack([np.cos(psi), np.sin(psi), 0 * psi, 0 * psi], -1)
        logp = log_heat_kernel_riemannian(model, t, g)
        if isinstance(model, SO3):
            # SO(3) classes: rotation angle r = 2 psi in [0, pi], density (1 - cos r)/pi
            dens = w * 2 * (1 - np.cos(2 * psi)) / math.pi * model.volume
        else:
            dens = w * (2 / math.pi) * np.sin(psi) ** 2 * model.volume
        r = 2 * psi
        j = float(sigma)
        chi = lambda r: np.sin((2 * j + 1) * r / 2) / np.sin(r / 2)
        norm = 2 * j + 1
    else:
        raise TypeError(f"no radial reduction for {model!r}")
    p = np.exp(logp)
    if isinstance(model, Torus):
        p = p * model.volume
    base = np.sum(dens * p * chi(r) * _beta(r, R))
    # the two cutoffs agree on r <= R/2, so sum the difference directly
    diff = np.sum(dens * p * chi(r) * (_beta(r, R) - _beta(r, R, "steep")))
    return float(abs(diff) / abs(norm * base))
