"""Heat kernels on the model groups as truncated Peter-Weyl series.

``p_t(g) = sum_rho d_rho exp(-t lambda_rho) chi_rho(g)`` is the kernel of
``exp(-t Delta_G)`` with respect to *normalised* Haar measure; divide by
``model.volume`` for the kernel against Riemannian volume.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp

from .groups import (
    SO3,
    SU2,
    DomainError,
    GroupModel,
    IrrepInfo,
    Torus,
    qconj,
    qmul,
    quat_to_rotation,
    su2_character,
)

__all__ = [
    "TruncationError",
    "NotInstantiatedError",
    "BoundViolation",
    "ExpansionViolation",
    "HeatKernelSeries",
    "BoundFitResult",
    "LanglandsExpansion",
    "CompactSubgroup",
    "circle_subgroup",
    "whole_group",
    "log_concave_tail",
    "heat_kernel_series",
    "heat_kernel_eval",
    "heat_kernel_riemannian",
    "log_heat_kernel_riemannian",
    "convolve",
    "gaussian_bound_fit",
    "h_sigma_kernel",
    "langlands_probe",
    "bundle_kernel",
    "export_kernel_csv",
]

REL_TOL = 1e-12
MAX_LEVEL = 200_000


class TruncationError(RuntimeError):
    def __init__(self, message: str, required_level: int):
        super().__init__(message)
        self.required_level = required_level


class NotInstantiatedError(NotImplementedError):
    pass


class BoundViolation(RuntimeError):
    def __init__(self, message: str, worst: dict):
        super().__init__(message)
        self.worst = worst


class ExpansionViolation(RuntimeError):
    pass


def _check_q(q):
    if q != 2:
        raise NotInstantiatedError(
            f"semigroup kernels of order q={q} are not instantiated; only q=2 heat kernels are"
        )


def log_concave_tail(terms: np.ndarray, k: int) -> float:
    """Bound for ``sum_{i > k} terms[i]`` of a log-concave positive sequence.

    Needs ``terms[k+1]`` and ``terms[k+2]``; ratios are nonincreasing beyond
    ``k+1`` so the tail is dominated by a geometric series.
    """
    a1, a2 = terms[k + 1], terms[k + 2]
    if a1 == 0.0:
        return 0.0
    r = a2 / a1
    if r >= 1.0:
        return math.inf
    return a1 / (1.0 - r)


@dataclass
class HeatKernelSeries:
    model: GroupModel
    t: float
    level_max: int
    casimirs: np.ndarray
    weights: np.ndarray  # summed d_rho^2 per level
    tail_bound: float
    power: int = 1  # T^n is the n-th power of the circle series

    @property
    def cutoff(self) -> float:
        return float(self.casimirs[-1])

    @property
    def value_at_identity(self) -> float:
        return float(math.fsum(self.weights * np.exp(-self.t * self.casimirs))) ** self.power


def _level_count(model: GroupModel, t: float, rel_tol: float, max_level: int):
    k = max(4, model.level_of(max(1.0, 40.0 / t)) + 2)
    while True:
        if k > max_level:
            raise TruncationError(
                f"heat series at t={t:g} needs more than {max_level} levels", required_level=k
            )
        lam, D = model.heat_levels(k + 2)
        terms = D * np.exp(-t * lam)
        head = math.fsum(terms[: k + 1])
        tail = log_concave_tail(terms, k)
        if tail <= rel_tol * head:
            # shrink to the smallest admissible level
            lo = 1
            while lo < k:
                mid = (lo + k) // 2
                if log_concave_tail(terms, mid) <= rel_tol * math.fsum(terms[: mid + 1]):
                    k = mid
                else:
                    lo = mid + 1
            return k, lam[: k + 1], D[: k + 1], log_concave_tail(terms, k)
        k *= 2


def heat_kernel_series(
    model: GroupModel, t: float, rel_tol: float = REL_TOL, max_level: int = MAX_LEVEL
) -> HeatKernelSeries:
    if not t > 0:
        raise DomainError("heat kernel needs t > 0")
    if isinstance(model, Torus) and model.n > 1:
        base = heat_kernel_series(Torus(1), t, rel_tol / (2 * model.n), max_level)
        s, tau = base.value_at_identity, base.tail_bound
        tail = (s + tau) ** model.n - s**model.n
        return HeatKernelSeries(model, t, base.level_max, base.casimirs, base.weights, tail, model.n)
    k, lam, D, tail = _level_count(model, t, rel_tol, max_level)
    return HeatKernelSeries(model, t, k, lam, D, tail)


def _u1_sum(t, theta, series):
    n = np.arange(1, series.level_max + 1)
    c = np.exp(-t * n.astype(float) ** 2)
    theta = np.asarray(theta, dtype=float)
    out = np.ones(theta.shape)
    flat = theta.reshape(-1)
    res = out.reshape(-1)
    for s in range(0, flat.size, 4096):
        res[s : s + 4096] += 2 * np.cos(np.outer(flat[s : s + 4096], n)) @ c
    return out


def heat_kernel_eval(model: GroupModel, t: float, g, series: HeatKernelSeries | None = None):
    """``p_t(g)`` against normalised Haar measure."""
    if series is None:
        series = heat_kernel_series(model, t)
    g = np.asarray(g, dtype=float)
    if isinstance(model, Torus):
        base = series if model.n == 1 else heat_kernel_series(Torus(1), t, REL_TOL / (2 * model.n))
        out = np.ones(g.shape[:-1])
        for i in range(model.n):
            out = out * _u1_sum(t, g[..., i], base)
        return out
    if isinstance(model, SU2):
        psi = np.arctan2(np.linalg.norm(g[..., 1:], axis=-1), g[..., 0])
        step = model._spins_step
        k = np.arange(series.level_max + 1)
        j = k * step
        n = 2 * j + 1
        coeff = n * np.exp(-t * j * (j + 1))
        flat = psi.reshape(-1)
        out = np.empty(flat.shape)
        for s in range(0, flat.size, 2048):
            p = flat[s : s + 2048]
            sp = np.sin(p)
            small = sp < 1e-6
            safe = np.where(small, 1.0, sp)
            vals = np.sin(np.outer(p, n)) / safe[:, None]
            if np.any(small):
                # endpoint limits of sin(n psi)/sin(psi)
                near_pi = p > np.pi / 2
                lim = np.where(near_pi[:, None], n * (-1.0) ** np.round(2 * j), n)
                vals = np.where(small[:, None], lim, vals)
            out[s : s + 2048] = vals @ coeff
        return out.reshape(psi.shape)
    raise TypeError(f"no heat kernel for {model!r}")


def heat_kernel_riemannian(model: GroupModel, t: float, g, series=None):
    """Heat kernel against the Riemannian volume of the model."""
    return heat_kernel_eval(model, t, g, series) / model.volume


def _log_wrapped_1d(t, theta):
    """log of (4 pi t)^(-1/2) sum_k exp(-(theta + 2 pi k)^2 / 4t)."""
    theta = np.asarray(theta, dtype=float)
    K = 3 + int(math.ceil(3 * math.sqrt(t)))
    k = np.arange(-K, K + 1)
    e = -((theta[..., None] + 2 * math.pi * k) ** 2) / (4 * t)
    return logsumexp(e, axis=-1) - 0.5 * math.log(4 * math.pi * t)


def _log_su2_images(t, psi):
    """Image sum for the round S^3 of radius 2, r = 2 psi, 0 < psi < pi."""
    psi = np.asarray(psi, dtype=float)
    K = 3 + int(math.ceil(3 * math.sqrt(t)))
    k = np.arange(-K, K + 1)
    x = psi[..., None] + 2 * math.pi * k
    s, sign = logsumexp(-(x**2) / t, b=x, axis=-1, return_sign=True)
    return s - np.log(np.sin(psi)) + t / 4 - 1.5 * math.log(4 * math.pi * t)


def log_heat_kernel_riemannian(model: GroupModel, t: float, g, floor: float = 1e-6):
    """``log p_t(g)`` against Riemannian volume, accurate where p_t underflows.

    The Peter-Weyl value is used where it exceeds ``floor * p_t(e)``;
    elsewhere the Gaussian image sum over geodesics is summed in log space.
    """
    if not t > 0:
        raise DomainError("heat kernel needs t > 0")
    g = np.asarray(g, dtype=float)
    if isinstance(model, Torus):
        return np.sum(_log_wrapped_1d(t, g), axis=-1)
    if isinstance(model, SO3):
        a = log_heat_kernel_riemannian(SU2(), t, g, floor)
        b = log_heat_kernel_riemannian(SU2(), t, -g, floor)
        return np.logaddexp(a, b)
    if isinstance(model, SU2):
        ser = heat_kernel_series(model, t)
        pw = heat_kernel_eval(model, t, g, ser)
        psi = np.arctan2(np.linalg.norm(g[..., 1:], axis=-1), g[..., 0])
        use_pw = pw > floor * ser.value_at_identity
        with np.errstate(divide="ignore", invalid="ignore"):
            img = _log_su2_images(t, np.where(use_pw, 1.0, psi))
            return np.where(use_pw, np.log(np.where(use_pw, pw, 1.0) / model.volume), img)
    raise TypeError(f"no heat kernel for {model!r}")


def convolve(model: GroupModel, f1, f2, g, order: int = 24):
    """``(f1 * f2)(g) = int f1(h) f2(h^-1 g) dh`` by Haar quadrature."""
    nodes, w = model.haar_rule(order)
    g = np.atleast_2d(np.asarray(g, dtype=float))
    a = f1(nodes)
    out = np.empty(len(g), dtype=np.result_type(a, float))
    hinv = model.inv(nodes)
    for i, gi in enumerate(g):
        out[i] = np.sum(w * a * f2(model.mul(hinv, gi)))
    return out


# ---------------------------------------------------------------------------
# compact subgroups used for isotypic projections
# ---------------------------------------------------------------------------

@dataclass
class CompactSubgroup:
    """A compact subgroup K of a model group with a Haar rule and characters."""

    name: str
    elements: np.ndarray
    weights: np.ndarray
    params: np.ndarray
    character_fn: object
    irrep_dim: object = lambda label: 1
    is_whole: bool = False

    def character(self, label) -> np.ndarray:
        return self.character_fn(label, self.params)


def circle_subgroup(model: GroupModel, nodes: int = 64) -> CompactSubgroup:
    """U(1) = {exp(theta X_3)} inside SU(2), or U(1) itself.

    For SU(2) theta runs over [0, 4 pi) and weights are half-integers m,
    ``pi_m(exp(theta X_3)) = exp(i m theta)``.
    """
    if isinstance(model, SU2):
        theta = 4 * np.pi * np.arange(nodes) / nodes
        elems = np.stack([np.cos(theta / 2), 0 * theta, 0 * theta, np.sin(theta / 2)], -1)
        return CompactSubgroup(
            "u1-in-su2", elems, np.full(nodes, 1.0 / nodes), theta,
            lambda m, th: np.exp(1j * float(m) * th),
        )
    if isinstance(model, Torus) and model.n == 1:
        theta = 2 * np.pi * np.arange(nodes) / nodes
        return CompactSubgroup(
            "u1", theta[:, None], np.full(nodes, 1.0 / nodes), theta,
            lambda m, th: np.exp(1j * float(m) * th),
        )
    raise TypeError(f"no circle subgroup bundled for {model!r}")


def whole_group(model: GroupModel, order: int = 8) -> CompactSubgroup:
    nodes, w = model.haar_rule(order)
    if isinstance(model, SU2):
        return CompactSubgroup(
            model.name, nodes, w, nodes, lambda j, g: su2_character(float(j), g),
            irrep_dim=lambda j: int(round(2 * float(j) + 1)), is_whole=True,
        )
    return CompactSubgroup(
        model.name, nodes, w, nodes, lambda m, g: np.exp(1j * (g @ np.atleast_1d(np.asarray(m, float)))),
        is_whole=True,
    )


def h_sigma_kernel(model: GroupModel, f, sigma, g, subgroup: CompactSubgroup | None = None):
    """``H^sigma_f(g) = d^2 int_K int_K f(k1^-1 g k^-1) conj chi(k1) conj chi(k) dk dk1``.

    ``sigma`` is an irrep label of the subgroup (a weight for circles, a
    spin for K = SU(2)).
    """
    if subgroup is None:
        subgroup = whole_group(model) if not isinstance(model, Torus) else circle_subgroup(model)
    g = np.atleast_1d(np.asarray(g, dtype=float))
    single = g.ndim == 1
    if single:
        g = g[None]
    d = subgroup.irrep_dim(sigma)
    K = subgroup.elements
    chi_bar = np.conj(subgroup.character(sigma)) * subgroup.weights
    Kinv = model.inv(K)
    out = np.empty(len(g), dtype=complex)
    if subgroup.is_whole:
        # chi * chi = chi / d collapses the double integral:
        # H(g) = d int f(h) conj chi(g h^-1) dh
        fw = f(K) * subgroup.weights
        for i, gi in enumerate(g):
            out[i] = d * (fw @ np.conj(subgroup.character_fn(sigma, model.mul(gi, Kinv))))
        return out[0] if single else out
    for i, gi in enumerate(g):
        left = model.mul(Kinv, gi)  # k1^-1 g
        args = model.mul(left[:, None], Kinv[None, :])  # k1^-1 g k^-1
        vals = f(args)
        out[i] = d * d * (chi_bar @ vals @ chi_bar)
    return out[0] if single else out


# ---------------------------------------------------------------------------
# Gaussian bound fit
# ---------------------------------------------------------------------------

@dataclass
class BoundFitResult:
    a: float
    b: float
    omega: float
    q: int
    residual: float
    grid_size: int
    k_averaged_ok: bool | None = None
    k_averaged_worst_ratio: float | None = None
    details: dict = field(default_factory=dict)


def _direction_elements(model: GroupModel, r):
    r = np.asarray(r, dtype=float)
    zeta = np.zeros(r.shape + (model.dim,))
    zeta[..., 0] = r
    return model.exp(zeta)


def gaussian_bound_fit(
    model: GroupModel,
    t_grid,
    r_grid,
    q: int = 2,
    slack: float = 10.0,
    sigma=None,
) -> BoundFitResult:
    """Fit ``|p_t(g)| <= a t^(-d/2) e^(omega t) e^(-b |g|^2 / t)`` on a grid.

    ``a`` and ``omega`` are fixed from the ``g = e`` data (up to a factor
    ``slack`` in ``a``) and ``b`` is then maximised by linear programming in
    ``(log a, omega, b)``.  With ``sigma`` given (SU(2) only) the K-averaged
    kernel ``H^sigma_{p_t}`` is checked against the variant with
    ``d(gK, K)`` in place of ``|g|``.
    """
    _check_q(q)
    t_grid = np.asarray(t_grid, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    d = model.dim
    elems = _direction_elements(model, r_grid)
    rows = []
    for t in t_grid:
        logp = log_heat_kernel_riemannian(model, t, elems)
        for r, lp in zip(r_grid, logp):
            rows.append((t, r, lp + 0.5 * d * math.log(t)))
    rows = np.array(rows)
    T, R, Y = rows.T
    # stage 1: g = e only, minimise log a + omega
    at_e = R == 0
    if not np.any(at_e):
        raise ValueError("r_grid must contain 0")
    A1 = np.c_[-np.ones(at_e.sum()), -T[at_e]]
    res1 = linprog([1.0, 1.0], A_ub=A1, b_ub=-Y[at_e], bounds=[(None, None), (0, 50)])
    if not res1.success:
        raise BoundViolation("no feasible (a, omega) at g = e", {})
    logA0, om0 = res1.x
    # stage 2: maximise b
    A2 = np.c_[-np.ones(len(T)), -T, R**2 / T]
    res2 = linprog(
        [0.0, 0.0, -1.0],
        A_ub=A2,
        b_ub=-Y,
        bounds=[(None, logA0 + math.log(slack)), (0, om0 + 1.0), (0, 10)],
    )
    if not res2.success:
        viol = Y - (logA0 + om0 * T)
        i = int(np.argmax(viol))
        raise BoundViolation(
            "no feasible Gaussian bound", {"t": float(T[i]), "r": float(R[i]), "excess": float(viol[i])}
        )
    logA, om, b = res2.x
    resid = float(np.max(Y - (logA + om * T - b * R**2 / T)))
    out = BoundFitResult(math.exp(logA), float(b), float(om), q, max(resid, 0.0), len(T))
    if sigma is not None:
        out.k_averaged_ok, out.k_averaged_worst_ratio = _check_k_averaged(
            model, t_grid, out, sigma
        )
    return out


def _check_k_averaged(model, t_grid, fit, sigma, npts=24):
    """Check |H^sigma_{p_t}(g)| <= d^2 a t^(-d/2) e^(omega t) e^(-b d(gK,K)^2/t)."""
    if not isinstance(model, SU2):
        raise TypeError("K-averaged bound check is bundled for SU(2) / U(1)")
    K = circle_subgroup(model, 48)
    beta = np.linspace(0, np.pi, npts)
    # g = exp(beta X_2): d(gK, K) on the unit sphere G/K is beta
    g = np.stack([np.cos(beta / 2), 0 * beta, np.sin(beta / 2), 0 * beta], -1)
    zaxis = quat_to_rotation(g)[..., :, 2]
    dist = np.arccos(np.clip(zaxis[..., 2], -1, 1))
    worst = 0.0
    for t in t_grid:
        if t < 0.02:
            continue  # circle quadrature resolves only moderate t
        ser = heat_kernel_series(model, t)
        f = lambda x: heat_kernel_riemannian(model, t, x, ser)
        H = np.abs(h_sigma_kernel(model, f, sigma, g, K))
        bound = fit.a * t ** (-model.dim / 2) * math.exp(fit.omega * t) * np.exp(-fit.b * dist**2 / t)
        # quadrature resolves H only down to a round-off floor
        floor = 1e-12 * ser.value_at_identity / model.volume
        worst = max(worst, float(np.max(np.maximum(H - floor, 0.0) / bound)))
    return worst <= 1.0, worst


# ---------------------------------------------------------------------------
# Langlands expansion probe
# ---------------------------------------------------------------------------

@dataclass
class LanglandsExpansion:
    c0_estimate: float
    c0_expected: float
    d: int
    q: int
    b: float
    ratios: np.ndarray  # shape (len(t_grid), len(r_grid))
    t_grid: np.ndarray
    r_grid: np.ndarray

    @property
    def max_rel_deviation_at_smallest_t(self) -> float:
        i = int(np.argmin(self.t_grid))
        return float(np.max(np.abs(self.ratios[i] / self.c0_expected - 1)))


def langlands_probe(model: GroupModel, t_grid, r_grid, q: int = 2) -> LanglandsExpansion:
    """Normalised ratios ``p_t(g) t^(d/2) exp(|g|^2 / 4t)`` near ``t = 0``."""
    _check_q(q)
    t_grid = np.asarray(t_grid, dtype=float)
    r_grid = np.asarray(r_grid, dtype=float)
    if np.any(t_grid > 0.1):
        raise DomainError("langlands_probe expects t <= 0.1")
    if np.any(r_grid >= model.injectivity_radius):
        raise DomainError("probe points must lie inside the injectivity radius")
    d = model.dim
    elems = _direction_elements(model, r_grid)
    log_ratios = np.array(
        [log_heat_kernel_riemannian(model, t, elems) + 0.5 * d * math.log(t) + r_grid**2 / (4 * t) for t in t_grid]
    )
    if np.any(np.ptp(log_ratios, axis=0) > math.log(10.0)):
        raise ExpansionViolation("normalised ratio is not bounded along the t grid")
    ratios = np.exp(log_ratios)
    expected = (4 * math.pi) ** (-d / 2)
    # c0(e): linear extrapolation in t of the g = e ratios
    i0 = int(np.argmin(np.abs(r_grid)))
    if len(t_grid) >= 2:
        c1, c0 = np.polyfit(t_grid, ratios[:, i0], 1)
    else:
        c0 = ratios[0, i0]
    dev = np.abs(ratios[:, i0] / expected - 1)
    order = np.argsort(-t_grid)
    if len(t_grid) >= 3 and dev[order][-1] > max(dev[order][0], 1e-12) * 1.5:
        raise ExpansionViolation("normalised ratio drifts away from (4 pi)^(-d/2) as t -> 0")
    return LanglandsExpansion(float(c0), expected, d, q, 0.25, ratios, t_grid, r_grid)


# ---------------------------------------------------------------------------
# homogeneous line bundles over S^2 = SU(2)/U(1)
# ---------------------------------------------------------------------------

def bundle_kernel(model: GroupModel, n, t: float, g, nodes: int = 64) -> np.ndarray:
    """``h_t^sigma(g) = e^(t n^2) int int p_t(k^-1 g k1) pi_n(k k1^-1) dk1 dk`` (1x1)."""
    if not isinstance(model, SU2):
        raise TypeError("bundle kernels are bundled for G = SU(2), K = U(1)")
    ser = heat_kernel_series(model, t)
    K = circle_subgroup(model, nodes)
    th = K.params
    w = K.weights
    g = np.atleast_2d(np.asarray(g, dtype=float))
    Kinv = qconj(K.elements)
    # pi_n(k k1^-1) = exp(i n (theta - theta1))
    phase = np.exp(1j * float(n) * (th[:, None] - th[None, :]))
    out = np.empty(len(g), dtype=complex)
    for i, gi in enumerate(g):
        left = qmul(Kinv, gi)  # k^-1 g
        args = qmul(left[:, None], K.elements[None, :])  # k^-1 g k1
        vals = heat_kernel_eval(model, t, args, ser)
        out[i] = math.exp(t * float(n) ** 2) * (w @ (vals * phase) @ w)
    return out


def export_kernel_csv(path, model: GroupModel, t_grid, r_grid) -> None:
    """Write ``t, |g|, value, tail_bound`` rows for the Riemannian heat kernel."""
    import csv

    elems = _direction_elements(model, np.asarray(r_grid, float))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "abs_g", "value", "tail_bound"])
        for t in t_grid:
            ser = heat_kernel_series(model, t)
            vals = heat_kernel_riemannian(model, t, elems, ser)
            for r, v in zip(r_grid, vals):
                w.writerow([repr(float(t)), repr(float(r)), repr(float(v)), repr(ser.tail_bound / model.volume)])
