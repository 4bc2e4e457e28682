"""Isotypic heat traces, their kernel-diagonal counterparts and small-time fits."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from .heat import TruncationError, log_concave_tail
from .spaces import SpaceModel

__all__ = [
    "FitError",
    "QuadratureError",
    "GeometryIncompleteError",
    "TraceCurve",
    "PowerLawFit",
    "dyadic_grid",
    "spectral_trace",
    "trace_curve",
    "kernel_diagonal_trace",
    "fit_small_time",
    "remainder_constant",
    "predicted_leading",
]

REL_TOL = 1e-12


class FitError(RuntimeError):
    def __init__(self, message: str, condition: float = math.nan):
        super().__init__(message)
        self.condition = condition


class QuadratureError(RuntimeError):
    pass


class GeometryIncompleteError(ValueError):
    pass


def dyadic_grid(t0: float = 0.1, kmax: int = 12) -> np.ndarray:
    return t0 * 2.0 ** -np.arange(kmax + 1)


def _certified(terms_fn, t: float, max_level: int):
    """Sum a log-concave series with a certified geometric tail."""
    k = 8 + int(math.sqrt(40.0 / t))
    while True:
        if k > max_level:
            # smallest t the budget certifies, from lambda_k ~ k^2
            raise TruncationError(
                f"isotypic trace at t={t:g} exceeds the level budget {max_level}; "
                f"minimum achievable t is about {40.0 / max_level**2:.3g}",
                required_level=k,
            )
        lam, mult = terms_fn(k + 2)
        terms = mult * np.exp(-t * lam)
        if len(terms) <= k + 2:
            # finite spectrum
            return math.fsum(terms), 0.0
        head = math.fsum(terms[: k + 1])
        tail = log_concave_tail(terms, k)
        if tail <= REL_TOL * head:
            return head, tail
        k *= 2


def spectral_trace(space: SpaceModel, sigma, t: float, max_level: int = 200_000):
    """``tr(P_sigma exp(-t Delta) P_sigma)`` as ``(value, tail_bound)``."""
    if not t > 0:
        raise ValueError("t must be positive")
    if sigma not in space.sigma_labels() and not isinstance(sigma, (int, float)):
        raise KeyError(f"sigma {sigma!r} not available for {space.name}")
    return _certified(lambda k: space.isotypic_terms(sigma, t, k), t, max_level)


@dataclass
class TraceCurve:
    space: str
    sigma: float
    t: np.ndarray
    values: np.ndarray
    bounds: np.ndarray

    def __post_init__(self):
        order = np.argsort(-np.asarray(self.t))
        self.t = np.asarray(self.t, dtype=float)[order]
        self.values = np.asarray(self.values, dtype=float)[order]
        self.bounds = np.asarray(self.bounds, dtype=float)[order]

    def to_json(self) -> str:
        return json.dumps({
            "space": self.space, "sigma": self.sigma,
            "t": self.t.tolist(), "values": self.values.tolist(), "bounds": self.bounds.tolist(),
        })

    @classmethod
    def from_json(cls, text: str) -> "TraceCurve":
        d = json.loads(text)
        return cls(d["space"], d["sigma"], np.array(d["t"]), np.array(d["values"]), np.array(d["bounds"]))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "bound"])
            for row in zip(self.t, self.values, self.bounds):
                w.writerow([repr(float(v)) for v in row])


def trace_curve(space: SpaceModel, sigma, t_grid=None) -> TraceCurve:
    t_grid = dyadic_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    vals, bnds = zip(*(spectral_trace(space, sigma, t) for t in t_grid))
    return TraceCurve(space.name, float(sigma), t_grid, np.array(vals), np.array(bnds))


# ---------------------------------------------------------------------------
# trace from the kernel diagonal
# ---------------------------------------------------------------------------

def _chart_integral(space: SpaceModel, diag, order: int, angular: int | None) -> float:
    total = 0.0
    for chart in space.charts:
        x, w = chart.quad(order, angular)
        p = chart.from_coords(x)
        total += float(np.sum(w * chart.alpha(p) * diag(p) * chart.volume_element(x)))
    return total


def kernel_diagonal_trace(
    space: SpaceModel,
    diag=None,
    *,
    sigma=None,
    t: float | None = None,
    order: int = 40,
    angular: int | None = 12,
    tol: float = 1e-10,
    max_order: int = 160,
) -> float:
    """``sum_iota int alpha_iota(p) K(p, p) dM(p)`` by chart quadrature.

    ``diag`` maps ambient points to the kernel diagonal against dM.  With
    ``sigma`` and ``t`` the isotypic heat kernel of the space is used (and
    ``sigma=None`` with ``t`` gives the full heat kernel).  The order is
    raised until two successive rules agree to ``tol`` (relative).
    """
    if diag is None:
        if t is None:
            raise ValueError("give a kernel diagonal or a time t")
        if sigma is None:
            diag = lambda p: space.full_kernel_diagonal(t, p)
        else:
            diag = lambda p: space.isotypic_kernel_diagonal(sigma, t, p)
    prev = _chart_integral(space, diag, order, angular)
    while order < max_order:
        order = int(order * 1.5)
        ang = None if angular is None else int(angular * 1.5)
        cur = _chart_integral(space, diag, order, ang)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        prev, angular = cur, ang
    raise QuadratureError(f"chart quadrature not converged at order {order}: last change {abs(cur - prev):.3g}")


# ---------------------------------------------------------------------------
# small-time power-law fit
# ---------------------------------------------------------------------------

@dataclass
class PowerLawFit:
    """``trace ~ c t^-alpha (1 + corrections)``; corrections include a
    ``t^(1/2) log(1/t)`` term when ``log_power > 0``."""

    alpha: float
    coefficient: float
    log_power: int
    log_coefficient: float
    alpha_err: float
    coefficient_err: float
    covariance: np.ndarray
    residuals: np.ndarray
    condition: float

    @property
    def residual_norm(self) -> float:
        return float(np.linalg.norm(self.residuals))

    def to_json(self) -> str:
        d = asdict(self)
        d["covariance"] = self.covariance.tolist()
        d["residuals"] = self.residuals.tolist()
        return json.dumps(d)


def _design(t, alpha, log_power):
    lt = np.log(1.0 / t)
    cols = [t**-alpha, t ** (0.5 - alpha)]
    if log_power > 0:
        cols.append(t ** (0.5 - alpha) * lt**log_power)
    cols += [t ** (1 - alpha), t ** (1.5 - alpha), t ** (2 - alpha)]
    return np.stack(cols, -1)


def fit_small_time(curve: TraceCurve, log_power: int = 0, alpha_range=(-0.5, 3.0)) -> PowerLawFit:
    """Variable-projection least squares for the leading small-t power.

    For each trial exponent the coefficients of the correction series are
    linear; residuals are relative so every grid point carries the same
    weight as in a log-scale fit.
    """
    t, y = curve.t, curve.values
    if len(t) < 8 or t.max() / t.min() < 100:
        raise FitError("need at least 8 points spanning 2 decades of t")
    if np.any(y <= 0):
        raise FitError("trace values must be positive")

    def solve(a):
        A = _design(t, a, log_power) / y[:, None]
        c, *_ = np.linalg.lstsq(A, np.ones_like(y), rcond=None)
        return c, A @ c - 1.0

    def rss(a):
        return float(np.sum(solve(a)[1] ** 2))

    grid = np.linspace(*alpha_range, 141)
    a0 = grid[int(np.argmin([rss(a) for a in grid]))]
    step = grid[1] - grid[0]
    res = minimize_scalar(rss, bounds=(a0 - step, a0 + step), method="bounded",
                          options={"xatol": 1e-12})
    a = float(res.x)
    c, r = solve(a)
    A = _design(t, a, log_power)
    colscale = np.linalg.norm(A / y[:, None], axis=0)
    cond = float(np.linalg.cond(A / y[:, None] / colscale))
    if not np.isfinite(cond) or cond > 1e14:
        raise FitError("ill-conditioned design matrix", cond)
    # Jacobian in (alpha, coefficients)
    dA = -(np.log(t)[:, None]) * A  # d/d alpha of t^(e - alpha) = -log t * t^(e - alpha)
    J = np.column_stack([(dA @ c) / y, A / y[:, None]])
    dof = max(len(t) - J.shape[1], 1)
    s2 = max(float(r @ r) / dof, np.finfo(float).eps ** 2)
    try:
        cov = s2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        cov = s2 * np.linalg.pinv(J.T @ J)
    return PowerLawFit(
        alpha=a,
        coefficient=float(c[0]),
        log_power=log_power,
        log_coefficient=float(c[2]) if log_power > 0 else 0.0,
        alpha_err=float(math.sqrt(max(cov[0, 0], 0.0))),
        coefficient_err=float(math.sqrt(max(cov[1, 1], 0.0))),
        covariance=cov[:2, :2],
        residuals=r,
        condition=cond,
    )


def remainder_constant(curve: TraceCurve, fit: PowerLawFit, lam: int = 1, q: int = 2) -> float:
    """Smallest C with |trace - c t^-alpha| <= C t^(-alpha + 1/q) log(1/t)^(lam - 1) on the grid."""
    t = curve.t
    rem = np.abs(curve.values - fit.coefficient * t**-fit.alpha)
    scale = t ** (-fit.alpha + 1.0 / q) * np.log(1.0 / t) ** (lam - 1)
    return float(np.max(rem / scale))


# ---------------------------------------------------------------------------
# predicted leading term
# ---------------------------------------------------------------------------

def predicted_leading(space: SpaceModel, sigma, geometry, q: int = 2) -> tuple[float, float]:
    """Exponent ``(n - kappa)/q`` and coefficient
    ``d_sigma^2 [(pi x pi)|_H : 1] vol~ / (2 pi)^(n - kappa)``."""
    kappa = getattr(geometry, "kappa", None)
    vol = getattr(geometry, "vol_tilde", None)
    if kappa is None or vol is None:
        raise GeometryIncompleteError("geometry lacks kappa or the Gaussian volume")
    if getattr(geometry, "isotropy", None) is None:
        raise GeometryIncompleteError("geometry lacks a parametrisation of the principal isotropy")
    mult = space.multiplicity(sigma).real
    d = space.irrep_dim(sigma)
    n = space.n
    return (n - kappa) / q, d * d * mult * vol / (2 * math.pi) ** (n - kappa)
