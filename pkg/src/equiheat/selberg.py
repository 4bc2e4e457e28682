"""Trace formula for finite subgroups of SU(2), lattice periodization and
heat traces of the homogeneous line bundles over S^2 = SU(2)/U(1).

Haar measure on SU(2) is normalised, so vol(Gamma \\ G) = 1/|Gamma| and both
sides of the trace formula carry the same overall scale.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .groups import SU2, euler_to_quat, qconj, qmul, su2_character
from .heat import (
    circle_subgroup,
    bundle_kernel,
    h_sigma_kernel,
    heat_kernel_eval,
    heat_kernel_series,
    log_concave_tail,
)
from .traces import PowerLawFit, TraceCurve, dyadic_grid, fit_small_time, predicted_leading

__all__ = [
    "CharacterError",
    "QuadratureError",
    "ConvergenceError",
    "FiniteLattice",
    "TorusLattice",
    "BundleSpectrum",
    "SelbergReport",
    "cyclic_lattice",
    "lattice_multiplicities",
    "weight_count",
    "selberg_sides",
    "kernel_periodization",
    "poincare_partial_sums",
    "critical_exponent_probe",
    "bundle_heat_trace",
    "bundle_trace_curve",
    "bundle_leading_fit",
    "bundle_prediction",
]


class CharacterError(ArithmeticError):
    pass


class QuadratureError(RuntimeError):
    pass


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, delta: float = math.nan):
        super().__init__(message)
        self.delta = delta


# ---------------------------------------------------------------------------
# lattices
# ---------------------------------------------------------------------------

@dataclass
class FiniteLattice:
    """A finite abelian subgroup of SU(2) inside the maximal torus exp(R X_3)."""

    name: str
    elements: np.ndarray  # quaternions, (N, 4)

    def __post_init__(self):
        self.group = SU2()

    @property
    def order(self) -> int:
        return len(self.elements)

    def classes(self) -> list[list[int]]:
        # abelian: every class is a singleton
        return [[i] for i in range(self.order)]

    def is_central(self, i: int) -> bool:
        g = self.elements[i]
        return bool(np.allclose(np.abs(g[0]), 1.0, atol=1e-14))

    def centralizer_order(self, i: int) -> int:
        return self.order

    def centralizer_description(self, i: int) -> str:
        return "G" if self.is_central(i) else "maximal torus exp(R X_3)"

    def covolume(self, i: int) -> float:
        """vol(Gamma_gamma \\ G_gamma) with normalised Haar on G_gamma."""
        return 1.0 / self.centralizer_order(i)


def cyclic_lattice(N: int) -> FiniteLattice:
    """Z_N generated by diag(e^{2 pi i/N}, e^{-2 pi i/N}) = cos(2 pi/N) + sin(2 pi/N) e_3."""
    if N < 1:
        raise ValueError("N must be positive")
    a = 2 * math.pi * np.arange(N) / N
    z = np.zeros(N)
    return FiniteLattice(f"z{N}", np.stack([np.cos(a), z, z, np.sin(a)], -1))


def _spins(cutoff: float) -> np.ndarray:
    jmax = (-1 + math.sqrt(1 + 4 * cutoff)) / 2
    return np.arange(0, math.floor(2 * jmax + 1e-12) + 1) / 2


def lattice_multiplicities(lattice: FiniteLattice, cutoff: float, tol: float = 1e-10) -> dict:
    """m_j = dim V_j^Gamma as a character average, for j(j+1) <= cutoff."""
    out = {}
    for j in _spins(cutoff):
        avg = float(np.mean(su2_character(float(j), lattice.elements)))
        m = round(avg)
        if abs(avg - m) > tol:
            raise CharacterError(f"character average {avg!r} for j={j} is not an integer")
        out[float(j)] = int(m)
    return out


def weight_count(lattice: FiniteLattice, j: float) -> int:
    """Number of weights m in {-j..j} fixed by the generator: N | 2m."""
    N = lattice.order
    ms = np.arange(-j, j + 0.5, 1.0)
    return int(np.sum(np.mod(np.round(2 * ms).astype(int), N) == 0))


@dataclass
class TorusLattice:
    """The lattice 2 pi Z^n acting on R^n by translation."""

    n: int = 1


# ---------------------------------------------------------------------------
# trace formula
# ---------------------------------------------------------------------------

@dataclass
class SelbergReport:
    lattice: str
    t: float
    sigma: float | None
    spectral: float
    geometric: float
    residual: float
    contributions: list = field(default_factory=list)
    spectral_terms: list = field(default_factory=list)
    tail_bound: float = 0.0

    def to_json(self) -> str:
        return json.dumps({
            "lattice": self.lattice, "t": self.t, "sigma": self.sigma,
            "spectral": self.spectral, "geometric": self.geometric, "residual": self.residual,
            "contributions": self.contributions, "spectral_terms": self.spectral_terms,
            "tail_bound": self.tail_bound,
            "normalisation": "normalised Haar on SU(2); vol(Gamma\\G) = 1/|Gamma|",
        })


def _trace_coefficient(j: float, sigma) -> float:
    """tr pi_j(f) / e^{-t j(j+1)} for f = p_t (sigma None) or H^sigma_{p_t}, K = exp(R X_3)."""
    if sigma is None:
        return 2 * j + 1
    n = float(sigma)
    return 1.0 if (abs(n) <= j + 1e-12 and abs((j - n) - round(j - n)) < 1e-12) else 0.0


def _spectral_side(lattice, t, sigma, rel_tol=1e-16):
    k = 8 + int(math.sqrt(40.0 / t))
    while True:
        js = np.arange(k + 3) / 2
        lam = js * (js + 1)
        bound = (2 * js + 1) ** 2 * np.exp(-t * lam)  # m_j d_j <= d_j^2
        mult = lattice_multiplicities(lattice, float(lam[k]))
        terms = [(float(j), mult[float(j)], mult[float(j)] * _trace_coefficient(j, sigma) * math.exp(-t * j * (j + 1)))
                 for j in js[: k + 1]]
        total = math.fsum(x[2] for x in terms)
        tail = log_concave_tail(bound, k)
        if tail <= rel_tol * max(abs(total), 1e-300):
            return total, tail, terms
        k *= 2


def _flag_rule(order: int):
    """Nodes g = exp(beta X_2) exp(gamma X_3) with normalised weights on T \\ G."""
    x, wx = np.polynomial.legendre.leggauss(order)
    beta = np.arccos(x)
    m = 2 * order + 2
    gamma = 4 * math.pi * np.arange(m) / m
    B, C = np.meshgrid(beta, gamma, indexing="ij")
    W = np.broadcast_to((wx / 2)[:, None], B.shape) / m
    return euler_to_quat(0 * B.ravel(), B.ravel(), C.ravel()), W.ravel()


def _orbital_integral(f, gamma, scale, order=16, tol=1e-13, max_order=128):
    """int_{T\\G} f(g^-1 gamma g); converged when successive rules agree to tol * scale."""
    prev = None
    while order <= max_order:
        g, w = _flag_rule(order)
        conj = qmul(qmul(qconj(g), gamma), g)
        val = complex(np.sum(w * f(conj)))
        if prev is not None and abs(val - prev) <= tol * scale:
            return val
        prev = val
        order *= 2
    raise QuadratureError(f"orbital integral not converged at order {max_order}; last value {prev}")


def selberg_sides(lattice: FiniteLattice, t: float, sigma=None, k_nodes: int | None = None) -> SelbergReport:
    """Spectral and geometric sides of the trace formula for f = p_t, or for
    f = H^sigma_{p_t} with K = exp(R X_3) when ``sigma`` (a weight) is given."""
    if not t > 0:
        raise ValueError("t must be positive")
    G = lattice.group
    ser = heat_kernel_series(G, t)
    if sigma is None:
        f = lambda g: heat_kernel_eval(G, t, g, ser)
    else:
        # trapezoid on the circle resolves the kernel width sqrt(t)
        K = circle_subgroup(G, k_nodes or max(32, int(math.ceil(16 / math.sqrt(t)))))
        f = lambda g: np.atleast_1d(h_sigma_kernel(G, lambda h: heat_kernel_eval(G, t, h, ser), sigma, g, K))
    spectral, tail, terms = _spectral_side(lattice, t, sigma)
    scale = abs(complex(f(G.identity()[None])[0]))
    contribs = []
    for cls in lattice.classes():
        i = cls[0]
        gamma = lattice.elements[i]
        if lattice.is_central(i):
            orb = complex(f(gamma[None])[0])
        else:
            orb = _orbital_integral(f, gamma, scale)
        contribs.append({
            "gamma": gamma.tolist(),
            "centralizer": lattice.centralizer_description(i),
            "covolume": lattice.covolume(i),
            "orbital_integral": [orb.real, orb.imag],
            "contribution": lattice.covolume(i) * orb.real,
        })
    geometric = math.fsum(c["contribution"] for c in contribs)
    residual = abs(spectral - geometric) / abs(spectral)
    return SelbergReport(lattice.name, t, None if sigma is None else float(sigma), spectral, geometric,
                         residual, contribs, [[j, m, v] for j, m, v in terms if m], tail)


# ---------------------------------------------------------------------------
# periodization
# ---------------------------------------------------------------------------

@dataclass
class PeriodizationResult:
    value: float
    tail_bound: float
    shells: int
    terms: int


def poincare_partial_sums(n: int, s: float, shells) -> np.ndarray:
    """Partial sums of sum_{gamma in 2 pi Z^n} e^{-s |gamma|} over max-norm shells."""
    out = []
    total = 0.0
    done = -1
    for K in sorted(shells):
        for k in range(done + 1, K + 1):
            total += math.fsum(np.exp(-s * np.linalg.norm(_shell(n, k), axis=-1) * 2 * math.pi))
        done = K
        out.append(total)
    return np.array(out)


def critical_exponent_probe(n: int, radii) -> np.ndarray:
    """log N(R) / R for the lattice 2 pi Z^n; tends to the critical exponent 0."""
    radii = np.asarray(radii, dtype=float)
    out = []
    for R in radii:
        k = int(R / (2 * math.pi))
        r = np.arange(-k, k + 1)
        grid = np.stack(np.meshgrid(*([r] * n), indexing="ij"), -1).reshape(-1, n)
        count = np.sum(np.linalg.norm(grid, axis=-1) * 2 * math.pi <= R)
        out.append(math.log(count) / R)
    return np.array(out)


def _shell(n, k):
    if k == 0:
        return np.zeros((1, n), dtype=int)
    r = np.arange(-k, k + 1)
    grid = np.stack(np.meshgrid(*([r] * n), indexing="ij"), -1).reshape(-1, n)
    return grid[np.max(np.abs(grid), axis=-1) == k]


def _gaussian_tail(n, K, t, shift, amp):
    """Bound on sum over shells k > K of amp e^{-|x|^2/4t}, |x| >= 2 pi k - shift.

    Uses e^{-|x|^2/4t} <= e^{-s |x|} with s = r0/4t on |x| >= r0, i.e. the
    Poincare series at exponent s, summed shell by shell with counts
    (2k+1)^n - (2k-1)^n and a geometric remainder.
    """
    r0 = 2 * math.pi * (K + 1) - shift
    if r0 <= 0:
        return math.inf
    s = r0 / (4 * t)
    total = 0.0
    for k in range(K + 1, K + 400):
        cnt = (2 * k + 1) ** n - (2 * k - 1) ** n
        total += cnt * math.exp(-s * (2 * math.pi * k - shift))
    # beyond: ratio of consecutive terms is below e^{-2 pi s} (1 + 1/k)^(n-1)
    k = K + 400
    q = math.exp(-2 * math.pi * s) * (1 + 1 / k) ** (n - 1)
    last = ((2 * k + 1) ** n - (2 * k - 1) ** n) * math.exp(-s * (2 * math.pi * k - shift))
    total += last * q / (1 - q) if q < 1 else math.inf
    return amp * total


def kernel_periodization(lattice, f, g, h, t: float | None = None, tol: float = 1e-14, max_shells: int = 64):
    """k_f(g, h) = sum_gamma f(g^-1 gamma h).

    For a finite lattice the sum is exact.  For ``TorusLattice(n)`` the
    function must be a Gaussian-type kernel on R^n with
    |f(x)| <= (4 pi t)^(-n/2) e^{-|x|^2/4t}; shells of the max norm are added
    until the Poincare-majorant tail is below ``tol`` relative.
    """
    if isinstance(lattice, FiniteLattice):
        gi = qconj(np.asarray(g, dtype=float))
        args = qmul(qmul(gi[None], lattice.elements), np.asarray(h, dtype=float)[None])
        vals = f(args)
        return PeriodizationResult(complex(np.sum(vals)).real if np.isrealobj(vals) else complex(np.sum(vals)),
                                   0.0, 0, lattice.order)
    if not isinstance(lattice, TorusLattice):
        raise TypeError("unknown lattice")
    if t is None:
        raise ValueError("torus periodization needs the Gaussian scale t")
    n = lattice.n
    delta = np.asarray(h, dtype=float) - np.asarray(g, dtype=float)
    shift = float(np.linalg.norm(delta))
    amp = (4 * math.pi * t) ** (-n / 2)
    total = 0.0
    terms = 0
    for K in range(max_shells + 1):
        pts = delta + 2 * math.pi * _shell(n, K)
        total += math.fsum(np.ravel(f(pts)))
        terms += len(pts)
        tail = _gaussian_tail(n, K, t, shift, amp)
        if tail <= tol * abs(total):
            return PeriodizationResult(total, tail, K, terms)
    probe = critical_exponent_probe(n, [2 * math.pi * max_shells])
    raise ConvergenceError(f"tail bound {tail:.3g} above tolerance after {max_shells} shells", float(probe[0]))


# ---------------------------------------------------------------------------
# line bundles over S^2
# ---------------------------------------------------------------------------

@dataclass
class BundleSpectrum:
    """Spectrum of the Bochner Laplacian on the charge-n bundle over S^2."""

    charge: int

    @property
    def lambda_sigma(self) -> float:
        return float(self.charge) ** 2

    def levels(self, lmax: int):
        l = np.arange(abs(self.charge), lmax + 1)
        return l * (l + 1) - self.charge**2, 2 * l + 1


def _bundle_spectral(n, t, rel_tol=1e-15):
    spec = BundleSpectrum(n)
    k = 8 + int(math.sqrt(40.0 / t))
    while True:
        lam, mult = spec.levels(abs(n) + k + 2)
        terms = mult * np.exp(-t * lam)
        head = math.fsum(terms[: k + 1])
        tail = log_concave_tail(terms, k)
        if tail <= rel_tol * head:
            return head
        k *= 2


def bundle_heat_trace(n: int, t: float, route: str = "spectral", base_points: int = 6) -> float:
    """tr e^{-t Delta_sigma} on the charge-n bundle, by the spectrum or by the kernel.

    The kernel route evaluates the bundle heat kernel h_t^sigma on the
    diagonal at representatives s(x) of base points x and integrates the
    (constant) diagonal over S^2 with a normalised rule.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    if route == "spectral":
        return _bundle_spectral(n, t)
    if route != "kernel":
        raise ValueError(f"unknown route {route!r}")
    G = SU2()
    x, w = np.polynomial.legendre.leggauss(base_points)
    beta = np.arccos(x)
    m = 2 * base_points
    phi = 4 * math.pi * np.arange(m) / m
    B, P = np.meshgrid(beta, phi, indexing="ij")
    reps = euler_to_quat(P.ravel(), B.ravel(), 0 * B.ravel())
    W = (np.broadcast_to((w / 2)[:, None], B.shape) / m).ravel()
    diag_args = qmul(qconj(reps), reps)
    # the K-integrals resolve the kernel width sqrt(t) in the circle angle
    nodes = max(64, int(math.ceil(24 / math.sqrt(t))))
    vals = bundle_kernel(G, n, t, diag_args[:1], nodes=nodes)
    vals = np.full(len(W), vals[0]) if np.allclose(diag_args, diag_args[0], atol=1e-14) else \
        bundle_kernel(G, n, t, diag_args, nodes=nodes)
    return float(np.real(np.sum(W * vals)))


def bundle_trace_curve(n: int, t_grid=None) -> TraceCurve:
    t_grid = dyadic_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    vals = np.array([bundle_heat_trace(n, t) for t in t_grid])
    return TraceCurve(f"bundle-charge-{n}", float(n), t_grid, vals, np.zeros_like(vals))


def bundle_leading_fit(n: int, t_grid=None) -> PowerLawFit:
    return fit_small_time(bundle_trace_curve(n, t_grid))


def bundle_prediction(n: int, geometry) -> tuple[float, float]:
    """Exponent and coefficient predicted from the multiplicity over the
    principal isotropy and the Gaussian volume of the SU(2) bundle model."""
    from .spaces import get_space

    return predicted_leading(get_space("su2-bundle"), n, geometry)
