"""Batch experiments: flat key=value configs, a dispatcher over the numerical
modules, and JSON/CSV report files.

Config files hold one ``key = value`` pair per line; ``#`` starts a comment
and lists are comma separated.  Recognised keys are listed in ``KEYS``.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import platform
import tempfile
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import scipy

from . import __version__

KINDS = ("trace", "oscillatory", "gaussian-volume", "selberg", "bundle-heat", "probes")
SCHEMA_VERSION = 1


class ValidationError(ValueError):
    """Bad configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _floats(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    return [float(p) for p in parts]


# key -> (parser, default, description)
KEYS = {
    "kind": (str, None, "experiment kind, one of " + ", ".join(KINDS)),
    "model": (str, None, "space model (t1, t2, s2, su2, su2-bundle) or group (u1, su2, so3) for probes"),
    "sigma": (float, None, "K-type: weight for circle K, spin for SU(2) K"),
    "charge": (int, 0, "line bundle charge for bundle-heat"),
    "lattice": (str, "z2", "finite lattice zN in SU(2)"),
    "t": (float, 0.5, "single time for selberg"),
    "t_grid": (_floats, None, "comma separated times; default 0.1 * 2^-k, k = 0..12"),
    "mu_grid": (_floats, None, "comma separated mu values; default logspace(-4, -1, 7)"),
    "center": (_floats, None, "bump centre in chart coordinates (oscillatory)"),
    "width": (float, None, "bump radius in chart coordinates (oscillatory)"),
    "budget": (int, 8192, "sample budget for the Gaussian volume"),
    "seed": (int, 0, "random seed"),
    "expect": (float, None, "target for the headline quantity (overrides the built-in oracle)"),
    "tol": (float, None, "tolerance for the headline check"),
    "format": (str, "both", "json, csv or both"),
    "name": (str, None, "report file stem; default is the kind"),
}

_OSC_DEFAULTS = {"t1": ([0.0], 1.0), "s2": ([0.3, 0.0], 0.2)}


@dataclass
class ExperimentConfig:
    kind: str
    model: str | None = None
    sigma: float | None = None
    charge: int = 0
    lattice: str = "z2"
    t: float = 0.5
    t_grid: list | None = None
    mu_grid: list | None = None
    center: list | None = None
    width: float | None = None
    budget: int = 8192
    seed: int = 0
    expect: float | None = None
    tol: float | None = None
    format: str = "both"
    name: str | None = None

    @classmethod
    def from_text(cls, text: str, kind: str | None = None) -> "ExperimentConfig":
        raw: dict[str, str] = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"line {lineno}", "expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in KEYS:
                raise ValidationError(key, "unknown key")
            if key in raw:
                raise ValidationError(key, "given twice")
            raw[key] = value
        if kind is not None:
            if "kind" in raw and raw["kind"] != kind:
                raise ValidationError("kind", f"config says {raw['kind']!r} but {kind!r} was requested")
            raw["kind"] = kind
        vals = {}
        for key, value in raw.items():
            parse = KEYS[key][0]
            try:
                vals[key] = parse(value)
            except ValueError:
                raise ValidationError(key, f"cannot parse {value!r}") from None
        if "kind" not in vals:
            raise ValidationError("kind", "missing")
        cfg = cls(**vals)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path, kind: str | None = None) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(), kind)

    def validate(self) -> None:
        from .spaces import _SPACES
        from .groups import _REGISTRY

        if self.kind not in KINDS:
            raise ValidationError("kind", f"unknown kind {self.kind!r}")
        for key in ("t_grid", "mu_grid"):
            grid = getattr(self, key)
            if grid is not None:
                if len(grid) == 0:
                    raise ValidationError(key, "grid is empty")
                if any(not (g > 0 and math.isfinite(g)) for g in grid):
                    raise ValidationError(key, "grid values must be positive")
        if self.format not in ("json", "csv", "both"):
            raise ValidationError("format", f"unknown format {self.format!r}")
        if not self.t > 0:
            raise ValidationError("t", "must be positive")
        if self.budget < 1:
            raise ValidationError("budget", "must be positive")
        if self.tol is not None and not self.tol > 0:
            raise ValidationError("tol", "must be positive")
        need_space = {"trace": tuple(_SPACES), "gaussian-volume": tuple(_SPACES),
                      "oscillatory": tuple(_OSC_DEFAULTS), "probes": tuple(_REGISTRY)}
        if self.kind in need_space:
            if self.model is None:
                raise ValidationError("model", f"required for {self.kind}")
            if self.model.lower() not in need_space[self.kind]:
                raise ValidationError("model", f"{self.model!r} is not bundled for {self.kind}")
        if self.kind == "selberg":
            name = self.lattice.lower()
            if not (name.startswith("z") and name[1:].isdigit() and int(name[1:]) >= 1):
                raise ValidationError("lattice", f"expected zN, got {self.lattice!r}")
        if self.kind == "oscillatory":
            dim = len(_OSC_DEFAULTS[self.model.lower()][0])
            if self.center is not None and len(self.center) != dim:
                raise ValidationError("center", f"needs {dim} coordinates")
            if self.width is not None and not self.width > 0:
                raise ValidationError("width", "must be positive")
        if self.kind == "trace" and self.sigma is None:
            raise ValidationError("sigma", "required for trace")

    def echo(self) -> dict:
        return {k: getattr(self, k) for k in KEYS}


@dataclass
class ExperimentReport:
    """Inputs, outputs with error estimates, a plot-ready series and checks.

    JSON keys: schema, kind, inputs, outputs (name -> {value, error}),
    series ({columns, rows}), checks (name, value, target, tol, passed),
    passed, versions, timestamp ({utc, wall_clock_s}).  Only ``timestamp``
    changes between identical runs.
    """

    kind: str
    inputs: dict
    outputs: dict
    series: dict
    checks: list
    versions: dict = field(default_factory=dict)
    timestamp: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_VERSION, "kind": self.kind, "inputs": self.inputs, "outputs": self.outputs,
            "series": self.series, "checks": self.checks, "passed": self.passed,
            "versions": self.versions, "timestamp": self.timestamp,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentReport":
        d = json.loads(text)
        return cls(d["kind"], d["inputs"], d["outputs"], d["series"], d["checks"], d["versions"], d["timestamp"])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.series["columns"])
        for row in self.series["rows"]:
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def _out(value, error) -> dict:
    if isinstance(value, complex):
        value = [value.real, value.imag]
    return {"value": value, "error": float(error)}


def _check(name, value, target, tol, mode="abs") -> dict:
    if mode == "abs":
        ok = abs(value - target) <= tol
    elif mode == "rel":
        ok = abs(value / target - 1) <= tol
    elif mode == "max":
        ok = value <= tol
    else:  # "min"
        ok = value >= tol
    return {"name": name, "value": float(value), "target": None if target is None else float(target),
            "tol": float(tol), "mode": mode, "passed": bool(ok)}


def _grid(cfg, default):
    return np.asarray(cfg.t_grid if cfg.t_grid is not None else default, dtype=float)


# ---------------------------------------------------------------------------
# kinds
# ---------------------------------------------------------------------------

def _run_trace(cfg):
    from .spaces import get_space
    from .symplectic import isotropy_analysis
    from .traces import dyadic_grid, fit_small_time, trace_curve

    space = get_space(cfg.model)
    curve = trace_curve(space, cfg.sigma, _grid(cfg, dyadic_grid()))
    fit = fit_small_time(curve)
    kappa = isotropy_analysis(space).kappa
    target = cfg.expect if cfg.expect is not None else (space.n - kappa) / 2
    outputs = {"alpha": _out(fit.alpha, fit.alpha_err), "coefficient": _out(fit.coefficient, fit.coefficient_err),
               "kappa": _out(kappa, 0.0)}
    rows = [[float(a), float(b), float(c)] for a, b, c in zip(curve.t, curve.values, curve.bounds)]
    checks = [_check("alpha", fit.alpha, target, cfg.tol or 0.02)]
    return outputs, {"columns": ["t", "value", "bound"], "rows": rows}, checks


def _run_oscillatory(cfg):
    from .oscillatory import OscillatorySpec, asymptotic_compare
    from .spaces import get_space

    model = cfg.model.lower()
    center, width = _OSC_DEFAULTS[model]
    center = np.asarray(cfg.center if cfg.center is not None else center, dtype=float)
    width = cfg.width if cfg.width is not None else width

    def rho(x):
        r = np.linalg.norm(x - center, axis=-1) / width
        return np.where(r < 1, np.exp(-1 / np.maximum(1 - r * r, 1e-300)), 0.0)

    mu = np.asarray(cfg.mu_grid if cfg.mu_grid is not None else np.logspace(-4, -1, 7), dtype=float)
    spec = OscillatorySpec(get_space(model), 0, rho, mu_grid=mu, order=40)
    res = asymptotic_compare(spec)
    i0 = int(np.argmin(res.mu))
    outputs = {
        "slope": _out(res.slope, 0.0),
        "L0": _out(complex(res.L0), 0.0),
        "ratio_at_min_mu": _out(complex(res.ratios[i0]), res.est_errors[i0] / abs(res.values[i0])),
        "remainder_C": _out(res.remainder_C, 0.0),
    }
    rows = [[float(m), float(v.real), float(v.imag), float(abs(r)), float(e)]
            for m, v, r, e in zip(res.mu, res.values, res.ratios, res.est_errors)]
    target = cfg.expect if cfg.expect is not None else float(res.kappa)
    checks = [_check("slope", res.slope, target, cfg.tol or 0.01)]
    return outputs, {"columns": ["mu", "re", "im", "ratio", "err"], "rows": rows}, checks


def _spectral_volume(space, sigma):
    """vol~ implied by the fitted spectral coefficient."""
    from .traces import fit_small_time, trace_curve

    fit = fit_small_time(trace_curve(space, sigma))
    iso_n = space.n - round(2 * fit.alpha)
    d = space.irrep_dim(sigma)
    return fit.coefficient * (2 * math.pi) ** (space.n - iso_n) / (d * d * space.multiplicity(sigma).real)


def _run_gaussian_volume(cfg):
    from .spaces import get_space
    from .symplectic import gaussian_volume, isotropy_analysis

    space = get_space(cfg.model)
    vol, err = gaussian_volume(space, cfg.budget, seed=cfg.seed)
    rep = isotropy_analysis(space)
    sigma = cfg.sigma if cfg.sigma is not None else space.sigma_labels()[0]
    target = cfg.expect if cfg.expect is not None else _spectral_volume(space, sigma)
    outputs = {"vol_tilde": _out(vol, err), "kappa": _out(rep.kappa, 0.0), "Lambda": _out(rep.Lambda, 0.0),
               "spectral_target": _out(target, 0.0)}
    series = {"columns": ["quantity", "value", "error"], "rows": [["vol_tilde", float(vol), float(err)]]}
    return outputs, series, [_check("vol_tilde", vol, target, cfg.tol or 0.02, "rel")]


def _run_selberg(cfg):
    from .selberg import cyclic_lattice, selberg_sides

    lat = cyclic_lattice(int(cfg.lattice[1:]))
    rep = selberg_sides(lat, cfg.t, cfg.sigma)
    outputs = {"spectral": _out(rep.spectral, rep.tail_bound), "geometric": _out(rep.geometric, 0.0),
               "residual": _out(rep.residual, 0.0)}
    rows = [[float(j), int(m), float(v)] for j, m, v in rep.spectral_terms]
    checks = [_check("residual", rep.residual, None, cfg.tol or 1e-8, "max")]
    if cfg.expect is not None:
        checks.append(_check("spectral", rep.spectral, cfg.expect, 1e-5))
    return outputs, {"columns": ["j", "multiplicity", "term"], "rows": rows}, checks


def _run_bundle_heat(cfg):
    from .selberg import bundle_heat_trace
    from .traces import TraceCurve, dyadic_grid, fit_small_time

    n = cfg.charge
    t = _grid(cfg, dyadic_grid())
    spec = np.array([bundle_heat_trace(n, s) for s in t])
    # the kernel route is checked where its quadrature is budgeted
    kern = np.array([bundle_heat_trace(n, s, route="kernel") if s >= 0.05 else np.nan for s in t])
    diff = np.abs(kern - spec) / spec
    fit = fit_small_time(TraceCurve(f"bundle-charge-{n}", float(n), t, spec, np.zeros_like(spec)))
    worst = float(np.nanmax(diff)) if np.any(np.isfinite(diff)) else 0.0
    outputs = {"alpha": _out(fit.alpha, fit.alpha_err), "coefficient": _out(fit.coefficient, fit.coefficient_err),
               "route_difference": _out(worst, 0.0)}
    rows = [[float(a), float(b), None if math.isnan(c) else float(c)] for a, b, c in zip(t, spec, diff)]
    target = cfg.expect if cfg.expect is not None else 1.0
    checks = [_check("coefficient", fit.coefficient, target, cfg.tol or 0.02),
              _check("route_difference", worst, None, 1e-6, "max")]
    return outputs, {"columns": ["t", "value", "route_rel_diff"], "rows": rows}, checks


def _run_probes(cfg):
    from .groups import get_group
    from .heat import convolve, gaussian_bound_fit, heat_kernel_eval, langlands_probe

    G = get_group(cfg.model)
    rng = np.random.default_rng(cfg.seed)
    g = G.random(rng, 4)
    s, t = 0.2, 0.3
    conv = convolve(G, lambda x: heat_kernel_eval(G, s, x), lambda x: heat_kernel_eval(G, t, x), g, 30)
    semi = float(np.max(np.abs(conv - heat_kernel_eval(G, s + t, g))))
    fit = gaussian_bound_fit(G, np.geomspace(1e-3, 1.0, 13), np.linspace(0, 0.99 * G.injectivity_radius, 25))
    L = langlands_probe(G, [0.1, 0.03, 0.01, 3e-3, 1e-3], [0.0, 0.2, 0.5])
    dev = float(abs(L.ratios[-1, 0] / L.c0_expected - 1))
    outputs = {"semigroup_residual": _out(semi, 0.0), "bound_b": _out(fit.b, fit.residual),
               "langlands_deviation": _out(dev, 0.0)}
    rows = [[float(tt), float(r), float(v)] for i, tt in enumerate(L.t_grid) for r, v in zip(L.r_grid, L.ratios[i])]
    checks = [_check("semigroup_residual", semi, None, 1e-8, "max"),
              _check("bound_b", fit.b, None, cfg.tol or 0.2, "min"),
              _check("langlands_deviation", dev, None, 0.02, "max")]
    return outputs, {"columns": ["t", "r", "ratio"], "rows": rows}, checks


_RUNNERS = {"trace": _run_trace, "oscillatory": _run_oscillatory, "gaussian-volume": _run_gaussian_volume,
            "selberg": _run_selberg, "bundle-heat": _run_bundle_heat, "probes": _run_probes}


def versions() -> dict:
    return {"equiheat": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    start = time.perf_counter()
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    try:
        outputs, series, checks = _RUNNERS[config.kind](config)
    except Exception as exc:
        # keep the module's exception type, add the experiment context
        exc.args = (f"{config.kind} experiment failed: {exc}",) + exc.args[1:]
        raise
    return ExperimentReport(config.kind, config.echo(), outputs, series, checks, versions(),
                            {"utc": stamp, "wall_clock_s": round(time.perf_counter() - start, 3)})


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit_report(report: ExperimentReport, out_dir=".", fmt: str = "both", stem: str | None = None) -> list[Path]:
    """Write ``<stem>.json`` and/or ``<stem>.csv`` atomically; returns the paths."""
    if fmt not in ("json", "csv", "both"):
        raise ValueError(f"unknown format {fmt!r}")
    out = Path(out_dir)
    stem = stem or report.kind
    paths = []
    if fmt in ("json", "both"):
        paths.append(out / f"{stem}.json")
        _atomic_write(paths[-1], report.to_json())
    if fmt in ("csv", "both"):
        paths.append(out / f"{stem}.csv")
        _atomic_write(paths[-1], report.to_csv())
    return paths
