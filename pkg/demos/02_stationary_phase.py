"""Oscillatory integrals over the doubled circle action.

I(mu) is computed by direct quadrature and compared with the leading
stationary-phase term (2 pi mu)^kappa L0.  The ratio approaches 1 and the
log-log slope of |I| gives kappa.
"""
import numpy as np

from equiheat.oscillatory import OscillatorySpec, asymptotic_compare
from equiheat.spaces import get_space


def bump(center, width):
    center = np.asarray(center, dtype=float)

    def rho(x):
        r = np.linalg.norm(x - center, axis=-1) / width
        return np.where(r < 1, np.exp(-1 / np.maximum(1 - r * r, 1e-300)), 0.0)

    return rho


for name, center, width in [("t1", [0.0], 1.0), ("s2", [0.3, 0.0], 0.2)]:
    spec = OscillatorySpec(get_space(name), 0, bump(center, width), poly=lambda z: 1 + z[..., 0], poly_degree=1,
                           mu_grid=np.logspace(-4, -1, 7), order=40)
    res = asymptotic_compare(spec)
    print(f"{name}: L0 = {complex(res.L0):.6g}, slope = {res.slope:.5f}")
    for mu, r in zip(res.mu, res.ratios):
        print(f"  mu={mu:.1e}  ratio={complex(r):.8f}")
