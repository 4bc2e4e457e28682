"""Heat traces of charged line bundles over the sphere.

The spectrum is l(l+1) - n^2 with l >= |n|.  The trace computed from the
spectrum and from the bundle kernel agree, and the t^-1 coefficient matches
the prediction from the SU(2) bundle geometry for every charge.
"""
from equiheat.selberg import bundle_heat_trace, bundle_leading_fit, bundle_prediction
from equiheat.spaces import get_space
from equiheat.symplectic import critical_geometry

geo = critical_geometry(get_space("su2-bundle"))
for n in (0, 1, 2):
    fit = bundle_leading_fit(n)
    alpha, coef = bundle_prediction(n, geo)
    spec, kern = bundle_heat_trace(n, 0.2), bundle_heat_trace(n, 0.2, route="kernel")
    print(f"charge {n}: t=0.2 spectral {spec:.12f} kernel {kern:.12f}")
    print(f"  fitted t^-{fit.alpha:.4f} x {fit.coefficient:.5f}, predicted t^-{alpha:.1f} x {coef:.5f}")
