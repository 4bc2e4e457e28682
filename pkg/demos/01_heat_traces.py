"""Small-time behaviour of isotypic heat traces.

On the sphere with the doubled circle action the weight-m part of the heat
trace grows like t^(-1/2), while on SU(2) acted on from both sides it tends to
a constant.  The leading coefficient is compared with the Gaussian volume of
the reduced space computed directly on the zero level of the momentum map.
"""
import math

from equiheat.spaces import get_space
from equiheat.symplectic import critical_geometry
from equiheat.traces import fit_small_time, predicted_leading, trace_curve

for name, sigmas in [("s2", [0, 1, 2]), ("su2", [0, 0.5, 1])]:
    space = get_space(name)
    geo = critical_geometry(space)
    print(f"{name}: kappa={geo.kappa}, Lambda={geo.Lambda}, vol~={geo.vol_tilde:.5f} +- {geo.vol_err:.1e}")
    for sigma in sigmas:
        fit = fit_small_time(trace_curve(space, sigma))
        alpha, coef = predicted_leading(space, sigma, geo)
        print(f"  sigma={sigma}: fitted t^-{fit.alpha:.4f} x {fit.coefficient:.5f}"
              f"   predicted t^-{alpha:.1f} x {coef:.5f}")

print(f"\nfor reference sqrt(pi)/2 = {math.sqrt(math.pi) / 2:.5f}")
