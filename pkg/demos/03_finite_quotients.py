"""Trace formula for SU(2) modulo a finite cyclic group.

The spectral side sums multiplicities of each spin in L^2(Gamma \\ SU(2))
against heat traces; the geometric side sums orbital integrals of the heat
kernel over the elements of Gamma.
"""
from equiheat.selberg import cyclic_lattice, lattice_multiplicities, selberg_sides

for N in (2, 3, 4):
    lat = cyclic_lattice(N)
    m = lattice_multiplicities(lat, 6.0)
    print(f"Z{N}: multiplicities up to spin 2 {[m[j] for j in sorted(m)][:5]}")
    for t in (0.3, 0.5, 1.0):
        rep = selberg_sides(lat, t)
        print(f"  t={t}: spectral {rep.spectral:.12f}  geometric {rep.geometric:.12f}  residual {rep.residual:.1e}")

rep = selberg_sides(cyclic_lattice(3), 0.3, sigma=1)
print(f"\nK-projected kernel, weight 1, Z3: residual {rep.residual:.1e}")
