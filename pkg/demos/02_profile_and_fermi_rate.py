"""Resonant indices, the cubic profile and the Fermi golden rule rate.

For bound-state energies (-4, -1) the combination 2*(-1) - (-4) = 2 lands in
the continuous spectrum, so the index (-1, 2) couples the two modes to
radiation.  This script shows the classification, checks that the profile
solves the stationary equation to fifth order, and evaluates the rate.

    python demos/02_profile_and_fermi_rate.py
"""
import numpy as np

from nlslab.darboux import build_ladder, inverse_darboux
from nlslab.grid import Field, make_grid
from nlslab.profile import build_profile, classify_indices, fgr_coefficients, rp_residual
from nlslab.spectral import SchrodingerOp, discrete_spectrum

grid = make_grid(40.0, 4096)
V = inverse_darboux(Field(grid, 1 / np.cosh(grid.x) ** 2), [-4.0, -1.0])
op = SchrodingerOp(grid, V.values.real)
spec = discrete_spectrum(op)

cls = classify_indices(spec.omegas)
print(f"cutoff {cls.norm_cutoff}")
print(f"  non-resonant:      {list(cls.NR)}")
print(f"  resonant:          {list(cls.R)}")
print(f"  minimal resonant:  {list(cls.R_min)}")

profile = build_profile(spec, cls, op)
print("\nstationary residual of phi[z] along z = r (1, 1)/sqrt 2")
prev = None
for r in (0.2, 0.1, 0.05, 0.025):
    z = r * np.array([1, 1], dtype=complex) / np.sqrt(2)
    res = rp_residual(profile, z, op)[1]
    slope = "" if prev is None else f"  slope {np.log2(prev / res):.2f}"
    print(f"  |z|={r:<6} residual {res:.3e}{slope}")
    prev = res

fgr = fgr_coefficients(profile, op, build_ladder(V, expected_N=2))
for m, lam, G, Gtop in zip(fgr.indices, fgr.lambdas, fgr.Gamma, fgr.Gamma_top):
    print(f"\nindex {m}: energy {lam:.6f}, rate {G:.12g} (recomputed on the last rung: {Gtop:.12g})")
