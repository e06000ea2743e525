"""Bound states, the Darboux ladder and building a potential to order.

Start from the reflectionless wells -k(k+1) sech^2 x, whose eigenvalues are
known exactly, strip their bound states one at a time, and then go the other
way: put two chosen energies into a repulsive bump.

    python demos/01_spectrum_and_ladder.py
"""
import numpy as np

from nlslab.darboux import build_ladder, check_repulsive, inverse_darboux
from nlslab.grid import Field, make_grid
from nlslab.spectral import SchrodingerOp, discrete_spectrum, jost

grid = make_grid(40.0, 4096)
x = grid.x

print("Poschl-Teller wells")
for k in (1, 2, 3):
    spec = discrete_spectrum(SchrodingerOp(grid, -k * (k + 1) / np.cosh(x) ** 2))
    exact = -np.arange(k, 0, -1.0) ** 2
    print(f"  k={k}: {np.round(spec.omegas, 12)}  (exact {exact})")

# Each rung removes the current ground state.  For -6 sech^2 the rungs are
# -6 sech^2, -2 sech^2 and then nothing at all.
ladder = build_ladder(Field(grid, -6 / np.cosh(x) ** 2), expected_N=2)
print("\nladder of -6 sech^2")
for j, V in enumerate(ladder.potentials, start=1):
    print(f"  rung {j}: min V = {V.min():+.6f}, bound states {[round(float(w), 9) for w in ladder.spectra[j - 1].omegas]}")
top = check_repulsive(Field(grid, ladder.potentials[-1]), tol_zero=1e-8)
print(f"  last rung is zero, so not repulsive: verdict {top.verdict}")

# The reverse direction: a repulsive seed plus energies -4 and -1.
seed = Field(grid, 1 / np.cosh(x) ** 2)
V = inverse_darboux(seed, [-4.0, -1.0])
op = SchrodingerOp(grid, V.values.real)
spec = discrete_spectrum(op)
back = build_ladder(V, expected_N=2)
print("\ninserted energies -4, -1 into sech^2")
print(f"  spectrum {spec.omegas}")
print(f"  ladder returns the seed to {np.max(np.abs(back.potentials[-1] - seed.values.real)):.1e}")
print(f"  seed repulsive: {check_repulsive(seed).verdict}")

# The certified well is not reflectionless, unlike the wells above.
print("\nscattering off the certified potential")
for k in (0.5, 1.0, np.sqrt(2.0), 2.0):
    d = jost(op, k)
    print(f"  k={k:.3f}: |T|^2={abs(d.T) ** 2:.6f}  |R|^2={abs(d.R) ** 2:.6f}")
