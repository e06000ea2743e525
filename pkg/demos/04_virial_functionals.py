"""Weights, the smoothing transform and the two virial functionals.

A wave packet moving outward through the certified potential is projected
onto the continuous spectrum and pushed through the transform that removes
the bound states.  Along the way the script evaluates the momentum-type
functionals and the identities they satisfy on the grid.

    python demos/04_virial_functionals.py
"""
import numpy as np

from nlslab.darboux import build_ladder, inverse_darboux
from nlslab.grid import Field, make_grid, norm
from nlslab.spectral import SchrodingerOp, discrete_spectrum, projections
from nlslab.virial import (
    commutator_norm,
    make_weights,
    partial_inversion_residual,
    quadrmain_sides,
    transform_vars,
    virial_I,
    virial_J,
)

grid = make_grid(40.0, 4096)
x = grid.x
V = inverse_darboux(Field(grid, 1 / np.cosh(x) ** 2), [-4.0, -1.0])
op = SchrodingerOp(grid, V.values.real)
spec = discrete_spectrum(op)
ladder = build_ladder(V, expected_N=2)
W = make_weights(grid, spec.omegas)
print(f"weights: A={W.A:g}, B={W.B:g}, eps={W.eps}, decay rate a={W.a:.3f}")

for k0 in (1.5, 0.0, -1.5):
    packet = Field(grid, np.exp(-((x - 3.0) ** 2)) * np.exp(1j * k0 * x))
    _, eta = projections(spec, packet)
    tv = transform_vars(eta, ladder, W)
    lhs, rhs = quadrmain_sides(eta, op, W)
    print(f"\npacket with momentum {k0:+.1f}")
    print(f"  I = {virial_I(eta, W):+.6e}   J = {virial_J(tv.v, W):+.6e}")
    print(f"  localized identity: {lhs:+.12e} vs {rhs:+.12e}")
    print(f"  partial inversion residual {partial_inversion_residual(eta, ladder, W):.2e}, |eta| = {norm(eta):.3f}")

print("\ncommutator of V with <eps k>^N, divided by eps")
for eps in (0.05, 0.1, 0.2):
    print(f"  eps={eps}: {commutator_norm(V, eps, ladder.N) / eps:.4f}")
