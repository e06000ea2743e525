"""Watch two bound states trade energy until one is left.

Both modes start with the same amplitude.  Resonant coupling through the
index (-1, 2) feeds mode 1 from mode 2 and sheds radiation, which the
absorbing layer removes.  The product |z1 z2| falls while max |z_j| stays.

The default T = 400 takes one to two minutes; pass a longer horizon
as the first argument (T = 2000 is the full experiment, several minutes).

    python demos/03_mode_selection.py [T]
"""
import sys
import warnings

import numpy as np

from nlslab.darboux import inverse_darboux
from nlslab.dynamics import SelectionConfig, run_selection_experiment, selection_report
from nlslab.grid import Field, make_grid
from nlslab.profile import build_profile, classify_indices, fgr_coefficients
from nlslab.spectral import SchrodingerOp, discrete_spectrum

T = float(sys.argv[1]) if len(sys.argv) > 1 else 400.0
delta = 1.4

grid = make_grid(40.0, 4096)
V = inverse_darboux(Field(grid, 1 / np.cosh(grid.x) ** 2), [-4.0, -1.0])
op = SchrodingerOp(grid, V.values.real)
spec = discrete_spectrum(op)
profile = build_profile(spec, classify_indices(spec.omegas), op)
fgr = fgr_coefficients(profile, op)

cfg = SelectionConfig(z0=(delta / 2, delta / 2), T=T, dt=2e-3, sample_interval=1.0, monitors=False)


def progress(t, z):
    if t % 50 == 0:
        a = np.abs(z)
        print(f"  t={t:7.1f}  |z1|={a[0]:.4f}  |z2|={a[1]:.4f}  |z1 z2|={a[0] * a[1]:.4f}")


print(f"two-mode run, delta={delta}, T={T:g}")
with warnings.catch_warnings():
    warnings.simplefilter("ignore")  # the amplitude is beyond the nominal profile radius
    ts, _ = run_selection_experiment(cfg, op, profile, fgr, progress=progress)

rep = selection_report(ts, fgr.indices)
print(f"\nsurviving mode: {rep['surviving_index']}")
print(f"product |z1 z2| now {rep['product_ratio']:.3f} of its start")
print(f"largest amplitude now {rep['max_ratio']:.3f} of its start")
share = rep["resonant_integral_first_half"] / rep["resonant_integral"]
print(f"first half of the run carries {share:.0%} of the resonant integral")
print(f"mass absorbed at the edges: {ts.array('absorbed')[-1]:.3e}")
