"""Shared, expensive objects built once per test session."""
from types import SimpleNamespace

import numpy as np
import pytest

from nlslab.darboux import build_ladder, inverse_darboux
from nlslab.grid import Field, make_grid
from nlslab.profile import build_profile, classify_indices, fgr_coefficients
from nlslab.spectral import SchrodingerOp, discrete_spectrum
from nlslab.virial import make_weights


@pytest.fixture(scope="session")
def grid():
    return make_grid(40.0, 4096)


def sech2(x, depth=1.0):
    return depth / np.cosh(x) ** 2


@pytest.fixture(scope="session")
def pt1(grid):
    op = SchrodingerOp(grid, -2 * sech2(grid.x))
    return SimpleNamespace(op=op, spec=discrete_spectrum(op))


@pytest.fixture(scope="session")
def pt2(grid):
    op = SchrodingerOp(grid, -6 * sech2(grid.x))
    return SimpleNamespace(op=op, spec=discrete_spectrum(op))


@pytest.fixture(scope="session")
def certified(grid):
    """Two-mode potential from inserting energies -4 and -1 into the repulsive sech^2."""
    seed = Field(grid, sech2(grid.x))
    V = inverse_darboux(seed, [-4.0, -1.0])
    op = SchrodingerOp(grid, V.values.real)
    spec = discrete_spectrum(op)
    ladder = build_ladder(V, expected_N=2)
    cls = classify_indices(spec.omegas)
    prof = build_profile(spec, cls, op)
    fgr = fgr_coefficients(prof, op, ladder)
    weights = make_weights(grid, spec.omegas)
    return SimpleNamespace(seed=seed, V=V, op=op, spec=spec, ladder=ladder, cls=cls, profile=prof, fgr=fgr, weights=weights)
