import itertools
import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nlslab.grid import Field, make_grid, norm
from nlslab.profile import (
    A1,
    NonResonanceError,
    classify_indices,
    eval_dphi,
    eval_phi,
    eval_varpi,
    fgr_free,
    l1,
    monomial,
    precedes,
    rp_residual,
)
from nlslab.spectral import distorted_ft, resolvent_apply

GOLDEN = json.loads((Path(__file__).parent / "data" / "golden_fgr.json").read_text())


# ---------------------------------------------------------------- index combinatorics


def _classify_two_modes(w1, w2, cutoff):
    """Independent double loop over the slice m1 + m2 = 1."""
    NR, R = set(), set()
    for m1 in range(-cutoff, cutoff + 1):
        m2 = 1 - m1
        if abs(m1) + abs(m2) > cutoff:
            continue
        (R if m1 * w1 + m2 * w2 > 0 else NR).add((m1, m2))

    def below(n, m):
        return abs(n[0]) <= abs(m[0]) and abs(n[1]) <= abs(m[1]) and abs(n[0]) + abs(n[1]) < abs(m[0]) + abs(m[1])

    R_min = {m for m in R if not any(below(n, m) for n in R)}
    I = {m for m in NR | R if any(below(n, m) for n in R_min)}
    return NR, R, R_min, I, NR - I


@pytest.mark.parametrize("omegas,cutoff", [((-4.0, -1.0), 3), ((-4.0, -1.0), 7), ((-9.0, -1.0), 3), ((-2.5, -0.7), 9)])
def test_classification_matches_double_loop(omegas, cutoff):
    c = classify_indices(omegas, cutoff)
    NR, R, R_min, I, NR1 = _classify_two_modes(*omegas, cutoff)
    assert set(c.NR) == NR and set(c.R) == R
    assert set(c.R_min) == R_min and set(c.I) == I and set(c.NR1) == NR1


def test_certified_energies_at_cutoff_three():
    c = classify_indices([-4.0, -1.0], 3)
    assert (-1, 2) in c.R and (-1, 2) in c.R_min
    assert (2, -1) in c.NR
    assert np.dot((2, -1), (-4.0, -1.0)) == -7.0


def test_wide_gap_has_single_minimal_resonance():
    c = classify_indices([-9.0, -1.0], 3)
    assert c.R_min == ((-1, 2),)


def test_single_mode_classification():
    c = classify_indices([-1.0], 3)
    assert c.R == () and c.NR == ((1,),) and c.NR1 == ((1,),)


def test_classification_invariants():
    c = classify_indices([-4.0, -1.0])
    slice_ = {m for m in itertools.product(range(-c.norm_cutoff, c.norm_cutoff + 1), repeat=2) if sum(m) == 1 and l1(m) <= c.norm_cutoff}
    assert set(c.NR) | set(c.R) == slice_ and not set(c.NR) & set(c.R)
    for j in range(2):
        assert tuple(int(i == j) for i in range(2)) in c.NR1
    for n in c.I:
        m = c.dominator(n)
        assert m in c.R_min and precedes(m, n)


def test_exact_resonance_is_rejected():
    with pytest.raises(NonResonanceError):
        classify_indices([-2.0, -1.0], 3)


# ---------------------------------------------------------------- monomials


def test_monomial_examples():
    z = np.array([0.3 + 0.1j, -0.2j])
    assert monomial(z, (1, 0)) == z[0]
    assert monomial(np.array([1j, 1.0]), (-1, 2)) == pytest.approx(-1j)
    assert monomial(z, (2, -1)) == pytest.approx(z[0] ** 2 * np.conj(z[1]))


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 2 * np.pi),
    st.lists(st.complex_numbers(max_magnitude=2, allow_nan=False, allow_infinity=False), min_size=2, max_size=2),
    st.integers(-3, 3),
)
def test_monomial_gauge(theta, zs, m1):
    z = np.array(zs)
    m = (m1, 1 - m1)
    lhs = monomial(np.exp(1j * theta) * z, m)
    assert lhs == pytest.approx(np.exp(1j * theta) * monomial(z, m), abs=1e-12)


# ---------------------------------------------------------------- refined profile


def test_resonant_source_is_single_ordered_triple(certified):
    phi1, phi2 = certified.spec.phis
    G = certified.profile.G[(-1, 2)].values
    assert np.max(np.abs(G - phi1.values * phi2.values ** 2)) < 1e-14


def test_linear_indices_have_no_source(certified):
    for m in [(1, 0), (0, 1)]:
        assert norm(certified.profile.G[m]) == 0
    for j, m in enumerate([(1, 0), (0, 1)]):
        assert np.array_equal(certified.profile.tilde_phi[m].values, certified.spec.phis[j].values)


def test_sources_are_real(certified):
    for G in certified.profile.G.values():
        assert np.max(np.abs(G.values.imag)) < 1e-12


def test_cubic_corrections_solve_their_equation(certified):
    op = certified.op
    for m, tphi in certified.profile.tilde_phi.items():
        if l1(m) < 3:
            continue
        lam = float(np.dot(m, certified.spec.omegas))
        r = op.apply(tphi).values - lam * tphi.values + certified.profile.G[m].values
        assert np.sqrt(np.sum(abs(r) ** 2) * op.grid.dx) < 1e-7


def test_nonresonant_correction_against_direct_resolvent(certified):
    op, spec = certified.op, certified.spec
    m = (2, -1)
    lam = float(np.dot(m, spec.omegas))
    ref = resolvent_apply(op, lam, certified.profile.G[m], spec=spec)
    assert norm(Field(op.grid, certified.profile.tilde_phi[m].values + ref.values)) < 1e-8


def test_profile_at_origin(certified):
    z = np.zeros(2, complex)
    assert norm(eval_phi(certified.profile, z)) == 0
    np.testing.assert_array_equal(eval_varpi(certified.profile, z), certified.spec.omegas)


def test_profile_linearization(certified):
    d = 1e-4
    phi = eval_phi(certified.profile, np.array([d, 0j]))
    diff = phi.values / d - certified.spec.phis[0].values
    assert np.sqrt(np.sum(abs(diff) ** 2) * phi.grid.dx) < 1e-7


def test_profile_gauge_covariance(certified):
    rng = np.random.default_rng(7)
    for _ in range(5):
        z = 0.14 * (rng.normal(size=2) + 1j * rng.normal(size=2)) / np.sqrt(2)
        theta = rng.uniform(0, 2 * np.pi)
        a = eval_phi(certified.profile, np.exp(1j * theta) * z).values
        b = np.exp(1j * theta) * eval_phi(certified.profile, z).values
        assert np.max(np.abs(a - b)) < 1e-12
        assert np.allclose(eval_varpi(certified.profile, np.exp(1j * theta) * z), eval_varpi(certified.profile, z), rtol=0, atol=1e-15)


def test_directional_derivative_against_finite_difference(certified):
    P = certified.profile
    z = np.array([0.12 + 0.05j, -0.08 + 0.1j])
    w = np.array([0.3 - 0.2j, 0.1 + 0.4j])
    h = 1e-5
    fd = (eval_phi(P, z + h * w).values - eval_phi(P, z - h * w).values) / (2 * h)
    an = eval_dphi(P, z, w).values
    assert np.max(np.abs(fd - an)) < 1e-8


def test_radius_warning(certified):
    with pytest.warns(UserWarning):
        eval_phi(certified.profile, np.array([1.0, 0j]))


def test_residual_vanishes_at_origin(certified):
    assert rp_residual(certified.profile, np.zeros(2, complex), certified.op)[1] == 0


@pytest.mark.parametrize("direction", [(1, 1), (1, 0), (0, 1)])
def test_residual_scaling(certified, direction):
    z = 0.1 * np.array(direction, dtype=complex)
    r1 = rp_residual(certified.profile, z, certified.op)[1]
    r2 = rp_residual(certified.profile, z / 2, certified.op)[1]
    assert r1 / r2 >= 2 ** 4.5


# ---------------------------------------------------------------- Fermi golden rule


def test_free_rate_for_gaussian():
    g = make_grid()
    G = Field(g, np.exp(-g.x ** 2))
    # The gaussian's transform at +-1 is exp(-1/4)/sqrt(2).
    assert fgr_free(G, 1.0) == pytest.approx(np.pi / 2 * np.exp(-0.5), rel=1e-12)
    assert fgr_free(g.zeros(), 1.0) == 0


def test_rate_from_transform(certified):
    f = certified.fgr
    lam = float(f.lambdas[0])
    assert lam == pytest.approx(2.0)
    k = np.sqrt(lam)
    gh = distorted_ft(certified.op, certified.profile.G[(-1, 2)], np.array([k, -k]))
    expected = np.pi / (2 * k) * np.sum(np.abs(gh) ** 2)
    assert f.Gamma[0] == pytest.approx(expected, rel=1e-10)
    assert f.holds


def test_rate_regression(certified):
    f = certified.fgr
    assert f.indices == (tuple(GOLDEN["index"]),)
    assert f.Gamma[0] == pytest.approx(GOLDEN["Gamma"], rel=GOLDEN["rtol"])


def test_rate_agrees_on_last_rung(certified):
    f = certified.fgr
    assert f.Gamma_top is not None
    assert f.Gamma_top[0] == pytest.approx(f.Gamma[0], rel=1e-4)


def test_source_projections_follow_parity(certified):
    # phi_1 is even and phi_2 odd, so <phi_1 phi_2^2, phi_2> vanishes.
    g = certified.fgr.g
    phi1, phi2 = certified.spec.phis
    assert g[0, 0] == pytest.approx(np.sum(phi1.values.real ** 2 * phi2.values.real ** 2) * phi1.grid.dx, rel=1e-12)
    assert abs(g[0, 1]) < 1e-12


def test_correction_energy_with_one_resonant_index(certified):
    # The correction pairs distinct resonant indices; a single one leaves nothing to pair.
    assert A1(np.array([0.2, 0.1j]), certified.profile, certified.fgr) == 0


def test_correction_energy_pairs_cancel(certified):
    # Re(z^m conj z^n) is symmetric in (m, n) while 1/((n - m).omega) is antisymmetric,
    # so with real projections each ordered pair cancels its mirror.
    from dataclasses import replace

    f = replace(
        certified.fgr,
        indices=((-1, 2), (-2, 3)),
        lambdas=np.array([2.0, 5.0]),
        g=np.array([[0.5, 0.0], [0.25, 0.1]]),
    )
    rng = np.random.default_rng(11)
    for _ in range(5):
        z = 0.1 * (rng.normal(size=2) + 1j * rng.normal(size=2))
        assert abs(A1(z, certified.profile, f)) < 1e-15
