import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import k1

from nlslab.grid import (
    Field,
    GridMismatchError,
    WeightOverflowError,
    WeightSpec,
    derivative,
    fourier_multiplier,
    inner,
    jbracket,
    make_grid,
    norm,
    plancherel_norm,
    real_pairing,
    weighted_norm,
)


@pytest.fixture(scope="module")
def g():
    return make_grid(40.0, 4096)


def test_small_grid_nodes():
    g8 = make_grid(40.0, 8)
    assert g8.dx == 10.0
    np.testing.assert_array_equal(g8.x, [-40, -30, -20, -10, 0, 10, 20, 30])


def test_default_spacing(g):
    assert g.dx == 80.0 / 4096
    assert g.dx * g.n == 2 * g.L
    assert np.all(np.diff(g.x) > 0)
    # symmetric about 0 up to the unpaired left end
    np.testing.assert_allclose(g.x[1:], -g.x[1:][::-1], atol=1e-12)


@pytest.mark.parametrize("L,n", [(40.0, 4095), (40.0, 6), (0.0, 64), (-1.0, 64), (40.0, 100)])
def test_rejects_bad_grids(L, n):
    with pytest.raises(ValueError):
        make_grid(L, n)


def test_frequency_grid(g):
    ks = g.k_sorted
    np.testing.assert_allclose(ks, np.pi / g.L * np.arange(-g.n // 2, g.n // 2), atol=1e-12)


def test_field_validation(g):
    with pytest.raises(GridMismatchError):
        Field(g, np.zeros(10))
    with pytest.raises(FloatingPointError):
        Field(g, np.full(g.n, np.nan))
    other = make_grid(20.0, 4096)
    with pytest.raises(GridMismatchError):
        Field(g, np.ones(g.n)) + Field(other, np.ones(g.n))


def test_derivative_of_band_limited_sine(g):
    f = Field(g, np.sin(np.pi * g.x / g.L))
    d = derivative(f, 1)
    assert np.max(np.abs(d.values - np.pi / g.L * np.cos(np.pi * g.x / g.L))) < 1e-10


def test_derivative_of_constant_vanishes(g):
    assert np.max(np.abs(derivative(Field(g, np.full(g.n, 3.0)), 1).values)) < 1e-12
    assert np.max(np.abs(derivative(Field(g, np.full(g.n, 3.0)), 2).values)) < 1e-12


def test_derivative_matches_centered_differences():
    # the centered difference error is (h^2/6) f''' ; check the O(dx^2) scaling
    errs = []
    for n in (1024, 2048):
        g = make_grid(40.0, n)
        f = np.exp(-g.x**2)
        fd = (np.roll(f, -1) - np.roll(f, 1)) / (2 * g.dx)
        errs.append(np.max(np.abs(derivative(Field(g, f), 1).values - fd)))
    assert errs[1] < errs[0] / 3.5
    g = make_grid(40.0, 2048)
    assert errs[1] < g.dx**2


def test_twice_first_equals_second(g):
    f = Field(g, np.exp(-(g.x**2) / 3) * np.exp(1j * 0.7 * g.x))
    assert np.max(np.abs(derivative(derivative(f, 1), 1).values - derivative(f, 2).values)) < 1e-10
    with pytest.raises(ValueError):
        derivative(f, 3)


def test_inner_products(g):
    phi = Field(g, np.exp(-(g.x**2) / 2))
    phi = phi * (1 / norm(phi))
    assert abs(inner(phi, phi) - 1) < 1e-10
    u = Field(g, np.exp(-(g.x**2)))
    assert real_pairing(u, 1j * u) == 0.0
    v = Field(g, np.exp(-2 * g.x**2))
    assert abs(inner(u, v) - np.sqrt(np.pi / 3)) / np.sqrt(np.pi / 3) < 1e-8


def test_inner_conjugate_symmetric(g):
    rng = np.random.default_rng(3)
    u = Field(g, rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n))
    v = Field(g, rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n))
    assert abs(inner(u, v) - np.conj(inner(v, u))) < 1e-12 * abs(inner(u, v)) + 1e-14


def test_plancherel(g):
    rng = np.random.default_rng(4)
    f = Field(g, rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n))
    assert abs(norm(f) ** 2 - plancherel_norm(f) ** 2) < 1e-10 * norm(f) ** 2


def test_zero_field_has_zero_norm_for_every_weight(g):
    z = g.zeros()
    for spec in (WeightSpec("SigmaS", 1, 0.5), WeightSpec("L2s", 2), WeightSpec("SobolevHs", 1), WeightSpec("TildeSigma", a=1.0)):
        assert weighted_norm(z, spec) == 0.0


def test_tilde_sigma_direct_quadrature(g):
    a = 1.0
    f = Field(g, 1 / np.cosh(a * g.x / 10) * np.exp(-(g.x**2) / 50))
    # derivative by hand, independent of the spectral derivative
    s = 1 / np.cosh(a * g.x / 10)
    e = np.exp(-(g.x**2) / 50)
    df = (-a / 10 * np.tanh(a * g.x / 10) * s - g.x / 25 * s) * e
    ref = np.sqrt(np.sum(df**2 + (s * f.values.real) ** 2) * g.dx)
    assert abs(weighted_norm(f, WeightSpec("TildeSigma", a=a)) - ref) < 1e-10


def test_sigma_weight_against_bessel_integral(g):
    # int e^{-2a<x>} dx = 2 K_1(2a) on the whole line
    a = 0.5
    f = Field(g, np.exp(-2 * a * jbracket(g.x)))
    got = weighted_norm(f, WeightSpec("SigmaS", 0.0, a))
    assert abs(got - np.sqrt(2 * k1(2 * a))) < 1e-6


def test_sigma_weight_overflow(g):
    f = Field(g, np.ones(g.n))
    with pytest.raises(WeightOverflowError):
        weighted_norm(f, WeightSpec("SigmaS", 0.0, 30.0))


def test_weight_spec_validation():
    with pytest.raises(ValueError):
        WeightSpec("Sobolev")
    with pytest.raises(ValueError):
        WeightSpec("SigmaS", 0, a=0.0)


def test_polynomial_weight(g):
    f = Field(g, np.exp(-(g.x**2)))
    ref = np.sqrt(np.sum((1 + g.x**2) ** 2 * np.exp(-2 * g.x**2)) * g.dx)
    assert abs(weighted_norm(f, WeightSpec("L2s", 2.0)) - ref) < 1e-12


def test_multiplier_identity_and_derivative(g):
    f = Field(g, np.sin(np.pi * g.x / g.L) + 0j)
    assert np.max(np.abs(fourier_multiplier(lambda k: np.ones_like(k), f).values - f.values)) < 1e-14
    d = fourier_multiplier(lambda k: 1j * k, f)
    assert np.max(np.abs(d.values - derivative(f, 1).values)) < 1e-12


def test_smoothing_multiplier_limit(g):
    f = Field(g, np.exp(-(g.x**2)) + 0j)
    eps = 1e-6
    out = fourier_multiplier(lambda k: jbracket(eps * k) ** -2, f)
    assert np.max(np.abs(out.values - f.values)) < 1e-8


small = st.floats(-2.0, 2.0)


@settings(max_examples=30, deadline=None)
@given(c1=small, c2=small, c3=small, lam=st.floats(-3.0, 3.0), s1=st.floats(-5, 5), s2=st.floats(-5, 5))
def test_tilde_sigma_is_a_norm(c1, c2, c3, lam, s1, s2):
    g = make_grid(40.0, 1024)
    spec = WeightSpec("TildeSigma", a=1.0)
    f = Field(g, c1 * np.exp(-((g.x - s1) ** 2)) + 1j * c2 * np.exp(-((g.x + 1) ** 2) / 3))
    h = Field(g, c3 * np.exp(-((g.x - s2) ** 2) / 2) + 0j)
    nf = weighted_norm(f, spec)
    assert abs(weighted_norm(f * lam, spec) - abs(lam) * nf) < 1e-10 * (1 + nf)
    assert weighted_norm(f + h, spec) <= nf + weighted_norm(h, spec) + 1e-10
