"""Cutoffs, exponential weights, the smoothing transform and virial functionals.

The two functionals are ``I(eta) = 1/2 <eta, i S_A eta>`` with
``S_A = phi_A'/2 + phi_A d/dx`` and ``J(v) = 1/2 <v, i S_B v>`` with the
weight ``psi_B = chi_{B^2}^2 phi_B``.  The operators are applied in the
symmetrized form ``(phi D + D phi)/2`` so that they are exactly
antisymmetric for the discrete spectral derivative ``D``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, svds
from scipy.special import beta, betainc

from .darboux import DarbouxLadder, apply_A_chain
from .grid import Field, derivative, inner, jbracket, norm, real_pairing
from .spectral import DiscreteSpectrum, SchrodingerOp, projections, resolvent_apply

__all__ = [
    "VirialConfigError",
    "chi",
    "chi_prime",
    "chi_second",
    "zeta",
    "phi_weight",
    "VirialWeights",
    "make_weights",
    "smoothing_T",
    "TransformedVars",
    "transform_vars",
    "apply_S",
    "virial_I",
    "virial_J",
    "virial_imaginary_parts",
    "quadrmain_sides",
    "partial_inversion_residual",
    "commutator_norm",
    "coercivity_check",
    "DissipationReport",
    "dissipation_monitor",
]


class VirialConfigError(ValueError):
    pass


# --- the bump chi -----------------------------------------------------------
# 1 on [-1, 1], 0 outside [-2, 2].  The transition is the polynomial
# smoothstep t -> I_t(p+1, p+1) of degree 2p+1, which is C^p and monotone.
# With p = 6 the spectral derivative of products with chi loses nothing
# visible at double precision on the default grid.

_SMOOTHNESS = 6
_BETA = beta(_SMOOTHNESS + 1, _SMOOTHNESS + 1)


def _ramp(t):
    return betainc(_SMOOTHNESS + 1, _SMOOTHNESS + 1, t)


def _ramp_d1(t):
    p = _SMOOTHNESS
    return (t * (1.0 - t)) ** p / _BETA


def _ramp_d2(t):
    p = _SMOOTHNESS
    return p * (t * (1.0 - t)) ** (p - 1) * (1.0 - 2.0 * t) / _BETA


def _transition(x):
    ax = np.abs(np.asarray(x, dtype=float))
    return ax, np.clip(ax - 1.0, 0.0, 1.0), (ax > 1.0) & (ax < 2.0)


def chi(x):
    _, t, _ = _transition(x)
    return 1.0 - _ramp(t)


def chi_prime(x):
    x = np.asarray(x, dtype=float)
    _, t, mid = _transition(x)
    return np.where(mid, -_ramp_d1(t) * np.sign(x), 0.0)


def chi_second(x):
    _, t, mid = _transition(x)
    return np.where(mid, -_ramp_d2(t), 0.0)


def zeta(x, C: float):
    """exp(-|x| (1 - chi(x)) / C)."""
    ax = np.abs(np.asarray(x, dtype=float))
    return np.exp(-ax * (1.0 - chi(x)) / C)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


def phi_weight(x, C: float):
    """Odd primitive of zeta_C^2 vanishing at 0.

    Exact on |x| <= 1 and |x| >= 2; Gauss-Legendre on the transition.
    """
    x = np.asarray(x, dtype=float)
    ax = np.abs(x)

    def transition_integral(b):
        # int_1^b zeta_C(s)^2 ds for 1 <= b <= 2
        b = np.atleast_1d(b)
        half = 0.5 * (b - 1.0)
        s = 1.0 + half[:, None] * (_GL_NODES[None, :] + 1.0)
        return half * np.sum(_GL_WEIGHTS[None, :] * zeta(s, C) ** 2, axis=1)

    at_two = 1.0 + transition_integral(np.array([2.0]))[0]
    out = np.empty_like(ax)
    inner_ = ax <= 1.0
    mid = (ax > 1.0) & (ax < 2.0)
    outer = ax >= 2.0
    out[inner_] = ax[inner_]
    if np.any(mid):
        out[mid] = 1.0 + transition_integral(ax[mid])
    out[outer] = at_two + 0.5 * C * (np.exp(-4.0 / C) - np.exp(-2.0 * ax[outer] / C))
    return np.sign(x) * out


# --- weights ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VirialWeights:
    A: float
    B: float
    eps: float
    a: float
    N: int
    grid: object = field(repr=False)
    chi: np.ndarray = field(repr=False)
    chi_B2: np.ndarray = field(repr=False)
    zeta_A: np.ndarray = field(repr=False)
    zeta_B: np.ndarray = field(repr=False)
    phi_A: np.ndarray = field(repr=False)
    psi_B: np.ndarray = field(repr=False)
    V0: np.ndarray = field(repr=False)

    @property
    def dphi_A(self) -> np.ndarray:
        return self.zeta_A**2

    @property
    def dpsi_B(self) -> np.ndarray:
        x, B2 = self.grid.x, self.B**2
        c = chi(x / B2)
        return 2.0 * c * chi_prime(x / B2) / B2 * phi_weight(x, self.B) + c * c * self.zeta_B**2

    def weighted_sq(self, f: Field) -> float:
        """||e^{-(a/10)<x>} f||^2."""
        w = np.exp(-0.2 * self.a * jbracket(self.grid.x))
        return float(np.sum(w * np.abs(f.values) ** 2) * self.grid.dx)


def make_weights(grid, omegas, A: float = 1e4, B: float = 20.0, eps: float = 0.1, allow_any: bool = False) -> VirialWeights:
    """Sample all virial weights on ``grid``.

    ``omegas`` are the eigenvalues being removed by the ladder; their number
    fixes the smoothing power and the largest one the decay rate ``a``.
    ``allow_any`` skips the ordering check ``A > B^2 > B > 1``.
    """
    omegas = np.atleast_1d(np.asarray(omegas, dtype=float))
    if not 0.0 < eps <= 1.0:
        raise VirialConfigError(f"eps must lie in (0, 1], got {eps}")
    if not allow_any and not (A > B * B > B > 1.0):
        raise VirialConfigError(f"need A > B^2 > B > 1, got A={A}, B={B}")
    x = grid.x
    a = 0.5 * np.sqrt(abs(omegas.max())) if omegas.size else 0.5
    B2 = B * B
    chi_B2 = chi(x / B2)
    V0 = chi_second(x) * np.abs(x) + 2.0 * chi_prime(x) * np.sign(x)
    return VirialWeights(
        A=float(A),
        B=float(B),
        eps=float(eps),
        a=float(a),
        N=int(omegas.size),
        grid=grid,
        chi=chi(x),
        chi_B2=chi_B2,
        zeta_A=zeta(x, A),
        zeta_B=zeta(x, B),
        phi_A=phi_weight(x, A),
        psi_B=chi_B2**2 * phi_weight(x, B),
        V0=V0,
    )


# --- the smoothing transform ------------------------------------------------


def _bracket_power(f: Field, eps: float, power: float) -> Field:
    g = f.grid
    sym = jbracket(eps * g.k) ** power
    return Field(g, np.fft.ifft(sym * np.fft.fft(f.values)))


def smoothing_T(ladder: DarbouxLadder, weights: VirialWeights, f: Field) -> Field:
    """<eps k>^{-N} applied after the adjoint ladder chain."""
    return _bracket_power(apply_A_chain(ladder, f, adjoint=True), weights.eps, -ladder.N)


@dataclass(frozen=True)
class TransformedVars:
    w: Field
    v: Field
    xi: Field


def transform_vars(eta_tilde: Field, ladder: DarbouxLadder, weights: VirialWeights) -> TransformedVars:
    g = eta_tilde.grid
    w = Field(g, weights.zeta_A * eta_tilde.values)
    v = smoothing_T(ladder, weights, Field(g, weights.chi_B2 * eta_tilde.values))
    xi = Field(g, weights.chi_B2 * weights.zeta_B * v.values)
    return TransformedVars(w, v, xi)


# --- virial functionals -----------------------------------------------------


def apply_S(weight: np.ndarray, f: Field) -> Field:
    """(weight D + D weight) / 2, i.e. weight'/2 + weight d/dx."""
    g = f.grid
    a = weight * derivative(f, 1).values
    b = derivative(Field(g, weight * f.values), 1).values
    return Field(g, 0.5 * (a + b))


def _half_form(weight: np.ndarray, f: Field) -> complex:
    return 0.5 * inner(f, 1j * apply_S(weight, f))


def virial_I(eta_tilde: Field, weights: VirialWeights) -> float:
    return float(_half_form(weights.phi_A, eta_tilde).real)


def virial_J(v: Field, weights: VirialWeights) -> float:
    return float(_half_form(weights.psi_B, v).real)


def virial_imaginary_parts(f: Field, weights: VirialWeights) -> tuple[float, float]:
    """Imaginary parts of the complex forms behind I and J; zero up to roundoff."""
    return float(_half_form(weights.phi_A, f).imag), float(_half_form(weights.psi_B, f).imag)


def quadrmain_sides(eta_tilde: Field, op: SchrodingerOp, weights: VirialWeights) -> tuple[float, float]:
    """Both sides of the localized identity for <H eta, S_A eta>.

    Left: the pairing computed directly.  Right: the quadratic form in
    ``w = zeta_A eta`` with the potential ``-phi_A V' / (2 zeta_A^2)`` and the
    cutoff correction ``V0 / (2A)``.
    """
    g = eta_tilde.grid
    lhs = real_pairing(op(eta_tilde), apply_S(weights.phi_A, eta_tilde))
    w = Field(g, weights.zeta_A * eta_tilde.values)
    dV = derivative(op.potential, 1).real
    pot = -weights.phi_A * dV / (2.0 * weights.zeta_A**2) + weights.V0 / (2.0 * weights.A)
    rhs = norm(derivative(w, 1)) ** 2 + float(np.sum(pot * np.abs(w.values) ** 2) * g.dx)
    return float(lhs), float(rhs)


# --- identities and spot checks ---------------------------------------------


def partial_inversion_residual(
    eta_tilde: Field, ladder: DarbouxLadder, weights: VirialWeights, spec: DiscreteSpectrum | None = None
) -> float:
    """||P_c(chi eta) - prod_j R_H(omega_j) P_c A <eps k>^N v|| with v from :func:`transform_vars`."""
    op = ladder.op(1)
    spec = spec if spec is not None else ladder.spectra[0]
    g = eta_tilde.grid
    v = transform_vars(eta_tilde, ladder, weights).v
    rhs = apply_A_chain(ladder, _bracket_power(v, weights.eps, ladder.N), adjoint=False)
    _, rhs = projections(spec, rhs)
    for w in ladder.removed_omegas:
        rhs = resolvent_apply(op, float(w), rhs, project_continuous=True, spec=spec)
    _, lhs = projections(spec, Field(g, weights.chi_B2 * eta_tilde.values))
    return norm(lhs - rhs)


def commutator_norm(potential: Field, eps: float, power: int, weight_exponent: float = 1.0, seed: int = 0) -> float:
    """Largest singular value of <x>^s <eps k>^{-N} [V, <eps k>^N] <x>^s.

    The weight plays the role of the map from L^{2,-s} into L^{2,s}.
    """
    g = potential.grid
    V = potential.values.real
    wt = jbracket(g.x) ** weight_exponent
    up = jbracket(eps * g.k) ** power

    def mult(sym, u):
        return np.fft.ifft(sym * np.fft.fft(u))

    def C(u):
        return mult(1.0 / up, V * mult(up, u)) - V * u

    def Cadj(u):
        return mult(up, V * mult(1.0 / up, u)) - V * u

    lin = LinearOperator(
        (g.n, g.n),
        matvec=lambda u: wt * C(wt * np.ravel(u)),
        rmatvec=lambda u: wt * Cadj(wt * np.ravel(u)),
        dtype=complex,
    )
    v0 = np.random.default_rng(seed).standard_normal(g.n) + 0j
    s = svds(lin, k=1, return_singular_vectors=False, v0=v0, tol=1e-8)
    return float(s[0])


def coercivity_check(W: Field, U: Field, trials: int = 200, seed: int = 0) -> float:
    """Largest observed <W f, f> / (||<x> W||_1 <(-d^2 + U) f, f>) over random smooth f.

    Trials mix band-limited random fields of several widths with a broad
    low mode, where the ratio tends to be largest.
    """
    g = W.grid
    Wv, Uv = W.values.real, U.values.real
    if np.any(Wv < 0) or np.any(Uv < 0):
        raise ValueError("W and U must be nonnegative")
    if not np.any(Uv > 0):
        raise ValueError("U must not vanish identically")
    mass = float(np.sum(jbracket(g.x) * Wv) * g.dx)
    if mass == 0.0:
        return 0.0
    rng = np.random.default_rng(seed)
    x = g.x

    def ratio(f):
        F = Field(g, f)
        num = float(np.sum(Wv * np.abs(f) ** 2) * g.dx)
        den = norm(derivative(F, 1)) ** 2 + float(np.sum(Uv * np.abs(f) ** 2) * g.dx)
        return num / (mass * den)

    best = ratio(np.exp(-((x / (0.4 * g.L)) ** 2)) + 0j)
    for t in range(trials):
        width = g.L * 10.0 ** rng.uniform(-1.5, -0.3)
        kcut = 10.0 ** rng.uniform(-1.0, 1.0)
        coef = rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n)
        coef *= np.exp(-((g.k / kcut) ** 2))
        f = np.fft.ifft(coef) * np.exp(-((x - rng.uniform(-0.3, 0.3) * g.L) / width) ** 2)
        if np.any(f):
            best = max(best, ratio(f))
    return best


# --- post-hoc monitor -------------------------------------------------------


@dataclass
class DissipationReport:
    t: np.ndarray
    I: np.ndarray
    dI_dt: np.ndarray
    half_w_prime_sq: np.ndarray
    majorant: np.ndarray
    lhs: np.ndarray  # dI/dt + ||w'||^2 / 2
    quadr_lhs: np.ndarray
    quadr_rhs: np.ndarray
    fraction_holding: float
    C_report: float

    @property
    def quadr_max_error(self) -> float:
        if self.quadr_lhs.size == 0:
            return 0.0
        return float(np.max(np.abs(self.quadr_lhs - self.quadr_rhs)))

    def rows(self):
        for k in range(self.t.size):
            yield {
                "t": self.t[k],
                "I": self.I[k],
                "dI_dt": self.dI_dt[k],
                "half_w_prime_sq": self.half_w_prime_sq[k],
                "majorant": self.majorant[k],
                "quadr_lhs": self.quadr_lhs[k],
                "quadr_rhs": self.quadr_rhs[k],
            }


def dissipation_monitor(
    samples,
    op: SchrodingerOp,
    weights: VirialWeights,
    spec: DiscreteSpectrum | None = None,
    resonant=None,
    C_report: float = 10.0,
) -> DissipationReport:
    """Check the differential virial inequality on a sequence of snapshots.

    ``samples`` is an iterable of ``(t, eta)`` pairs (at least three, ordered
    in time); ``eta`` is projected on the continuous spectrum when ``spec``
    is given.  ``resonant`` optionally maps each sample index to the value of
    ``sum_m |z^m|^2``.  The inequality is counted as holding at a sample when
    ``dI/dt + ||w'||^2/2 <= C_report * majorant``.
    """
    samples = list(samples)
    if len(samples) < 3:
        raise ValueError("need at least three snapshots")
    t = np.array([s[0] for s in samples], dtype=float)
    if np.any(np.diff(t) <= 0):
        raise ValueError("snapshot times must increase")
    etas = []
    for _, eta in samples:
        if spec is not None:
            _, eta = projections(spec, eta)
        etas.append(eta)
    I = np.array([virial_I(e, weights) for e in etas])
    dI = np.gradient(I, t)
    half = np.array([0.5 * norm(derivative(Field(e.grid, weights.zeta_A * e.values), 1)) ** 2 for e in etas])
    maj = np.array([weights.weighted_sq(Field(e.grid, weights.zeta_A * e.values)) for e in etas])
    if resonant is not None:
        maj = maj + np.asarray(resonant, dtype=float)
    sides = np.array([quadrmain_sides(e, op, weights) for e in etas])
    lhs = dI + half
    tiny = 1e-300
    holds = lhs <= C_report * maj + tiny
    return DissipationReport(
        t=t,
        I=I,
        dI_dt=dI,
        half_w_prime_sq=half,
        majorant=maj,
        lhs=lhs,
        quadr_lhs=sides[:, 0],
        quadr_rhs=sides[:, 1],
        fraction_holding=float(np.mean(holds)),
        C_report=C_report,
    )
