"""Darboux ladder: strip bound states off H one ground state at a time.

Given a ground state psi of H_k with energy omega, the intertwiners are

    A u  =  u' + q u,      A* u  =  -u' + q u,      q = psi'/psi,

with ``A A* = H_k - omega`` and ``A* A = H_{k+1} - omega``.  The new
potential is ``V - 2 q'``; since q solves the Riccati equation
``q' = V - omega - q^2`` no numerical differentiation of psi is needed.

q is obtained by integrating the linear ODE for psi in its numerically stable
direction (toward growth) with a fourth-order Magnus scheme and renormalizing
every step, so large exponentials never appear.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .grid import Field, Grid, derivative, norm
from .spectral import (
    GAP_MIN,
    AssumptionError,
    DiscreteSpectrum,
    SchrodingerOp,
    discrete_spectrum,
)

__all__ = [
    "DarbouxLadder",
    "RepulsivityReport",
    "darboux_step",
    "build_ladder",
    "apply_A",
    "apply_A_chain",
    "verify_conjugation",
    "verify_factorization",
    "check_repulsive",
    "inverse_darboux",
    "check_nonresonance",
]


def _fine_spline(grid: Grid, V: np.ndarray, up: int = 8) -> CubicSpline:
    Vh = np.fft.fft(V)
    pad = np.zeros(grid.n * up, dtype=complex)
    half = grid.n // 2
    pad[:half] = Vh[:half]
    pad[-half:] = Vh[-half:]
    Vfine = np.fft.ifft(pad).real * up
    xfine = -grid.L + (grid.dx / up) * np.arange(grid.n * up)
    return CubicSpline(xfine, Vfine)


def _sweep(grid: Grid, V: np.ndarray, omega: float, rightward: bool):
    """Log-derivative and log-amplitude of the solution of psi'' = (V - omega) psi
    that behaves like exp(kappa x) at -L (rightward) or exp(-kappa x) at the
    last node (leftward), kappa = sqrt(-omega)."""
    kappa = math.sqrt(-omega)
    spline = _fine_spline(grid, V)
    n = grid.n
    h = grid.dx / 2 if rightward else -grid.dx / 2
    x_start = grid.x[0] if rightward else grid.x[-1]
    nsteps = 2 * (n - 1)
    starts = x_start + h * np.arange(nsteps)
    c1, c2 = 0.5 - math.sqrt(3) / 6, 0.5 + math.sqrt(3) / 6
    Va = spline(starts + c1 * h) - omega
    Vb = spline(starts + c2 * h) - omega
    alpha = math.sqrt(3) * h * h / 12.0 * (Va - Vb)
    beta = 0.5 * h * (Va + Vb)
    mu2 = alpha * alpha + h * beta
    mu = np.sqrt(mu2.astype(complex))
    ch = np.cosh(mu).real
    with np.errstate(invalid="ignore", divide="ignore"):
        sh = np.where(np.abs(mu) > 1e-12, (np.sinh(mu) / np.where(mu == 0, 1, mu)).real, 1.0)
    m11 = (ch + sh * alpha).tolist()
    m12 = (sh * h).tolist()
    m21 = (sh * beta).tolist()
    m22 = (ch - sh * alpha).tolist()
    q = np.empty(n)
    logy = np.empty(n)
    y, dy, acc = 1.0, (kappa if rightward else -kappa), 0.0
    first = 0 if rightward else n - 1
    q[first] = dy
    logy[first] = kappa * x_start if rightward else -kappa * x_start
    acc = logy[first]
    for s in range(nsteps):
        y, dy = m11[s] * y + m12[s] * dy, m21[s] * y + m22[s] * dy
        if y <= 0:
            raise AssumptionError("solution changed sign: not a positive solution")
        acc += math.log(y)
        dy /= y
        y = 1.0
        if s % 2 == 1:
            i = (s + 1) // 2
            j = i if rightward else n - 1 - i
            q[j] = dy
            logy[j] = acc
    return q, logy


def _next_potential(V: np.ndarray, omega: float, q: np.ndarray) -> np.ndarray:
    # V - 2 q' with q' = V - omega - q^2
    return -V + 2.0 * omega + 2.0 * q * q


@dataclass(frozen=True, eq=False)
class DarbouxLadder:
    grid: Grid
    potentials: tuple  # V_1, ..., V_{N+1} as real arrays
    ground_states: tuple  # psi_1, ..., psi_N, L2-normalized, positive
    removed_omegas: np.ndarray
    log_derivs: tuple  # q_k = (log psi_k)'
    spectra: tuple  # DiscreteSpectrum of each rung

    @property
    def N(self) -> int:
        return len(self.removed_omegas)

    def op(self, k: int) -> SchrodingerOp:
        """H_k for k = 1..N+1."""
        return SchrodingerOp(self.grid, self.potentials[k - 1])


def _smoothstep(t: np.ndarray) -> np.ndarray:
    t = np.clip(t, 0.0, 1.0)
    return t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)


def _ground_state_logderiv(grid: Grid, V: np.ndarray, omega: float, phi: np.ndarray, width: float = 2.0):
    """Splice the two stable sweeps at the peak of psi.

    The sweeps disagree at the level of the integration error; a smooth
    blend keeps that mismatch out of q'' (a hard switch would not).
    """
    qL, lL = _sweep(grid, V, omega, True)
    qR, lR = _sweep(grid, V, omega, False)
    peak = int(np.argmax(np.abs(phi)))
    s = _smoothstep((grid.x - grid.x[peak]) / width + 0.5)
    q = (1.0 - s) * qL + s * qR
    logpsi = (1.0 - s) * (lL - lL[peak]) + s * (lR - lR[peak])
    psi = np.exp(logpsi - logpsi.max())
    psi /= math.sqrt(np.sum(psi * psi) * grid.dx)
    if not np.all(psi[1:-1] > 0):
        raise AssumptionError("ground state has a numerical zero in the interior")
    return q, psi


def darboux_step(op: SchrodingerOp, spec: DiscreteSpectrum | None = None):
    """Remove the lowest eigenvalue: returns (V_next, psi, omega, q)."""
    if spec is None:
        spec = discrete_spectrum(op)
    if spec.N == 0:
        raise AssumptionError("no bound states to remove")
    omega = float(spec.omegas[0])
    q, psi = _ground_state_logderiv(op.grid, op.V, omega, spec.phis[0].values.real)
    V_next = _next_potential(op.V, omega, q)
    return Field(op.grid, V_next), Field(op.grid, psi), omega, q


def build_ladder(V: Field, expected_N: int | None = None, tol_eig: float = 1e-6) -> DarbouxLadder:
    grid = V.grid
    op = SchrodingerOp(grid, V.values.real)
    spec = discrete_spectrum(op)
    if spec.N == 0:
        raise AssumptionError("potential has no bound states")
    if expected_N is not None and spec.N != expected_N:
        raise AssumptionError(f"expected {expected_N} bound states, found {spec.N}")
    pots, psis, omegas, qs, spectra = [op.V], [], [], [], [spec]
    for _ in range(spec.N):
        cur = spectra[-1]
        V_next, psi, omega, q = darboux_step(op, cur)
        op = SchrodingerOp(grid, V_next.values.real)
        nxt = discrete_spectrum(op, count_hint=max(cur.N - 1, 1))
        if nxt.N != cur.N - 1 or not np.allclose(nxt.omegas, cur.omegas[1:], atol=tol_eig, rtol=0):
            raise AssumptionError(
                f"spectrum after removing {omega}: {nxt.omegas}, expected {cur.omegas[1:]}"
            )
        pots.append(op.V)
        psis.append(psi)
        omegas.append(omega)
        qs.append(q)
        spectra.append(nxt)
    return DarbouxLadder(grid, tuple(pots), tuple(psis), np.array(omegas), tuple(qs), tuple(spectra))


def apply_A(q: np.ndarray, f: Field, adjoint: bool = False) -> Field:
    d = derivative(f, 1).values
    return Field(f.grid, (-d if adjoint else d) + q * f.values)


def apply_A_chain(ladder: DarbouxLadder, f: Field, adjoint: bool = False) -> Field:
    """A_1 ... A_N f, or A_N* ... A_1* f with ``adjoint``."""
    order = ladder.log_derivs if adjoint else ladder.log_derivs[::-1]
    for q in order:
        f = apply_A(q, f, adjoint)
    return f


def verify_conjugation(ladder: DarbouxLadder, f: Field) -> float:
    """||A* H_1 f - H_{N+1} A* f|| / ||f||."""
    H1, Hn = ladder.op(1), ladder.op(ladder.N + 1)
    lhs = apply_A_chain(ladder, H1(f), adjoint=True)
    rhs = Hn(apply_A_chain(ladder, f, adjoint=True))
    return norm(lhs - rhs) / norm(f)


def verify_factorization(ladder: DarbouxLadder, f: Field) -> float:
    """||A A* f - prod_j (H - omega_j) f|| / ||f||."""
    lhs = apply_A_chain(ladder, apply_A_chain(ladder, f, adjoint=True), adjoint=False)
    H = ladder.op(1)
    rhs = f
    for w in ladder.removed_omegas:
        rhs = H(rhs) - w * rhs
    return norm(lhs - rhs) / norm(f)


@dataclass(frozen=True)
class RepulsivityReport:
    sup_violation: float
    verdict: bool
    is_nonzero: bool


def check_repulsive(V: Field, tol_zero: float = 1e-12) -> RepulsivityReport:
    """Repulsive means x V'(x) <= 0 everywhere and V not identically zero."""
    v = Field(V.grid, V.values.real)
    dV = derivative(v, 1).values.real
    sup = float(np.max(V.grid.x * dV))
    tol_rep = 1e-10 * max(float(np.max(np.abs(dV))), 1e-300)
    nonzero = bool(np.max(np.abs(v.values.real)) > tol_zero)
    return RepulsivityReport(sup, bool(sup <= tol_rep and nonzero), nonzero)


def inverse_darboux(
    V_rep: Field,
    target_omegas,
    shift: float = 0.0,
    require_repulsive: bool = True,
    tol_eig: float = 1e-6,
) -> Field:
    """Potential whose spectrum is ``target_omegas`` and whose ladder ends at V_rep.

    Bound states are inserted from the highest energy down: each new energy
    lies below the current spectrum so a positive solution psi of
    (H - omega) psi = 0 exists.  psi mixes the two solutions growing at +inf
    and -inf, each normalized to 1 at the origin, with weights e^{+shift} and
    e^{-shift}; ``shift = 0`` is the symmetric choice.
    """
    grid = V_rep.grid
    omegas = np.sort(np.asarray(target_omegas, dtype=float))
    if omegas.size == 0:
        return Field(grid, V_rep.values.real)
    if np.any(omegas >= 0):
        raise ValueError("inserted energies must be negative")
    if omegas.size > 1 and np.min(np.diff(omegas)) < GAP_MIN:
        raise ValueError("inserted energies must be distinct")
    if require_repulsive and not check_repulsive(V_rep).verdict:
        raise AssumptionError("seed potential is not repulsive")
    V = np.array(V_rep.values.real)
    i0 = int(np.argmin(np.abs(grid.x)))
    for omega in omegas[::-1]:
        qL, lL = _sweep(grid, V, omega, True)
        qR, lR = _sweep(grid, V, omega, False)
        a = lL - lL[i0] + shift
        b = lR - lR[i0] - shift
        wL = 1.0 / (1.0 + np.exp(np.clip(b - a, -700, 700)))
        q = wL * qL + (1.0 - wL) * qR
        # H_old = A A* + omega with A* = -d + q_new, q_new = -q (ground state 1/psi).
        V = -V + 2.0 * omega + 2.0 * q * q
    out = Field(grid, V)
    spec = discrete_spectrum(SchrodingerOp(grid, V), count_hint=omegas.size)
    if spec.N != omegas.size or not np.allclose(spec.omegas, omegas, atol=tol_eig, rtol=0):
        raise AssumptionError(f"spectrum after insertion {spec.omegas}, expected {omegas}")
    return out


def check_nonresonance(omegas, norm_cutoff: int, tol_res: float = 1e-9) -> list[tuple[int, ...]]:
    """All m != 0 with ||m||_1 <= norm_cutoff and |m . omega| < tol_res."""
    w = np.asarray(omegas, dtype=float)
    N = w.size
    if N <= 1:
        return []
    hits = []
    rng = range(-norm_cutoff, norm_cutoff + 1)
    for m in itertools.product(rng, repeat=N):
        s = sum(abs(c) for c in m)
        if s == 0 or s > norm_cutoff:
            continue
        if abs(float(np.dot(m, w))) < tol_res:
            hits.append(tuple(int(c) for c in m))
    return hits
