"""Multi-indices, the cubic refined profile and Fermi Golden Rule data.

Indices live on the gauge slice sum(m) = 1.  A monomial ``z**m`` uses
``z_j**m_j`` for ``m_j >= 0`` and ``conj(z_j)**(-m_j)`` otherwise.

The profile is truncated at total degree three:

    phi[z] = sum_j z_j phi_j  +  sum_{m in NR1, |m| = 3} z**m phit_m
             + sum_{j,k} |z_k|**2 z_j psi_{jk}

with ``phit_m = -(H - m.omega)^{-1} G_m``.  The secular cubic sources
``S_{jk} = (2 - delta_jk) phi_j phi_k**2`` (the terms m1 - m2 + m3 = e_j of
norm three) are split into a frequency shift ``c_jk = <S_jk, phi_j>`` and a
correction ``psi_jk = -(H - omega_j)^{-1}(S_jk - c_jk phi_j)`` inverted on the
orthogonal complement of ``phi_j``.  With both pieces the stationary residual
is O(|z|**5).

Internally every term is stored as exponent vectors (a, b) for
``z**a conj(z)**b`` so first and second z-derivatives are exact polynomials.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass, field

import numpy as np

from .grid import Field, inner, norm
from .spectral import (
    K_MIN,
    DiscreteSpectrum,
    NearSingularError,
    SchrodingerOp,
    distorted_ft,
    projections,
    resolvent_apply,
)

__all__ = [
    "IndexClassification",
    "RefinedProfile",
    "FgrData",
    "NonResonanceError",
    "l1",
    "precedes",
    "precedes_eq",
    "classify_indices",
    "default_cutoff",
    "monomial",
    "build_profile",
    "eval_phi",
    "eval_dphi",
    "eval_varpi",
    "rp_residual",
    "fgr_coefficients",
    "fgr_free",
    "A1",
]


class NonResonanceError(ValueError):
    pass


def l1(m) -> int:
    return int(sum(abs(int(c)) for c in m))


def precedes_eq(n, m) -> bool:
    return all(abs(a) <= abs(b) for a, b in zip(n, m))


def precedes(n, m) -> bool:
    return precedes_eq(n, m) and l1(n) < l1(m)


@dataclass(frozen=True)
class IndexClassification:
    omegas: tuple
    norm_cutoff: int
    NR: tuple
    R: tuple
    R_min: tuple
    I: tuple
    NR1: tuple

    @property
    def N(self) -> int:
        return len(self.omegas)

    def dominator(self, m) -> tuple | None:
        """An element of R_min strictly below m, if any."""
        for n in self.R_min:
            if precedes(n, m):
                return n
        return None


def _slice(N: int, cutoff: int):
    for m in itertools.product(range(-cutoff, cutoff + 1), repeat=N):
        if sum(m) == 1 and l1(m) <= cutoff:
            yield tuple(int(c) for c in m)


def classify_indices(omegas, norm_cutoff: int | None = None, tol_res: float | None = None) -> IndexClassification:
    w = np.asarray(omegas, dtype=float)
    N = w.size
    if norm_cutoff is None:
        norm_cutoff = default_cutoff(w)
    if tol_res is None:
        tol_res = 1e-8 * abs(float(np.min(w))) if N else 0.0
    NR, R = [], []
    for m in _slice(N, norm_cutoff):
        d = float(np.dot(m, w))
        if abs(d) < tol_res:
            raise NonResonanceError(f"m={m} has m.omega={d}")
        (NR if d < 0 else R).append(m)
    R_min = [m for m in R if not any(precedes(n, m) for n in R)]
    I = [m for m in NR + R if any(precedes(n, m) for n in R_min)]
    NR1 = [m for m in NR if m not in I]
    key = lambda m: (l1(m), tuple(-c for c in m))
    return IndexClassification(
        tuple(float(x) for x in w),
        int(norm_cutoff),
        tuple(sorted(NR, key=key)),
        tuple(sorted(R, key=key)),
        tuple(sorted(R_min, key=key)),
        tuple(sorted(I, key=key)),
        tuple(sorted(NR1, key=key)),
    )


def default_cutoff(omegas, max_cutoff: int = 15) -> int:
    """2 * (largest norm in R_min) + 1, with R_min found by growing the search."""
    w = np.asarray(omegas, dtype=float)
    if w.size <= 1:
        return 3
    for c in range(3, max_cutoff + 1, 2):
        R = [m for m in _slice(w.size, c) if np.dot(m, w) > 0]
        R_min = [m for m in R if not any(precedes(n, m) for n in R)]
        if R_min:
            return 2 * max(l1(m) for m in R_min) + 1
    return max_cutoff


def monomial(z, m) -> complex:
    z = np.asarray(z, dtype=complex)
    out = 1.0 + 0j
    for zj, mj in zip(z, m):
        out *= zj ** mj if mj >= 0 else np.conj(zj) ** (-mj)
    return complex(out)


def _split(m):
    a = tuple(max(int(c), 0) for c in m)
    b = tuple(max(-int(c), 0) for c in m)
    return a, b


def _mono_ab(z: np.ndarray, a, b) -> complex:
    out = 1.0 + 0j
    zc = np.conj(z)
    for j in range(len(a)):
        if a[j]:
            out *= z[j] ** a[j]
        if b[j]:
            out *= zc[j] ** b[j]
    return out


@dataclass(frozen=True, eq=False)
class RefinedProfile:
    spectrum: DiscreteSpectrum
    classification: IndexClassification
    G: dict  # m -> Field, m in R_min and NR1
    tilde_phi: dict  # m -> Field, m in NR1 with |m| <= order
    secular: dict  # (j, k) -> Field
    varpi_coeffs: np.ndarray
    order: int = 3
    z_max: float = 0.3
    # flattened representation: exponents (a, b) and fields
    _a: np.ndarray = field(default=None, repr=False)
    _b: np.ndarray = field(default=None, repr=False)
    _F: np.ndarray = field(default=None, repr=False)
    _freq: np.ndarray = field(default=None, repr=False)  # index vector m for frequency m.varpi

    @property
    def N(self) -> int:
        return self.spectrum.N

    @property
    def omegas(self) -> np.ndarray:
        return np.asarray(self.spectrum.omegas)

    @property
    def grid(self):
        return self.spectrum.phis[0].grid

    @property
    def R_min(self):
        return self.classification.R_min

    def resonant_source(self, z) -> Field:
        """sum over R_min of z**m G_m (only the indices built at this order)."""
        g = self.grid
        out = np.zeros(g.n, dtype=complex)
        for m in self.R_min:
            if m in self.G:
                out += monomial(z, m) * self.G[m].values
        return Field(g, out)


def build_profile(
    spec: DiscreteSpectrum,
    cls: IndexClassification,
    op: SchrodingerOp,
    order: int = 3,
    z_max: float = 0.3,
) -> RefinedProfile:
    if order != 3:
        raise NotImplementedError("only the cubic profile is implemented")
    N = spec.N
    if N == 0:
        raise ValueError("profile needs at least one bound state")
    if N != cls.N:
        raise ValueError("classification and spectrum disagree on N")
    g = op.grid
    phis = [p.values.real for p in spec.phis]
    w = np.asarray(spec.omegas)
    e = [tuple(int(i == j) for i in range(N)) for j in range(N)]
    tilde = {e[j]: spec.phis[j] for j in range(N)}
    NR1_1 = [m for m in cls.NR1 if l1(m) == 1]
    G = {m: Field(g, np.zeros(g.n)) for m in NR1_1}
    targets = [m for m in cls.R_min + cls.NR1 if l1(m) == 3]
    for m in cls.R_min + cls.NR1:
        if l1(m) > 3:
            warnings.warn(f"index {m} has norm {l1(m)} > 3 and is not built at cubic order")
    for m in targets:
        src = np.zeros(g.n)
        for m1, m2, m3 in itertools.product(NR1_1, repeat=3):
            if tuple(a - b + c for a, b, c in zip(m1, m2, m3)) == m:
                src = src + tilde[m1].values.real * tilde[m2].values.real * tilde[m3].values.real
        G[m] = Field(g, src)
    for m in targets:
        if m in cls.NR1:
            lam = float(np.dot(m, w))
            try:
                tilde[m] = -resolvent_apply(op, lam, G[m], spec=spec)
            except NearSingularError as exc:
                raise NonResonanceError(f"resolvent singular at m={m}") from exc
            tilde[m] = Field(g, tilde[m].values.real)

    c = np.zeros((N, N))
    secular = {}
    for j in range(N):
        for k in range(N):
            S = (2.0 - (j == k)) * phis[j] * phis[k] ** 2
            c[j, k] = float(np.sum(S * phis[j]) * g.dx)
            rhs = Field(g, S - c[j, k] * phis[j])
            psi = -resolvent_apply(op, w[j], rhs, spec=spec)
            secular[(j, k)] = Field(g, psi.values.real)

    a_list, b_list, F_list, freq = [], [], [], []
    for m in cls.NR1:
        if m in tilde:
            a, b = _split(m)
            a_list.append(a)
            b_list.append(b)
            F_list.append(tilde[m].values.real)
            freq.append(m)
    for (j, k), psi in secular.items():
        a = [0] * N
        b = [0] * N
        a[j] += 1
        a[k] += 1
        b[k] += 1
        a_list.append(tuple(a))
        b_list.append(tuple(b))
        F_list.append(psi.values.real)
        freq.append(e[j])
    return RefinedProfile(
        spec,
        cls,
        G,
        {m: tilde[m] for m in cls.NR1 if m in tilde},
        secular,
        c,
        order,
        z_max,
        np.array(a_list, dtype=int),
        np.array(b_list, dtype=int),
        np.array(F_list),
        np.array(freq, dtype=int),
    )


def _check_radius(profile: RefinedProfile, z):
    if np.linalg.norm(z) > profile.z_max:
        warnings.warn(f"|z| = {np.linalg.norm(z):.3g} exceeds the profile validity radius {profile.z_max}")


def _coeffs(profile: RefinedProfile, z: np.ndarray) -> np.ndarray:
    return np.array([_mono_ab(z, a, b) for a, b in zip(profile._a, profile._b)])


def eval_phi(profile: RefinedProfile, z) -> Field:
    z = np.asarray(z, dtype=complex)
    _check_radius(profile, z)
    return Field(profile.grid, _coeffs(profile, z) @ profile._F)


def _wirtinger(profile: RefinedProfile, z: np.ndarray):
    """d coef / dz_j and d coef / d conj(z_j), arrays of shape (terms, N)."""
    T, N = profile._a.shape
    dz = np.zeros((T, N), dtype=complex)
    dzb = np.zeros((T, N), dtype=complex)
    for t in range(T):
        a, b = profile._a[t], profile._b[t]
        for j in range(N):
            if a[j]:
                aa = a.copy()
                aa[j] -= 1
                dz[t, j] = a[j] * _mono_ab(z, aa, b)
            if b[j]:
                bb = b.copy()
                bb[j] -= 1
                dzb[t, j] = b[j] * _mono_ab(z, a, bb)
    return dz, dzb


def eval_dphi(profile: RefinedProfile, z, w) -> Field:
    """D_z phi[z] w, the real derivative of z -> phi[z] in direction w."""
    z = np.asarray(z, dtype=complex)
    w = np.asarray(w, dtype=complex)
    dz, dzb = _wirtinger(profile, z)
    coef = dz @ w + dzb @ np.conj(w)
    return Field(profile.grid, coef @ profile._F)


def dphi_basis(profile: RefinedProfile, z) -> np.ndarray:
    """Rows D_z phi[z] e_j and D_z phi[z] (i e_j), shape (2N, n)."""
    z = np.asarray(z, dtype=complex)
    dz, dzb = _wirtinger(profile, z)
    re = (dz + dzb).T @ profile._F
    im = (1j * dz - 1j * dzb).T @ profile._F
    out = np.empty((2 * profile.N, profile._F.shape[1]), dtype=complex)
    out[0::2] = re
    out[1::2] = im
    return out


def d2phi_basis(profile: RefinedProfile, z) -> np.ndarray:
    """D^2_z phi[z](u_p, u_q) for the real basis u = (e_1, i e_1, ...), shape (2N, 2N, n)."""
    z = np.asarray(z, dtype=complex)
    N = profile.N
    T = profile._a.shape[0]
    # second Wirtinger derivatives: zz, z zbar, zbar zbar
    h_zz = np.zeros((T, N, N), dtype=complex)
    h_zb = np.zeros((T, N, N), dtype=complex)
    h_bb = np.zeros((T, N, N), dtype=complex)
    for t in range(T):
        a0, b0 = profile._a[t], profile._b[t]
        for j in range(N):
            for k in range(N):
                a, b = a0.copy(), b0.copy()
                c = a[j]
                a[j] -= 1
                if c and a[k] > 0:
                    h_zz[t, j, k] = c * a[k] * _mono_ab(z, [a[i] - (i == k) for i in range(N)], b)
                a, b = a0.copy(), b0.copy()
                c = a[j]
                a[j] -= 1
                if c and b[k] > 0:
                    h_zb[t, j, k] = c * b[k] * _mono_ab(z, a, [b[i] - (i == k) for i in range(N)])
                a, b = a0.copy(), b0.copy()
                c = b[j]
                b[j] -= 1
                if c and b[k] > 0:
                    h_bb[t, j, k] = c * b[k] * _mono_ab(z, a, [b[i] - (i == k) for i in range(N)])
    units = []
    for j in range(N):
        units.append((j, 1.0 + 0j))
        units.append((j, 1j))
    out = np.empty((2 * N, 2 * N, profile._F.shape[1]), dtype=complex)
    for p, (j, up) in enumerate(units):
        for q, (k, uq) in enumerate(units):
            coef = (
                h_zz[:, j, k] * up * uq
                + h_zb[:, j, k] * up * np.conj(uq)
                + h_zb[:, k, j] * uq * np.conj(up)
                + h_bb[:, j, k] * np.conj(up) * np.conj(uq)
            )
            out[p, q] = coef @ profile._F
    return out


def eval_varpi(profile: RefinedProfile, z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    return profile.omegas + profile.varpi_coeffs @ (np.abs(z) ** 2)


def rp_residual(profile: RefinedProfile, z, op: SchrodingerOp) -> tuple[Field, float]:
    """H phi + |phi|^2 phi - sum_{R_min} z^m G_m + i D phi[z](i varpi z)."""
    z = np.asarray(z, dtype=complex)
    phi = eval_phi(profile, z)
    varpi = eval_varpi(profile, z)
    rot = eval_dphi(profile, z, 1j * varpi * z)
    res = op(phi).values + np.abs(phi.values) ** 2 * phi.values
    res = res - profile.resonant_source(z).values + 1j * rot.values
    r = Field(phi.grid, res)
    return r, norm(r)


@dataclass(frozen=True)
class FgrData:
    indices: tuple
    lambdas: np.ndarray
    ghat_plus: np.ndarray
    ghat_minus: np.ndarray
    Gamma: np.ndarray
    g: np.ndarray  # shape (len(indices), N): <G_m, phi_j>
    Gamma_top: np.ndarray | None = None  # same rates computed on the last ladder rung
    tol_fgr: float = 1e-12

    @property
    def holds(self) -> bool:
        return bool(np.all(self.Gamma > self.tol_fgr))

    def as_dict(self) -> dict:
        return {m: float(G) for m, G in zip(self.indices, self.Gamma)}


def fgr_free(Gfield: Field, lam: float) -> float:
    """Gamma for V = 0 from the plain Fourier transform (reference formula)."""
    x = Gfield.grid.x
    k = np.sqrt(lam)
    dx = Gfield.grid.dx
    gp = np.sum(np.exp(-1j * k * x) * Gfield.values) * dx / np.sqrt(2 * np.pi)
    gm = np.sum(np.exp(1j * k * x) * Gfield.values) * dx / np.sqrt(2 * np.pi)
    return float(np.pi / (2 * k) * (abs(gp) ** 2 + abs(gm) ** 2))


def _gamma(op: SchrodingerOp, f: Field, lam: float):
    k = float(np.sqrt(lam))
    gh = distorted_ft(op, f, np.array([k, -k]))
    return gh[0], gh[1], float(np.pi / (2 * k) * (abs(gh[0]) ** 2 + abs(gh[1]) ** 2))


def fgr_coefficients(profile: RefinedProfile, op: SchrodingerOp, ladder=None, tol_fgr: float = 1e-12) -> FgrData:
    """Distorted Fourier data of G_m at the resonant energies m.omega for m in R_min.

    With a ladder the same rates are recomputed on the last rung from
    A* P_c G_m, divided by prod_j (lambda - omega_j).
    """
    spec = profile.spectrum
    w = profile.omegas
    idx = tuple(m for m in profile.R_min if m in profile.G)
    lams, gp, gm, Gam, gmat, top = [], [], [], [], [], []
    for m in idx:
        lam = float(np.dot(m, w))
        if lam <= K_MIN ** 2:
            raise ValueError(f"resonant energy {lam} below the low-energy cutoff")
        Gm = profile.G[m]
        a, b, Gv = _gamma(op, Gm, lam)
        lams.append(lam)
        gp.append(a)
        gm.append(b)
        Gam.append(Gv)
        gmat.append([inner(Gm, p).real for p in spec.phis])
        if ladder is not None:
            from .darboux import apply_A_chain

            _, Pc = projections(spec, Gm)
            Gt = apply_A_chain(ladder, Pc, adjoint=True)
            _, _, Gtop = _gamma(ladder.op(ladder.N + 1), Gt, lam)
            top.append(Gtop / float(np.prod(lam - w)))
    if any(G <= tol_fgr for G in Gam):
        warnings.warn("Fermi Golden Rule rate vanishes for some resonant index")
    return FgrData(
        idx,
        np.array(lams),
        np.array(gp),
        np.array(gm),
        np.array(Gam),
        np.array(gmat).reshape(len(idx), profile.N),
        np.array(top) if ladder is not None else None,
        tol_fgr,
    )


def A1(z, profile: RefinedProfile, fgr: FgrData) -> float:
    """Normal-form correction sum_{m != n} Re(z^m conj(z^n)) g_mj g_nj / ((n - m).omega)."""
    z = np.asarray(z, dtype=complex)
    w = profile.omegas
    out = 0.0
    for i, m in enumerate(fgr.indices):
        for k, n in enumerate(fgr.indices):
            if i == k:
                continue
            den = float(np.dot(np.subtract(n, m), w))
            zz = monomial(z, m) * np.conj(monomial(z, n))
            out += zz.real * float(fgr.g[i] @ fgr.g[k]) / den
    return out
