"""Uniform periodic grid on [-L, L), spectral calculus and weighted norms.

Everything in the package samples functions on a :class:`Grid`.  The whole
line is truncated to a periodic box; all objects of interest decay
exponentially so the wrap-around is invisible at double precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "Grid",
    "Field",
    "WeightSpec",
    "WeightOverflowError",
    "GridMismatchError",
    "make_grid",
    "jbracket",
    "derivative",
    "inner",
    "real_pairing",
    "norm",
    "weighted_norm",
    "fourier_multiplier",
    "plancherel_norm",
]


class GridMismatchError(ValueError):
    pass


class WeightOverflowError(FloatingPointError):
    pass


@dataclass(frozen=True, eq=False)
class Grid:
    half_width: float
    n_points: int
    x: np.ndarray = field(repr=False)
    k: np.ndarray = field(repr=False)  # FFT ordering

    @property
    def L(self) -> float:
        return self.half_width

    @property
    def n(self) -> int:
        return self.n_points

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / self.n_points

    @property
    def k_sorted(self) -> np.ndarray:
        """Frequencies (pi/L) * {-n/2, ..., n/2 - 1} in increasing order."""
        return np.fft.fftshift(self.k)

    def same_as(self, other: "Grid") -> bool:
        return self is other or (
            self.n_points == other.n_points and self.half_width == other.half_width
        )

    def field(self, values) -> "Field":
        return Field(self, values)

    def zeros(self) -> "Field":
        return Field(self, np.zeros(self.n_points, dtype=complex))


def make_grid(L: float = 40.0, n: int = 4096) -> Grid:
    """Grid with nodes ``x_i = -L + i*dx``, ``dx = 2L/n``."""
    if not L > 0:
        raise ValueError(f"half width must be positive, got {L}")
    n = int(n)
    if n < 8 or n & (n - 1):
        raise ValueError(f"n must be a power of two >= 8, got {n}")
    dx = 2.0 * L / n
    x = -L + dx * np.arange(n)
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=dx)
    x.setflags(write=False)
    k.setflags(write=False)
    return Grid(float(L), n, x, k)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex).reshape(-1)
        if v.shape[0] != self.grid.n_points:
            raise GridMismatchError(
                f"field has {v.shape[0]} samples, grid has {self.grid.n_points}"
            )
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("field contains non-finite values")
        object.__setattr__(self, "values", v)

    @property
    def real(self) -> np.ndarray:
        return self.values.real

    def _check(self, other: "Field"):
        if not self.grid.same_as(other.grid):
            raise GridMismatchError("fields live on different grids")

    def __add__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values + other.values)
        return Field(self.grid, self.values + other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values - other.values)
        return Field(self.grid, self.values - other)

    def __neg__(self):
        return Field(self.grid, -self.values)

    def __mul__(self, other):
        if isinstance(other, Field):
            self._check(other)
            return Field(self.grid, self.values * other.values)
        return Field(self.grid, self.values * other)

    __rmul__ = __mul__

    def conj(self) -> "Field":
        return Field(self.grid, self.values.conj())

    def to_csv(self, path) -> None:
        from .io import field_to_csv

        field_to_csv(self, path)

    def to_binary(self, path) -> None:
        from .io import field_to_binary

        field_to_binary(self, path)


@dataclass(frozen=True)
class WeightSpec:
    """Which weighted norm to take.

    kind is one of ``"SigmaS"`` (``||e^{a<x>} f||_{H^s}``), ``"L2s"``
    (``||<x>^s f||``), ``"SobolevHs"`` and ``"TildeSigma"``
    (``<(-d^2 + sech^2(a x / 10)) f, f>^{1/2}``).
    """

    kind: str
    s: float = 0.0
    a: float = 1.0

    def __post_init__(self):
        if self.kind not in ("SigmaS", "L2s", "SobolevHs", "TildeSigma"):
            raise ValueError(f"unknown weight kind {self.kind!r}")
        if self.kind in ("SigmaS", "TildeSigma") and not self.a > 0:
            raise ValueError("decay rate a must be positive")


def jbracket(x):
    """Japanese bracket <x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.square(x))


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, Field) else np.asarray(f)


def derivative(f: Field, order: int = 1) -> Field:
    """Spectral derivative via the multiplier (ik)^order."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    g = f.grid
    return Field(g, np.fft.ifft((1j * g.k) ** order * np.fft.fft(f.values)))


def fourier_multiplier(symbol: Callable[[np.ndarray], np.ndarray], f: Field) -> Field:
    g = f.grid
    return Field(g, np.fft.ifft(symbol(g.k) * np.fft.fft(f.values)))


def inner(u: Field, v: Field) -> complex:
    """(u, v) = int u conj(v) dx by the rectangle rule."""
    u._check(v)
    return complex(np.vdot(v.values, u.values) * u.grid.dx)


def real_pairing(u: Field, v: Field) -> float:
    return inner(u, v).real


def norm(f: Field) -> float:
    return float(np.sqrt(np.sum(np.abs(f.values) ** 2) * f.grid.dx))


def plancherel_norm(f: Field) -> float:
    """L2 norm computed on the Fourier side; agrees with :func:`norm`."""
    fh = np.fft.fft(f.values)
    return float(np.sqrt(np.sum(np.abs(fh) ** 2) * f.grid.dx / f.grid.n_points))


def _hs_norm(values: np.ndarray, grid: Grid, s: float) -> float:
    fh = np.fft.fft(values)
    w = jbracket(grid.k) ** (2.0 * s)
    return float(np.sqrt(np.sum(w * np.abs(fh) ** 2) * grid.dx / grid.n_points))


def weighted_norm(f: Field, w: WeightSpec) -> float:
    g = f.grid
    if w.kind == "L2s":
        return norm(Field(g, jbracket(g.x) ** w.s * f.values))
    if w.kind == "SobolevHs":
        return _hs_norm(f.values, g, w.s)
    if w.kind == "SigmaS":
        with np.errstate(over="ignore", invalid="ignore"):
            weight = np.exp(w.a * jbracket(g.x))
            prod = weight * f.values
        if not np.all(np.isfinite(prod)):
            raise WeightOverflowError("e^{a<x>} f overflowed on the grid")
        return _hs_norm(prod, g, w.s)
    # TildeSigma
    df = derivative(f, 1).values
    pot = 1.0 / np.cosh(w.a * g.x / 10.0) ** 2
    q = np.sum(np.abs(df) ** 2 + pot * np.abs(f.values) ** 2) * g.dx
    return float(np.sqrt(q))
