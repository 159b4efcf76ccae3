"""Uniform periodic grid on [-L, L), spectral calculus and the weighted norms.

All numerical routines in the package represent a function on the real line by
its samples at the grid nodes, held in a plain numpy array (float64 for real
fields, complex128 for wave functions).  :class:`Field` pairs such an array with
its grid for serialization.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import NonPowerOfTwo, ShapeMismatch

__all__ = [
    "Grid",
    "make_grid",
    "NormKind",
    "L1",
    "L2",
    "LINF",
    "Field",
    "japanese_bracket",
]

_MIN_POINTS = 256


def japanese_bracket(x):
    """Return <x> = sqrt(1 + x^2)."""
    return np.sqrt(1.0 + np.square(x))


@dataclass(frozen=True)
class NormKind:
    """A base norm (``"L1"``, ``"L2"`` or ``"Linf"``) with weight <x>^weight."""

    base: str
    weight: int = 0

    def __post_init__(self):
        if self.base not in ("L1", "L2", "Linf"):
            raise ValueError(f"unknown norm base {self.base!r}")

    def weighted(self, k: int) -> "NormKind":
        return NormKind(self.base, int(k))


L1 = NormKind("L1")
L2 = NormKind("L2")
LINF = NormKind("Linf")


@dataclass(frozen=True)
class Grid:
    """Periodic mesh x_j = -L + j h, j = 0..N-1, with h = 2L/N."""

    L: float
    N: int

    def __post_init__(self):
        n = int(self.N)
        if n != self.N or n < 2 or n & (n - 1):
            raise NonPowerOfTwo(f"N must be a power of two, got {self.N}")
        if n < _MIN_POINTS:
            raise NonPowerOfTwo(f"N must be at least {_MIN_POINTS}, got {self.N}")
        if not (self.L > 0 and np.isfinite(self.L)):
            raise ValueError(f"half width L must be positive, got {self.L}")
        object.__setattr__(self, "L", float(self.L))
        object.__setattr__(self, "N", n)

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.N

    @cached_property
    def x(self) -> np.ndarray:
        x = -self.L + self.h * np.arange(self.N)
        x.setflags(write=False)
        return x

    @cached_property
    def k(self) -> np.ndarray:
        """Angular wavenumbers pi*m/L in numpy FFT order."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.N, d=self.h)
        k.setflags(write=False)
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        k2 = self.k**2
        k2.setflags(write=False)
        return k2

    @cached_property
    def bracket(self) -> np.ndarray:
        b = japanese_bracket(self.x)
        b.setflags(write=False)
        return b

    @property
    def k_max(self) -> float:
        return np.pi / self.h

    def check(self, f) -> np.ndarray:
        f = np.asarray(f)
        if f.shape != (self.N,):
            raise ShapeMismatch(f"expected {self.N} samples, got shape {f.shape}")
        return f

    # -- spectral calculus -------------------------------------------------

    def derivative(self, f, order: int = 1) -> np.ndarray:
        """Fourier derivative: mode m is multiplied by (i k_m)^order.

        For odd orders the unpaired Nyquist mode is dropped so that real input
        gives real output.
        """
        f = self.check(f)
        if order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        symbol = (1j * self.k) ** order
        if order % 2:
            symbol = symbol.copy()
            symbol[self.N // 2] = 0.0
        out = np.fft.ifft(symbol * np.fft.fft(f))
        return out.real if np.isrealobj(f) else out

    def laplacian(self, f) -> np.ndarray:
        return self.derivative(f, 2)

    def modal_l2_squared(self, f) -> float:
        """h-weighted modal sum (h/N) * sum |F_m|^2 (Parseval partner of L2^2)."""
        F = np.fft.fft(self.check(f))
        return float(self.h / self.N * np.sum(np.abs(F) ** 2))

    def dirichlet_energy(self, f) -> float:
        """||f'||_2^2 evaluated in Fourier space."""
        F = np.fft.fft(self.check(f))
        return float(self.h / self.N * np.sum(self.k2 * np.abs(F) ** 2))

    def half_shift(self, f) -> np.ndarray:
        """Trigonometric interpolant of f at the midpoints x_j + h/2."""
        f = self.check(f)
        out = np.fft.ifft(np.exp(0.5j * self.k * self.h) * np.fft.fft(f))
        return out.real if np.isrealobj(f) else out

    # -- quadrature --------------------------------------------------------

    def inner(self, f, g) -> complex:
        """<f, g> = h * sum conj(f_j) g_j (conjugate-linear in f)."""
        return self.h * np.vdot(self.check(f), self.check(g))

    def integrate(self, f):
        return self.h * np.sum(self.check(f))

    def norm(self, f, kind: NormKind = L2) -> float:
        f = self.check(f)
        a = np.abs(f)
        if kind.weight:
            a = a * self.bracket**kind.weight
        if kind.base == "L1":
            return float(self.h * np.sum(a))
        if kind.base == "L2":
            return float(np.sqrt(self.h * np.sum(a * a)))
        return float(np.max(a))

    def l2(self, f) -> float:
        return float(np.sqrt(self.h * np.sum(np.abs(self.check(f)) ** 2)))

    def outer_mask(self, fraction: float = 0.1) -> np.ndarray:
        """Boolean mask of the outer ``fraction`` of the nodes (half on each side)."""
        m = max(1, int(round(0.5 * fraction * self.N)))
        mask = np.zeros(self.N, dtype=bool)
        mask[:m] = True
        mask[-m:] = True
        return mask


def make_grid(L: float, N: int) -> Grid:
    return Grid(L, N)


@dataclass
class Field:
    """Samples of a function on a grid, with CSV and binary serialization.

    Binary layout (little endian): int64 N, float64 L, then N complex128 samples.
    """

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.grid.check(self.values))

    @property
    def is_real(self) -> bool:
        return np.isrealobj(self.values)

    def to_bytes(self) -> bytes:
        head = struct.pack("<qd", self.grid.N, self.grid.L)
        body = np.ascontiguousarray(self.values, dtype="<c16").tobytes()
        return head + body

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Field":
        n, L = struct.unpack_from("<qd", blob, 0)
        values = np.frombuffer(blob, dtype="<c16", count=n, offset=16).astype(np.complex128)
        if not np.any(values.imag):
            values = values.real.copy()
        return cls(Grid(L, n), values)

    def save(self, path) -> Path:
        path = Path(path)
        path.write_bytes(self.to_bytes())
        return path

    @classmethod
    def load(cls, path) -> "Field":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path) -> Path:
        path = Path(path)
        vals = np.asarray(self.values, dtype=np.complex128)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["x", "re", "im"])
            for xj, v in zip(self.grid.x, vals):
                w.writerow([repr(float(xj)), repr(float(v.real)), repr(float(v.imag))])
        return path

    @classmethod
    def from_csv(cls, path, L: float | None = None) -> "Field":
        with Path(path).open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        x = np.array([float(r["x"]) for r in rows])
        values = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
        if L is None:
            L = -x[0]
        if not np.any(values.imag):
            values = values.real
        return cls(Grid(L, len(rows)), values)
