"""Periodic-domain Fourier machinery shared by the solver and the adjoint code.

Convention: the forward transform is unnormalized and the inverse carries 1/n,
matching ``numpy.fft``. Wavenumbers use the signed index j' (j for j <= n/2,
j - n above), so ``k[n - j] == -k[j]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .errors import InvalidFieldError, SymmetryError

SYMMETRY_RTOL = 1e-12
IMAG_RESIDUE_TOL = 1e-10


@dataclass(frozen=True)
class Grid:
    L: float
    n: int

    def __post_init__(self):
        if self.n <= 0 or self.n % 2:
            raise ValueError(f"grid size must be a positive even integer, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"domain length must be positive, got {self.L}")

    @property
    def dx(self) -> float:
        return self.L / self.n

    @cached_property
    def signed_index(self) -> np.ndarray:
        j = np.arange(self.n)
        return np.where(j <= self.n // 2, j, j - self.n)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2.0 * np.pi * self.signed_index / self.L

    @cached_property
    def x(self) -> np.ndarray:
        """Node positions on [-L/2, L/2)."""
        return -0.5 * self.L + self.dx * np.arange(self.n)


@dataclass(frozen=True, eq=False)
class PhysicalField:
    values: np.ndarray
    grid: Grid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise InvalidFieldError(f"expected {self.grid.n} values, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise InvalidFieldError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


@dataclass(frozen=True, eq=False)
class SpectralField:
    coeffs: np.ndarray
    grid: Grid

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (self.grid.n,):
            raise InvalidFieldError(f"expected {self.grid.n} coefficients, got shape {c.shape}")
        check_symmetry(c)
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)


def check_symmetry(coeffs: np.ndarray, rtol: float = SYMMETRY_RTOL) -> None:
    """Raise SymmetryError unless ``coeffs`` is the spectrum of a real field."""
    n = coeffs.shape[-1]
    scale = max(np.max(np.abs(coeffs)), 1.0)
    mirror = np.conj(coeffs[..., (-np.arange(n)) % n])
    err = np.max(np.abs(coeffs - mirror)) if n else 0.0
    if err > rtol * scale:
        raise SymmetryError(f"conjugate symmetry violated by {err:.3e} (scale {scale:.3e})")


@dataclass(frozen=True)
class DealiasMask:
    """One-third rule: keep modes with |j'| <= n/3."""

    grid: Grid

    @cached_property
    def keep(self) -> np.ndarray:
        return np.abs(self.grid.signed_index) <= self.grid.n / 3

    def apply(self, coeffs: np.ndarray) -> np.ndarray:
        return np.where(self.keep, coeffs, 0.0)


def forward_transform(field: PhysicalField) -> SpectralField:
    return SpectralField(np.fft.fft(field.values), field.grid)


def inverse_transform(coeffs: SpectralField) -> PhysicalField:
    u = np.fft.ifft(coeffs.coeffs)
    residue = np.max(np.abs(u.imag)) if u.size else 0.0
    if residue >= IMAG_RESIDUE_TOL:
        raise SymmetryError(f"inverse transform left imaginary residue {residue:.3e}")
    return PhysicalField(u.real, coeffs.grid)


def derivative_symbol(grid: Grid, order: int) -> np.ndarray:
    if order not in (1, 2, 4):
        raise ValueError(f"unsupported derivative order {order}; use 1, 2 or 4")
    sym = (1j * grid.wavenumbers) ** order
    if order % 2:
        sym[grid.n // 2] = 0.0
    return sym


def spectral_derivative(coeffs: SpectralField, order: int) -> SpectralField:
    return SpectralField(coeffs.coeffs * derivative_symbol(coeffs.grid, order), coeffs.grid)


def linear_symbol(grid: Grid) -> np.ndarray:
    """Growth rate k^2 - k^4 of each Fourier mode under the linear KS operator."""
    k = grid.wavenumbers
    return k**2 - k**4


def spectral_energy(coeffs: SpectralField) -> float:
    """Parseval counterpart of sum(u**2) * dx."""
    g = coeffs.grid
    return float(np.sum(np.abs(coeffs.coeffs) ** 2) * g.dx / g.n)


@lru_cache(maxsize=64)
def _fourier_multiplier_matrix(n: int, symbol_bytes: bytes) -> np.ndarray:
    symbol = np.frombuffer(symbol_bytes, dtype=complex)
    basis = np.fft.fft(np.eye(n), axis=0)
    m = np.fft.ifft(symbol[:, None] * basis, axis=0)
    return np.ascontiguousarray(m.real)


def multiplier_matrix(symbol: np.ndarray) -> np.ndarray:
    """Real n x n matrix acting on physical vectors as F^-1 diag(symbol) F.

    ``symbol`` must be conjugate symmetric so the operator maps reals to reals.
    """
    symbol = np.ascontiguousarray(symbol, dtype=complex)
    return _fourier_multiplier_matrix(symbol.shape[0], symbol.tobytes()).copy()
