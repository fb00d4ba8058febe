import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksobs.errors import InvalidFieldError, SymmetryError
from ksobs.spectral import (
    DealiasMask,
    Grid,
    PhysicalField,
    SpectralField,
    check_symmetry,
    derivative_symbol,
    forward_transform,
    inverse_transform,
    linear_symbol,
    multiplier_matrix,
    spectral_derivative,
    spectral_energy,
)

GRIDS = [Grid(22.0, 64), Grid(44.0, 64), Grid(66.0, 72), Grid(2 * np.pi, 16)]


def naive_idft(coeffs):
    n = coeffs.size
    j = np.arange(n)
    return (np.exp(2j * np.pi * np.outer(j, j) / n) @ coeffs / n).real


def random_symmetric(rng, n):
    c = np.fft.fft(rng.standard_normal(n))
    return c


@pytest.mark.parametrize("grid", GRIDS)
def test_grid_invariants(grid):
    assert abs(grid.dx * grid.n - grid.L) < 1e-13 * grid.L
    k = grid.wavenumbers
    for j in range(1, grid.n // 2):
        assert k[j] == -k[grid.n - j]
    assert k[0] == 0.0


@pytest.mark.parametrize("n", [0, 7, 63])
def test_grid_rejects_odd_or_empty(n):
    with pytest.raises(ValueError):
        Grid(22.0, n)


def test_constant_field_is_dc_only():
    g = Grid(22.0, 64)
    c = forward_transform(PhysicalField(np.full(64, 2.5), g)).coeffs
    assert abs(c[0] - 2.5 * 64) < 1e-12
    assert np.max(np.abs(c[1:])) < 1e-12


def test_cosine_has_two_coefficients():
    g = Grid(22.0, 64)
    u = np.cos(2 * np.pi * (g.x + 11.0) / g.L)
    c = forward_transform(PhysicalField(u, g)).coeffs
    nz = np.flatnonzero(np.abs(c) > 1e-10)
    assert nz.tolist() == [1, 63]
    back = inverse_transform(SpectralField(c, g)).values
    assert np.max(np.abs(back - u)) < 1e-12


def test_zero_coefficients_give_zero_field():
    g = Grid(22.0, 64)
    assert np.all(inverse_transform(SpectralField(np.zeros(64), g)).values == 0)


@pytest.mark.parametrize("seed", range(5))
def test_inverse_matches_naive_dft(seed):
    rng = np.random.default_rng(seed)
    g = Grid(22.0, 64)
    c = random_symmetric(rng, 64)
    assert np.max(np.abs(inverse_transform(SpectralField(c, g)).values - naive_idft(c))) < 1e-10


def test_round_trip_many_fields():
    rng = np.random.default_rng(1)
    g = Grid(22.0, 64)
    for _ in range(1000):
        u = rng.standard_normal(64) * rng.uniform(0.1, 10)
        back = inverse_transform(forward_transform(PhysicalField(u, g))).values
        assert np.max(np.abs(back - u)) < 1e-12 * max(1.0, np.max(np.abs(u)))


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(GRIDS))
def test_parseval(seed, grid):
    u = np.random.default_rng(seed).standard_normal(grid.n)
    lhs = np.sum(u**2) * grid.dx
    rhs = spectral_energy(forward_transform(PhysicalField(u, grid)))
    assert abs(lhs - rhs) <= 1e-12 * lhs


def test_nonfinite_field_rejected():
    g = Grid(22.0, 8)
    with pytest.raises(InvalidFieldError):
        forward_transform(PhysicalField(np.array([0, 1, np.nan, 0, 0, 0, 0, 0.0]), g))


def test_asymmetric_coefficients_rejected():
    g = Grid(22.0, 8)
    c = np.zeros(8, dtype=complex)
    c[1] = 1.0
    with pytest.raises(SymmetryError):
        SpectralField(c, g)
    with pytest.raises(SymmetryError):
        check_symmetry(c)


@pytest.mark.parametrize("order", [1, 2, 4])
def test_derivative_of_constant_vanishes(order):
    g = Grid(22.0, 64)
    c = forward_transform(PhysicalField(np.full(64, 3.0), g))
    assert np.max(np.abs(spectral_derivative(c, order).coeffs)) < 1e-12


def test_second_twice_equals_fourth():
    g = Grid(22.0, 64)
    c = forward_transform(PhysicalField(np.random.default_rng(0).standard_normal(64), g))
    d22 = spectral_derivative(spectral_derivative(c, 2), 2).coeffs
    d4 = spectral_derivative(c, 4).coeffs
    assert np.max(np.abs(d22 - d4)) <= 1e-12 * np.max(np.abs(d4))


def test_derivative_of_sine():
    g = Grid(22.0, 64)
    x = g.x
    u = np.sin(2 * np.pi * x / g.L)
    du = inverse_transform(spectral_derivative(forward_transform(PhysicalField(u, g)), 1)).values
    assert np.max(np.abs(du - 2 * np.pi / g.L * np.cos(2 * np.pi * x / g.L))) < 1e-10


def test_odd_derivative_zeroes_nyquist():
    g = Grid(22.0, 16)
    assert derivative_symbol(g, 1)[8] == 0
    assert derivative_symbol(g, 2)[8] != 0


@pytest.mark.parametrize("order", [0, 3, 5])
def test_unsupported_order(order):
    with pytest.raises(ValueError):
        derivative_symbol(Grid(22.0, 16), order)


def test_linear_symbol_examples():
    g = Grid(2 * np.pi, 16)  # k_j = j
    c = linear_symbol(g)
    assert c[0] == 0.0
    assert c[1] == 0.0
    g = Grid(2 * np.pi * np.sqrt(2), 16)  # k_1 = 1/sqrt(2) exactly
    assert abs(linear_symbol(g)[1] - 0.25) < 1e-15


@pytest.mark.parametrize("grid", GRIDS)
def test_mode_nearest_critical_is_maximum(grid):
    c = linear_symbol(grid)
    j = np.argmin(np.abs(np.abs(grid.wavenumbers) - 1 / np.sqrt(2)))
    assert c[j] == c.max()
    assert c.max() <= 0.25


@pytest.mark.parametrize("grid", GRIDS)
def test_dealias_mask(grid):
    m = DealiasMask(grid)
    assert np.array_equal(m.keep, np.abs(grid.signed_index) <= grid.n / 3)
    c = np.random.default_rng(0).standard_normal(grid.n) + 0j
    once = m.apply(c)
    assert np.array_equal(m.apply(once), once)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_multiplier_matrix_matches_fft(seed):
    g = Grid(22.0, 64)
    rng = np.random.default_rng(seed)
    sym = np.exp(0.1 * linear_symbol(g)) * derivative_symbol(g, 1)
    u = rng.standard_normal(64)
    ref = np.fft.ifft(sym * np.fft.fft(u)).real
    assert np.max(np.abs(multiplier_matrix(sym) @ u - ref)) < 1e-12 * max(1, np.max(np.abs(ref)))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([1, 2, 4]))
def test_operations_preserve_realness(seed, order):
    g = Grid(44.0, 64)
    c = forward_transform(PhysicalField(np.random.default_rng(seed).standard_normal(64), g))
    check_symmetry(c.coeffs)
    check_symmetry(spectral_derivative(c, order).coeffs)
