"""ETDRK4 (Cox-Matthews) integration of the Kuramoto-Sivashinsky equation.

Two code paths compute the same map:

* ``step`` / ``nonlinear_term`` / ``step_jacobian_apply`` work on Fourier
  coefficients with FFTs and are the readable reference.
* ``Propagator`` assembles every Fourier multiplier as a dense real matrix in
  the physical basis. For n <= 72 a 64x64 matmul is several times cheaper than
  an FFT round trip, so rollouts, tangents, adjoints and Hessians use it.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from ._kernels import joint_step
from .errors import BlowUpError, GuardError
from .spectral import (
    DealiasMask,
    Grid,
    PhysicalField,
    SpectralField,
    linear_symbol,
    multiplier_matrix,
)

BLOWUP_LIMIT = 1e6
CONTOUR_POINTS = 32
CONTOUR_SWITCH = 0.5
DENSE_JACOBIAN_MAX_N = 256


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid
    dt: float
    modes_control: int

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        if not 1 <= self.modes_control <= self.grid.n // 2:
            raise ValueError(
                f"modes_control={self.modes_control} must lie in [1, n/2={self.grid.n // 2}]"
            )

    @property
    def dealias(self) -> DealiasMask:
        return DealiasMask(self.grid)

    @property
    def n_params(self) -> int:
        return 2 * self.modes_control - 1


# -- ETD coefficient tables ---------------------------------------------------

def _etd_weights_direct(z: np.ndarray):
    z = np.asarray(z, dtype=complex)
    ez = np.exp(z)
    q = (np.exp(z / 2) - 1.0) / z
    f1 = (-4.0 - z + ez * (4.0 - 3.0 * z + z**2)) / z**3
    f2 = (2.0 + z + ez * (z - 2.0)) / z**3
    f3 = (-4.0 - 3.0 * z - z**2 + ez * (4.0 - z)) / z**3
    return q, f1, f2, f3


def etd_weights(z: np.ndarray):
    """Dimensionless ETDRK4 weights (Q, f1, f2, f3) divided by dt at z = c*dt.

    Near z = 0 the closed forms cancel catastrophically, so for |z| <= 0.5 the
    value is the mean over a unit circle around z (Cauchy integral formula).
    """
    z = np.asarray(z, dtype=float)
    out = [np.empty_like(z) for _ in range(4)]
    small = np.abs(z) <= CONTOUR_SWITCH
    if np.any(~small):
        for o, w in zip(out, _etd_weights_direct(z[~small])):
            o[~small] = w.real
    if np.any(small):
        roots = np.exp(2j * np.pi * (np.arange(CONTOUR_POINTS) + 0.5) / CONTOUR_POINTS)
        r = z[small, None] + roots[None, :]
        for o, w in zip(out, _etd_weights_direct(r)):
            o[small] = w.mean(axis=1).real
    return tuple(out)


@dataclass(frozen=True, eq=False)
class EtdCoefficients:
    config: SolverConfig
    c: np.ndarray
    E: np.ndarray
    E2: np.ndarray
    Q: np.ndarray
    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray
    nonlinear_symbol: np.ndarray

    def __post_init__(self):
        for name in ("c", "E", "E2", "Q", "f1", "f2", "f3", "nonlinear_symbol"):
            getattr(self, name).setflags(write=False)


def precompute_coefficients(config: SolverConfig) -> EtdCoefficients:
    return _precompute_cached(config)


@lru_cache(maxsize=32)
def _precompute_cached(config: SolverConfig) -> EtdCoefficients:
    grid, dt = config.grid, config.dt
    c = linear_symbol(grid)
    z = c * dt
    q, f1, f2, f3 = etd_weights(z)
    g = -0.5j * grid.wavenumbers * config.dealias.keep
    return EtdCoefficients(
        config=config,
        c=c,
        E=np.exp(z),
        E2=np.exp(z / 2),
        Q=dt * q,
        f1=dt * f1,
        f2=dt * f2,
        f3=dt * f3,
        nonlinear_symbol=g,
    )


# -- spectral reference path --------------------------------------------------

def _nonlinear(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    u = np.fft.ifft(v).real
    return g * np.fft.fft(u * u)


def _nonlinear_tangent(v: np.ndarray, dv: np.ndarray, g: np.ndarray) -> np.ndarray:
    u = np.fft.ifft(v).real
    du = np.fft.ifft(dv).real
    return g * np.fft.fft(2.0 * u * du)


def nonlinear_term(u_hat: SpectralField, config: SolverConfig) -> SpectralField:
    """Dealiased spectral tendency -1/2 d/dx (u^2)."""
    coeffs = precompute_coefficients(config)
    return SpectralField(_nonlinear(u_hat.coeffs, coeffs.nonlinear_symbol), u_hat.grid)


def _step_spectral(v: np.ndarray, co: EtdCoefficients) -> np.ndarray:
    g = co.nonlinear_symbol
    nv = _nonlinear(v, g)
    a = co.E2 * v + co.Q * nv
    na = _nonlinear(a, g)
    b = co.E2 * v + co.Q * na
    nb = _nonlinear(b, g)
    c = co.E2 * a + co.Q * (2.0 * nb - nv)
    nc = _nonlinear(c, g)
    return co.E * v + co.f1 * nv + 2.0 * co.f2 * (na + nb) + co.f3 * nc


def _symmetrize(v: np.ndarray) -> np.ndarray:
    # Removes O(eps) asymmetry left by complex FFT arithmetic.
    n = v.shape[-1]
    return 0.5 * (v + np.conj(v[(-np.arange(n)) % n]))


def step(u_hat: SpectralField, coeffs: EtdCoefficients, step_index: int = 0) -> SpectralField:
    out = _symmetrize(_step_spectral(u_hat.coeffs, coeffs))
    if not np.all(np.isfinite(out)):
        raise BlowUpError(step_index + 1)
    return SpectralField(out, u_hat.grid)


def _step_tangent_spectral(v: np.ndarray, dv: np.ndarray, co: EtdCoefficients) -> np.ndarray:
    g = co.nonlinear_symbol
    nv = _nonlinear(v, g)
    dnv = _nonlinear_tangent(v, dv, g)
    a = co.E2 * v + co.Q * nv
    da = co.E2 * dv + co.Q * dnv
    na = _nonlinear(a, g)
    dna = _nonlinear_tangent(a, da, g)
    b = co.E2 * v + co.Q * na
    db = co.E2 * dv + co.Q * dna
    nb = _nonlinear(b, g)
    dnb = _nonlinear_tangent(b, db, g)
    c = co.E2 * a + co.Q * (2.0 * nb - nv)
    dc = co.E2 * da + co.Q * (2.0 * dnb - dnv)
    dnc = _nonlinear_tangent(c, dc, g)
    return co.E * dv + co.f1 * dnv + 2.0 * co.f2 * (dna + dnb) + co.f3 * dnc


def step_jacobian_apply(u_hat: SpectralField, v: SpectralField, coeffs: EtdCoefficients) -> SpectralField:
    """Directional derivative of ``step`` at ``u_hat`` along ``v``."""
    dv = _step_tangent_spectral(u_hat.coeffs, v.coeffs, coeffs)
    return SpectralField(_symmetrize(dv), u_hat.grid)


def step_jacobian_matrix(u_hat: SpectralField, coeffs: EtdCoefficients) -> np.ndarray:
    """Dense one-step Jacobian in the physical basis (column i = response to e_i)."""
    n = u_hat.grid.n
    if n > DENSE_JACOBIAN_MAX_N:
        raise GuardError(f"dense Jacobian limited to n <= {DENSE_JACOBIAN_MAX_N}, got {n}")
    J = np.empty((n, n))
    basis = np.fft.fft(np.eye(n), axis=0)
    for i in range(n):
        dv = _step_tangent_spectral(u_hat.coeffs, basis[:, i], coeffs)
        J[:, i] = np.fft.ifft(dv).real
    return J


# -- dense physical-space engine ----------------------------------------------

@dataclass(frozen=True)
class StepStages:
    """Stage states (u, a, b, c) of one ETDRK4 step, physical space."""

    u: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray


class Propagator:
    """ETDRK4 step and its derivatives as dense real operators.

    Stage algebra (all operators are Fourier multipliers, s = z*z elementwise):
        a   = E2 u + QG s_u
        b   = E2 u + QG s_a
        c   = E2 a + QG (2 s_b - s_u)
        out = E u + F1G s_u + F2G (s_a + s_b) + F3G s_c
    where G is the dealiased -1/2 d/dx and F2G already carries the factor 2.
    """

    def __init__(self, config: SolverConfig):
        self.config = config
        co = precompute_coefficients(config)
        self.coefficients = co
        n = config.grid.n
        self.n = n
        g = co.nonlinear_symbol
        E = multiplier_matrix(co.E)
        E2 = multiplier_matrix(co.E2)
        QG = multiplier_matrix(co.Q * g)
        F1G = multiplier_matrix(co.f1 * g)
        F2G = multiplier_matrix(2.0 * co.f2 * g)
        F3G = multiplier_matrix(co.f3 * g)
        self.E2 = np.ascontiguousarray(E2)
        self.F3G = np.ascontiguousarray(F3G)
        self.EE2 = np.ascontiguousarray(np.vstack([E, E2]))
        self.QF1 = np.ascontiguousarray(np.vstack([QG, F1G]))
        self.QF2 = np.ascontiguousarray(np.vstack([QG, F2G]))
        # transposed blocks for the adjoint sweep
        self.out_T = np.ascontiguousarray(np.vstack([E.T, F1G.T, F2G.T, F3G.T]))
        self.stage_T = np.ascontiguousarray(np.vstack([E2.T, QG.T]))

    # forward ---------------------------------------------------------------
    def step(self, u: np.ndarray) -> np.ndarray:
        n = self.n
        t = self.EE2 @ u
        Eu, E2u = t[:n], t[n:]
        r0 = self.QF1 @ (u * u)
        a = E2u + r0[:n]
        r1 = self.QF2 @ (a * a)
        b = E2u + r1[:n]
        r2 = self.QF2 @ (b * b)
        c = self.E2 @ a + 2.0 * r2[:n] - r0[:n]
        return Eu + r0[n:] + r1[n:] + r2[n:] + self.F3G @ (c * c)

    def step_stages(self, u: np.ndarray):
        """Step a single state, also returning its stage states."""
        n = self.n
        t = self.EE2 @ u
        Eu, E2u = t[:n], t[n:]
        r0 = self.QF1 @ (u * u)
        a = E2u + r0[:n]
        r1 = self.QF2 @ (a * a)
        b = E2u + r1[:n]
        r2 = self.QF2 @ (b * b)
        c = self.E2 @ a + 2.0 * r2[:n] - r0[:n]
        out = Eu + r0[n:] + r1[n:] + r2[n:] + self.F3G @ (c * c)
        return out, StepStages(u, a, b, c)

    def step_joint(self, X: np.ndarray, stages_out: np.ndarray | None = None) -> np.ndarray:
        """Advance column 0 (a state) and columns 1: (its tangents) together.

        The linear operators are shared, so one matmul serves all columns; the
        square nonlinearity becomes s = z0^2 for the state and 2 z0 dz for the
        tangents. If ``stages_out`` (4n x cols) is given, the stage values
        U, A, B, C are written into its row blocks.
        """
        X = np.ascontiguousarray(X, dtype=float)
        buf = np.empty((4 * self.n, X.shape[1])) if stages_out is None else stages_out
        return joint_step(self.EE2, self.QF1, self.QF2, self.E2, self.F3G, X, buf)

    # reverse ---------------------------------------------------------------
    def vjp(self, st: StepStages, w: np.ndarray, return_nodes: bool = False):
        """Transpose Jacobian of one step applied to ``w`` (vector or columns).

        With ``return_nodes`` also returns the cotangents of the four squared
        stage states, which weight the step's second derivative.
        """
        n = self.n
        u, a, b, c = st.u, st.a, st.b, st.c
        if w.ndim == 2:
            u, a, b, c = u[:, None], a[:, None], b[:, None], c[:, None]
        t = self.out_T @ w
        ubar = t[:n]
        s0 = t[n : 2 * n]
        sa = t[2 * n : 3 * n].copy()
        sb = t[2 * n : 3 * n].copy()
        sc = t[3 * n :]
        cbar = 2.0 * c * sc
        t = self.stage_T @ cbar
        abar = t[:n]
        sb += 2.0 * t[n:]
        s0 = s0 - t[n:]
        bbar = 2.0 * b * sb
        t = self.stage_T @ bbar
        ubar = ubar + t[:n]
        sa += t[n:]
        abar = abar + 2.0 * a * sa
        t = self.stage_T @ abar
        ubar = ubar + t[:n]
        s0 = s0 + t[n:]
        ubar = ubar + 2.0 * u * s0
        if return_nodes:
            return ubar, (s0, sa, sb, sc)
        return ubar

    def vjp_tangent(self, st: StepStages, nodes, dstages) -> np.ndarray:
        """Derivative of ``vjp(st, w)`` along tangent stages (dU, dA, dB, dC).

        Equals the second derivative of <w, step(u)> applied to the columns of
        dU. ``nodes`` are the square-node cotangents returned by ``vjp``.
        """
        s0, sa, sb, sc = (x[:, None] for x in nodes)
        u, a, b = st.u[:, None], st.a[:, None], st.b[:, None]
        dU, dA, dB, dC = dstages
        n = self.n
        dcbar = 2.0 * dC * sc
        t = self.stage_T @ dcbar
        dabar = t[:n]
        dsb = 2.0 * t[n:]
        ds0 = -t[n:]
        dbbar = 2.0 * dB * sb + 2.0 * b * dsb
        t = self.stage_T @ dbbar
        dubar = t[:n]
        dsa = t[n:]
        dabar = dabar + 2.0 * dA * sa + 2.0 * a * dsa
        t = self.stage_T @ dabar
        dubar = dubar + t[:n]
        ds0 = ds0 + t[n:]
        return dubar + 2.0 * dU * s0 + 2.0 * u * ds0


@lru_cache(maxsize=16)
def propagator(config: SolverConfig) -> Propagator:
    return Propagator(config)


def check_state(u: np.ndarray, step_index: int) -> None:
    m = np.max(np.abs(u))
    if not m <= BLOWUP_LIMIT:
        raise BlowUpError(step_index, f"state magnitude {m:.3e} at step {step_index}")


def integrate(u0: np.ndarray, steps: int, config: SolverConfig, store: bool = True) -> np.ndarray:
    """Roll out ``steps`` ETDRK4 steps from physical state ``u0`` (arrays in, arrays out)."""
    if steps < 0:
        raise ValueError("steps must be non-negative")
    prop = propagator(config)
    u = np.asarray(u0, dtype=float).copy()
    if store:
        out = np.empty((steps + 1, u.size))
        out[0] = u
    for k in range(steps):
        u = prop.step(u)
        check_state(u, k + 1)
        if store:
            out[k + 1] = u
    return out if store else u


# -- trajectories -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    config: SolverConfig

    def __post_init__(self):
        s = np.asarray(self.states, dtype=float)
        if s.ndim != 2 or s.shape[1] != self.config.grid.n:
            raise ValueError(f"states must have shape (K+1, {self.config.grid.n}), got {s.shape}")
        s.setflags(write=False)
        object.__setattr__(self, "states", s)

    def __len__(self):
        return self.states.shape[0]

    @property
    def steps(self) -> int:
        return self.states.shape[0] - 1

    def field(self, k: int) -> PhysicalField:
        return PhysicalField(self.states[k], self.config.grid)

    @property
    def last(self) -> PhysicalField:
        return self.field(-1)


def rollout(u0: PhysicalField, steps: int, config: SolverConfig) -> Trajectory:
    return Trajectory(integrate(u0.values, steps, config), config)


MAGIC = b"KSTRAJ01"
_HEADER = struct.Struct("<8sQQdd")


def write_trajectory(path, states: np.ndarray, L: float, dt: float) -> None:
    """Write the KSTRAJ01 binary layout: header then (K+1) x n float64, row-major."""
    states = np.ascontiguousarray(states, dtype="<f8")
    k1, n = states.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, n, k1, float(L), float(dt)))
        fh.write(states.tobytes())


def read_trajectory(path):
    """Return (states, L, dt) from a KSTRAJ01 file."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated header")
    magic, n, k1, L, dt = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * n * k1
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    states = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(k1, n).astype(float)
    return states, L, dt


TRAJECTORY_HEADER_BYTES = _HEADER.size
