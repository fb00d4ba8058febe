"""Lyapunov spectra (Benettin QR), Kaplan-Yorke dimension and attractor statistics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .adjoint import decode_matrix
from .errors import GuardError
from .solver import SolverConfig, check_state, integrate, propagator
from .spectral import PhysicalField

MIN_INTERVALS = 10


@dataclass(frozen=True, eq=False)
class LyapunovSpectrum:
    exponents: np.ndarray
    horizon: float
    reorth_interval: float
    d_ky: float
    t_lyap: float

    def to_record(self, config: SolverConfig) -> dict:
        return {
            "L": config.grid.L,
            "n": config.grid.n,
            "dt": config.dt,
            "horizon": self.horizon,
            "exponents": [float(x) for x in self.exponents],
            "d_ky": self.d_ky,
            "t_lyap": self.t_lyap,
        }


@dataclass(frozen=True, eq=False)
class AttractorStats:
    center: PhysicalField
    radius: float
    sample_count: int
    burn_in: float


def kaplan_yorke(exponents) -> float:
    """j + S_j / |l_{j+1}|, with j the largest index whose partial sum S_j is non-negative."""
    lam = np.sort(np.asarray(exponents, dtype=float))[::-1]
    csum = np.cumsum(lam)
    if lam.size == 0 or np.all(csum >= 0):
        raise ValueError("Kaplan-Yorke dimension needs a spectrum whose partial sums turn negative")
    nonneg = np.flatnonzero(csum >= 0)
    if nonneg.size == 0:
        return 0.0
    j = nonneg[-1] + 1  # number of exponents in the non-negative partial sum
    return float(j + csum[j - 1] / abs(lam[j]))


def random_initial_state(config: SolverConfig, seed: int, amplitude: float = 0.1) -> np.ndarray:
    """Small random field in the low control modes (Philox stream keyed by ``seed``)."""
    rng = np.random.Generator(np.random.Philox(seed))
    return decode_matrix(config) @ (amplitude * config.grid.n * rng.standard_normal(config.n_params) / 2)


def fourier_basis(n: int) -> np.ndarray:
    """Real Fourier directions as columns: mean, cos 1, sin 1, ..., cos(n/2 - 1), sin(n/2 - 1), Nyquist."""
    x = 2 * np.pi * np.arange(n) / n
    cols = [np.ones(n)]
    for j in range(1, n // 2):
        cols += [np.cos(j * x), np.sin(j * x)]
    cols.append(np.cos(n // 2 * x))
    return np.array(cols).T


def lyapunov_spectrum(config: SolverConfig, num_exponents: int, horizon: float = 1e5,
                      reorth_interval: float = 2.0, *, u0=None, seed: int = 0,
                      burn_in: float = 500.0, transient: float = 200.0, monitor=None) -> LyapunovSpectrum:
    """Leading Lyapunov exponents by QR re-orthonormalization of propagated tangents.

    The state is first run for ``burn_in`` time units; tangents then relax for
    ``transient`` time units before log|R_ii| is accumulated over ``horizon``.
    Tangents start as the leading Fourier directions (mean, cos 1, sin 1, ...).
    ``monitor(cycle, state, log_r)`` is called after every accumulated QR step
    with the log-stretching factors log|R_ii| of that interval.
    """
    n, dt = config.grid.n, config.dt
    if not 1 <= num_exponents <= n:
        raise GuardError(f"num_exponents must lie in [1, {n}]")
    if horizon < MIN_INTERVALS * reorth_interval:
        raise GuardError(f"horizon must cover at least {MIN_INTERVALS} re-orthonormalization intervals")
    per = max(1, int(round(reorth_interval / dt)))
    cycles = int(round(horizon / (per * dt)))
    warm_cycles = int(round(transient / (per * dt)))

    u = random_initial_state(config, seed) if u0 is None else np.asarray(u0, dtype=float)
    if burn_in > 0:
        u = integrate(u, int(round(burn_in / dt)), config, store=False)

    V, _ = np.linalg.qr(fourier_basis(n)[:, :num_exponents])

    prop = propagator(config)
    X = np.empty((n, 1 + num_exponents))
    X[:, 0] = u
    X[:, 1:] = V
    scratch = np.empty((4 * n, 1 + num_exponents))
    sums = np.zeros(num_exponents)
    step = 0
    for cycle in range(warm_cycles + cycles):
        for _ in range(per):
            X = prop.step_joint(X, scratch)
            step += 1
        check_state(X[:, 0], step)
        Q, R = np.linalg.qr(X[:, 1:])
        d = np.diag(R)
        if np.any(d == 0) or not np.all(np.isfinite(d)):
            raise FloatingPointError(f"degenerate tangent space at step {step}")
        sign = np.sign(d)
        X[:, 1:] = Q * sign
        if cycle >= warm_cycles:
            log_r = np.log(np.abs(d))
            sums += log_r
            if monitor is not None:
                monitor(cycle - warm_cycles, X[:, 0], log_r)
    total = cycles * per * dt
    exps = np.sort(sums / total)[::-1]
    try:
        dky = kaplan_yorke(exps)
    except ValueError:
        dky = float("nan")
    return LyapunovSpectrum(exps, total, per * dt, dky, float(1.0 / exps[0]) if exps[0] > 0 else float("inf"))


def stats_from_samples(samples: np.ndarray, grid, burn_in: float = 0.0) -> AttractorStats:
    samples = np.asarray(samples, dtype=float)
    center = samples.mean(axis=0)
    radius = float(np.mean(np.linalg.norm(samples - center, axis=1)))
    return AttractorStats(PhysicalField(center, grid), radius, samples.shape[0], burn_in)


def attractor_samples(config: SolverConfig, total_time: float = 10000.0, burn_in: float = 1000.0,
                      sample_interval: float = 1.0, *, seed: int = 0, u0=None) -> np.ndarray:
    """States at burn_in + interval, burn_in + 2 interval, ..., total_time."""
    if not total_time > burn_in:
        raise ValueError("total_time must exceed burn_in")
    dt = config.dt
    stride = int(round(sample_interval / dt))
    if stride < 1 or abs(stride * dt - sample_interval) > 1e-9 * max(1.0, sample_interval):
        raise ValueError("sample_interval must be a positive multiple of dt")
    count = int(round((total_time - burn_in) / sample_interval))
    u = random_initial_state(config, seed) if u0 is None else np.asarray(u0, dtype=float)
    u = integrate(u, int(round(burn_in / dt)), config, store=False)
    prop = propagator(config)
    out = np.empty((count, config.grid.n))
    step = 0
    for i in range(count):
        for _ in range(stride):
            u = prop.step(u)
            step += 1
        check_state(u, step)
        out[i] = u
    return out


def attractor_stats(config: SolverConfig, total_time: float = 10000.0, burn_in: float = 1000.0,
                    sample_interval: float = 1.0, *, seed: int = 0) -> AttractorStats:
    samples = attractor_samples(config, total_time, burn_in, sample_interval, seed=seed)
    return stats_from_samples(samples, config.grid, burn_in)
