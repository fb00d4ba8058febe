import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksobs.chaos import (
    attractor_samples,
    attractor_stats,
    fourier_basis,
    kaplan_yorke,
    lyapunov_spectrum,
    random_initial_state,
    stats_from_samples,
)
from ksobs.errors import GuardError
from ksobs.presets import PRESETS
from ksobs.spectral import Grid, linear_symbol

L22 = PRESETS["L22"].config


@pytest.mark.parametrize("exps, expected", [
    ((0.1, -0.2), 1.5),
    ((-1.0, -2.0), 0.0),
    ((0.05, 0.0, -0.02, -0.1), 3.3),
    ((-0.2, 0.1), 1.5),  # order of input does not matter
])
def test_kaplan_yorke_examples(exps, expected):
    assert kaplan_yorke(exps) == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("exps", [(0.1, 0.0), (0.3,), ()])
def test_kaplan_yorke_needs_negative_partial_sum(exps):
    with pytest.raises(ValueError):
        kaplan_yorke(exps)


@settings(max_examples=200)
@given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=20))
def test_kaplan_yorke_brackets(exps):
    lam = np.sort(exps)[::-1]
    if np.all(np.cumsum(lam) >= 0):
        return
    d = kaplan_yorke(lam)
    j = np.flatnonzero(np.cumsum(lam) >= 0)
    j = 0 if j.size == 0 else j[-1] + 1
    assert j <= d < j + 1 + 1e-12
    assert d >= np.sum(lam >= 0) - 1e-12 or np.sum(lam >= 0) > j


def mode_rates(config, count):
    # growth rate of each starting tangent direction: mean, cos 1, sin 1, cos 2, ...
    c = linear_symbol(config.grid)
    order = [0] + [j for j in range(1, config.grid.n // 2) for _ in (0, 1)] + [config.grid.n // 2]
    return np.sort(c[order[:count]])[::-1]


@pytest.mark.parametrize("name, count", [("L22", 6), ("L22", 16), ("L44", 24), ("L66", 12)])
def test_linear_system_exponents(name, count):
    # at u = 0 the propagator is diagonal in Fourier space, so each tangent keeps its own rate;
    # directions damped below round-off within one interval are left out
    cfg = PRESETS[name].config
    spec = lyapunov_spectrum(cfg, count, horizon=40.0, u0=np.zeros(cfg.grid.n), burn_in=0.0, transient=0.0)
    assert np.max(np.abs(spec.exponents - mode_rates(cfg, count))) < 1e-8


def test_fourier_basis_is_orthogonal():
    B = fourier_basis(16)
    G = B.T @ B
    assert B.shape == (16, 16)
    assert np.allclose(G, np.diag(np.diag(G)), atol=1e-12)


def test_spectrum_sorted_and_dissipative():
    spec = lyapunov_spectrum(L22, 24, horizon=100.0, burn_in=100.0, transient=20.0)
    assert np.all(np.diff(spec.exponents) <= 0)
    assert spec.exponents.sum() < 0
    assert spec.d_ky >= np.sum(spec.exponents >= 0) - 1
    assert spec.t_lyap == pytest.approx(1 / spec.exponents[0])


def test_monitor_sees_every_accumulated_interval():
    seen = []
    spec = lyapunov_spectrum(L22, 4, horizon=40.0, burn_in=10.0, transient=4.0,
                             monitor=lambda c, u, lr: seen.append((c, u.copy(), lr.copy())))
    assert [c for c, _, _ in seen] == list(range(20))
    total = np.sum([lr for _, _, lr in seen], axis=0) / spec.horizon
    assert np.allclose(np.sort(total)[::-1], spec.exponents, rtol=0, atol=1e-14)
    assert seen[-1][1].shape == (64,)


def test_short_run_record():
    spec = lyapunov_spectrum(L22, 12, horizon=400.0, burn_in=100.0, transient=50.0)
    rec = spec.to_record(L22)
    assert set(rec) == {"L", "n", "dt", "horizon", "exponents", "d_ky", "t_lyap"}
    assert rec["horizon"] == pytest.approx(400.0) and len(rec["exponents"]) == 12


@pytest.mark.parametrize("kw", [dict(num_exponents=0), dict(num_exponents=65), dict(horizon=10.0)])
def test_lyapunov_guards(kw):
    args = dict(num_exponents=4, horizon=100.0, reorth_interval=2.0)
    args.update(kw)
    with pytest.raises(GuardError):
        lyapunov_spectrum(L22, **args)


def test_constant_samples():
    g = Grid(22.0, 8)
    st_ = stats_from_samples(np.full((5, 8), 1.5), g)
    assert np.all(st_.center.values == 1.5) and st_.radius == 0.0 and st_.sample_count == 5


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_radius_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    g = Grid(22.0, 8)
    s = rng.standard_normal((30, 8))
    a = stats_from_samples(s, g).radius
    b = stats_from_samples(s[rng.permutation(30)], g).radius
    assert a == pytest.approx(b, rel=1e-13)


def test_sample_count_matches_window():
    s = attractor_samples(L22, total_time=150.0, burn_in=100.0, sample_interval=2.0, seed=1)
    assert s.shape == (25, 64)
    with pytest.raises(ValueError):
        attractor_samples(L22, total_time=100.0, burn_in=100.0)
    with pytest.raises(ValueError):
        attractor_samples(L22, total_time=200.0, burn_in=100.0, sample_interval=0.15)


def test_radius_stable_across_seeds():
    a = attractor_stats(L22, seed=1)
    b = attractor_stats(L22, seed=2)
    assert a.radius > 0 and a.sample_count == 9000
    assert abs(a.radius - b.radius) < 0.05 * a.radius


def test_random_initial_state_reproducible():
    a = random_initial_state(L22, 5)
    assert np.array_equal(a, random_initial_state(L22, 5))
    assert not np.array_equal(a, random_initial_state(L22, 6))
