"""Ensemble properties of the cached desk-scale L=22 campaign (see conftest.campaign_results)."""
import math

import numpy as np
import pytest

from conftest import CACHE, campaign_results, cell
from ksobs.adjoint import encode_array
from ksobs.harness import (
    CaseSet,
    SensorLayout,
    case_observations,
    conditional_success,
    estimate_epsilon_star,
    optimize,
    subgradient_conflict_report,
)

LAYOUTS = [(2, 2), (4, 2), (4, 4), (8, 4)]  # m = 4, 8, 16, 32


@pytest.fixture(scope="module")
def campaign():
    return campaign_results()


def test_observability_monotone_in_m(campaign):
    stats = [conditional_success(cell(campaign["pp"], *lay)) for lay in LAYOUTS]
    p = [s["p_success_given_low_loss"] for s in stats]
    n = [s["n_low_loss"] for s in stats]
    assert all(v is not None for v in p)
    inversions = 0
    for a in range(len(p) - 1):
        if p[a + 1] < p[a]:
            sigma = math.sqrt(p[a] * (1 - p[a]) / n[a] + p[a + 1] * (1 - p[a + 1]) / n[a + 1])
            assert p[a] - p[a + 1] <= 2 * sigma, (p, n)
            inversions += 1
    assert inversions <= 1, (p, n)


def test_epsilon_star_grows_with_m(campaign):
    e32 = estimate_epsilon_star(cell(campaign["pp"], 8, 4)).epsilon_star
    e8 = estimate_epsilon_star(cell(campaign["pp"], 4, 2)).epsilon_star
    if isinstance(e32, str) or isinstance(e8, str):
        pytest.skip(f"epsilon* missing: m=32 {e32}, m=8 {e8}")
    assert e32 > e8


@pytest.mark.parametrize("layout", LAYOUTS)
def test_epsilon_star_holds_on_held_out_trials(campaign, layout):
    delta = 0.001
    trials = [r for r in cell(campaign["pp"], *layout) if np.isfinite(r.final_loss)]
    fit = [r for r in trials if r.guess % 2 == 0]
    held = [r for r in trials if r.guess % 2 == 1]
    est = estimate_epsilon_star(fit, delta=delta, min_trials=len(fit) // 2)
    if not est.exists:
        pytest.skip(f"no epsilon* on the fitting half for {layout}")
    sel = [r for r in held if r.final_loss < est.epsilon_star]
    if not sel:
        pytest.skip("no held-out trial below epsilon*")
    rate = np.mean([r.cs_full >= 0.95 for r in sel])
    assert rate >= 1 - 2 * delta, (est.epsilon_star, rate, len(sel))


def test_stalled_trial_sub_gradients_cancel(campaign):
    # a trial stuck on a loss plateau with a vanishing gradient, rerun to recover its final iterate
    stalled = [r for rs in campaign.values() for r in rs
               if not r.aborted and r.final_loss > 1e-3 and r.grad_norm < 1e-3 * r.final_loss]
    assert stalled
    r = min(stalled, key=lambda r: r.grad_norm / r.final_loss)
    cases = CaseSet.load(CACHE / "cases_L22")
    cfg = cases.config
    layout = SensorLayout(r.m_x, r.m_t, cases.domain.horizon_steps, cfg.grid)
    _, obs = case_observations(cases, r.ref, layout)
    res = optimize(r.optimizer, encode_array(cases.guess_state(r.ref, r.guess), cfg.modes_control), obs, cfg, r.pp)
    assert res.loss == pytest.approx(r.final_loss, rel=1e-6)
    rep = subgradient_conflict_report(res.theta, obs, cfg)
    assert rep["cancellation_ratio"] < 0.1, rep
