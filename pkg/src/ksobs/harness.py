"""Observability campaigns: cases, sensor layouts, metrics and ensemble statistics."""
from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .adjoint import (
    ObservationSet,
    decode_matrix,
    derivatives,
    encode_array,
    sample_observations,
    sub_gradient_matrix,
    truncate_to_control,
)
from .chaos import AttractorStats, attractor_samples, stats_from_samples
from .errors import BlowUpError
from .optim import LineSearchConfig, NcnConfig, bfgs, gradient_descent, modified_newton, run_reconstruction
from .presets import DomainPreset, get_preset
from .solver import SolverConfig, Trajectory, integrate, read_trajectory, write_trajectory
from .spectral import Grid

TAU = 0.95
LOSS_CUT = 1e-3
NEG_EIG_TOL = 1e-8


# -- layouts ------------------------------------------------------------------

@dataclass(frozen=True)
class SensorLayout:
    m_x: int
    m_t: int
    horizon_steps: int
    grid: Grid

    def __post_init__(self):
        if not 1 <= self.m_x <= self.grid.n:
            raise ValueError(f"m_x must lie in [1, {self.grid.n}]")
        if not 1 <= self.m_t <= self.horizon_steps:
            raise ValueError(f"m_t must lie in [1, K={self.horizon_steps}]")
        if len(set(self.sensor_nodes.tolist())) != self.m_x:
            raise ValueError(f"{self.m_x} sensors collide after snapping to {self.grid.n} nodes")

    @property
    def sensor_nodes(self) -> np.ndarray:
        """Sensors spaced L/m_x apart, centered in the domain, rounded to the nearest node."""
        L, n = self.grid.L, self.grid.n
        x = -0.5 * L + (np.arange(self.m_x) + 0.5) * L / self.m_x
        return np.floor((x + 0.5 * L) / self.grid.dx + 0.5).astype(int) % n

    @property
    def time_indices(self) -> np.ndarray:
        K = self.horizon_steps
        return np.array([int(math.floor(j * K / self.m_t + 0.5)) for j in range(1, self.m_t + 1)])

    @property
    def m(self) -> int:
        return self.m_x * self.m_t


# -- case sets ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CaseSet:
    preset: str
    bank: np.ndarray  # attractor samples, one per sample interval
    reference_indices: np.ndarray
    guess_indices: np.ndarray  # (refs, guesses) rows of the bank
    distances: np.ndarray  # D_ij, unnormalized
    attractor: AttractorStats
    seed: int
    sample_interval: float = 1.0
    targets: np.ndarray | None = None  # accepted target distances behind each guess

    @property
    def domain(self) -> DomainPreset:
        return get_preset(self.preset)

    @property
    def config(self) -> SolverConfig:
        return self.domain.config

    @property
    def radius(self) -> float:
        return self.attractor.radius

    def reference_state(self, i: int) -> np.ndarray:
        """Reference initial condition, truncated to the control modes so it is exactly representable."""
        return truncate_to_control(self.bank[self.reference_indices[i]], self.config)

    def guess_state(self, i: int, j: int) -> np.ndarray:
        return truncate_to_control(self.bank[self.guess_indices[i, j]], self.config)

    def save(self, stem) -> tuple:
        stem = Path(stem)
        stem.parent.mkdir(parents=True, exist_ok=True)
        traj = stem.with_suffix(".kstraj")
        write_trajectory(traj, self.bank, self.config.grid.L, self.sample_interval)
        manifest = {
            "preset": self.preset,
            "seed": self.seed,
            "rng": "numpy.random.Philox",
            "sample_interval": self.sample_interval,
            "burn_in": self.attractor.burn_in,
            "radius": self.radius,
            "reference_indices": [int(i) for i in self.reference_indices],
            "guess_indices": self.guess_indices.astype(int).tolist(),
            "distances": self.distances.tolist(),
            "targets": None if self.targets is None else self.targets.tolist(),
            "bank_file": traj.name,
        }
        js = stem.with_suffix(".json")
        js.write_text(json.dumps(manifest))
        return traj, js

    @classmethod
    def load(cls, stem) -> "CaseSet":
        stem = Path(stem)
        js = stem if stem.suffix == ".json" else stem.with_suffix(".json")
        manifest = json.loads(js.read_text())
        bank, L, dt = read_trajectory(js.with_name(manifest["bank_file"]))
        preset = get_preset(manifest["preset"])
        stats = stats_from_samples(bank, preset.config.grid, manifest["burn_in"])
        return cls(
            preset=manifest["preset"],
            bank=bank,
            reference_indices=np.array(manifest["reference_indices"], dtype=int),
            guess_indices=np.array(manifest["guess_indices"], dtype=int),
            distances=np.array(manifest["distances"], dtype=float),
            attractor=stats,
            seed=int(manifest["seed"]),
            sample_interval=float(dt),
            targets=None if manifest.get("targets") is None else np.array(manifest["targets"], dtype=float),
        )


def select_guesses(distances: np.ndarray, radius: float, count: int, rng, exclude: int,
                   lo: float = 0.01, hi: float = 1.0, max_draws: int | None = None):
    """Draw targets uniformly in [lo R, hi R] and take the closest-distance bank state each time.

    Candidates outside the band (and ``exclude`` itself) are never chosen;
    a target whose nearest candidate was already taken is redrawn. Returns the
    chosen bank indices and the accepted targets.
    """
    ok = (distances >= lo * radius) & (distances <= hi * radius)
    ok[exclude] = False
    cand = np.flatnonzero(ok)
    if cand.size < count:
        raise ValueError(f"only {cand.size} candidates in band for reference {exclude}")
    order = np.argsort(distances[cand])
    sorted_idx, sorted_d = cand[order], distances[cand][order]
    chosen, accepted, taken = [], [], set()
    draws = 0
    limit = max_draws if max_draws is not None else 200 * count
    while len(chosen) < count:
        if draws >= limit:
            raise ValueError(f"ran out of unique candidates for reference {exclude}")
        draws += 1
        target = rng.uniform(lo * radius, hi * radius)
        k = np.searchsorted(sorted_d, target)
        best = min((i for i in (k - 1, k) if 0 <= i < sorted_d.size), key=lambda i: abs(sorted_d[i] - target))
        idx = int(sorted_idx[best])
        if idx in taken:
            continue
        taken.add(idx)
        chosen.append(idx)
        accepted.append(target)
    return np.array(chosen, dtype=int), np.array(accepted)


def generate_case_set(preset: str, seed: int, n_refs: int = 20, n_guesses: int = 400,
                      total_time: float = 10000.0, burn_in: float = 1000.0, sample_interval: float = 1.0) -> CaseSet:
    domain = get_preset(preset)
    cfg = domain.config
    bank = attractor_samples(cfg, total_time, burn_in, sample_interval, seed=seed)
    stats = stats_from_samples(bank, cfg.grid, burn_in)
    rng = np.random.Generator(np.random.Philox(seed))
    refs = rng.choice(bank.shape[0], size=n_refs, replace=False)
    guesses = np.empty((n_refs, n_guesses), dtype=int)
    dists = np.empty((n_refs, n_guesses))
    targets = np.empty((n_refs, n_guesses))
    for i, r in enumerate(refs):
        D = np.linalg.norm(bank - bank[r], axis=1)
        try:
            guesses[i], targets[i] = select_guesses(D, stats.radius, n_guesses, rng, exclude=int(r))
        except ValueError as exc:
            raise ValueError(f"reference index {i}: {exc}") from None
        dists[i] = D[guesses[i]]
    return CaseSet(preset, bank, refs, guesses, dists, stats, seed, sample_interval, targets)


# -- metrics ------------------------------------------------------------------

def metric_e_u(u_truth, u_est, stats) -> float:
    radius = stats.radius if hasattr(stats, "radius") else float(stats)
    a = getattr(u_truth, "values", u_truth)
    b = getattr(u_est, "values", u_est)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)) / radius)


def metric_cs(traj_truth, traj_est, fraction_tail: float = 1.0) -> float:
    """Cosine similarity of the flattened last ceil(fraction_tail (K+1)) states."""
    A = np.asarray(getattr(traj_truth, "states", traj_truth), dtype=float)
    B = np.asarray(getattr(traj_est, "states", traj_est), dtype=float)
    if A.shape != B.shape:
        raise ValueError(f"trajectory shapes differ: {A.shape} vs {B.shape}")
    if not 0 < fraction_tail <= 1:
        raise ValueError("fraction_tail must lie in (0, 1]")
    keep = int(math.ceil(fraction_tail * A.shape[0] - 1e-12))
    a, b = A[-keep:].ravel(), B[-keep:].ravel()
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("cosine similarity undefined for a zero trajectory")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def normalized_measurement_count(m: float, d_M: float) -> float:
    """0 below d_M, linear up to 1 at the embedding count 2 d_M + 1."""
    if d_M < 1:
        raise ValueError("d_M must be at least 1")
    if m < d_M:
        return 0.0
    if m >= 2 * d_M + 1:
        return 1.0
    return (m - (d_M - 1)) / (2 * d_M + 1 - (d_M - 1))


# -- trials -------------------------------------------------------------------

@dataclass
class TrialResult:
    trial_id: str
    L: float
    ref: int
    guess: int
    m_x: int
    m_t: int
    optimizer: str
    pp: bool
    distance: float  # D_ij / R_A
    final_loss: float
    e_u: float
    cs_full: float
    cs_last75: float
    grad_norm: float
    hess_min_eig: float
    iters: int
    kappa_switches: int
    projections: int
    aborted: bool
    message: str = ""

    @property
    def m(self) -> int:
        return self.m_x * self.m_t


RESULT_COLUMNS = tuple(f.name for f in fields(TrialResult))


def trial_id(L, m_x, m_t, pp, ref, guess, optimizer="ncn") -> str:
    return f"L{L:g}-{m_x}x{m_t}-{optimizer}-{'pp' if pp else 'nopp'}-r{ref:02d}-g{guess:03d}"


@dataclass(frozen=True)
class TrialSpec:
    ref: int
    guess: int
    m_x: int
    m_t: int
    pp: bool = True
    optimizer: str = "ncn"


def case_observations(cases: CaseSet, ref: int, layout: SensorLayout):
    cfg = cases.config
    u_true = cases.reference_state(ref)
    truth = Trajectory(integrate(u_true, layout.horizon_steps, cfg), cfg)
    return truth, sample_observations(truth, layout)


def optimize(optimizer: str, theta0, obs, cfg: SolverConfig, pp: bool = True,
             ncn: NcnConfig = NcnConfig(), ls: LineSearchConfig = LineSearchConfig(), iters: int | None = None):
    ncn_cfg = ncn if pp else ncn.without_projection()
    if optimizer == "ncn":
        return run_reconstruction(theta0, obs, ncn_cfg, ls, config=cfg)
    if optimizer == "newton-mod":
        return modified_newton(theta0, obs, ncn_cfg, ls, config=cfg)
    if optimizer == "bfgs":
        return bfgs(theta0, obs, iters or ncn.max_iters, ls, config=cfg)
    if optimizer == "gd":
        return gradient_descent(theta0, obs, iters=iters or 5000, ls=ls, config=cfg)
    raise ValueError(f"unknown optimizer {optimizer!r}")


def run_trial(cases: CaseSet, spec: TrialSpec, ncn: NcnConfig = NcnConfig(),
              ls: LineSearchConfig = LineSearchConfig()) -> TrialResult:
    cfg = cases.config
    layout = SensorLayout(spec.m_x, spec.m_t, cases.domain.horizon_steps, cfg.grid)
    tid = trial_id(cfg.grid.L, spec.m_x, spec.m_t, spec.pp, spec.ref, spec.guess, spec.optimizer)
    truth, obs = case_observations(cases, spec.ref, layout)
    theta0 = encode_array(cases.guess_state(spec.ref, spec.guess), cfg.modes_control)
    dist = float(cases.distances[spec.ref, spec.guess] / cases.radius)
    nan = float("nan")
    try:
        res = optimize(spec.optimizer, theta0, obs, cfg, spec.pp, ncn, ls)
        u_est = decode_matrix(cfg) @ res.theta
        est = integrate(u_est, layout.horizon_steps, cfg)
        loss, g, H, _, _, _ = derivatives(res.theta, obs, cfg)
        min_eig = float(np.linalg.eigvalsh(0.5 * (H + H.T))[0])
        return TrialResult(
            tid, cfg.grid.L, spec.ref, spec.guess, spec.m_x, spec.m_t, spec.optimizer, spec.pp, dist,
            final_loss=float(loss),
            e_u=metric_e_u(truth.states[0], u_est, cases.radius),
            cs_full=metric_cs(truth.states, est, 1.0),
            cs_last75=metric_cs(truth.states, est, 0.75),
            grad_norm=float(np.linalg.norm(g)),
            hess_min_eig=min_eig,
            iters=len(res.trace),
            kappa_switches=res.trace.count("kappa"),
            projections=res.trace.count("pp"),
            aborted=res.aborted,
            message=res.message,
        )
    except (BlowUpError, FloatingPointError, np.linalg.LinAlgError, ValueError) as exc:
        return TrialResult(tid, cfg.grid.L, spec.ref, spec.guess, spec.m_x, spec.m_t, spec.optimizer, spec.pp,
                           dist, nan, nan, nan, nan, nan, nan, 0, 0, 0, True, f"{type(exc).__name__}: {exc}")


# -- campaign -----------------------------------------------------------------

@dataclass(frozen=True)
class CampaignFilter:
    n_refs: int = 5
    n_guesses: int = 40
    d_band: tuple = (0.0, 1.0)
    pp: tuple = (True,)
    optimizer: str = "ncn"


def campaign_specs(cases: CaseSet, layouts, filt: CampaignFilter = CampaignFilter()) -> list:
    specs = []
    lo, hi = filt.d_band
    for (m_x, m_t) in layouts:
        for pp in filt.pp:
            for i in range(min(filt.n_refs, cases.reference_indices.size)):
                for j in range(min(filt.n_guesses, cases.guess_indices.shape[1])):
                    d = cases.distances[i, j] / cases.radius
                    if lo <= d <= hi:
                        specs.append(TrialSpec(i, j, int(m_x), int(m_t), bool(pp), filt.optimizer))
    return specs


def _result_row(r: TrialResult) -> list:
    return [getattr(r, c) for c in RESULT_COLUMNS]


def _parse_row(row: dict) -> TrialResult:
    kw = {}
    for f in fields(TrialResult):
        v = row[f.name]
        if f.type in ("int",):
            kw[f.name] = int(v)
        elif f.type in ("float",):
            kw[f.name] = float(v)
        elif f.type in ("bool",):
            kw[f.name] = v in ("True", "true", "1")
        else:
            kw[f.name] = v
    return TrialResult(**kw)


def read_results(path) -> list:
    with open(path, newline="") as fh:
        return [_parse_row(row) for row in csv.DictReader(fh)]


def write_results(path, results) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_COLUMNS)
        for r in sorted(results, key=lambda r: r.trial_id):
            w.writerow(_result_row(r))


def _run_spec(args):
    stem, spec, ncn, ls = args
    return run_trial(_load_cached(stem), spec, ncn, ls)


_CASE_CACHE: dict = {}


def _load_cached(stem) -> CaseSet:
    key = str(stem)
    if key not in _CASE_CACHE:
        _CASE_CACHE[key] = CaseSet.load(stem)
    return _CASE_CACHE[key]


def run_campaign(cases: CaseSet, layouts, ncn: NcnConfig = NcnConfig(), filt: CampaignFilter = CampaignFilter(),
                 ls: LineSearchConfig = LineSearchConfig(), out_dir=None, jobs: int = 1,
                 case_stem=None, progress=None) -> list:
    """Run every selected trial; completed trial ids found in ``out_dir`` are reused.

    Results are journaled to ``out_dir/trials.jsonl`` as they finish and the
    ordered CSV ``out_dir/results.csv`` is rewritten at the end. With
    ``jobs > 1`` the case set must be on disk (``case_stem``) so workers can load it.
    """
    specs = campaign_specs(cases, layouts, filt)
    if not specs:
        if out_dir is not None:
            Path(out_dir).mkdir(parents=True, exist_ok=True)
            write_results(Path(out_dir) / "results.csv", [])
        return []
    L = cases.config.grid.L
    done = {}
    journal = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        journal = out / "trials.jsonl"
        if journal.exists():
            for line in journal.read_text().splitlines():
                if line.strip():
                    rec = json.loads(line)
                    done[rec["trial_id"]] = TrialResult(**rec)
    todo = [s for s in specs if trial_id(L, s.m_x, s.m_t, s.pp, s.ref, s.guess, s.optimizer) not in done]

    def record(res):
        done[res.trial_id] = res
        if journal is not None:
            with open(journal, "a") as fh:
                fh.write(json.dumps(asdict(res)) + "\n")
        if progress is not None:
            progress(res)

    if jobs > 1 and len(todo) > 1:
        if case_stem is None:
            raise ValueError("parallel campaigns need the case set on disk (case_stem)")
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for res in pool.map(_run_spec, [(case_stem, s, ncn, ls) for s in todo], chunksize=1):
                record(res)
    else:
        for s in todo:
            record(run_trial(cases, s, ncn, ls))
    wanted = {trial_id(L, s.m_x, s.m_t, s.pp, s.ref, s.guess, s.optimizer) for s in specs}
    results = sorted((done[t] for t in wanted), key=lambda r: r.trial_id)
    if out_dir is not None:
        write_results(Path(out_dir) / "results.csv", results)
    return results


# -- statistics ---------------------------------------------------------------

def _valid(results):
    return [r for r in results if not r.aborted and np.isfinite(r.final_loss)]


def conditional_success(results, tau: float = TAU, loss_cut: float = LOSS_CUT) -> dict:
    ok = _valid(results)
    low = [r for r in ok if r.final_loss < loss_cut]
    acc = [r for r in ok if r.cs_full >= tau]
    both = [r for r in low if r.cs_full >= tau]
    return {
        "trials": len(results),
        "valid": len(ok),
        "n_low_loss": len(low),
        "p_success_given_low_loss": len(both) / len(low) if low else None,
        "p_low_loss": len(low) / len(ok) if ok else None,
        "p_success": len(acc) / len(ok) if ok else None,
    }


@dataclass(frozen=True)
class EpsilonStarEstimate:
    tau: float
    delta: float
    epsilon_star: float | str
    search_range: tuple
    trial_count: int

    @property
    def exists(self) -> bool:
        return not isinstance(self.epsilon_star, str)


def epsilon_grid(lo: float = 1e-10, hi: float = 1e-3, per_decade: int = 64) -> np.ndarray:
    a, b = math.log10(lo), math.log10(hi)
    count = int(round((b - a) * per_decade))
    return np.array([10.0 ** (a + i / per_decade) for i in range(count + 1)])


def estimate_epsilon_star(results, tau: float = TAU, delta: float = 0.001, lo: float = 1e-10, hi: float = 1e-3,
                          per_decade: int = 64, min_samples: int = 20, min_trials: int = 100) -> EpsilonStarEstimate:
    """Largest grid epsilon with p(CS >= tau | J < epsilon) >= 1 - delta on >= ``min_samples`` trials.

    ``results`` holds TrialResults or (loss, cs) pairs.
    """
    pairs = [(r.final_loss, r.cs_full) if isinstance(r, TrialResult) else tuple(r) for r in results]
    pairs = [(l, c) for l, c in pairs if np.isfinite(l) and np.isfinite(c)]
    if len(pairs) < min_trials:
        raise ValueError(f"need at least {min_trials} trials, got {len(pairs)}")
    loss = np.array([p[0] for p in pairs])
    good = np.array([p[1] for p in pairs]) >= tau
    for eps in epsilon_grid(lo, hi, per_decade)[::-1]:
        sel = loss < eps
        k = int(sel.sum())
        if k >= min_samples and good[sel].mean() >= 1.0 - delta:
            return EpsilonStarEstimate(tau, delta, float(eps), (lo, hi), len(pairs))
    return EpsilonStarEstimate(tau, delta, "DNE", (lo, hi), len(pairs))


def curvature_statistics(results, decades=range(-16, 2), tol: float = NEG_EIG_TOL) -> list:
    """P(min Hessian eigenvalue < -tol) per terminal-loss decade; empty bins carry ``None``."""
    ok = [r for r in _valid(results) if np.isfinite(r.hess_min_eig)]
    rows = []
    for d in decades:
        lo, hi = 10.0**d, 10.0 ** (d + 1)
        sel = [r for r in ok if lo <= r.final_loss < hi]
        neg = sum(r.hess_min_eig < -tol for r in sel)
        rows.append({
            "loss_lo": lo,
            "loss_hi": hi,
            "count": len(sel),
            "p_negative": neg / len(sel) if sel else None,
            "empty": not sel,
        })
    return rows


def negative_curvature_probability(results, lo: float = 1e-2, hi: float = 1.0, tol: float = NEG_EIG_TOL):
    sel = [r for r in _valid(results) if lo <= r.final_loss <= hi and np.isfinite(r.hess_min_eig)]
    if not sel:
        return None, 0
    return sum(r.hess_min_eig < -tol for r in sel) / len(sel), len(sel)


def gradient_loss_correlation(results) -> float:
    ok = [r for r in _valid(results) if r.final_loss > 0 and r.grad_norm > 0]
    x = np.log([r.final_loss for r in ok])
    y = np.log([r.grad_norm for r in ok])
    return float(np.corrcoef(x, y)[0, 1])


def subgradient_conflict_report(theta, obs: ObservationSet, config: SolverConfig | None = None) -> dict:
    """Norms of the per-time sub-gradients g_k, of their sum, and ||sum g_k|| / sum ||g_k||."""
    cfg = config or theta.config
    th = getattr(theta, "real_coeffs", theta)
    G = sub_gradient_matrix(np.asarray(th, dtype=float), obs, cfg)
    return conflict_from_subgradients(G[obs.time_indices], obs.time_indices)


def conflict_from_subgradients(G: np.ndarray, times) -> dict:
    norms = np.linalg.norm(G, axis=1)
    total = np.linalg.norm(G.sum(axis=0))
    denom = norms.sum()
    return {
        "time_indices": [int(t) for t in times],
        "norms": norms.tolist(),
        "sum_norm": float(total),
        "cancellation_ratio": float(total / denom) if denom > 0 else float("nan"),
    }


def summarize(results, domain: DomainPreset, tau: float = TAU, loss_cut: float = LOSS_CUT,
              d_bands=((0.0, 0.2), (0.2, 0.4), (0.4, 0.6), (0.6, 0.8), (0.8, 1.0))) -> dict:
    """Summary tables keyed by (L, m_x, m_t), plus D-band breakdowns and epsilon*."""
    cells = {}
    keyf = lambda r: (r.L, r.m_x, r.m_t, r.optimizer, r.pp)
    for key in sorted({keyf(r) for r in results}):
        sel = [r for r in results if keyf(r) == key]
        L, m_x, m_t, opt, pp = key
        m = m_x * m_t
        cell = conditional_success(sel, tau, loss_cut)
        cell.update({"L": L, "m_x": m_x, "m_t": m_t, "m": m, "optimizer": opt, "pp": pp})
        if domain.d_manifold:
            cell["d_M"] = domain.d_manifold
            cell["m_tilde"] = normalized_measurement_count(m, domain.d_manifold)
        try:
            eps = estimate_epsilon_star(sel, tau)
            cell["epsilon_star"] = eps.epsilon_star
        except ValueError:
            cell["epsilon_star"] = None
        bands = []
        for lo, hi in d_bands:
            bs = [r for r in sel if lo <= r.distance <= hi] if hi >= 1.0 else [r for r in sel if lo <= r.distance < hi]
            b = conditional_success(bs, tau, loss_cut)
            b.update({"d_lo": lo, "d_hi": hi})
            bands.append(b)
        cell["d_bands"] = bands
        cell["median_e_u"] = float(np.median([r.e_u for r in _valid(sel)])) if _valid(sel) else None
        cells[f"L{L:g}-{m_x}x{m_t}-{opt}-{'pp' if pp else 'nopp'}"] = cell
    return {
        "cells": cells,
        "curvature": curvature_statistics(results),
        "gradient_loss_correlation": gradient_loss_correlation(results) if len(_valid(results)) > 2 else None,
    }
