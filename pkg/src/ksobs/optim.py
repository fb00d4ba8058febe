"""Gradient descent, modified Newton, BFGS and non-convex Newton (NCN).

The optimizers see the problem through an objective with ``value``,
``value_and_gradient`` and ``value_gradient_hessian`` methods, so the same code
runs on the KS reconstruction loss and on synthetic quadratics.

NCN preconditions with |H|^-1 = Q diag(1/max(|lambda_i|, delta)) Q^T, where
delta = lambda_1 / kappa. kappa starts low and is raised once the Newton
decrement g^T |H|^-1 g falls below ``stall_ratio`` times the loss; it returns
to the low value whenever a pseudo-projection (a short forward integration of
the candidate initial state) fires.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adjoint import ControlVector, ObservationSet, decode_matrix, derivatives, encode_array
from .adjoint import loss_and_gradient, loss_value
from .errors import BlowUpError, GuardError
from .solver import SolverConfig, integrate

PP_MAX_HORIZON_FRACTION = 0.1


@dataclass(frozen=True)
class LineSearchConfig:
    armijo_c: float = 1e-4
    shrink: float = 0.5
    eta0: float = 1.0
    max_backtracks: int = 40

    def __post_init__(self):
        if not 0 < self.armijo_c < 1:
            raise ValueError("armijo_c must lie in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must lie in (0, 1)")
        if not self.eta0 > 0 or self.max_backtracks < 0:
            raise ValueError("eta0 must be positive and max_backtracks non-negative")


@dataclass(frozen=True)
class NcnConfig:
    kappa_low: float = 1e3
    kappa_high: float = 1e5
    stall_ratio: float = 0.01
    max_iters: int = 350
    pp_schedule: tuple = (50, 100, 150)
    pp_steps: int | None = None  # None: one time unit, round(1/dt) steps

    def __post_init__(self):
        if not 0 < self.kappa_low <= self.kappa_high:
            raise ValueError("need 0 < kappa_low <= kappa_high")
        sched = tuple(int(i) for i in self.pp_schedule)
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("pp_schedule must be strictly increasing")
        if sched and (sched[0] < 0 or sched[-1] >= self.max_iters):
            raise ValueError("pp_schedule entries must lie in [0, max_iters)")
        object.__setattr__(self, "pp_schedule", sched)

    def without_projection(self) -> "NcnConfig":
        return NcnConfig(self.kappa_low, self.kappa_high, self.stall_ratio, self.max_iters, (), self.pp_steps)

    def projection_steps(self, dt: float) -> int:
        return self.pp_steps if self.pp_steps is not None else max(1, int(round(1.0 / dt)))


# -- trace --------------------------------------------------------------------

TRACE_COLUMNS = ("iter", "loss", "grad_norm", "quad_form", "step_norm", "kappa", "event")


@dataclass
class IterationTrace:
    iters: list = field(default_factory=list)
    loss: list = field(default_factory=list)
    grad_norm: list = field(default_factory=list)
    quad_form: list = field(default_factory=list)
    step_norm: list = field(default_factory=list)
    kappa: list = field(default_factory=list)
    events: list = field(default_factory=list)

    def record(self, it, loss, grad_norm=np.nan, quad_form=np.nan, step_norm=0.0, kappa=np.nan, events=()):
        self.iters.append(int(it))
        self.loss.append(float(loss))
        self.grad_norm.append(float(grad_norm))
        self.quad_form.append(float(quad_form))
        self.step_norm.append(float(step_norm))
        self.kappa.append(float(kappa))
        self.events.append("|".join(events))

    def __len__(self):
        return len(self.iters)

    def count(self, event: str) -> int:
        return sum(event in e.split("|") for e in self.events)

    def rows(self):
        return zip(self.iters, self.loss, self.grad_norm, self.quad_form, self.step_norm, self.kappa, self.events)

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for row in self.rows():
                w.writerow([row[0], *(repr(v) for v in row[1:6]), row[6]])


@dataclass
class OptimizeResult:
    theta: np.ndarray
    loss: float
    trace: IterationTrace
    aborted: bool = False
    message: str = ""


# -- objectives ---------------------------------------------------------------

class ReconstructionObjective:
    """The KS observation loss over the real control vector."""

    def __init__(self, obs: ObservationSet, config: SolverConfig):
        obs.check_grid(config.grid.n)
        self.obs = obs
        self.config = config

    def value(self, theta):
        return loss_value(theta, self.obs, self.config)

    def value_and_gradient(self, theta):
        L, g, _ = loss_and_gradient(theta, self.obs, self.config)
        return L, g

    def value_gradient_hessian(self, theta):
        L, g, H, _, _, _ = derivatives(theta, self.obs, self.config, method="split")
        return L, g, H

    def project(self, theta, j_steps):
        return _project_array(theta, self.config, j_steps)


class QuadraticObjective:
    """0.5 (x - x*)^T H (x - x*) + floor, for oracle tests."""

    def __init__(self, H, x_star, floor: float = 0.0):
        self.H = np.asarray(H, dtype=float)
        self.x_star = np.asarray(x_star, dtype=float)
        self.floor = floor

    def value(self, x):
        d = x - self.x_star
        return 0.5 * d @ self.H @ d + self.floor

    def value_and_gradient(self, x):
        g = self.H @ (x - self.x_star)
        return 0.5 * (x - self.x_star) @ g + self.floor, g

    def value_gradient_hessian(self, x):
        L, g = self.value_and_gradient(x)
        return L, g, self.H


def _safe_value(objective, theta) -> float:
    try:
        v = objective.value(theta)
    except (BlowUpError, FloatingPointError):
        return np.inf
    return v if np.isfinite(v) else np.inf


# -- line search --------------------------------------------------------------

def armijo(objective, theta, loss, g, step, ls: LineSearchConfig, eta0: float | None = None):
    """Backtrack until J(theta + eta step) <= J + c eta g^T step.

    Returns (eta, new_loss); eta = 0 when ``step`` is not a descent direction
    or no trial point satisfies the condition.
    """
    slope = float(g @ step)
    if not slope < 0:
        return 0.0, loss
    eta = ls.eta0 if eta0 is None else eta0
    for _ in range(ls.max_backtracks + 1):
        trial = _safe_value(objective, theta + eta * step)
        if trial <= loss + ls.armijo_c * eta * slope:
            return eta, trial
        eta *= ls.shrink
    return 0.0, loss


def _quadratic_refine(objective, theta, loss, slope, step, eta, new_loss):
    """One interpolation step along ``step``; exact when J is quadratic on the line."""
    curv = 2.0 * (new_loss - loss - slope * eta) / eta**2
    if not curv > 0:
        return eta, new_loss
    eta_q = -slope / curv
    trial = _safe_value(objective, theta + eta_q * step)
    if trial < new_loss:
        return eta_q, trial
    return eta, new_loss


# -- step rules ---------------------------------------------------------------

@dataclass(frozen=True)
class StepDiagnostics:
    quad_form: float
    clipped: int
    fallback: bool
    lambda1: float


def ncn_step(g: np.ndarray, H: np.ndarray, kappa: float):
    """Step -|H|^-1 g with eigenvalues floored at delta = lambda_1 / kappa.

    Falls back to the normalized negative gradient when lambda_1 <= 0 or the
    eigendecomposition fails.
    """
    g = np.asarray(g, dtype=float)
    try:
        lam, Q = np.linalg.eigh(0.5 * (H + H.T))
        ok = np.all(np.isfinite(lam)) and lam[-1] > 0
    except np.linalg.LinAlgError:
        ok = False
    gn = np.linalg.norm(g)
    if not ok:
        step = -g / gn if gn > 0 else np.zeros_like(g)
        return step, StepDiagnostics(float(g @ -step), 0, True, float("nan"))
    delta = lam[-1] / kappa
    mag = np.abs(lam)
    clipped = int(np.sum(mag < delta))
    lam_abs = np.maximum(mag, delta)
    qg = Q.T @ g
    step = -Q @ (qg / lam_abs)
    return step, StepDiagnostics(float(qg @ (qg / lam_abs)), clipped, False, float(lam[-1]))


def modified_newton_step(g: np.ndarray, H: np.ndarray, delta: float) -> np.ndarray:
    """Newton step keeping eigenvalue signs, dropping directions with |lambda| < delta."""
    lam, Q = np.linalg.eigh(0.5 * (H + H.T))
    keep = np.abs(lam) >= delta
    s = np.zeros_like(lam)
    s[keep] = 1.0 / lam[keep]
    return -Q @ (s * (Q.T @ g))


def _modified_newton_rule(g, H, kappa):
    lam = np.linalg.eigvalsh(0.5 * (H + H.T))
    top = lam[-1] if lam[-1] > 0 else np.max(np.abs(lam))
    step = modified_newton_step(g, H, top / kappa)
    return step, StepDiagnostics(float(-(g @ step)), int(np.sum(np.abs(lam) < top / kappa)), False, float(lam[-1]))


# -- drivers ------------------------------------------------------------------

def _second_order_loop(objective, theta0, rule: Callable, ncn: NcnConfig, ls: LineSearchConfig, j_steps: int):
    theta = np.array(theta0, dtype=float)
    trace = IterationTrace()
    kappa = ncn.kappa_low
    best_theta, best_loss = theta.copy(), np.inf
    pp = set(ncn.pp_schedule)
    it = 0
    try:
        while it < ncn.max_iters:
            if it in pp:
                theta = objective.project(theta, j_steps)
                kappa = ncn.kappa_low
                loss = objective.value(theta)
                trace.record(it, loss, kappa=kappa, events=("pp",))
                if loss < best_loss:
                    best_loss, best_theta = loss, theta.copy()
                it += 1
                continue
            loss, g, H = objective.value_gradient_hessian(theta)
            if loss < best_loss:
                best_loss, best_theta = loss, theta.copy()
            events = []
            step, diag = rule(g, H, kappa)
            if kappa < ncn.kappa_high and loss > 0 and diag.quad_form / loss < ncn.stall_ratio:
                kappa = ncn.kappa_high
                events.append("kappa")
                step, diag = rule(g, H, kappa)
            if diag.fallback:
                events.append("fallback")
            eta, new_loss = armijo(objective, theta, loss, g, step, ls)
            gnorm = float(np.linalg.norm(g))
            if eta == 0.0:
                events.append("ls_fail")
                # Nothing changes until the next projection, so the following
                # iterations would repeat this one exactly.
                nxt = min([p for p in pp if p > it] + [ncn.max_iters])
                for k in range(it, nxt):
                    trace.record(k, loss, gnorm, diag.quad_form, 0.0, kappa, events)
                it = nxt
                continue
            trace.record(it, loss, gnorm, diag.quad_form, eta * np.linalg.norm(step), kappa, events)
            theta = theta + eta * step
            if new_loss < best_loss:
                best_loss, best_theta = new_loss, theta.copy()
            it += 1
        final = objective.value(theta)
        trace.record(ncn.max_iters, final, kappa=kappa, events=("final",))
        if final < best_loss:
            best_loss, best_theta = final, theta.copy()
    except BlowUpError as exc:
        return OptimizeResult(best_theta, best_loss, trace, aborted=True, message=str(exc))
    return OptimizeResult(best_theta, best_loss, trace)


def _as_array(theta):
    return theta.real_coeffs if isinstance(theta, ControlVector) else np.asarray(theta, dtype=float)


def _objective(obs, theta, config):
    if isinstance(obs, ObservationSet):
        cfg = config or (theta.config if isinstance(theta, ControlVector) else None)
        if cfg is None:
            raise ValueError("a SolverConfig is required when theta is a plain array")
        return ReconstructionObjective(obs, cfg)
    return obs


def run_reconstruction(theta0, obs, ncn: NcnConfig = NcnConfig(), ls: LineSearchConfig = LineSearchConfig(),
                       config: SolverConfig | None = None) -> OptimizeResult:
    """NCN with the kappa schedule and scheduled pseudo-projections; returns the best-loss iterate.

    ``obs`` is an ObservationSet (with ``theta0`` a ControlVector or ``config``
    given) or any objective object.
    """
    objective = _objective(obs, theta0, config)
    dt = objective.config.dt if hasattr(objective, "config") else 1.0
    return _second_order_loop(objective, _as_array(theta0), ncn_step, ncn, ls, ncn.projection_steps(dt))


def modified_newton(theta0, obs, ncn: NcnConfig = NcnConfig(), ls: LineSearchConfig = LineSearchConfig(),
                    config: SolverConfig | None = None) -> OptimizeResult:
    """Same loop as NCN but with signed, truncated eigenvalues (uphill steps get eta = 0)."""
    objective = _objective(obs, theta0, config)
    dt = objective.config.dt if hasattr(objective, "config") else 1.0
    return _second_order_loop(objective, _as_array(theta0), _modified_newton_rule, ncn, ls, ncn.projection_steps(dt))


def bfgs(theta0, obs, max_iters: int = 350, ls: LineSearchConfig = LineSearchConfig(),
         config: SolverConfig | None = None, tol: float = 0.0) -> OptimizeResult:
    """BFGS on the inverse Hessian approximation, reset to I when s^T y <= 0."""
    objective = _objective(obs, theta0, config)
    theta = _as_array(theta0).copy()
    d = theta.size
    Hinv = np.eye(d)
    trace = IterationTrace()
    try:
        loss, g = objective.value_and_gradient(theta)
        best_theta, best_loss = theta.copy(), loss
        for it in range(max_iters):
            gnorm = float(np.linalg.norm(g))
            if gnorm <= tol or loss == 0.0:
                trace.record(it, loss, gnorm, events=("converged",))
                break
            events = []
            step = -Hinv @ g
            slope = float(g @ step)
            if not slope < 0:
                Hinv = np.eye(d)
                step, slope = -g, -float(g @ g)
                events.append("reset")
            eta, new_loss = armijo(objective, theta, loss, g, step, ls)
            if eta > 0:
                eta, new_loss = _quadratic_refine(objective, theta, loss, slope, step, eta, new_loss)
            if eta == 0.0:
                events.append("ls_fail")
                trace.record(it, loss, gnorm, -slope, 0.0, events=events)
                if np.array_equal(Hinv, np.eye(d)):
                    break  # an identity-preconditioned failure would repeat forever
                Hinv = np.eye(d)
                continue
            s = eta * step
            new_theta = theta + s
            new_loss, new_g = objective.value_and_gradient(new_theta)
            y = new_g - g
            sy = float(s @ y)
            if sy > 0:
                rho = 1.0 / sy
                V = np.eye(d) - rho * np.outer(s, y)
                Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
            else:
                Hinv = np.eye(d)
                events.append("reset")
            trace.record(it, loss, gnorm, -slope, float(np.linalg.norm(s)), events=events)
            theta, loss, g = new_theta, new_loss, new_g
            if loss < best_loss:
                best_theta, best_loss = theta.copy(), loss
        trace.record(len(trace), loss, float(np.linalg.norm(g)), events=("final",))
    except BlowUpError as exc:
        return OptimizeResult(best_theta, best_loss, trace, aborted=True, message=str(exc))
    return OptimizeResult(best_theta, best_loss, trace)


def gradient_descent(theta0, obs, eta: float = 1.0, iters: int = 5000, line_search: bool = True,
                     ls: LineSearchConfig = LineSearchConfig(), config: SolverConfig | None = None) -> OptimizeResult:
    """Steepest descent.

    With ``line_search`` each iteration backtracks from twice the previous
    accepted step (starting at ``eta``); otherwise the fixed step ``eta`` is used.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    objective = _objective(obs, theta0, config)
    theta = _as_array(theta0).copy()
    trace = IterationTrace()
    try:
        loss, g = objective.value_and_gradient(theta)
        best_theta, best_loss = theta.copy(), loss
        eta_try = eta
        for it in range(iters):
            gnorm = float(np.linalg.norm(g))
            if gnorm == 0.0:
                trace.record(it, loss, gnorm, events=("converged",))
                break
            if line_search:
                h, _ = armijo(objective, theta, loss, g, -g, ls, eta0=eta_try)
                if h == 0.0:
                    trace.record(it, loss, gnorm, gnorm**2, 0.0, events=("ls_fail",))
                    break
                eta_try = 2.0 * h
            else:
                h = eta
            theta = theta - h * g
            trace.record(it, loss, gnorm, gnorm**2, h * gnorm)
            loss, g = objective.value_and_gradient(theta)
            if loss < best_loss:
                best_theta, best_loss = theta.copy(), loss
        trace.record(len(trace), loss, float(np.linalg.norm(g)), events=("final",))
    except BlowUpError as exc:
        return OptimizeResult(best_theta, best_loss, trace, aborted=True, message=str(exc))
    if line_search:
        return OptimizeResult(best_theta, best_loss, trace)
    return OptimizeResult(theta, loss, trace)


# -- pseudo-projection --------------------------------------------------------

def _project_array(theta: np.ndarray, config: SolverConfig, j_steps: int) -> np.ndarray:
    u = decode_matrix(config) @ theta
    u = integrate(u, j_steps, config, store=False)
    return encode_array(u, config.modes_control)


def pseudo_projection(theta: ControlVector, j_steps: int, horizon_steps: int | None = None) -> ControlVector:
    """Decode, integrate ``j_steps`` forward and re-encode through the p-mode truncation."""
    if j_steps < 0:
        raise ValueError("j_steps must be non-negative")
    if horizon_steps is not None and j_steps > PP_MAX_HORIZON_FRACTION * horizon_steps:
        raise GuardError(
            f"pseudo-projection of {j_steps} steps exceeds {PP_MAX_HORIZON_FRACTION:.0%} "
            f"of the {horizon_steps}-step horizon"
        )
    return theta.with_values(_project_array(theta.real_coeffs, theta.config, j_steps))
