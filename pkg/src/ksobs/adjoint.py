"""Pointwise observations, the mean-squared loss and its exact derivatives.

Everything is differentiated with respect to the real control vector theta,
which holds the first p unnormalized Fourier coefficients of the initial
state. Gradients come from the backward adjoint recursion

    lam_K = (2/m) M_K r_K,   lam_k = J_k^T lam_{k+1} + (2/m) M_k r_k,   g = T^T lam_0

with T = du_0/dtheta. The Hessian is available two ways: the second-order
adjoint recursion (forward sensitivities S_k = du_k/dtheta carried alongside
the state, matrix-valued adjoint Lambda_k propagated backwards) and the split
H = H_GN + H_C, which sums the measurement term (2/m) S^T M S and the
residual-weighted second derivatives of every step.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import GuardError
from .solver import Propagator, SolverConfig, StepStages, Trajectory, check_state, propagator
from .spectral import PhysicalField

HESSIAN_MAX_PARAMS = 64
RANK_RTOL = 1e-12


# -- control encoding ---------------------------------------------------------

@lru_cache(maxsize=16)
def _decode_matrix(n: int, p: int) -> np.ndarray:
    P = 2 * p - 1
    coeffs = np.zeros((n, P), dtype=complex)
    coeffs[0, 0] = 1.0
    for j in range(1, p):
        coeffs[j, 2 * j - 1] = 1.0
        coeffs[n - j, 2 * j - 1] = 1.0
        coeffs[j, 2 * j] = 1j
        coeffs[n - j, 2 * j] = -1j
    T = np.fft.ifft(coeffs, axis=0).real
    # the mode p = n/2 would have no imaginary part; p <= n/2 - 1 in practice
    T.setflags(write=False)
    return T


def decode_matrix(config: SolverConfig) -> np.ndarray:
    """Real n x (2p-1) matrix T with u_theta = T theta."""
    return _decode_matrix(config.grid.n, config.modes_control)


def encode_array(u: np.ndarray, p: int) -> np.ndarray:
    c = np.fft.fft(np.asarray(u, dtype=float))[:p]
    out = np.empty(2 * p - 1)
    out[0] = c[0].real
    out[1::2] = c[1:].real
    out[2::2] = c[1:].imag
    return out


@dataclass(frozen=True, eq=False)
class ControlVector:
    """Mode-0 real part, then (Re, Im) pairs for modes 1..p-1."""

    real_coeffs: np.ndarray
    config: SolverConfig

    def __post_init__(self):
        v = np.array(self.real_coeffs, dtype=float)
        if v.shape != (self.config.n_params,):
            raise ValueError(f"expected {self.config.n_params} control values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "real_coeffs", v)

    @classmethod
    def encode(cls, u, config: SolverConfig) -> "ControlVector":
        values = u.values if isinstance(u, PhysicalField) else u
        return cls(encode_array(values, config.modes_control), config)

    def decode(self) -> PhysicalField:
        return PhysicalField(decode_matrix(self.config) @ self.real_coeffs, self.config.grid)

    def with_values(self, values: np.ndarray) -> "ControlVector":
        return ControlVector(values, self.config)


def truncate_to_control(u: np.ndarray, config: SolverConfig) -> np.ndarray:
    """Project a physical state onto the span of the control modes."""
    return decode_matrix(config) @ encode_array(u, config.modes_control)


# -- observations -------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ObservationSet:
    sensor_nodes: np.ndarray
    time_indices: np.ndarray
    values: np.ndarray
    horizon_steps: int

    def __post_init__(self):
        nodes = np.array(self.sensor_nodes, dtype=int)
        times = np.array(self.time_indices, dtype=int)
        vals = np.array(self.values, dtype=float)
        K = int(self.horizon_steps)
        if len(np.unique(nodes)) != len(nodes) or np.any(nodes < 0):
            raise ValueError("sensor nodes must be distinct non-negative indices")
        if len(np.unique(times)) != len(times) or np.any(np.diff(times) <= 0):
            raise ValueError("time indices must be strictly increasing")
        if times.size == 0 or times[0] <= 0 or times[-1] != K:
            raise ValueError("time indices must lie in (0, K] and include K")
        if vals.shape != (len(nodes), len(times)):
            raise ValueError(f"values must have shape {(len(nodes), len(times))}, got {vals.shape}")
        for name, arr in (("sensor_nodes", nodes), ("time_indices", times), ("values", vals)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "horizon_steps", K)

    @property
    def m(self) -> int:
        return self.values.size

    def check_grid(self, n: int) -> None:
        if np.any(self.sensor_nodes >= n):
            raise ValueError(f"sensor node outside grid of {n} nodes")


def sample_observations(truth: Trajectory, layout) -> ObservationSet:
    """Exact reads of ``truth`` at the layout's sensor nodes and time indices.

    ``layout`` needs ``sensor_nodes``, ``time_indices`` and ``horizon_steps``
    (see ``ksobs.harness.SensorLayout``).
    """
    nodes = np.asarray(layout.sensor_nodes, dtype=int)
    times = np.asarray(layout.time_indices, dtype=int)
    if np.any(nodes < 0) or np.any(nodes >= truth.config.grid.n):
        raise ValueError("layout sensor nodes fall outside the grid")
    if np.any(times < 0) or np.any(times > truth.steps) or layout.horizon_steps > truth.steps:
        raise ValueError(f"layout times exceed the trajectory's {truth.steps} steps")
    values = truth.states[np.ix_(times, nodes)].T
    return ObservationSet(nodes, times, values, layout.horizon_steps)


# -- reports ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LossReport:
    loss: float
    residuals: np.ndarray
    sub_gradients: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class HessianReport:
    hessian: np.ndarray
    gauss_newton: np.ndarray
    curvature_part: np.ndarray
    eigenvalues: np.ndarray


@dataclass(frozen=True)
class RankProfile:
    effective_rank: int
    gauss_newton_rank: int
    condition_number: float
    min_eigenvalue: float
    m: int


# -- array-level kernels ------------------------------------------------------

def _observed_columns(obs: ObservationSet) -> dict:
    return {int(k): j for j, k in enumerate(obs.time_indices)}


def residuals_from_state(u0: np.ndarray, obs: ObservationSet, prop: Propagator) -> np.ndarray:
    """Roll out from ``u0`` and return the m_x x m_t residual matrix."""
    cols = _observed_columns(obs)
    r = np.empty(obs.values.shape)
    u = u0
    for k in range(1, obs.horizon_steps + 1):
        u = prop.step(u)
        check_state(u, k)
        j = cols.get(k)
        if j is not None:
            r[:, j] = u[obs.sensor_nodes] - obs.values[:, j]
    return r


def loss_value(theta: np.ndarray, obs: ObservationSet, config: SolverConfig) -> float:
    u0 = decode_matrix(config) @ theta
    r = residuals_from_state(u0, obs, propagator(config))
    return float(np.mean(r * r))


def loss_and_gradient(theta: np.ndarray, obs: ObservationSet, config: SolverConfig):
    """Return (loss, gradient, residuals) via one forward and one adjoint sweep."""
    prop = propagator(config)
    T = decode_matrix(config)
    cols = _observed_columns(obs)
    K, m, nodes = obs.horizon_steps, obs.m, obs.sensor_nodes
    stages = []
    r = np.empty(obs.values.shape)
    u = T @ theta
    for k in range(K):
        u, st = prop.step_stages(u)
        check_state(u, k + 1)
        stages.append(st)
        j = cols.get(k + 1)
        if j is not None:
            r[:, j] = u[nodes] - obs.values[:, j]
    lam = np.zeros(config.grid.n)
    for k in range(K, 0, -1):
        j = cols.get(k)
        if j is not None:
            lam[nodes] += (2.0 / m) * r[:, j]
        lam = prop.vjp(stages[k - 1], lam)
    return float(np.mean(r * r)), T.T @ lam, r


def _forward_sensitivities(theta, obs, config, keep_stages=True):
    """Joint sweep of the state and S_k = du_k/dtheta.

    Returns residuals, the stage buffer (K, 4n, 1+P) whose column 0 holds the
    state's stages (u, a, b, c stacked) and columns 1: their tangents, and the
    sensitivities at observed times.
    """
    prop = propagator(config)
    T = decode_matrix(config)
    cols = _observed_columns(obs)
    nodes = obs.sensor_nodes
    n, P, K = config.grid.n, T.shape[1], obs.horizon_steps
    X = np.empty((n, 1 + P))
    X[:, 0] = T @ theta
    X[:, 1:] = T
    r = np.empty(obs.values.shape)
    stages = np.empty((K, 4 * n, 1 + P)) if keep_stages else None
    scratch = None if keep_stages else np.empty((4 * n, 1 + P))
    observed = {}
    for k in range(K):
        X = prop.step_joint(X, stages[k] if keep_stages else scratch)
        check_state(X[:, 0], k + 1)
        j = cols.get(k + 1)
        if j is not None:
            r[:, j] = X[nodes, 0] - obs.values[:, j]
            observed[k + 1] = X[:, 1:].copy()
    return r, stages, observed


def _base_stages(buf: np.ndarray, n: int) -> StepStages:
    col = buf[:, 0]
    return StepStages(col[:n], col[n : 2 * n], col[2 * n : 3 * n], col[3 * n :])


def derivatives(theta: np.ndarray, obs: ObservationSet, config: SolverConfig, method: str = "split"):
    """Loss, gradient and Hessian pieces at ``theta``.

    ``method="split"`` assembles H = H_GN + H_C directly (used by optimizers).
    ``method="adjoint"`` additionally runs the matrix-valued second-order
    adjoint recursion and returns its Hessian as the third element.
    Returns (loss, grad, H, H_GN, H_C, residuals).
    """
    if method not in ("split", "adjoint"):
        raise ValueError(f"unknown Hessian method {method!r}")
    P = config.n_params
    if P > HESSIAN_MAX_PARAMS:
        raise GuardError(f"dense Hessian limited to {HESSIAN_MAX_PARAMS} parameters, got {P}")
    prop = propagator(config)
    T = decode_matrix(config)
    cols = _observed_columns(obs)
    n, K, m, nodes = config.grid.n, obs.horizon_steps, obs.m, obs.sensor_nodes
    r, stages, observed = _forward_sensitivities(theta, obs, config)

    H_gn = np.zeros((P, P))
    for S in observed.values():
        Sm = S[nodes]
        H_gn += (2.0 / m) * (Sm.T @ Sm)

    # H_C: each squared stage node contributes dZ^T diag(2 zeta) dZ, where zeta
    # is that node's cotangent in the first-order adjoint sweep.
    H_c = np.zeros((P, P))
    lam = np.zeros(n)
    Lam = np.zeros((n, P)) if method == "adjoint" else None
    for k in range(K, 0, -1):
        j = cols.get(k)
        if j is not None:
            lam[nodes] += (2.0 / m) * r[:, j]
            if Lam is not None:
                Lam[nodes] += (2.0 / m) * observed[k][nodes]
        buf = stages[k - 1]
        st = _base_stages(buf, n)
        new_lam, zeta = prop.vjp(st, lam, return_nodes=True)
        Z = buf[:, 1:]
        H_c += Z.T @ (np.concatenate(zeta)[:, None] * (2.0 * Z))
        if Lam is not None:
            dst = (Z[:n], Z[n : 2 * n], Z[2 * n : 3 * n], Z[3 * n :])
            Lam = prop.vjp(st, Lam) + prop.vjp_tangent(st, zeta, dst)
        lam = new_lam
    grad = T.T @ lam
    loss = float(np.mean(r * r))
    H = T.T @ Lam if Lam is not None else H_gn + H_c
    return loss, grad, H, H_gn, H_c, r


def sub_gradient_matrix(theta: np.ndarray, obs: ObservationSet, config: SolverConfig) -> np.ndarray:
    """Rows k = 0..K hold g_k = S_k^T (2/m) M_k r_k, zero where k is unobserved."""
    r, _, observed = _forward_sensitivities(theta, obs, config, keep_stages=False)
    cols = _observed_columns(obs)
    G = np.zeros((obs.horizon_steps + 1, config.n_params))
    for k, S in observed.items():
        G[k] = (2.0 / obs.m) * (S[obs.sensor_nodes].T @ r[:, cols[k]])
    return G


# -- public API ---------------------------------------------------------------

def _check(theta: ControlVector, obs: ObservationSet) -> None:
    obs.check_grid(theta.config.grid.n)


def evaluate_loss(theta: ControlVector, obs: ObservationSet, with_sub_gradients: bool = False) -> LossReport:
    _check(theta, obs)
    config = theta.config
    if with_sub_gradients:
        G = sub_gradient_matrix(theta.real_coeffs, obs, config)
        u0 = decode_matrix(config) @ theta.real_coeffs
        r = residuals_from_state(u0, obs, propagator(config))
        return LossReport(float(np.mean(r * r)), r, G)
    u0 = decode_matrix(config) @ theta.real_coeffs
    r = residuals_from_state(u0, obs, propagator(config))
    return LossReport(float(np.mean(r * r)), r)


def gradient(theta: ControlVector, obs: ObservationSet) -> np.ndarray:
    _check(theta, obs)
    return loss_and_gradient(theta.real_coeffs, obs, theta.config)[1]


def hessian(theta: ControlVector, obs: ObservationSet, method: str = "adjoint") -> HessianReport:
    """Full Hessian with its Gauss-Newton / curvature split.

    With the default ``method="adjoint"`` the reported Hessian comes from the
    second-order adjoint recursion while the split is assembled independently,
    so ``hessian == gauss_newton + curvature_part`` is a genuine cross-check.
    """
    _check(theta, obs)
    _, _, H, H_gn, H_c, _ = derivatives(theta.real_coeffs, obs, theta.config, method=method)
    eig = np.linalg.eigvalsh(0.5 * (H + H.T))[::-1]
    return HessianReport(H, H_gn, H_c, eig)


def _rank(eigs: np.ndarray, rtol: float) -> int:
    top = np.max(np.abs(eigs)) if eigs.size else 0.0
    if top == 0:
        return 0
    return int(np.sum(np.abs(eigs) > rtol * top))


def hessian_rank_profile(report: HessianReport, obs: ObservationSet, rtol: float = RANK_RTOL) -> RankProfile:
    eigs = np.asarray(report.eigenvalues, dtype=float)
    gn = np.linalg.eigvalsh(0.5 * (report.gauss_newton + report.gauss_newton.T))
    top = np.max(np.abs(eigs)) if eigs.size else 0.0
    kept = np.abs(eigs)[np.abs(eigs) > rtol * top] if top > 0 else np.array([])
    cond = float(kept.max() / kept.min()) if kept.size else float("nan")
    return RankProfile(
        effective_rank=_rank(eigs, rtol),
        gauss_newton_rank=_rank(gn, rtol),
        condition_number=cond,
        min_eigenvalue=float(eigs.min()) if eigs.size else 0.0,
        m=obs.m,
    )
