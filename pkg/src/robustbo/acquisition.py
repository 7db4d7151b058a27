"""Robust entropy search acquisition.

Each iteration draws spectral posterior samples, solves each sample's
robust min-max problem, conditions the GP on box constraints that encode
the sample's worst-case structure (via EP over the training stack), and
scores candidates by the expected reduction in predictive entropy:

    alpha(z) = 0.5 log(v_t(z) + s2) - (1/2C) sum_c log(v_c(z) + s2)

where v_c is the predictive variance after conditioning on sample c and
truncating the pair (f(z), f(x, h_c(x))) to the sample's constraint box.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

from .ep import EpOptions, EpResult, build_res_bounds, ep_box_condition
from .errors import InfeasibleBoxError, NumericalError
from .gp import GpPosterior, _chol_with_jitter, kernel_matrix, predict_marginals
from .minimax import (SolverOptions, SpaceSpec, inner_max, optimize_over_space,
                      robust_optimum)
from .spectral import (DEFAULT_NUM_FEATURES, SpectralBasis, SpectralSample,
                       build_basis, draw_samples)
from .truncated import BoxBounds, truncated_moments_1d, truncated_moments_2d

__all__ = [
    "ConditionedPrediction",
    "ResAcquisition",
    "ResSampleState",
    "ResState",
    "conditioned_variance",
    "maximize_acquisition",
    "prepare_iteration",
    "res_value",
    "res_values",
]

_TINY_VAR = 1e-300
_DEGENERATE_ATOL = 1e-10
# conditioned variances below this fraction of the signal variance are
# treated as exactly collapsed
_VAR_COLLAPSE_REL = 1e-15


@dataclass(frozen=True)
class ConditionedPrediction:
    """Moments of f(z) under one sample's conditioned posterior.

    ``pair_mean`` and ``pair_cov`` are the pre-truncation joint moments of
    (f(z), f(x, h_c(x))); ``mean``/``variance`` are the first coordinate
    after box truncation and ``mass`` the box probability.  ``truncated``
    is False when truncation was skipped or fell back to the prior pair.
    """

    mean: float
    variance: float
    mass: float
    pair_mean: np.ndarray
    pair_cov: np.ndarray
    truncated: bool


@dataclass
class ResSampleState:
    """Per-sample conditioning state, fixed for one iteration."""

    sample: SpectralSample
    robust_value: float                 # min_x max_theta of the sample
    robust_location: tuple[np.ndarray, np.ndarray]
    theta_hat_train: np.ndarray         # (t, d_u) argmax slice at train x
    g_train: np.ndarray                 # (t,) sample worst-case values
    stack: np.ndarray                   # (2t, d) train inputs + argmax points
    bounds: BoxBounds
    ep: EpResult
    chol_stack: np.ndarray              # lower chol of jittered V_SS
    shrink: np.ndarray                  # V_SS^-1 (V_SS - Sigma_1) V_SS^-1
    mean_shift: np.ndarray              # V_SS^-1 (mu_1 - m_S)
    cross_solve: np.ndarray             # L_data^-1 K(X_data, stack)
    solver_opts: SolverOptions


@dataclass
class ResState:
    """Everything needed to evaluate the acquisition for one iteration."""

    posterior: GpPosterior
    space: SpaceSpec
    basis: SpectralBasis
    samples: list[ResSampleState]
    noise_variance: float
    truncation_disabled: bool = False
    counters: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def num_samples(self) -> int:
        return len(self.samples)

    @property
    def fallback_max_variance(self) -> bool:
        return len(self.samples) == 0

    @property
    def ep_results(self) -> list[EpResult]:
        return [s.ep for s in self.samples]

    @property
    def train_argmax_points(self) -> list[np.ndarray]:
        return [s.stack[s.g_train.shape[0]:] for s in self.samples]


def _posterior_cross(posterior: GpPosterior, P: np.ndarray,
                     cross_solve: np.ndarray, stack: np.ndarray):
    """Posterior mean at P plus covariances cov(P, P) and cov(P, stack)."""
    data = posterior.dataset
    Kpp = kernel_matrix(P, P, posterior.params)
    Kps = kernel_matrix(P, stack, posterior.params) if stack.shape[0] else \
        np.zeros((P.shape[0], 0))
    if data.size == 0:
        return np.zeros(P.shape[0]), Kpp, Kps
    Kxp = kernel_matrix(data.inputs, P, posterior.params)
    Vp = solve_triangular(posterior.chol_factor, Kxp, lower=True)
    mean = Kxp.T @ posterior.alpha
    cov = Kpp - Vp.T @ Vp
    cross = Kps - Vp.T @ cross_solve
    return mean, cov, cross


def prepare_iteration(posterior: GpPosterior, space: SpaceSpec, *,
                      num_samples: int = 1,
                      num_features: int = DEFAULT_NUM_FEATURES,
                      rng_seed: int = 0,
                      solver_opts: SolverOptions = SolverOptions(),
                      ep_opts: EpOptions = EpOptions(),
                      truncation_disabled: bool = False) -> ResState:
    """Draw samples, solve their robust problems, and run EP conditioning.

    Samples whose EP conditioning fails numerically are dropped (counted
    in ``counters['dropped_samples']``); when all are dropped the state
    degrades to a max-variance fallback.
    """
    t_draw = time.perf_counter()
    seeds = np.random.SeedSequence(rng_seed).generate_state(3 + num_samples)
    basis = build_basis(posterior.params, num_features=num_features,
                        rng_seed=int(seeds[0]))
    data = posterior.dataset
    samples = draw_samples(basis, data, posterior.params.noise_variance,
                           count=num_samples, rng_seed=int(seeds[1]))
    counters = {"dropped_samples": 0, "relaxed_bounds": 0, "mass_underflow": 0}
    timings = {"sample": 0.0, "ep": 0.0}

    states: list[ResSampleState] = []
    t = data.size
    x_train = data.inputs[:, :space.dim_controllable] if t else \
        np.zeros((0, space.dim_controllable))
    for c, sample in enumerate(samples):
        opts_c = replace(solver_opts, rng_seed=int(seeds[3 + c]))
        chars = robust_optimum(sample, space, opts_c)
        theta_hat = np.zeros((t, space.dim_uncontrollable))
        g = np.zeros(t)
        for i in range(t):
            theta_hat[i], g[i] = inner_max(sample, x_train[i], space, opts_c)
        argmax_pts = np.hstack([x_train, theta_hat]) if t else \
            np.zeros((0, space.dim))
        stack = np.vstack([data.inputs, argmax_pts]) if t else \
            np.zeros((0, space.dim))
        timings["sample"] += time.perf_counter() - t_draw
        t_draw = time.perf_counter()

        t_ep = time.perf_counter()
        if truncation_disabled or t == 0:
            bounds = BoxBounds(np.full(2 * t, -np.inf), np.full(2 * t, np.inf))
        else:
            bounds = build_res_bounds(g, chars.robust_value)
            counters["relaxed_bounds"] += int(np.sum(g <= chars.robust_value))
        try:
            if t:
                m_S, V_SS = _posterior_mean_cov(posterior, stack)
                L_SS = _chol_with_jitter(V_SS, posterior.params.signal_variance)
                V_SS_j = L_SS @ L_SS.T
                V_SS_j = 0.5 * (V_SS_j + V_SS_j.T)
                if truncation_disabled:
                    ep = EpResult(mean=m_S, covariance=V_SS_j, log_mass=0.0,
                                  converged=True, iterations=0)
                else:
                    ep = ep_box_condition(m_S, V_SS_j, bounds, ep_opts)
                diff = V_SS_j - ep.covariance
                half = cho_solve((L_SS, True), diff)
                shrink = cho_solve((L_SS, True), half.T).T
                shrink = 0.5 * (shrink + shrink.T)
                u = cho_solve((L_SS, True), ep.mean - m_S)
                cross_solve = solve_triangular(
                    posterior.chol_factor,
                    kernel_matrix(data.inputs, stack, posterior.params),
                    lower=True)
            else:
                m_S = np.zeros(0)
                ep = EpResult(mean=m_S, covariance=np.zeros((0, 0)),
                              log_mass=0.0, converged=True, iterations=0)
                L_SS = np.zeros((0, 0))
                shrink = np.zeros((0, 0))
                u = np.zeros(0)
                cross_solve = np.zeros((data.size, 0))
        except NumericalError:
            counters["dropped_samples"] += 1
            timings["ep"] += time.perf_counter() - t_ep
            t_draw = time.perf_counter()
            continue
        timings["ep"] += time.perf_counter() - t_ep
        t_draw = time.perf_counter()

        states.append(ResSampleState(
            sample=sample, robust_value=chars.robust_value,
            robust_location=chars.robust_location, theta_hat_train=theta_hat,
            g_train=g, stack=stack, bounds=bounds, ep=ep, chol_stack=L_SS,
            shrink=shrink, mean_shift=u, cross_solve=cross_solve,
            solver_opts=opts_c))

    if not states and num_samples > 0:
        warnings.warn("all conditioning samples dropped; acquisition falls "
                      "back to maximum predictive variance", RuntimeWarning)
    return ResState(posterior=posterior, space=space, basis=basis,
                    samples=states,
                    noise_variance=posterior.params.noise_variance,
                    truncation_disabled=truncation_disabled,
                    counters=counters, timings=timings)


def _posterior_mean_cov(posterior: GpPosterior, P: np.ndarray):
    from .gp import predict
    return predict(posterior, P)


def _conditioned(state: ResState, s: ResSampleState, z: np.ndarray,
                 theta_hat: np.ndarray, g_x: float) -> ConditionedPrediction:
    """Conditioned-then-truncated moments of f(z) for one sample."""
    d_c = state.space.dim_controllable
    z = np.asarray(z, dtype=float).ravel()
    z_hat = np.concatenate([z[:d_c], theta_hat])
    P = np.vstack([z, z_hat])
    mean, cov, cross = _posterior_cross(state.posterior, P, s.cross_solve,
                                        s.stack)
    m0 = mean + cross @ s.mean_shift
    V0 = cov - cross @ s.shrink @ cross.T
    V0 = 0.5 * (V0 + V0.T)
    d = np.diag(V0).copy()
    d[d < 0.0] = 0.0
    np.fill_diagonal(V0, d)
    # ill-conditioned stacks can leave the Schur complement slightly
    # indefinite; project the off-diagonal back onto the correlation disc
    cap = float(np.sqrt(d[0] * d[1]))
    if abs(float(V0[0, 1])) > cap:
        V0[0, 1] = V0[1, 0] = cap if V0[0, 1] > 0 else -cap

    if state.truncation_disabled:
        return ConditionedPrediction(mean=float(m0[0]), variance=float(V0[0, 0]),
                                     mass=1.0, pair_mean=m0, pair_cov=V0,
                                     truncated=False)

    f_star = s.robust_value
    lower_pair = f_star if f_star < g_x else -np.inf
    if lower_pair == -np.inf:
        state.counters["relaxed_bounds"] += 1

    tiny = _VAR_COLLAPSE_REL * state.posterior.params.signal_variance
    v00 = float(V0[0, 0])
    v11 = float(V0[1, 1])
    if v00 <= tiny:
        return ConditionedPrediction(mean=float(m0[0]), variance=v00,
                                     mass=1.0, pair_mean=m0,
                                     pair_cov=V0, truncated=False)
    try:
        if np.max(np.abs(z[d_c:] - theta_hat)) < _DEGENERATE_ATOL:
            m_q, v_q, mass = truncated_moments_1d(float(m0[0]), v00,
                                                  lower_pair, g_x)
            if mass <= 0.0:
                raise InfeasibleBoxError("empty degenerate interval")
        elif v11 <= tiny:
            # the argmax slice carries no posterior variance, so its box
            # constraint reduces to an indicator on its mean
            slack = 3.0 * float(np.sqrt(max(v11, 0.0))) + 1e-12
            if not lower_pair - slack <= float(m0[1]) <= g_x + slack:
                raise InfeasibleBoxError("pinned pair value outside its box")
            m_q, v_q, mass = truncated_moments_1d(float(m0[0]), v00,
                                                  -np.inf, g_x)
            if mass <= 0.0:
                raise InfeasibleBoxError("empty upper-bound interval")
        else:
            box = BoxBounds(np.array([-np.inf, lower_pair]),
                            np.array([g_x, g_x]))
            tm = truncated_moments_2d(m0, V0, box)
            m_q = float(tm.mean[0])
            v_q = float(tm.covariance[0, 0])
            mass = tm.mass
    except InfeasibleBoxError:
        state.counters["mass_underflow"] += 1
        return ConditionedPrediction(mean=float(m0[0]), variance=v00, mass=0.0,
                                     pair_mean=m0, pair_cov=V0, truncated=False)
    v_q = min(v_q, v00)
    return ConditionedPrediction(mean=m_q, variance=v_q, mass=mass,
                                 pair_mean=m0, pair_cov=V0, truncated=True)


def conditioned_variance(state: ResState, sample_index: int,
                         z: np.ndarray) -> ConditionedPrediction:
    """Public single-point view of one sample's conditioned prediction."""
    s = state.samples[sample_index]
    d_c = state.space.dim_controllable
    z = np.asarray(z, dtype=float).ravel()
    theta_hat, g_x = inner_max(s.sample, z[:d_c], state.space, s.solver_opts)
    return _conditioned(state, s, z, theta_hat, g_x)


def res_values(state: ResState, Z: np.ndarray) -> np.ndarray:
    """Acquisition values on rows of Z (clamped at zero)."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    n = Z.shape[0]
    sn2 = state.noise_variance
    v_t = predict_marginals(state.posterior, Z)[1]
    if state.num_samples == 0:
        return np.zeros(n)
    d_c = state.space.dim_controllable
    shared_x = n > 1 and np.all(Z[:, :d_c] == Z[0, :d_c])
    acc = np.zeros(n)
    for s in state.samples:
        if shared_x:
            theta_hat, g_x = inner_max(s.sample, Z[0, :d_c], state.space,
                                       s.solver_opts)
            pairs = [(theta_hat, g_x)] * n
        else:
            pairs = [inner_max(s.sample, z[:d_c], state.space, s.solver_opts)
                     for z in Z]
        for i, (th, gx) in enumerate(pairs):
            v_q = _conditioned(state, s, Z[i], th, gx).variance
            acc[i] += np.log(v_q + sn2)
    alpha = 0.5 * np.log(v_t + sn2) - acc / (2.0 * state.num_samples)
    return np.maximum(alpha, 0.0)


def res_value(state: ResState, z: np.ndarray) -> float:
    return float(res_values(state, np.asarray(z, dtype=float)[None, :])[0])


class ResAcquisition:
    """Batched callable wrapper around ``res_values``."""

    supports_batch = True

    def __init__(self, state: ResState):
        self.state = state

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        return res_values(self.state, Z)


class _VarianceObjective:
    supports_batch = True

    def __init__(self, posterior: GpPosterior):
        self.posterior = posterior

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        return predict_marginals(self.posterior, np.atleast_2d(Z))[1]


def maximize_acquisition(state: ResState,
                         opts: SolverOptions = SolverOptions()) -> np.ndarray:
    """Next evaluation point: argmax of the acquisition over the space.

    With no surviving samples the point of maximum predictive variance is
    chosen instead.
    """
    if state.fallback_max_variance:
        fn = _VarianceObjective(state.posterior)
    else:
        fn = ResAcquisition(state)
    z, _ = optimize_over_space(fn, state.space, opts, maximize=True,
                               method="neldermead")
    return z
