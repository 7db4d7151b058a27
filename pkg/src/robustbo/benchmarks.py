"""Synthetic robust-optimization benchmark problems.

Each problem packages an objective on a normalized joint space (x, theta),
the space itself, output standardization constants, and observation noise.
The printed closed-form functions are exposed separately in their natural
coordinates so they can be checked against independent implementations.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np
from scipy import optimize

from .errors import ConfigError
from .gp import (Dataset, KernelParams, _chol_with_jitter, fit_hyperparameters,
                 fit_posterior, kernel_matrix, predict_marginals)
from .minimax import Box, FiniteSet, SpaceSpec

__all__ = [
    "ProblemSpec",
    "RegretRecord",
    "branin",
    "compute_regret",
    "eggholder",
    "hartmann3",
    "list_problems",
    "make_branin",
    "make_eggholder",
    "make_hartmann3d",
    "make_problem",
    "make_sinus_linear",
    "make_synthetic_polynomial",
    "make_within_model_problem",
    "cached_robust_reference",
    "sinus_linear",
    "synthetic_polynomial",
    "true_robust_reference",
    "worst_case_value",
]

# probe used once per problem to freeze output standardization constants
_STANDARDIZE_SEED = 1234
_STANDARDIZE_PROBE = 100_000
_NOISE_STD = math.sqrt(0.001)
_EVAL_BLOCK = 16384

REFERENCE_CACHE_VERSION = 1


@dataclass(frozen=True)
class ProblemSpec:
    """A named robust benchmark on a normalized space.

    ``objective`` maps joint rows to standardized values; ``to_raw`` maps
    normalized joint rows back to the formula's coordinates, where
    ``raw_objective`` evaluates the printed function.
    """

    name: str
    objective: Callable
    space: SpaceSpec
    standardization: tuple[float, float]   # (shift, scale)
    noise_std: float
    raw_objective: Optional[Callable] = None
    to_raw: Optional[Callable] = None
    true_robust_value: Optional[float] = None


@dataclass(frozen=True)
class RegretRecord:
    iteration: int
    reported_location: tuple[np.ndarray, np.ndarray]
    robust_regret: Optional[float] = None
    inference_regret: Optional[float] = None

    def __post_init__(self):
        if self.robust_regret is None and self.inference_regret is None:
            raise ValueError("at least one regret must be present")


# ---------------------------------------------------------------------------
# printed formulas in their natural coordinates

def branin(x, theta):
    """Branin with the adversary in the first squared term."""
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    a, b, c = 1.0, 5.1 / (4.0 * math.pi ** 2), 5.0 / math.pi
    r, s, t = 6.0, 10.0, 1.0 / (8.0 * math.pi)
    return a * (theta - b * x ** 2 + c * x - r) ** 2 + s * (1.0 - t) * np.cos(x) + s


def sinus_linear(z):
    """High-frequency sine plus linear trend on the summed input."""
    z = np.asarray(z, dtype=float)
    return np.sin(5.0 * z ** 2 * math.pi) + 0.5 * z


def eggholder(x, theta):
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    return (-(theta + 47.0) * np.sin(np.sqrt(np.abs(theta + 0.5 * x + 47.0)))
            - x * np.sin(np.sqrt(np.abs(x - (theta + 47.0)))))


_HARTMANN_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_HARTMANN_A = np.array([[3.0, 10.0, 30.0],
                        [0.1, 10.0, 35.0],
                        [3.0, 10.0, 30.0],
                        [0.1, 10.0, 35.0]])
_HARTMANN_P = 1e-4 * np.array([[3689.0, 1170.0, 2673.0],
                               [4699.0, 4387.0, 7470.0],
                               [1091.0, 8732.0, 5547.0],
                               [381.0, 5743.0, 8828.0]])


def hartmann3(z):
    """Three-dimensional Hartmann, positive-sum convention."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    inner = np.sum(_HARTMANN_A[None, :, :]
                   * (z[:, None, :] - _HARTMANN_P[None, :, :]) ** 2, axis=2)
    vals = np.sum(_HARTMANN_ALPHA[None, :] * np.exp(-inner), axis=1)
    return vals


def synthetic_polynomial(z):
    """Two-dimensional sixth-order polynomial with mild cross terms."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    z1, z2 = z[:, 0], z[:, 1]
    p1 = (2.0 * z1 ** 6 - 12.2 * z1 ** 5 + 21.2 * z1 ** 4 + 6.2 * z1
          - 6.4 * z1 ** 3 - 4.7 * z1 ** 2)
    p2 = (z2 ** 6 - 11.0 * z2 ** 5 + 43.3 * z2 ** 4 - 10.0 * z2
          - 74.8 * z2 ** 3 + 56.9 * z2 ** 2)
    cross = (-4.1 * z1 * z2 - 0.1 * z1 ** 2 * z2 ** 2 + 0.4 * z1 * z2 ** 2
             + 0.4 * z1 ** 2 * z2)
    return p1 + p2 + cross


# ---------------------------------------------------------------------------
# problem assembly

class _Objective:
    """Standardized batched objective: raw formula behind an input map."""

    supports_batch = True

    def __init__(self, joint_raw: Callable, to_raw: Callable,
                 shift: float, scale: float):
        self.joint_raw = joint_raw
        self.to_raw = to_raw
        self.shift = shift
        self.scale = scale

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        out = np.empty(Z.shape[0])
        for start in range(0, Z.shape[0], _EVAL_BLOCK):
            block = Z[start:start + _EVAL_BLOCK]
            out[start:start + _EVAL_BLOCK] = self.joint_raw(self.to_raw(block))
        return (out - self.shift) / self.scale


def _standardize_constants(joint_raw, to_raw, space) -> tuple[float, float]:
    rng = np.random.default_rng(_STANDARDIZE_SEED)
    probe = space.sample_joint(rng, _STANDARDIZE_PROBE)
    vals = np.empty(probe.shape[0])
    for start in range(0, probe.shape[0], _EVAL_BLOCK):
        block = probe[start:start + _EVAL_BLOCK]
        vals[start:start + _EVAL_BLOCK] = joint_raw(to_raw(block))
    return float(np.mean(vals)), float(np.std(vals))


def make_branin() -> ProblemSpec:
    """Branin on [0, 1]^2 with 20 discrete adversary levels, standardized."""
    theta_raw = np.linspace(0.75, 14.25, 20)
    space = SpaceSpec(Box(np.array([[0.0, 1.0]])),
                      FiniteSet((theta_raw / 15.0)[:, None]))

    def to_raw(Z):
        return np.column_stack([15.0 * Z[:, 0] - 5.0, 15.0 * Z[:, 1]])

    def joint_raw(R):
        return branin(R[:, 0], R[:, 1])

    shift, scale = _standardize_constants(joint_raw, to_raw, space)
    return ProblemSpec(name="branin",
                       objective=_Objective(joint_raw, to_raw, shift, scale),
                       space=space, standardization=(shift, scale),
                       noise_std=_NOISE_STD, raw_objective=joint_raw,
                       to_raw=to_raw)


def make_sinus_linear() -> ProblemSpec:
    space = SpaceSpec(Box(np.array([[0.0, 1.0]])),
                      FiniteSet(np.array([[0.1], [0.05]])),
                      combine_mode="additive")

    def to_raw(Z):
        return np.asarray(Z, dtype=float)

    def joint_raw(R):
        return sinus_linear(R[:, 0] + R[:, 1])

    return ProblemSpec(name="sinus_linear",
                       objective=_Objective(joint_raw, to_raw, 0.0, 1.0),
                       space=space, standardization=(0.0, 1.0),
                       noise_std=_NOISE_STD, raw_objective=joint_raw,
                       to_raw=to_raw)


def make_eggholder() -> ProblemSpec:
    theta_raw = np.array([-512.0, 0.0, 185.0])
    space = SpaceSpec(Box(np.array([[0.0, 1.0]])),
                      FiniteSet(((theta_raw + 512.0) / 1024.0)[:, None]))

    def to_raw(Z):
        return 1024.0 * np.asarray(Z, dtype=float) - 512.0

    def joint_raw(R):
        return eggholder(R[:, 0], R[:, 1])

    shift, scale = _standardize_constants(joint_raw, to_raw, space)
    return ProblemSpec(name="eggholder",
                       objective=_Objective(joint_raw, to_raw, shift, scale),
                       space=space, standardization=(shift, scale),
                       noise_std=_NOISE_STD, raw_objective=joint_raw,
                       to_raw=to_raw)


def make_hartmann3d() -> ProblemSpec:
    """Hartmann with x on a 50 x 50 grid and 11 adversary levels."""
    axis = np.linspace(0.0, 1.0, 50)
    xg, yg = np.meshgrid(axis, axis, indexing="ij")
    x_points = np.column_stack([xg.ravel(), yg.ravel()])
    theta = np.linspace(0.25, 0.75, 11)[:, None]
    space = SpaceSpec(FiniteSet(x_points), FiniteSet(theta))

    def to_raw(Z):
        return np.asarray(Z, dtype=float)

    def joint_raw(R):
        return hartmann3(R)

    return ProblemSpec(name="hartmann3d",
                       objective=_Objective(joint_raw, to_raw, 0.0, 1.0),
                       space=space, standardization=(0.0, 1.0),
                       noise_std=_NOISE_STD, raw_objective=joint_raw,
                       to_raw=to_raw)


def _polynomial_thetas() -> np.ndarray:
    angles = np.array([0.0, 0.4, 0.8, 1.2, 1.6, 2.0]) * math.pi
    rows = []
    for radius in (0.0, 0.5):
        for a in angles:
            rows.append([radius * math.cos(a), radius * math.sin(a)])
    return np.array(rows)


def make_synthetic_polynomial() -> ProblemSpec:
    space = SpaceSpec(Box(np.array([[-0.95, 3.2], [-0.45, 4.4]])),
                      FiniteSet(_polynomial_thetas()),
                      combine_mode="additive")

    def to_raw(Z):
        return np.asarray(Z, dtype=float)

    def joint_raw(R):
        return synthetic_polynomial(R[:, :2] + R[:, 2:])

    return ProblemSpec(name="synthetic_polynomial",
                       objective=_Objective(joint_raw, to_raw, 0.0, 1.0),
                       space=space, standardization=(0.0, 1.0),
                       noise_std=_NOISE_STD, raw_objective=joint_raw,
                       to_raw=to_raw)


_POLY_PARAMS_CACHE: dict[int, KernelParams] = {}


def polynomial_reference_hyperparams(rng_seed: int = 7) -> KernelParams:
    """Kernel hyperparameters for the polynomial problem, fit once by
    maximum likelihood on 500 sampled points with objective below 15."""
    if rng_seed in _POLY_PARAMS_CACHE:
        return _POLY_PARAMS_CACHE[rng_seed]
    problem = make_synthetic_polynomial()
    rng = np.random.default_rng(rng_seed)
    keep_Z, keep_y = [], []
    total = 0
    while total < 500:
        Z = problem.space.sample_joint(rng, 2000)
        y = problem.objective(Z)
        mask = y < 15.0
        keep_Z.append(Z[mask])
        keep_y.append(y[mask])
        total += int(np.sum(mask))
    Z = np.vstack(keep_Z)[:500]
    y = np.concatenate(keep_y)[:500]
    data = Dataset(Z, y, problem.space.dim_controllable,
                   problem.space.dim_uncontrollable)
    params = fit_hyperparameters(data, fixed_noise=0.001, rng_seed=rng_seed)
    _POLY_PARAMS_CACHE[rng_seed] = params
    return params


class _GpMeanObjective:
    """Frozen posterior mean used as a deterministic objective."""

    supports_batch = True

    def __init__(self, posterior):
        self.posterior = posterior

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        out = np.empty(Z.shape[0])
        for start in range(0, Z.shape[0], _EVAL_BLOCK):
            block = Z[start:start + _EVAL_BLOCK]
            out[start:start + _EVAL_BLOCK] = \
                predict_marginals(self.posterior, block)[0]
        return out


def make_within_model_problem(rng_seed: int) -> ProblemSpec:
    """Model-matched objective: the mean of a GP fitted to one exact draw.

    1000 points on [0, 1]^2 receive values drawn from a GP with unit
    signal variance, lengthscales 0.1, and noise variance 0.001; the
    fitted predictive mean becomes the (deterministic) objective, with
    the second coordinate acting as the adversary.
    """
    rng = np.random.default_rng(rng_seed)
    params = KernelParams(signal_variance=1.0, lengthscales=np.array([0.1, 0.1]),
                          noise_variance=0.001)
    Z = rng.uniform(0.0, 1.0, size=(1000, 2))
    K = kernel_matrix(Z, Z, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    L = _chol_with_jitter(K, params.signal_variance)
    y = L @ rng.standard_normal(1000)
    data = Dataset(Z, y, 1, 1)
    posterior = fit_posterior(data, params)
    space = SpaceSpec(Box(np.array([[0.0, 1.0]])), Box(np.array([[0.0, 1.0]])))
    objective = _GpMeanObjective(posterior)
    return ProblemSpec(name=f"within_model_s{rng_seed}", objective=objective,
                       space=space, standardization=(0.0, 1.0),
                       noise_std=_NOISE_STD, raw_objective=objective,
                       to_raw=lambda Z: np.asarray(Z, dtype=float))


# ---------------------------------------------------------------------------
# reference optima and regrets

def _grid_candidates(domain, grid_per_dim: int) -> np.ndarray:
    if isinstance(domain, FiniteSet):
        return domain.points
    axes = [np.linspace(lo, hi, grid_per_dim) for lo, hi in domain.bounds]
    if len(axes) == 1:
        return axes[0][:, None]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.column_stack([m.ravel() for m in mesh])


def _worst_case_grid(problem: ProblemSpec, xs: np.ndarray,
                     ts: np.ndarray) -> np.ndarray:
    """max over theta candidates of the objective, for each x row."""
    g = np.empty(xs.shape[0])
    nt = ts.shape[0]
    block = max(1, _EVAL_BLOCK // nt)
    for start in range(0, xs.shape[0], block):
        xb = xs[start:start + block]
        rows = np.hstack([np.repeat(xb, nt, axis=0), np.tile(ts, (xb.shape[0], 1))])
        vals = problem.objective(rows).reshape(xb.shape[0], nt)
        g[start:start + block] = vals.max(axis=1)
    return g


def _inner_value(problem: ProblemSpec, x: np.ndarray,
                 grid_per_dim: int) -> tuple[np.ndarray, float]:
    """Worst-case theta and value at fixed x; continuous sets get a dense
    grid pass plus a local polish."""
    dom = problem.space.uncontrollable
    ts = _grid_candidates(dom, grid_per_dim)
    rows = np.hstack([np.tile(x, (ts.shape[0], 1)), ts])
    vals = problem.objective(rows)
    j = int(np.argmax(vals))
    if isinstance(dom, FiniteSet):
        return ts[j].copy(), float(vals[j])

    def neg(theta):
        return -float(problem.objective(np.concatenate([x, theta])[None])[0])

    res = optimize.minimize(neg, ts[j], method="Nelder-Mead",
                            bounds=list(map(tuple, dom.bounds)),
                            options={"xatol": 1e-9, "fatol": 1e-12,
                                     "maxiter": 400 * dom.dim})
    if -res.fun >= vals[j]:
        theta = np.clip(res.x, dom.bounds[:, 0], dom.bounds[:, 1])
        return theta, float(-res.fun)
    return ts[j].copy(), float(vals[j])


def worst_case_value(problem: ProblemSpec, x: np.ndarray,
                     grid_per_dim: int = 400) -> float:
    """g(x) = max over theta of the standardized objective."""
    return _inner_value(problem, np.asarray(x, dtype=float).ravel(),
                        grid_per_dim)[1]


def true_robust_reference(problem: ProblemSpec, grid_per_dim: int = 400):
    """Brute-force robust optimum (f*, x*, theta*) on a dense grid.

    Discrete blocks are enumerated exactly; continuous blocks use the grid
    followed by a deterministic local polish, so doubling the resolution
    moves f* only by the polish tolerance.
    """
    space = problem.space
    xs = _grid_candidates(space.controllable, grid_per_dim)
    ts = _grid_candidates(space.uncontrollable, grid_per_dim)
    g = _worst_case_grid(problem, xs, ts)
    order = np.argsort(g, kind="stable")

    if isinstance(space.controllable, FiniteSet):
        x_star = xs[int(order[0])].copy()
        theta_star, f_star = _inner_value(problem, x_star, grid_per_dim)
        return float(f_star), x_star, theta_star

    xdom = space.controllable
    best_x, best_f = None, math.inf
    for idx in order[:3]:

        def g_of(x):
            return _inner_value(problem, x, grid_per_dim)[1]

        res = optimize.minimize(g_of, xs[int(idx)], method="Nelder-Mead",
                                bounds=list(map(tuple, xdom.bounds)),
                                options={"xatol": 1e-9, "fatol": 1e-12,
                                         "maxiter": 400 * xdom.dim})
        cand_x = np.clip(res.x, xdom.bounds[:, 0], xdom.bounds[:, 1])
        cand_f = float(res.fun)
        if cand_f < best_f:
            best_f = cand_f
            best_x = cand_x
    theta_star, f_star = _inner_value(problem, best_x, grid_per_dim)
    return float(f_star), best_x, theta_star


def cached_robust_reference(problem: ProblemSpec, grid_per_dim: int,
                            cache_path: str | None):
    """Reference optimum with a versioned JSON cache keyed by problem and
    grid resolution."""
    key = f"{problem.name}@{grid_per_dim}"
    cache = {"version": REFERENCE_CACHE_VERSION, "entries": {}}
    if cache_path and os.path.exists(cache_path):
        with open(cache_path, "r", encoding="utf-8") as fh:
            cache = json.load(fh)
        if cache.get("version") != REFERENCE_CACHE_VERSION:
            raise ConfigError(f"unknown reference cache version in {cache_path}")
        entry = cache["entries"].get(key)
        if entry is not None:
            return (entry["f_star"], np.array(entry["x_star"]),
                    np.array(entry["theta_star"]))
    f_star, x_star, theta_star = true_robust_reference(problem, grid_per_dim)
    cache["entries"][key] = {"f_star": f_star, "x_star": list(x_star),
                             "theta_star": list(theta_star)}
    if cache_path:
        with open(cache_path, "w", encoding="utf-8") as fh:
            json.dump(cache, fh, indent=1, sort_keys=True)
    return f_star, x_star, theta_star


def compute_regret(problem: ProblemSpec, reported, reference_f_star: float,
                   iteration: int = 0) -> RegretRecord:
    """Regret of a reported robust location against the reference optimum.

    Discrete adversaries give the worst-case (robust) regret with the
    adversary re-solved by enumeration; continuous adversaries give the
    immediate regret at the reported pair.
    """
    x_star = np.asarray(reported[0], dtype=float).ravel()
    theta_star = np.asarray(reported[1], dtype=float).ravel()
    dom = problem.space.uncontrollable
    if isinstance(dom, FiniteSet):
        rows = np.hstack([np.tile(x_star, (dom.points.shape[0], 1)), dom.points])
        g = float(np.max(problem.objective(rows)))
        return RegretRecord(iteration=iteration,
                            reported_location=(x_star, theta_star),
                            robust_regret=abs(g - reference_f_star))
    z = np.concatenate([x_star, theta_star])
    val = float(problem.objective(z[None])[0])
    return RegretRecord(iteration=iteration,
                        reported_location=(x_star, theta_star),
                        inference_regret=abs(val - reference_f_star))


_FACTORIES = {
    "branin": make_branin,
    "sinus_linear": make_sinus_linear,
    "eggholder": make_eggholder,
    "hartmann3d": make_hartmann3d,
    "synthetic_polynomial": make_synthetic_polynomial,
}


def list_problems() -> list[str]:
    return sorted(_FACTORIES) + ["within_model"]


def make_problem(name: str, rng_seed: int = 0) -> ProblemSpec:
    """Problem registry; 'within_model' builds a fresh instance per seed."""
    if name == "within_model" or name.startswith("within_model_s"):
        if name.startswith("within_model_s"):
            rng_seed = int(name[len("within_model_s"):])
        return make_within_model_problem(rng_seed)
    factory = _FACTORIES.get(name)
    if factory is None:
        raise ConfigError(f"unknown problem '{name}'; choose from "
                          f"{', '.join(list_problems())}")
    return factory()
