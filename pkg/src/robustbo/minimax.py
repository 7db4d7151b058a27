"""Spaces and min-max machinery.

A problem space is a controllable part (box or finite set) crossed with an
uncontrollable part.  The solver layer provides the inner maximization
over the uncontrollable slice, the nested robust optimum min_x max_theta,
and plain optimization over the joint space, all with seeded multistart.

Objectives are callables on joint points z = (x, theta).  Batched
evaluation (rows of a 2-D array in, vector out) is used when the callable
advertises ``supports_batch``; otherwise it is called row by row.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy import optimize

__all__ = [
    "Box",
    "FiniteSet",
    "RobustCharacteristics",
    "SolverOptions",
    "SpaceSpec",
    "batch_eval",
    "inner_max",
    "optimize_over_space",
    "robust_optimum",
    "report_optimum",
]


@dataclass(frozen=True)
class Box:
    """Axis-aligned continuous domain, one (low, high) row per dimension."""

    bounds: np.ndarray  # (d, 2)

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float).reshape(-1, 2).copy()
        if not np.all(b[:, 0] < b[:, 1]):
            raise ValueError("box bounds must satisfy low < high")
        b.flags.writeable = False
        object.__setattr__(self, "bounds", b)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.bounds[:, 0] + self.bounds[:, 1])

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.bounds[:, 0], self.bounds[:, 1], size=(n, self.dim))


@dataclass(frozen=True)
class FiniteSet:
    """Finite collection of candidate points, one per row."""

    points: np.ndarray  # (m, d)

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        p = p.copy()
        if p.shape[0] == 0:
            raise ValueError("finite set must be nonempty")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        idx = rng.integers(0, self.points.shape[0], size=n)
        return self.points[idx]


Domain = Union[Box, FiniteSet]


@dataclass(frozen=True)
class SpaceSpec:
    """Controllable x uncontrollable search space.

    ``combine_mode`` records whether the objective treats theta as extra
    coordinates ("concatenate") or as an additive input perturbation
    ("additive", requiring matching dimensions); objectives always receive
    the concatenated (x, theta) vector and apply the combination
    themselves.
    """

    controllable: Domain
    uncontrollable: Domain
    combine_mode: str = "concatenate"

    def __post_init__(self):
        if self.combine_mode not in ("concatenate", "additive"):
            raise ValueError("combine_mode must be 'concatenate' or 'additive'")
        if self.combine_mode == "additive" and \
                self.controllable.dim != self.uncontrollable.dim:
            raise ValueError("additive perturbation requires matching dimensions")

    @property
    def dim_controllable(self) -> int:
        return self.controllable.dim

    @property
    def dim_uncontrollable(self) -> int:
        return self.uncontrollable.dim

    @property
    def dim(self) -> int:
        return self.controllable.dim + self.uncontrollable.dim

    def sample_joint(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.hstack([self.controllable.sample(rng, n),
                          self.uncontrollable.sample(rng, n)])


@dataclass(frozen=True)
class SolverOptions:
    outer_restarts: int = 10   # Nelder-Mead starts for minimization over x
    inner_restarts: int = 5    # quasi-Newton starts for the theta slice
    max_iter: int = 100
    tol: float = 1e-6
    rng_seed: int = 0


@dataclass(frozen=True)
class RobustCharacteristics:
    """Worst-case slice of an objective: argmax function h, maximizing
    function g(x) = f(x, h(x)), and the robust optimum."""

    argmax_fn: Callable[[np.ndarray], np.ndarray]
    max_fn: Callable[[np.ndarray], float]
    robust_value: float
    robust_location: tuple[np.ndarray, np.ndarray]


def batch_eval(objective, Z: np.ndarray) -> np.ndarray:
    """Evaluate an objective on rows of ``Z``, batched when supported."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if getattr(objective, "supports_batch", False):
        return np.asarray(objective(Z), dtype=float).reshape(Z.shape[0])
    return np.array([float(objective(z)) for z in Z])


def _starts(domain: Box, restarts: int, rng: np.random.Generator) -> np.ndarray:
    pts = [domain.center]
    if restarts > 1:
        pts.append(domain.sample(rng, restarts - 1))
        return np.vstack([pts[0][None, :], pts[1]])
    return pts[0][None, :]


def _nm_minimize(fn, domain: Box, opts: SolverOptions,
                 rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Multistart Nelder-Mead over a box; best-found semantics."""
    best_x = domain.center
    best_v = math.inf
    bounds = list(map(tuple, domain.bounds))
    for x0 in _starts(domain, opts.outer_restarts, rng):
        res = optimize.minimize(fn, x0, method="Nelder-Mead", bounds=bounds,
                                options={"xatol": opts.tol, "fatol": opts.tol,
                                         "maxiter": 200 * domain.dim})
        if res.fun < best_v:
            best_v = float(res.fun)
            best_x = np.clip(res.x, domain.bounds[:, 0], domain.bounds[:, 1])
    return best_x, best_v


def _lbfgs_minimize(fn_and_grad, domain: Box, opts: SolverOptions,
                    rng: np.random.Generator, num_starts: int):
    """Multistart bounded quasi-Newton; ``fn_and_grad`` returns (f, grad)."""
    best_x = domain.center
    best_v = math.inf
    bounds = list(map(tuple, domain.bounds))
    starts = _starts(domain, num_starts, rng)
    for x0 in starts:
        res = optimize.minimize(fn_and_grad, x0, jac=True, method="L-BFGS-B",
                                bounds=bounds,
                                options={"maxiter": opts.max_iter,
                                         "gtol": opts.tol})
        if np.isfinite(res.fun) and res.fun < best_v:
            best_v = float(res.fun)
            best_x = np.clip(res.x, domain.bounds[:, 0], domain.bounds[:, 1])
    return best_x, best_v


def _slice_objective(objective, x: np.ndarray, d_u: int):
    """Objective restricted to the theta slice at fixed x, batched."""
    x = np.asarray(x, dtype=float).ravel()

    def fn(T):
        T = np.atleast_2d(np.asarray(T, dtype=float))
        Z = np.hstack([np.tile(x, (T.shape[0], 1)), T])
        return batch_eval(objective, Z)

    fn.supports_batch = True
    return fn


def inner_max(objective, x, space: SpaceSpec,
              opts: SolverOptions = SolverOptions()) -> tuple[np.ndarray, float]:
    """Maximize the objective over theta at fixed x.

    Discrete uncontrollable sets are enumerated exactly (ties resolved to
    the lowest index).  Continuous sets use multistart L-BFGS-B, with the
    objective's analytic ``gradient`` when it has one.
    """
    x = np.asarray(x, dtype=float).ravel()
    dom = space.uncontrollable
    if isinstance(dom, FiniteSet):
        fn = _slice_objective(objective, x, dom.dim)
        vals = fn(dom.points)
        j = int(np.argmax(vals))
        return dom.points[j].copy(), float(vals[j])

    rng = np.random.default_rng(opts.rng_seed)
    grad = getattr(objective, "gradient", None)
    d_c = x.size

    if grad is not None:
        def fn_and_grad(theta):
            z = np.concatenate([x, theta])
            return -float(objective(z)), -np.asarray(grad(z))[d_c:]
        theta, neg = _lbfgs_minimize(fn_and_grad, dom, opts, rng, opts.inner_restarts)
    else:
        sl = _slice_objective(objective, x, dom.dim)

        def fn_and_grad(theta):
            f0 = float(sl(theta[None])[0])
            g = np.empty(theta.size)
            h = 1e-6
            for j in range(theta.size):
                tp = theta.copy()
                tm = theta.copy()
                tp[j] = min(tp[j] + h, dom.bounds[j, 1])
                tm[j] = max(tm[j] - h, dom.bounds[j, 0])
                step = tp[j] - tm[j]
                g[j] = (float(sl(tp[None])[0]) - float(sl(tm[None])[0])) / step \
                    if step > 0 else 0.0
            return -f0, -g
        theta, neg = _lbfgs_minimize(fn_and_grad, dom, opts, rng, opts.inner_restarts)
    return theta, -neg


def robust_optimum(objective, space: SpaceSpec,
                   opts: SolverOptions = SolverOptions()) -> RobustCharacteristics:
    """Nested min over x of max over theta with best-found semantics."""

    def h(x):
        return inner_max(objective, x, space, opts)[0]

    def g(x):
        return inner_max(objective, x, space, opts)[1]

    dom = space.controllable
    if isinstance(dom, FiniteSet):
        vals = np.array([g(x) for x in dom.points])
        i = int(np.argmin(vals))
        x_star = dom.points[i].copy()
        value = float(vals[i])
    else:
        rng = np.random.default_rng(opts.rng_seed + 1)
        x_star, value = _nm_minimize(lambda x: g(x), dom, opts, rng)
    theta_star, value = inner_max(objective, x_star, space, opts)
    return RobustCharacteristics(argmax_fn=h, max_fn=g, robust_value=float(value),
                                 robust_location=(x_star, theta_star))


def report_optimum(posterior, space: SpaceSpec,
                   opts: SolverOptions = SolverOptions()):
    """Robust optimum of the posterior mean; the reported (x*, theta*)."""
    from .gp import predict_marginals

    def mean_fn(Z):
        return predict_marginals(posterior, Z)[0]

    mean_fn.supports_batch = True
    chars = robust_optimum(mean_fn, space, opts)
    return chars.robust_location


def _enumerate_rows(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """All joint rows of the cross product, x-major."""
    nx, nt = xs.shape[0], ts.shape[0]
    return np.hstack([np.repeat(xs, nt, axis=0), np.tile(ts, (nx, 1))])


def optimize_over_space(objective, space: SpaceSpec,
                        opts: SolverOptions = SolverOptions(), *,
                        maximize: bool = False,
                        method: str = "neldermead") -> tuple[np.ndarray, float]:
    """Optimize an objective over the joint space.

    Discrete blocks are enumerated; continuous blocks use multistart
    Nelder-Mead ("neldermead") or multistart L-BFGS-B exploiting an
    analytic ``gradient`` attribute when present ("lbfgs").  Returns the
    best joint point and its objective value (in the caller's orientation).
    """
    sign = -1.0 if maximize else 1.0
    xdom, tdom = space.controllable, space.uncontrollable
    rng = np.random.default_rng(opts.rng_seed + 2)
    d_c = xdom.dim

    def signed_batch(Z):
        return sign * batch_eval(objective, Z)

    if isinstance(xdom, FiniteSet) and isinstance(tdom, FiniteSet):
        rows = _enumerate_rows(xdom.points, tdom.points)
        vals = signed_batch(rows)
        i = int(np.argmin(vals))
        return rows[i].copy(), sign * float(vals[i])

    if isinstance(xdom, Box) and isinstance(tdom, FiniteSet):
        def over_x(x):
            rows = np.hstack([np.tile(x, (tdom.points.shape[0], 1)), tdom.points])
            return float(np.min(signed_batch(rows)))
        x_best, _ = _nm_minimize(over_x, xdom, opts, rng)
        rows = np.hstack([np.tile(x_best, (tdom.points.shape[0], 1)), tdom.points])
        vals = signed_batch(rows)
        j = int(np.argmin(vals))
        return rows[j].copy(), sign * float(vals[j])

    if isinstance(xdom, FiniteSet) and isinstance(tdom, Box):
        best_row, best_v = None, math.inf
        for x in xdom.points:
            def over_t(theta, x=x):
                return float(signed_batch(np.concatenate([x, theta])[None])[0])
            t_best, v = _nm_minimize(over_t, tdom, opts, rng)
            if v < best_v:
                best_v = v
                best_row = np.concatenate([x, t_best])
        return best_row, sign * best_v

    joint = Box(np.vstack([xdom.bounds, tdom.bounds]))
    grad = getattr(objective, "gradient", None)
    if method == "lbfgs" and grad is not None:
        def fn_and_grad(z):
            return sign * float(objective(z)), sign * np.asarray(grad(z))
        z_best, v = _lbfgs_minimize(fn_and_grad, joint, opts, rng,
                                    opts.outer_restarts)
    else:
        def over_z(z):
            return float(signed_batch(z[None])[0])
        z_best, v = _nm_minimize(over_z, joint, opts, rng)
    return z_best, sign * v
