"""Baseline acquisition strategies for the minimization-under-adversary
setting: plain lower-confidence-bound, the stable min-max confidence rule,
expected improvement, min-value entropy search, and knowledge gradient.

All selectors return the next joint evaluation point (x, theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import ConfigError
from .gp import GpPosterior, predict, predict_marginals
from .minimax import (Box, FiniteSet, SolverOptions, SpaceSpec, inner_max,
                      optimize_over_space, robust_optimum)
from .spectral import build_basis, draw_samples

__all__ = [
    "BaselineConfig",
    "ei_select",
    "kg_select",
    "mes_select",
    "select_point",
    "stableopt_select",
    "ucb_select",
]


@dataclass(frozen=True)
class BaselineConfig:
    beta_sqrt: float = 2.0
    mes_num_mins: int = 100
    mes_num_features: int = 500
    kg_grid_per_dim: int = 50
    kg_num_fantasies: int = 32
    kg_max_candidates: int = 2500


class _Statistic:
    """Batched mean +- beta_sqrt * std of a posterior."""

    supports_batch = True

    def __init__(self, posterior: GpPosterior, coeff: float):
        self.posterior = posterior
        self.coeff = coeff

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        mean, var = predict_marginals(self.posterior, np.atleast_2d(Z))
        return mean + self.coeff * np.sqrt(np.maximum(var, 0.0))


def ucb_select(posterior: GpPosterior, space: SpaceSpec,
               opts: SolverOptions = SolverOptions(), *,
               beta_sqrt: float = 2.0) -> np.ndarray:
    """Most optimistic point: argmin of mean - beta_sqrt * std."""
    fn = _Statistic(posterior, -beta_sqrt)
    z, _ = optimize_over_space(fn, space, opts, maximize=False)
    return z


def stableopt_select(posterior: GpPosterior, space: SpaceSpec,
                     opts: SolverOptions = SolverOptions(), *,
                     beta_sqrt: float = 2.0) -> np.ndarray:
    """Confidence-bound min-max rule.

    x is chosen by the robust optimum of the lower bound; theta is then
    the pessimistic response, the argmax of the upper bound at that x.
    """
    lcb = _Statistic(posterior, -beta_sqrt)
    ucb = _Statistic(posterior, beta_sqrt)
    chars = robust_optimum(lcb, space, opts)
    x_next = chars.robust_location[0]
    theta_next, _ = inner_max(ucb, x_next, space, opts)
    return np.concatenate([x_next, theta_next])


def _ei_values(mean: np.ndarray, var: np.ndarray, incumbent: float) -> np.ndarray:
    sd = np.sqrt(np.maximum(var, 0.0))
    out = np.maximum(incumbent - mean, 0.0)  # sd == 0 limit
    pos = sd > 0.0
    if np.any(pos):
        u = (incumbent - mean[pos]) / sd[pos]
        vals = sd[pos] * (u * special.ndtr(u)
                          + np.exp(-0.5 * u * u) / math.sqrt(2.0 * math.pi))
        far = u < -30.0
        if np.any(far):
            # asymptotic tail keeps the ordering once the closed form
            # cancels to zero
            uf = u[far]
            vals[far] = sd[pos][far] * np.exp(-0.5 * uf * uf) \
                / (math.sqrt(2.0 * math.pi) * uf * uf)
        out[pos] = vals
    return out


class _EiObjective:
    supports_batch = True

    def __init__(self, posterior: GpPosterior, incumbent: float):
        self.posterior = posterior
        self.incumbent = incumbent

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        mean, var = predict_marginals(self.posterior, np.atleast_2d(Z))
        return _ei_values(mean, var, self.incumbent)


def ei_select(posterior: GpPosterior, space: SpaceSpec,
              opts: SolverOptions = SolverOptions(), *,
              incumbent: float | None = None) -> np.ndarray:
    """Maximize expected improvement below the incumbent minimum."""
    if incumbent is None:
        if posterior.dataset.size == 0:
            raise ConfigError("expected improvement needs observations or an "
                              "explicit incumbent")
        incumbent = float(np.min(posterior.dataset.observations))
    fn = _EiObjective(posterior, incumbent)
    z, _ = optimize_over_space(fn, space, opts, maximize=True)
    return z


class _MesObjective:
    supports_batch = True

    def __init__(self, posterior: GpPosterior, min_values: np.ndarray):
        self.posterior = posterior
        self.min_values = np.asarray(min_values, dtype=float)

    def __call__(self, Z: np.ndarray) -> np.ndarray:
        mean, var = predict_marginals(self.posterior, np.atleast_2d(Z))
        sd = np.sqrt(np.maximum(var, 1e-24))
        gamma = (mean[:, None] - self.min_values[None, :]) / sd[:, None]
        # phi(g)/Phi(g) through erfcx keeps the deep lower tail finite
        ratio = math.sqrt(2.0 / math.pi) / special.erfcx(-gamma / math.sqrt(2.0))
        terms = 0.5 * gamma * ratio - special.log_ndtr(gamma)
        return np.mean(terms, axis=1)


def mes_select(posterior: GpPosterior, space: SpaceSpec,
               opts: SolverOptions = SolverOptions(), *,
               num_mins: int = 100, num_features: int = 500,
               rng_seed: int = 0) -> np.ndarray:
    """Entropy search about the value of the minimum.

    Candidate minima are the optimized minima of spectral posterior
    samples; the acquisition is the average information gain about them.
    """
    basis = build_basis(posterior.params, num_features=num_features,
                        rng_seed=rng_seed)
    samples = draw_samples(basis, posterior.dataset,
                           posterior.params.noise_variance, count=num_mins,
                           rng_seed=rng_seed + 1)
    mins = np.empty(num_mins)
    for k, sample in enumerate(samples):
        _, mins[k] = optimize_over_space(sample, space, opts, maximize=False,
                                         method="lbfgs")
    fn = _MesObjective(posterior, mins)
    z, _ = optimize_over_space(fn, space, opts, maximize=True)
    return z


def _cross_rows(xs: np.ndarray, ts: np.ndarray) -> np.ndarray:
    return np.hstack([np.repeat(xs, ts.shape[0], axis=0),
                      np.tile(ts, (xs.shape[0], 1))])


def _candidate_grid(space: SpaceSpec, grid_per_dim: int, max_candidates: int,
                    rng: np.random.Generator) -> np.ndarray:
    """Random-grid candidates: uniform draws over the continuous block
    crossed with every discrete candidate, capped by subsampling."""
    xdom, tdom = space.controllable, space.uncontrollable
    n_cont = (xdom.dim if isinstance(xdom, Box) else 0) \
        + (tdom.dim if isinstance(tdom, Box) else 0)
    n_rows = grid_per_dim ** n_cont if n_cont else 1
    if isinstance(xdom, Box) and isinstance(tdom, Box):
        rows = np.hstack([xdom.sample(rng, n_rows), tdom.sample(rng, n_rows)])
    elif isinstance(xdom, Box):
        rows = _cross_rows(xdom.sample(rng, n_rows), tdom.points)
    elif isinstance(tdom, Box):
        rows = _cross_rows(xdom.points, tdom.sample(rng, n_rows))
    else:
        rows = _cross_rows(xdom.points, tdom.points)
    if rows.shape[0] > max_candidates:
        idx = rng.choice(rows.shape[0], size=max_candidates, replace=False)
        rows = rows[np.sort(idx)]
    return rows


def kg_select(posterior: GpPosterior, space: SpaceSpec, *,
              grid_per_dim: int = 50, num_fantasies: int = 32,
              max_candidates: int = 2500, rng_seed: int = 0) -> np.ndarray:
    """Discrete knowledge gradient on a random candidate grid.

    Scores each candidate by the expected drop of the grid minimum of the
    posterior mean after a fantasy observation there, using common random
    numbers across candidates.
    """
    rng = np.random.default_rng(rng_seed)
    rows = _candidate_grid(space, grid_per_dim, max_candidates, rng)
    mean, cov = predict(posterior, rows)
    noise = posterior.params.noise_variance
    xi = rng.standard_normal(num_fantasies)
    base = float(np.min(mean))
    best_j, best_v = 0, -math.inf
    for j in range(rows.shape[0]):
        denom = cov[j, j] + noise
        if denom <= 1e-300:
            value = 0.0
        else:
            s = cov[:, j] / math.sqrt(denom)
            fantasy_mins = np.min(mean[:, None] + s[:, None] * xi[None, :],
                                  axis=0)
            value = base - float(np.mean(fantasy_mins))
        if value > best_v:
            best_v = value
            best_j = j
    return rows[best_j].copy()


def select_point(name: str, posterior: GpPosterior, space: SpaceSpec, *,
                 config: BaselineConfig = BaselineConfig(),
                 opts: SolverOptions = SolverOptions(),
                 rng_seed: int = 0) -> np.ndarray:
    """Dispatch a baseline by name ('random' draws uniformly)."""
    if name == "ucb":
        return ucb_select(posterior, space, opts, beta_sqrt=config.beta_sqrt)
    if name == "stableopt":
        return stableopt_select(posterior, space, opts,
                                beta_sqrt=config.beta_sqrt)
    if name == "ei":
        return ei_select(posterior, space, opts)
    if name == "mes":
        return mes_select(posterior, space, opts,
                          num_mins=config.mes_num_mins,
                          num_features=config.mes_num_features,
                          rng_seed=rng_seed)
    if name == "kg":
        return kg_select(posterior, space,
                         grid_per_dim=config.kg_grid_per_dim,
                         num_fantasies=config.kg_num_fantasies,
                         max_candidates=config.kg_max_candidates,
                         rng_seed=rng_seed)
    if name == "random":
        return space.sample_joint(np.random.default_rng(rng_seed), 1)[0]
    raise ConfigError(f"unknown baseline '{name}'")
