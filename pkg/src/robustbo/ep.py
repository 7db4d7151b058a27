"""Expectation propagation for a multivariate Gaussian restricted to a box.

Each coordinate with at least one finite bound carries a Gaussian site in
natural parameters (tau, nu).  Sites are updated in index order from the
cavity's exact univariate truncated moments, with damping; the global
moments are rank-1-updated per site and recomputed in a numerically stable
form at the end of every sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .truncated import BoxBounds, truncated_moments_1d

__all__ = ["EpOptions", "EpResult", "build_res_bounds", "ep_box_condition"]


@dataclass(frozen=True)
class EpOptions:
    tol: float = 1e-6
    max_iter: int = 100
    damping: float = 0.8


@dataclass(frozen=True)
class EpResult:
    mean: np.ndarray
    covariance: np.ndarray
    log_mass: float
    converged: bool
    iterations: int


def _refresh(mu0, Sigma0, tau, nu):
    """Moments of N(mu0, Sigma0) times the site product, via the inversion
    lemma so only a positive definite system is factorized."""
    n = tau.size
    srt = np.sqrt(tau)
    B = np.eye(n) + srt[:, None] * Sigma0 * srt[None, :]
    L = linalg.cholesky(B, lower=True)
    T = linalg.solve_triangular(L, srt[:, None] * Sigma0, lower=True)
    Sigma = Sigma0 - T.T @ T
    w = mu0 + Sigma0 @ nu
    Tw = linalg.solve_triangular(L, srt * w, lower=True)
    mu = w - T.T @ Tw
    return mu, 0.5 * (Sigma + Sigma.T)


def ep_box_condition(prior_mean, prior_cov, bounds: BoxBounds,
                     opts: EpOptions = EpOptions()) -> EpResult:
    """Moment-matched Gaussian approximation of the prior restricted to
    ``bounds``.

    Coordinates whose bounds are both infinite carry no site and stay
    untouched.  A site whose cavity precision turns non-positive is pulled
    halfway toward neutral and retried; if it stays ill-defined it is
    skipped for the sweep and the result is flagged unconverged.
    """
    mu0 = np.asarray(prior_mean, dtype=float).ravel().copy()
    Sigma0 = np.asarray(prior_cov, dtype=float)
    n = mu0.size
    if Sigma0.shape != (n, n):
        raise ValueError("prior covariance shape does not match the mean")
    if bounds.dim != n:
        raise ValueError("bounds length does not match the dimension")

    active = [i for i in range(n)
              if bounds.lower[i] != -math.inf or bounds.upper[i] != math.inf]
    if not active:
        return EpResult(mu0, 0.5 * (Sigma0 + Sigma0.T), 0.0, True, 1)

    tau = np.zeros(n)
    nu = np.zeros(n)
    mu = mu0.copy()
    Sigma = 0.5 * (Sigma0 + Sigma0.T).copy()

    def apply_site_delta(i, dtau, dnu):
        nonlocal mu, Sigma
        sig_ii = Sigma[i, i]
        denom = 1.0 + dtau * sig_ii
        if denom <= 1e-14:
            return False
        col = Sigma[:, i].copy()
        Sigma -= (dtau / denom) * np.outer(col, col)
        mu += ((dnu - dtau * mu[i]) / denom) * col
        tau[i] += dtau
        nu[i] += dnu
        return True

    converged = False
    sweeps = 0
    clean_sweep = True
    for sweep in range(opts.max_iter):
        sweeps = sweep + 1
        delta_max = 0.0
        clean_sweep = True
        for i in active:
            sig_ii = Sigma[i, i]
            if sig_ii <= 0.0 or not math.isfinite(sig_ii):
                mu, Sigma = _refresh(mu0, Sigma0, tau, nu)
                sig_ii = Sigma[i, i]
            if sig_ii <= 0.0 or not math.isfinite(sig_ii):
                clean_sweep = False
                continue
            tau_cav = 1.0 / sig_ii - tau[i]
            nu_cav = mu[i] / sig_ii - nu[i]
            if tau_cav <= 0.0 and tau[i] > 0.0:
                # pull the offending site halfway toward neutral, then retry
                if apply_site_delta(i, -0.5 * tau[i], -0.5 * nu[i]):
                    sig_ii = Sigma[i, i]
                    tau_cav = 1.0 / sig_ii - tau[i]
                    nu_cav = mu[i] / sig_ii - nu[i]
            v_cav = 1.0 / tau_cav if tau_cav > 0.0 else math.inf
            m_cav = nu_cav * v_cav
            if not (0.0 < v_cav < math.inf and math.isfinite(m_cav)):
                clean_sweep = False
                continue
            m_t, v_t, _ = truncated_moments_1d(m_cav, v_cav,
                                               bounds.lower[i], bounds.upper[i])
            if not (v_t > 0.0 and math.isfinite(v_t) and math.isfinite(m_t)):
                clean_sweep = False
                continue
            tau_new = max(1.0 / v_t - tau_cav, 0.0)
            nu_new = m_t / v_t - nu_cav
            if not (math.isfinite(tau_new) and math.isfinite(nu_new)):
                clean_sweep = False
                continue
            dtau = opts.damping * (tau_new - tau[i])
            dnu = opts.damping * (nu_new - nu[i])
            if not apply_site_delta(i, dtau, dnu):
                clean_sweep = False
                continue
            delta_max = max(delta_max, abs(dtau), abs(dnu))
        mu, Sigma = _refresh(mu0, Sigma0, tau, nu)
        if delta_max < opts.tol:
            converged = clean_sweep
            break

    cov = 0.5 * (Sigma + Sigma.T)
    evals = np.linalg.eigvalsh(cov)
    if evals[0] < 0.0:
        w, V = np.linalg.eigh(cov)
        cov = (V * np.maximum(w, 0.0)) @ V.T
        cov = 0.5 * (cov + cov.T)
    log_mass = _ep_log_mass(mu0, Sigma0, mu, Sigma, tau, nu, bounds, active)
    return EpResult(mu, cov, log_mass, converged, sweeps)


def _ep_log_mass(mu0, Sigma0, mu, Sigma, tau, nu, bounds, active):
    """Standard EP evidence: site normalizers against their cavities plus
    the Gaussian convolution of prior and site product."""
    act = [i for i in active if tau[i] > 0.0]
    if not act:
        return 0.0
    total = 0.0
    m_site = np.array([nu[i] / tau[i] for i in act])
    v_site = np.array([1.0 / tau[i] for i in act])
    for j, i in enumerate(act):
        sig_ii = Sigma[i, i]
        if sig_ii <= 0.0 or not math.isfinite(sig_ii):
            continue
        tau_cav = 1.0 / sig_ii - tau[i]
        if not 0.0 < tau_cav < math.inf:
            continue
        v_cav = 1.0 / tau_cav
        m_cav = (mu[i] / sig_ii - nu[i]) * v_cav
        if not math.isfinite(m_cav):
            continue
        _, _, mass = truncated_moments_1d(m_cav, v_cav,
                                          bounds.lower[i], bounds.upper[i])
        total += math.log(max(mass, 1e-300))
        s2 = v_site[j] + v_cav
        total += 0.5 * (math.log(2.0 * math.pi * s2)
                        + (m_site[j] - m_cav) ** 2 / s2)
    C = Sigma0[np.ix_(act, act)] + np.diag(v_site)
    try:
        L = linalg.cholesky(C, lower=True)
    except linalg.LinAlgError:
        return total  # prior-plus-site system degenerate; report partial value
    r = linalg.solve_triangular(L, m_site - mu0[act], lower=True)
    total += -0.5 * (len(act) * math.log(2.0 * math.pi) + float(r @ r)) \
        - float(np.sum(np.log(np.diag(L))))
    return total


def build_res_bounds(g_values_at_train, f_star: float,
                     first_block_lower: float = -math.inf) -> BoxBounds:
    """Box for the stacked vector of training-location values followed by
    per-location adversarial-best values.

    The first block is capped above by each location's adversarial best g_i
    (unbounded below by default); the second block is confined to
    [f_star, g_i].  Coordinates whose interval would be empty (g_i below
    the robust value, possible under sample noise) are relaxed to an
    unbounded lower end; callers count those separately.
    """
    g = np.asarray(g_values_at_train, dtype=float).ravel()
    if g.size < 1:
        raise ValueError("need at least one training location")
    t = g.size
    lower = np.concatenate([np.full(t, first_block_lower), np.full(t, f_star)])
    upper = np.concatenate([g, g])
    lower[lower >= upper] = -math.inf
    return BoxBounds(lower, upper)
