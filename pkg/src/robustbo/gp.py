"""Exact GP regression with an anisotropic squared-exponential kernel.

Zero prior mean throughout; benchmark outputs are standardized instead.
Observation noise is part of the kernel parameters and is held fixed
during hyperparameter fitting.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import linalg, optimize

from .errors import NumericalError

__all__ = [
    "Dataset",
    "GpPosterior",
    "KernelParams",
    "fit_hyperparameters",
    "fit_posterior",
    "kernel_eval",
    "kernel_lengthscale_grad",
    "kernel_matrix",
    "log_marginal_likelihood",
    "predict",
    "predict_marginals",
]

#: box applied to the signal std and every lengthscale during fitting
HYPER_BOUNDS = (1e-5, 10.0)
#: predictive variances below this are a hard numerical error, above it they clamp to 0
VAR_CLAMP_TOL = -1e-10

_JITTER_START = 1e-10
_JITTER_MAX = 1e-4


@dataclass(frozen=True)
class KernelParams:
    """Squared-exponential kernel parameters with per-dimension lengthscales."""

    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float)).copy()
        if ls.ndim != 1 or not np.all(ls > 0.0):
            raise ValueError("lengthscales must be a vector of positive reals")
        if not self.signal_variance > 0.0:
            raise ValueError("signal variance must be positive")
        if self.noise_variance < 0.0:
            raise ValueError("noise variance must be nonnegative")
        ls.flags.writeable = False
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))

    @property
    def dim(self) -> int:
        return self.lengthscales.size


@dataclass(frozen=True)
class Dataset:
    """Observed input/output pairs over the joint controllable x uncontrollable space."""

    inputs: np.ndarray        # (n, d_c + d_u)
    observations: np.ndarray  # (n,)
    dim_controllable: int
    dim_uncontrollable: int

    def __post_init__(self):
        X = np.asarray(self.inputs, dtype=float)
        y = np.asarray(self.observations, dtype=float).ravel()
        d = self.dim_controllable + self.dim_uncontrollable
        X = X.reshape(-1, d).copy()
        if X.shape[0] != y.size:
            raise ValueError("inputs and observations must have equal length")
        y = y.copy()
        X.flags.writeable = False
        y.flags.writeable = False
        object.__setattr__(self, "inputs", X)
        object.__setattr__(self, "observations", y)

    @classmethod
    def empty(cls, dim_controllable: int, dim_uncontrollable: int) -> "Dataset":
        d = dim_controllable + dim_uncontrollable
        return cls(np.zeros((0, d)), np.zeros(0), dim_controllable, dim_uncontrollable)

    @property
    def size(self) -> int:
        return self.observations.size

    @property
    def dim(self) -> int:
        return self.dim_controllable + self.dim_uncontrollable

    def append(self, z, y: float) -> "Dataset":
        z = np.asarray(z, dtype=float).reshape(1, self.dim)
        return Dataset(np.vstack([self.inputs, z]),
                       np.append(self.observations, float(y)),
                       self.dim_controllable, self.dim_uncontrollable)


def kernel_matrix(A, B, params: KernelParams) -> np.ndarray:
    """Kernel values between the rows of ``A`` (m, d) and ``B`` (n, d)."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape[-1] != params.dim or B.shape[-1] != params.dim:
        raise ValueError("input dimension does not match the lengthscale vector")
    As = A / params.lengthscales
    Bs = B / params.lengthscales
    sq = (np.sum(As * As, axis=-1)[:, None] + np.sum(Bs * Bs, axis=-1)[None, :]
          - 2.0 * As @ Bs.T)
    np.maximum(sq, 0.0, out=sq)
    return params.signal_variance * np.exp(-0.5 * sq)


def kernel_eval(p1, p2, params: KernelParams) -> float:
    """Single kernel evaluation k(p1, p2)."""
    p1 = np.asarray(p1, dtype=float).ravel()
    p2 = np.asarray(p2, dtype=float).ravel()
    if p1.size != params.dim or p2.size != params.dim:
        raise ValueError("input dimension does not match the lengthscale vector")
    d = (p1 - p2) / params.lengthscales
    return float(params.signal_variance * math.exp(-0.5 * float(d @ d)))


def kernel_lengthscale_grad(p1, p2, params: KernelParams) -> np.ndarray:
    """Gradient of kernel_eval with respect to each lengthscale."""
    p1 = np.asarray(p1, dtype=float).ravel()
    p2 = np.asarray(p2, dtype=float).ravel()
    diff = p1 - p2
    k = kernel_eval(p1, p2, params)
    return k * diff * diff / params.lengthscales ** 3


@dataclass(frozen=True)
class GpPosterior:
    """Fitted GP: kernel parameters, data and the Cholesky pieces of K + noise."""

    params: KernelParams
    dataset: Dataset
    chol_factor: np.ndarray  # lower triangular
    alpha: np.ndarray        # (K + noise I)^-1 y

    @property
    def size(self) -> int:
        return self.dataset.size


def _chol_with_jitter(K: np.ndarray, scale: float) -> np.ndarray:
    try:
        return linalg.cholesky(K, lower=True)
    except linalg.LinAlgError:
        pass
    jitter = _JITTER_START * scale
    n = K.shape[0]
    while jitter <= _JITTER_MAX * scale:
        try:
            return linalg.cholesky(K + jitter * np.eye(n), lower=True)
        except linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError(
        f"covariance factorization failed up to jitter {_JITTER_MAX * scale:.3e}")


def fit_posterior(dataset: Dataset, params: KernelParams) -> GpPosterior:
    """Factorize K + noise_variance*I and solve for alpha.

    An empty dataset yields the prior (empty factors); predictions then
    fall back to the prior mean and covariance.
    """
    if params.dim != dataset.dim:
        raise ValueError("kernel dimensionality does not match the dataset")
    n = dataset.size
    if n == 0:
        return GpPosterior(params, dataset, np.zeros((0, 0)), np.zeros(0))
    K = kernel_matrix(dataset.inputs, dataset.inputs, params)
    K[np.diag_indices_from(K)] += params.noise_variance
    L = _chol_with_jitter(K, params.signal_variance)
    alpha = linalg.cho_solve((L, True), dataset.observations)
    return GpPosterior(params, dataset, L, alpha)


def predict(posterior: GpPosterior, points) -> tuple[np.ndarray, np.ndarray]:
    """Joint predictive mean vector and covariance matrix at ``points``.

    The covariance is symmetrized; tiny negative diagonal entries clamp to
    zero, anything below ``VAR_CLAMP_TOL`` raises.
    """
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    prior = kernel_matrix(Z, Z, posterior.params)
    if posterior.size == 0:
        mean = np.zeros(Z.shape[0])
        cov = prior
    else:
        Kzx = kernel_matrix(Z, posterior.dataset.inputs, posterior.params)
        mean = Kzx @ posterior.alpha
        V = linalg.solve_triangular(posterior.chol_factor, Kzx.T, lower=True)
        cov = prior - V.T @ V
    cov = 0.5 * (cov + cov.T)
    diag = np.diag(cov)
    if np.any(diag < VAR_CLAMP_TOL):
        raise NumericalError(f"predictive variance {diag.min():.3e} below clamp tolerance")
    np.fill_diagonal(cov, np.maximum(diag, 0.0))
    return mean, cov


def predict_marginals(posterior: GpPosterior, points) -> tuple[np.ndarray, np.ndarray]:
    """Marginal predictive means and variances (no cross terms), vectorized."""
    Z = np.atleast_2d(np.asarray(points, dtype=float))
    if posterior.size == 0:
        return np.zeros(Z.shape[0]), np.full(Z.shape[0], posterior.params.signal_variance)
    Kzx = kernel_matrix(Z, posterior.dataset.inputs, posterior.params)
    mean = Kzx @ posterior.alpha
    V = linalg.solve_triangular(posterior.chol_factor, Kzx.T, lower=True)
    var = posterior.params.signal_variance - np.sum(V * V, axis=0)
    if np.any(var < VAR_CLAMP_TOL):
        raise NumericalError(f"predictive variance {var.min():.3e} below clamp tolerance")
    return mean, np.maximum(var, 0.0)


def log_marginal_likelihood(posterior: GpPosterior) -> float:
    """Log marginal likelihood of the data under the posterior's kernel."""
    n = posterior.size
    if n == 0:
        return 0.0
    y = posterior.dataset.observations
    quad = float(y @ posterior.alpha)
    logdet = 2.0 * float(np.sum(np.log(np.diag(posterior.chol_factor))))
    return -0.5 * (quad + logdet + n * math.log(2.0 * math.pi))


def _nll_and_grad(log_params: np.ndarray, X: np.ndarray, y: np.ndarray,
                  noise_variance: float):
    """Negative log marginal likelihood and its gradient in log-parameters
    (log signal std, log lengthscales)."""
    n, d = X.shape
    sv = math.exp(log_params[0])
    ls = np.exp(log_params[1:])
    diffs = X[:, None, :] - X[None, :, :]
    sq = (diffs / ls) ** 2
    Kf = sv * sv * np.exp(-0.5 * np.sum(sq, axis=-1))
    K = Kf + noise_variance * np.eye(n)
    L = linalg.cholesky(K, lower=True)
    alpha = linalg.cho_solve((L, True), y)
    nll = 0.5 * float(y @ alpha) + float(np.sum(np.log(np.diag(L)))) \
        + 0.5 * n * math.log(2.0 * math.pi)
    Kinv = linalg.cho_solve((L, True), np.eye(n))
    A = np.outer(alpha, alpha) - Kinv
    grad = np.empty(1 + d)
    grad[0] = -float(np.sum(A * Kf))          # d/d log sigma_v of -lml
    for j in range(d):
        grad[1 + j] = -0.5 * float(np.sum(A * Kf * sq[..., j]))
    return nll, grad


def fit_hyperparameters(dataset: Dataset, bounds=None, fixed_noise: float = 0.001,
                        num_restarts: int = 5, rng_seed: int = 0) -> KernelParams:
    """Maximum-likelihood kernel parameters with the noise held fixed.

    Multi-restart bounded quasi-Newton maximization over the log of the
    signal std and the lengthscales.  ``bounds`` is a (low, high) pair
    applied to all of them; defaults to ``HYPER_BOUNDS``.  If every restart
    fails the bound midpoint is returned with a warning.
    """
    if dataset.size < 1:
        raise ValueError("hyperparameter fitting needs at least 1 point")
    lo, hi = bounds if bounds is not None else HYPER_BOUNDS
    if not 0.0 < lo <= hi:
        raise ValueError("bounds must satisfy 0 < low <= high")
    X = dataset.inputs
    y = dataset.observations
    d = dataset.dim

    if lo == hi:
        return KernelParams(lo * lo, np.full(d, lo), fixed_noise)

    log_lo, log_hi = math.log(lo), math.log(hi)
    opt_bounds = [(log_lo, log_hi)] * (1 + d)
    rng = np.random.default_rng(rng_seed)

    # first start: data-driven guess, remaining starts uniform in log space
    sv0 = np.clip(np.std(y) if np.std(y) > 0 else 1.0, lo, hi)
    span = np.ptp(X, axis=0)
    span[span == 0.0] = 1.0
    ls0 = np.clip(0.3 * span, lo, hi)
    starts = [np.log(np.concatenate([[sv0], ls0]))]
    for _ in range(num_restarts - 1):
        starts.append(rng.uniform(log_lo, log_hi, size=1 + d))

    best = None
    best_val = math.inf
    for s in starts:
        try:
            res = optimize.minimize(_nll_and_grad, s, args=(X, y, fixed_noise),
                                    jac=True, method="L-BFGS-B", bounds=opt_bounds)
        except (linalg.LinAlgError, NumericalError):
            continue
        if np.isfinite(res.fun) and res.fun < best_val:
            best_val = res.fun
            best = res.x
    if best is None:
        warnings.warn("all likelihood restarts failed; returning bound-midpoint "
                      "kernel parameters", RuntimeWarning)
        mid = 0.5 * (lo + hi)
        return KernelParams(mid * mid, np.full(d, mid), fixed_noise)
    sv = math.exp(best[0])
    ls = np.exp(best[1:])
    return KernelParams(sv * sv, np.clip(ls, lo, hi), fixed_noise)
