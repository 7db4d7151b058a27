"""Sparse-spectrum GP approximation.

Random cosine features of the squared-exponential kernel give analytic
posterior function samples f(z) = a^T phi(z) with cheap exact gradients.
One basis is shared by all samples of a batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import NumericalError
from .gp import Dataset, KernelParams

__all__ = ["SpectralBasis", "SpectralSample", "build_basis", "draw_samples"]

DEFAULT_NUM_FEATURES = 500


@dataclass(frozen=True)
class SpectralBasis:
    """Random cosine feature map phi_i(z) = amplitude * cos(w_i.z + b_i)."""

    frequencies: np.ndarray  # (F, d)
    phases: np.ndarray       # (F,), in [0, 2*pi)
    signal_variance: float

    @property
    def num_features(self) -> int:
        return self.phases.size

    @property
    def dim(self) -> int:
        return self.frequencies.shape[1]

    @property
    def amplitude(self) -> float:
        return math.sqrt(2.0 * self.signal_variance / self.num_features)

    def features(self, Z) -> np.ndarray:
        """Feature matrix with one row per input point, shape (m, F)."""
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        return self.amplitude * np.cos(Z @ self.frequencies.T + self.phases)

    def feature_grads(self, z) -> np.ndarray:
        """Jacobian d phi / d z at a single point, shape (F, d)."""
        z = np.asarray(z, dtype=float).ravel()
        s = np.sin(self.frequencies @ z + self.phases)
        return -self.amplitude * s[:, None] * self.frequencies


@dataclass(frozen=True)
class SpectralSample:
    """One posterior function sample a^T phi(z); callable and differentiable."""

    basis: SpectralBasis
    weights: np.ndarray  # (F,)

    def __call__(self, Z):
        Z = np.asarray(Z, dtype=float)
        single = Z.ndim == 1
        out = self.basis.features(Z) @ self.weights
        return float(out[0]) if single else out

    def gradient(self, z) -> np.ndarray:
        """Analytic gradient of the sample at a single point."""
        return self.weights @ self.basis.feature_grads(z)


def build_basis(params: KernelParams, num_features: int = DEFAULT_NUM_FEATURES,
                rng_seed: int = 0) -> SpectralBasis:
    """Draw a feature basis from the Fourier dual of the SE-ARD kernel.

    Frequencies are Gaussian with per-dimension std 1/l_d; phases uniform
    on [0, 2*pi).  Deterministic given the seed.
    """
    if num_features < 1:
        raise ValueError("need at least one feature")
    rng = np.random.default_rng(rng_seed)
    freqs = rng.standard_normal((num_features, params.dim)) / params.lengthscales
    phases = rng.uniform(0.0, 2.0 * math.pi, size=num_features)
    return SpectralBasis(freqs, phases, params.signal_variance)


def draw_samples(basis: SpectralBasis, dataset: Dataset, noise_variance: float,
                 count: int = 1, rng_seed: int = 0) -> list[SpectralSample]:
    """Sample ``count`` weight vectors from the feature-space posterior.

    Weights follow N(A^-1 Phi^T y, noise * A^-1) with A = Phi^T Phi +
    noise * I; with no data this reduces to the standard normal prior on
    the (already amplitude-scaled) features.
    """
    if count < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(rng_seed)
    F = basis.num_features
    xi = rng.standard_normal((F, count))
    if dataset.size == 0:
        weights = xi
    else:
        Phi = basis.features(dataset.inputs)  # (n, F)
        A = Phi.T @ Phi
        reg = noise_variance if noise_variance > 0.0 else 1e-10 * basis.signal_variance
        A[np.diag_indices_from(A)] += reg
        try:
            L = linalg.cholesky(A, lower=True)
        except linalg.LinAlgError as exc:
            raise NumericalError("feature Gram matrix not factorizable") from exc
        mean = linalg.cho_solve((L, True), Phi.T @ dataset.observations)
        # cov = reg * A^-1, so scaled solves against L^T give exact draws
        weights = mean[:, None] + math.sqrt(reg) * linalg.solve_triangular(
            L.T, xi, lower=False)
    return [SpectralSample(basis, weights[:, c].copy()) for c in range(count)]
