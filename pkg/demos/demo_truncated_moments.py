"""Box-truncated moments of a correlated bivariate normal, checked
against rejection sampling.

Run: python3 demos/demo_truncated_moments.py
"""

import numpy as np

from robustbo import BoxBounds, truncated_moments_2d


def main():
    mean = np.array([0.3, -0.2])
    cov = np.array([[1.0, 0.7], [0.7, 1.2]])
    bounds = BoxBounds(np.array([-0.5, -np.inf]), np.array([1.5, 0.8]))

    tm = truncated_moments_2d(mean, cov, bounds)
    print("analytic:")
    print(f"  mass {tm.mass:.6f}")
    print(f"  mean {tm.mean}")
    print(f"  cov\n{tm.covariance}")

    rng = np.random.default_rng(0)
    L = np.linalg.cholesky(cov)
    x = rng.standard_normal((2_000_000, 2)) @ L.T + mean
    keep = x[np.all((x >= bounds.lower) & (x <= bounds.upper), axis=1)]
    print(f"\nmonte carlo ({keep.shape[0]} accepted):")
    print(f"  mass {keep.shape[0] / x.shape[0]:.6f}")
    print(f"  mean {keep.mean(axis=0)}")
    print(f"  cov\n{np.cov(keep.T)}")


if __name__ == "__main__":
    main()
