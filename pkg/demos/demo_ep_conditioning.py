"""Condition a correlated Gaussian prior on a box via EP and compare the
approximation against rejection sampling.

Run: python3 demos/demo_ep_conditioning.py
"""

import numpy as np

from robustbo import BoxBounds, EpOptions, ep_box_condition


def main():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 3))
    cov = A @ A.T + 0.5 * np.eye(3)
    mean = np.array([0.5, -0.3, 0.1])
    bounds = BoxBounds(np.array([-1.0, -np.inf, -0.5]),
                       np.array([1.0, 0.5, np.inf]))

    res = ep_box_condition(mean, cov, bounds, EpOptions(tol=1e-10))
    print(f"converged {res.converged} after {res.iterations} sweeps")
    print(f"log mass  {res.log_mass:.4f}")
    print(f"mean      {res.mean}")
    print(f"cov diag  {np.diag(res.covariance)}")

    L = np.linalg.cholesky(cov)
    x = rng.standard_normal((4_000_000, 3)) @ L.T + mean
    keep = x[np.all((x >= bounds.lower) & (x <= bounds.upper), axis=1)]
    print(f"\nmonte carlo ({keep.shape[0]} accepted):")
    print(f"log mass  {np.log(keep.shape[0] / x.shape[0]):.4f}")
    print(f"mean      {keep.mean(axis=0)}")
    print(f"cov diag  {keep.var(axis=0, ddof=1)}")


if __name__ == "__main__":
    main()
