"""Robust (min over x, max over theta) optima of closed-form objectives.

Run: python3 demos/demo_minimax.py
"""

import numpy as np

from robustbo import (Box, FiniteSet, SolverOptions, SpaceSpec, make_problem,
                      robust_optimum)


def main():
    # quadratic gap: f(x, theta) = (x - theta)^2 with theta in {0, 1}.
    # worst case is max((x)^2, (x-1)^2), minimized at x = 1/2 with value 1/4
    def gap(Z):
        Z = np.atleast_2d(Z)
        return (Z[:, 0] - Z[:, 1]) ** 2

    gap.supports_batch = True
    space = SpaceSpec(Box(np.array([[0.0, 1.0]])),
                      FiniteSet(np.array([0.0, 1.0])))
    chars = robust_optimum(gap, space, SolverOptions(rng_seed=0))
    x, theta = chars.robust_location
    print(f"quadratic gap: f* = {chars.robust_value:.6f} "
          f"at x = {x[0]:.6f}, theta = {theta[0]:.0f}")

    problem = make_problem("synthetic_polynomial")
    chars = robust_optimum(problem.objective, problem.space,
                           SolverOptions(rng_seed=1))
    x, theta = chars.robust_location
    print(f"synthetic polynomial: f* = {chars.robust_value:.6f} "
          f"at x = ({x[0]:.4f}, {x[1]:.4f})")
    print(f"  worst perturbation: ({theta[0]:.4f}, {theta[1]:.4f})")


if __name__ == "__main__":
    main()
