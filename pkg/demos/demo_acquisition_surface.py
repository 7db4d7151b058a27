"""Acquisition landscape on the Branin robust problem after a handful of
observations.

Run: python3 demos/demo_acquisition_surface.py [--out demo_out]
"""

import argparse
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from robustbo import (Dataset, fit_hyperparameters, fit_posterior,
                      make_problem, maximize_acquisition, prepare_iteration,
                      res_values)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--observations", type=int, default=6)
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()

    problem = make_problem("branin")
    space = problem.space
    rng = np.random.default_rng(args.seed)
    Z = space.sample_joint(rng, args.observations)
    y = problem.objective(Z) + problem.noise_std * \
        rng.standard_normal(args.observations)
    data = Dataset(Z, y, space.dim_controllable, space.dim_uncontrollable)

    params = fit_hyperparameters(data, fixed_noise=1e-3, rng_seed=args.seed)
    posterior = fit_posterior(data, params)
    state = prepare_iteration(posterior, space, num_samples=2,
                              num_features=400, rng_seed=args.seed)

    xs = np.linspace(0.0, 1.0, 120)
    thetas = space.uncontrollable.points[:, 0]
    alpha = np.empty((thetas.size, xs.size))
    for j, t in enumerate(thetas):
        rows = np.column_stack([xs, np.full_like(xs, t)])
        alpha[j] = res_values(state, rows)

    z_next = maximize_acquisition(state)
    print(f"dropped samples: {state.counters.get('dropped_samples', 0)}")
    print(f"next evaluation: x = {z_next[0]:.4f}, theta = {z_next[1]:.4f}")

    os.makedirs(args.out, exist_ok=True)
    fig, ax = plt.subplots(figsize=(7, 4))
    im = ax.pcolormesh(xs, thetas, alpha, shading="nearest", cmap="viridis")
    ax.plot(Z[:, 0], Z[:, 1], "wx", ms=8, label="observed")
    ax.plot(z_next[0], z_next[1], "r*", ms=14, label="next")
    ax.set_xlabel("x")
    ax.set_ylabel("theta")
    fig.colorbar(im, label="acquisition")
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    path = os.path.join(args.out, "acquisition_surface.svg")
    fig.savefig(path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
