"""Fit GP hyperparameters to noisy 1-D draws and plot the posterior.

Run: python3 demos/demo_gp_fit.py [--seed 0 --out demo_out]
"""

import argparse
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from robustbo import Dataset, fit_hyperparameters, fit_posterior, predict_marginals


def target(x):
    return np.sin(3.0 * x) + 0.5 * np.cos(7.0 * x)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--n", type=int, default=25)
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.uniform(0.0, 1.0, size=(args.n, 1))
    y = target(X[:, 0]) + 0.03 * rng.standard_normal(args.n)
    data = Dataset(X, y, 1, 0)

    params = fit_hyperparameters(data, fixed_noise=1e-3, rng_seed=args.seed)
    print(f"signal variance  {params.signal_variance:.4f}")
    print(f"lengthscale      {params.lengthscales[0]:.4f}")

    posterior = fit_posterior(data, params)
    grid = np.linspace(0.0, 1.0, 400)[:, None]
    mean, var = predict_marginals(posterior, grid)
    sd = np.sqrt(var)

    os.makedirs(args.out, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(grid[:, 0], target(grid[:, 0]), "k--", lw=1, label="truth")
    ax.plot(grid[:, 0], mean, "C0", label="posterior mean")
    ax.fill_between(grid[:, 0], mean - 2 * sd, mean + 2 * sd,
                    color="C0", alpha=0.2, label="2 sd")
    ax.plot(X[:, 0], y, "C3.", ms=8, label="observations")
    ax.legend()
    ax.set_xlabel("x")
    fig.tight_layout()
    path = os.path.join(args.out, "gp_fit.svg")
    fig.savefig(path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
