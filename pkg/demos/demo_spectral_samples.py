"""Draw analytic posterior sample paths from the random-feature basis and
check their gradients against finite differences.

Run: python3 demos/demo_spectral_samples.py [--out demo_out]
"""

import argparse
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from robustbo import (Dataset, KernelParams, build_basis, draw_samples,
                      fit_posterior, predict_marginals)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--features", type=int, default=800)
    ap.add_argument("--out", default="demo_out")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    X = rng.uniform(size=(12, 1))
    y = np.sin(6.0 * X[:, 0]) + 0.05 * rng.standard_normal(12)
    data = Dataset(X, y, 1, 0)
    params = KernelParams(signal_variance=1.0, lengthscales=np.array([0.2]),
                          noise_variance=1e-3)

    basis = build_basis(params, num_features=args.features, rng_seed=args.seed)
    samples = draw_samples(basis, data, 1e-3, count=3, rng_seed=args.seed + 1)

    z = np.array([0.37])
    h = 1e-6
    for i, s in enumerate(samples):
        fd = (s(z + h) - s(z - h)) / (2 * h)
        print(f"sample {i}: grad {s.gradient(z)[0]: .5f}  fd {float(fd): .5f}")

    grid = np.linspace(0.0, 1.0, 300)[:, None]
    mean, var = predict_marginals(fit_posterior(data, params), grid)
    sd = np.sqrt(var)

    os.makedirs(args.out, exist_ok=True)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.fill_between(grid[:, 0], mean - 2 * sd, mean + 2 * sd,
                    color="0.85", label="exact 2 sd")
    for i, s in enumerate(samples):
        ax.plot(grid[:, 0], s(grid), lw=1, label=f"sample {i}")
    ax.plot(X[:, 0], y, "k.", ms=8)
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = os.path.join(args.out, "spectral_samples.svg")
    fig.savefig(path)
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
