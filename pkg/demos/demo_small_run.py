"""A short end-to-end optimization run with aggregation and a regret plot.

Run: python3 demos/demo_small_run.py [--acquisition res --iterations 10]
"""

import argparse

from robustbo import RunConfig, aggregate_and_plot, run_all


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--problem", default="sinus_linear")
    ap.add_argument("--acquisition", default="res")
    ap.add_argument("--iterations", type=int, default=10)
    ap.add_argument("--repetitions", type=int, default=2)
    ap.add_argument("--out", default="demo_out/small_run")
    args = ap.parse_args()

    cfg = RunConfig(problem=args.problem, acquisition=args.acquisition,
                    iterations=args.iterations, initial_design=2,
                    repetitions=args.repetitions, base_seed=0,
                    num_features=300, reference_grid=200,
                    outer_restarts=4, inner_restarts=3, out_dir=args.out)
    records = run_all(cfg)
    for rec in records:
        print(f"run {rec.run_id}: final regret "
              f"{rec.summary['final_regret']:.5f}, "
              f"counters {rec.summary['counters']}")
    for path in aggregate_and_plot(records, cfg.out_dir):
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
