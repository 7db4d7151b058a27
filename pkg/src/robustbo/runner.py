"""End-to-end loop: configuration, seeding, the iteration cycle, record
persistence, and aggregation.

A run draws an initial design, then repeats: fit hyperparameters, build
the acquisition, pick the next joint point, observe it with synthetic
noise, and log the currently reported robust optimum with its regret.
Repetitions are independent seeded runs; aggregation reports per-iteration
quantiles and a vector plot.
"""

from __future__ import annotations

import csv
import io
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from .acquisition import maximize_acquisition, prepare_iteration
from .baselines import BaselineConfig, select_point
from .benchmarks import (ProblemSpec, cached_robust_reference, compute_regret,
                         make_problem, polynomial_reference_hyperparams,
                         true_robust_reference)
from .ep import EpOptions
from .errors import ConfigError
from .gp import Dataset, KernelParams, fit_hyperparameters, fit_posterior
from .minimax import FiniteSet, SolverOptions, report_optimum

__all__ = [
    "RunConfig",
    "RunRecord",
    "IterationRecord",
    "aggregate_and_plot",
    "load_run_csv",
    "load_run_record",
    "run_all",
    "run_bo",
    "write_run_csv",
]

SCHEMA_VERSION = 1
WORKERS_ENV = "ROBUSTBO_WORKERS"

_ACQUISITIONS = ("res", "stableopt", "ucb", "ei", "mes", "kg", "random")


@dataclass(frozen=True)
class RunConfig:
    """Validated experiment manifest."""

    problem: str
    acquisition: str
    iterations: int
    initial_design: int = 1
    repetitions: int = 1
    base_seed: int = 0
    seeds: Optional[tuple[int, ...]] = None
    num_samples: int = 1          # conditioning samples per iteration
    num_features: int = 500       # spectral features per sample
    beta_sqrt: float = 2.0
    mes_num_mins: int = 100
    kg_grid_per_dim: int = 50
    kg_num_fantasies: int = 32
    hyper_policy: str = "fit"     # "fit" re-estimates every iteration
    fixed_params: Optional[dict] = None
    noise_variance: float = 0.001
    reference_grid: int = 400
    outer_restarts: int = 10
    inner_restarts: int = 5
    out_dir: str = "runs"

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigError("iterations must be >= 1")
        if self.initial_design < 1:
            raise ConfigError("initial_design must be >= 1")
        if self.repetitions < 1:
            raise ConfigError("repetitions must be >= 1")
        if self.acquisition not in _ACQUISITIONS:
            raise ConfigError(f"unknown acquisition '{self.acquisition}'; "
                              f"choose from {', '.join(_ACQUISITIONS)}")
        if self.hyper_policy not in ("fit", "fixed"):
            raise ConfigError("hyper_policy must be 'fit' or 'fixed'")
        if self.seeds is not None:
            object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
            if len(self.seeds) != self.repetitions:
                raise ConfigError("seeds must have one entry per repetition")
        if self.noise_variance <= 0:
            raise ConfigError("noise_variance must be positive")

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        allowed = set(cls.__dataclass_fields__)
        unknown = set(raw) - allowed
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        try:
            return cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        out = asdict(self)
        if out["seeds"] is not None:
            out["seeds"] = list(out["seeds"])
        return out

    def seed_for(self, rep_index: int) -> int:
        if self.seeds is not None:
            return int(self.seeds[rep_index])
        return int(self.base_seed + rep_index)


@dataclass
class IterationRecord:
    iteration: int
    selected: list
    observed: float
    reported_x: list
    reported_theta: list
    robust_regret: Optional[float]
    inference_regret: Optional[float]
    t_fit_s: float
    t_sample_s: float
    t_ep_s: float
    t_acqopt_s: float
    t_total_s: float
    t_report_s: float
    elapsed_s: float


@dataclass
class RunRecord:
    schema_version: int
    run_id: int
    seed: int
    problem: str
    acquisition: str
    config: dict
    reference: dict
    initial_design: list
    iterations: list            # list of IterationRecord
    summary: dict
    aborted: Optional[str] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        out["iterations"] = [asdict(it) if isinstance(it, IterationRecord)
                             else it for it in self.iterations]
        return out


def _fixed_kernel_params(config: RunConfig, problem: ProblemSpec) -> KernelParams:
    if config.fixed_params is not None:
        p = config.fixed_params
        return KernelParams(signal_variance=float(p["signal_variance"]),
                            lengthscales=np.asarray(p["lengthscales"], dtype=float),
                            noise_variance=float(p.get("noise_variance",
                                                       config.noise_variance)))
    if problem.name == "synthetic_polynomial":
        return polynomial_reference_hyperparams()
    raise ConfigError("hyper_policy 'fixed' needs fixed_params for this problem")


def _regret_trace(iterations: list[IterationRecord]) -> np.ndarray:
    vals = []
    for it in iterations:
        v = it.robust_regret if it.robust_regret is not None else it.inference_regret
        vals.append(v)
    return np.asarray(vals, dtype=float)


def run_bo(config: RunConfig, rep_index: int = 0,
           reference=None) -> RunRecord:
    """One seeded repetition of the optimization loop."""
    seed = config.seed_for(rep_index)
    problem = make_problem(config.problem, rng_seed=seed)
    space = problem.space
    if reference is None:
        reference = true_robust_reference(problem, config.reference_grid)
    f_star, x_ref, theta_ref = reference

    ss = np.random.SeedSequence(seed)
    init_rng, noise_rng = [np.random.default_rng(c) for c in ss.spawn(2)]
    iter_seeds = ss.generate_state(4 * config.iterations + 4)

    record = RunRecord(
        schema_version=SCHEMA_VERSION, run_id=rep_index, seed=seed,
        problem=problem.name, acquisition=config.acquisition,
        config=config.to_dict(),
        reference={"f_star": float(f_star), "x_star": list(np.ravel(x_ref)),
                   "theta_star": list(np.ravel(theta_ref)),
                   "grid": config.reference_grid},
        initial_design=[], iterations=[], summary={})

    Z0 = space.sample_joint(init_rng, config.initial_design)
    y0 = problem.objective(Z0) + problem.noise_std * \
        noise_rng.standard_normal(config.initial_design)
    data = Dataset(Z0, y0, space.dim_controllable, space.dim_uncontrollable)
    record.initial_design = [{"z": list(z), "y": float(y)}
                             for z, y in zip(Z0, y0)]

    fixed = None
    if config.hyper_policy == "fixed":
        fixed = _fixed_kernel_params(config, problem)
    bconf = BaselineConfig(beta_sqrt=config.beta_sqrt,
                           mes_num_mins=config.mes_num_mins,
                           mes_num_features=config.num_features,
                           kg_grid_per_dim=config.kg_grid_per_dim,
                           kg_num_fantasies=config.kg_num_fantasies)
    counters = {"dropped_samples": 0, "relaxed_bounds": 0, "mass_underflow": 0}
    run_start = time.perf_counter()

    for t in range(1, config.iterations + 1):
        s_hyper, s_acq, s_opt, s_report = iter_seeds[4 * t:4 * t + 4]
        iter_start = time.perf_counter()

        t0 = time.perf_counter()
        if fixed is not None:
            params = fixed
        else:
            params = fit_hyperparameters(data, fixed_noise=config.noise_variance,
                                         rng_seed=int(s_hyper))
        posterior = fit_posterior(data, params)
        t_fit = time.perf_counter() - t0

        opts = SolverOptions(outer_restarts=config.outer_restarts,
                             inner_restarts=config.inner_restarts,
                             rng_seed=int(s_opt))
        t_sample = t_ep = 0.0
        t0 = time.perf_counter()
        if config.acquisition == "res":
            state = prepare_iteration(posterior, space,
                                      num_samples=config.num_samples,
                                      num_features=config.num_features,
                                      rng_seed=int(s_acq), solver_opts=opts,
                                      ep_opts=EpOptions())
            t_sample = state.timings["sample"]
            t_ep = state.timings["ep"]
            for k in counters:
                counters[k] += state.counters.get(k, 0)
            t0 = time.perf_counter()
            z_next = maximize_acquisition(state, opts)
            t_acqopt = time.perf_counter() - t0
        else:
            z_next = select_point(config.acquisition, posterior, space,
                                  config=bconf, opts=opts, rng_seed=int(s_acq))
            t_acqopt = time.perf_counter() - t0

        y_next = float(problem.objective(z_next[None])[0]
                       + problem.noise_std * noise_rng.standard_normal())
        data = data.append(z_next, y_next)
        t_total = time.perf_counter() - iter_start

        t0 = time.perf_counter()
        if config.acquisition == "res":
            posterior_now = fit_posterior(data, params)
            reported = report_optimum(posterior_now, space,
                                      replace(opts, rng_seed=int(s_report)))
        else:
            reported = (z_next[:space.dim_controllable],
                        z_next[space.dim_controllable:])
        regret = compute_regret(problem, reported, f_star, iteration=t)
        t_report = time.perf_counter() - t0

        record.iterations.append(IterationRecord(
            iteration=t, selected=list(map(float, z_next)),
            observed=y_next,
            reported_x=list(map(float, reported[0])),
            reported_theta=list(map(float, reported[1])),
            robust_regret=regret.robust_regret,
            inference_regret=regret.inference_regret,
            t_fit_s=t_fit, t_sample_s=t_sample, t_ep_s=t_ep,
            t_acqopt_s=t_acqopt, t_total_s=t_total, t_report_s=t_report,
            elapsed_s=time.perf_counter() - run_start))

    trace = _regret_trace(record.iterations)
    record.summary = {
        "final_regret": float(trace[-1]),
        "regret_q25": float(np.quantile(trace, 0.25)),
        "regret_median": float(np.quantile(trace, 0.5)),
        "regret_q75": float(np.quantile(trace, 0.75)),
        "counters": dict(counters),
    }
    return record


# ---------------------------------------------------------------------------
# persistence

def _fmt(value: Optional[float]) -> str:
    if value is None:
        return ""
    return "%.17g" % float(value)


def _csv_header(d_c: int, d_u: int) -> list[str]:
    cols = ["run_id", "iteration"]
    cols += [f"x_{i}" for i in range(d_c)]
    cols += [f"theta_{i}" for i in range(d_u)]
    cols += ["y"]
    cols += [f"rep_x_{i}" for i in range(d_c)]
    cols += [f"rep_theta_{i}" for i in range(d_u)]
    cols += ["robust_regret", "inference_regret"]
    return cols


def write_run_csv(record: RunRecord, path: str) -> str:
    """Deterministic per-iteration CSV (no wall-clock columns; those live
    in the JSON record so identical seeds give identical bytes)."""
    iterations = [asdict(it) if isinstance(it, IterationRecord) else it
                  for it in record.iterations]
    if iterations:
        d = len(iterations[0]["selected"])
        d_c = len(iterations[0]["reported_x"])
        d_u = d - d_c
    else:
        d_c = d_u = 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_csv_header(d_c, d_u))
    for it in iterations:
        row = [str(record.run_id), str(it["iteration"])]
        row += [_fmt(v) for v in it["selected"]]
        row += [_fmt(it["observed"])]
        row += [_fmt(v) for v in it["reported_x"]]
        row += [_fmt(v) for v in it["reported_theta"]]
        row += [_fmt(it["robust_regret"]), _fmt(it["inference_regret"])]
        writer.writerow(row)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def write_run_record(record: RunRecord, path: str) -> str:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record.to_dict(), fh, indent=1)
        fh.write("\n")
    return path


def load_run_record(path: str) -> RunRecord:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    if raw.get("schema_version") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported record schema version "
                          f"{raw.get('schema_version')!r} in {path}")
    raw["iterations"] = [IterationRecord(**it) for it in raw["iterations"]]
    return RunRecord(**raw)


def load_run_csv(path: str) -> dict[str, np.ndarray]:
    """Columns of a per-run CSV as float arrays (NaN for blank cells)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = list(reader)
    out = {}
    for j, name in enumerate(header):
        col = np.array([float(r[j]) if r[j] != "" else np.nan for r in rows])
        out[name] = col
    return out


# ---------------------------------------------------------------------------
# aggregation and plotting

def aggregate_and_plot(records: list[RunRecord], out_dir: str) -> list[str]:
    """Write per-run CSVs, the quantile aggregate, and a regret plot.

    Quantiles use linear interpolation across runs at each iteration.
    Returns the list of written paths.
    """
    if not records:
        raise ConfigError("no records to aggregate")
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for rec in records:
        paths.append(write_run_csv(rec,
                                   os.path.join(out_dir, f"run_{rec.run_id}.csv")))

    T = max(len(rec.iterations) for rec in records)
    traces = np.full((len(records), T), np.nan)
    for i, rec in enumerate(records):
        tr = _regret_trace(rec.iterations)
        traces[i, :tr.size] = tr

    agg_path = os.path.join(out_dir, "aggregate.csv")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["iteration", "regret_q25", "regret_median",
                     "regret_q75", "n_runs"])
    med = np.empty(T)
    q25 = np.empty(T)
    q75 = np.empty(T)
    for t in range(T):
        col = traces[:, t]
        col = col[~np.isnan(col)]
        q25[t], med[t], q75[t] = np.quantile(col, [0.25, 0.5, 0.75])
        writer.writerow([str(t + 1), _fmt(q25[t]), _fmt(med[t]),
                         _fmt(q75[t]), str(col.size)])
    with open(agg_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    paths.append(agg_path)

    paths.append(_plot_regret(records, med, q25, q75, out_dir))
    return paths


def _plot_regret(records: list[RunRecord], med, q25, q75, out_dir: str) -> str:
    import matplotlib
    matplotlib.use("Agg")
    matplotlib.rcParams["svg.hashsalt"] = "robustbo"  # stable element ids
    import matplotlib.pyplot as plt

    iters = np.arange(1, med.size + 1)
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    label = records[0].acquisition
    ax.plot(iters, med, color="C0", label=f"{label} (median)")
    ax.fill_between(iters, q25, q75, color="C0", alpha=0.25,
                    label="quartiles")
    ax.set_xlabel("iteration")
    ax.set_ylabel("regret")
    ax.set_title(f"{records[0].problem}: {label}, {len(records)} runs")
    if np.all(med > 0) and np.all(q25 > 0):
        ax.set_yscale("log")
    ax.legend()
    fig.tight_layout()
    path = os.path.join(out_dir, "regret.svg")
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


# ---------------------------------------------------------------------------
# repetition orchestration

def _run_one_persist(config: RunConfig, rep_index: int, reference) -> dict:
    """Worker entry: run one repetition, flush the record (also on error)."""
    os.makedirs(config.out_dir, exist_ok=True)
    json_path = os.path.join(config.out_dir, f"run_{rep_index}.json")
    try:
        record = run_bo(config, rep_index, reference=reference)
    except Exception as exc:
        partial = RunRecord(schema_version=SCHEMA_VERSION, run_id=rep_index,
                            seed=config.seed_for(rep_index),
                            problem=config.problem,
                            acquisition=config.acquisition,
                            config=config.to_dict(), reference={},
                            initial_design=[], iterations=[], summary={},
                            aborted=f"{type(exc).__name__}: {exc}")
        write_run_record(partial, json_path)
        raise
    write_run_record(record, json_path)
    write_run_csv(record, os.path.join(config.out_dir, f"run_{rep_index}.csv"))
    return record.to_dict()


def run_all(config: RunConfig) -> list[RunRecord]:
    """All repetitions, optionally in parallel worker processes."""
    workers = int(os.environ.get(WORKERS_ENV, "1"))
    reference = None
    if not config.problem.startswith("within_model"):
        problem = make_problem(config.problem)
        reference = true_robust_reference(problem, config.reference_grid)
    reps = range(config.repetitions)
    if workers > 1 and config.repetitions > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_one_persist, config, r, reference)
                       for r in reps]
            raw = [f.result() for f in futures]
    else:
        raw = [_run_one_persist(config, r, reference) for r in reps]
    records = []
    for d in raw:
        d = dict(d)
        d["iterations"] = [IterationRecord(**it) for it in d["iterations"]]
        records.append(RunRecord(**d))
    return records
