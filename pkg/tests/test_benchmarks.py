"""Tests for the benchmark problems, references and regret metrics.

Formula checks compare the packaged objectives against independent
re-implementations written in plain scalar python, on raw (unnormalized)
coordinates.
"""

import math

import numpy as np
import pytest

import robustbo.benchmarks as bm
from robustbo.errors import ConfigError
from robustbo.benchmarks import (
    ProblemSpec,
    RegretRecord,
    cached_robust_reference,
    compute_regret,
    list_problems,
    make_problem,
    polynomial_reference_hyperparams,
    true_robust_reference,
    worst_case_value,
)
from robustbo.minimax import Box, FiniteSet, SpaceSpec


# ---------------------------------------------------------------------------
# independent scalar re-implementations

def branin_ref(x, t):
    b = 5.1 / (4.0 * math.pi ** 2)
    c = 5.0 / math.pi
    s = 10.0
    return ((t - b * x * x + c * x - 6.0) ** 2
            + s * (1.0 - 1.0 / (8.0 * math.pi)) * math.cos(x) + s)


def sinus_linear_ref(v):
    return math.sin(5.0 * v * v * math.pi) + 0.5 * v


def eggholder_ref(x, t):
    return (-(t + 47.0) * math.sin(math.sqrt(abs(t + x / 2.0 + 47.0)))
            - x * math.sin(math.sqrt(abs(x - (t + 47.0)))))


_H_ALPHA = (1.0, 1.2, 3.0, 3.2)
_H_A = ((3.0, 10.0, 30.0), (0.1, 10.0, 35.0),
        (3.0, 10.0, 30.0), (0.1, 10.0, 35.0))
_H_P = ((0.3689, 0.1170, 0.2673), (0.4699, 0.4387, 0.7470),
        (0.1091, 0.8732, 0.5547), (0.0381, 0.5743, 0.8828))


def hartmann3_ref(z):
    total = 0.0
    for i in range(4):
        e = 0.0
        for j in range(3):
            e += _H_A[i][j] * (z[j] - _H_P[i][j]) ** 2
        total += _H_ALPHA[i] * math.exp(-e)
    return total


def polynomial_ref(z1, z2):
    p1 = (2.0 * z1 ** 6 - 12.2 * z1 ** 5 + 21.2 * z1 ** 4
          - 6.4 * z1 ** 3 - 4.7 * z1 ** 2 + 6.2 * z1)
    p2 = (z2 ** 6 - 11.0 * z2 ** 5 + 43.3 * z2 ** 4
          - 74.8 * z2 ** 3 + 56.9 * z2 ** 2 - 10.0 * z2)
    cross = (-4.1 * z1 * z2 - 0.1 * (z1 * z2) ** 2
             + 0.4 * z1 * z2 ** 2 + 0.4 * z1 ** 2 * z2)
    return p1 + p2 + cross


def _raw_value(problem, z):
    """Undo the output standardization at a single joint point."""
    shift, scale = problem.standardization
    return float(problem.objective(z[None])[0]) * scale + shift


# ---------------------------------------------------------------------------
# formula fidelity

def test_branin_matches_reference_and_known_minimum():
    problem = make_problem("branin")
    rng = np.random.default_rng(0)
    for _ in range(5):
        z = problem.space.sample_joint(rng, 1)[0]
        x_raw = 15.0 * z[0] - 5.0
        t_raw = 15.0 * z[1]
        assert _raw_value(problem, z) == pytest.approx(
            branin_ref(x_raw, t_raw), abs=1e-10)
    assert bm.branin(math.pi, 2.275) == pytest.approx(0.397887, abs=1e-4)
    assert bm.branin(-math.pi, 12.275) == pytest.approx(0.397887, abs=1e-4)
    assert bm.branin(9.42478, 2.475) == pytest.approx(0.397887, abs=1e-4)


def test_sinus_linear_matches_reference():
    problem = make_problem("sinus_linear")
    rng = np.random.default_rng(1)
    for _ in range(5):
        z = problem.space.sample_joint(rng, 1)[0]
        assert _raw_value(problem, z) == pytest.approx(
            sinus_linear_ref(z[0] + z[1]), abs=1e-10)
    assert problem.standardization == (0.0, 1.0)
    assert problem.space.combine_mode == "additive"


def test_eggholder_matches_reference():
    problem = make_problem("eggholder")
    rng = np.random.default_rng(2)
    for _ in range(5):
        z = problem.space.sample_joint(rng, 1)[0]
        x_raw = 1024.0 * z[0] - 512.0
        t_raw = 1024.0 * z[1] - 512.0
        assert _raw_value(problem, z) == pytest.approx(
            eggholder_ref(x_raw, t_raw), abs=1e-9)


def test_hartmann_matches_reference():
    problem = make_problem("hartmann3d")
    rng = np.random.default_rng(3)
    for _ in range(5):
        z = problem.space.sample_joint(rng, 1)[0]
        assert _raw_value(problem, z) == pytest.approx(
            hartmann3_ref(z), abs=1e-10)


def test_polynomial_matches_reference():
    problem = make_problem("synthetic_polynomial")
    rng = np.random.default_rng(4)
    for _ in range(5):
        z = problem.space.sample_joint(rng, 1)[0]
        v1, v2 = z[0] + z[2], z[1] + z[3]
        assert _raw_value(problem, z) == pytest.approx(
            polynomial_ref(v1, v2), abs=1e-9)
    assert problem.space.combine_mode == "additive"


# ---------------------------------------------------------------------------
# space layouts

def test_branin_space_layout():
    sp = make_problem("branin").space
    assert isinstance(sp.controllable, Box)
    assert np.array_equal(sp.controllable.bounds, [[0.0, 1.0]])
    pts = sp.uncontrollable.points
    assert pts.shape == (20, 1)
    assert np.allclose(pts[:, 0], np.linspace(0.75, 14.25, 20) / 15.0)


def test_sinus_linear_space_layout():
    sp = make_problem("sinus_linear").space
    assert np.array_equal(sp.uncontrollable.points, [[0.1], [0.05]])


def test_eggholder_space_layout():
    sp = make_problem("eggholder").space
    want = (np.array([-512.0, 0.0, 185.0]) + 512.0) / 1024.0
    assert np.allclose(sp.uncontrollable.points[:, 0], want)


def test_hartmann_space_layout():
    sp = make_problem("hartmann3d").space
    assert isinstance(sp.controllable, FiniteSet)
    assert sp.controllable.points.shape == (2500, 2)
    axis = np.linspace(0.0, 1.0, 50)
    assert np.allclose(np.unique(sp.controllable.points[:, 0]), axis)
    # grid is row-major in the first coordinate
    assert np.allclose(sp.controllable.points[:50, 0], axis[0])
    assert np.allclose(sp.controllable.points[:50, 1], axis)
    assert np.allclose(sp.uncontrollable.points[:, 0], np.linspace(0.25, 0.75, 11))


def test_polynomial_space_layout():
    sp = make_problem("synthetic_polynomial").space
    assert np.allclose(sp.controllable.bounds, [[-0.95, 3.2], [-0.45, 4.4]])
    pts = sp.uncontrollable.points
    assert pts.shape == (12, 2)
    angles = np.array([0.0, 0.4, 0.8, 1.2, 1.6, 2.0]) * math.pi
    want = np.vstack([np.zeros((6, 2)),
                      np.column_stack([0.5 * np.cos(angles), 0.5 * np.sin(angles)])])
    assert np.allclose(pts, want)


# ---------------------------------------------------------------------------
# standardization and noise

def test_standardized_outputs_have_unit_scale():
    rng = np.random.default_rng(99)  # deliberately not the freezing seed
    for name in ("branin", "eggholder"):
        problem = make_problem(name)
        vals = problem.objective(problem.space.sample_joint(rng, 100_000))
        assert abs(float(np.mean(vals))) < 0.05, name
        assert abs(float(np.std(vals)) - 1.0) < 0.05, name


def test_standardization_constants_frozen():
    a = make_problem("branin").standardization
    b = make_problem("branin").standardization
    assert a == b
    assert a[1] > 0


def test_noise_levels():
    for name in list_problems():
        problem = make_problem(name, rng_seed=1)
        assert problem.noise_std == pytest.approx(math.sqrt(0.001))


# ---------------------------------------------------------------------------
# within-model problems

def test_within_model_determinism_and_scale():
    p1 = make_problem("within_model", rng_seed=3)
    p2 = make_problem("within_model_s3")
    assert p1.name == p2.name == "within_model_s3"
    rng = np.random.default_rng(0)
    Z = p1.space.sample_joint(rng, 2000)
    v1 = p1.objective(Z)
    v2 = p2.objective(Z)
    assert np.array_equal(v1, v2)
    other = make_problem("within_model", rng_seed=4)
    assert not np.allclose(v1, other.objective(Z))
    # a unit-signal-variance draw keeps roughly unit spread
    assert 0.5 <= float(np.std(v1)) <= 1.5
    # short lengthscales still give locally smooth values
    dz = np.zeros(2)
    dz[0] = 1e-4
    bumped = p1.objective(Z[:100] + dz)
    assert float(np.max(np.abs(bumped - v1[:100]))) < 0.05


def test_within_model_space():
    sp = make_problem("within_model", rng_seed=0).space
    assert isinstance(sp.controllable, Box) and isinstance(sp.uncontrollable, Box)
    assert np.array_equal(sp.controllable.bounds, [[0.0, 1.0]])
    assert np.array_equal(sp.uncontrollable.bounds, [[0.0, 1.0]])


def test_problem_registry():
    names = list_problems()
    assert names == ["branin", "eggholder", "hartmann3d", "sinus_linear",
                     "synthetic_polynomial", "within_model"]
    with pytest.raises(ConfigError):
        make_problem("not_a_problem")


# ---------------------------------------------------------------------------
# reference optima

def _quad_gap_problem():
    def objective(Z):
        Z = np.atleast_2d(Z)
        return (Z[:, 0] - Z[:, 1]) ** 2

    objective.supports_batch = True
    space = SpaceSpec(Box(np.array([[0.0, 1.0]])),
                      FiniteSet(np.array([0.0, 1.0])))
    return ProblemSpec(name="quad_gap", objective=objective, space=space,
                       standardization=(0.0, 1.0), noise_std=0.0)


def test_reference_closed_form_quad_gap():
    problem = _quad_gap_problem()
    f_star, x_star, theta_star = true_robust_reference(problem, grid_per_dim=401)
    assert f_star == pytest.approx(0.25, abs=1e-6)
    assert x_star[0] == pytest.approx(0.5, abs=1e-4)
    assert theta_star[0] in (0.0, 1.0)
    assert worst_case_value(problem, x_star) == pytest.approx(f_star, abs=1e-9)


def test_reference_is_deterministic():
    problem = make_problem("branin")
    a = true_robust_reference(problem, grid_per_dim=150)
    b = true_robust_reference(problem, grid_per_dim=150)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])


def test_reference_grid_convergence_cheap_problems():
    for name, tol in (("branin", 1e-3), ("sinus_linear", 1e-3),
                      ("eggholder", 1e-3), ("synthetic_polynomial", 1e-2)):
        problem = make_problem(name)
        f_coarse = true_robust_reference(problem, grid_per_dim=200)[0]
        f_fine = true_robust_reference(problem, grid_per_dim=300)[0]
        assert abs(f_coarse - f_fine) < tol, name


def test_reference_fully_discrete_is_grid_free():
    problem = make_problem("hartmann3d")
    a = true_robust_reference(problem, grid_per_dim=10)
    b = true_robust_reference(problem, grid_per_dim=400)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])
    # cross-check against direct enumeration of the full table
    xs = problem.space.controllable.points
    ts = problem.space.uncontrollable.points
    rows = np.hstack([np.repeat(xs, ts.shape[0], axis=0),
                      np.tile(ts, (xs.shape[0], 1))])
    table = problem.objective(rows).reshape(xs.shape[0], ts.shape[0])
    assert a[0] == pytest.approx(float(table.max(axis=1).min()), abs=1e-12)


def test_reference_within_model_grid_stability():
    problem = make_problem("within_model", rng_seed=0)
    f_coarse = true_robust_reference(problem, grid_per_dim=120)[0]
    f_fine = true_robust_reference(problem, grid_per_dim=180)[0]
    assert abs(f_coarse - f_fine) < 5e-3


def test_cached_reference_roundtrip(tmp_path, monkeypatch):
    problem = _quad_gap_problem()
    cache = str(tmp_path / "refs.json")
    first = cached_robust_reference(problem, 101, cache)
    # a cache hit must not recompute
    def boom(*a, **k):
        raise AssertionError("reference recomputed despite cache hit")

    monkeypatch.setattr(bm, "true_robust_reference", boom)
    second = cached_robust_reference(problem, 101, cache)
    assert first[0] == second[0]
    assert np.array_equal(first[1], second[1])
    monkeypatch.undo()
    # unknown version is rejected
    import json
    with open(cache) as fh:
        payload = json.load(fh)
    payload["version"] = 999
    with open(cache, "w") as fh:
        json.dump(payload, fh)
    with pytest.raises(ConfigError):
        cached_robust_reference(problem, 101, cache)


# ---------------------------------------------------------------------------
# regrets

def test_regret_discrete_ignores_reported_theta():
    problem = _quad_gap_problem()
    f_star = 0.25
    x = np.array([0.4])
    a = compute_regret(problem, (x, np.array([0.0])), f_star)
    b = compute_regret(problem, (x, np.array([1.0])), f_star)
    assert a.robust_regret == b.robust_regret
    assert a.inference_regret is None
    # worst case of x=0.4 is (0.4-1)^2 = 0.36
    assert a.robust_regret == pytest.approx(0.36 - 0.25, abs=1e-12)


def test_regret_continuous_uses_reported_pair():
    problem = make_problem("within_model", rng_seed=1)
    x = np.array([0.3])
    t = np.array([0.6])
    rec = compute_regret(problem, (x, t), reference_f_star=0.0, iteration=4)
    want = abs(float(problem.objective(np.array([[0.3, 0.6]]))[0]))
    assert rec.robust_regret is None
    assert rec.inference_regret == pytest.approx(want, abs=1e-12)
    assert rec.iteration == 4


def test_regret_record_needs_a_value():
    with pytest.raises(ValueError):
        RegretRecord(iteration=0, reported_location=(np.zeros(1), np.zeros(1)))


def test_polynomial_hyperparameters_memoized():
    a = polynomial_reference_hyperparams(rng_seed=7)
    b = polynomial_reference_hyperparams(rng_seed=7)
    assert a is b
    assert a.noise_variance == 0.001
    assert np.all(a.lengthscales > 0.0)
