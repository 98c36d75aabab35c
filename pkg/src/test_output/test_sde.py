"""
Тесты решателей Эйлера-Маруямы
"""
import numpy as np
import pytest

from src.algorithms.particles import zero_com_project
from src.core import geometry as geo
from src.core import process
from src.core.errors import DimensionError, DivergenceError
from src.core.geometry import ManifoldSpec
from src.core.sde import SolverConfig, constraint_deviation, dump_trajectories, em_euclid, em_manifold
from src.utils.csv_io import read_matrix

MU, TAU2 = np.array([3.0]), 0.25


class CountingDrift:
    def __init__(self, fn):
        self.fn = fn
        self.calls = 0

    def __call__(self, x, t):
        self.calls += 1
        return self.fn(x, t)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(nfe=0)
    with pytest.raises(ValueError):
        SolverConfig(nfe=4, t_start=1.0)
    with pytest.raises(ValueError):
        SolverConfig(nfe=4, gamma=-0.1)
    cfg = SolverConfig(nfe=4, t_start=0.2)
    assert cfg.h == pytest.approx(0.2)
    assert np.allclose(cfg.times(), [0.2, 0.4, 0.6, 0.8, 1.0])


def test_exact_drift_call_count():
    drift = CountingDrift(lambda x, t: np.zeros_like(x))
    em_euclid(drift, np.zeros((3, 2)), SolverConfig(nfe=37, chunk_size=8))
    assert drift.calls == 37


def test_euler_ode_is_first_order():
    """γ = 0: ошибка в конце пропорциональна h для точного гауссова потока"""
    z0 = np.linspace(-2.0, 2.0, 9)[:, None]
    exact = MU + np.sqrt(TAU2) * z0
    velocity = process.gaussian_marginal_velocity(MU, TAU2)
    errors = []
    for nfe in (64, 128):
        x1 = em_euclid(velocity, z0, SolverConfig(nfe=nfe, gamma=0.0))
        errors.append(float(np.max(np.abs(x1 - exact))))
    assert errors[1] > 0
    assert 1.6 <= errors[0] / errors[1] <= 2.4


def test_zero_drift_zero_noise_is_identity(rng):
    x0 = rng.normal(size=(5, 3))
    out = em_euclid(lambda x, t: np.zeros_like(x), x0, SolverConfig(nfe=10, gamma=0.0))
    assert np.array_equal(out, x0)


def test_single_point_input():
    out = em_euclid(lambda x, t: np.ones_like(x), np.zeros(2), SolverConfig(nfe=4))
    assert out.shape == (2,)
    assert np.allclose(out, 1.0)


def test_deterministic_and_thread_independent(rng):
    drift = process.gaussian_marginal_drift(MU, TAU2, gamma=0.5)
    x0 = rng.standard_normal((100, 1))
    runs = [em_euclid(drift, x0, SolverConfig(nfe=20, gamma=0.5, seed=11, chunk_size=16, threads=k))
            for k in (1, 4, 1)]
    assert np.array_equal(runs[0], runs[1])
    assert np.array_equal(runs[0], runs[2])
    other = em_euclid(drift, x0, SolverConfig(nfe=20, gamma=0.5, seed=12, chunk_size=16))
    assert not np.array_equal(runs[0], other)


def test_gaussian_marginal_terminal_law():
    drift = process.gaussian_marginal_drift(MU, TAU2, gamma=1.0)
    n = 20_000
    x0 = np.random.default_rng(3).standard_normal((n, 1))
    x1 = em_euclid(drift, x0, SolverConfig(nfe=512, gamma=1.0, seed=4))
    assert abs(x1.mean() - 3.0) < 3.0 * np.sqrt(TAU2 / n)
    assert x1.var(ddof=1) == pytest.approx(TAU2, rel=0.05)


def test_projection_keeps_center_of_mass(rng):
    project = lambda v: zero_com_project(v, 4, 2)
    x0 = project(rng.normal(size=(6, 8)))
    out = em_euclid(lambda x, t: rng.normal(size=x.shape), x0, SolverConfig(nfe=16, gamma=1.0, seed=1),
                    project=project)
    assert np.max(np.abs(out.reshape(6, 4, 2).mean(axis=1))) < 1e-12


class TestDivergence:
    @staticmethod
    def _blowup(x, t):
        u = np.zeros_like(x)
        u[x[:, 0] > 0] = np.inf
        return u

    def test_raise(self):
        x0 = np.array([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(DivergenceError) as info:
            em_euclid(self._blowup, x0, SolverConfig(nfe=5))
        assert info.value.step == 0

    def test_mask(self):
        x0 = np.array([[1.0, 0.0], [-1.0, 0.0]])
        res = em_euclid(self._blowup, x0, SolverConfig(nfe=5), return_path=True, on_divergence='mask')
        assert res.diverged.tolist() == [True, False]
        assert np.all(np.isnan(res.endpoint[0]))
        assert np.array_equal(res.endpoint[1], x0[1])
        assert res.path.shape == (6, 2, 2)

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            em_euclid(lambda x, t: x, np.zeros((1, 1)), SolverConfig(nfe=1), on_divergence='ignore')


class TestManifold:
    def test_points_stay_on_sphere(self, rng):
        spec = ManifoldSpec.sphere(2)
        x0 = geo.uniform_sphere(spec, 50, rng)
        pull = np.array([0.0, 0.0, 3.0])
        res = em_manifold(spec, lambda x, t: np.broadcast_to(pull, x.shape), x0,
                          SolverConfig(nfe=200, gamma=0.5, seed=2), return_path=True)
        assert constraint_deviation(spec, res.endpoint)['max'] < 1e-12
        assert res.max_constraint_drift < 1e-6
        assert np.all(geo.is_on_manifold(spec, res.path.reshape(-1, 3)))
        # дрейф к северному полюсу
        assert res.endpoint[:, 2].mean() > x0[:, 2].mean()

    def test_zero_drift_without_noise_is_identity(self, rng):
        spec = ManifoldSpec.sphere(2)
        x0 = geo.uniform_sphere(spec, 4, rng)
        out = em_manifold(spec, lambda x, t: np.zeros_like(x), x0, SolverConfig(nfe=5, gamma=0.0))
        assert np.allclose(out, x0, atol=1e-15)

    def test_noise_spreads_on_sphere(self):
        spec = ManifoldSpec.sphere(2)
        north = np.tile([0.0, 0.0, 1.0], (500, 1))
        out = em_manifold(spec, lambda x, t: np.zeros_like(x), north, SolverConfig(nfe=50, gamma=1.0, seed=5))
        assert out[:, 2].mean() < 0.95
        assert np.allclose(np.linalg.norm(out, axis=1), 1.0)

    def test_hyperboloid(self, rng):
        from src.verify import random_point

        spec = ManifoldSpec.hyperboloid(2)
        x0 = np.stack([random_point(spec, rng, 0.5) for _ in range(20)])
        out = em_manifold(spec, lambda x, t: np.zeros_like(x), x0, SolverConfig(nfe=30, gamma=0.2, seed=3))
        assert np.all(geo.is_on_manifold(spec, out))
        assert np.all(out[:, 0] > 0)

    def test_dimension_checked(self):
        with pytest.raises(DimensionError):
            em_manifold(ManifoldSpec.sphere(2), lambda x, t: x, np.zeros((2, 4)), SolverConfig(nfe=1))


def test_empty_batch():
    res = em_euclid(lambda x, t: x, np.zeros((0, 3)), SolverConfig(nfe=3), return_path=True)
    assert res.endpoint.shape == (0, 3)
    assert res.path.shape == (4, 0, 3)


def test_dump_trajectories(tmp_path, rng):
    cfg = SolverConfig(nfe=4, gamma=0.1, seed=1)
    res = em_euclid(lambda x, t: -x, rng.normal(size=(2, 3)), cfg, return_path=True)
    dump_trajectories(str(tmp_path), res, cfg)
    header, rows = read_matrix(str(tmp_path / 'traj_1.csv'))
    assert header == ['t', 'x0', 'x1', 'x2']
    assert np.allclose(rows[:, 0], cfg.times())
    assert np.array_equal(rows[:, 1:], res.path[:, 1, :])
