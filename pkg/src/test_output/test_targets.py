"""
Тесты целевых плотностей, клиппинга и эталонных сэмплеров
"""
import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from src.algorithms import (DoubleWellTarget, GaussianMixtureTarget, LennardJonesTarget,
                            VonMisesFisherMixtureTarget, clip_score, create_target, langevin_reference,
                            reference_samples, vmf_sample_oracle, zero_com_project)
from src.algorithms.oracles import gmm_sample, vmf_mixture_sample
from src.algorithms.vmf import vmf_log_normalizer
from src.core import geometry as geo
from src.core.errors import DimensionError, ManifoldKindError


def _targets():
    return [
        GaussianMixtureTarget.four_modes(),
        DoubleWellTarget(),
        LennardJonesTarget(n_particles=5, spatial_dim=3),
        LennardJonesTarget(n_particles=4, spatial_dim=3, standard_sign=True),
        VonMisesFisherMixtureTarget.axis_modes(kappa=5.0),
    ]


def _random_inputs(target, rng, n):
    if target.manifold is not None:
        return geo.uniform_sphere(target.manifold, n, rng)
    scale = 1.5 if target.is_particle_system else 2.0
    return scale * rng.standard_normal((n, target.dim))


@pytest.mark.parametrize("target", _targets(), ids=lambda t: t.name)
def test_score_matches_finite_differences(target, rng):
    h = 1e-5
    x = _random_inputs(target, rng, 100)
    g = target.ambient_score(x)
    fd = np.zeros_like(x)
    for k in range(target.dim):
        e = np.zeros(target.dim)
        e[k] = h
        fd[:, k] = (target.reward(x + e) - target.reward(x - e)) / (2 * h)
    rel = np.linalg.norm(g - fd, axis=1) / np.maximum(np.linalg.norm(fd, axis=1), 1.0)
    assert np.max(rel) < 1e-5


@pytest.mark.parametrize("target", _targets()[1:4], ids=lambda t: t.name)
def test_particle_symmetries(target, rng):
    x = target.project(_random_inputs(target, rng, 10))
    n, d = target.n_particles, target.spatial_dim
    perm = rng.permutation(n)
    pos = x.reshape(-1, n, d)
    permuted = pos[:, perm, :].reshape(x.shape)
    assert np.allclose(target.reward(permuted), target.reward(x), rtol=1e-10)

    if d == 2:
        a = rng.uniform(0, 2 * np.pi)
        R = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    else:
        R = Rotation.random(random_state=7).as_matrix()
    rotated = (pos @ R.T).reshape(x.shape)
    assert np.allclose(target.reward(rotated), target.reward(x), rtol=1e-10)
    g_rot = target.ambient_score(rotated)
    g = (target.ambient_score(x).reshape(-1, n, d) @ R.T).reshape(x.shape)
    assert np.max(np.abs(g_rot - g)) < 1e-10 * max(1.0, np.max(np.abs(g)))


class TestExamples:
    def test_dw_equilateral_is_zero(self):
        """Все попарные расстояния равны d0: каждый член обращается в ноль"""
        d0 = 4.0
        tri = d0 * np.array([[0.0, 0.0], [1.0, 0.0], [0.5, np.sqrt(3) / 2]])
        dw = DoubleWellTarget(n_particles=3, spatial_dim=2, d0=d0)
        assert dw.energy(tri.ravel()) == pytest.approx(0.0, abs=1e-12)
        dw2 = DoubleWellTarget(n_particles=2, spatial_dim=2, d0=d0)
        assert dw2.energy(np.array([0.0, 0.0, d0, 0.0])) == pytest.approx(0.0)

    def test_lj_pair_at_rm(self):
        lj = LennardJonesTarget(n_particles=2, spatial_dim=3, osc_c=0.0)
        x = np.array([0.5, 0.0, 0.0, -0.5, 0.0, 0.0])
        assert lj.energy(x) == pytest.approx(0.0, abs=1e-12)
        assert lj.oscillator_energy(x) == pytest.approx(0.25)

    def test_lj_sign_flag(self):
        d = np.array([0.8, 1.3])
        verbatim = LennardJonesTarget(n_particles=2).pair_energy(d)
        standard = LennardJonesTarget(n_particles=2, standard_sign=True).pair_energy(d)
        assert np.allclose(verbatim, -standard)
        # стандартный знак отталкивает на малых расстояниях
        assert standard[0] > 0 > standard[1]

    def test_lj_distance_floor(self):
        lj = LennardJonesTarget(n_particles=2, spatial_dim=3)
        x = np.zeros(6)
        assert np.isfinite(lj.energy(x))
        assert np.all(np.isfinite(lj.ambient_score(x)))

    def test_vmf_score_at_mode(self):
        mu = np.array([0.0, 0.6, 0.8])
        vmf = VonMisesFisherMixtureTarget([mu], 20.0)
        assert np.allclose(vmf.score(mu), 0.0, atol=1e-12)
        assert np.allclose(vmf.ambient_score(mu), 20.0 * mu)

    def test_gmm_score_at_mode(self):
        gmm = GaussianMixtureTarget([[1.0, -2.0]], variance=0.5)
        assert np.allclose(gmm.score(np.array([1.0, -2.0])), 0.0)

    def test_score_counter_counts_points(self):
        gmm = GaussianMixtureTarget.four_modes()
        gmm.score(np.zeros((7, 2)))
        gmm.score(np.zeros(2))
        assert gmm.score_calls == 8
        gmm.ambient_score(np.zeros((3, 2)))
        assert gmm.score_calls == 8
        gmm.reset_counter()
        assert gmm.score_calls == 0

    def test_dimension_checked(self):
        with pytest.raises(DimensionError):
            GaussianMixtureTarget.four_modes().reward(np.zeros(3))


class TestVmf:
    def test_rotation_invariance(self, rng):
        target = VonMisesFisherMixtureTarget.axis_modes(kappa=8.0)
        R = Rotation.random(random_state=3).as_matrix()
        rotated = VonMisesFisherMixtureTarget(target.mus @ R.T, target.kappas)
        x = geo.uniform_sphere(target.manifold, 20, rng)
        assert np.allclose(rotated.reward(x @ R.T), target.reward(x))

    def test_normalizer_integrates_to_one(self, rng):
        """Монте-Карло: E_uniform[C·exp(κμᵀx)] · площадь S² = 1"""
        kappa = 3.0
        x = geo.uniform_sphere(geo.ManifoldSpec.sphere(2), 200_000, rng)
        dens = np.exp(vmf_log_normalizer(kappa, 3) + kappa * x[:, 2])
        assert dens.mean() * 4 * np.pi == pytest.approx(1.0, rel=0.02)
        assert np.exp(vmf_log_normalizer(0.0, 3)) == pytest.approx(1.0 / (4 * np.pi))

    def test_invalid_parameters(self):
        with pytest.raises(ValueError):
            VonMisesFisherMixtureTarget([[1.0, 1.0, 0.0]], 1.0)
        with pytest.raises(ValueError):
            VonMisesFisherMixtureTarget(np.eye(3), 1.0, [0.5, 0.5, 0.5])

    def test_mode_layouts(self):
        diag = VonMisesFisherMixtureTarget.diagonal_modes()
        assert diag.mus.shape == (8, 3)
        assert np.allclose(np.linalg.norm(diag.mus, axis=1), 1.0)
        assert np.allclose(np.abs(diag.mus), 1.0 / np.sqrt(3.0))
        both = VonMisesFisherMixtureTarget.from_layout('axes+diagonals', kappa=[10.0] * 14)
        assert both.mus.shape == (14, 3)
        assert np.allclose(both.weights, 1.0 / 14)
        assert np.array_equal(VonMisesFisherMixtureTarget.from_layout('axes').mus,
                              VonMisesFisherMixtureTarget.axis_modes().mus)
        assert VonMisesFisherMixtureTarget.from_layout('diagonals', sphere_dim=1).mus.shape == (4, 2)
        for bad in ('cube', 'axes+axes', ''):
            with pytest.raises(ValueError):
                VonMisesFisherMixtureTarget.from_layout(bad)


def test_clip_score_examples():
    g = np.array([120.0, 160.0])
    assert np.linalg.norm(clip_score(g, 100.0)) == pytest.approx(100.0)
    small = np.array([30.0, 40.0])
    assert np.array_equal(clip_score(small, 100.0), small)
    assert np.array_equal(clip_score(np.zeros(3), 100.0), np.zeros(3))
    batch = clip_score(np.stack([g, small]), 100.0)
    assert np.allclose(np.linalg.norm(batch, axis=1), [100.0, 50.0])


def test_zero_com_project_examples():
    x = np.array([1.0, 0.0, -1.0, 0.0])
    assert np.array_equal(zero_com_project(x, 2, 2), x)
    assert np.allclose(zero_com_project(np.array([2.0, 2.0, 0.0, 0.0]), 2, 2), [1.0, 1.0, -1.0, -1.0])


def test_zero_com_project_properties(rng):
    x = rng.normal(size=(5, 12))
    once = zero_com_project(x, 4, 3)
    assert np.allclose(zero_com_project(once, 4, 3), once)
    assert np.max(np.abs(once.reshape(5, 4, 3).mean(axis=1))) < 1e-12
    perm = rng.permutation(4)
    permuted = x.reshape(5, 4, 3)[:, perm].reshape(5, 12)
    assert np.allclose(zero_com_project(permuted, 4, 3).reshape(5, 4, 3), once.reshape(5, 4, 3)[:, perm])


class TestLangevin:
    def test_standard_normal_stationarity(self):
        target = GaussianMixtureTarget([[0.0]])
        eps, n = 0.1, 10_000
        x = langevin_reference(target, n, n_steps=2000, step_size=eps, seed=5, thin=20)
        assert x.shape == (n, 1)
        assert abs(x.mean()) < 3.0 / np.sqrt(n)
        # стационарная дисперсия ULA для N(0, 1): 1/(1 - ε/2)
        assert x.var() == pytest.approx(1.0 / (1.0 - eps / 2), rel=0.05)

    def test_zero_step_keeps_initial_points(self):
        target = GaussianMixtureTarget.four_modes()
        init = np.array([0.3, -0.2])
        x = langevin_reference(target, 50, n_steps=40, step_size=0.0, seed=1, thin=2, init=init)
        assert np.allclose(x, init)

    def test_deterministic(self):
        target = DoubleWellTarget()
        a = langevin_reference(target, 64, n_steps=200, step_size=1e-3, seed=9)
        b = langevin_reference(target, 64, n_steps=200, step_size=1e-3, seed=9)
        assert np.array_equal(a, b)
        assert np.max(np.abs(a.reshape(-1, 4, 2).mean(axis=1))) < 1e-10

    def test_rejects_sphere_target(self):
        with pytest.raises(ManifoldKindError):
            langevin_reference(VonMisesFisherMixtureTarget.axis_modes(), 10, n_steps=10)


class TestVmfOracle:
    def test_uniform_at_zero_concentration(self):
        x = vmf_sample_oracle([0.0, 0.0, 1.0], 0.0, 20_000, seed=2)
        assert np.linalg.norm(x.mean(axis=0)) < 0.03

    def test_concentration_fifty(self):
        mu = np.array([1.0, 2.0, 2.0]) / 3.0
        x = vmf_sample_oracle(mu, 50.0, 10_000, seed=3)
        assert np.max(np.abs(np.linalg.norm(x, axis=1) - 1.0)) < 1e-12
        angles = np.degrees(np.arccos(np.clip(x @ mu, -1, 1)))
        assert np.mean(angles < 30.0) > 0.99
        mean_dir = x.mean(axis=0) / np.linalg.norm(x.mean(axis=0))
        assert np.degrees(np.arccos(min(1.0, mean_dir @ mu))) < 1.0

    def test_mixture_oracle_weights(self):
        target = VonMisesFisherMixtureTarget.axis_modes(kappa=50.0)
        x = vmf_mixture_sample(target, 12_000, seed=4)
        labels = np.argmax(x @ target.mus.T, axis=1)
        shares = np.bincount(labels, minlength=6) / len(x)
        assert np.allclose(shares, 1 / 6, atol=0.02)


def test_reference_dispatch():
    gmm = GaussianMixtureTarget.four_modes()
    assert np.array_equal(reference_samples(gmm, 10, seed=3), gmm_sample(gmm, 10, 3))
    vmf = VonMisesFisherMixtureTarget.axis_modes()
    assert reference_samples(vmf, 7, seed=3).shape == (7, 3)


class TestFactory:
    def test_kinds(self):
        assert isinstance(create_target('gmm'), GaussianMixtureTarget)
        assert create_target('dw4').dim == 8
        assert create_target('dw4').name == 'dw4'
        assert create_target('dw4', n_particles=5).name == 'dw5'
        assert create_target('lj', n_particles=13).name == 'lj13'
        assert create_target('vmf').manifold.kind is geo.ManifoldKind.SPHERE
        assert create_target('vmf', layout='diagonals').mus.shape == (8, 3)

    def test_none_params_dropped(self):
        dw = create_target('dw4', d0=None, n_particles=None, tau=2.0)
        assert dw.d0 == 4.0 and dw.tau == 2.0

    def test_lj_sign_param(self):
        assert create_target('lj', n_particles=3, lj_standard_sign=True).standard_sign

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            create_target('harmonic')
