"""
Тесты цикла обучения: буфер, адаптивный γ, учёт вызовов score
"""
import numpy as np
import pytest

from src.algorithms import DoubleWellTarget, GaussianMixtureTarget, VonMisesFisherMixtureTarget
from src.core.checkpoint import load_checkpoint
from src.core.errors import EmptyBufferError
from src.core.net import DriftModel
from src.core.trainer import (METRICS_HEADER, FlowSamplingTrainer, GammaMode, ReplayBuffer, TrainConfig,
                              adaptive_gamma, explore, optimize, sample, source_samples)
from src.utils.csv_io import read_rows


def tiny_config(**overrides) -> TrainConfig:
    params = dict(outer_loops=3, inner_loops=5, batch_size=16, buffer_capacity=64,
                  new_samples_per_outer=10, nfe_train=8, gamma=0.1, seed=7, progress=False)
    params.update(overrides)
    return TrainConfig(**params)


def tiny_trainer(target=None, **overrides) -> FlowSamplingTrainer:
    target = target or GaussianMixtureTarget.four_modes()
    return FlowSamplingTrainer(target, tiny_config(**overrides), hidden=[16, 16], time_features=2)


class TestReplayBuffer:
    def test_fifo_eviction(self):
        buf = ReplayBuffer(3, 1)
        buf.push(np.array([[1.0], [2.0]]), np.zeros((2, 1)))
        assert len(buf) == 2
        buf.push(np.array([[3.0], [4.0]]), np.zeros((2, 1)))
        x, _ = buf.contents()
        assert len(buf) == 3
        assert x.ravel().tolist() == [2.0, 3.0, 4.0]

    def test_oversized_push(self):
        buf = ReplayBuffer(2, 1)
        buf.push(np.arange(5.0)[:, None], np.arange(5.0)[:, None])
        x, g = buf.contents()
        assert x.ravel().tolist() == [3.0, 4.0]
        assert np.array_equal(x, g)

    def test_sample_with_replacement(self, rng):
        buf = ReplayBuffer(4, 2)
        buf.push(np.ones((1, 2)), 2 * np.ones((1, 2)))
        x, g = buf.sample(10, rng)
        assert x.shape == (10, 2) and np.all(x == 1.0) and np.all(g == 2.0)

    def test_empty(self, rng):
        with pytest.raises(EmptyBufferError):
            ReplayBuffer(4, 2).sample(1, rng)
        with pytest.raises(ValueError):
            ReplayBuffer(0, 2)
        with pytest.raises(ValueError):
            ReplayBuffer(4, 2).push(np.zeros((1, 3)), np.zeros((1, 3)))


def test_adaptive_gamma_example():
    buf = ReplayBuffer(8, 2)
    buf.push(np.zeros((2, 2)), np.array([[3.0, 4.0], [0.0, 5.0]]))
    assert adaptive_gamma(buf, c=1.0, eps=0.0) == pytest.approx(0.2)
    assert adaptive_gamma(buf, c=2.0, eps=75.0) == pytest.approx(0.2)
    with pytest.raises(EmptyBufferError):
        adaptive_gamma(ReplayBuffer(2, 2))


def test_train_config_validation():
    with pytest.raises(ValueError):
        tiny_config(t_min=0.0)
    with pytest.raises(ValueError):
        tiny_config(batch_size=0)
    with pytest.raises(ValueError):
        tiny_config(gamma_mode='sometimes')
    assert tiny_config(gamma_mode='adaptive').gamma_mode is GammaMode.ADAPTIVE


def test_source_samples(rng):
    from src.core.geometry import ManifoldSpec

    x = source_samples(20, 8, rng, n_particles=4, spatial_dim=2)
    assert np.max(np.abs(x.reshape(20, 4, 2).mean(axis=1))) < 1e-12
    s = source_samples(20, 3, rng, ManifoldSpec.sphere(2))
    assert np.allclose(np.linalg.norm(s, axis=1), 1.0)


class TestExploreOptimize:
    def test_explore_grows_buffer_by_k(self):
        trainer = tiny_trainer()
        assert explore(trainer, 1) == 10
        assert len(trainer.buffer) == 10
        assert trainer.target.score_calls == 10

    def test_optimize_makes_no_score_calls(self):
        trainer = tiny_trainer()
        explore(trainer, 1)
        before = trainer.model.params.copy()
        loss = optimize(trainer, 1)
        assert np.isfinite(loss)
        assert trainer.target.score_calls == 10
        assert not np.array_equal(before, trainer.model.params)

    def test_optimize_requires_data(self):
        with pytest.raises(EmptyBufferError):
            optimize(tiny_trainer(), 1)

    def test_clipping_applied(self):
        far = GaussianMixtureTarget([[500.0, 0.0]])
        trainer = tiny_trainer(far, clip_threshold=5.0)
        explore(trainer, 1)
        _, g = trainer.buffer.contents()
        assert np.all(np.linalg.norm(g, axis=1) <= 5.0 + 1e-9)


class TestTrain:
    def test_score_call_accounting(self):
        trainer = tiny_trainer()
        _, metrics = trainer.train()
        assert trainer.target.score_calls == 3 * 10
        assert [m['score_calls_total'] for m in metrics] == [10, 20, 30]
        assert [m['buffer_len'] for m in metrics] == [10, 20, 30]
        assert all(m['wallclock_s'] == 0.0 for m in metrics)

    def test_deterministic(self):
        a, _ = tiny_trainer().train()
        b, _ = tiny_trainer().train()
        assert np.array_equal(a.params, b.params)
        c, _ = tiny_trainer(seed=8).train()
        assert not np.array_equal(a.params, c.params)

    def test_adaptive_gamma_is_refreshed(self):
        trainer = tiny_trainer(gamma_mode='adaptive', gamma=0.05, adaptive_c=1.0, adaptive_eps=1e-8)
        model, metrics = trainer.train()
        assert metrics[-1]['gamma'] == pytest.approx(adaptive_gamma(trainer.buffer, 1.0, 1e-8))
        assert model.gamma == metrics[-1]['gamma']
        assert metrics[0]['gamma'] != 0.05

    def test_fixed_gamma_is_kept(self):
        _, metrics = tiny_trainer().train()
        assert all(m['gamma'] == 0.1 for m in metrics)

    def test_writes_metrics_and_checkpoints(self, tmp_path):
        out = tmp_path / 'run'
        trainer = tiny_trainer(out_dir=str(out), outer_loops=2, checkpoint_every=1)
        model, _ = trainer.train()
        header, rows = read_rows(str(out / 'metrics.csv'))
        assert header == METRICS_HEADER
        assert [r[0] for r in rows] == ['1', '2']
        loaded = load_checkpoint(str(out / 'ckpt_2.fsmp'))
        assert np.array_equal(loaded.params, model.params)
        assert (out / 'ckpt_1.fsmp').exists()

    def test_zero_rounds(self, tmp_path):
        trainer = tiny_trainer(out_dir=str(tmp_path), outer_loops=0)
        _, metrics = trainer.train()
        assert metrics == []
        header, rows = read_rows(str(tmp_path / 'metrics.csv'))
        assert header == METRICS_HEADER and rows == []

    def test_particle_target(self):
        trainer = tiny_trainer(DoubleWellTarget(), outer_loops=2)
        model, _ = trainer.train()
        assert model.spatial_dim == 2
        x = sample(model, 12, nfe=8, seed=1)
        assert np.max(np.abs(x.reshape(12, 4, 2).mean(axis=1))) < 1e-10

    def test_sphere_target(self):
        trainer = tiny_trainer(VonMisesFisherMixtureTarget.axis_modes(kappa=10.0), outer_loops=2)
        model, metrics = trainer.train()
        assert model.manifold is not None
        assert trainer.target.score_calls == 20
        x = sample(model, 25, nfe=8, seed=3)
        assert np.allclose(np.linalg.norm(x, axis=1), 1.0)

    def test_model_dimension_mismatch(self):
        with pytest.raises(ValueError):
            FlowSamplingTrainer(GaussianMixtureTarget.four_modes(), tiny_config(), model=DriftModel(3))


class TestSample:
    def test_empty(self):
        assert sample(DriftModel(2), 0, nfe=4).shape == (0, 2)

    def test_deterministic(self):
        model = DriftModel(2, seed=1)
        model.gamma = 0.2
        a = sample(model, 30, nfe=6, seed=5)
        b = sample(model, 30, nfe=6, seed=5)
        assert np.array_equal(a, b)

    def test_untrained_model_is_noise_process(self):
        """Нулевой дрейф при γ = 0 переносит источник без изменений"""
        x = sample(DriftModel(2, seed=0), 5000, nfe=4, gamma=0.0, seed=2)
        assert abs(x.mean()) < 0.05
        assert x.var() == pytest.approx(1.0, rel=0.1)


class TestOptimizeOracles:
    def test_zero_inner_loops_keeps_model(self):
        trainer = tiny_trainer(inner_loops=0)
        explore(trainer, 1)
        before = trainer.model.params.copy()
        loss = optimize(trainer, 1)
        assert np.array_equal(before, trainer.model.params)
        assert np.isnan(loss)
        assert trainer.skipped_steps == 0

    def test_single_target_fit(self):
        """γ = 0, в буфере одна пара: дрейф сходится к x1 - x0 на интерполянте"""
        x1 = 0.5
        cfg = TrainConfig(outer_loops=10, inner_loops=500, batch_size=256, buffer_capacity=1,
                          new_samples_per_outer=1, nfe_train=1, gamma=0.0, t_min=0.05, seed=0,
                          learning_rate=3e-3, learning_rate_final=1e-5, progress=False)
        trainer = FlowSamplingTrainer(GaussianMixtureTarget([[x1]]), cfg, hidden=[64, 64, 64], time_features=4)
        trainer.buffer.push([[x1]], [[0.0]])
        losses = [optimize(trainer, r) for r in range(1, 11)]
        assert losses[-1] < 0.25 * losses[0]
        assert np.mean(losses[5:]) < np.mean(losses[:5])

        rng = np.random.default_rng(0)
        x0 = rng.standard_normal(2000)
        t = rng.uniform(0.05, 0.9, 2000)
        xt = (1.0 - t) * x0 + t * x1
        pred = trainer.model.forward(xt[:, None], t)[:, 0]
        assert np.sqrt(np.mean((pred - (x1 - x0)) ** 2)) < 1e-2

    def test_stationary_point_is_kept(self):
        """Буфер из точных образцов: ещё один раунд не ухудшает W2 больше чем на 10%"""
        from scipy.stats import norm

        from src.algorithms.oracles import gmm_sample
        from src.core.metrics import w2_1d

        mu, tau = 2.0, 0.5
        target = GaussianMixtureTarget([[mu]], variance=tau ** 2)
        cfg = TrainConfig(outer_loops=21, inner_loops=200, batch_size=256, buffer_capacity=4096,
                          new_samples_per_outer=4096, nfe_train=64, gamma=0.2, seed=0,
                          learning_rate=1e-3, learning_rate_final=1e-5, progress=False)
        trainer = FlowSamplingTrainer(target, cfg, hidden=[64, 64], time_features=4)

        def fill_from_oracle(round_index):
            x1 = gmm_sample(target, cfg.new_samples_per_outer, 100 + round_index)
            trainer.buffer.push(x1, target.score(x1))

        for r in range(1, 21):
            fill_from_oracle(r)
            optimize(trainer, r)
        n = 20_000
        exact = mu + tau * norm.ppf((np.arange(n) + 0.5) / n)
        before = w2_1d(sample(trainer.model, n, nfe=64, seed=9), exact)
        fill_from_oracle(21)
        optimize(trainer, 21)
        after = w2_1d(sample(trainer.model, n, nfe=64, seed=9), exact)
        assert after <= 1.1 * before

    def test_skipped_steps_are_counted(self, monkeypatch):
        from src.core import trainer as trainer_module

        trainer = tiny_trainer(VonMisesFisherMixtureTarget.axis_modes(kappa=10.0), inner_loops=4)
        explore(trainer, 1)
        before = trainer.model.params.copy()
        monkeypatch.setattr(trainer_module.geo, 'near_cut_locus',
                            lambda spec, a, b: np.ones(len(a), dtype=bool))
        assert np.isnan(optimize(trainer, 1))
        assert trainer.skipped_steps == 4
        assert np.array_equal(before, trainer.model.params)


def test_learning_rate_schedule():
    trainer = tiny_trainer(outer_loops=2, inner_loops=5, learning_rate=1e-3, learning_rate_final=1e-5)
    assert trainer.learning_rate() == pytest.approx(1e-3)
    trainer.adam.step = 9
    assert trainer.learning_rate() == pytest.approx(1e-5)
    trainer.adam.step = 50
    assert trainer.learning_rate() == pytest.approx(1e-5)
    assert tiny_trainer().learning_rate() == tiny_config().learning_rate
    with pytest.raises(ValueError):
        tiny_config(learning_rate_final=0.0)


# ----------------------------------------------------------------------
# desk-scale прогоны с поставляемыми конфигурациями

def desk_run(name: str):
    import os

    from src.cli import load_run_config

    root = os.path.abspath(os.path.join(os.path.dirname(__file__), '..', '..'))
    cfg = load_run_config(os.path.join(root, 'configs', f'{name}.cfg'), {'output.progress': False})
    train_cfg = cfg.train_config()
    train_cfg.out_dir = None
    target = cfg.make_target()
    model, _ = FlowSamplingTrainer(target, train_cfg, **cfg.model_kwargs()).train()
    return cfg, target, model


@pytest.mark.slow
def test_gmm_end_to_end():
    """Четыре моды GMM: массы 0.25 ± 0.10, energy W2 ниже двух расхождений точных выборок"""
    from src.algorithms.oracles import gmm_sample
    from src.core.metrics import energy_w2, gmm_mode_weights

    cfg, target, model = desk_run('gmm_desk')
    gen = sample(model, 10_000, nfe=cfg['solver.nfe'], seed=1)
    assert np.all(np.abs(gmm_mode_weights(gen, target.centers) - 0.25) < 0.10)
    ref = gmm_sample(target, 10_000, 2)
    baseline = energy_w2(target, gmm_sample(target, 10_000, 3), ref)
    assert energy_w2(target, gen, ref) < 2.0 * baseline


@pytest.mark.slow
def test_dw4_adaptive_end_to_end():
    """DW-4 с адаптивным γ: energy W2 не хуже трёх расхождений двух прогонов Langevin"""
    from src.algorithms.oracles import reference_samples
    from src.core.metrics import energy_w2

    cfg, target, model = desk_run('dw4_adaptive')
    gen = sample(model, 10_000, nfe=cfg['solver.nfe'], seed=1)

    def langevin(seed):
        return reference_samples(target, 10_000, seed, cfg['eval.langevin_steps'], cfg['eval.langevin_step_size'])

    ref = langevin(2)
    baseline = energy_w2(target, langevin(3), ref)
    assert energy_w2(target, gen, ref) < 3.0 * baseline


@pytest.mark.slow
def test_vmf_end_to_end():
    """Шесть мод vMF на S²: массы 1/6 ± 0.05, направления мод в пределах 5°"""
    from src.core.metrics import mode_direction_errors_deg, sphere_mode_weights

    cfg, target, model = desk_run('vmf_s2')
    gen = sample(model, 10_000, nfe=cfg['solver.nfe'], seed=1)
    assert np.allclose(np.linalg.norm(gen, axis=1), 1.0)
    assert np.all(np.abs(sphere_mode_weights(gen, target.mus) - 1 / 6) < 0.05)
    assert np.all(mode_direction_errors_deg(gen, target.mus) < 5.0)
