"""
Цикл Flow Sampling: исследование (симуляция текущей модели и один вызов score на
конечную точку), replay-буфер и оптимизация регрессией на замкнутый условный дрейф.
"""
import os
import sys
import time
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.algorithms.base_target import BaseTarget
from src.algorithms.oracles import clip_score
from src.algorithms.particles import zero_com_project
from src.config import Config
from src.core import geometry as geo
from src.core import process
from src.core.checkpoint import save_checkpoint
from src.core.errors import DivergenceError, EmptyBufferError, FlowSamplingError, ManifoldKindError
from src.core.geometry import ManifoldKind, ManifoldSpec
from src.core.net import AdamState, DriftModel, adam_step, fs_loss_and_grad
from src.core.sde import SolverConfig, em_euclid, em_manifold
from src.utils.csv_io import append_row, write_rows
from src.utils.logger import get_logger

logger = get_logger(__name__)

METRICS_HEADER = ['round', 'loss_mean', 'gamma', 'buffer_len', 'score_calls_total', 'wallclock_s']


class ReplayBuffer:
    """Кольцевой FIFO-буфер пар (x1, ∇r(x1))"""

    def __init__(self, capacity: int, dim: int):
        if capacity < 1:
            raise ValueError("Ёмкость буфера должна быть >= 1")
        self.capacity = int(capacity)
        self.dim = int(dim)
        self._x = np.zeros((self.capacity, self.dim))
        self._g = np.zeros((self.capacity, self.dim))
        self.inserted = 0

    def __len__(self):
        return min(self.inserted, self.capacity)

    def push(self, xs: np.ndarray, gs: np.ndarray) -> int:
        xs = np.atleast_2d(np.asarray(xs, dtype=np.float64))
        gs = np.atleast_2d(np.asarray(gs, dtype=np.float64))
        if xs.shape != gs.shape or xs.shape[1] != self.dim:
            raise ValueError(f"Ожидались пары формы (n, {self.dim})")
        n = xs.shape[0]
        pos = (self.inserted + np.arange(n)) % self.capacity
        # при n > capacity последние записи перекрывают первые, порядок FIFO сохраняется
        self._x[pos] = xs
        self._g[pos] = gs
        self.inserted += n
        return n

    def contents(self) -> Tuple[np.ndarray, np.ndarray]:
        """Содержимое от самых старых к самым новым"""
        n = len(self)
        start = self.inserted - n
        pos = (start + np.arange(n)) % self.capacity
        return self._x[pos].copy(), self._g[pos].copy()

    def sample(self, batch: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
        """Равномерно, с возвращением"""
        n = len(self)
        if n == 0:
            raise EmptyBufferError("Выборка из пустого буфера")
        idx = rng.integers(0, n, size=batch)
        pos = (self.inserted - n + idx) % self.capacity
        return self._x[pos], self._g[pos]

    def scores(self) -> np.ndarray:
        return self._g[:len(self)] if self.inserted <= self.capacity else self._g


def adaptive_gamma(buffer: ReplayBuffer, c: float = Config.ADAPTIVE_C, eps: float = Config.ADAPTIVE_EPS) -> float:
    """γ = c / sqrt(mean ‖∇r(x1)‖² + eps)"""
    if len(buffer) == 0:
        raise EmptyBufferError("adaptive_gamma требует непустого буфера")
    g = buffer.scores()
    msq = float(np.mean(np.sum(g * g, axis=1)))
    return c / np.sqrt(msq + eps)


class GammaMode(Enum):
    FIXED = 'fixed'
    ADAPTIVE = 'adaptive'


@dataclass
class TrainConfig:
    outer_loops: int = Config.OUTER_LOOPS
    inner_loops: int = Config.INNER_LOOPS
    batch_size: int = Config.BATCH_SIZE
    buffer_capacity: int = Config.BUFFER_CAPACITY
    new_samples_per_outer: int = Config.NEW_SAMPLES_PER_OUTER
    nfe_train: int = Config.NFE_TRAIN
    gamma_mode: GammaMode = GammaMode.FIXED
    gamma: float = Config.GAMMA            # фиксированное значение или стартовое для адаптивного режима
    adaptive_c: float = Config.ADAPTIVE_C
    adaptive_eps: float = Config.ADAPTIVE_EPS
    clip_threshold: Optional[float] = Config.CLIP_THRESHOLD
    seed: int = 0
    t_min: float = Config.T_MIN
    learning_rate: float = Config.LEARNING_RATE
    learning_rate_final: Optional[float] = None  # косинусный спад к этому значению за все шаги обучения
    checkpoint_every: int = Config.CHECKPOINT_EVERY
    out_dir: Optional[str] = None
    record_wallclock: bool = False
    progress: bool = True

    def __post_init__(self):
        self.gamma_mode = GammaMode(self.gamma_mode)
        if self.outer_loops < 0 or self.inner_loops < 0:
            raise ValueError("Число итераций не может быть отрицательным")
        for name in ('batch_size', 'buffer_capacity', 'new_samples_per_outer', 'nfe_train'):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} должен быть >= 1")
        if not 0.0 < self.t_min < 1.0:
            raise ValueError("t_min должен быть в (0, 1)")
        if self.gamma < 0:
            raise ValueError("γ должен быть неотрицательным")
        if self.clip_threshold is not None and self.clip_threshold <= 0:
            raise ValueError("Порог клиппинга должен быть положительным")
        if self.learning_rate <= 0 or (self.learning_rate_final is not None and self.learning_rate_final <= 0):
            raise ValueError("Скорость обучения должна быть положительной")


def _seed_of(*words: int) -> int:
    return int(np.random.SeedSequence(list(words)).generate_state(1)[0])


def _rng(*words: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(words)))


def source_samples(n: int, dim: int, rng: np.random.Generator, manifold: Optional[ManifoldSpec] = None,
                   n_particles: Optional[int] = None, spatial_dim: Optional[int] = None) -> np.ndarray:
    """p0: N(0, I), проекция на нулевой центр масс для частиц, равномерное распределение на сфере"""
    if manifold is not None and manifold.is_curved:
        if manifold.kind is not ManifoldKind.SPHERE:
            raise ManifoldKindError("Источник определён только для сферических целей")
        return geo.uniform_sphere(manifold, n, rng)
    x = rng.standard_normal((n, dim))
    if n_particles:
        x = zero_com_project(x, n_particles, spatial_dim)
    return x


def simulate(model: DriftModel, x0: np.ndarray, nfe: int, gamma: float, seed: int,
             t_start: float = 0.0, on_divergence: str = 'raise') -> np.ndarray:
    """Прогон SDE с текущей моделью из заданных начальных точек"""
    cfg = SolverConfig(nfe=nfe, gamma=gamma, t_start=t_start, seed=seed)
    drift = model.forward
    if model.manifold is not None and model.manifold.is_curved:
        return em_manifold(model.manifold, drift, x0, cfg, on_divergence=on_divergence)
    project = None
    if model.spatial_dim:
        n_particles = model.input_dim // model.spatial_dim
        project = lambda v: zero_com_project(v, n_particles, model.spatial_dim)
    return em_euclid(drift, x0, cfg, project=project, on_divergence=on_divergence)


def sample(model: DriftModel, n: int, nfe: int, gamma: Optional[float] = None, seed: int = 0,
           t_start: float = 0.0) -> np.ndarray:
    """Генерация n образцов обученной моделью"""
    if n == 0:
        return np.zeros((0, model.output_dim))
    spatial = model.spatial_dim
    x0 = source_samples(n, model.input_dim, _rng(seed, 1), model.manifold,
                        model.input_dim // spatial if spatial else None, spatial)
    g = model.gamma if gamma is None else gamma
    return simulate(model, x0, nfe, g, _seed_of(seed, 2), t_start)


class FlowSamplingTrainer:
    """Владеет моделью, состоянием Adam, буфером и счётчиками одного запуска"""

    def __init__(self, target: BaseTarget, cfg: TrainConfig, model: Optional[DriftModel] = None,
                 hidden=Config.HIDDEN_LAYERS, activation=Config.ACTIVATION,
                 time_features: int = Config.TIME_FEATURES):
        self.target = target
        self.cfg = cfg
        self.manifold = target.manifold if (target.manifold is not None and target.manifold.is_curved) else None
        if model is None:
            model = DriftModel(target.dim, target.dim, hidden, activation, time_features,
                               seed=_seed_of(cfg.seed, 0xD1))
        if model.input_dim != target.dim or model.output_dim != target.dim:
            raise ValueError(f"Размерность модели {model.input_dim} не совпадает с целью {target.dim}")
        model.manifold = self.manifold
        model.spatial_dim = target.spatial_dim
        self.model = model
        self.adam = AdamState.zeros(model.n_params, lr=cfg.learning_rate)
        self.buffer = ReplayBuffer(cfg.buffer_capacity, target.dim)
        self.gamma = float(cfg.gamma)
        model.gamma = self.gamma
        self.dropped = 0
        self.skipped_steps = 0
        self.metrics: List[Dict] = []
        target.reset_counter()

    # ------------------------------------------------------------------
    def explore(self, round_index: int) -> int:
        """Симуляция модели new_samples_per_outer раз, ровно один вызов score на конечную точку"""
        cfg = self.cfg
        t = self.target
        x0 = source_samples(cfg.new_samples_per_outer, t.dim, _rng(cfg.seed, round_index, 1),
                            self.manifold, t.n_particles, t.spatial_dim)
        x1 = simulate(self.model, x0, cfg.nfe_train, self.gamma, _seed_of(cfg.seed, round_index, 0),
                      on_divergence='mask')
        ok = np.all(np.isfinite(x1), axis=1)
        if not np.all(ok):
            n_bad = int((~ok).sum())
            self.dropped += n_bad
            logger.warning(f"⚠️ Раунд {round_index}: отброшено {n_bad} разошедшихся траекторий")
        x1 = x1[ok]
        if x1.shape[0] == 0:
            raise DivergenceError("Все траектории исследования разошлись", round_index=round_index)
        g1 = t.score(x1)
        finite = np.all(np.isfinite(g1), axis=1)
        if not np.all(finite):
            self.dropped += int((~finite).sum())
            x1, g1 = x1[finite], g1[finite]
        if cfg.clip_threshold is not None:
            g1 = clip_score(g1, cfg.clip_threshold)
        return self.buffer.push(x1, g1)

    def _batch(self, rng: np.random.Generator):
        cfg = self.cfg
        t = self.target
        x1, g1 = self.buffer.sample(cfg.batch_size, rng)
        x0 = source_samples(cfg.batch_size, t.dim, rng, self.manifold, t.n_particles, t.spatial_dim)
        times = rng.uniform(cfg.t_min, 1.0, cfg.batch_size)
        if self.manifold is None:
            xt = process.interpolate(x0, x1, times)
            target_u = process.euclid_drift_target(x0, x1, g1, self.gamma)
            return xt, times, target_u
        keep = ~geo.near_cut_locus(self.manifold, x0, x1)
        if not np.any(keep):
            return None
        x0, x1, g1, times = x0[keep], x1[keep], g1[keep], times[keep]
        xt = geo.geodesic_interpolant(self.manifold, x0, x1, times)
        target_u = process.riemann_drift_target(self.manifold, x0, x1, g1, times, self.gamma)
        return xt, times, target_u

    def optimize(self, round_index: int) -> float:
        """inner_loops шагов Adam на L_FS; вызовов score нет"""
        if len(self.buffer) == 0:
            raise EmptyBufferError("optimize требует непустого буфера")
        rng = _rng(self.cfg.seed, round_index, 2)
        losses = []
        skipped = 0
        for _ in range(self.cfg.inner_loops):
            batch = self._batch(rng)
            if batch is None:
                skipped += 1
                continue
            xt, times, target_u = batch
            loss, grad = fs_loss_and_grad(self.model, xt, times, target_u, self.manifold)
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergenceError("NaN в функции потерь", round_index=round_index)
            self.adam.lr = self.learning_rate()
            self.model.params = adam_step(self.adam, self.model.params, grad)
            losses.append(loss)
        if skipped:
            self.skipped_steps += skipped
            logger.warning(f"⚠️ Раунд {round_index}: пропущено {skipped} из {self.cfg.inner_loops} шагов "
                           f"(все пары батча у точки сечения)")
        return float(np.mean(losses)) if losses else float('nan')

    def learning_rate(self) -> float:
        """Скорость обучения для следующего шага Adam"""
        cfg = self.cfg
        if cfg.learning_rate_final is None:
            return cfg.learning_rate
        total = max(1, cfg.outer_loops * cfg.inner_loops - 1)
        frac = min(1.0, self.adam.step / total)
        return cfg.learning_rate_final + 0.5 * (cfg.learning_rate - cfg.learning_rate_final) * (1.0 + np.cos(np.pi * frac))

    def _refresh_gamma(self):
        if self.cfg.gamma_mode is GammaMode.ADAPTIVE:
            self.gamma = adaptive_gamma(self.buffer, self.cfg.adaptive_c, self.cfg.adaptive_eps)
        self.model.gamma = self.gamma

    def run_round(self, round_index: int) -> Dict:
        started = time.perf_counter()
        self.explore(round_index)
        # γ обновляется после исследования и используется в регрессии и следующем исследовании
        self._refresh_gamma()
        loss = self.optimize(round_index)
        row = {
            'round': round_index,
            'loss_mean': loss,
            'gamma': self.gamma,
            'buffer_len': len(self.buffer),
            'score_calls_total': self.target.score_calls,
            'wallclock_s': (time.perf_counter() - started) if self.cfg.record_wallclock else 0.0,
        }
        self.metrics.append(row)
        return row

    def train(self) -> Tuple[DriftModel, List[Dict]]:
        cfg = self.cfg
        if cfg.out_dir:
            os.makedirs(cfg.out_dir, exist_ok=True)
            metrics_path = os.path.join(cfg.out_dir, 'metrics.csv')
            if os.path.exists(metrics_path):
                os.remove(metrics_path)
        logger.info(f"🔍 Flow Sampling: цель {self.target.name}, dim={self.target.dim}, "
                    f"раундов {cfg.outer_loops}, γ={self.gamma:g} ({cfg.gamma_mode.value})")
        show = cfg.progress and sys.stderr.isatty()
        bar = tqdm(range(1, cfg.outer_loops + 1), desc="Flow Sampling", file=sys.stderr, disable=not show)
        for r in bar:
            try:
                row = self.run_round(r)
            except DivergenceError as e:
                logger.error(f"❌ Раунд {r}: {e}")
                raise DivergenceError(str(e), step=e.step, round_index=r) from e
            except FlowSamplingError as e:
                logger.error(f"❌ Раунд {r}: {e}")
                raise
            bar.set_postfix(loss=f"{row['loss_mean']:.4g}", gamma=f"{row['gamma']:.3g}")
            if cfg.out_dir:
                append_row(os.path.join(cfg.out_dir, 'metrics.csv'), METRICS_HEADER,
                           [row[k] for k in METRICS_HEADER])
                if cfg.checkpoint_every and r % cfg.checkpoint_every == 0:
                    save_checkpoint(self.model, os.path.join(cfg.out_dir, f"ckpt_{r}.fsmp"))
        if cfg.out_dir and not self.metrics:
            write_rows(os.path.join(cfg.out_dir, 'metrics.csv'), METRICS_HEADER, [])
        logger.info(f"✅ Обучение завершено: вызовов score {self.target.score_calls}, "
                    f"отброшено траекторий {self.dropped}, пропущено шагов {self.skipped_steps}")
        return self.model, self.metrics


# функциональные обёртки над FlowSamplingTrainer

def explore(trainer: FlowSamplingTrainer, round_index: int = 1) -> int:
    return trainer.explore(round_index)


def optimize(trainer: FlowSamplingTrainer, round_index: int = 1) -> float:
    return trainer.optimize(round_index)


def train(target: BaseTarget, cfg: TrainConfig, **model_kwargs) -> Tuple[DriftModel, List[Dict]]:
    return FlowSamplingTrainer(target, cfg, **model_kwargs).train()
