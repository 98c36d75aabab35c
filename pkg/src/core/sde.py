"""
Интегрирование Эйлера-Маруямы: евклидово X_{t+h} = X_t + h·u + sqrt(2γth)·Z
и на многообразии X_{t+h} = exp_{X_t}(h·u + sqrt(2γth)·P⊥Z).

Траектории делятся на чанки фиксированного размера; чанк k получает собственный
поток SeedSequence([seed, k]), поэтому результат не зависит от числа потоков.
"""
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from src.config import Config
from src.core import geometry as geo
from src.core.errors import DimensionError, DivergenceError
from src.core.geometry import ManifoldSpec
from src.utils.csv_io import write_trajectory

DriftFn = Callable[[np.ndarray, float], np.ndarray]
ProjectFn = Callable[[np.ndarray], np.ndarray]


@dataclass
class SolverConfig:
    nfe: int = Config.NFE_TRAIN
    gamma: float = 0.0
    t_start: float = 0.0
    seed: int = 0
    chunk_size: int = Config.TRAJECTORY_CHUNK
    threads: Optional[int] = None

    def __post_init__(self):
        if self.nfe < 1:
            raise ValueError("nfe должно быть >= 1")
        if not 0.0 <= self.t_start < 1.0:
            raise ValueError("t_start должен быть в [0, 1)")
        if self.gamma < 0:
            raise ValueError("γ должен быть неотрицательным")
        if self.chunk_size < 1:
            raise ValueError("chunk_size должен быть >= 1")

    @property
    def h(self) -> float:
        return (1.0 - self.t_start) / self.nfe

    def times(self) -> np.ndarray:
        """Сетка t_k = t_start + k·h, k = 0..nfe"""
        return self.t_start + self.h * np.arange(self.nfe + 1)


@dataclass
class SolverResult:
    endpoint: np.ndarray
    path: Optional[np.ndarray] = None        # (nfe + 1, N, d)
    diverged: Optional[np.ndarray] = None    # маска траекторий с NaN/Inf
    max_constraint_drift: float = 0.0


def _integrate(step, x0: np.ndarray, cfg: SolverConfig, return_path: bool, on_divergence: str,
               chunk_offset: int = 0):
    """Интегрирует один чанк; step(x, t, z) -> (x_new, drift_measure)"""
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, chunk_offset]))
    x = x0.copy()
    alive = np.ones(x.shape[0], dtype=bool)
    path = [x.copy()] if return_path else None
    worst = 0.0
    for k in range(cfg.nfe):
        t = cfg.t_start + k * cfg.h
        z = rng.standard_normal(x.shape)
        if np.any(alive):
            new, drift = step(x[alive], t, z[alive])
            worst = max(worst, drift)
            x[alive] = new
        bad = alive & ~np.all(np.isfinite(x), axis=1)
        if np.any(bad):
            if on_divergence == 'raise':
                raise DivergenceError("NaN/Inf в состоянии решателя", step=k)
            x[bad] = np.nan
            alive &= ~bad
        if return_path:
            path.append(x.copy())
    return x, (np.stack(path) if return_path else None), ~alive, worst


def _run_chunks(step, x0: np.ndarray, cfg: SolverConfig, return_path: bool, on_divergence: str) -> SolverResult:
    if on_divergence not in ('raise', 'mask'):
        raise ValueError("on_divergence: 'raise' или 'mask'")
    n = x0.shape[0]
    bounds = [(s, min(s + cfg.chunk_size, n)) for s in range(0, n, cfg.chunk_size)]
    workers = min(cfg.threads or Config.thread_cap(), max(1, len(bounds)))

    def run(k):
        lo, hi = bounds[k]
        return _integrate(step, x0[lo:hi], cfg, return_path, on_divergence, k)

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(bounds))))
    else:
        parts = [run(k) for k in range(len(bounds))]

    if not parts:
        empty_path = np.zeros((cfg.nfe + 1, 0, x0.shape[1])) if return_path else None
        return SolverResult(x0.copy(), empty_path, np.zeros(0, dtype=bool))
    return SolverResult(
        endpoint=np.concatenate([p[0] for p in parts]),
        path=np.concatenate([p[1] for p in parts], axis=1) if return_path else None,
        diverged=np.concatenate([p[2] for p in parts]),
        max_constraint_drift=max(p[3] for p in parts),
    )


def _as_batch(x0) -> np.ndarray:
    x0 = np.asarray(x0, dtype=np.float64)
    if x0.ndim == 1:
        x0 = x0[None, :]
    if x0.ndim != 2:
        raise DimensionError("Начальные состояния должны иметь форму (N, d)")
    return x0


def em_euclid(drift_fn: DriftFn, x0: np.ndarray, cfg: SolverConfig, return_path: bool = False,
              project: Optional[ProjectFn] = None, on_divergence: str = 'raise'):
    """
    Ровно cfg.nfe вычислений дрейфа на траекторию; шум sqrt(2γth) в левом конце шага.
    project (например, проекция на нулевой центр масс) применяется к дрейфу и шуму.
    Возвращает конечные точки или SolverResult при return_path=True.
    """
    single = np.ndim(x0) == 1
    batch = _as_batch(x0)
    h = cfg.h

    def step(x, t, z):
        u = drift_fn(x, t)
        noise = math.sqrt(2.0 * cfg.gamma * t * h) * z
        if project is not None:
            u, noise = project(u), project(noise)
        return x + h * u + noise, 0.0

    result = _run_chunks(step, batch, cfg, return_path, on_divergence)
    if return_path:
        return result
    return result.endpoint[0] if single else result.endpoint


def em_manifold(spec: ManifoldSpec, drift_fn: DriftFn, x0: np.ndarray, cfg: SolverConfig,
                return_path: bool = False, on_divergence: str = 'raise'):
    """Шаг через exp-отображение; шум проецируется в касательное пространство, точки ренормализуются"""
    single = np.ndim(x0) == 1
    batch = _as_batch(x0)
    if batch.shape[1] != spec.ambient_dim:
        raise DimensionError(f"Ожидалась размерность {spec.ambient_dim}, получено {batch.shape[1]}")
    h = cfg.h
    target = 1.0 / spec.kappa

    def step(x, t, z):
        u = geo.project_tangent(spec, x, drift_fn(x, t))
        noise = math.sqrt(2.0 * cfg.gamma * t * h) * geo.project_tangent(spec, x, z)
        raw = geo.exp_map(spec, x, h * u + noise, check=False, renorm=False)
        with np.errstate(invalid='ignore'):
            dev = np.abs(geo.inner(spec, raw, raw) - target)
            worst = float(np.nanmax(dev)) if dev.size and np.any(np.isfinite(dev)) else 0.0
        finite = np.all(np.isfinite(raw), axis=1)
        out = raw.copy()
        if np.any(finite):
            out[finite] = geo.renormalize(spec, raw[finite])
        return out, worst

    result = _run_chunks(step, batch, cfg, return_path, on_divergence)
    if return_path:
        return result
    return result.endpoint[0] if single else result.endpoint


def dump_trajectories(out_dir: str, result: SolverResult, cfg: SolverConfig, prefix: str = 'traj'):
    """Файл на траекторию: <prefix>_<index>.csv со столбцами t, x0..x{d-1}"""
    if result.path is None:
        raise ValueError("Для выгрузки нужен путь (return_path=True)")
    os.makedirs(out_dir, exist_ok=True)
    times = cfg.times()
    for i in range(result.path.shape[1]):
        write_trajectory(os.path.join(out_dir, f"{prefix}_{i}.csv"), times, result.path[:, i, :])


def constraint_deviation(spec: ManifoldSpec, x: np.ndarray) -> Dict[str, float]:
    dev = np.abs(geo.inner(spec, x, x) - 1.0 / spec.kappa)
    return {'max': float(np.max(dev)), 'mean': float(np.mean(dev))}
