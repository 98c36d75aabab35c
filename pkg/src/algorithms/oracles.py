"""
Эталонные выборки и вспомогательные операции над градиентами целей
"""
import math
from typing import Optional

import numpy as np

from src.algorithms.base_target import BaseTarget
from src.algorithms.gmm import GaussianMixtureTarget
from src.algorithms.particles import zero_com_project
from src.algorithms.vmf import VonMisesFisherMixtureTarget
from src.config import Config
from src.core.errors import DivergenceError, ManifoldKindError
from src.utils.logger import get_logger

logger = get_logger(__name__)


def clip_score(g: np.ndarray, threshold: float) -> np.ndarray:
    """Ограничивает ℓ²-норму каждого градиента (по последней оси) порогом threshold"""
    if threshold <= 0:
        raise ValueError("Порог клиппинга должен быть положительным")
    g = np.asarray(g, dtype=np.float64)
    n = np.linalg.norm(g, axis=-1, keepdims=True)
    scale = np.where(n > threshold, threshold / np.where(n > 0, n, 1.0), 1.0)
    return g * scale


def langevin_reference(target: BaseTarget, n_samples: int, n_steps: int = Config.LANGEVIN_STEPS,
                       step_size: float = Config.LANGEVIN_STEP_SIZE, seed: int = 0,
                       thin: int = Config.LANGEVIN_THIN, init: Optional[np.ndarray] = None,
                       init_scale: float = 1.0, clip: Optional[float] = None) -> np.ndarray:
    """
    Неподправленный Langevin (ULA): x <- x + ε∇r(x) + sqrt(2ε)·z.
    Первая половина шагов - прогрев, затем каждый thin-й шаг идёт в выборку.
    Цепочки с NaN/Inf останавливаются и исключаются.
    """
    if target.manifold is not None and target.manifold.is_curved:
        raise ManifoldKindError("langevin_reference работает только для евклидовых целей")
    if step_size < 0:
        raise ValueError("Шаг Langevin должен быть неотрицательным")
    rng = np.random.default_rng(seed)
    burn = n_steps // 2
    thin = max(1, int(thin))
    per_chain = max(1, (n_steps - burn) // thin)
    n_chains = max(1, math.ceil(n_samples / per_chain))

    def project(v):
        if target.is_particle_system:
            return zero_com_project(v, target.n_particles, target.spatial_dim)
        return v

    if init is None:
        x = project(init_scale * rng.standard_normal((n_chains, target.dim)))
    else:
        x = np.array(np.broadcast_to(np.asarray(init, dtype=np.float64), (n_chains, target.dim)))
    alive = np.ones(n_chains, dtype=bool)
    collected = []
    noise_scale = math.sqrt(2.0 * step_size)

    for k in range(1, n_steps + 1):
        g = target.ambient_score(x[alive])
        if clip is not None:
            g = clip_score(g, clip)
        z = rng.standard_normal((n_chains, target.dim))
        x[alive] = x[alive] + step_size * g + noise_scale * project(z[alive])
        bad = alive & ~np.all(np.isfinite(x), axis=1)
        if np.any(bad):
            logger.warning(f"⚠️ Langevin: {int(bad.sum())} цепочек разошлись на шаге {k}")
            alive &= ~bad
            if not np.any(alive):
                raise DivergenceError("Все цепочки Langevin разошлись", step=k)
        if k > burn and (k - burn) % thin == 0:
            collected.append(x.copy())

    if not collected:
        collected = [x.copy()]
    # мёртвые цепочки исключаются целиком
    samples = np.concatenate([c[alive] for c in collected])
    if len(samples) < n_samples:
        logger.warning(f"⚠️ Langevin: получено {len(samples)} из {n_samples} образцов")
    return samples[:n_samples]


def vmf_sample_oracle(mu, kappa: float, n: int, seed) -> np.ndarray:
    """Отбор по Вуду: компонента w = μᵀx с отбраковкой, затем равномерное касательное направление"""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    mu = np.asarray(mu, dtype=np.float64)
    mu = mu / np.linalg.norm(mu)
    p = mu.size
    m = p - 1
    b = m / (np.sqrt(4.0 * kappa ** 2 + m ** 2) + 2.0 * kappa)
    x0 = (1.0 - b) / (1.0 + b)
    c = kappa * x0 + m * np.log(1.0 - x0 ** 2)

    w = np.empty(n)
    filled = 0
    while filled < n:
        need = n - filled
        z = rng.beta(m / 2.0, m / 2.0, size=need)
        cand = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z)
        u = rng.uniform(size=need)
        ok = kappa * cand + m * np.log(1.0 - x0 * cand) - c >= np.log(u)
        take = cand[ok]
        w[filled:filled + take.size] = take
        filled += take.size

    v = rng.standard_normal((n, p))
    v = v - np.outer(v @ mu, mu)
    v = v / np.linalg.norm(v, axis=1, keepdims=True)
    out = np.sqrt(np.clip(1.0 - w ** 2, 0.0, None))[:, None] * v + w[:, None] * mu
    return out / np.linalg.norm(out, axis=1, keepdims=True)


def vmf_mixture_sample(target: VonMisesFisherMixtureTarget, n: int, seed) -> np.ndarray:
    """Точная выборка из смеси vMF"""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    labels = rng.choice(len(target.weights), size=n, p=target.weights)
    out = np.empty((n, target.dim))
    for k in range(len(target.weights)):
        idx = np.flatnonzero(labels == k)
        if idx.size:
            out[idx] = vmf_sample_oracle(target.mus[k], target.kappas[k], idx.size, rng)
    return out


def gmm_sample(target: GaussianMixtureTarget, n: int, seed) -> np.ndarray:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return target.sample(n, rng)


def reference_samples(target: BaseTarget, n: int, seed: int,
                      langevin_steps: int = Config.LANGEVIN_STEPS,
                      langevin_step_size: float = Config.LANGEVIN_STEP_SIZE,
                      clip: Optional[float] = Config.CLIP_THRESHOLD) -> np.ndarray:
    """Эталон для цели: точные сэмплеры для GMM/vMF, иначе длинный Langevin"""
    if isinstance(target, GaussianMixtureTarget):
        return gmm_sample(target, n, seed)
    if isinstance(target, VonMisesFisherMixtureTarget):
        return vmf_mixture_sample(target, n, seed)
    init_scale = 1.0
    if target.is_particle_system:
        # стартуем из разреженной конфигурации, чтобы не попасть в коллапс частиц
        init_scale = 2.0
    return langevin_reference(target, n, langevin_steps, langevin_step_size, seed,
                              init_scale=init_scale, clip=clip)
