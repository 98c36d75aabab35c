import numpy as np
from abc import ABC, abstractmethod
from typing import Optional

from src.core import geometry as geo
from src.core.errors import DimensionError
from src.core.geometry import ManifoldSpec


class BaseTarget(ABC):
    """Базовый класс для всех целевых плотностей q(x) ∝ exp(r(x))"""

    def __init__(self, name: str, dim: int, manifold: Optional[ManifoldSpec] = None):
        self.name = name
        self.dim = dim
        self.manifold = manifold
        # для систем частиц: n частиц по spatial_dim координат, иначе None
        self.n_particles: Optional[int] = None
        self.spatial_dim: Optional[int] = None
        self.score_calls = 0

    @abstractmethod
    def reward(self, x: np.ndarray) -> np.ndarray:
        """
        Ненормированная лог-плотность r(x), векторизована по ведущим осям
        """
        pass

    @abstractmethod
    def ambient_score(self, x: np.ndarray) -> np.ndarray:
        """Аналитический градиент r в ambient-координатах (без учёта вызовов)"""
        pass

    def energy(self, x: np.ndarray) -> np.ndarray:
        return -self.reward(x)

    def score(self, x: np.ndarray) -> np.ndarray:
        """
        ∇r(x) с учётом вызовов: счётчик растёт на число точек.
        Для целей на многообразии возвращается внутренний (касательный) градиент.
        """
        x = self.check_input(x)
        self.score_calls += int(np.prod(x.shape[:-1], dtype=np.int64))
        g = self.ambient_score(x)
        if self.manifold is not None and self.manifold.is_curved:
            g = geo.project_tangent(self.manifold, x, g)
        return g

    def reset_counter(self):
        self.score_calls = 0

    @property
    def is_particle_system(self) -> bool:
        return self.n_particles is not None

    def check_input(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1:] != (self.dim,):
            raise DimensionError(f"{self.name}: ожидалась размерность {self.dim}, получено {x.shape}")
        return x

    def __repr__(self):
        return f"{type(self).__name__}(name={self.name!r}, dim={self.dim})"
