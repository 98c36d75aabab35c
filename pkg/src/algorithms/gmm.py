import numpy as np
from scipy.special import logsumexp, softmax

from src.algorithms.base_target import BaseTarget
from src.core.errors import DimensionError


class GaussianMixtureTarget(BaseTarget):
    """Смесь изотропных гауссиан с общей дисперсией"""

    def __init__(self, centers, weights=None, variance: float = 1.0):
        centers = np.atleast_2d(np.asarray(centers, dtype=np.float64))
        k, d = centers.shape
        super().__init__("gmm", d)
        if weights is None:
            weights = np.full(k, 1.0 / k)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (k,):
            raise DimensionError("Число весов должно совпадать с числом центров")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("Веса смеси должны быть положительными и в сумме давать 1")
        if variance <= 0:
            raise ValueError("Дисперсия должна быть положительной")
        self.centers = centers
        self.weights = weights
        self.variance = float(variance)

    @classmethod
    def four_modes(cls, offset: float = 3.0, variance: float = 1.0) -> 'GaussianMixtureTarget':
        """2-D смесь с модами в (±offset, ±offset)"""
        c = offset
        return cls([[c, c], [-c, c], [-c, -c], [c, -c]], None, variance)

    def _log_components(self, x: np.ndarray) -> np.ndarray:
        diff = x[..., None, :] - self.centers
        sq = np.sum(diff * diff, axis=-1)
        norm_const = 0.5 * self.dim * np.log(2.0 * np.pi * self.variance)
        return np.log(self.weights) - sq / (2.0 * self.variance) - norm_const

    def reward(self, x):
        x = self.check_input(x)
        return logsumexp(self._log_components(x), axis=-1)

    def ambient_score(self, x):
        x = self.check_input(x)
        resp = softmax(self._log_components(x), axis=-1)
        return (resp @ self.centers - x) / self.variance

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Точная выборка из смеси"""
        labels = rng.choice(len(self.weights), size=n, p=self.weights)
        noise = rng.standard_normal((n, self.dim)) * np.sqrt(self.variance)
        return self.centers[labels] + noise
