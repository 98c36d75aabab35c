import itertools

import numpy as np
from scipy.special import gammaln, ive, logsumexp, softmax

from src.algorithms.base_target import BaseTarget
from src.core.errors import DimensionError
from src.core.geometry import ManifoldSpec


def vmf_log_normalizer(kappa: float, p: int) -> float:
    """log C_p(κ) для плотности C_p(κ)·exp(κ μᵀx) на S^{p-1}"""
    if kappa == 0:
        # обратная площадь сферы: Γ(p/2) / (2 π^{p/2})
        return float(gammaln(p / 2.0) - np.log(2.0) - 0.5 * p * np.log(np.pi))
    v = p / 2.0 - 1.0
    log_bessel = np.log(ive(v, kappa)) + kappa
    return float(v * np.log(kappa) - 0.5 * p * np.log(2.0 * np.pi) - log_bessel)


def axis_directions(p: int) -> np.ndarray:
    """±координатные оси R^p"""
    eye = np.eye(p)
    return np.concatenate([eye, -eye])


def diagonal_directions(p: int) -> np.ndarray:
    """(±1, ..., ±1)/√p"""
    corners = np.array(list(itertools.product((1.0, -1.0), repeat=p)))
    return corners / np.sqrt(p)


MODE_LAYOUTS = {'axes': axis_directions, 'diagonals': diagonal_directions}


def layout_directions(layout: str, p: int) -> np.ndarray:
    """Раскладка 'axes', 'diagonals' или их объединение 'axes+diagonals'"""
    parts = [s.strip() for s in str(layout).lower().split('+')]
    if any(s not in MODE_LAYOUTS for s in parts) or len(set(parts)) != len(parts):
        raise ValueError(f"Неизвестная раскладка мод vMF: {layout!r}, доступны {', '.join(MODE_LAYOUTS)}")
    return np.concatenate([MODE_LAYOUTS[s](p) for s in parts])


class VonMisesFisherMixtureTarget(BaseTarget):
    """Смесь vMF на единичной сфере S^{p-1} ⊂ R^p"""

    def __init__(self, mus, kappas, weights=None):
        mus = np.atleast_2d(np.asarray(mus, dtype=np.float64))
        k, p = mus.shape
        super().__init__("vmf", p, ManifoldSpec.sphere(p - 1))
        if np.any(np.abs(np.linalg.norm(mus, axis=1) - 1.0) > 1e-9):
            raise ValueError("Все направления μ_k должны иметь единичную норму")
        kappas = np.broadcast_to(np.asarray(kappas, dtype=np.float64), (k,)).copy()
        if np.any(kappas < 0):
            raise ValueError("κ_k должны быть неотрицательными")
        if weights is None:
            weights = np.full(k, 1.0 / k)
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (k,):
            raise DimensionError("Число весов должно совпадать с числом компонент")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValueError("Веса смеси должны быть положительными и в сумме давать 1")
        self.mus = mus
        self.kappas = kappas
        self.weights = weights
        self._log_norm = np.array([vmf_log_normalizer(kp, p) for kp in kappas])

    @classmethod
    def axis_modes(cls, sphere_dim: int = 2, kappa=50.0) -> 'VonMisesFisherMixtureTarget':
        """2·(sphere_dim + 1) мод на ±координатных осях с равными весами"""
        return cls(axis_directions(sphere_dim + 1), kappa)

    @classmethod
    def diagonal_modes(cls, sphere_dim: int = 2, kappa=50.0) -> 'VonMisesFisherMixtureTarget':
        return cls(diagonal_directions(sphere_dim + 1), kappa)

    @classmethod
    def from_layout(cls, layout: str = 'axes', sphere_dim: int = 2,
                    kappa=50.0) -> 'VonMisesFisherMixtureTarget':
        return cls(layout_directions(layout, sphere_dim + 1), kappa)

    def _log_components(self, x: np.ndarray) -> np.ndarray:
        return np.log(self.weights) + self._log_norm + self.kappas * (x @ self.mus.T)

    def reward(self, x):
        x = self.check_input(x)
        return logsumexp(self._log_components(x), axis=-1)

    def ambient_score(self, x):
        x = self.check_input(x)
        resp = softmax(self._log_components(x), axis=-1)
        return (resp * self.kappas) @ self.mus
