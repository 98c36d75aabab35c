"""
Интерполянты и замкнутые условные дрейфы (цели регрессии) для евклидова
и риманова случаев.
"""
from abc import ABC, abstractmethod
from typing import Callable

import numpy as np

from src.core import geometry as geo
from src.core.errors import DimensionError, SingularTimeError
from src.core.geometry import ManifoldSpec, Point, TangentVec

DriftFn = Callable[[np.ndarray, float], np.ndarray]


def _col(t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return t[..., None] if t.ndim else t


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"Несовпадение форм: {sorted(shapes)}")


class Schedule(ABC):
    """Процесс X_t = σ_t X₀ + α_t X₁ с коэффициентом диффузии g_t"""

    @abstractmethod
    def alpha(self, t): ...

    @abstractmethod
    def sigma(self, t): ...

    @abstractmethod
    def alpha_dot(self, t): ...

    @abstractmethod
    def sigma_dot(self, t): ...

    @abstractmethod
    def g2(self, t): ...


class LinearSchedule(Schedule):
    """α_t = t, σ_t = 1 - t, g_t² = 2γt"""

    def __init__(self, gamma: float = 0.0):
        if gamma < 0:
            raise ValueError("γ должен быть неотрицательным")
        self.gamma = float(gamma)

    def alpha(self, t):
        return t

    def sigma(self, t):
        return 1.0 - t

    def alpha_dot(self, t):
        return np.ones_like(np.asarray(t, dtype=np.float64))

    def sigma_dot(self, t):
        return -np.ones_like(np.asarray(t, dtype=np.float64))

    def g2(self, t):
        return 2.0 * self.gamma * np.asarray(t, dtype=np.float64)

    def __repr__(self):
        return f"LinearSchedule(gamma={self.gamma})"


# ---------------------------------------------------------------------------
# евклидов случай

def interpolate(x0: np.ndarray, x1: np.ndarray, t) -> np.ndarray:
    """(1 - t)·x0 + t·x1"""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    _same_shape(x0, x1)
    tc = _col(t)
    return (1.0 - tc) * x0 + tc * x1


def conditional_velocity(x: np.ndarray, x0: np.ndarray, t, schedule: Schedule) -> np.ndarray:
    """(α̇_t/α_t)(x - σ_t x0) + σ̇_t x0"""
    x = np.asarray(x, dtype=np.float64)
    x0 = np.asarray(x0, dtype=np.float64)
    _same_shape(x, x0)
    if np.any(np.asarray(schedule.alpha(np.asarray(t, dtype=np.float64))) == 0):
        raise SingularTimeError("conditional_velocity не определена при α_t = 0")
    a = _col(schedule.alpha(np.asarray(t, dtype=np.float64)))
    return _col(schedule.alpha_dot(t)) / a * (x - _col(schedule.sigma(t)) * x0) + _col(schedule.sigma_dot(t)) * x0


def euclid_drift_target(x0: np.ndarray, x1: np.ndarray, score1: np.ndarray, gamma: float) -> np.ndarray:
    """x1 - x0 + γ·∇r(x1); от t не зависит при линейном расписании"""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    score1 = np.asarray(score1, dtype=np.float64)
    _same_shape(x0, x1, score1)
    return x1 - x0 + gamma * score1


def conditional_drift(x0: np.ndarray, x1: np.ndarray, score1: np.ndarray, t, schedule: Schedule) -> np.ndarray:
    """α̇_t x1 + σ̇_t x0 + g_t²/(2α_t)·∇r(x1) для произвольного расписания"""
    x0 = np.asarray(x0, dtype=np.float64)
    x1 = np.asarray(x1, dtype=np.float64)
    score1 = np.asarray(score1, dtype=np.float64)
    _same_shape(x0, x1, score1)
    t = np.asarray(t, dtype=np.float64)
    if np.any(np.asarray(schedule.alpha(t)) == 0):
        raise SingularTimeError("conditional_drift не определён при α_t = 0")
    coef = _col(schedule.g2(t) / (2.0 * schedule.alpha(t)))
    return _col(schedule.alpha_dot(t)) * x1 + _col(schedule.sigma_dot(t)) * x0 + coef * score1


# ---------------------------------------------------------------------------
# риманов случай

def riemann_drift_target(spec: ManifoldSpec, x0: Point, x1: Point, ambient_score1: np.ndarray,
                         t, gamma: float) -> TangentVec:
    """
    Ẋ_t + γt·[(J_t⁻¹)*·P⊥_{x1}(∇r(x1)) - ∇ log|det J_t|] в точке X_t.

    Оба слагаемых в скобках собираются в x1 и переносятся одним применением (J_t⁻¹)*.
    """
    t = np.asarray(t, dtype=np.float64)
    if np.any(t <= 0):
        raise SingularTimeError("Риманова цель не определена при t = 0")
    intrinsic = geo.project_tangent(spec, x1, ambient_score1)
    at_source = intrinsic - geo.logdet_gradient_at_source(spec, x0, x1, t)
    correction = geo.inv_jacobian_adjoint_apply(spec, x0, x1, t, at_source)
    return geo.geodesic_velocity(spec, x0, x1, t) + gamma * _col(t) * correction


# ---------------------------------------------------------------------------
# гауссовы оракулы: p0 = N(0, I), q = N(μ, τ²I), независимая связь

def gaussian_marginal_variance(tau2: float, t) -> np.ndarray:
    t = np.asarray(t, dtype=np.float64)
    return (1.0 - t) ** 2 + t * t * tau2


def gaussian_marginal_velocity(mu, tau2: float) -> DriftFn:
    """Маргинальная скорость v_t(x) = E[X1 - X0 | X_t = x]"""
    mu = np.asarray(mu, dtype=np.float64)

    def velocity(x, t):
        s2 = gaussian_marginal_variance(tau2, t)
        return mu + (t * tau2 - (1.0 - t)) / s2 * (x - t * mu)

    return velocity


def gaussian_marginal_drift(mu, tau2: float, gamma: float) -> DriftFn:
    """u_t(x) = v_t(x) + (g_t²/2)·∇log p_t(x)"""
    mu = np.asarray(mu, dtype=np.float64)
    velocity = gaussian_marginal_velocity(mu, tau2)

    def drift(x, t):
        s2 = gaussian_marginal_variance(tau2, t)
        return velocity(x, t) - gamma * t * (x - t * mu) / s2

    return drift
