"""
Системы частиц с парными потенциалами: double-well (DW-4) и Lennard-Jones
с гармоническим удержанием вокруг центра масс.
"""
import numpy as np

from src.algorithms.base_target import BaseTarget


def zero_com_project(x: np.ndarray, n_particles: int, spatial_dim: int) -> np.ndarray:
    """Вычитает центр масс по каждой пространственной координате"""
    x = np.asarray(x, dtype=np.float64)
    pos = x.reshape(x.shape[:-1] + (n_particles, spatial_dim))
    pos = pos - pos.mean(axis=-2, keepdims=True)
    return pos.reshape(x.shape)


def _pairs(n: int):
    return np.triu_indices(n, k=1)


class PairPotentialTarget(BaseTarget):
    """Общая часть: попарные расстояния i < j и сборка градиента"""

    def __init__(self, name: str, n_particles: int, spatial_dim: int):
        super().__init__(name, n_particles * spatial_dim)
        self.n_particles = n_particles
        self.spatial_dim = spatial_dim
        self._i, self._j = _pairs(n_particles)

    def positions(self, x: np.ndarray) -> np.ndarray:
        x = self.check_input(x)
        return x.reshape(x.shape[:-1] + (self.n_particles, self.spatial_dim))

    def pair_vectors(self, x: np.ndarray):
        pos = self.positions(x)
        diff = pos[..., self._i, :] - pos[..., self._j, :]
        dist = np.linalg.norm(diff, axis=-1)
        return pos, diff, dist

    def _scatter(self, pos: np.ndarray, diff: np.ndarray, dist: np.ndarray, dE_dd: np.ndarray) -> np.ndarray:
        """∂E/∂x из ∂E/∂d_ij: вклад +f в частицу i и -f в частицу j"""
        safe = np.where(dist > 0, dist, 1.0)
        unit = np.where((dist > 0)[..., None], diff / safe[..., None], 0.0)
        force = dE_dd[..., None] * unit
        grad = np.zeros_like(pos)
        for k, (i, j) in enumerate(zip(self._i, self._j)):
            grad[..., i, :] += force[..., k, :]
            grad[..., j, :] -= force[..., k, :]
        return grad

    def project(self, x: np.ndarray) -> np.ndarray:
        return zero_com_project(x, self.n_particles, self.spatial_dim)


class DoubleWellTarget(PairPotentialTarget):
    """E(x) = (1/τ) Σ_{i<j} a(d - d0) + b(d - d0)² + c(d - d0)⁴"""

    def __init__(self, n_particles: int = 4, spatial_dim: int = 2, a: float = 0.0, b: float = -4.0,
                 c: float = 0.9, d0: float = 4.0, tau: float = 1.0):
        super().__init__(f"dw{n_particles}", n_particles, spatial_dim)
        self.a, self.b, self.c, self.d0, self.tau = a, b, c, d0, tau

    def energy(self, x):
        _, _, dist = self.pair_vectors(x)
        r = dist - self.d0
        return np.sum(self.a * r + self.b * r ** 2 + self.c * r ** 4, axis=-1) / self.tau

    def reward(self, x):
        return -self.energy(x)

    def ambient_score(self, x):
        pos, diff, dist = self.pair_vectors(x)
        r = dist - self.d0
        dE_dd = (self.a + 2.0 * self.b * r + 4.0 * self.c * r ** 3) / self.tau
        grad = self._scatter(pos, diff, dist, dE_dd)
        return -grad.reshape(np.shape(x))


class LennardJonesTarget(PairPotentialTarget):
    """
    E = (ε/τ) Σ_{i<j} ((rm/d)⁶ - (rm/d)¹²) + c·½ Σ_i ‖x_i - x_COM‖².

    Знак парного члена записан буквально; standard_sign=True меняет его на
    ((rm/d)¹² - (rm/d)⁶), отталкивающий на малых расстояниях.
    """

    def __init__(self, n_particles: int = 13, spatial_dim: int = 3, rm: float = 1.0, tau: float = 1.0,
                 eps: float = 1.0, osc_c: float = 1.0, standard_sign: bool = False):
        super().__init__(f"lj{n_particles}", n_particles, spatial_dim)
        self.rm, self.tau, self.eps, self.osc_c = rm, tau, eps, osc_c
        self.standard_sign = standard_sign
        self.floor = 1e-3 * rm

    def _sign(self) -> float:
        return -1.0 if self.standard_sign else 1.0

    def pair_energy(self, dist: np.ndarray) -> np.ndarray:
        u6 = (self.rm / np.maximum(dist, self.floor)) ** 6
        return self._sign() * self.eps / self.tau * (u6 - u6 * u6)

    def oscillator_energy(self, x) -> np.ndarray:
        pos = self.positions(x)
        centered = pos - pos.mean(axis=-2, keepdims=True)
        return 0.5 * np.sum(centered ** 2, axis=(-2, -1))

    def energy(self, x):
        _, _, dist = self.pair_vectors(x)
        return np.sum(self.pair_energy(dist), axis=-1) + self.osc_c * self.oscillator_energy(x)

    def reward(self, x):
        return -self.energy(x)

    def ambient_score(self, x):
        pos, diff, dist = self.pair_vectors(x)
        clipped = np.maximum(dist, self.floor)
        u6 = (self.rm / clipped) ** 6
        # ниже порога расстояние заморожено, производная равна нулю
        dE_dd = np.where(dist > self.floor,
                         self._sign() * self.eps / self.tau * (-6.0 * u6 + 12.0 * u6 * u6) / clipped, 0.0)
        grad = self._scatter(pos, diff, dist, dE_dd)
        grad += self.osc_c * (pos - pos.mean(axis=-2, keepdims=True))
        return -grad.reshape(np.shape(x))
