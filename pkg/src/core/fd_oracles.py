"""
Оракулы на конечных разностях: независимая проверка замкнутых формул якобиана,
лог-детерминанта, условной плотности и градиентов сети.
"""
from typing import Callable, Tuple

import numpy as np

from src.core import geometry as geo
from src.core.geometry import ManifoldSpec, Point


def fd_geodesic_jacobian(spec: ManifoldSpec, x0: Point, x1: Point, t: float,
                         h: float = 1e-4) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Центральная разность X_t по x1 при фиксированном x0.
    Возвращает (матрица в касательных базисах, базис в x1, базис в X_t).
    """
    x1 = np.asarray(x1, dtype=np.float64)
    basis_src = geo.tangent_basis(spec, x1)
    basis_dst = geo.tangent_basis(spec, geo.geodesic_interpolant(spec, x0, x1, t))
    cols = []
    for e in basis_src:
        plus = geo.geodesic_interpolant(spec, x0, geo.renormalize(spec, x1 + h * e), t)
        minus = geo.geodesic_interpolant(spec, x0, geo.renormalize(spec, x1 - h * e), t)
        cols.append((plus - minus) / (2.0 * h))
    mat = np.array([[float(geo.inner(spec, b, c)) for c in cols] for b in basis_dst])
    return mat, basis_src, basis_dst


def fd_log_abs_det(spec: ManifoldSpec, x0: Point, x1: Point, t: float, h: float = 1e-5) -> float:
    mat, _, _ = fd_geodesic_jacobian(spec, x0, x1, t, h)
    return float(np.linalg.slogdet(mat)[1])


def fd_inv_jacobian_adjoint(spec: ManifoldSpec, x0: Point, x1: Point, t: float,
                            w: np.ndarray, h: float = 1e-4) -> np.ndarray:
    """(Jᶠᵈ)⁻ᵀ w в ambient-координатах точки X_t"""
    mat, basis_src, basis_dst = fd_geodesic_jacobian(spec, x0, x1, t, h)
    coords = np.array([float(geo.inner(spec, b, w)) for b in basis_src])
    return np.linalg.solve(mat.T, coords) @ basis_dst


def _tangent_fd_gradient(spec: ManifoldSpec, x: Point, fn: Callable[[Point], float], h: float) -> np.ndarray:
    basis = geo.tangent_basis(spec, x)
    grad = np.zeros_like(np.asarray(x, dtype=np.float64))
    for e in basis:
        df = fn(geo.renormalize(spec, x + h * e)) - fn(geo.renormalize(spec, x - h * e))
        grad = grad + df / (2.0 * h) * e
    return grad


def fd_logdet_gradient(spec: ManifoldSpec, x0: Point, x1: Point, t: float,
                       h_outer: float = 1e-3, h_inner: float = 1e-5) -> np.ndarray:
    """Касательный градиент log|det Jᶠᵈ_t| по x1 (в точке x1)"""
    return _tangent_fd_gradient(
        spec, np.asarray(x1, dtype=np.float64),
        lambda y: fd_log_abs_det(spec, x0, y, t, h_inner), h_outer)


def pushforward_log_density(spec: ManifoldSpec, x0: Point, x: Point, t: float,
                            reward_fn: Callable[[Point], float], h_inner: float = 1e-5) -> float:
    """
    log p_{t|0}(x | x0) с точностью до константы: r(X₁) - log|det J_t(X₁)|,
    X₁ = exp_{x0}(log_{x0}(x)/t) восстанавливается обращением геодезической.
    """
    x1 = geo.exp_map(spec, x0, geo.log_map(spec, x0, x) / t, check=False)
    return float(reward_fn(x1)) - fd_log_abs_det(spec, x0, x1, t, h_inner)


def fd_conditional_score(spec: ManifoldSpec, x0: Point, xt: Point, t: float,
                         reward_fn: Callable[[Point], float], h: float = 1e-4) -> np.ndarray:
    """Касательный FD-градиент log p_{t|0}(· | x0) в точке xt"""
    return _tangent_fd_gradient(
        spec, np.asarray(xt, dtype=np.float64),
        lambda y: pushforward_log_density(spec, x0, y, t, reward_fn), h)


def fd_param_gradient(params: np.ndarray, loss_fn: Callable[[np.ndarray], float],
                      h: float = 1e-5) -> np.ndarray:
    """Центральная разность скалярной функции по вектору параметров"""
    params = np.asarray(params, dtype=np.float64)
    grad = np.zeros_like(params)
    for i in range(params.size):
        p = params.copy()
        p[i] += h
        up = loss_fn(p)
        p[i] -= 2.0 * h
        down = loss_fn(p)
        grad[i] = (up - down) / (2.0 * h)
    return grad
