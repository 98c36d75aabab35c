"""
Замкнутые формулы римановой геометрии для многообразий постоянной кривизны,
вложенных в пространство с диагональной метрикой Σ:

    M = {x : <x, x>_Σ = 1/κ}

Сфера (κ > 0, Σ = I) и верхняя пола гиперболоида (κ < 0, Σ = diag(-1, 1, ..., 1),
временная координата первая). Евклидово пространство (κ = 0) поддерживается только
как вырожденный случай: кривые операции его отвергают.

Все функции векторизованы по ведущим осям: точки имеют форму (..., n), скаляры (...).
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np

from src.config import Config
from src.core.errors import CutLocusError, DimensionError, GeometryError, ManifoldKindError, SingularTimeError

Point = np.ndarray
TangentVec = np.ndarray
Scalar = Union[float, np.ndarray]


class ManifoldKind(Enum):
    EUCLIDEAN = 0
    SPHERE = 1
    HYPERBOLOID = 2


@dataclass(frozen=True)
class ManifoldSpec:
    """Метрика Σ (диагональ) и кривизна κ"""
    kind: ManifoldKind
    dim: int
    sigma_diag: Tuple[float, ...]
    kappa: float

    def __post_init__(self):
        object.__setattr__(self, 'sigma_diag', tuple(float(s) for s in self.sigma_diag))
        if self.dim < 1:
            raise GeometryError(f"Размерность многообразия должна быть >= 1, получено {self.dim}")
        sig = self.sigma_diag
        if self.kind is ManifoldKind.EUCLIDEAN:
            if self.kappa != 0.0:
                raise GeometryError("Для евклидова пространства κ = 0")
            if len(sig) != self.dim or any(s != 1.0 for s in sig):
                raise GeometryError("Евклидова метрика: Σ = I размера dim")
        elif self.kind is ManifoldKind.SPHERE:
            if not self.kappa > 0:
                raise GeometryError("Для сферы κ > 0")
            if len(sig) != self.dim + 1 or any(s != 1.0 for s in sig):
                raise GeometryError("Сфера: Σ = I размера dim + 1")
        elif self.kind is ManifoldKind.HYPERBOLOID:
            if not self.kappa < 0:
                raise GeometryError("Для гиперболоида κ < 0")
            if len(sig) != self.dim + 1 or sig[0] != -1.0 or any(s != 1.0 for s in sig[1:]):
                raise GeometryError("Гиперболоид: Σ = diag(-1, 1, ..., 1), временная координата первая")

    @classmethod
    def euclidean(cls, dim: int) -> 'ManifoldSpec':
        return cls(ManifoldKind.EUCLIDEAN, dim, (1.0,) * dim, 0.0)

    @classmethod
    def sphere(cls, dim: int, kappa: float = 1.0) -> 'ManifoldSpec':
        return cls(ManifoldKind.SPHERE, dim, (1.0,) * (dim + 1), kappa)

    @classmethod
    def hyperboloid(cls, dim: int, kappa: float = -1.0) -> 'ManifoldSpec':
        return cls(ManifoldKind.HYPERBOLOID, dim, (-1.0,) + (1.0,) * dim, kappa)

    @property
    def ambient_dim(self) -> int:
        return len(self.sigma_diag)

    @property
    def sigma(self) -> np.ndarray:
        return np.asarray(self.sigma_diag, dtype=np.float64)

    @property
    def is_curved(self) -> bool:
        return self.kind is not ManifoldKind.EUCLIDEAN

    @property
    def sqrt_abs_kappa(self) -> float:
        return float(np.sqrt(abs(self.kappa)))


# ---------------------------------------------------------------------------
# вспомогательные функции

def _col(a) -> np.ndarray:
    return np.asarray(a, dtype=np.float64)[..., None]


def _check_dim(spec: ManifoldSpec, *arrays: np.ndarray):
    for a in arrays:
        if np.shape(a)[-1:] != (spec.ambient_dim,):
            raise DimensionError(
                f"Ожидалась размерность {spec.ambient_dim} по последней оси, получено {np.shape(a)}")


def _require_curved(spec: ManifoldSpec):
    if not spec.is_curved:
        raise ManifoldKindError("Операция определена только для сферы и гиперболоида")


def _sin_ratio(z: np.ndarray, hyperbolic: bool) -> np.ndarray:
    """sin(z)/z или sinh(z)/z, ряд Тейлора для малых z"""
    z = np.asarray(z, dtype=np.float64)
    small = np.abs(z) < Config.SMALL_ANGLE
    safe = np.where(small, 1.0, z)
    z2 = z * z
    if hyperbolic:
        exact = np.sinh(safe) / safe
        series = 1.0 + z2 / 6.0 + z2 * z2 / 120.0
    else:
        exact = np.sin(safe) / safe
        series = 1.0 - z2 / 6.0 + z2 * z2 / 120.0
    return np.where(small, series, exact)


def _inv_sin_ratio(a: np.ndarray, hyperbolic: bool) -> np.ndarray:
    """a/sin(a) или a/sinh(a)"""
    a = np.asarray(a, dtype=np.float64)
    small = np.abs(a) < Config.SMALL_ANGLE
    safe = np.where(small, 1.0, a)
    a2 = a * a
    if hyperbolic:
        exact = safe / np.sinh(safe)
        series = 1.0 - a2 / 6.0 + 7.0 * a2 * a2 / 360.0
    else:
        exact = safe / np.sin(safe)
        series = 1.0 + a2 / 6.0 + 7.0 * a2 * a2 / 360.0
    return np.where(small, series, exact)


# ---------------------------------------------------------------------------
# метрика

def inner(spec: ManifoldSpec, u: np.ndarray, v: np.ndarray) -> Scalar:
    """<u, v>_Σ = Σ_i σ_i u_i v_i по последней оси"""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dim(spec, u, v)
    return np.sum(spec.sigma * u * v, axis=-1)


def norm(spec: ManifoldSpec, v: np.ndarray) -> Scalar:
    return np.sqrt(np.maximum(inner(spec, v, v), 0.0))


def is_on_manifold(spec: ManifoldSpec, x: Point, tol: float = Config.GEOMETRY_TOL) -> np.ndarray:
    _require_curved(spec)
    target = 1.0 / spec.kappa
    ok = np.abs(inner(spec, x, x) - target) <= tol * max(1.0, abs(target))
    if spec.kind is ManifoldKind.HYPERBOLOID:
        ok = ok & (np.asarray(x)[..., 0] > 0)
    return ok


def is_tangent(spec: ManifoldSpec, x: Point, w: np.ndarray, tol: float = Config.GEOMETRY_TOL) -> np.ndarray:
    _require_curved(spec)
    scale = np.linalg.norm(x, axis=-1) * np.linalg.norm(w, axis=-1)
    return np.abs(inner(spec, x, w)) <= tol * np.maximum(1.0, scale)


def project_tangent(spec: ManifoldSpec, x: Point, w: np.ndarray) -> TangentVec:
    """P⊥_x w = w - (<x,w>/<x,x>) x"""
    _require_curved(spec)
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    xx = inner(spec, x, x)
    if np.any(np.abs(xx) < 1e-300):
        raise GeometryError("Вырожденная точка: <x,x>_Σ = 0")
    return w - _col(inner(spec, x, w) / xx) * x


def renormalize(spec: ManifoldSpec, x: np.ndarray) -> Point:
    """
    Возврат точки на многообразие: сфера - масштабирование 1/sqrt(κ<x,x>),
    гиперболоид - пересчёт временной координаты по пространственным.
    """
    _require_curved(spec)
    x = np.asarray(x, dtype=np.float64)
    q = spec.kappa * inner(spec, x, x)
    if np.any(q <= 0):
        raise GeometryError("Точку нельзя спроецировать на многообразие (κ<x,x> <= 0)")
    if spec.kind is ManifoldKind.SPHERE:
        return x / _col(np.sqrt(q))
    if np.any(x[..., 0] <= 0):
        raise GeometryError("Точка не на верхней поле гиперболоида")
    # масштабирование теряет точность при больших x_0 (сокращение в <x,x>)
    out = x.copy()
    out[..., 0] = np.sqrt(1.0 / abs(spec.kappa) + np.sum(x[..., 1:] ** 2, axis=-1))
    return out


# ---------------------------------------------------------------------------
# exp / log

def exp_map(spec: ManifoldSpec, x: Point, v: TangentVec, check: bool = True, renorm: bool = True) -> Point:
    """Экспоненциальное отображение; по умолчанию результат ренормализуется на многообразие"""
    _require_curved(spec)
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dim(spec, x, v)
    if check and not np.all(is_tangent(spec, x, v, Config.TANGENT_TOL)):
        raise GeometryError("Вектор не касается многообразия в точке x")
    hyperbolic = spec.kind is ManifoldKind.HYPERBOLOID
    z = spec.sqrt_abs_kappa * norm(spec, v)
    head = np.cosh(z) if hyperbolic else np.cos(z)
    out = _col(head) * x + _col(_sin_ratio(z, hyperbolic)) * v
    return renormalize(spec, out) if renorm else out


def _angle(spec: ManifoldSpec, x: Point, y: Point):
    """(c, a, u): c = κ<x,y> (с обрезкой), a = s·d(x,y), u = y - c·x"""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _check_dim(spec, x, y)
    c = spec.kappa * inner(spec, x, y)
    s = spec.sqrt_abs_kappa
    if spec.kind is ManifoldKind.SPHERE:
        c = np.clip(c, -1.0, 1.0)
        u = y - _col(c) * x
        a = np.arctan2(s * norm(spec, u), c)
    else:
        c = np.maximum(c, 1.0)
        u = y - _col(c) * x
        a = np.arcsinh(s * norm(spec, u))
    return c, a, u


def log_map(spec: ManifoldSpec, x: Point, y: Point) -> TangentVec:
    """Логарифмическое отображение log_x(y); антиподальные пары на сфере отвергаются"""
    _require_curved(spec)
    c, a, u = _angle(spec, x, y)
    if spec.kind is ManifoldKind.SPHERE and np.any(1.0 + c < Config.CUT_LOCUS_TOL):
        raise CutLocusError("Антиподальная пара: логарифм не единственен")
    hyperbolic = spec.kind is ManifoldKind.HYPERBOLOID
    return _col(_inv_sin_ratio(a, hyperbolic)) * u


def geodesic_distance(spec: ManifoldSpec, x: Point, y: Point) -> Scalar:
    _require_curved(spec)
    _, a, _ = _angle(spec, x, y)
    return a / spec.sqrt_abs_kappa


def near_cut_locus(spec: ManifoldSpec, x0: Point, x1: Point,
                   margin: float = Config.CUT_LOCUS_MARGIN) -> np.ndarray:
    """Маска пар, слишком близких к cut locus (только сфера)"""
    _require_curved(spec)
    if spec.kind is not ManifoldKind.SPHERE:
        return np.zeros(np.shape(x0)[:-1], dtype=bool)
    z = spec.sqrt_abs_kappa * geodesic_distance(spec, x0, x1)
    return np.asarray(z > np.pi - margin)


# ---------------------------------------------------------------------------
# геодезические

def geodesic_interpolant(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar) -> Point:
    """X_t = exp_{x1}((1 - t) log_{x1}(x0)); X_0 = x0, X_1 = x1"""
    V = log_map(spec, x1, x0)
    return exp_map(spec, x1, (1.0 - _col(t)) * V, check=False)


def geodesic_velocity(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar) -> TangentVec:
    """dX_t/dt; при t = 1 равно Ẋ₁ = -log_{x1}(x0), норма постоянна и равна ω"""
    x1 = np.asarray(x1, dtype=np.float64)
    V = log_map(spec, x1, x0)
    s = spec.sqrt_abs_kappa
    omega = norm(spec, V)
    phase = s * (1.0 - np.asarray(t, dtype=np.float64)) * omega
    if spec.kind is ManifoldKind.SPHERE:
        return _col(s * omega * np.sin(phase)) * x1 - _col(np.cos(phase)) * V
    return -_col(s * omega * np.sinh(phase)) * x1 - _col(np.cosh(phase)) * V


def parallel_transport(spec: ManifoldSpec, x1: Point, xt: Point, v: TangentVec) -> TangentVec:
    """Параллельный перенос вдоль геодезической x1 -> xt: отражение Хаусхолдера относительно m = x1 + xt"""
    _require_curved(spec)
    x1 = np.asarray(x1, dtype=np.float64)
    xt = np.asarray(xt, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_dim(spec, x1, xt, v)
    m = x1 + xt
    mm = inner(spec, m, m)
    if np.any(np.abs(mm) * abs(spec.kappa) < Config.CUT_LOCUS_TOL):
        raise CutLocusError("Перенос между антиподальными точками не определён")
    return v - _col(2.0 * inner(spec, m, v) / mm) * m


# ---------------------------------------------------------------------------
# якобиан геодезического отображения x1 -> X_t

def jacobian_scaling(spec: ManifoldSpec, omega1: Scalar, t: Scalar) -> Scalar:
    """c_t = sin(t·z)/sin(z) (сфера) или sinh(t·z)/sinh(z) (гиперболоид), z = ω√|κ|"""
    _require_curved(spec)
    z = spec.sqrt_abs_kappa * np.asarray(omega1, dtype=np.float64)
    t = np.asarray(t, dtype=np.float64)
    hyperbolic = spec.kind is ManifoldKind.HYPERBOLOID
    if not hyperbolic and np.any(z >= np.pi):
        raise CutLocusError("ω√κ >= π: масштаб якобиана не определён")
    small = np.abs(z) < Config.SMALL_ANGLE
    safe = np.where(small, 1.0, z)
    if hyperbolic:
        exact = np.sinh(t * safe) / np.sinh(safe)
    else:
        exact = np.sin(t * safe) / np.sin(safe)
    z2 = z * z
    sign = -1.0 if hyperbolic else 1.0
    one_m = 1.0 - t * t
    series = t * (1.0 + sign * one_m * z2 / 6.0 + one_m * (7.0 - 3.0 * t * t) * z2 * z2 / 360.0)
    return np.where(small, series, exact)


def _jacobian_frame(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar):
    """X_t, единичное направление e = Ẋ₁/ω в x1, ω и c_t"""
    V = log_map(spec, x1, x0)
    omega = norm(spec, V)
    xt = exp_map(spec, x1, (1.0 - _col(t)) * V, check=False)
    safe = np.where(omega > 0, omega, 1.0)
    e = -V / _col(safe)
    c_t = jacobian_scaling(spec, omega, t)
    return xt, e, omega, c_t


def _split(spec: ManifoldSpec, e: TangentVec, w: TangentVec):
    """(P_e w, P⊥_e w) внутри касательного пространства"""
    along = _col(inner(spec, e, w)) * e
    return along, w - along


def geodesic_jacobian_apply(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar,
                            w: TangentVec) -> TangentVec:
    """J_t w = T(t·P w + c_t·P⊥ w), w касается в x1"""
    xt, e, _, c_t = _jacobian_frame(spec, x0, x1, t)
    along, perp = _split(spec, e, np.asarray(w, dtype=np.float64))
    return parallel_transport(spec, x1, xt, _col(t) * along + _col(c_t) * perp)


def inv_jacobian_adjoint_apply(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar,
                               w: TangentVec) -> TangentVec:
    """(J_t⁻¹)* w = T((1/t)·P w + (1/c_t)·P⊥ w): из T_{x1} в T_{X_t}"""
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0):
        raise SingularTimeError("(J_t⁻¹)* вырожден при t = 0")
    xt, e, _, c_t = _jacobian_frame(spec, x0, x1, t_arr)
    along, perp = _split(spec, e, np.asarray(w, dtype=np.float64))
    return parallel_transport(spec, x1, xt, along / _col(t_arr) + perp / _col(c_t))


def _logdet_rate(spec: ManifoldSpec, omega: np.ndarray, t: np.ndarray) -> np.ndarray:
    """(d-1)·s²·(t·cot(tz) - cot z)/z, гиперболический случай через coth"""
    s = spec.sqrt_abs_kappa
    z = s * omega
    hyperbolic = spec.kind is ManifoldKind.HYPERBOLOID
    small = np.abs(z) < Config.SMALL_ANGLE
    safe = np.where(small, 1.0, z)
    if hyperbolic:
        exact = (t / np.tanh(t * safe) - 1.0 / np.tanh(safe)) / safe
        series = -(1.0 - t ** 2) / 3.0 + (1.0 - t ** 4) * z * z / 45.0
    else:
        exact = (t / np.tan(t * safe) - 1.0 / np.tan(safe)) / safe
        series = (1.0 - t ** 2) / 3.0 + (1.0 - t ** 4) * z * z / 45.0
    return (spec.dim - 1) * s * s * np.where(small, series, exact)


def logdet_gradient_at_source(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar) -> TangentVec:
    """∇_{x1} log|det J_t| в точке x1: (d-1)(t·cot(tω) - cot ω)·Ẋ₁/ω при κ = 1"""
    _require_curved(spec)
    t_arr = np.asarray(t, dtype=np.float64)
    if np.any(t_arr <= 0):
        raise SingularTimeError("Градиент log|det J_t| не определён при t = 0")
    V = log_map(spec, x1, x0)
    omega = norm(spec, V)
    if spec.kind is ManifoldKind.SPHERE and np.any(spec.sqrt_abs_kappa * omega >= np.pi):
        raise CutLocusError("ω√κ >= π: cot не определён")
    return -_col(_logdet_rate(spec, omega, t_arr)) * V


def logdet_gradient(spec: ManifoldSpec, x0: Point, x1: Point, t: Scalar) -> TangentVec:
    """
    Градиент x ↦ log|det J_t(φ_t⁻¹(x))| в точке X_t: (J_t⁻¹)* от градиента в x1.
    Градиент в x1 параллелен Ẋ₁, поэтому результат равен (rate/t)·Ẋ_t.
    """
    return inv_jacobian_adjoint_apply(spec, x0, x1, t, logdet_gradient_at_source(spec, x0, x1, t))


# ---------------------------------------------------------------------------
# явные матрицы в касательных базисах (для оракулов)

def tangent_basis(spec: ManifoldSpec, x: Point) -> np.ndarray:
    """Σ-ортонормированный базис T_x M: Грам-Шмидт по проекциям ambient-базиса, форма (dim, n)"""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionError("tangent_basis принимает одну точку")
    basis = []
    for i in range(spec.ambient_dim):
        w = project_tangent(spec, x, np.eye(spec.ambient_dim)[i])
        for b in basis:
            w = w - inner(spec, b, w) * b
        n = norm(spec, w)
        if n > 1e-8:
            basis.append(w / n)
        if len(basis) == spec.dim:
            break
    return np.array(basis)


def geodesic_jacobian_matrix(spec: ManifoldSpec, x0: Point, x1: Point, t: float,
                             basis_src: Optional[np.ndarray] = None,
                             basis_dst: Optional[np.ndarray] = None) -> np.ndarray:
    """Матрица J_t: M[j, i] = <b_j(X_t), J_t e_i(x1)>_Σ"""
    if basis_src is None:
        basis_src = tangent_basis(spec, x1)
    if basis_dst is None:
        basis_dst = tangent_basis(spec, geodesic_interpolant(spec, x0, x1, t))
    cols = np.array([geodesic_jacobian_apply(spec, x0, x1, t, e) for e in basis_src])
    return np.array([[float(inner(spec, b, c)) for c in cols] for b in basis_dst])


def uniform_sphere(spec: ManifoldSpec, n: int, rng: np.random.Generator) -> Point:
    """Равномерное распределение на сфере радиуса 1/√κ"""
    if spec.kind is not ManifoldKind.SPHERE:
        raise ManifoldKindError("uniform_sphere определена только для сферы")
    z = rng.standard_normal((n, spec.ambient_dim))
    return z / np.linalg.norm(z, axis=-1, keepdims=True) / spec.sqrt_abs_kappa
