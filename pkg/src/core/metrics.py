"""
Метрики качества сэмплера: W2 (одномерная, через назначение, с выравниванием
по симметриям), KL/JSD по гистограммам и статистики мод на сфере.
"""
import itertools
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import cv2
import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from src.config import Config
from src.core.errors import DimensionError
from src.utils.logger import get_logger

logger = get_logger(__name__)

REPORT_HEADER = ['metric', 'value', 'n_samples', 'seed']


@dataclass
class SampleSet:
    samples: np.ndarray
    energies: Optional[np.ndarray] = None

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.ndim == 1:
            self.samples = self.samples[:, None]
        if self.samples.ndim != 2:
            raise DimensionError("SampleSet: ожидался массив (n, d)")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("SampleSet содержит NaN/Inf")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]


def _as_array(s) -> np.ndarray:
    return s.samples if isinstance(s, SampleSet) else np.asarray(s, dtype=np.float64)


def subset(x: np.ndarray, k: int, seed: int) -> np.ndarray:
    """Подвыборка без возвращения; одинаковые (n, k, seed) дают одинаковые индексы"""
    n = len(x)
    if n <= k:
        return x
    idx = np.sort(np.random.default_rng(seed).choice(n, size=k, replace=False))
    return x[idx]


# ---------------------------------------------------------------------------
# Wasserstein-2

def w2_1d(a, b) -> float:
    """Точная W2 через квантильную связь; при разных размерах - по общему разбиению [0, 1]"""
    a = np.sort(np.asarray(a, dtype=np.float64).ravel())
    b = np.sort(np.asarray(b, dtype=np.float64).ravel())
    if a.size == 0 or b.size == 0:
        raise ValueError("w2_1d: пустая выборка")
    if a.size == b.size:
        return float(np.sqrt(np.mean((a - b) ** 2)))
    # квантильные функции кусочно-постоянны на узлах i/n и j/m
    cuts = np.union1d(np.arange(a.size + 1) / a.size, np.arange(b.size + 1) / b.size)
    mids = 0.5 * (cuts[:-1] + cuts[1:])
    qa = a[np.minimum((mids * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mids * b.size).astype(int), b.size - 1)]
    return float(np.sqrt(np.sum(np.diff(cuts) * (qa - qb) ** 2)))


def energy_w2(target, gen, ref) -> float:
    """W2 между распределениями энергий E(x) = -r(x)"""
    return w2_1d(target.energy(_as_array(gen)), target.energy(_as_array(ref)))


def w2_assignment(a, b, dist: Optional[Callable[[np.ndarray, np.ndarray], float]] = None,
                  max_size: int = Config.ASSIGNMENT_MAX) -> float:
    """sqrt(min_π mean d(a_i, b_π(i))²) через венгерский алгоритм"""
    a = _as_array(a)
    b = _as_array(b)
    if len(a) != len(b):
        raise DimensionError(f"w2_assignment: размеры выборок различаются ({len(a)} и {len(b)})")
    if len(a) > max_size:
        raise ValueError(f"w2_assignment: размер {len(a)} превышает лимит {max_size}")
    if len(a) == 0:
        raise ValueError("w2_assignment: пустая выборка")
    if dist is None:
        cost = cdist(a, b, 'sqeuclidean')
    else:
        cost = np.array([[dist(x, y) ** 2 for y in b] for x in a])
    rows, cols = linear_sum_assignment(cost)
    return float(np.sqrt(cost[rows, cols].mean()))


# ---------------------------------------------------------------------------
# выравнивание систем частиц

def kabsch(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Собственное вращение R (det = +1), минимизирующее Σ‖x_i - R y_i‖²"""
    h = y.T @ x
    u, _, vt = np.linalg.svd(h)
    d = np.ones(x.shape[1])
    d[-1] = np.sign(np.linalg.det(vt.T @ u.T)) or 1.0
    return vt.T @ np.diag(d) @ u.T


def _proper_signed_permutations(d: int) -> List[np.ndarray]:
    """Вращения, переводящие оси в оси (24 для d = 3, 4 для d = 2)"""
    out = []
    for perm in itertools.permutations(range(d)):
        for signs in itertools.product((1.0, -1.0), repeat=d):
            m = np.zeros((d, d))
            m[np.arange(d), perm] = signs
            if np.linalg.det(m) > 0:
                out.append(m)
    return out


def _pca_starts(x: np.ndarray, y: np.ndarray) -> List[np.ndarray]:
    d = x.shape[1]
    _, _, ex = np.linalg.svd(x, full_matrices=True)
    _, _, ey = np.linalg.svd(y, full_matrices=True)
    out = []
    for signs in itertools.product((1.0, -1.0), repeat=d):
        r = ex.T @ np.diag(signs) @ ey
        if np.linalg.det(r) > 0:
            out.append(r)
    return out


def _align_from(x: np.ndarray, y: np.ndarray, rot: np.ndarray, max_iter: int = 50) -> float:
    best = np.inf
    for _ in range(max_iter):
        cost = cdist(x, y @ rot.T, 'sqeuclidean')
        _, perm = linear_sum_assignment(cost)
        rot = kabsch(x, y[perm])
        value = float(np.sum((x - y[perm] @ rot.T) ** 2))
        if value >= best - 1e-14:
            best = min(best, value)
            break
        best = value
    return best


def _positions(v: np.ndarray, n_particles: int, spatial_dim: int) -> np.ndarray:
    pos = np.asarray(v, dtype=np.float64).reshape(n_particles, spatial_dim)
    return pos - pos.mean(axis=0)


def aligned_distance(x: np.ndarray, y: np.ndarray, n_particles: int, spatial_dim: int,
                     grid: bool = True) -> float:
    """
    Расстояние между системами частиц с точностью до перестановки и вращения.
    Последовательный поиск: назначение частиц, затем вращение Кабша, с несколькими
    стартовыми вращениями (тождественное, по главным осям, по осям куба).
    Возвращает sqrt(min ‖x - (R⊗P)y‖²), т.е. верхнюю оценку истинного минимума.
    """
    if spatial_dim not in (2, 3):
        raise DimensionError("aligned_distance: поддерживаются только d = 2 и d = 3")
    px = _positions(x, n_particles, spatial_dim)
    py = _positions(y, n_particles, spatial_dim)
    starts = [np.eye(spatial_dim)] + _pca_starts(px, py)
    if grid:
        starts += _proper_signed_permutations(spatial_dim)
    best = min(_align_from(px, py, r) for r in starts)
    return float(np.sqrt(max(best, 0.0)))


def aligned_distance_exhaustive(x: np.ndarray, y: np.ndarray, n_particles: int, spatial_dim: int) -> float:
    """Точный совместный минимум перебором всех перестановок (только для малых n)"""
    px = _positions(x, n_particles, spatial_dim)
    py = _positions(y, n_particles, spatial_dim)
    best = np.inf
    for perm in itertools.permutations(range(n_particles)):
        yp = py[list(perm)]
        rot = kabsch(px, yp)
        best = min(best, float(np.sum((px - yp @ rot.T) ** 2)))
    return float(np.sqrt(best))


def geometric_w2(a, b, n_particles: int, spatial_dim: int, grid: bool = False) -> float:
    return w2_assignment(a, b, lambda u, v: aligned_distance(u, v, n_particles, spatial_dim, grid))


# ---------------------------------------------------------------------------
# гистограммы

def _padded_range(a: np.ndarray, b: np.ndarray) -> Tuple[float, float]:
    lo = float(min(a.min(), b.min()))
    hi = float(max(a.max(), b.max()))
    pad = 1e-4 * max(1.0, hi - lo, abs(lo), abs(hi))
    return lo - pad, hi + pad


def _bin_coordinates(a: np.ndarray, lo: float, hi: float, bins: int) -> np.ndarray:
    """
    Номер бина, вычисленный в float64, плюс 0.5. cv2.calcHist принимает только
    float32; центры бинов в float32 представимы точно, поэтому значение у границы
    попадает в тот же бин, что и при счёте в float64.
    """
    a = np.asarray(a, dtype=np.float64)
    idx = np.floor((a - lo) / (hi - lo) * bins)
    # вне [lo, hi) -> -0.5, такие значения calcHist отбрасывает
    idx = np.where((a >= lo) & (a < hi) & (idx < bins), idx, -1.0)
    return (idx + 0.5).astype(np.float32)


def _hist_1d(a: np.ndarray, bins: int, rng: Tuple[float, float]) -> np.ndarray:
    img = _bin_coordinates(np.ravel(a), float(rng[0]), float(rng[1]), bins).reshape(-1, 1)
    return cv2.calcHist([img], [0], None, [bins], [0.0, float(bins)]).ravel().astype(np.float64)


def _hist_2d(a: np.ndarray, bins: int, rng) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    cols = [_bin_coordinates(a[:, k], float(rng[k][0]), float(rng[k][1]), bins) for k in range(2)]
    img = np.ascontiguousarray(np.stack(cols, axis=1).reshape(-1, 1, 2))
    ranges = [0.0, float(bins), 0.0, float(bins)]
    return cv2.calcHist([img], [0, 1], None, [bins, bins], ranges).astype(np.float64)


def _normalize(counts: np.ndarray, eps: float) -> np.ndarray:
    if counts.sum() <= 0:
        raise ValueError("Все образцы вне диапазона гистограммы")
    p = counts + eps
    return p / p.sum()


def kl_from_hist(p_counts, q_counts, eps: float = Config.HIST_SMOOTHING) -> float:
    """KL(p‖q) по гистограммам со сглаживанием eps в каждом бине"""
    p = _normalize(np.asarray(p_counts, dtype=np.float64).ravel(), eps)
    q = _normalize(np.asarray(q_counts, dtype=np.float64).ravel(), eps)
    return float(np.sum(p * np.log(p / q)))


def jsd_from_hist(p_counts, q_counts, eps: float = Config.HIST_SMOOTHING) -> float:
    p = _normalize(np.asarray(p_counts, dtype=np.float64).ravel(), eps)
    q = _normalize(np.asarray(q_counts, dtype=np.float64).ravel(), eps)
    m = 0.5 * (p + q)
    return float(0.5 * np.sum(p * np.log(p / m)) + 0.5 * np.sum(q * np.log(q / m)))


def kl_1d_hist(a, b, bins: int = Config.HIST_BINS, range: Optional[Tuple[float, float]] = None,
               eps: float = Config.HIST_SMOOTHING) -> float:
    if bins < 2:
        raise ValueError("Число бинов должно быть >= 2")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    rng = range if range is not None else _padded_range(a, b)
    return kl_from_hist(_hist_1d(a, bins, rng), _hist_1d(b, bins, rng), eps)


def jsd_1d_hist(a, b, bins: int = Config.HIST_BINS, range: Optional[Tuple[float, float]] = None,
                eps: float = Config.HIST_SMOOTHING) -> float:
    if bins < 2:
        raise ValueError("Число бинов должно быть >= 2")
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    rng = range if range is not None else _padded_range(a, b)
    return jsd_from_hist(_hist_1d(a, bins, rng), _hist_1d(b, bins, rng), eps)


def interatomic_distances(x, n_particles: int, spatial_dim: int) -> np.ndarray:
    """Все попарные расстояния d_ij, i < j, по всем конфигурациям одним вектором"""
    pos = _as_array(x).reshape(-1, n_particles, spatial_dim)
    i, j = np.triu_indices(n_particles, k=1)
    return np.linalg.norm(pos[:, i, :] - pos[:, j, :], axis=-1).ravel()


def jsd_2d_hist(a, b, bins: int = Config.HIST_BINS, range=None, eps: float = Config.HIST_SMOOTHING) -> float:
    """JSD двумерных гистограмм bins × bins; range = ((lo0, hi0), (lo1, hi1))"""
    if bins < 2:
        raise ValueError("Число бинов должно быть >= 2")
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    if range is None:
        range = (_padded_range(a[:, 0], b[:, 0]), _padded_range(a[:, 1], b[:, 1]))
    return jsd_from_hist(_hist_2d(a, bins, range), _hist_2d(b, bins, range), eps)


# ---------------------------------------------------------------------------
# моды

def _check_centers(centers) -> np.ndarray:
    centers = np.asarray(centers, dtype=np.float64)
    if centers.size == 0:
        raise ValueError("Список центров пуст")
    return np.atleast_2d(centers)


def sphere_mode_weights(samples, centers) -> np.ndarray:
    """Доля образцов с наибольшим μ_kᵀx"""
    centers = _check_centers(centers)
    if np.any(np.abs(np.linalg.norm(centers, axis=1) - 1.0) > 1e-9):
        raise ValueError("Центры должны иметь единичную норму")
    labels = np.argmax(_as_array(samples) @ centers.T, axis=1)
    counts = np.bincount(labels, minlength=len(centers)).astype(np.float64)
    return counts / max(counts.sum(), 1.0)


def sphere_mode_directions(samples, centers) -> np.ndarray:
    """Нормированное среднее направление образцов каждой моды; NaN для пустых мод"""
    centers = _check_centers(centers)
    x = _as_array(samples)
    labels = np.argmax(x @ centers.T, axis=1)
    out = np.full(centers.shape, np.nan)
    for k in range(len(centers)):
        members = x[labels == k]
        if len(members):
            m = members.mean(axis=0)
            out[k] = m / np.linalg.norm(m)
    return out


def gmm_mode_weights(samples, centers) -> np.ndarray:
    """Доля образцов, ближайших к каждому центру"""
    centers = _check_centers(centers)
    labels = np.argmin(cdist(_as_array(samples), centers, 'sqeuclidean'), axis=1)
    counts = np.bincount(labels, minlength=len(centers)).astype(np.float64)
    return counts / max(counts.sum(), 1.0)


def spherical_angles(samples) -> np.ndarray:
    """(полярный угол, азимут) для точек на S²"""
    x = _as_array(samples)
    if x.shape[1] != 3:
        raise DimensionError("spherical_angles определены для S² ⊂ R³")
    theta = np.arccos(np.clip(x[:, 2] / np.linalg.norm(x, axis=1), -1.0, 1.0))
    phi = np.arctan2(x[:, 1], x[:, 0])
    return np.column_stack([theta, phi])


# ---------------------------------------------------------------------------
# отчёт

DEFAULT_METRICS = {
    'gmm': ('energy_w2', 'w2', 'jsd', 'kl_energy', 'mode_weights'),
    'dw': ('energy_w2', 'geometric_w2', 'kl_energy', 'interatomic_jsd'),
    'lj': ('energy_w2', 'geometric_w2', 'kl_energy', 'interatomic_jsd'),
    'vmf': ('w2', 'jsd', 'mode_weights'),
}


def _target_family(target) -> str:
    name = target.name
    for family in ('dw', 'lj'):
        if name.startswith(family):
            return family
    return name


def evaluate(target, gen, ref, metrics: Optional[Sequence[str]] = None, seed: int = 0,
             subset_size: int = Config.W2_SUBSET, assignment_size: int = Config.ASSIGNMENT_MAX,
             geometric_size: int = 128, bins: int = Config.HIST_BINS) -> List[list]:
    """Строки отчёта (metric, value, n_samples, seed)"""
    gen = _as_array(gen)
    ref = _as_array(ref)
    if gen.ndim != 2 or ref.ndim != 2 or gen.shape[1] != target.dim or ref.shape[1] != target.dim:
        raise DimensionError(f"Размерность образцов не совпадает с размерностью цели {target.dim}")
    if len(gen) == 0 or len(ref) == 0:
        raise ValueError("Пустая выборка для оценки")
    metrics = list(metrics or DEFAULT_METRICS.get(_target_family(target), ('energy_w2',)))
    rows: List[list] = []

    def add(name, value, n):
        rows.append([name, float(value), int(n), int(seed)])

    for name in metrics:
        if name == 'energy_w2':
            g, r = subset(gen, subset_size, seed), subset(ref, subset_size, seed)
            add(name, energy_w2(target, g, r), min(len(g), len(r)))
        elif name == 'kl_energy':
            add(name, kl_1d_hist(target.energy(gen), target.energy(ref), bins), len(gen))
        elif name == 'w2':
            k = min(len(gen), len(ref), assignment_size)
            add(name, w2_assignment(subset(gen, k, seed), subset(ref, k, seed)), k)
        elif name == 'geometric_w2':
            if not target.is_particle_system:
                raise ValueError("geometric_w2 определена только для систем частиц")
            k = min(len(gen), len(ref), geometric_size)
            add(name, geometric_w2(subset(gen, k, seed), subset(ref, k, seed),
                                   target.n_particles, target.spatial_dim), k)
        elif name == 'interatomic_jsd':
            if not target.is_particle_system:
                raise ValueError("interatomic_jsd определена только для систем частиц")
            da = interatomic_distances(gen, target.n_particles, target.spatial_dim)
            db = interatomic_distances(ref, target.n_particles, target.spatial_dim)
            add(name, jsd_1d_hist(da, db, bins), len(gen))
        elif name == 'jsd':
            if target.manifold is not None and target.manifold.is_curved:
                fa, fb = spherical_angles(gen), spherical_angles(ref)
                rng = ((-1e-4, np.pi + 1e-4), (-np.pi - 1e-4, np.pi + 1e-4))
            elif target.dim == 2:
                fa, fb, rng = gen, ref, None
            else:
                raise ValueError("jsd: нужна двумерная цель или S²")
            add(name, jsd_2d_hist(fa, fb, bins, rng), len(gen))
        elif name == 'mode_weights':
            if hasattr(target, 'mus'):
                w = sphere_mode_weights(gen, target.mus)
            elif hasattr(target, 'centers'):
                w = gmm_mode_weights(gen, target.centers)
            else:
                raise ValueError("mode_weights: у цели нет центров мод")
            for k, v in enumerate(w):
                add(f"mode_weight_{k}", v, len(gen))
        else:
            raise ValueError(f"Неизвестная метрика: {name!r}")
        logger.info(f"📊 {name}: {rows[-1][1]:.6g}")
    return rows


def mode_direction_errors_deg(samples, centers) -> np.ndarray:
    """Угол (в градусах) между средним направлением моды и её центром"""
    dirs = sphere_mode_directions(samples, centers)
    cos = np.clip(np.sum(dirs * np.asarray(centers), axis=1), -1.0, 1.0)
    return np.degrees(np.arccos(cos))


def summarize(rows: List[list]) -> Dict[str, float]:
    return {r[0]: r[1] for r in rows}
