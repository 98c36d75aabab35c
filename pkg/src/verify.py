"""
Набор проверок-оракулов (команда verify): замкнутые формулы против конечных
разностей и точных гауссовых решений. Печатает ✅/❌ на проверку.
"""
import math
import time
from typing import Callable, List, Tuple

import numpy as np

from src.core import geometry as geo
from src.core import process
from src.core.fd_oracles import (fd_conditional_score, fd_geodesic_jacobian, fd_inv_jacobian_adjoint,
                                 fd_logdet_gradient, fd_param_gradient)
from src.core.geometry import ManifoldSpec
from src.core.net import DriftModel, fs_loss_and_grad
from src.core.sde import SolverConfig, em_euclid, em_manifold

VERIFY_SEED = 20240607

CheckFn = Callable[[np.random.Generator, bool], Tuple[float, float]]


# ---------------------------------------------------------------------------
# случайные конфигурации

def random_tangent(spec: ManifoldSpec, x: np.ndarray, rng: np.random.Generator, length: float) -> np.ndarray:
    v = geo.project_tangent(spec, x, rng.standard_normal(spec.ambient_dim))
    return v * (length / float(geo.norm(spec, v)))


def random_point(spec: ManifoldSpec, rng: np.random.Generator, radius: float = 1.5) -> np.ndarray:
    """Сфера: равномерно; гиперболоид: exp от начала координат на расстояние <= radius"""
    if spec.kind is geo.ManifoldKind.SPHERE:
        return geo.uniform_sphere(spec, 1, rng)[0]
    origin = np.zeros(spec.ambient_dim)
    origin[0] = 1.0 / spec.sqrt_abs_kappa
    return geo.exp_map(spec, origin, random_tangent(spec, origin, rng, rng.uniform(0.0, radius)))


def random_pair(spec: ManifoldSpec, rng: np.random.Generator,
                min_angle: float = 0.2, max_angle: float = 2.5) -> Tuple[np.ndarray, np.ndarray]:
    """(x0, x1) на расстоянии из [min_angle, max_angle]/√|κ|, вдали от cut locus"""
    x1 = random_point(spec, rng)
    dist = rng.uniform(min_angle, max_angle) / spec.sqrt_abs_kappa
    x0 = geo.exp_map(spec, x1, random_tangent(spec, x1, rng, dist))
    return x0, x1


def _curved_specs() -> List[ManifoldSpec]:
    return [ManifoldSpec.sphere(2), ManifoldSpec.hyperboloid(2)]


# ---------------------------------------------------------------------------
# проверки; каждая возвращает (максимальная ошибка, допуск)

def check_drift_identity(rng, quick):
    """x1 - x0 + γ∇r(x1) = условная скорость + (g_t²/2)·∇r(x1)/α_t для q = N(μ, I)"""
    n, d = (200 if quick else 1000), 3
    schedule = process.LinearSchedule(gamma=0.7)
    mu = rng.normal(size=d)
    x0 = rng.standard_normal((n, d))
    x1 = rng.standard_normal((n, d)) + mu
    t = rng.uniform(0.05, 1.0, n)
    score1 = mu - x1
    lhs = process.euclid_drift_target(x0, x1, score1, schedule.gamma)
    xt = process.interpolate(x0, x1, t)
    pushforward_score = score1 / t[:, None]
    rhs = (process.conditional_velocity(xt, x0, t, schedule)
           + 0.5 * schedule.g2(t)[:, None] * pushforward_score)
    return float(np.max(np.abs(lhs - rhs))), 1e-12


def check_jacobian(rng, quick):
    """Замкнутая J_t против центральной разности (h = 1e-4) на S² и H²"""
    n = 50 if quick else 500
    worst = 0.0
    for spec in _curved_specs():
        for _ in range(n // 2):
            x0, x1 = random_pair(spec, rng, max_angle=2.5 if spec.kappa > 0 else 1.5)
            t = rng.uniform(0.1, 1.0)
            fd, b_src, b_dst = fd_geodesic_jacobian(spec, x0, x1, t, h=1e-4)
            closed = geo.geodesic_jacobian_matrix(spec, x0, x1, t, b_src, b_dst)
            worst = max(worst, float(np.max(np.abs(fd - closed))))
    return worst, 1e-5


def check_inverse_adjoint(rng, quick):
    spec = ManifoldSpec.sphere(2)
    worst = 0.0
    for _ in range(30 if quick else 200):
        x0, x1 = random_pair(spec, rng)
        t = rng.uniform(0.2, 1.0)
        w = random_tangent(spec, x1, rng, 1.0)
        closed = geo.inv_jacobian_adjoint_apply(spec, x0, x1, t, w)
        fd = fd_inv_jacobian_adjoint(spec, x0, x1, t, w, h=1e-4)
        worst = max(worst, float(np.max(np.abs(closed - fd))))
    return worst, 1e-4


def check_logdet_gradient(rng, quick):
    """Градиент log|det J_t| в x1 и в X_t против вложенных конечных разностей"""
    spec = ManifoldSpec.sphere(2)
    zero_reward = lambda y: 0.0
    worst = 0.0
    for _ in range(30 if quick else 200):
        x0, x1 = random_pair(spec, rng)
        t = rng.uniform(0.2, 1.0)
        at_source = geo.logdet_gradient_at_source(spec, x0, x1, t)
        worst = max(worst, float(np.max(np.abs(at_source - fd_logdet_gradient(spec, x0, x1, t)))))
        xt = geo.geodesic_interpolant(spec, x0, x1, t)
        # log p_{t|0} при r = 0 равен -log|det J_t|
        at_xt = -fd_conditional_score(spec, x0, xt, t, zero_reward)
        worst = max(worst, float(np.max(np.abs(geo.logdet_gradient(spec, x0, x1, t) - at_xt))))
    return worst, 1e-4


def check_riemann_target(rng, quick):
    """riemann_drift_target = Ẋ_t + γt·∇log p_{t|0}(X_t | x0), плотность через pushforward"""
    spec = ManifoldSpec.sphere(2)
    gamma = 0.3
    mu = np.array([0.0, 0.0, 1.0])
    kappa = 4.0
    reward = lambda y: kappa * float(mu @ y)
    worst = 0.0
    for _ in range(10 if quick else 50):
        x0, x1 = random_pair(spec, rng)
        t = rng.uniform(0.2, 1.0)
        xt = geo.geodesic_interpolant(spec, x0, x1, t)
        closed = process.riemann_drift_target(spec, x0, x1, kappa * mu, t, gamma)
        brute = (geo.geodesic_velocity(spec, x0, x1, t)
                 + gamma * t * fd_conditional_score(spec, x0, xt, t, reward))
        worst = max(worst, float(np.max(np.abs(closed - brute))))
    return worst, 1e-4


def check_exp_log(rng, quick):
    worst = 0.0
    for spec in _curved_specs():
        for _ in range(100 if quick else 1000):
            x0, x1 = random_pair(spec, rng, 0.01, 2.5 if spec.kappa > 0 else 1.5)
            back = geo.exp_map(spec, x1, geo.log_map(spec, x1, x0))
            worst = max(worst, float(np.max(np.abs(back - x0))))
    return worst, 1e-8


def check_transport_isometry(rng, quick):
    worst = 0.0
    for spec in _curved_specs():
        for _ in range(100 if quick else 1000):
            x0, x1 = random_pair(spec, rng, 0.01, 2.5 if spec.kappa > 0 else 1.5)
            u = random_tangent(spec, x1, rng, rng.uniform(0.1, 2.0))
            v = random_tangent(spec, x1, rng, rng.uniform(0.1, 2.0))
            tu = geo.parallel_transport(spec, x1, x0, u)
            tv = geo.parallel_transport(spec, x1, x0, v)
            worst = max(worst, abs(float(geo.inner(spec, tu, tv) - geo.inner(spec, u, v))))
    return worst, 1e-10


def check_constraint_drift(rng, quick):
    """Отклонение <x,x> - 1/κ до ренормализации за 10⁴ шагов решателя"""
    spec = ManifoldSpec.sphere(2)
    pull = np.array([0.0, 0.0, 5.0])
    drift = lambda x, t: np.broadcast_to(pull, x.shape)
    x0 = geo.uniform_sphere(spec, 8, rng)
    cfg = SolverConfig(nfe=2_000 if quick else 10_000, gamma=0.5, seed=int(rng.integers(1 << 31)))
    result = em_manifold(spec, drift, x0, cfg, return_path=True)
    final = float(np.max(np.abs(geo.inner(spec, result.endpoint, result.endpoint) - 1.0)))
    return max(result.max_constraint_drift, final), 1e-6


def check_gaussian_marginal(rng, quick):
    """Точный гауссов дрейф даёт N(3, 0.25) на t = 1; ошибка в единицах допуска"""
    mu, tau2 = np.array([3.0]), 0.25
    n, nfe = (10_000, 256) if quick else (20_000, 512)
    drift = process.gaussian_marginal_drift(mu, tau2, gamma=1.0)
    x0 = rng.standard_normal((n, 1))
    x1 = em_euclid(drift, x0, SolverConfig(nfe=nfe, gamma=1.0, seed=int(rng.integers(1 << 31))))
    mean_err = abs(float(x1.mean()) - 3.0) / (3.0 * math.sqrt(tau2 / n))
    var_err = abs(float(x1.var(ddof=1)) / tau2 - 1.0) / 0.05
    return max(mean_err, var_err), 1.0


def check_network_gradient(rng, quick):
    """Обратный проход против центральных разностей, относительная ошибка"""
    worst = 0.0
    sphere = ManifoldSpec.sphere(2)
    for k in range(5 if quick else 20):
        dim = 3
        hidden = [int(h) for h in rng.integers(3, 7, size=int(rng.integers(1, 3)))]
        model = DriftModel(dim, dim, hidden, 'tanh' if k % 2 else 'silu', time_features=2,
                           seed=int(rng.integers(1 << 31)))
        model.params = model.params + 0.1 * rng.standard_normal(model.n_params)
        manifold = sphere if k % 3 == 2 else None
        x = geo.uniform_sphere(sphere, 6, rng) if manifold else rng.standard_normal((6, dim))
        t = rng.uniform(0.0, 1.0, 6)
        target = rng.standard_normal((6, dim))
        if manifold:
            target = geo.project_tangent(sphere, x, target)
        _, grad = fs_loss_and_grad(model, x, t, target, manifold)
        fd = fd_param_gradient(model.params, lambda p: fs_loss_and_grad(model, x, t, target, manifold, p)[0])
        rel = float(np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-8))
        worst = max(worst, rel)
    return worst, 1e-4


CHECKS: List[Tuple[str, CheckFn]] = [
    ("Тождество дрейфа (евклидов случай)", check_drift_identity),
    ("Якобиан геодезической S²/H²", check_jacobian),
    ("Обратный сопряжённый якобиан", check_inverse_adjoint),
    ("Градиент log|det J_t|", check_logdet_gradient),
    ("Риманова цель регрессии", check_riemann_target),
    ("exp/log round trip", check_exp_log),
    ("Изометрия переноса", check_transport_isometry),
    ("Дрейф ограничения решателя", check_constraint_drift),
    ("Гауссов маргинал SDE", check_gaussian_marginal),
    ("Градиенты сети", check_network_gradient),
]


def run_verification(quick: bool = False, seed: int = VERIFY_SEED) -> bool:
    print("🧪 Проверка оракулов" + (" (быстрый режим)" if quick else ""))
    all_passed = True
    for k, (name, check) in enumerate(CHECKS):
        rng = np.random.default_rng(np.random.SeedSequence([seed, k]))
        started = time.perf_counter()
        try:
            err, tol = check(rng, quick)
            ok = bool(np.isfinite(err) and err < tol)
            mark = "✅" if ok else "❌"
            print(f"{mark} {name}: ошибка {err:.3e} (допуск {tol:.0e}, {time.perf_counter() - started:.1f} с)")
        except Exception as e:
            ok = False
            print(f"❌ {name} - ОШИБКА: {e}")
        all_passed &= ok

    if all_passed:
        print("\n🎉 Все проверки пройдены!")
    else:
        print("\n💥 Некоторые проверки не пройдены!")
    return all_passed
