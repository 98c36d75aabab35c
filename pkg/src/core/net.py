"""
Модель дрейфа u_θ(x, t): MLP на numpy с синусоидальными признаками времени,
ручным обратным проходом и оптимизатором Adam.
"""
from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.config import Config
from src.core import geometry as geo
from src.core.errors import DimensionError, DivergenceError
from src.core.geometry import ManifoldSpec


class Activation(Enum):
    SILU = 0
    TANH = 1

    @classmethod
    def parse(cls, name) -> 'Activation':
        if isinstance(name, Activation):
            return name
        try:
            return cls[str(name).strip().upper()]
        except KeyError:
            raise ValueError(f"Неизвестная активация: {name!r}")


def _act(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.SILU:
        return z * expit(z)
    return np.tanh(z)


def _act_grad(kind: Activation, z: np.ndarray) -> np.ndarray:
    if kind is Activation.SILU:
        s = expit(z)
        return s * (1.0 + z * (1.0 - s))
    th = np.tanh(z)
    return 1.0 - th * th


def time_embedding(t: np.ndarray, n_features: int) -> np.ndarray:
    """[sin(2^k πt), cos(2^k πt)] для k = 0..K-1, форма (B, 2K)"""
    t = np.asarray(t, dtype=np.float64).reshape(-1, 1)
    freqs = np.pi * 2.0 ** np.arange(n_features)
    arg = t * freqs
    return np.concatenate([np.sin(arg), np.cos(arg)], axis=1)


class DriftModel:
    """
    MLP с плоским вектором параметров. Веса слоя l хранятся как матрица
    (fan_in, fan_out), за ней смещения; порядок слоёв - от входа к выходу.
    """

    def __init__(self, input_dim: int, output_dim: Optional[int] = None,
                 hidden: Sequence[int] = Config.HIDDEN_LAYERS,
                 activation=Config.ACTIVATION, time_features: int = Config.TIME_FEATURES,
                 seed: int = 0, init: bool = True):
        if input_dim < 1:
            raise DimensionError("input_dim должен быть >= 1")
        self.input_dim = int(input_dim)
        self.output_dim = int(output_dim if output_dim is not None else input_dim)
        self.activation = Activation.parse(activation)
        self.time_features = int(time_features)
        self.layer_dims: List[int] = ([self.input_dim + 2 * self.time_features]
                                      + [int(h) for h in hidden] + [self.output_dim])
        # контекст сэмплера, сохраняется в чекпойнте
        self.manifold: Optional[ManifoldSpec] = None
        self.spatial_dim: Optional[int] = None
        self.gamma: float = 0.0

        self._index: List[Tuple[slice, Tuple[int, int], slice]] = []
        offset = 0
        for fan_in, fan_out in zip(self.layer_dims[:-1], self.layer_dims[1:]):
            w = slice(offset, offset + fan_in * fan_out)
            offset += fan_in * fan_out
            b = slice(offset, offset + fan_out)
            offset += fan_out
            self._index.append((w, (fan_in, fan_out), b))
        self.params = np.zeros(offset)
        if init:
            self.initialize(seed)

    @property
    def n_params(self) -> int:
        return self.params.size

    @property
    def n_layers(self) -> int:
        return len(self._index)

    def initialize(self, seed: int = 0):
        """Uniform(±1/√fan_in) для скрытых слоёв, нулевой последний слой"""
        rng = np.random.default_rng(seed)
        self.params[:] = 0.0
        for w, (fan_in, fan_out), b in self._index[:-1]:
            bound = 1.0 / np.sqrt(fan_in)
            self.params[w] = rng.uniform(-bound, bound, fan_in * fan_out)
            self.params[b] = rng.uniform(-bound, bound, fan_out)

    def layers(self, params: Optional[np.ndarray] = None):
        p = self.params if params is None else params
        return [(p[w].reshape(shape), p[b]) for w, shape, b in self._index]

    def _inputs(self, x: np.ndarray, t) -> Tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        x2 = x.reshape(1, -1) if single else x
        if x2.ndim != 2 or x2.shape[1] != self.input_dim:
            raise DimensionError(f"Ожидалась размерность входа {self.input_dim}, получено {x.shape}")
        t = np.broadcast_to(np.asarray(t, dtype=np.float64), (x2.shape[0],))
        if self.time_features:
            x2 = np.concatenate([x2, time_embedding(t, self.time_features)], axis=1)
        return x2, single

    def _forward(self, h: np.ndarray, params: Optional[np.ndarray]):
        cache = [h]
        pre = []
        layers = self.layers(params)
        for k, (W, b) in enumerate(layers):
            z = h @ W + b
            if k < len(layers) - 1:
                pre.append(z)
                h = _act(self.activation, z)
                cache.append(h)
            else:
                h = z
        return h, cache, pre

    def forward(self, x: np.ndarray, t, params: Optional[np.ndarray] = None) -> np.ndarray:
        h, single = self._inputs(x, t)
        out, _, _ = self._forward(h, params)
        return out[0] if single else out

    __call__ = forward

    def backward(self, cache, pre, d_out: np.ndarray, params: Optional[np.ndarray] = None) -> np.ndarray:
        """Градиент по параметрам при известном dL/d(выход)"""
        grad = np.zeros(self.n_params)
        layers = self.layers(params)
        delta = d_out
        for k in range(len(layers) - 1, -1, -1):
            w, _, b = self._index[k]
            grad[w] = (cache[k].T @ delta).ravel()
            grad[b] = delta.sum(axis=0)
            if k > 0:
                delta = (delta @ layers[k][0].T) * _act_grad(self.activation, pre[k - 1])
        return grad

    def forward_with_cache(self, x: np.ndarray, t, params: Optional[np.ndarray] = None):
        h, _ = self._inputs(np.atleast_2d(x), t)
        return self._forward(h, params)

    def copy(self) -> 'DriftModel':
        other = DriftModel(self.input_dim, self.output_dim, self.layer_dims[1:-1], self.activation,
                           self.time_features, init=False)
        other.params = self.params.copy()
        other.manifold, other.spatial_dim, other.gamma = self.manifold, self.spatial_dim, self.gamma
        return other


def fs_loss_and_grad(model: DriftModel, x_t: np.ndarray, t, target_u: np.ndarray,
                     manifold: Optional[ManifoldSpec] = None,
                     params: Optional[np.ndarray] = None) -> Tuple[float, np.ndarray]:
    """
    Средний квадрат невязки ‖pred - target‖² (евклидов случай) или
    ‖P⊥_{x_t} pred - target‖²_Σ (многообразие) и точный градиент по параметрам.
    """
    x_t = np.atleast_2d(np.asarray(x_t, dtype=np.float64))
    target_u = np.atleast_2d(np.asarray(target_u, dtype=np.float64))
    n = x_t.shape[0]
    if n == 0:
        raise DimensionError("Пустой батч")
    if target_u.shape != (n, model.output_dim):
        raise DimensionError(f"Форма цели {target_u.shape} не совпадает с ({n}, {model.output_dim})")
    if not (np.all(np.isfinite(x_t)) and np.all(np.isfinite(target_u)) and np.all(np.isfinite(t))):
        raise DivergenceError("NaN/Inf во входах функции потерь")

    pred, cache, pre = model.forward_with_cache(x_t, t, params)
    if manifold is None or not manifold.is_curved:
        r = pred - target_u
        loss = float(np.sum(r * r) / n)
        d_pred = 2.0 * r / n
    else:
        proj = geo.project_tangent(manifold, x_t, pred)
        r = proj - target_u
        loss = float(np.sum(geo.inner(manifold, r, r)) / n)
        g = 2.0 * manifold.sigma * r / n
        # транспонированный проектор: g - Σx·(xᵀg)/<x,x>
        coef = np.sum(x_t * g, axis=-1) / geo.inner(manifold, x_t, x_t)
        d_pred = g - coef[:, None] * manifold.sigma * x_t
    return loss, model.backward(cache, pre, d_pred, params)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0
    beta1: float = Config.ADAM_BETA1
    beta2: float = Config.ADAM_BETA2
    eps: float = Config.ADAM_EPS
    lr: float = Config.LEARNING_RATE

    @classmethod
    def zeros(cls, n: int, lr: float = Config.LEARNING_RATE) -> 'AdamState':
        return cls(np.zeros(n), np.zeros(n), lr=lr)


def adam_step(state: AdamState, params: np.ndarray, grads: np.ndarray) -> np.ndarray:
    """Шаг Adam с коррекцией смещения; state обновляется на месте"""
    if params.shape != grads.shape or params.shape != state.m.shape:
        raise DimensionError("Длины параметров, градиентов и моментов должны совпадать")
    state.step += 1
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grads * grads
    m_hat = state.m / (1.0 - state.beta1 ** state.step)
    v_hat = state.v / (1.0 - state.beta2 ** state.step)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
