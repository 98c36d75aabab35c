"""
Бинарный формат чекпойнта модели дрейфа (.fsmp)

    magic "FSMP" | version u16 | activation u8 | time_features u16 | n_layers u16
    layer_dims u32 × (n_layers + 1)
    manifold kind u8 | manifold dim u32 | κ f64 | spatial_dim u32 | γ f64 | n_params u64
    параметры: little-endian f64 в порядке индексной карты
"""
import os
import struct

import numpy as np

from src.core.errors import CheckpointError
from src.core.geometry import ManifoldKind, ManifoldSpec
from src.core.net import Activation, DriftModel

MAGIC = b"FSMP"
VERSION = 1
_HEAD = struct.Struct('<4sHBHH')
_CONTEXT = struct.Struct('<BIdIdQ')


def save_checkpoint(model: DriftModel, path: str):
    spec = model.manifold
    kind = spec.kind.value if spec is not None else ManifoldKind.EUCLIDEAN.value
    mdim = spec.dim if spec is not None else model.output_dim
    kappa = spec.kappa if spec is not None else 0.0
    blob = bytearray()
    blob += _HEAD.pack(MAGIC, VERSION, model.activation.value, model.time_features, model.n_layers)
    blob += struct.pack(f'<{len(model.layer_dims)}I', *model.layer_dims)
    blob += _CONTEXT.pack(kind, mdim, kappa, model.spatial_dim or 0, float(model.gamma), model.n_params)
    blob += model.params.astype('<f8').tobytes()
    tmp = path + '.tmp'
    with open(tmp, 'wb') as f:
        f.write(bytes(blob))
    os.replace(tmp, path)


def load_checkpoint(path: str) -> DriftModel:
    try:
        with open(path, 'rb') as f:
            data = f.read()
    except OSError as e:
        raise CheckpointError(f"Не удалось прочитать чекпойнт {path}: {e}")

    if len(data) < _HEAD.size or data[:4] != MAGIC:
        raise CheckpointError(f"{path}: неверная сигнатура файла")
    magic, version, act_id, time_features, n_layers = _HEAD.unpack_from(data, 0)
    if version != VERSION:
        raise CheckpointError(f"{path}: версия формата {version} не поддерживается (ожидалась {VERSION})")
    offset = _HEAD.size
    dims_size = 4 * (n_layers + 1)
    if len(data) < offset + dims_size + _CONTEXT.size:
        raise CheckpointError(f"{path}: файл обрезан")
    layer_dims = list(struct.unpack_from(f'<{n_layers + 1}I', data, offset))
    offset += dims_size
    kind_id, mdim, kappa, spatial_dim, gamma, n_params = _CONTEXT.unpack_from(data, offset)
    offset += _CONTEXT.size

    try:
        activation = Activation(act_id)
        kind = ManifoldKind(kind_id)
    except ValueError as e:
        raise CheckpointError(f"{path}: повреждённый заголовок ({e})")

    output_dim = layer_dims[-1]
    input_dim = layer_dims[0] - 2 * time_features
    if input_dim < 1:
        raise CheckpointError(f"{path}: несогласованные размеры слоёв")
    model = DriftModel(input_dim, output_dim, layer_dims[1:-1], activation, time_features, init=False)
    if model.n_params != n_params:
        raise CheckpointError(f"{path}: число параметров {n_params} не совпадает с архитектурой")
    body = data[offset:]
    if len(body) != 8 * n_params:
        raise CheckpointError(f"{path}: файл обрезан или содержит лишние данные")
    model.params = np.frombuffer(body, dtype='<f8').astype(np.float64)

    if kind is ManifoldKind.SPHERE:
        model.manifold = ManifoldSpec.sphere(mdim, kappa)
    elif kind is ManifoldKind.HYPERBOLOID:
        model.manifold = ManifoldSpec.hyperboloid(mdim, kappa)
    model.spatial_dim = spatial_dim or None
    model.gamma = gamma
    return model
