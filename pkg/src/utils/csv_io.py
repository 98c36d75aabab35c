"""
CSV с фиксированной строкой заголовка и 17 значащими цифрами
"""
import os
from typing import List, Sequence, Tuple

import numpy as np

from src.config import Config


def write_matrix(path: str, header: Sequence[str], rows: np.ndarray):
    rows = np.asarray(rows, dtype=np.float64).reshape(-1, len(header))
    with open(path, 'w', newline='') as f:
        f.write(','.join(header) + '\n')
        if rows.size:
            np.savetxt(f, rows, fmt=Config.CSV_FLOAT_FORMAT, delimiter=',')


def read_matrix(path: str) -> Tuple[List[str], np.ndarray]:
    """Читает CSV, записанный write_matrix; пустое тело даёт массив (0, k)"""
    with open(path, 'r') as f:
        header = f.readline().strip().split(',')
        body = f.read()
    if not body.strip():
        return header, np.zeros((0, len(header)))
    data = np.loadtxt(body.splitlines(), delimiter=',', ndmin=2)
    return header, data


def sample_header(dim: int) -> List[str]:
    return [f"x{i}" for i in range(dim)]


def write_samples(path: str, samples: np.ndarray, dim: int):
    write_matrix(path, sample_header(dim), np.asarray(samples).reshape(-1, dim))


def read_samples(path: str) -> np.ndarray:
    _, data = read_matrix(path)
    return data


def _format(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return Config.CSV_FLOAT_FORMAT % float(value)
    return str(value)


def write_rows(path: str, header: Sequence[str], rows: Sequence[Sequence]):
    """Смешанные строки (имя метрики + числа)"""
    with open(path, 'w', newline='') as f:
        f.write(','.join(header) + '\n')
        for row in rows:
            f.write(','.join(_format(v) for v in row) + '\n')


def append_row(path: str, header: Sequence[str], row: Sequence):
    new = not os.path.exists(path)
    with open(path, 'a', newline='') as f:
        if new:
            f.write(','.join(header) + '\n')
        f.write(','.join(_format(v) for v in row) + '\n')


def read_rows(path: str) -> Tuple[List[str], List[List[str]]]:
    with open(path, 'r') as f:
        lines = [line.rstrip('\n') for line in f if line.strip()]
    if not lines:
        return [], []
    return lines[0].split(','), [line.split(',') for line in lines[1:]]


def write_trajectory(path: str, times: np.ndarray, states: np.ndarray):
    """Одна траектория: столбцы t, x0..x{d-1}, строка на шаг"""
    states = np.asarray(states, dtype=np.float64)
    rows = np.column_stack([np.asarray(times, dtype=np.float64), states])
    write_matrix(path, ['t'] + sample_header(states.shape[1]), rows)
