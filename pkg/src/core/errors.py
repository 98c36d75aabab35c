"""
Иерархия исключений Flow Sampling.

Библиотечный код только бросает исключения; перевод в коды выхода делает src.cli.
"""
from typing import Optional


class FlowSamplingError(Exception):
    """Базовое исключение пакета"""


class DimensionError(FlowSamplingError, ValueError):
    """Несовпадение размерностей входных данных"""


class GeometryError(FlowSamplingError, ValueError):
    """Нарушение геометрических предусловий (точка вне многообразия, нет касательности и т.п.)"""


class ManifoldKindError(GeometryError):
    """Операция не определена для данного типа многообразия (например, евклидова пространства)"""


class CutLocusError(GeometryError):
    """Пара точек лежит в cut locus: минимизирующая геодезическая не единственна"""


class DivergenceError(FlowSamplingError, ArithmeticError):
    """NaN/Inf в состоянии решателя или при обучении"""

    def __init__(self, message: str, step: Optional[int] = None, round_index: Optional[int] = None):
        self.step = step
        self.round_index = round_index
        parts = [message]
        if step is not None:
            parts.append(f"шаг {step}")
        if round_index is not None:
            parts.append(f"раунд {round_index}")
        super().__init__(", ".join(parts))


class ConfigError(FlowSamplingError, ValueError):
    """Ошибка в файле конфигурации запуска"""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        prefix = ""
        if line is not None:
            prefix += f"строка {line}: "
        if key is not None:
            prefix += f"'{key}': "
        super().__init__(prefix + message)


class CheckpointError(FlowSamplingError, IOError):
    """Повреждённый или несовместимый чекпойнт"""


class EmptyBufferError(FlowSamplingError, LookupError):
    """Операция требует непустого replay-буфера"""


class SingularTimeError(FlowSamplingError, ValueError):
    """Формула сингулярна при t = 0 (α_t = 0, вырожденный якобиан)"""
