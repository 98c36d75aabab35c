from src.core.geometry import ManifoldKind, ManifoldSpec
from src.core.net import DriftModel
from src.core.process import LinearSchedule
from src.core.sde import SolverConfig

__all__ = ['ManifoldKind', 'ManifoldSpec', 'DriftModel', 'LinearSchedule', 'SolverConfig']
