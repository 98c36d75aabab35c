"""
Конфигурация Flow Sampling
"""
import os

import psutil


class Config:
    """Настройки по умолчанию"""

    # Геометрия
    GEOMETRY_TOL = 1e-9           # допуск инвариантов точки/касательного вектора
    SMALL_ANGLE = 1e-6            # ниже этого порога sin/sinh-отношения считаются рядами Тейлора
    CUT_LOCUS_TOL = 1e-9          # 1 + κ<x,y> < tol  -> антиподальная пара
    CUT_LOCUS_MARGIN = 1e-2       # пары с ω√κ > π - margin выбрасываются из батчей обучения
    TANGENT_TOL = 1e-8            # относительный допуск касательности на входе exp_map

    # Процесс и обучение (значения по умолчанию для desk-scale запусков)
    GAMMA = 0.1
    ADAPTIVE_C = 1.0
    ADAPTIVE_EPS = 1e-8
    OUTER_LOOPS = 200
    INNER_LOOPS = 100
    BATCH_SIZE = 256
    BUFFER_CAPACITY = 10_000
    NEW_SAMPLES_PER_OUTER = 1024
    NFE_TRAIN = 128
    T_MIN = 1e-3
    CLIP_THRESHOLD = 100.0
    LEARNING_RATE = 3e-4
    CHECKPOINT_EVERY = 1

    # Модель дрейфа
    HIDDEN_LAYERS = (128, 128, 128, 128)
    TIME_FEATURES = 8
    ACTIVATION = 'silu'

    # Adam
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8

    # Метрики
    HIST_SMOOTHING = 1e-10
    HIST_BINS = 200
    W2_SUBSET = 2000              # подвыборка для одномерной energy W2
    ASSIGNMENT_MAX = 1024         # ограничение размера задачи о назначениях (кубическая стоимость)

    # Эталонный Langevin
    LANGEVIN_STEPS = 20_000
    LANGEVIN_STEP_SIZE = 1e-3
    LANGEVIN_THIN = 10

    # Производительность
    TRAJECTORY_CHUNK = 256        # траекторий на один RNG-поток
    MAX_CONCURRENT_THREADS = psutil.cpu_count(logical=False) or 1

    # Формат вывода
    CSV_FLOAT_FORMAT = '%.17g'

    @classmethod
    def thread_cap(cls) -> int:
        """Число потоков: FS_THREADS из окружения, иначе количество физических ядер"""
        raw = os.environ.get('FS_THREADS')
        if raw:
            try:
                return max(1, int(raw))
            except ValueError:
                pass
        return max(1, int(cls.MAX_CONCURRENT_THREADS))

    @classmethod
    def validate(cls):
        """Проверка корректности настроек"""
        assert 0 < cls.GEOMETRY_TOL < 1e-3, "Некорректный геометрический допуск"
        assert 0 < cls.SMALL_ANGLE < 1e-2, "Порог малых углов должен быть маленьким положительным"
        assert 0.0 <= cls.T_MIN < 1.0, "t_min должен быть в [0, 1)"
        assert cls.BATCH_SIZE > 0 and cls.BUFFER_CAPACITY > 0, "Размеры батча и буфера должны быть положительными"
        assert cls.NFE_TRAIN >= 1, "NFE должно быть >= 1"
        assert cls.CLIP_THRESHOLD > 0, "Порог клиппинга должен быть положительным"
        assert 0 < cls.ADAM_BETA1 < 1 and 0 < cls.ADAM_BETA2 < 1, "β Adam должны быть в (0, 1)"
        assert cls.HIST_SMOOTHING > 0, "Сглаживание гистограмм должно быть положительным"
        assert cls.ASSIGNMENT_MAX >= 1, "Некорректный лимит задачи о назначениях"
        assert cls.TRAJECTORY_CHUNK >= 1, "Размер чанка траекторий должен быть >= 1"
