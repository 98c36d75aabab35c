"""
Командная строка Flow Sampling: train / sample / eval / verify.

Файл конфигурации - строки `ключ = значение`, значения в синтаксисе JSON
(голое слово читается как строка), `#` начинает комментарий:

    experiment = gmm_desk
    seed = 0
    target.kind = gmm
    train.outer_loops = 200
    schedule.gamma_mode = adaptive
    model.hidden = [128, 128, 128, 128]

Коды выхода: 0 - успех, 1 - ошибка выполнения, 2 - конфигурация/аргументы/размерности,
3 - чекпойнт.
"""
import argparse
import json
import logging
import os
import re
import sys
from typing import Any, Dict, Optional, Sequence, Tuple

from src.algorithms import TARGET_KINDS, create_target, reference_samples
from src.config import Config
from src.core.checkpoint import load_checkpoint
from src.core.errors import CheckpointError, ConfigError, DimensionError, FlowSamplingError
from src.core.metrics import REPORT_HEADER, evaluate, summarize
from src.core.trainer import FlowSamplingTrainer, GammaMode, TrainConfig, sample
from src.utils.csv_io import read_samples, write_rows, write_samples
from src.utils.logger import get_logger, set_verbosity

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_CHECKPOINT = 3

RESOLVED_NAME = 'config.resolved'

_INT, _FLOAT, _BOOL, _STR, _LIST, _NUM_OR_LIST = 'int', 'float', 'bool', 'str', 'list', 'number|list'

# ключ -> (тип, значение по умолчанию, допускается null)
SCHEMA: Dict[str, Tuple[str, Any, bool]] = {
    'experiment': (_STR, 'flow_sampling', False),
    'seed': (_INT, None, False),

    'target.kind': (_STR, None, False),
    'target.centers': (_LIST, None, True),
    'target.weights': (_LIST, None, True),
    'target.variance': (_FLOAT, None, True),
    'target.n_particles': (_INT, None, True),
    'target.spatial_dim': (_INT, None, True),
    'target.a': (_FLOAT, None, True),
    'target.b': (_FLOAT, None, True),
    'target.c': (_FLOAT, None, True),
    'target.d0': (_FLOAT, None, True),
    'target.tau': (_FLOAT, None, True),
    'target.rm': (_FLOAT, None, True),
    'target.eps': (_FLOAT, None, True),
    'target.osc_c': (_FLOAT, None, True),
    'target.lj_standard_sign': (_BOOL, False, False),
    'target.mus': (_LIST, None, True),
    'target.kappas': (_NUM_OR_LIST, None, True),
    'target.sphere_dim': (_INT, None, True),
    'target.layout': (_STR, None, True),

    'schedule.gamma_mode': (_STR, GammaMode.FIXED.value, False),
    'schedule.gamma': (_FLOAT, Config.GAMMA, False),
    'schedule.adaptive_c': (_FLOAT, Config.ADAPTIVE_C, False),
    'schedule.adaptive_eps': (_FLOAT, Config.ADAPTIVE_EPS, False),

    'train.outer_loops': (_INT, Config.OUTER_LOOPS, False),
    'train.inner_loops': (_INT, Config.INNER_LOOPS, False),
    'train.batch_size': (_INT, Config.BATCH_SIZE, False),
    'train.buffer_capacity': (_INT, Config.BUFFER_CAPACITY, False),
    'train.new_samples_per_outer': (_INT, Config.NEW_SAMPLES_PER_OUTER, False),
    'train.nfe_train': (_INT, Config.NFE_TRAIN, False),
    'train.clip_threshold': (_FLOAT, Config.CLIP_THRESHOLD, True),
    'train.t_min': (_FLOAT, Config.T_MIN, False),
    'train.learning_rate': (_FLOAT, Config.LEARNING_RATE, False),
    'train.learning_rate_final': (_FLOAT, None, True),
    'train.checkpoint_every': (_INT, Config.CHECKPOINT_EVERY, False),

    'model.hidden': (_LIST, list(Config.HIDDEN_LAYERS), False),
    'model.activation': (_STR, Config.ACTIVATION, False),
    'model.time_features': (_INT, Config.TIME_FEATURES, False),

    'solver.nfe': (_INT, Config.NFE_TRAIN, False),
    'solver.t_start': (_FLOAT, 0.0, False),

    'eval.metrics': (_LIST, None, True),
    'eval.n_reference': (_INT, 10_000, False),
    'eval.langevin_steps': (_INT, Config.LANGEVIN_STEPS, False),
    'eval.langevin_step_size': (_FLOAT, Config.LANGEVIN_STEP_SIZE, False),
    'eval.subset': (_INT, Config.W2_SUBSET, False),
    'eval.hist_bins': (_INT, Config.HIST_BINS, False),

    'output.dir': (_STR, 'runs', False),
    'output.wallclock': (_BOOL, False, False),
    'output.progress': (_BOOL, True, False),
}

REQUIRED = ('target.kind', 'seed')
_BARE_WORD = re.compile(r'^[A-Za-z_][\w.\-/]*$')


def _strip_comment(line: str) -> str:
    """Отрезает комментарий, не трогая '#' внутри строк в кавычках"""
    in_string = False
    escaped = False
    for i, ch in enumerate(line):
        if escaped:
            escaped = False
        elif ch == '\\' and in_string:
            escaped = True
        elif ch == '"':
            in_string = not in_string
        elif ch == '#' and not in_string:
            return line[:i]
    return line


def _is_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _coerce(key: str, value, line: Optional[int]):
    kind, _, nullable = SCHEMA[key]
    if value is None:
        if nullable:
            return None
        raise ConfigError("значение null не допускается", key, line)
    if kind == _INT:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        if isinstance(value, float) and value.is_integer():
            return int(value)
    elif kind == _FLOAT:
        if _is_number(value):
            return float(value)
    elif kind == _BOOL:
        if isinstance(value, bool):
            return value
    elif kind == _STR:
        if isinstance(value, str):
            return value
    elif kind == _LIST:
        if isinstance(value, (list, tuple)):
            return json.loads(json.dumps(list(value)))
    elif kind == _NUM_OR_LIST:
        if _is_number(value):
            return float(value)
        if isinstance(value, (list, tuple)):
            return [float(v) for v in value]
    raise ConfigError(f"ожидался тип {kind}, получено {value!r}", key, line)


class RunConfig:
    """Разобранная и проверенная конфигурация запуска"""

    def __init__(self, values: Optional[Dict[str, Any]] = None):
        self.values: Dict[str, Any] = {k: spec[1] for k, spec in SCHEMA.items()}
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key: str, value, line: Optional[int] = None):
        if key not in SCHEMA:
            raise ConfigError("неизвестный ключ", key, line)
        self.values[key] = _coerce(key, value, line)

    def __getitem__(self, key: str):
        return self.values[key]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.values == other.values

    def validate(self):
        for key in REQUIRED:
            if self.values.get(key) is None:
                raise ConfigError("обязательный ключ отсутствует", key)
        if self['target.kind'] not in TARGET_KINDS:
            raise ConfigError(f"неизвестный тип цели, доступны {', '.join(TARGET_KINDS)}", 'target.kind')
        try:
            GammaMode(self['schedule.gamma_mode'])
        except ValueError:
            raise ConfigError("ожидалось 'fixed' или 'adaptive'", 'schedule.gamma_mode')
        if self['seed'] < 0:
            raise ConfigError("seed должен быть неотрицательным", 'seed')
        return self

    # ------------------------------------------------------------------
    @property
    def seed(self) -> int:
        return self['seed']

    @property
    def out_dir(self) -> str:
        return self['output.dir']

    def target_params(self) -> Dict[str, Any]:
        return {k.split('.', 1)[1]: v for k, v in self.values.items()
                if k.startswith('target.') and k != 'target.kind'}

    def make_target(self):
        try:
            return create_target(self['target.kind'], **self.target_params())
        except (ValueError, TypeError) as e:
            if isinstance(e, FlowSamplingError):
                raise
            raise ConfigError(f"некорректные параметры цели: {e}", 'target')

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig(
                outer_loops=self['train.outer_loops'],
                inner_loops=self['train.inner_loops'],
                batch_size=self['train.batch_size'],
                buffer_capacity=self['train.buffer_capacity'],
                new_samples_per_outer=self['train.new_samples_per_outer'],
                nfe_train=self['train.nfe_train'],
                gamma_mode=GammaMode(self['schedule.gamma_mode']),
                gamma=self['schedule.gamma'],
                adaptive_c=self['schedule.adaptive_c'],
                adaptive_eps=self['schedule.adaptive_eps'],
                clip_threshold=self['train.clip_threshold'],
                seed=self.seed,
                t_min=self['train.t_min'],
                learning_rate=self['train.learning_rate'],
                learning_rate_final=self['train.learning_rate_final'],
                checkpoint_every=self['train.checkpoint_every'],
                out_dir=self.out_dir,
                record_wallclock=self['output.wallclock'],
                progress=self['output.progress'],
            )
        except ValueError as e:
            raise ConfigError(f"некорректные параметры обучения: {e}", 'train')

    def model_kwargs(self) -> Dict[str, Any]:
        return {
            'hidden': [int(h) for h in self['model.hidden']],
            'activation': self['model.activation'],
            'time_features': self['model.time_features'],
        }

    def to_text(self) -> str:
        lines = [f"{key} = {json.dumps(value)}" for key, value in self.values.items()]
        return '\n'.join(lines) + '\n'


def parse_run_config(text: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    cfg = RunConfig()
    seen: Dict[str, int] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        if '=' not in line:
            raise ConfigError("ожидалась строка вида 'ключ = значение'", line=number)
        key, _, rhs = line.partition('=')
        key, rhs = key.strip(), rhs.strip()
        if not key:
            raise ConfigError("пустой ключ", line=number)
        if key in seen:
            raise ConfigError(f"ключ уже задан в строке {seen[key]}", key, number)
        if key not in SCHEMA:
            raise ConfigError("неизвестный ключ", key, number)
        try:
            value = json.loads(rhs)
        except json.JSONDecodeError:
            if not _BARE_WORD.match(rhs):
                raise ConfigError(f"не удалось разобрать значение {rhs!r}", key, number)
            value = rhs
        cfg.set(key, value, number)
        seen[key] = number
    for key, value in (overrides or {}).items():
        if value is not None:
            cfg.set(key, value)
    return cfg.validate()


def load_run_config(path: str, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"не удалось прочитать {path}: {e}")
    return parse_run_config(text, overrides)


def write_resolved(cfg: RunConfig, out_dir: str) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, RESOLVED_NAME)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(cfg.to_text())
    return path


# ----------------------------------------------------------------------
# команды

def _overrides(args) -> Dict[str, Any]:
    return {
        'seed': getattr(args, 'seed', None),
        'output.dir': getattr(args, 'out', None),
        'solver.nfe': getattr(args, 'nfe', None),
    }


def _require_config(args) -> RunConfig:
    if not args.config:
        raise ConfigError("нужен --config")
    return load_run_config(args.config, _overrides(args))


def cmd_train(args) -> int:
    cfg = _require_config(args)
    target = cfg.make_target()
    train_cfg = cfg.train_config()
    write_resolved(cfg, cfg.out_dir)
    logger.info(f"🔍 Эксперимент {cfg['experiment']}: вывод в {cfg.out_dir}")
    trainer = FlowSamplingTrainer(target, train_cfg, **cfg.model_kwargs())
    _, rows = trainer.train()
    if rows:
        logger.info(f"📈 Последний раунд: loss={rows[-1]['loss_mean']:.6g}, γ={rows[-1]['gamma']:.4g}")
    return EXIT_OK


def _samples_path(out: Optional[str], seed: int) -> str:
    if out and out.endswith('.csv'):
        parent = os.path.dirname(out)
        if parent:
            os.makedirs(parent, exist_ok=True)
        return out
    out_dir = out or '.'
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, f"samples_{seed}.csv")


def cmd_sample(args) -> int:
    cfg = load_run_config(args.config, _overrides(args)) if args.config else None
    seed = args.seed if args.seed is not None else (cfg.seed if cfg else 0)
    nfe = args.nfe if args.nfe is not None else (cfg['solver.nfe'] if cfg else Config.NFE_TRAIN)
    t_start = cfg['solver.t_start'] if cfg else 0.0
    if args.n < 0:
        raise ConfigError("--n должно быть >= 0", 'n')
    model = load_checkpoint(args.checkpoint)
    x = sample(model, args.n, nfe, seed=seed, t_start=t_start)
    out = args.out if args.out is not None else (cfg.out_dir if cfg else None)
    path = _samples_path(out, seed)
    write_samples(path, x, model.output_dim)
    logger.info(f"✅ {args.n} образцов записано в {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    cfg = _require_config(args)
    target = cfg.make_target()
    try:
        gen = read_samples(args.samples)
    except (OSError, ValueError) as e:
        raise ConfigError(f"не удалось прочитать образцы {args.samples}: {e}", 'samples')
    if gen.shape[1] != target.dim:
        raise DimensionError(f"Файл {args.samples}: {gen.shape[1]} столбцов, цель имеет размерность {target.dim}")
    if args.ref:
        ref = read_samples(args.ref)
    else:
        logger.info(f"🔍 Эталон: {cfg['eval.n_reference']} образцов для цели {target.name}")
        ref = reference_samples(target, cfg['eval.n_reference'], cfg.seed,
                                cfg['eval.langevin_steps'], cfg['eval.langevin_step_size'],
                                cfg['train.clip_threshold'])
    rows = evaluate(target, gen, ref, cfg['eval.metrics'], seed=cfg.seed,
                    subset_size=cfg['eval.subset'], bins=cfg['eval.hist_bins'])
    os.makedirs(cfg.out_dir, exist_ok=True)
    stem = os.path.splitext(os.path.basename(args.samples))[0]
    path = os.path.join(cfg.out_dir, f"eval_{stem}.csv")
    write_rows(path, REPORT_HEADER, rows)
    for name, value in summarize(rows).items():
        print(f"📊 {name}: {value:.6g}")
    logger.info(f"✅ Отчёт записан в {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from src.verify import run_verification
    return EXIT_OK if run_verification(quick=args.quick) else EXIT_RUNTIME


def _add_common(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="Файл конфигурации запуска")
    p.add_argument("--out", default=None, help="Каталог вывода (перекрывает output.dir)")
    p.add_argument("--seed", type=int, default=None, help="Перекрывает seed из конфигурации")
    p.add_argument("--nfe", type=int, default=None, help="Число шагов решателя при генерации")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flow-sampling",
                                     description="Flow Sampling: обучение диффузионных сэмплеров по ненормированной плотности")
    parser.add_argument("-q", "--quiet", action="store_true", help="Только предупреждения и ошибки")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="Обучить сэмплер по конфигурации")
    _add_common(p)
    p.set_defaults(handler=cmd_train)

    p = sub.add_parser("sample", help="Сгенерировать образцы из чекпойнта")
    _add_common(p)
    p.add_argument("--checkpoint", required=True, help="Файл .fsmp")
    p.add_argument("--n", type=int, default=10_000, help="Число образцов")
    p.set_defaults(handler=cmd_sample)

    p = sub.add_parser("eval", help="Оценить образцы относительно эталона цели")
    _add_common(p)
    p.add_argument("--samples", required=True, help="CSV с образцами")
    p.add_argument("--ref", default=None, help="CSV с эталонными образцами (иначе генерируется)")
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser("verify", help="Прогнать набор проверок-оракулов")
    _add_common(p)
    p.add_argument("--quick", action="store_true", help="Уменьшенное число случайных конфигураций")
    p.set_defaults(handler=cmd_verify)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if args.quiet:
        set_verbosity(logging.WARNING)
    if args.nfe is not None and args.nfe < 1:
        logger.error("❌ --nfe должно быть >= 1")
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except (ConfigError, DimensionError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG
    except CheckpointError as e:
        logger.error(f"❌ Чекпойнт: {e}")
        return EXIT_CHECKPOINT
    except FlowSamplingError as e:
        logger.error(f"❌ {e}")
        return EXIT_RUNTIME
    except (ValueError, OSError) as e:
        logger.error(f"❌ {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
