# core/defaults.py
from __future__ import annotations
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Tuple
import yaml

from core.errors import ConfigError

@dataclass(frozen=True)
class TransportDefaults:
    mss_bytes: int = 1460
    header_bytes: int = 40
    init_cwnd_mss: int = 2
    init_ssthresh_bytes: int = 65536
    init_rto_s: float = 1.0
    min_rto_s: float = 0.2
    max_rto_s: float = 60.0

@dataclass(frozen=True)
class RunDefaults:
    duration_s: float = 600.0
    seed: int = 42
    base_rtt_ms: float = 40.0
    bin_ms: float = 100.0

@dataclass(frozen=True)
class CalibrationDefaults:
    max_iterations: int = 30
    log2_gamma_min: float = -10.0
    log2_gamma_max: float = 10.0
    verify_seed_offset: int = 1000003

@dataclass(frozen=True)
class ValidateDefaults:
    capacity_mbps: float = 10.0
    queue_kb: float = 100.0
    base_rtt_ms: float = 40.0
    duration_s: float = 3600.0
    independent_seed_offset: int = 500009
    statistic: str = "mean"

@dataclass(frozen=True)
class SweepDefaults:
    presets: Tuple[str, ...] = ("AP1", "AP8")
    load_bands_kbps: Tuple[Tuple[float, float], ...] = ((1, 3), (6, 8), (13, 15), (44, 46))

@dataclass(frozen=True)
class Defaults:
    scheduler: Dict[str, Any]
    home_apps: Dict[str, Dict[str, Any]]
    transport: TransportDefaults
    run: RunDefaults
    calibration: CalibrationDefaults
    validate: ValidateDefaults
    sweep: SweepDefaults
    source_path: Optional[str] = field(default=None, compare=False)

def _config_path() -> Path:
    # .../core/defaults.py -> подняться в корень и найти config/defaults.yml
    return Path(__file__).resolve().parents[1] / "config" / "defaults.yml"

def _section(data: dict, name: str, path: Path) -> dict:
    if name not in data or not isinstance(data[name], dict):
        raise ConfigError(f"В {path} нет секции {name}")
    return dict(data[name])

def _typed(cls, raw: dict, path: Path, section: str):
    known = set(cls.__dataclass_fields__)
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"{path}: неизвестные ключи в секции {section}: {sorted(extra)}")
    return cls(**raw)

def _sweep(raw: dict, path: Path) -> SweepDefaults:
    sw = _typed(SweepDefaults, raw, path, "sweep")
    bands = tuple((float(lo), float(hi)) for lo, hi in sw.load_bands_kbps)
    return SweepDefaults(presets=tuple(str(p) for p in sw.presets), load_bands_kbps=bands)

@lru_cache(maxsize=4)
def load_defaults(path: Optional[str] = None) -> Defaults:
    """
    Прочитать config/defaults.yml и вернуть типизированные значения по умолчанию.
    """
    p = Path(path) if path else _config_path()
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"Файл значений по умолчанию не найден: {p}")
    except yaml.YAMLError as e:
        raise ConfigError(f"{p}: некорректный YAML: {e}")
    if not isinstance(data, dict):
        raise ConfigError(f"{p}: ожидается объект верхнего уровня")

    home_apps = _section(data, "home_apps", p)
    return Defaults(
        scheduler=_section(data, "scheduler", p),
        home_apps={k: dict(v or {}) for k, v in home_apps.items()},
        transport=_typed(TransportDefaults, _section(data, "transport", p), p, "transport"),
        run=_typed(RunDefaults, _section(data, "run", p), p, "run"),
        calibration=_typed(CalibrationDefaults, _section(data, "calibration", p), p, "calibration"),
        validate=_typed(ValidateDefaults, _section(data, "validate", p), p, "validate"),
        sweep=_sweep(_section(data, "sweep", p), p),
        source_path=str(p),
    )
