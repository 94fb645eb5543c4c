# core/apmodel.py
from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, Dict, Mapping, Optional

from core.errors import ConfigError, DomainError

# 1 KB = 1000 B везде


class Direction(str, Enum):
    DOWN = "down"
    UP = "up"


@dataclass(frozen=True)
class LatencyMeasurement:
    lmrtt: float      # мс, RTT последней мили без нагрузки
    ulrttdw: float    # мс, под нагрузкой вниз
    ulrttup: float    # мс, под нагрузкой вверх

    def __post_init__(self):
        if min(self.lmrtt, self.ulrttdw, self.ulrttup) <= 0:
            raise DomainError(f"RTT должны быть > 0: {self}")
        if self.ulrttdw < self.lmrtt or self.ulrttup < self.lmrtt:
            raise DomainError(
                f"RTT под нагрузкой меньше RTT без нагрузки: lmrtt={self.lmrtt}, "
                f"ulrttdw={self.ulrttdw}, ulrttup={self.ulrttup}"
            )


def buffering_effect(meas: LatencyMeasurement, capacity_mbps: float, direction: Direction | str) -> float:
    """Размер буфера в KB: (loaded RTT - lmrtt)[с] * capacity[бит/с] / 8 / 1000."""
    d = Direction(direction)
    if capacity_mbps <= 0:
        raise DomainError(f"Пропускная способность должна быть > 0: {capacity_mbps}")
    loaded = meas.ulrttdw if d is Direction.DOWN else meas.ulrttup
    delta_s = (loaded - meas.lmrtt) / 1000.0
    return delta_s * capacity_mbps * 1e6 / 8.0 / 1000.0


@dataclass(frozen=True)
class AccessPointProfile:
    name: str
    capacity_dw: float   # Мбит/с
    capacity_up: float   # Мбит/с
    queue_dw: float      # KB
    queue_up: float      # KB

    def __post_init__(self):
        for field_name in ("capacity_dw", "capacity_up", "queue_dw", "queue_up"):
            v = getattr(self, field_name)
            if not isinstance(v, (int, float)) or v <= 0:
                raise DomainError(f"{self.name}: {field_name} должен быть > 0 (получено {v!r})")

    @property
    def capacity_up_bps(self) -> float:
        return self.capacity_up * 1e6

    @property
    def queue_up_bytes(self) -> int:
        return int(round(self.queue_up * 1000))

    def with_overrides(self, **fields: Any) -> "AccessPointProfile":
        return replace(self, **{k: v for k, v in fields.items() if v is not None})


# Очереди: примерно 90-й перцентиль измерений (медианы из измерений, слегка завышены)
PRESETS: Dict[str, AccessPointProfile] = {
    "AP1": AccessPointProfile("AP1", capacity_dw=50.0, capacity_up=6.3, queue_dw=1300.0, queue_up=120.0),
    "AP8": AccessPointProfile("AP8", capacity_dw=8.0, capacity_up=1.0, queue_dw=90.0, queue_up=60.0),
}


def preset(name: str) -> AccessPointProfile:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"Неизвестный профиль точки доступа: {name}. Доступны: {', '.join(PRESETS)}")


_FIELD_KEYS = {
    "capacity_dw_mbps": "capacity_dw",
    "capacity_up_mbps": "capacity_up",
    "queue_dw_kb": "queue_dw",
    "queue_up_kb": "queue_up",
}


def profile_from_config(cfg: Mapping[str, Any]) -> AccessPointProfile:
    """
    Профиль из секции access_point: preset + переопределения,
    либо полностью заданный пользователем профиль (другие AP из измерений).
    """
    overrides: Dict[str, Optional[float]] = {}
    for key, attr in _FIELD_KEYS.items():
        if cfg.get(key) is not None:
            overrides[attr] = float(cfg[key])
    name = cfg.get("name")
    base_name = cfg.get("preset")
    if base_name is not None:
        base = preset(str(base_name))
        return base.with_overrides(name=str(name) if name else None, **overrides)
    missing = [k for k, attr in _FIELD_KEYS.items() if attr not in overrides]
    if missing:
        raise ConfigError(f"Без preset нужны все поля access_point, не хватает: {', '.join(missing)}")
    return AccessPointProfile(name=str(name or "custom"), **overrides)
