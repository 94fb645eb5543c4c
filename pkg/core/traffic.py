# core/traffic.py
"""
Источники трафика: четыре гостевых профиля (Weibull / GenPareto / Lognormal),
калибровка гостевой нагрузки под полосу KBps и четыре домашних приложения.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING, Any, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.defaults import load_defaults
from core.distributions import GUEST_PROFILES, DistSpec, Family, quantile_array, quantile
from core.errors import CalibrationError, ConfigError, DomainError, InsufficientDataError
from core.events import EventKind, RngStream
from core.schedulers import Packet, TrafficClass
from core.sim_logging import logger
from core.transport import FlowRecord, ReliableFlow

if TYPE_CHECKING:
    from core.engine import Network

MIN_FLOW_DURATION = 1e-6      # с
TRACE_COLUMNS = ["start_s", "bytes", "duration_s", "class", "profile_id"]


# -------------------- гостевые профили --------------------

@dataclass(frozen=True)
class GuestProfile:
    profile_id: int
    inter_arrival: DistSpec   # Weibull, с
    size: DistSpec            # GenPareto, байты
    duration: DistSpec        # Lognormal, с

    def __post_init__(self):
        expected = (
            (self.inter_arrival, Family.WEIBULL, "inter_arrival"),
            (self.size, Family.GENPARETO, "size"),
            (self.duration, Family.LOGNORMAL, "duration"),
        )
        for spec, fam, name in expected:
            if spec.family is not fam:
                raise DomainError(f"Профиль {self.profile_id}: {name} должен быть {fam.value}, а не {spec.family.value}")

    @classmethod
    def from_table(cls, profile_id: int) -> "GuestProfile":
        if profile_id not in GUEST_PROFILES:
            raise ConfigError(f"Неизвестный гостевой профиль: {profile_id}. Доступны: {sorted(GUEST_PROFILES)}")
        t = GUEST_PROFILES[profile_id]
        return cls(profile_id, t["inter_arrival"], t["size"], t["duration"])

    def scaled(self, gamma: float) -> "GuestProfile":
        if gamma == 1.0:
            return self
        return GuestProfile(self.profile_id, self.inter_arrival.scaled_rate(gamma), self.size, self.duration)


def guest_stream_id(profile_id: int) -> str:
    return f"guest/profile-{profile_id}"


@dataclass(frozen=True)
class FlowSpec:
    start: float
    size: int
    duration: float
    cls: TrafficClass = TrafficClass.GUEST
    profile_id: Optional[int] = None

    def __post_init__(self):
        if self.size < 1:
            raise DomainError(f"Размер потока должен быть >= 1 байта: {self.size}")
        if not self.duration > 0:
            raise DomainError(f"Длительность потока должна быть > 0: {self.duration}")


def next_guest_flow(
    profile: GuestProfile,
    rng: RngStream | np.random.Generator,
    now: float,
    gamma: float = 1.0,
    uniforms: Optional[Sequence[float]] = None,
) -> FlowSpec:
    """Следующий гостевой поток: три независимых u -> интервал, размер, длительность."""
    u1, u2, u3 = uniforms if uniforms is not None else rng.random(3)
    p = profile.scaled(gamma)
    return FlowSpec(
        start=now + quantile(p.inter_arrival, float(u1)),
        size=max(1, int(round(quantile(p.size, float(u2))))),
        duration=max(MIN_FLOW_DURATION, quantile(p.duration, float(u3))),
        cls=TrafficClass.GUEST,
        profile_id=profile.profile_id,
    )


# -------------------- домашние приложения --------------------

class AppKind(str, Enum):
    FTP = "ftp-elephant"
    CBR = "cbr-video"
    GAME = "game-onoff"
    WEB = "web-browsing"

    @classmethod
    def parse(cls, name: str) -> "AppKind":
        try:
            return cls(str(name).strip().lower())
        except ValueError:
            raise ConfigError(f"Неизвестное домашнее приложение: {name}. Доступны: {', '.join(k.value for k in cls)}")


@dataclass(frozen=True)
class HomeAppConfig:
    kind: AppKind
    params: Dict[str, float] = field(default_factory=dict)

    @classmethod
    def create(cls, kind: AppKind | str, **overrides: Any) -> "HomeAppConfig":
        k = AppKind.parse(kind) if not isinstance(kind, AppKind) else kind
        base = dict(load_defaults().home_apps.get(k.value, {}))
        unknown = set(overrides) - set(base)
        if unknown:
            raise ConfigError(f"{k.value}: неизвестные параметры {sorted(unknown)}; доступны {sorted(base)}")
        base.update(overrides)
        app = cls(k, {name: float(v) for name, v in base.items()})
        app.validate()
        return app

    def validate(self) -> None:
        for name, v in self.params.items():
            if not math.isfinite(v):
                raise ConfigError(f"{self.kind.value}.{name}: значение должно быть конечным ({v})")
            if name == "off_s" or name == "gap_mu":
                continue
            if name == "gap_sigma":
                if v < 0:
                    raise ConfigError(f"{self.kind.value}.gap_sigma должен быть >= 0 ({v})")
                continue
            if v <= 0:
                raise ConfigError(f"{self.kind.value}.{name} должен быть > 0 ({v})")
        if self.params.get("off_s", 0.0) < 0:
            raise ConfigError(f"{self.kind.value}.off_s должен быть >= 0")

    @property
    def reliable(self) -> bool:
        return self.kind is AppKind.FTP

    def __getitem__(self, name: str) -> float:
        return self.params[name]


def default_home_apps() -> List[HomeAppConfig]:
    return [HomeAppConfig.create(k) for k in AppKind]


@dataclass(frozen=True)
class Emission:
    sizes: Tuple[int, ...]
    next_time: Optional[float]


def _grid_next(now: float, period: float) -> float:
    # следующий узел сетки k * period без накопления ошибки сложения
    return (round(now / period) + 1) * period


def app_emit(app: HomeAppConfig, now: float, rng: Optional[RngStream] = None) -> Emission:
    """Пакеты, которые приложение отдаёт в момент now, и время следующего таймера."""
    kind = app.kind
    if kind is AppKind.FTP:
        return Emission((), None)
    if kind is AppKind.CBR:
        period = app["period_ms"] / 1000.0
        return Emission((int(app["packet_bytes"]),), _grid_next(now, period))
    if kind is AppKind.GAME:
        period = app["period_ms"] / 1000.0
        on_s, off_s = app["on_s"], app["off_s"]
        size = (int(app["packet_bytes"]),)
        if off_s <= 0.0:
            return Emission(size, _grid_next(now, period))
        cycle = on_s + off_s
        cycle_start = math.floor(now / cycle + 1e-9) * cycle
        phase = max(0.0, now - cycle_start)
        if phase >= on_s - 1e-9:
            return Emission((), cycle_start + cycle)
        # узлы сетки отсчитываются от начала цикла
        nxt = cycle_start + (round(phase / period) + 1) * period
        if nxt - cycle_start >= on_s - 1e-9:
            nxt = cycle_start + cycle
        return Emission(size, nxt)
    if rng is None:
        raise DomainError("web-browsing требует поток случайных чисел")
    gap = quantile(DistSpec.lognormal(app["gap_mu"], app["gap_sigma"]), rng.uniform())
    return Emission((int(app["request_bytes"]),), now + gap)


# -------------------- источники в движке --------------------

class HomeSource:
    """Домашнее приложение: ftp это надёжный бесконечный поток, остальные шлют датаграммы."""
    def __init__(self, net: "Network", app: HomeAppConfig, label: str, rng: RngStream):
        self.net = net
        self.app = app
        self.label = label
        self.rng = rng
        self.flow: Optional[ReliableFlow] = None

    def start(self) -> None:
        if self.app.reliable:
            self.flow = ReliableFlow(self.net, self.label, TrafficClass.HOME, start=0.0)
            self.net.register_flow(self.flow)
            self.flow.start()
        else:
            self.net.sim.at(0.0, EventKind.APP_TIMER, self.label, self._fire)

    def _fire(self) -> None:
        sim = self.net.sim
        now = sim.now
        em = app_emit(self.app, now, self.rng)
        for size in em.sizes:
            self.net.transmit(Packet(flow_id=self.label, cls=TrafficClass.HOME, size=size, created=now))
        if em.next_time is not None and em.next_time < self.net.horizon:
            sim.at(em.next_time, EventKind.APP_TIMER, self.label, self._fire)


class GuestSource:
    """Поток гостевых flow одного профиля; каждый flow надёжный, темп S/D."""
    def __init__(self, net: "Network", profile: GuestProfile, gamma: float, rng: RngStream):
        self.net = net
        self.profile = profile
        self.gamma = gamma
        self.rng = rng
        self.label = f"guest-p{profile.profile_id}"
        self.flows: List[ReliableFlow] = []

    def start(self) -> None:
        self._draw(0.0)

    def _draw(self, now: float) -> None:
        spec = next_guest_flow(self.profile, self.rng, now, self.gamma)
        if spec.start >= self.net.horizon:
            return
        self.net.sim.at(spec.start, EventKind.FLOW_START, self.label, lambda: self._begin(spec))

    def _begin(self, spec: FlowSpec) -> None:
        flow = ReliableFlow(
            self.net,
            f"{self.label}/{len(self.flows)}",
            TrafficClass.GUEST,
            start=spec.start,
            size=spec.size,
            duration=spec.duration,
            profile_id=spec.profile_id,
        )
        self.flows.append(flow)
        self.net.register_flow(flow)
        flow.begin()
        self._draw(spec.start)


# -------------------- сухой прогон и калибровка --------------------

def _as_profiles(profiles: Iterable[GuestProfile | int]) -> List[GuestProfile]:
    out = [p if isinstance(p, GuestProfile) else GuestProfile.from_table(int(p)) for p in profiles]
    if not out:
        raise ConfigError("Не задано ни одного гостевого профиля")
    return out


def _dry_flows(profile: GuestProfile, gamma: float, horizon: float, seed: int,
               chunk: int = 4096) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    # тот же поток и тот же порядок троек (u1, u2, u3), что у GuestSource
    stream = RngStream(seed, guest_stream_id(profile.profile_id))
    p = profile.scaled(gamma)
    starts, sizes, durs = [], [], []
    t = 0.0
    while True:
        u = stream.random((chunk, 3))
        s = t + np.cumsum(quantile_array(p.inter_arrival, u[:, 0]))
        n = int(np.searchsorted(s, horizon, side="left"))
        starts.append(s[:n])
        sizes.append(np.maximum(1.0, np.rint(quantile_array(p.size, u[:n, 1]))))
        durs.append(np.maximum(MIN_FLOW_DURATION, quantile_array(p.duration, u[:n, 2])))
        if n < chunk:
            break
        t = float(s[-1])
    return np.concatenate(starts), np.concatenate(sizes), np.concatenate(durs)


def generate_trace(profiles: Iterable[GuestProfile | int], gamma: float, duration: float, seed: int) -> pd.DataFrame:
    """Трасса гостевых потоков без сети (колонки TRACE_COLUMNS), по возрастанию start_s."""
    frames = []
    for p in _as_profiles(profiles):
        s, b, d = _dry_flows(p, gamma, duration, seed)
        frames.append(pd.DataFrame({
            "start_s": s,
            "bytes": b.astype(np.int64),
            "duration_s": d,
            "class": TrafficClass.GUEST.value,
            "profile_id": p.profile_id,
        }))
    df = pd.concat(frames, ignore_index=True)
    return df.sort_values(["start_s", "profile_id"], kind="mergesort").reset_index(drop=True)[TRACE_COLUMNS]


def offered_load(profiles: Iterable[GuestProfile | int], gamma: float, duration: float, seed: int) -> float:
    """Средняя предлагаемая нагрузка (KBps): байты, выпущенные темпом S/D до горизонта."""
    if duration <= 0:
        raise DomainError(f"Длительность сухого прогона должна быть > 0: {duration}")
    total = 0.0
    for p in _as_profiles(profiles):
        s, b, d = _dry_flows(p, gamma, duration, seed)
        total += float(np.sum(np.minimum(b, b * (duration - s) / d)))
    return total / 1000.0 / duration


@dataclass(frozen=True)
class CalibrationResult:
    gamma: float
    load_kbps: float
    iterations: int
    verify_load_kbps: float
    verified: bool


def calibrate_load(
    profiles: Iterable[GuestProfile | int],
    band: Tuple[float, float],
    seed: int,
    duration: Optional[float] = None,
) -> CalibrationResult:
    """
    Подобрать gamma (частота прихода x gamma) так, чтобы нагрузка сухого прогона
    попала в полосу. Сначала gamma = 1, затем бисекция по log2(gamma).
    """
    lo, hi = float(band[0]), float(band[1])
    if not (lo > 0 and hi >= lo and math.isfinite(hi)):
        raise CalibrationError(f"Полоса нагрузки должна быть непустой и положительной: [{lo}, {hi}]")
    cal = load_defaults().calibration
    horizon = float(duration if duration is not None else load_defaults().run.duration_s)
    ps = _as_profiles(profiles)

    def inside(x: float) -> bool:
        return lo <= x <= hi

    gamma, load, iterations = 1.0, offered_load(ps, 1.0, horizon, seed), 0
    if not inside(load):
        # gamma = 1 уже проверена: ищем только по нужную сторону от log2(gamma) = 0
        a, b = (0.0, cal.log2_gamma_max) if load < lo else (cal.log2_gamma_min, 0.0)
        found = False
        while iterations < cal.max_iterations:
            iterations += 1
            m = (a + b) / 2.0
            gamma = 2.0 ** m
            load = offered_load(ps, gamma, horizon, seed)
            if inside(load):
                found = True
                break
            if load < lo:
                a = m
            else:
                b = m
        if not found:
            raise CalibrationError(
                f"Полоса [{lo}, {hi}] KBps недостижима при gamma в [2^{cal.log2_gamma_min:g}, "
                f"2^{cal.log2_gamma_max:g}] (последняя нагрузка {load:.3f} KBps)"
            )

    verify = offered_load(ps, gamma, horizon, seed + cal.verify_seed_offset)
    result = CalibrationResult(gamma, load, iterations, verify, inside(verify))
    logger.write({
        "kind": "calibration",
        "band_kbps": [lo, hi],
        "profiles": [p.profile_id for p in ps],
        "gamma": gamma,
        "iterations": iterations,
        "load_kbps": load,
        "verify_load_kbps": verify,
        "seed": seed,
    })
    if not result.verified:
        logger.write({"kind": "calibration_verify_miss", "gamma": gamma, "verify_load_kbps": verify,
                      "band_kbps": [lo, hi]})
    return result


# -------------------- трасса потоков (CSV) --------------------

def trace_frame(records: Iterable[FlowRecord]) -> pd.DataFrame:
    rows = [
        {
            "start_s": r.start,
            "bytes": r.size,
            "duration_s": r.duration,
            "class": r.cls.value,
            "profile_id": r.profile_id,
        }
        for r in records
        if r.size is not None
    ]
    return pd.DataFrame(rows, columns=TRACE_COLUMNS)


def write_trace(trace: pd.DataFrame | Iterable[FlowRecord], path: str | Path) -> None:
    df = trace if isinstance(trace, pd.DataFrame) else trace_frame(trace)
    # без float_format: repr-точность, интервалы между стартами восстанавливаются без потерь
    df.to_csv(path, index=False, lineterminator="\n")


def read_trace(path: str | Path) -> pd.DataFrame:
    """Трасса start_s, bytes, duration_s[, class, profile_id], отсортированная по start_s."""
    try:
        df = pd.read_csv(path)
    except pd.errors.EmptyDataError:
        raise InsufficientDataError(f"Файл трассы пуст: {path}")
    except FileNotFoundError:
        raise ConfigError(f"Файл трассы не найден: {path}")
    missing = [c for c in TRACE_COLUMNS[:3] if c not in df.columns]
    if missing:
        raise DomainError(f"{path}: нет колонок {missing}")
    if df.empty:
        raise InsufficientDataError(f"В трассе {path} нет ни одного потока")
    return df.sort_values("start_s", kind="mergesort").reset_index(drop=True)
