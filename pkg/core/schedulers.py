# core/schedulers.py
"""
Восемь конфигураций планировщика аплинка точки доступа за одним интерфейсом
enqueue/dequeue: DropTail, RED, CoDel, SRR, PQ, UPNQ, HPSS, CBQ.

Очереди учитываются в байтах. Классовые политики (PQ, UPNQ, HPSS, CBQ) держат
две FIFO (home и guest) в общем буфере queue_cap.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field, fields
from enum import Enum
from typing import Any, Deque, Dict, List, Mapping, Optional, Tuple

import numpy as np

from core.defaults import load_defaults
from core.errors import ConfigError, DomainError, SimulationError

# -------------------- модели --------------------

class TrafficClass(str, Enum):
    HOME = "home"
    GUEST = "guest"


class DropReason(str, Enum):
    QUEUE_FULL = "queue-full"
    RED = "red-probabilistic"
    UPNQ = "upnq-threshold"
    HPSS = "hpss-regulation"
    CODEL = "codel-head"


class Policy(str, Enum):
    DROPTAIL = "DropTail"
    RED = "RED"
    CODEL = "CoDel"
    SRR = "SRR"
    PQ = "PQ"
    UPNQ = "UPNQ"
    HPSS = "HPSS"
    CBQ = "CBQ"

    @classmethod
    def parse(cls, name: str) -> "Policy":
        for p in cls:
            if str(name).strip().lower() == p.value.lower():
                return p
        raise ConfigError(
            f"Неизвестная политика планировщика: {name}. Доступны: {', '.join(p.value for p in cls)}"
        )


class HpssMode(str, Enum):
    PQ = "pq-mode"
    WFQ = "wfq-mode"


@dataclass(eq=False)
class Packet:
    flow_id: str
    cls: TrafficClass
    size: int                       # байты на проводе
    created: float
    enqueued: Optional[float] = None
    dequeued: Optional[float] = None
    seq: int = 0                    # смещение первого байта (надёжные потоки)
    payload: int = 0
    retx: bool = False
    blocked: float = 0.0            # задержка, наведённая гостевым пакетом в обслуживании

    def __post_init__(self):
        if self.size <= 0:
            raise DomainError(f"Размер пакета должен быть > 0: {self.size}")


@dataclass
class ClassCounters:
    offered_bytes: int = 0
    offered_packets: int = 0
    served_bytes: int = 0
    served_packets: int = 0
    dropped_bytes: int = 0
    dropped_packets: int = 0
    drop_reasons: Dict[str, int] = field(default_factory=dict)
    qdelays: List[float] = field(default_factory=list)

    @property
    def mean_qdelay(self) -> float:
        return math.fsum(self.qdelays) / len(self.qdelays) if self.qdelays else 0.0


class SchedStats:
    """Счётчики по классам: offered = served + dropped + resident."""
    def __init__(self):
        self.per: Dict[TrafficClass, ClassCounters] = {c: ClassCounters() for c in TrafficClass}

    def offer(self, pkt: Packet) -> None:
        c = self.per[pkt.cls]
        c.offered_bytes += pkt.size
        c.offered_packets += 1

    def serve(self, pkt: Packet) -> None:
        c = self.per[pkt.cls]
        c.served_bytes += pkt.size
        c.served_packets += 1
        c.qdelays.append(pkt.dequeued - pkt.enqueued)

    def drop(self, pkt: Packet, reason: DropReason) -> None:
        c = self.per[pkt.cls]
        c.dropped_bytes += pkt.size
        c.dropped_packets += 1
        c.drop_reasons[reason.value] = c.drop_reasons.get(reason.value, 0) + 1

    def check_conservation(self, resident: Mapping[TrafficClass, int]) -> bool:
        return all(
            c.offered_bytes == c.served_bytes + c.dropped_bytes + resident.get(cls, 0)
            for cls, c in self.per.items()
        )


@dataclass(frozen=True)
class SchedulerConfig:
    policy: Policy
    queue_cap: int                          # байты (queue_up профиля)
    target_delay_ms: float = 5.0
    red_w_q: float = 0.002
    red_max_p: float = 0.1
    codel_interval_ms: float = 100.0
    upnq_threshold: float = 0.80
    hpss_target_impact_ms: float = 3.0
    hpss_capacity_threshold_mbps: float = 2.0
    hpss_share_pct_per_mbps: float = 0.5
    hpss_guest_share_pct: Optional[float] = None
    hpss_window_s: float = 1.0
    cbq_home_weight: float = 0.95

    def __post_init__(self):
        object.__setattr__(self, "policy", Policy.parse(self.policy) if not isinstance(self.policy, Policy) else self.policy)
        if not isinstance(self.queue_cap, int) or self.queue_cap <= 0:
            raise ConfigError(f"queue_cap должен быть целым > 0 (байты): {self.queue_cap!r}")
        positive = ("target_delay_ms", "codel_interval_ms", "hpss_target_impact_ms",
                    "hpss_capacity_threshold_mbps", "hpss_share_pct_per_mbps", "hpss_window_s")
        for name in positive:
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not v > 0:
                raise ConfigError(f"{name} должен быть > 0 (получено {v!r})")
        for name in ("upnq_threshold", "red_w_q", "red_max_p"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not (0.0 < v <= 1.0):
                raise ConfigError(f"{name} должен лежать в (0, 1] (получено {v!r})")
        if not (0.0 < self.cbq_home_weight < 1.0):
            raise ConfigError(f"cbq_home_weight должен лежать в (0, 1): {self.cbq_home_weight!r}")
        if self.hpss_guest_share_pct is not None and not (0.0 < self.hpss_guest_share_pct < 100.0):
            raise ConfigError(f"hpss_guest_share_pct должен лежать в (0, 100): {self.hpss_guest_share_pct!r}")

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any], queue_cap: int) -> "SchedulerConfig":
        """Секция scheduler сценария поверх config/defaults.yml."""
        known = {f.name for f in fields(cls)} - {"queue_cap"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"Неизвестные параметры планировщика: {sorted(unknown)}")
        if "policy" not in data:
            raise ConfigError("В секции scheduler обязателен ключ policy")
        merged = dict(load_defaults().scheduler)
        merged.update(data)
        return cls(queue_cap=queue_cap, **{k: v for k, v in merged.items() if k in known})

    @property
    def cbq_weights(self) -> Dict[TrafficClass, float]:
        return {TrafficClass.HOME: self.cbq_home_weight, TrafficClass.GUEST: 1.0 - self.cbq_home_weight}


class FifoQueue:
    __slots__ = ("items", "bytes")

    def __init__(self):
        self.items: Deque[Packet] = deque()
        self.bytes = 0

    def push(self, pkt: Packet) -> None:
        self.items.append(pkt)
        self.bytes += pkt.size

    def pop(self) -> Packet:
        pkt = self.items.popleft()
        self.bytes -= pkt.size
        return pkt

    def head(self) -> Optional[Packet]:
        return self.items[0] if self.items else None

    def __len__(self) -> int:
        return len(self.items)


# -------------------- базовый планировщик --------------------

class Scheduler(ABC):
    """
    enqueue -> None (принят) | DropReason; dequeue -> Packet | None.
    Пакет, отданный dequeue, уходит в линк и больше не прерывается.
    """
    policy: Policy

    def __init__(self, config: SchedulerConfig, capacity_bps: float, rng: Optional[np.random.Generator] = None):
        if capacity_bps <= 0:
            raise ConfigError(f"Пропускная способность аплинка должна быть > 0: {capacity_bps}")
        self.config = config
        self.capacity_bps = float(capacity_bps)
        self.queue_cap = config.queue_cap
        self.rng = rng
        self.stats = SchedStats()
        self._service_end = -math.inf
        self._service_cls: Optional[TrafficClass] = None

    def tx_time(self, size: int) -> float:
        return size * 8.0 / self.capacity_bps

    def enqueue(self, pkt: Packet, now: float) -> Optional[DropReason]:
        pkt.enqueued = now
        self.stats.offer(pkt)
        reason = self._admit(pkt, now)
        if reason is not None:
            self.stats.drop(pkt, reason)
            return reason
        self._push(pkt, now)
        return None

    def dequeue(self, now: float) -> Optional[Packet]:
        pkt = self._pop(now)
        if pkt is None:
            return None
        pkt.dequeued = now
        self.stats.serve(pkt)
        self._service_end = now + self.tx_time(pkt.size)
        self._service_cls = pkt.cls
        self._on_dequeue(pkt, now)
        return pkt

    def _drop_queued(self, pkt: Packet, reason: DropReason) -> None:
        self.stats.drop(pkt, reason)

    def _on_dequeue(self, pkt: Packet, now: float) -> None:
        pass

    def guest_residual(self, now: float) -> float:
        """Остаток передачи гостевого пакета, если линк сейчас занят им."""
        if self._service_cls is TrafficClass.GUEST and self._service_end > now:
            return self._service_end - now
        return 0.0

    @abstractmethod
    def _admit(self, pkt: Packet, now: float) -> Optional[DropReason]: ...

    @abstractmethod
    def _push(self, pkt: Packet, now: float) -> None: ...

    @abstractmethod
    def _pop(self, now: float) -> Optional[Packet]: ...

    @abstractmethod
    def queued_bytes(self, cls: Optional[TrafficClass] = None) -> int: ...

    @abstractmethod
    def __len__(self) -> int: ...

    def is_empty(self) -> bool:
        return len(self) == 0


# -------------------- FIFO: DropTail --------------------

class DropTailScheduler(Scheduler):
    policy = Policy.DROPTAIL

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.fifo = FifoQueue()
        self._cls_bytes = {c: 0 for c in TrafficClass}

    def _room(self, pkt: Packet) -> bool:
        return self.fifo.bytes + pkt.size <= self.queue_cap

    def _admit(self, pkt, now):
        return None if self._room(pkt) else DropReason.QUEUE_FULL

    def _push(self, pkt, now):
        self.fifo.push(pkt)
        self._cls_bytes[pkt.cls] += pkt.size

    def _take_head(self) -> Packet:
        pkt = self.fifo.pop()
        self._cls_bytes[pkt.cls] -= pkt.size
        return pkt

    def _pop(self, now):
        return self._take_head() if self.fifo.items else None

    def queued_bytes(self, cls=None):
        return self.fifo.bytes if cls is None else self._cls_bytes[cls]

    def __len__(self):
        return len(self.fifo)


# -------------------- RED --------------------

@dataclass(frozen=True)
class RedParams:
    min_th: float   # байты
    max_th: float
    max_p: float


def red_params(target_delay_s: float, capacity_bps: float, max_p: float) -> RedParams:
    """min_th = target_delay * capacity (в байтах), max_th = 3 * min_th."""
    min_th = target_delay_s * capacity_bps / 8.0
    return RedParams(min_th=min_th, max_th=3.0 * min_th, max_p=max_p)


def red_drop_probability(avg_queue: float, params: RedParams) -> float:
    if avg_queue < params.min_th:
        return 0.0
    if avg_queue > params.max_th:
        return 1.0
    return params.max_p * (avg_queue - params.min_th) / (params.max_th - params.min_th)


def red_admit(avg_queue: float, params: RedParams, rng: np.random.Generator) -> bool:
    p = red_drop_probability(avg_queue, params)
    if p <= 0.0:
        return True
    if p >= 1.0:
        return False
    return rng.random() >= p


class RedScheduler(DropTailScheduler):
    policy = Policy.RED

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        if self.rng is None:
            raise ConfigError("RED требует поток случайных чисел")
        cfg = self.config
        self.params = red_params(cfg.target_delay_ms / 1000.0, self.capacity_bps, cfg.red_max_p)
        self.w_q = cfg.red_w_q
        self.avg = 0.0
        self._idle_since: Optional[float] = 0.0
        self._mtu_time = self.tx_time(1500)

    def _update_avg(self, now: float) -> None:
        if self._idle_since is not None and not self.fifo.items:
            # очередь простаивала: avg затухает, как будто пришло m пустых отсчётов
            m = max(0.0, now - self._idle_since) / self._mtu_time
            self.avg *= (1.0 - self.w_q) ** m
        self.avg = (1.0 - self.w_q) * self.avg + self.w_q * self.fifo.bytes

    def _admit(self, pkt, now):
        self._update_avg(now)
        if not red_admit(self.avg, self.params, self.rng):
            return DropReason.RED
        return super()._admit(pkt, now)

    def _push(self, pkt, now):
        super()._push(pkt, now)
        self._idle_since = None

    def _pop(self, now):
        pkt = super()._pop(now)
        if pkt is not None and not self.fifo.items:
            self._idle_since = now
        return pkt


# -------------------- CoDel --------------------

class CodelAction(str, Enum):
    SERVE = "serve"
    DROP = "drop-head"


@dataclass(frozen=True)
class CodelParams:
    target_s: float = 0.005
    interval_s: float = 0.100
    mtu_bytes: int = 1500


@dataclass
class CodelState:
    first_above_time: Optional[float] = None
    dropping: bool = False
    drop_next: float = 0.0
    count: int = 0
    lastcount: int = 0


def _control_law(t: float, count: int, params: CodelParams) -> float:
    return t + params.interval_s / math.sqrt(count)


def _codel_ok_to_drop(sojourn: float, state: CodelState, now: float, backlog: int, params: CodelParams) -> bool:
    if sojourn < params.target_s or backlog <= params.mtu_bytes:
        state.first_above_time = None
        return False
    if state.first_above_time is None:
        state.first_above_time = now + params.interval_s
        return False
    return now >= state.first_above_time


def codel_control(head_sojourn: float, state: CodelState, now: float, backlog: int,
                  params: CodelParams = CodelParams()) -> CodelAction:
    """
    Закон управления CoDel для текущей головы очереди. Все времена в секундах:
    head_sojourn и now, как и target_s / interval_s в CodelParams (5 мс = 0.005).
    Вызывается повторно для следующей головы после каждого DROP.
    """
    ok = _codel_ok_to_drop(head_sojourn, state, now, backlog, params)
    if state.dropping:
        if not ok:
            state.dropping = False
            return CodelAction.SERVE
        if now >= state.drop_next:
            state.count += 1
            state.drop_next = _control_law(state.drop_next, state.count, params)
            return CodelAction.DROP
        return CodelAction.SERVE
    if ok:
        state.dropping = True
        delta = state.count - state.lastcount
        if delta > 1 and now - state.drop_next < 16 * params.interval_s:
            state.count = delta
        else:
            state.count = 1
        state.drop_next = _control_law(now, state.count, params)
        state.lastcount = state.count
        return CodelAction.DROP
    return CodelAction.SERVE


class CodelScheduler(DropTailScheduler):
    policy = Policy.CODEL

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        cfg = self.config
        self.params = CodelParams(target_s=cfg.target_delay_ms / 1000.0, interval_s=cfg.codel_interval_ms / 1000.0)
        self.state = CodelState()

    def _pop(self, now):
        while self.fifo.items:
            head = self.fifo.head()
            action = codel_control(now - head.enqueued, self.state, now, self.fifo.bytes, self.params)
            pkt = self._take_head()
            if action is CodelAction.DROP:
                self._drop_queued(pkt, DropReason.CODEL)
                continue
            return pkt
        self.state.first_above_time = None
        return None


# -------------------- SRR --------------------

class SrrScheduler(Scheduler):
    """
    Smoothed Round Robin с равными весами: обычный round-robin по активным
    потокам в пакетах. Общий буфер queue_cap, при переполнении хвостовой сброс.
    """
    policy = Policy.SRR

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.flows: Dict[str, FifoQueue] = {}
        self._active: Deque[str] = deque()
        self._bytes = 0
        self._cls_bytes = {c: 0 for c in TrafficClass}
        self._count = 0

    def _admit(self, pkt, now):
        return None if self._bytes + pkt.size <= self.queue_cap else DropReason.QUEUE_FULL

    def _push(self, pkt, now):
        q = self.flows.get(pkt.flow_id)
        if q is None:
            q = self.flows[pkt.flow_id] = FifoQueue()
        if not q.items:
            self._active.append(pkt.flow_id)
        q.push(pkt)
        self._bytes += pkt.size
        self._cls_bytes[pkt.cls] += pkt.size
        self._count += 1

    def srr_next(self) -> str:
        if not self._active:
            raise SimulationError("srr_next: нет непустых очередей потоков")
        return self._active[0]

    def _pop(self, now):
        if not self._active:
            return None
        fid = self.srr_next()
        self._active.popleft()
        q = self.flows[fid]
        pkt = q.pop()
        if q.items:
            self._active.append(fid)
        else:
            del self.flows[fid]
        self._bytes -= pkt.size
        self._cls_bytes[pkt.cls] -= pkt.size
        self._count -= 1
        return pkt

    def queued_bytes(self, cls=None):
        return self._bytes if cls is None else self._cls_bytes[cls]

    def __len__(self):
        return self._count


# -------------------- классовые очереди --------------------

class ClassQueueScheduler(Scheduler):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.queues: Dict[TrafficClass, FifoQueue] = {c: FifoQueue() for c in TrafficClass}

    def _admit(self, pkt, now):
        # классы делят один буфер точки доступа
        if self.queued_bytes() + pkt.size > self.queue_cap:
            return DropReason.QUEUE_FULL
        return None

    def _push(self, pkt, now):
        self.queues[pkt.cls].push(pkt)

    def queued_bytes(self, cls=None):
        if cls is None:
            return sum(q.bytes for q in self.queues.values())
        return self.queues[cls].bytes

    def __len__(self):
        return sum(len(q) for q in self.queues.values())


class PriorityScheduler(ClassQueueScheduler):
    """Строгий неприоритетно-вытесняющий PQ: home всегда выбирается первым."""
    policy = Policy.PQ

    def _pop(self, now):
        for cls in (TrafficClass.HOME, TrafficClass.GUEST):
            q = self.queues[cls]
            if q.items:
                return q.pop()
        return None


def upnq_admit(home_bytes: int, queue_cap: int, threshold: float, cls: TrafficClass) -> bool:
    """Гостевой пакет отбрасывается, когда доля home-байтов в queue_cap выше порога."""
    if not (0.0 < threshold <= 1.0):
        raise DomainError(f"Порог UPNQ должен лежать в (0, 1]: {threshold}")
    if cls is TrafficClass.HOME:
        return True
    return home_bytes / queue_cap <= threshold


class UpnqScheduler(PriorityScheduler):
    policy = Policy.UPNQ

    def _admit(self, pkt, now):
        home = self.queues[TrafficClass.HOME].bytes
        if not upnq_admit(home, self.queue_cap, self.config.upnq_threshold, pkt.cls):
            return DropReason.UPNQ
        return super()._admit(pkt, now)


# -------------------- WFQ (CBQ и HPSS в wfq-режиме) --------------------

def wfq_select(heads: Mapping[TrafficClass, float]) -> TrafficClass:
    """Класс с минимальным виртуальным временем окончания; при равенстве home."""
    if not heads:
        raise SimulationError("wfq_select: нет классов с очередью")
    order = {TrafficClass.HOME: 0, TrafficClass.GUEST: 1}
    return min(heads, key=lambda c: (heads[c], order[c]))


class WfqScheduler(ClassQueueScheduler):
    """Self-clocked WFQ над двумя FIFO: F = max(V, F_last[c]) + size / w[c]."""
    policy = Policy.CBQ

    def __init__(self, *args, weights: Optional[Mapping[TrafficClass, float]] = None, **kwargs):
        super().__init__(*args, **kwargs)
        self.weights = dict(weights or self.config.cbq_weights)
        total = sum(self.weights.values())
        if abs(total - 1.0) > 1e-9 or any(not (0.0 < w < 1.0) for w in self.weights.values()):
            raise ConfigError(f"Веса классов должны лежать в (0, 1) и давать в сумме 1: {self.weights}")
        self.virtual_time = 0.0
        self._last_finish = {c: 0.0 for c in TrafficClass}
        self._finish: Dict[TrafficClass, Deque[float]] = {c: deque() for c in TrafficClass}

    def _push(self, pkt, now):
        c = pkt.cls
        f = max(self.virtual_time, self._last_finish[c]) + pkt.size / self.weights[c]
        self._last_finish[c] = f
        self._finish[c].append(f)
        super()._push(pkt, now)

    def _pop(self, now):
        heads = {c: self._finish[c][0] for c in TrafficClass if self.queues[c].items}
        if not heads:
            return None
        cls = wfq_select(heads)
        self.virtual_time = self._finish[cls].popleft()
        return self.queues[cls].pop()


class CbqScheduler(WfqScheduler):
    policy = Policy.CBQ


# -------------------- HPSS --------------------

def hpss_select_mode(capacity_up_mbps: float, threshold_mbps: float) -> HpssMode:
    if threshold_mbps <= 0:
        raise DomainError(f"Порог HPSS должен быть > 0: {threshold_mbps}")
    return HpssMode.WFQ if capacity_up_mbps >= threshold_mbps else HpssMode.PQ


def hpss_guest_share(capacity_up_mbps: float, threshold_mbps: float = 2.0, pct_per_mbps: float = 0.5) -> float:
    """Доля аплинка (в процентах) под гостей в wfq-режиме: 0.5% на каждый Мбит/с."""
    if hpss_select_mode(capacity_up_mbps, threshold_mbps) is not HpssMode.WFQ:
        raise SimulationError(
            f"hpss_guest_share вызван в pq-режиме (аплинк {capacity_up_mbps} < {threshold_mbps} Мбит/с)"
        )
    return pct_per_mbps * capacity_up_mbps


class HomeDelayTracker:
    """
    Скользящее окно задержек home-пакетов: (время, задержка, доля от гостевой блокировки)
    плюс отложенная нагрузка гостей: время передачи принятых, но не отправленных гостевых пакетов.
    """
    def __init__(self, window_s: float = 1.0):
        self.window_s = window_s
        self._samples: Deque[Tuple[float, float, float]] = deque()
        self._sum_delay = 0.0
        self._sum_guest = 0.0
        self.pending_guest_s = 0.0

    def _purge(self, now: float) -> None:
        horizon = now - self.window_s
        while self._samples and self._samples[0][0] < horizon:
            _, d, g = self._samples.popleft()
            self._sum_delay -= d
            self._sum_guest -= g
        if not self._samples:
            self._sum_delay = self._sum_guest = 0.0

    def record_home(self, now: float, qdelay: float, guest_delay: float) -> None:
        self._purge(now)
        g = min(max(guest_delay, 0.0), qdelay)
        self._samples.append((now, qdelay, g))
        self._sum_delay += qdelay
        self._sum_guest += g

    def add_guest(self, tx_s: float) -> None:
        self.pending_guest_s += tx_s

    def release_guest(self, tx_s: float) -> None:
        self.pending_guest_s = max(0.0, self.pending_guest_s - tx_s)

    def home_count(self, now: float) -> int:
        self._purge(now)
        return len(self._samples)

    def mean_with_guest(self, now: float) -> float:
        n = self.home_count(now)
        return self._sum_delay / n if n else 0.0

    def mean_without_guest(self, now: float) -> float:
        n = self.home_count(now)
        return (self._sum_delay - self._sum_guest) / n if n else 0.0

    def projected_impact(self, now: float, extra_s: float = 0.0) -> float:
        n = self.home_count(now)
        if n == 0:
            return 0.0
        return (self._sum_guest + self.pending_guest_s + extra_s) / n


def hpss_pq_admit(tracker: HomeDelayTracker, target_impact_s: float, guest_tx_s: float, now: float) -> bool:
    """Принять гостя, если прогноз добавки к средней задержке home <= цели."""
    if tracker.home_count(now) == 0:
        return True
    return tracker.projected_impact(now, guest_tx_s) <= target_impact_s


class HpssPqScheduler(PriorityScheduler):
    policy = Policy.HPSS
    mode = HpssMode.PQ

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.target_s = self.config.hpss_target_impact_ms / 1000.0
        self.tracker = HomeDelayTracker(self.config.hpss_window_s)

    def _admit(self, pkt, now):
        if pkt.cls is TrafficClass.HOME:
            pkt.blocked = self.guest_residual(now)
        elif not hpss_pq_admit(self.tracker, self.target_s, self.tx_time(pkt.size), now):
            return DropReason.HPSS
        return super()._admit(pkt, now)

    def _push(self, pkt, now):
        super()._push(pkt, now)
        if pkt.cls is TrafficClass.GUEST:
            self.tracker.add_guest(self.tx_time(pkt.size))

    def _on_dequeue(self, pkt, now):
        if pkt.cls is TrafficClass.HOME:
            self.tracker.record_home(now, pkt.dequeued - pkt.enqueued, pkt.blocked)
        else:
            self.tracker.release_guest(self.tx_time(pkt.size))


class HpssWfqScheduler(WfqScheduler):
    policy = Policy.HPSS
    mode = HpssMode.WFQ


# -------------------- фабрика --------------------

_SIMPLE = {
    Policy.DROPTAIL: DropTailScheduler,
    Policy.RED: RedScheduler,
    Policy.CODEL: CodelScheduler,
    Policy.SRR: SrrScheduler,
    Policy.PQ: PriorityScheduler,
    Policy.UPNQ: UpnqScheduler,
    Policy.CBQ: CbqScheduler,
}


def hpss_weights(config: SchedulerConfig, capacity_up_mbps: float) -> Dict[TrafficClass, float]:
    share = config.hpss_guest_share_pct
    if share is None:
        share = hpss_guest_share(capacity_up_mbps, config.hpss_capacity_threshold_mbps, config.hpss_share_pct_per_mbps)
    guest = share / 100.0
    return {TrafficClass.HOME: 1.0 - guest, TrafficClass.GUEST: guest}


def build_scheduler(config: SchedulerConfig, capacity_bps: float,
                    rng: Optional[np.random.Generator] = None) -> Scheduler:
    if config.policy is Policy.HPSS:
        capacity_mbps = capacity_bps / 1e6
        mode = hpss_select_mode(capacity_mbps, config.hpss_capacity_threshold_mbps)
        if mode is HpssMode.WFQ:
            return HpssWfqScheduler(config, capacity_bps, rng, weights=hpss_weights(config, capacity_mbps))
        return HpssPqScheduler(config, capacity_bps, rng)
    return _SIMPLE[config.policy](config, capacity_bps, rng)
