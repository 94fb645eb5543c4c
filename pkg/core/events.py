# core/events.py
"""
Ядро дискретно-событийной симуляции: часы, очередь событий с детерминированным
порядком (time, seq) и независимые потоки случайных чисел.
"""
from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Tuple

import numpy as np

from core.errors import SimulationError


class EventKind(str, Enum):
    PACKET_ARRIVAL = "packet-arrival"
    SERVICE_COMPLETION = "service-completion"
    APP_TIMER = "app-timer"
    FLOW_START = "flow-start"
    MEASUREMENT_TICK = "measurement-tick"


@dataclass
class SimEvent:
    time: float
    kind: EventKind
    target: str
    action: Optional[Callable[[], None]] = field(default=None, repr=False, compare=False)
    seq: int = -1


class EventQueue:
    """Куча по (time, seq); seq монотонен, поэтому равные времена идут в порядке вставки."""
    def __init__(self):
        self._heap: List[Tuple[float, int, SimEvent]] = []
        self._seq = 0
        self.clock = 0.0

    def schedule(self, event: SimEvent) -> SimEvent:
        if event.time < self.clock:
            raise SimulationError(
                f"Событие {event.kind.value}/{event.target} в прошлом: t={event.time} < clock={self.clock}"
            )
        event.seq = self._seq
        self._seq += 1
        heapq.heappush(self._heap, (event.time, event.seq, event))
        return event

    def peek_time(self) -> Optional[float]:
        return self._heap[0][0] if self._heap else None

    def pop(self) -> SimEvent:
        _, _, event = heapq.heappop(self._heap)
        self.clock = event.time
        return event

    def __len__(self) -> int:
        return len(self._heap)


class Simulator:
    def __init__(self):
        self.queue = EventQueue()
        self.dispatched = 0
        self.last_dispatched: Optional[float] = None

    @property
    def now(self) -> float:
        return self.queue.clock

    def at(self, time: float, kind: EventKind, target: str, action: Callable[[], None]) -> SimEvent:
        return self.queue.schedule(SimEvent(time=time, kind=kind, target=target, action=action))

    def after(self, delay: float, kind: EventKind, target: str, action: Callable[[], None]) -> SimEvent:
        return self.at(self.now + delay, kind, target, action)

    def run(self, until: float) -> None:
        """Обработать все события с time < until (горизонт полуоткрыт) и выставить часы в until."""
        q = self.queue
        while q._heap and q._heap[0][0] < until:
            event = q.pop()
            if self.last_dispatched is not None and event.time < self.last_dispatched:
                raise SimulationError("Нарушена причинность: событие раньше предыдущего")
            self.last_dispatched = event.time
            self.dispatched += 1
            if event.action is not None:
                event.action()
        if until > q.clock:
            q.clock = until


class RngStream:
    """
    Поток случайных чисел для одного потребителя: (seed, stream_id) -> одна и та же
    последовательность на любой платформе (PCG64 + SeedSequence).
    """
    def __init__(self, seed: int, stream_id: str):
        if seed < 0 or seed >= 2 ** 64:
            raise SimulationError(f"seed должен быть 64-битным неотрицательным: {seed}")
        self.seed = int(seed)
        self.stream_id = stream_id
        digest = hashlib.sha256(stream_id.encode("utf-8")).digest()
        words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
        entropy = [self.seed & 0xFFFFFFFF, (self.seed >> 32) & 0xFFFFFFFF, *words]
        self.generator = np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))

    def random(self, size=None):
        return self.generator.random(size)

    def uniform(self) -> float:
        return float(self.generator.random())
