# core/transport.py
"""
Упрощённый оконный надёжный транспорт (Reno-подобный) для ftp-слона и гостевых потоков.

transport_on_ack / transport_on_loss: чистые функции над неизменяемым TransportState.
ReliableFlow: отправитель и получатель одного потока поверх сети движка.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import TYPE_CHECKING, Callable, Dict, Optional, Tuple

from core.defaults import TransportDefaults, load_defaults
from core.errors import DomainError
from core.events import EventKind
from core.schedulers import Packet, TrafficClass

if TYPE_CHECKING:
    from core.engine import Network

SRTT_GAIN = 1.0 / 8.0
RTTVAR_GAIN = 1.0 / 4.0
DUPACK_THRESHOLD = 3


class Mode(str, Enum):
    SLOW_START = "slow-start"
    CONGESTION_AVOIDANCE = "congestion-avoidance"
    RECOVERY = "recovery"


class LossKind(str, Enum):
    TRIPLE_DUPACK = "triple-dupack"
    TIMEOUT = "timeout"


@dataclass(frozen=True)
class TransportState:
    cwnd: float                      # байты
    ssthresh: float                  # байты
    mss: int = 1460
    srtt: Optional[float] = None     # с
    rttvar: Optional[float] = None   # с
    rto: float = 1.0                 # с
    mode: Mode = Mode.SLOW_START
    unacked: Tuple[int, int] = (0, 0)
    min_rto: float = 0.2
    max_rto: float = 60.0

    def __post_init__(self):
        if self.cwnd < self.mss:
            raise DomainError(f"cwnd < 1 MSS: {self.cwnd}")
        if self.ssthresh < 2 * self.mss:
            raise DomainError(f"ssthresh < 2 MSS: {self.ssthresh}")

    @classmethod
    def initial(cls, params: Optional[TransportDefaults] = None) -> "TransportState":
        p = params or load_defaults().transport
        return cls(
            cwnd=float(p.init_cwnd_mss * p.mss_bytes),
            ssthresh=float(p.init_ssthresh_bytes),
            mss=p.mss_bytes,
            rto=p.init_rto_s,
            min_rto=p.min_rto_s,
            max_rto=p.max_rto_s,
        )


def transport_on_ack(state: TransportState, acked: int, rtt_sample: Optional[float] = None) -> TransportState:
    """Рост окна по новому подтверждению и сглаживание RTT (1/8, 1/4)."""
    if acked <= 0:
        raise DomainError(f"acked должен быть > 0: {acked}")
    cwnd, mode = state.cwnd, state.mode
    if mode is Mode.SLOW_START:
        cwnd += acked
        if cwnd >= state.ssthresh:
            mode = Mode.CONGESTION_AVOIDANCE
    elif mode is Mode.CONGESTION_AVOIDANCE:
        cwnd += state.mss * state.mss / cwnd

    srtt, rttvar, rto = state.srtt, state.rttvar, state.rto
    if rtt_sample is not None:
        if srtt is None:
            srtt, rttvar = rtt_sample, rtt_sample / 2.0
        else:
            rttvar = (1.0 - RTTVAR_GAIN) * rttvar + RTTVAR_GAIN * abs(srtt - rtt_sample)
            srtt = (1.0 - SRTT_GAIN) * srtt + SRTT_GAIN * rtt_sample
        rto = min(max(srtt + 4.0 * rttvar, state.min_rto), state.max_rto)
    return replace(state, cwnd=cwnd, mode=mode, srtt=srtt, rttvar=rttvar, rto=rto)


def transport_on_loss(state: TransportState, kind: LossKind | str) -> TransportState:
    k = LossKind(kind)
    ssthresh = max(state.cwnd / 2.0, 2.0 * state.mss)
    if k is LossKind.TRIPLE_DUPACK:
        return replace(state, ssthresh=ssthresh, cwnd=ssthresh, mode=Mode.RECOVERY)
    return replace(
        state,
        ssthresh=ssthresh,
        cwnd=float(state.mss),
        mode=Mode.SLOW_START,
        rto=min(2.0 * state.rto, state.max_rto),
    )


@dataclass
class FlowRecord:
    flow_id: str
    cls: TrafficClass
    start: float
    size: Optional[int]              # None: бесконечный поток
    duration: Optional[float]
    profile_id: Optional[int] = None
    completed: Optional[float] = None
    delivered: int = 0
    sent_bytes: int = 0
    retransmits: int = 0
    timeouts: int = 0


class ReliableFlow:
    """
    Один надёжный поток аплинка. Данные приложения выпускаются темпом S/D
    (граница сегмента становится доступной в момент start + D * end / S);
    size=None: бесконечно нагруженный источник.
    """
    def __init__(
        self,
        net: "Network",
        flow_id: str,
        cls: TrafficClass,
        start: float,
        size: Optional[int] = None,
        duration: Optional[float] = None,
        profile_id: Optional[int] = None,
        params: Optional[TransportDefaults] = None,
        on_complete: Optional[Callable[["ReliableFlow"], None]] = None,
    ):
        if size is not None and size < 1:
            raise DomainError(f"Размер потока должен быть >= 1 байта: {size}")
        if duration is not None and duration <= 0:
            raise DomainError(f"Длительность потока должна быть > 0: {duration}")
        self.net = net
        self.params = params or load_defaults().transport
        self.state = TransportState.initial(self.params)
        self.mss = self.params.mss_bytes
        self.record = FlowRecord(flow_id, cls, start, size, duration, profile_id)
        self.on_complete = on_complete

        self.snd_una = 0
        self.snd_nxt = 0
        self.high_sent = 0
        self.recover = 0
        self.dupacks = 0
        self._released = math.inf if size is None else 0
        self._sent_at: Dict[int, float] = {}   # конец сегмента -> время отправки (только без ретрансмиссий)
        self._rto_deadline: Optional[float] = None
        self._timer_pending = False
        self.done = False

        # получатель
        self.rcv_nxt = 0
        self._ooo: Dict[int, int] = {}

    @property
    def flow_id(self) -> str:
        return self.record.flow_id

    @property
    def size(self) -> Optional[int]:
        return self.record.size

    # ---------- отправитель ----------

    def start(self) -> None:
        sim = self.net.sim
        sim.at(self.record.start, EventKind.FLOW_START, self.flow_id, self.begin)

    def begin(self) -> None:
        if self.size is not None:
            self._schedule_release(self._segment_end(0))
        self._try_send()

    def _segment_end(self, offset: int) -> int:
        end = offset + self.mss
        return end if self.size is None else min(end, self.size)

    def _release_time(self, end: int) -> float:
        r = self.record
        if not r.duration:
            return r.start
        return r.start + r.duration * end / r.size

    def _schedule_release(self, end: int) -> None:
        t = max(self._release_time(end), self.net.sim.now)
        self.net.sim.at(t, EventKind.APP_TIMER, self.flow_id, lambda: self._on_release(end))

    def _on_release(self, end: int) -> None:
        self._released = max(self._released, end)
        if end < self.size:
            self._schedule_release(self._segment_end(end))
        if not self.done:
            self._try_send()

    def _try_send(self) -> None:
        while True:
            seglen = self._segment_end(self.snd_nxt) - self.snd_nxt
            if seglen <= 0:
                break
            if self.snd_nxt + seglen > self._released:
                break
            inflight = self.snd_nxt - self.snd_una
            if inflight > 0 and inflight + seglen > self.state.cwnd:
                break
            self._send_segment(self.snd_nxt, seglen)
            self.snd_nxt += seglen
        self.state = replace(self.state, unacked=(self.snd_una, self.snd_nxt))
        if self.snd_nxt > self.snd_una and self._rto_deadline is None:
            self._restart_timer()

    def _send_segment(self, seq: int, seglen: int) -> None:
        now = self.net.sim.now
        end = seq + seglen
        retx = end <= self.high_sent
        if retx:
            self._sent_at.pop(end, None)
            self.record.retransmits += 1
        else:
            self._sent_at[end] = now
            self.high_sent = end
        self.record.sent_bytes += seglen
        pkt = Packet(
            flow_id=self.flow_id,
            cls=self.record.cls,
            size=seglen + self.params.header_bytes,
            created=now,
            seq=seq,
            payload=seglen,
            retx=retx,
        )
        self.net.transmit(pkt)

    def _retransmit_head(self) -> None:
        seglen = self._segment_end(self.snd_una) - self.snd_una
        if seglen > 0:
            self._send_segment(self.snd_una, seglen)

    def on_ack(self, ack: int) -> None:
        if self.done:
            return
        now = self.net.sim.now
        if ack > self.snd_una:
            acked = ack - self.snd_una
            sent = self._sent_at.get(ack)
            rtt = now - sent if sent is not None else None
            for end in [e for e in self._sent_at if e <= ack]:
                del self._sent_at[end]

            partial = False
            if self.state.mode is Mode.RECOVERY:
                if ack >= self.recover:
                    self.state = replace(self.state, mode=Mode.CONGESTION_AVOIDANCE)
                else:
                    partial = True
            self.state = transport_on_ack(self.state, acked, rtt)
            self.snd_una = ack
            if self.snd_nxt < ack:
                self.snd_nxt = ack
            self.dupacks = 0

            if self.size is not None and self.snd_una >= self.size:
                self._finish(now)
                return
            if partial:
                self._retransmit_head()
            if self.snd_nxt > self.snd_una:
                self._restart_timer()
            else:
                self._rto_deadline = None
            self._try_send()
        elif ack == self.snd_una and self.snd_nxt > self.snd_una:
            self.dupacks += 1
            if self.dupacks == DUPACK_THRESHOLD and self.state.mode is not Mode.RECOVERY:
                self.state = transport_on_loss(self.state, LossKind.TRIPLE_DUPACK)
                self.recover = self.snd_nxt
                self._retransmit_head()
                self._restart_timer()

    def _finish(self, now: float) -> None:
        self.done = True
        self.record.completed = now
        self._rto_deadline = None
        self.state = replace(self.state, unacked=(self.snd_una, self.snd_una))
        if self.on_complete is not None:
            self.on_complete(self)

    # ---------- таймер RTO (одно отложенное событие, дедлайн сдвигается) ----------

    def _restart_timer(self) -> None:
        sim = self.net.sim
        self._rto_deadline = sim.now + self.state.rto
        if not self._timer_pending:
            self._timer_pending = True
            sim.at(self._rto_deadline, EventKind.APP_TIMER, self.flow_id, self._on_timer)

    def _on_timer(self) -> None:
        self._timer_pending = False
        if self.done or self._rto_deadline is None:
            return
        sim = self.net.sim
        if sim.now < self._rto_deadline:
            self._timer_pending = True
            sim.at(self._rto_deadline, EventKind.APP_TIMER, self.flow_id, self._on_timer)
            return
        self.record.timeouts += 1
        self.state = transport_on_loss(self.state, LossKind.TIMEOUT)
        self.snd_nxt = self.snd_una          # go-back-N
        self.dupacks = 0
        self.recover = self.snd_una
        self._rto_deadline = None
        self._try_send()

    # ---------- получатель ----------

    def on_data(self, pkt: Packet) -> int:
        """Приём сегмента на сервере; возвращает кумулятивное подтверждение."""
        seq, end = pkt.seq, pkt.seq + pkt.payload
        if seq <= self.rcv_nxt < end:
            self.rcv_nxt = end
            while self.rcv_nxt in self._ooo:
                self.rcv_nxt = self._ooo.pop(self.rcv_nxt)
        elif seq > self.rcv_nxt:
            self._ooo[seq] = max(end, self._ooo.get(seq, end))
        self.record.delivered = self.rcv_nxt
        return self.rcv_nxt
