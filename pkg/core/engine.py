# core/engine.py
"""
Прогон сценария: источники -> планировщик аплинка (единственное узкое место) -> сервер.
Подтверждения возвращаются через base_rtt/2 без очередей, даунлинк узким местом не бывает.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Tuple

from core.apmodel import AccessPointProfile
from core.defaults import load_defaults
from core.errors import ConfigError, SimulationError
from core.events import EventKind, RngStream, Simulator
from core.metrics import ClassReport, RunReport, ValidationMetrics, window_rates
from core.schedulers import Packet, Scheduler, SchedulerConfig, TrafficClass, build_scheduler
from core.sim_logging import logger
from core.traffic import (
    GuestProfile,
    GuestSource,
    HomeAppConfig,
    HomeSource,
    calibrate_load,
    default_home_apps,
    guest_stream_id,
)
from core.transport import ReliableFlow


@dataclass(frozen=True)
class GuestLoad:
    """Гостевая нагрузка: полоса KBps (калибруется gamma) или явный набор профилей."""
    band_kbps: Optional[Tuple[float, float]] = None
    profiles: Tuple[int, ...] = (1, 2, 3, 4)
    gamma: Optional[float] = None

    def __post_init__(self):
        if self.band_kbps is not None:
            lo, hi = self.band_kbps
            if lo < 0 or hi < lo:
                raise ConfigError(f"Некорректная полоса нагрузки: {self.band_kbps}")
        if self.gamma is not None and not self.gamma > 0:
            raise ConfigError(f"gamma должна быть > 0: {self.gamma}")
        for pid in self.profiles:
            GuestProfile.from_table(pid)

    @property
    def enabled(self) -> bool:
        return bool(self.profiles) and self.band_kbps != (0.0, 0.0)

    @property
    def band_label(self) -> str:
        if not self.enabled:
            return "0-0"
        if self.band_kbps is None:
            return "natural" if self.gamma is None else f"gamma={self.gamma:g}"
        return f"{self.band_kbps[0]:g}-{self.band_kbps[1]:g}"


@dataclass(frozen=True)
class Scenario:
    ap_profile: AccessPointProfile
    scheduler: SchedulerConfig
    home_apps: Tuple[HomeAppConfig, ...] = field(default_factory=lambda: tuple(default_home_apps()))
    guest: GuestLoad = field(default_factory=GuestLoad)
    duration_s: float = 600.0
    seed: int = 42
    base_rtt_s: float = 0.040
    bin_s: float = 0.100

    @classmethod
    def create(cls, ap_profile: AccessPointProfile, policy: str, **kwargs) -> "Scenario":
        """Сценарий с планировщиком по умолчанию для политики; queue_cap = queue_up профиля."""
        sched = SchedulerConfig.from_mapping({"policy": policy, **kwargs.pop("scheduler_params", {})},
                                             ap_profile.queue_up_bytes)
        run_defaults = load_defaults().run
        kwargs.setdefault("duration_s", run_defaults.duration_s)
        kwargs.setdefault("seed", run_defaults.seed)
        kwargs.setdefault("base_rtt_s", run_defaults.base_rtt_ms / 1000.0)
        kwargs.setdefault("bin_s", run_defaults.bin_ms / 1000.0)
        return cls(ap_profile=ap_profile, scheduler=sched, **kwargs)

    def validate(self) -> None:
        if not (self.duration_s > 0 and math.isfinite(self.duration_s)):
            raise ConfigError(f"Длительность прогона должна быть > 0: {self.duration_s}")
        if not self.bin_s > 0:
            raise ConfigError(f"Интервал измерений должен быть > 0: {self.bin_s}")
        if self.base_rtt_s < 0:
            raise ConfigError(f"base_rtt не может быть отрицательным: {self.base_rtt_s}")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError(f"seed должен быть 64-битным неотрицательным: {self.seed}")
        if self.scheduler.queue_cap != self.ap_profile.queue_up_bytes:
            raise ConfigError(
                f"Размер очереди планировщика {self.scheduler.queue_cap} B не совпадает "
                f"с queue_up профиля {self.ap_profile.name} ({self.ap_profile.queue_up_bytes} B)"
            )
        for app in self.home_apps:
            app.validate()

    def with_seed(self, seed: int) -> "Scenario":
        return replace(self, seed=seed)

    def without_guests(self) -> "Scenario":
        return replace(self, guest=replace(self.guest, band_kbps=(0.0, 0.0), gamma=None))

    def with_gamma(self, gamma: Optional[float]) -> "Scenario":
        return replace(self, guest=replace(self.guest, gamma=gamma))


def resolve_gamma(scenario: Scenario) -> Optional[float]:
    g = scenario.guest
    if not g.enabled:
        return None
    if g.gamma is not None:
        return g.gamma
    if g.band_kbps is None:
        return 1.0
    return calibrate_load(g.profiles, g.band_kbps, scenario.seed, scenario.duration_s).gamma


def app_label(flow_id: str) -> str:
    return flow_id.split("/", 1)[0]


class Network:
    """Аплинк с планировщиком, сервер и обратный путь подтверждений."""
    def __init__(self, sim: Simulator, scheduler: Scheduler, one_way_s: float, horizon: float,
                 service_log: Optional[List[Tuple[float, float, Packet]]] = None):
        self.sim = sim
        self.scheduler = scheduler
        self.one_way_s = one_way_s
        self.horizon = horizon
        self.flows: Dict[str, ReliableFlow] = {}
        self.per_app_served: Dict[str, int] = {}
        self.received_bytes: Dict[TrafficClass, int] = {c: 0 for c in TrafficClass}
        self.received_packets: Dict[TrafficClass, int] = {c: 0 for c in TrafficClass}
        self.delay_sum = 0.0
        self.busy = False
        self.in_service: Optional[Packet] = None
        self.service_log = service_log

    def register_flow(self, flow: ReliableFlow) -> None:
        self.flows[flow.flow_id] = flow

    def transmit(self, pkt: Packet) -> None:
        self.scheduler.enqueue(pkt, self.sim.now)
        if not self.busy:
            self._start_service()

    def _start_service(self) -> None:
        now = self.sim.now
        pkt = self.scheduler.dequeue(now)
        if pkt is None:
            self.busy = False
            return
        self.busy = True
        self.in_service = pkt
        label = app_label(pkt.flow_id)
        self.per_app_served[label] = self.per_app_served.get(label, 0) + pkt.size
        end = now + self.scheduler.tx_time(pkt.size)
        if self.service_log is not None:
            self.service_log.append((now, end, pkt))
        self.sim.at(end, EventKind.SERVICE_COMPLETION, "uplink", self._complete)

    def _complete(self) -> None:
        pkt = self.in_service
        self.in_service = None
        self.sim.after(self.one_way_s, EventKind.PACKET_ARRIVAL, "server", lambda: self._arrive(pkt))
        self._start_service()

    def _arrive(self, pkt: Packet) -> None:
        now = self.sim.now
        self.received_bytes[pkt.cls] += pkt.size
        self.received_packets[pkt.cls] += 1
        self.delay_sum += now - pkt.created
        flow = self.flows.get(pkt.flow_id) if pkt.payload > 0 else None
        if flow is not None:
            ack = flow.on_data(pkt)
            self.sim.after(self.one_way_s, EventKind.PACKET_ARRIVAL, pkt.flow_id, lambda: flow.on_ack(ack))


class _Meter:
    """Кумулятивные счётчики на каждом тике -> байты за бин."""
    def __init__(self, net: Network):
        self.net = net
        self.served: Dict[TrafficClass, List[int]] = {c: [] for c in TrafficClass}
        self.received: Dict[TrafficClass, List[int]] = {c: [] for c in TrafficClass}
        self._last_served = {c: 0 for c in TrafficClass}
        self._last_received = {c: 0 for c in TrafficClass}

    def snapshot(self) -> None:
        stats = self.net.scheduler.stats.per
        for c in TrafficClass:
            s, r = stats[c].served_bytes, self.net.received_bytes[c]
            self.served[c].append(s - self._last_served[c])
            self.received[c].append(r - self._last_received[c])
            self._last_served[c], self._last_received[c] = s, r

    def schedule_ticks(self, bin_s: float, horizon: float) -> None:
        sim = self.net.sim

        def tick(k: int) -> None:
            self.snapshot()
            nxt = (k + 1) * bin_s
            if nxt < horizon - 1e-9:
                sim.at(nxt, EventKind.MEASUREMENT_TICK, "meter", lambda: tick(k + 1))

        if bin_s < horizon - 1e-9:
            sim.at(bin_s, EventKind.MEASUREMENT_TICK, "meter", lambda: tick(1))


def run(scenario: Scenario, service_log: Optional[List[Tuple[float, float, Packet]]] = None) -> RunReport:
    """Один детерминированный прогон: отчёт есть чистая функция сценария."""
    scenario.validate()
    gamma = resolve_gamma(scenario)
    ap = scenario.ap_profile
    seed = scenario.seed

    sim = Simulator()
    sched_rng = RngStream(seed, f"sched/{scenario.scheduler.policy.value}")
    scheduler = build_scheduler(scenario.scheduler, ap.capacity_up_bps, sched_rng.generator)
    net = Network(sim, scheduler, scenario.base_rtt_s / 2.0, scenario.duration_s, service_log)

    sources = []
    for i, app in enumerate(scenario.home_apps):
        label = f"home-{i}-{app.kind.value}"
        sources.append(HomeSource(net, app, label, RngStream(seed, f"home/{i}-{app.kind.value}")))
    guests: List[GuestSource] = []
    if gamma is not None:
        for pid in scenario.guest.profiles:
            guests.append(GuestSource(net, GuestProfile.from_table(pid), gamma, RngStream(seed, guest_stream_id(pid))))

    logger.write({
        "kind": "run_start",
        "policy": scenario.scheduler.policy.value,
        "ap_profile": ap.name,
        "seed": seed,
        "duration_s": scenario.duration_s,
        "gamma": gamma,
        "home_apps": [a.kind.value for a in scenario.home_apps],
    })

    meter = _Meter(net)
    meter.schedule_ticks(scenario.bin_s, scenario.duration_s)
    for src in [*sources, *guests]:
        src.start()
    sim.run(until=scenario.duration_s)
    meter.snapshot()

    report = _assemble(scenario, net, meter, sim, gamma)
    logger.write({
        "kind": "run_end",
        "policy": report.policy,
        "ap_profile": report.ap_profile,
        "seed": seed,
        "clock": sim.now,
        "events": sim.dispatched,
        "classes": {name: {"served_bytes": c.served_bytes, "dropped_bytes": c.dropped_bytes,
                           "resident_bytes": c.resident_bytes} for name, c in report.classes.items()},
    })
    return report


def _assemble(scenario: Scenario, net: Network, meter: _Meter, sim: Simulator, gamma: Optional[float]) -> RunReport:
    sched = net.scheduler
    resident = {c: sched.queued_bytes(c) for c in TrafficClass}
    if not sched.stats.check_conservation(resident):
        # offered = served + dropped + resident по каждому классу
        raise SimulationError(f"Нарушен баланс байтов планировщика {sched.policy.value}: остаток {resident}")
    classes: Dict[str, ClassReport] = {}
    for c in TrafficClass:
        st = sched.stats.per[c]
        classes[c.value] = ClassReport(
            generated_bytes=st.offered_bytes,
            generated_packets=st.offered_packets,
            served_bytes=st.served_bytes,
            served_packets=st.served_packets,
            dropped_bytes=st.dropped_bytes,
            dropped_packets=st.dropped_packets,
            resident_bytes=resident[c],
            received_bytes=net.received_bytes[c],
            received_packets=net.received_packets[c],
            drop_reasons=dict(sorted(st.drop_reasons.items())),
            mean_qdelay_ms=st.mean_qdelay * 1000.0,
            qdelay_samples=len(st.qdelays),
            served_bins=meter.served[c],
            received_bins=meter.received[c],
        )

    duration = scenario.duration_s
    received_bins = [sum(v) for v in zip(*(meter.received[c] for c in TrafficClass))]
    received_total = sum(net.received_bytes.values())
    received_pkts = sum(net.received_packets.values())
    rates = window_rates(received_bins, scenario.bin_s, duration, 1.0)
    validation = ValidationMetrics(
        generated_packets=sum(sched.stats.per[c].offered_packets for c in TrafficClass),
        received_packets=received_pkts,
        avg_throughput_kbps=received_total / 1000.0 / duration,
        max_throughput_kbps=max(rates) if rates else 0.0,
        mean_delay_ms=(net.delay_sum / received_pkts * 1000.0) if received_pkts else 0.0,
    )
    return RunReport(
        duration_s=duration,
        bin_s=scenario.bin_s,
        seed=scenario.seed,
        policy=scenario.scheduler.policy.value,
        ap_profile=scenario.ap_profile.name,
        classes=classes,
        per_app_served_bytes=dict(sorted(net.per_app_served.items())),
        flows=[f.record for f in net.flows.values()],
        validation=validation,
        events=sim.dispatched,
        gamma=gamma,
    )
