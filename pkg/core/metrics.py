# core/metrics.py
"""
Отчёт одного прогона и сравнение baseline (без гостей) с treatment (с гостями):
пропускная способность гостей, влияние на домашнюю пропускную способность,
отброшенные гостевые данные и влияние на домашнюю задержку в очереди.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from core.errors import DomainError, UndefinedImpactError
from core.transport import FlowRecord

Z95 = 1.96


def bin_lengths(duration_s: float, bin_s: float) -> List[float]:
    """Длины интервалов измерения; последний может быть короче bin_s."""
    n = max(1, int(math.ceil(duration_s / bin_s - 1e-9)))
    return [bin_s] * (n - 1) + [duration_s - (n - 1) * bin_s]


def window_rates(bin_bytes: Sequence[int], bin_s: float, duration_s: float, window_s: float = 1.0) -> List[float]:
    """Скорость (KBps) в неперекрывающихся окнах window_s, собранных из бинов."""
    lengths = bin_lengths(duration_s, bin_s)
    per = max(1, int(round(window_s / bin_s)))
    out = []
    for i in range(0, len(bin_bytes), per):
        span = sum(lengths[i:i + per])
        out.append(sum(bin_bytes[i:i + per]) / 1000.0 / span)
    return out


@dataclass
class ClassReport:
    generated_bytes: int = 0
    generated_packets: int = 0
    served_bytes: int = 0
    served_packets: int = 0
    dropped_bytes: int = 0
    dropped_packets: int = 0
    resident_bytes: int = 0
    received_bytes: int = 0
    received_packets: int = 0
    drop_reasons: Dict[str, int] = field(default_factory=dict)
    mean_qdelay_ms: float = 0.0
    qdelay_samples: int = 0
    served_bins: List[int] = field(default_factory=list)      # байты за бин
    received_bins: List[int] = field(default_factory=list)

    def conserved(self) -> bool:
        return self.generated_bytes == self.served_bytes + self.dropped_bytes + self.resident_bytes


@dataclass
class ValidationMetrics:
    generated_packets: int
    received_packets: int
    avg_throughput_kbps: float
    max_throughput_kbps: float
    mean_delay_ms: float

    METRICS = ("generated_packets", "received_packets", "avg_throughput_kbps",
               "max_throughput_kbps", "mean_delay_ms")


@dataclass
class RunReport:
    duration_s: float
    bin_s: float
    seed: int
    policy: str
    ap_profile: str
    classes: Dict[str, ClassReport]
    per_app_served_bytes: Dict[str, int]
    flows: List[FlowRecord]
    validation: ValidationMetrics
    events: int = 0
    gamma: Optional[float] = None

    def cls(self, name: str) -> ClassReport:
        return self.classes[name]

    def avg_throughput(self, name: str) -> float:
        """Средняя обслуженная пропускная способность класса, KBps."""
        return self.classes[name].served_bytes / 1000.0 / self.duration_s

    def goodput(self, name: str) -> float:
        """Полезная пропускная способность класса, KBps: уникальные байты данных, доставленные по порядку."""
        return sum(f.delivered for f in self.flows if f.cls == name) / 1000.0 / self.duration_s

    def throughput_series(self, name: str) -> List[float]:
        lengths = bin_lengths(self.duration_s, self.bin_s)
        return [b / 1000.0 / l for b, l in zip(self.classes[name].served_bins, lengths)]

    def max_throughput(self, name: str, window_s: float = 1.0) -> float:
        rates = window_rates(self.classes[name].served_bins, self.bin_s, self.duration_s, window_s)
        return max(rates) if rates else 0.0

    def app_throughput(self, label: str) -> float:
        return self.per_app_served_bytes.get(label, 0) / 1000.0 / self.duration_s

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        for f in d["flows"]:
            f["cls"] = f["cls"].value if hasattr(f["cls"], "value") else f["cls"]
        return d

    def to_json(self) -> str:
        """Канонический JSON: одинаковый сценарий -> одинаковые байты."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False)


# -------------------- влияние --------------------

def throughput_impact(baseline: float, treatment: float) -> float:
    """Процент потери домашней пропускной способности; может быть отрицательным."""
    if baseline <= 0:
        raise UndefinedImpactError(f"Влияние не определено при нулевой базовой пропускной способности ({baseline})")
    return 100.0 * (baseline - treatment) / baseline


def delay_impact(baseline_ms: float, treatment_ms: float) -> float:
    return treatment_ms - baseline_ms


@dataclass
class ImpactReport:
    guest_avg_throughput: float        # KBps, goodput
    home_throughput_impact: float      # %
    guest_dropped: float               # KB за прогон
    home_qdelay_impact: float          # мс
    per_app_impact: Dict[str, Optional[float]] = field(default_factory=dict, compare=False)
    guest_wire_throughput: float = field(default=0.0, compare=False)   # KBps вместе с повторами

    FIELDS = ("guest_avg_throughput", "home_throughput_impact", "guest_dropped", "home_qdelay_impact")


def impact_report(baseline: RunReport, treatment: RunReport) -> ImpactReport:
    if baseline.seed != treatment.seed:
        raise DomainError(f"baseline и treatment должны иметь одинаковый seed ({baseline.seed} != {treatment.seed})")
    home_b, home_t = baseline.cls("home"), treatment.cls("home")
    guest = treatment.cls("guest")
    per_app: Dict[str, Optional[float]] = {}
    for label in sorted(baseline.per_app_served_bytes):
        if label.startswith("guest"):
            continue
        b = baseline.app_throughput(label)
        per_app[label] = throughput_impact(b, treatment.app_throughput(label)) if b > 0 else None
    return ImpactReport(
        guest_avg_throughput=treatment.goodput("guest"),
        home_throughput_impact=throughput_impact(baseline.avg_throughput("home"), treatment.avg_throughput("home")),
        guest_dropped=guest.dropped_bytes / 1000.0,
        home_qdelay_impact=delay_impact(home_b.mean_qdelay_ms, home_t.mean_qdelay_ms),
        per_app_impact=per_app,
        guest_wire_throughput=treatment.avg_throughput("guest"),
    )


@dataclass(frozen=True)
class AggregateStat:
    mean: float
    half_width: float
    n: int

    @property
    def low(self) -> float:
        return self.mean - self.half_width

    @property
    def high(self) -> float:
        return self.mean + self.half_width


def aggregate(reports: Sequence[ImpactReport]) -> Dict[str, AggregateStat]:
    """Среднее и 95% ДИ (нормальное приближение, 1.96 * s / sqrt(n)) по каждому полю."""
    n = len(reports)
    if n < 2:
        raise DomainError(f"Для агрегирования нужно минимум 2 отчёта, получено {n}")
    out: Dict[str, AggregateStat] = {}
    for name in ImpactReport.FIELDS:
        x = np.array([getattr(r, name) for r in reports], dtype=float)
        s = float(np.std(x, ddof=1))
        out[name] = AggregateStat(mean=float(np.mean(x)), half_width=Z95 * s / math.sqrt(n), n=n)
    return out
