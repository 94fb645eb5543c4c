# test_metrics.py
import json
import math

import pytest

from core.errors import DomainError, UndefinedImpactError
from core.metrics import (
    ClassReport,
    ImpactReport,
    RunReport,
    ValidationMetrics,
    aggregate,
    bin_lengths,
    delay_impact,
    impact_report,
    throughput_impact,
    window_rates,
)
from core.schedulers import TrafficClass
from core.transport import FlowRecord


def _report(seed=1, home_served=100_000, guest_served=0, guest_dropped=0, home_qdelay_ms=1.0,
            per_app=None, duration_s=10.0, bin_s=1.0, guest_delivered=()):
    bins = int(round(duration_s / bin_s))
    home = ClassReport(generated_bytes=home_served, served_bytes=home_served, mean_qdelay_ms=home_qdelay_ms,
                       served_bins=[home_served // bins] * bins)
    guest = ClassReport(generated_bytes=guest_served + guest_dropped, served_bytes=guest_served,
                        dropped_bytes=guest_dropped, served_bins=[guest_served // bins] * bins)
    return RunReport(
        duration_s=duration_s,
        bin_s=bin_s,
        seed=seed,
        policy="DropTail",
        ap_profile="AP8",
        classes={"home": home, "guest": guest},
        per_app_served_bytes=per_app if per_app is not None else {"home-0-cbr-video": home_served},
        flows=[FlowRecord(f"guest-p3/{i}", TrafficClass.GUEST, 0.0, d, 1.0, 3, delivered=d)
               for i, d in enumerate(guest_delivered)],
        validation=ValidationMetrics(0, 0, 0.0, 0.0, 0.0),
    )


# -------------------- бины --------------------

BIN_CASES = [
    ("ровно", 1.0, 0.1, 10, 0.1),
    ("короткий хвост", 1.05, 0.1, 11, 0.05),
    ("короче бина", 0.05, 0.1, 1, 0.05),
]


@pytest.mark.parametrize("label,duration,bin_s,count,last", BIN_CASES, ids=[c[0] for c in BIN_CASES])
def test_bin_lengths(label, duration, bin_s, count, last):
    lengths = bin_lengths(duration, bin_s)
    assert len(lengths) == count
    assert lengths[-1] == pytest.approx(last)
    assert math.fsum(lengths) == pytest.approx(duration)


def test_window_rates_one_second_windows():
    assert window_rates([1000] * 20, 0.1, 2.0) == pytest.approx([10.0, 10.0])
    # неполное последнее окно делится на свою длину
    assert window_rates([1000] * 15, 0.1, 1.5) == pytest.approx([10.0, 10.0])


def test_report_throughputs():
    r = _report(home_served=100_000, duration_s=10.0, bin_s=1.0)
    assert r.avg_throughput("home") == pytest.approx(10.0)
    assert r.throughput_series("home") == pytest.approx([10.0] * 10)
    assert r.max_throughput("home") == pytest.approx(10.0)
    assert r.app_throughput("home-0-cbr-video") == pytest.approx(10.0)
    assert r.app_throughput("missing") == 0.0


def test_class_report_conservation():
    assert ClassReport(generated_bytes=10, served_bytes=5, dropped_bytes=3, resident_bytes=2).conserved()
    assert not ClassReport(generated_bytes=10, served_bytes=5).conserved()


def test_to_json_canonical():
    r = _report()
    text = r.to_json()
    assert text == _report().to_json()
    assert json.loads(text)["classes"]["home"]["served_bytes"] == 100_000
    assert ", " not in text


# -------------------- влияние --------------------

THROUGHPUT_IMPACT = [
    ("потеря", 100.0, 90.0, 10.0),
    ("выигрыш", 100.0, 110.0, -10.0),
    ("без изменений", 62.5, 62.5, 0.0),
]


@pytest.mark.parametrize("label,base,treat,expected", THROUGHPUT_IMPACT, ids=[c[0] for c in THROUGHPUT_IMPACT])
def test_throughput_impact(label, base, treat, expected):
    assert throughput_impact(base, treat) == pytest.approx(expected)


def test_throughput_impact_undefined_at_zero_baseline():
    with pytest.raises(UndefinedImpactError):
        throughput_impact(0.0, 5.0)


def test_delay_impact_is_difference():
    assert delay_impact(2.0, 5.5) == pytest.approx(3.5)
    assert delay_impact(5.0, 2.0) == pytest.approx(-3.0)


def test_impact_report_fields():
    base = _report(home_served=100_000, home_qdelay_ms=1.0,
                   per_app={"home-0-cbr-video": 60_000, "home-1-ftp-elephant": 40_000})
    treat = _report(home_served=80_000, guest_served=30_000, guest_dropped=5_000, home_qdelay_ms=4.5,
                    guest_delivered=(15_000, 10_000),
                    per_app={"home-0-cbr-video": 60_000, "home-1-ftp-elephant": 20_000, "guest-p3": 30_000})
    imp = impact_report(base, treat)
    # повторно переданные байты в goodput не входят
    assert imp.guest_avg_throughput == pytest.approx(2.5)
    assert imp.guest_wire_throughput == pytest.approx(3.0)
    assert imp.home_throughput_impact == pytest.approx(20.0)
    assert imp.guest_dropped == pytest.approx(5.0)
    assert imp.home_qdelay_impact == pytest.approx(3.5)
    assert imp.per_app_impact == {"home-0-cbr-video": pytest.approx(0.0), "home-1-ftp-elephant": pytest.approx(50.0)}


def test_impact_report_idle_home_app_is_undefined():
    base = _report(per_app={"home-0-cbr-video": 100_000, "home-2-web-browsing": 0})
    imp = impact_report(base, _report(per_app={"home-0-cbr-video": 100_000}))
    assert imp.per_app_impact["home-2-web-browsing"] is None


def test_impact_report_requires_same_seed():
    with pytest.raises(DomainError):
        impact_report(_report(seed=1), _report(seed=2))


def test_impact_report_zero_home_baseline():
    with pytest.raises(UndefinedImpactError):
        impact_report(_report(home_served=0), _report(home_served=0))


# -------------------- агрегирование --------------------

def _impact(v):
    return ImpactReport(v, v, v, v)


def test_aggregate_mean_and_ci():
    agg = aggregate([_impact(1.0), _impact(3.0)])
    for name in ImpactReport.FIELDS:
        stat = agg[name]
        assert stat.mean == pytest.approx(2.0)
        # s = sqrt(2), n = 2
        assert stat.half_width == pytest.approx(1.96)
        assert (stat.low, stat.high) == (pytest.approx(0.04), pytest.approx(3.96))
        assert stat.n == 2


def test_aggregate_constant_runs_zero_width():
    agg = aggregate([_impact(5.0)] * 4)
    assert agg["guest_dropped"].half_width == 0.0


def test_aggregate_needs_two():
    with pytest.raises(DomainError):
        aggregate([_impact(1.0)])
