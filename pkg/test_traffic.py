# test_traffic.py
import math

import numpy as np
import pandas as pd
import pytest

from core.distributions import GUEST_PROFILES, gof, mean, quantile
from core.errors import CalibrationError, ConfigError, DomainError, InsufficientDataError
from core.events import RngStream
from core.experiment import trace_samples
from core.traffic import (
    TRACE_COLUMNS,
    AppKind,
    GuestProfile,
    HomeAppConfig,
    app_emit,
    calibrate_load,
    default_home_apps,
    generate_trace,
    next_guest_flow,
    offered_load,
    read_trace,
    write_trace,
)

U_SCALE = 1.0 - math.exp(-1.0)    # квантиль Weibull в точке beta


# -------------------- гостевые потоки --------------------

GUEST_DRAWS = [
    ("профиль 1", 1, 1.0, 10.4, 353, math.exp(1.03)),
    ("профиль 4", 4, 1.0, 9.58, 42, math.exp(1.97)),
    ("профиль 1, gamma 2", 1, 2.0, 0.2, 353, math.exp(1.03)),
]


@pytest.mark.parametrize("label,pid,gamma,start,size,duration", GUEST_DRAWS, ids=[c[0] for c in GUEST_DRAWS])
def test_next_guest_flow_forced_uniforms(label, pid, gamma, start, size, duration):
    now = 10.0 if pid == 1 and gamma == 1.0 else 0.0
    spec = next_guest_flow(GuestProfile.from_table(pid), None, now, gamma, uniforms=(U_SCALE, 0.0, 0.5))
    assert spec.start == pytest.approx(start)
    assert spec.size == size
    assert spec.duration == pytest.approx(duration)
    assert spec.profile_id == pid


def test_guest_profile_lookup():
    with pytest.raises(ConfigError):
        GuestProfile.from_table(5)
    p = GuestProfile.from_table(3)
    assert p.scaled(1.0) is p
    assert p.scaled(4.0).inter_arrival.beta == pytest.approx(0.19 / 4.0)
    assert p.scaled(4.0).size == p.size


def _trace_for(pid, flows=20_000, seed=3):
    horizon = flows * mean(GUEST_PROFILES[pid]["inter_arrival"])
    return generate_trace([pid], 1.0, horizon, seed)


@pytest.mark.parametrize("pid", sorted(GUEST_PROFILES))
def test_generated_characteristics_match_profile(pid):
    trace = _trace_for(pid)
    assert list(trace.columns) == TRACE_COLUMNS
    assert trace["start_s"].is_monotonic_increasing
    samples = trace_samples(trace)
    for name, x in samples.items():
        assert gof(x, GUEST_PROFILES[pid][name]).ks < 0.02, name


@pytest.mark.parametrize("pid", sorted(GUEST_PROFILES))
def test_mice_median(pid):
    sizes = _trace_for(pid)["bytes"].to_numpy()
    median = float(np.median(sizes))
    assert median < 5000
    assert median == pytest.approx(quantile(GUEST_PROFILES[pid]["size"], 0.5), rel=0.05)


def test_generate_trace_is_reproducible():
    a = generate_trace([1, 3], 2.0, 600.0, seed=9)
    b = generate_trace([1, 3], 2.0, 600.0, seed=9)
    pd.testing.assert_frame_equal(a, b)
    assert set(a["profile_id"]) == {1, 3}
    assert (a["start_s"] < 600.0).all()


# -------------------- нагрузка и калибровка --------------------

def test_profile_3_natural_load_in_low_band():
    assert 1.0 <= offered_load([3], 1.0, 3600.0, seed=42) <= 5.0


def test_offered_load_grows_with_gamma():
    low = offered_load([3], 1.0, 600.0, seed=1)
    high = offered_load([3], 4.0, 600.0, seed=1)
    assert high > low


def test_offered_load_errors():
    with pytest.raises(DomainError):
        offered_load([3], 1.0, 0.0, seed=1)
    with pytest.raises(ConfigError):
        offered_load([], 1.0, 60.0, seed=1)


def test_calibration_keeps_unit_gamma_when_inside():
    load = offered_load([3], 1.0, 600.0, seed=7)
    result = calibrate_load([3], (0.5 * load, 1.5 * load), seed=7, duration=600.0)
    assert result.gamma == 1.0
    assert result.iterations == 0
    assert result.load_kbps == pytest.approx(load)
    assert result.verify_load_kbps > 0.0


def test_calibration_bisects_to_double_load():
    load = offered_load([3], 1.0, 7200.0, seed=7)
    result = calibrate_load([3], (1.9 * load, 2.1 * load), seed=7, duration=7200.0)
    assert 1.6 <= result.gamma <= 2.5
    assert 1.9 * load <= result.load_kbps <= 2.1 * load
    assert result.iterations > 0


CALIBRATION_SIDES = [
    ("нагрузка выше", 1.5, 3.0, lambda g: g > 1.0),
    ("нагрузка ниже", 0.2, 0.6, lambda g: g < 1.0),
]


@pytest.mark.parametrize("label,lo,hi,side", CALIBRATION_SIDES, ids=[c[0] for c in CALIBRATION_SIDES])
def test_calibration_searches_one_side_of_unit_gamma(monkeypatch, label, lo, hi, side):
    import core.traffic as traffic

    load = offered_load([3], 1.0, 600.0, seed=7)
    gammas = []

    def counting(profiles, gamma, duration, seed):
        gammas.append(gamma)
        return offered_load(profiles, gamma, duration, seed)

    monkeypatch.setattr(traffic, "offered_load", counting)
    result = calibrate_load([3], (lo * load, hi * load), seed=7, duration=600.0)
    assert gammas[0] == 1.0
    # gamma = 1 не пересчитывается, все точки бисекции по одну сторону
    assert all(side(g) for g in gammas[1:])
    assert result.iterations == len(gammas) - 2


CALIBRATION_ERRORS = [
    ("пустая полоса", (0.0, 0.0)),
    ("перевёрнутая полоса", (5.0, 3.0)),
    ("недостижимая полоса", (1e6, 2e6)),
]


@pytest.mark.parametrize("label,band", CALIBRATION_ERRORS, ids=[c[0] for c in CALIBRATION_ERRORS])
def test_calibration_errors(label, band):
    with pytest.raises(CalibrationError):
        calibrate_load([3], band, seed=1, duration=60.0)


# -------------------- домашние приложения --------------------

def _emit_until(app, horizon, rng=None):
    packets, t = [], 0.0
    while t is not None and t < horizon - 1e-9:
        em = app_emit(app, t, rng)
        packets.extend(em.sizes)
        t = em.next_time
    return packets


EMIT_CASES = [
    ("cbr 1 с", HomeAppConfig.create("cbr-video"), 1.0, 50, 62_500),
    ("game всегда включён", HomeAppConfig.create("game-onoff"), 1.0, 20, 1600),
    ("game 1 с вкл / 1 с выкл", HomeAppConfig.create("game-onoff", on_s=1.0, off_s=1.0), 4.0, 40, 3200),
    ("ftp без датаграмм", HomeAppConfig.create("ftp-elephant"), 1.0, 0, 0),
]


@pytest.mark.parametrize("label,app,horizon,count,total", EMIT_CASES, ids=[c[0] for c in EMIT_CASES])
def test_app_emit_counts(label, app, horizon, count, total):
    packets = _emit_until(app, horizon)
    assert len(packets) == count
    assert sum(packets) == total


def test_game_off_phase_waits_for_next_cycle():
    app = HomeAppConfig.create("game-onoff", on_s=1.0, off_s=1.0)
    em = app_emit(app, 1.5)
    assert em.sizes == ()
    assert em.next_time == pytest.approx(2.0)


def test_web_needs_rng_and_emits_request():
    app = HomeAppConfig.create("web-browsing")
    with pytest.raises(DomainError):
        app_emit(app, 0.0)
    em = app_emit(app, 3.0, RngStream(1, "home/web"))
    assert em.sizes == (350,)
    assert em.next_time > 3.0


def test_web_median_gap():
    app = HomeAppConfig.create("web-browsing")
    rng = RngStream(5, "home/web")
    gaps = [app_emit(app, 0.0, rng).next_time for _ in range(20_000)]
    assert float(np.median(gaps)) == pytest.approx(4.0, rel=0.05)


APP_CONFIG_ERRORS = [
    ("неизвестный ключ", "cbr-video", {"bitrate": 1}),
    ("нулевой период", "cbr-video", {"period_ms": 0}),
    ("отрицательный off", "game-onoff", {"off_s": -1.0}),
    ("бесконечный размер", "web-browsing", {"request_bytes": float("inf")}),
    ("неизвестное приложение", "voip", {}),
]


@pytest.mark.parametrize("label,kind,overrides", APP_CONFIG_ERRORS, ids=[c[0] for c in APP_CONFIG_ERRORS])
def test_home_app_config_errors(label, kind, overrides):
    with pytest.raises(ConfigError):
        HomeAppConfig.create(kind, **overrides)


def test_default_home_apps():
    apps = default_home_apps()
    assert [a.kind for a in apps] == list(AppKind)
    assert [a.reliable for a in apps] == [True, False, False, False]
    assert apps[1]["packet_bytes"] == 1250.0


# -------------------- файл трассы --------------------

def test_trace_csv_round_trip(tmp_path):
    trace = generate_trace([1, 2], 1.0, 3600.0, seed=4)
    path = tmp_path / "trace.csv"
    write_trace(trace, path)
    back = read_trace(path)
    assert list(back.columns) == TRACE_COLUMNS
    assert len(back) == len(trace)
    assert np.allclose(back["start_s"], trace["start_s"], rtol=1e-14, atol=0.0)
    assert (back["bytes"] == trace["bytes"]).all()


def test_read_trace_sorts_by_start(tmp_path):
    path = tmp_path / "t.csv"
    path.write_text("start_s,bytes,duration_s\n5.0,100,1.0\n1.0,200,2.0\n3.0,300,0.5\n")
    df = read_trace(path)
    assert df["start_s"].tolist() == [1.0, 3.0, 5.0]
    assert df["bytes"].tolist() == [200, 300, 100]


READ_ERRORS = [
    ("пустой файл", "", InsufficientDataError),
    ("только заголовок", "start_s,bytes,duration_s\n", InsufficientDataError),
    ("нет колонки", "start_s,bytes\n1.0,100\n", DomainError),
]


@pytest.mark.parametrize("label,text,exc", READ_ERRORS, ids=[c[0] for c in READ_ERRORS])
def test_read_trace_errors(tmp_path, label, text, exc):
    path = tmp_path / "t.csv"
    path.write_text(text)
    with pytest.raises(exc):
        read_trace(path)


def test_read_trace_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        read_trace(tmp_path / "nope.csv")
