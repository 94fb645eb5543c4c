# core/experiment.py
"""
Эксперименты поверх движка: пары baseline/treatment с одинаковым seed,
развёртка по политикам x профилям AP x полосам нагрузки, стенд validate
и подгонка распределений по трассе потоков.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from core.apmodel import AccessPointProfile, preset
from core.defaults import load_defaults
from core.distributions import AUTO_FAMILY, MIN_FIT_SAMPLES, DistSpec, Family, GofReport, fit, gof, pp_points
from core.engine import GuestLoad, Scenario, resolve_gamma, run
from core.errors import ConfigError, InsufficientDataError
from core.metrics import ImpactReport, RunReport, ValidationMetrics, aggregate, impact_report
from core.schedulers import Policy, SchedulerConfig, TrafficClass
from core.sim_logging import logger
from core.traffic import GuestProfile, read_trace, trace_frame, write_trace

CSV_COLUMNS = [
    "run_id", "policy", "ap_profile", "load_band",
    "guest_thr_kBps", "home_thr_impact_pct", "guest_dropped_kB", "home_qdelay_impact_ms",
    "guest_thr_ci95", "home_thr_impact_ci95", "guest_dropped_ci95", "home_qdelay_impact_ci95",
]
_VALUE_FIELDS = ImpactReport.FIELDS


def _fmt(x: Optional[float]) -> str:
    if x is None:
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    v = round(float(x), 6)
    return f"{v + 0.0:.6f}"   # без "-0.000000"


@dataclass(frozen=True)
class ExperimentRow:
    run_id: str
    policy: str
    ap_profile: str
    load_band: str
    values: Tuple[float, ...]
    ci95: Tuple[Optional[float], ...] = (None, None, None, None)

    def as_record(self) -> Dict[str, str]:
        rec = {"run_id": self.run_id, "policy": self.policy, "ap_profile": self.ap_profile, "load_band": self.load_band}
        for col, v in zip(CSV_COLUMNS[4:8], self.values):
            rec[col] = _fmt(v)
        for col, v in zip(CSV_COLUMNS[8:], self.ci95):
            rec[col] = _fmt(v)
        return rec


def rows_to_csv(rows: Sequence[ExperimentRow]) -> str:
    buf = io.StringIO()
    pd.DataFrame([r.as_record() for r in rows], columns=CSV_COLUMNS).to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


# -------------------- пары прогонов --------------------

def prepare(scenario: Scenario) -> Scenario:
    """Зафиксировать gamma (калибровка один раз по базовому seed)."""
    gamma = resolve_gamma(scenario)
    return scenario.with_gamma(gamma) if gamma is not None else scenario


def run_pair(scenario: Scenario, run_index: int) -> Tuple[ImpactReport, RunReport]:
    s = scenario.with_seed(scenario.seed + run_index)
    baseline = run(s.without_guests())
    treatment = run(s) if s.guest.enabled else baseline
    return impact_report(baseline, treatment), treatment


def _pair_task(args: Tuple[Scenario, int]) -> ImpactReport:
    scenario, r = args
    return run_pair(scenario, r)[0]


def _cell_rows(scenario: Scenario, impacts: Sequence[ImpactReport]) -> List[ExperimentRow]:
    policy = scenario.scheduler.policy.value
    ap = scenario.ap_profile.name
    band = scenario.guest.band_label
    rows = [
        ExperimentRow(str(r), policy, ap, band, tuple(getattr(imp, f) for f in _VALUE_FIELDS))
        for r, imp in enumerate(impacts)
    ]
    if len(impacts) >= 2:
        agg = aggregate(impacts)
        rows.append(ExperimentRow("mean", policy, ap, band,
                                  tuple(agg[f].mean for f in _VALUE_FIELDS),
                                  tuple(agg[f].half_width for f in _VALUE_FIELDS)))
    else:
        rows.append(replace(rows[0], run_id="mean"))
    for row in rows:
        logger.write({"kind": "experiment_row", **row.as_record(), "seed": scenario.seed})
    return rows


def _map(tasks: List[Tuple[Scenario, int]], jobs: int) -> List[ImpactReport]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_pair_task(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        # map сохраняет порядок задач, порядок завершения не важен
        return list(pool.map(_pair_task, tasks, chunksize=1))


def run_experiment(scenario: Scenario, runs: int = 1, jobs: int = 1,
                   trace_path: Optional[str | Path] = None) -> List[ExperimentRow]:
    """
    Для каждого r: baseline (гости выключены) и treatment с seed + r; строка CSV на прогон
    и строка агрегата (run_id = mean).
    """
    if runs < 1:
        raise ConfigError(f"runs должен быть >= 1: {runs}")
    scenario.validate()
    prepared = prepare(scenario)
    impacts: List[ImpactReport] = []
    if trace_path is not None:
        imp, treatment = run_pair(prepared, 0)
        guest_flows = [f for f in treatment.flows if f.cls is TrafficClass.GUEST]
        write_trace(trace_frame(guest_flows), trace_path)
        impacts.append(imp)
    start = len(impacts)
    impacts.extend(_map([(prepared, r) for r in range(start, runs)], jobs))
    return _cell_rows(prepared, impacts)


def sweep_scenarios(base: Scenario) -> List[Scenario]:
    """Сетка политики x профили AP x полосы нагрузки в детерминированном порядке."""
    sw = load_defaults().sweep
    gammas: Dict[Tuple[float, float], float] = {}
    out: List[Scenario] = []
    for policy in Policy:
        for name in sw.presets:
            ap = preset(name)
            sched = replace(base.scheduler, policy=policy, queue_cap=ap.queue_up_bytes)
            for band in sw.load_bands_kbps:
                guest = GuestLoad(band_kbps=band, profiles=base.guest.profiles or (1, 2, 3, 4))
                s = replace(base, ap_profile=ap, scheduler=sched, guest=guest)
                if band not in gammas:
                    gammas[band] = resolve_gamma(s)
                out.append(s.with_gamma(gammas[band]))
    return out


def sweep(base: Scenario, runs: int = 1, jobs: int = 1) -> List[ExperimentRow]:
    if runs < 1:
        raise ConfigError(f"runs должен быть >= 1: {runs}")
    cells = sweep_scenarios(base)
    tasks = [(cell, r) for cell in cells for r in range(runs)]
    impacts = _map(tasks, jobs)
    rows: List[ExperimentRow] = []
    for i, cell in enumerate(cells):
        rows.extend(_cell_rows(cell, impacts[i * runs:(i + 1) * runs]))
    return rows


# -------------------- validate --------------------

@dataclass(frozen=True)
class ValidationRow:
    metric: str
    reference: float
    independent: float
    diff_pct: float


def validation_scenario(profile_id: int, seed: int, duration_s: Optional[float] = None) -> Scenario:
    """Два узла: источник профиля -> одна FIFO (DropTail) -> приёмник."""
    GuestProfile.from_table(profile_id)
    v = load_defaults().validate
    ap = AccessPointProfile("validate", capacity_dw=v.capacity_mbps, capacity_up=v.capacity_mbps,
                            queue_dw=v.queue_kb, queue_up=v.queue_kb)
    return Scenario(
        ap_profile=ap,
        scheduler=SchedulerConfig.from_mapping({"policy": Policy.DROPTAIL}, ap.queue_up_bytes),
        home_apps=(),
        guest=GuestLoad(profiles=(profile_id,), gamma=1.0),
        duration_s=float(duration_s if duration_s is not None else v.duration_s),
        seed=seed,
        base_rtt_s=v.base_rtt_ms / 1000.0,
        bin_s=load_defaults().run.bin_ms / 1000.0,
    )


_STATISTICS = {"mean": np.mean, "median": np.median}


def _relative_diff_pct(reference: float, independent: float) -> float:
    if reference == 0.0:
        return 0.0 if independent == 0.0 else math.inf
    return 100.0 * abs(independent - reference) / abs(reference)


def validate(profile_id: int, runs: int = 1, seed: int = 42, duration_s: Optional[float] = None,
             jobs: int = 1, statistic: Optional[str] = None) -> List[ValidationRow]:
    """
    Сравнить пять метрик по runs прогонам с эталонными seed и по runs прогонам
    с независимыми seed; при runs = 1 это разница одиночных прогонов.

    statistic: mean (среднее по прогонам) или median. У профилей 1, 2 и 4 размер потока
    с тяжёлым хвостом, и среднее по 100 часовым прогонам всё ещё определяют редкие
    гигантские потоки; медиана по прогонам сходится обычным образом.
    """
    if profile_id not in (1, 2, 3, 4):
        raise ConfigError(f"profile_id должен быть 1..4, получено {profile_id}")
    if runs < 1:
        raise ConfigError(f"runs должен быть >= 1: {runs}")
    v = load_defaults().validate
    statistic = statistic or v.statistic
    center = _STATISTICS.get(statistic)
    if center is None:
        raise ConfigError(f"statistic должен быть одним из {sorted(_STATISTICS)}: {statistic!r}")
    offset = v.independent_seed_offset
    seeds = [seed + r for r in range(runs)] + [seed + offset + r for r in range(runs)]
    scenarios = [validation_scenario(profile_id, s, duration_s) for s in seeds]
    metrics = _validation_map(scenarios, jobs)
    ref, ind = metrics[:runs], metrics[runs:]
    rows = []
    for name in ValidationMetrics.METRICS:
        a = float(center([getattr(m, name) for m in ref]))
        b = float(center([getattr(m, name) for m in ind]))
        rows.append(ValidationRow(name, a, b, _relative_diff_pct(a, b)))
    logger.write({"kind": "validate_done", "profile_id": profile_id, "runs": runs, "seed": seed,
                  "statistic": statistic,
                  "diff_pct": {r.metric: r.diff_pct for r in rows}})
    return rows


def _validation_task(scenario: Scenario) -> ValidationMetrics:
    return run(scenario).validation


def _validation_map(scenarios: List[Scenario], jobs: int) -> List[ValidationMetrics]:
    if jobs <= 1:
        return [_validation_task(s) for s in scenarios]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_validation_task, scenarios, chunksize=1))


def validation_csv(rows: Sequence[ValidationRow]) -> str:
    buf = io.StringIO()
    pd.DataFrame(
        [{"metric": r.metric, "reference": _fmt(r.reference), "independent": _fmt(r.independent),
          "diff_pct": _fmt(r.diff_pct)} for r in rows],
        columns=["metric", "reference", "independent", "diff_pct"],
    ).to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


# -------------------- fit по трассе --------------------

CHARACTERISTICS = ("inter_arrival", "size", "duration")


@dataclass(frozen=True)
class FitResult:
    characteristic: str
    spec: DistSpec
    gof: GofReport
    n: int
    pp: Tuple[Tuple[float, float], ...]


def trace_samples(trace: pd.DataFrame) -> Dict[str, np.ndarray]:
    """Выборки характеристик: интервалы между соседними стартами, размеры, длительности."""
    starts = np.sort(trace["start_s"].to_numpy(dtype=float))
    gaps = np.diff(starts)
    return {
        "inter_arrival": gaps[gaps > 0.0],
        "size": trace["bytes"].to_numpy(dtype=float),
        "duration": trace["duration_s"].to_numpy(dtype=float),
    }


def fit_trace(trace: pd.DataFrame | str | Path, family: str = "auto") -> List[FitResult]:
    df = trace if isinstance(trace, pd.DataFrame) else read_trace(trace)
    if len(df) < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"Для подгонки нужно минимум {MIN_FIT_SAMPLES} потоков, в трассе {len(df)}")
    samples = trace_samples(df)
    results = []
    for name in CHARACTERISTICS:
        fam = AUTO_FAMILY[name] if family == "auto" else Family(family)
        x = samples[name]
        spec = fit(fam, x)
        results.append(FitResult(name, spec, gof(x, spec), int(x.size), tuple(pp_points(x, spec))))
    logger.write({"kind": "fit_done", "family": family, "flows": len(df),
                  "params": {r.characteristic: {"family": r.spec.family.value, **r.spec.params()} for r in results}})
    return results


def fit_csv(results: Sequence[FitResult]) -> str:
    cols = ["characteristic", "family", "n", "alpha", "beta", "kappa", "sigma", "mu", "ks", "ad", "chi2", "chi2_bins"]
    recs = []
    for r in results:
        p = r.spec.params()
        recs.append({
            "characteristic": r.characteristic,
            "family": r.spec.family.value,
            "n": r.n,
            **{k: (f"{p[k]:.9g}" if k in p else "") for k in ("alpha", "beta", "kappa", "sigma", "mu")},
            "ks": f"{r.gof.ks:.6f}",
            "ad": f"{r.gof.ad:.6f}",
            "chi2": f"{r.gof.chi2:.6f}",
            "chi2_bins": r.gof.chi2_bins,
        })
    buf = io.StringIO()
    pd.DataFrame(recs, columns=cols).to_csv(buf, index=False, lineterminator="\n")
    return buf.getvalue()


def write_pp_csv(results: Sequence[FitResult], path: str | Path) -> None:
    recs = [
        {"characteristic": r.characteristic, "empirical": f"{e:.6f}", "model": f"{m:.6f}"}
        for r in results for e, m in r.pp
    ]
    pd.DataFrame(recs, columns=["characteristic", "empirical", "model"]).to_csv(path, index=False, lineterminator="\n")
