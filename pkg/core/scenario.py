# core/scenario.py
"""
Файл сценария (YAML) -> проверенный Scenario.

Читается через ruamel.yaml: узлы помнят номера строк, поэтому любая ошибка
сообщает строку, где стоит неверный ключ или значение.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple, TypeVar

from ruamel.yaml import YAML
from ruamel.yaml.error import MarkedYAMLError

from core.apmodel import profile_from_config
from core.defaults import load_defaults
from core.engine import GuestLoad, Scenario
from core.errors import ConfigError, DomainError, ScenarioError
from core.schedulers import Policy, SchedulerConfig
from core.traffic import AppKind, HomeAppConfig, default_home_apps

T = TypeVar("T")

SECTIONS = ("access_point", "scheduler", "home_traffic", "guest_traffic", "run")
REQUIRED = ("access_point", "scheduler")
AP_KEYS = ("preset", "name", "capacity_up_mbps", "capacity_dw_mbps", "queue_up_kb", "queue_dw_kb")
SCHEDULER_KEYS = tuple(f.name for f in fields(SchedulerConfig) if f.name != "queue_cap")
HOME_KEYS = ("apps",)
GUEST_KEYS = ("load_band_kbps", "profiles", "gamma")
RUN_KEYS = ("duration_s", "seed", "base_rtt_ms", "bin_ms")


def _yaml() -> YAML:
    y = YAML()   # round-trip: CommentedMap хранит позиции
    y.allow_duplicate_keys = False
    return y


def _line(node: Any, key: Any = None) -> Optional[int]:
    lc = getattr(node, "lc", None)
    if lc is None:
        return None
    try:
        if key is not None:
            return lc.key(key)[0] + 1
        return lc.line + 1
    except (KeyError, TypeError, AttributeError):
        return None


def _value_line(node: Any, key: Any) -> Optional[int]:
    lc = getattr(node, "lc", None)
    try:
        return lc.value(key)[0] + 1
    except (KeyError, TypeError, AttributeError):
        return _line(node, key)


def _item_line(seq: Any, index: int) -> Optional[int]:
    try:
        return seq.lc.item(index)[0] + 1
    except (AttributeError, KeyError, IndexError, TypeError):
        return None


def _guard(line: Optional[int], fn: Callable[[], T]) -> T:
    try:
        return fn()
    except ScenarioError:
        raise
    except (ConfigError, DomainError, TypeError, ValueError) as e:
        raise ScenarioError(str(e), line) from e


def _mapping(node: Any, section: str, line: Optional[int]) -> Dict[str, Any]:
    if node is None:
        return {}
    if not isinstance(node, dict):
        raise ScenarioError(f"Секция {section} должна быть словарём", line)
    return node


def _check_keys(node: Dict[str, Any], allowed: Iterable[str], section: str) -> None:
    allowed = tuple(allowed)
    for key in node:
        if key not in allowed:
            raise ScenarioError(
                f"Неизвестный ключ {section}.{key}. Допустимо: {', '.join(allowed)}", _line(node, key)
            )


def _number(node: Dict[str, Any], key: str, section: str) -> float:
    v = node[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(f"{section}.{key} должен быть числом (получено {v!r})", _value_line(node, key))
    return float(v)


def _plain(v: Any) -> Any:
    # CommentedMap/CommentedSeq -> обычные dict/list, скаляры ruamel -> int/float/str
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, bool) or v is None:
        return v
    if isinstance(v, int):
        return int(v)
    if isinstance(v, float):
        return float(v)
    if isinstance(v, str):
        return str(v)
    return v


# -------------------- секции --------------------

def _home_apps(node: Dict[str, Any]) -> Tuple[HomeAppConfig, ...]:
    if "apps" not in node:
        return tuple(default_home_apps())
    apps = node["apps"]
    if not isinstance(apps, list):
        raise ScenarioError("home_traffic.apps должен быть списком", _value_line(node, "apps"))
    out: List[HomeAppConfig] = []
    for i, item in enumerate(apps):
        line = _item_line(apps, i)
        if isinstance(item, str):
            out.append(_guard(line, lambda: HomeAppConfig.create(AppKind.parse(item))))
            continue
        if not isinstance(item, dict) or "kind" not in item:
            raise ScenarioError("Элемент apps: строка с видом приложения или словарь с ключом kind", line)
        params = {k: _plain(v) for k, v in item.items() if k != "kind"}
        for k, v in params.items():
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ScenarioError(f"apps[{i}].{k} должен быть числом (получено {v!r})", _value_line(item, k))
        out.append(_guard(_line(item), lambda: HomeAppConfig.create(AppKind.parse(item["kind"]), **params)))
    return tuple(out)


def _guest_load(node: Dict[str, Any]) -> GuestLoad:
    band = None
    if "load_band_kbps" in node:
        raw = node["load_band_kbps"]
        line = _value_line(node, "load_band_kbps")
        if (not isinstance(raw, list) or len(raw) != 2
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in raw)):
            raise ScenarioError(f"load_band_kbps должен быть парой чисел [lo, hi] (получено {_plain(raw)!r})", line)
        band = (float(raw[0]), float(raw[1]))
    profiles: Tuple[int, ...] = (1, 2, 3, 4)
    if "profiles" in node:
        raw = node["profiles"]
        line = _value_line(node, "profiles")
        if not isinstance(raw, list) or any(isinstance(x, bool) or not isinstance(x, int) for x in raw):
            raise ScenarioError("guest_traffic.profiles должен быть списком номеров 1..4", line)
        profiles = tuple(int(x) for x in raw)
    gamma = _number(node, "gamma", "guest_traffic") if node.get("gamma") is not None else None
    return _guard(_line(node), lambda: GuestLoad(band_kbps=band, profiles=profiles, gamma=gamma))


# -------------------- публичное API --------------------

def parse_scenario_text(text: str, source: str = "<scenario>", seed: Optional[int] = None,
                        duration_s: Optional[float] = None) -> Scenario:
    try:
        data = _yaml().load(text)
    except MarkedYAMLError as e:
        mark = e.problem_mark or e.context_mark
        line = mark.line + 1 if mark is not None else None
        raise ScenarioError(f"{source}: некорректный YAML: {e.problem or e}", line) from e
    if data is None:
        raise ScenarioError(f"{source}: пустой файл сценария")
    if not isinstance(data, dict):
        raise ScenarioError(f"{source}: ожидается словарь верхнего уровня", 1)
    _check_keys(data, SECTIONS, "scenario")
    for name in REQUIRED:
        if name not in data:
            raise ScenarioError(f"{source}: нет обязательной секции {name}")

    ap_node = _mapping(data["access_point"], "access_point", _line(data, "access_point"))
    _check_keys(ap_node, AP_KEYS, "access_point")
    for key in AP_KEYS[2:]:
        if key in ap_node:
            _number(ap_node, key, "access_point")
    ap = _guard(_line(data, "access_point"), lambda: profile_from_config(_plain(ap_node)))

    sched_node = _mapping(data["scheduler"], "scheduler", _line(data, "scheduler"))
    _check_keys(sched_node, SCHEDULER_KEYS, "scheduler")
    if "policy" not in sched_node:
        raise ScenarioError("В секции scheduler обязателен ключ policy", _line(data, "scheduler"))
    policy = _guard(_value_line(sched_node, "policy"), lambda: Policy.parse(sched_node["policy"]))
    for key in sched_node:
        if key == "policy" or (key == "hpss_guest_share_pct" and sched_node[key] is None):
            continue
        _number(sched_node, key, "scheduler")
    sched_data = _plain(sched_node)
    # ошибка конкретного параметра указывает на его строку
    for key in sched_node:
        if key == "policy":
            continue
        probe = {"policy": policy, key: sched_data[key]}
        _guard(_value_line(sched_node, key), lambda: SchedulerConfig.from_mapping(probe, ap.queue_up_bytes))
    scheduler = _guard(_line(data, "scheduler"), lambda: SchedulerConfig.from_mapping(sched_data, ap.queue_up_bytes))

    home_node = _mapping(data.get("home_traffic"), "home_traffic", _line(data, "home_traffic"))
    _check_keys(home_node, HOME_KEYS, "home_traffic")
    home_apps = _home_apps(home_node)

    guest_node = _mapping(data.get("guest_traffic"), "guest_traffic", _line(data, "guest_traffic"))
    _check_keys(guest_node, GUEST_KEYS, "guest_traffic")
    guest = _guest_load(guest_node)

    run_node = _mapping(data.get("run"), "run", _line(data, "run"))
    _check_keys(run_node, RUN_KEYS, "run")
    rd = load_defaults().run
    run_vals = {k: _number(run_node, k, "run") for k in run_node}
    run_seed = run_node.get("seed", rd.seed)
    if isinstance(run_seed, bool) or not isinstance(run_seed, int):
        raise ScenarioError(f"run.seed должен быть целым (получено {run_seed!r})", _value_line(run_node, "seed"))

    scenario = Scenario(
        ap_profile=ap,
        scheduler=scheduler,
        home_apps=home_apps,
        guest=guest,
        duration_s=float(duration_s if duration_s is not None else run_vals.get("duration_s", rd.duration_s)),
        seed=int(seed if seed is not None else run_seed),
        base_rtt_s=run_vals.get("base_rtt_ms", rd.base_rtt_ms) / 1000.0,
        bin_s=run_vals.get("bin_ms", rd.bin_ms) / 1000.0,
    )
    run_line = _line(data, "run")
    _guard(run_line, scenario.validate)
    return scenario


def parse_scenario(path: str | Path, seed: Optional[int] = None, duration_s: Optional[float] = None) -> Scenario:
    """
    Прочитать и проверить файл сценария. seed/duration_s переопределяют секцию run
    (флаги CLI и FAIRSHARE_SEED).
    """
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise ScenarioError(f"Файл сценария не найден: {p}")
    except OSError as e:
        raise ScenarioError(f"Не удалось прочитать {p}: {e}")
    return parse_scenario_text(text, source=str(p), seed=seed, duration_s=duration_s)
