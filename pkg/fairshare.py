# fairshare.py (точка входа CLI: run | validate | fit)
import os
import sys
sys.path.append(os.path.dirname(__file__))

import argparse
from pathlib import Path
from typing import Optional, Sequence

from dotenv import find_dotenv, load_dotenv
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from core.errors import (
    CalibrationError,
    ConfigError,
    DegenerateFitError,
    FairshareError,
    InsufficientDataError,
    ScenarioError,
)
from core.sim_logging import logger

console = Console(stderr=True)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_FIT = 3
EXIT_CALIBRATION = 4


def exit_code_for(err: FairshareError) -> int:
    if isinstance(err, (ScenarioError, ConfigError)):
        return EXIT_USAGE
    if isinstance(err, (InsufficientDataError, DegenerateFitError)):
        return EXIT_FIT
    if isinstance(err, CalibrationError):
        return EXIT_CALIBRATION
    return EXIT_ERROR


def _u64(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается целое число: {text!r}")
    if v < 0 or v >= 2 ** 64:
        raise argparse.ArgumentTypeError(f"seed должен быть в [0, 2^64): {v}")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается целое число: {text!r}")
    if v < 1:
        raise argparse.ArgumentTypeError(f"значение должно быть >= 1: {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"ожидается число: {text!r}")
    if not v > 0:
        raise argparse.ArgumentTypeError(f"значение должно быть > 0: {v}")
    return v


def resolve_seed(flag: Optional[int]) -> Optional[int]:
    """--seed > FAIRSHARE_SEED > (сценарий) > 42."""
    if flag is not None:
        return flag
    env = os.environ.get("FAIRSHARE_SEED")
    if env:
        try:
            return _u64(env.strip())
        except argparse.ArgumentTypeError as e:
            raise ConfigError(f"FAIRSHARE_SEED: {e}")
    return None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fairshare",
        description="Симулятор разделения домашнего аплинка с гостями и моделирование гостевого трафика",
    )
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="прогоны baseline/treatment по сценарию, CSV влияния")
    r.add_argument("--scenario", required=True, help="YAML-файл сценария")
    r.add_argument("--runs", type=_positive_int, default=1)
    r.add_argument("--seed", type=_u64, default=None)
    r.add_argument("--out", default=None, help="CSV (по умолчанию stdout)")
    r.add_argument("--sweep", action="store_true", help="сетка 8 политик x 2 AP x 4 полосы")
    r.add_argument("--jobs", type=_positive_int, default=1, help="процессов для независимых прогонов")
    r.add_argument("--duration", type=_positive_float, default=None, help="переопределить run.duration_s")
    r.add_argument("--trace", default=None, help="CSV трассы гостевых потоков treatment-прогона 0")

    v = sub.add_parser("validate", help="стенд валидации генератора (два узла)")
    v.add_argument("--profile", type=int, required=True, help="гостевой профиль 1..4")
    v.add_argument("--runs", type=_positive_int, default=1)
    v.add_argument("--seed", type=_u64, default=None)
    v.add_argument("--out", default=None)
    v.add_argument("--duration", type=_positive_float, default=None)
    v.add_argument("--jobs", type=_positive_int, default=1)
    v.add_argument("--statistic", choices=["mean", "median"], default=None,
                   help="mean или median по прогонам (по умолчанию validate.statistic)")

    f = sub.add_parser("fit", help="подгонка распределений по трассе потоков")
    f.add_argument("trace", help="CSV: start_s, bytes, duration_s[, class, profile_id]")
    f.add_argument("--family", choices=["auto", "weibull", "genpareto", "lognormal"], default="auto")
    f.add_argument("--out", default=None)
    f.add_argument("--pp-out", default=None, help="CSV точек P-P графика")
    return p


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)
        sys.stdout.flush()


def cmd_run(args: argparse.Namespace) -> int:
    from core.experiment import rows_to_csv, run_experiment, sweep
    from core.scenario import parse_scenario

    scenario = parse_scenario(args.scenario, seed=resolve_seed(args.seed), duration_s=args.duration)
    if args.sweep:
        rows = sweep(scenario, runs=args.runs, jobs=args.jobs)
    else:
        rows = run_experiment(scenario, runs=args.runs, jobs=args.jobs, trace_path=args.trace)
    _emit(rows_to_csv(rows), args.out)

    t = Table(title=f"fairshare run (seed {scenario.seed}, {args.runs} прогон(ов))")
    for col in ("policy", "AP", "полоса", "гости KBps", "влияние на дом %", "отброшено KB", "задержка мс"):
        t.add_column(col)
    for row in rows:
        if row.run_id != "mean":
            continue
        t.add_row(row.policy, row.ap_profile, row.load_band, *(f"{x:.3f}" for x in row.values))
    console.print(t)
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    from core.defaults import load_defaults
    from core.experiment import validate, validation_csv

    seed = resolve_seed(args.seed)
    if seed is None:
        seed = load_defaults().run.seed
    rows = validate(args.profile, runs=args.runs, seed=seed, duration_s=args.duration, jobs=args.jobs,
                    statistic=args.statistic)
    _emit(validation_csv(rows), args.out)

    t = Table(title=f"validate: профиль {args.profile}, {args.runs} прогон(ов)")
    for col in ("метрика", "эталон", "независимый", "разница %"):
        t.add_column(col)
    for r in rows:
        t.add_row(r.metric, f"{r.reference:.3f}", f"{r.independent:.3f}", f"{r.diff_pct:.2f}")
    console.print(t)
    return EXIT_OK


def cmd_fit(args: argparse.Namespace) -> int:
    from core.experiment import fit_csv, fit_trace, write_pp_csv

    results = fit_trace(args.trace, family=args.family)
    _emit(fit_csv(results), args.out)
    if args.pp_out:
        write_pp_csv(results, args.pp_out)

    t = Table(title=f"fit: {args.trace}")
    for col in ("характеристика", "семейство", "параметры", "KS", "AD", "χ²"):
        t.add_column(col)
    for r in results:
        params = ", ".join(f"{k}={v:.4g}" for k, v in r.spec.params().items())
        t.add_row(r.characteristic, r.spec.family.value, params,
                  f"{r.gof.ks:.4f}", f"{r.gof.ad:.3f}", f"{r.gof.chi2:.2f}")
    console.print(t)
    return EXIT_OK


COMMANDS = {"run": cmd_run, "validate": cmd_validate, "fit": cmd_fit}


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv(find_dotenv(usecwd=True))
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except FairshareError as e:
        code = exit_code_for(e)
        # одна машиночитаемая строка, затем панель для человека
        print(f"error: {e.category}: {e}", file=sys.stderr)
        console.print(Panel.fit(str(e), title=f"❌ {e.category}", border_style="red"))
        logger.write({"kind": "cli_error", "command": args.command, "category": e.category,
                      "message": str(e), "exit_code": code})
        return code


def cli_entry():
    sys.exit(main())


if __name__ == "__main__":
    cli_entry()
