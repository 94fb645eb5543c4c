# core/errors.py
from __future__ import annotations

from typing import Optional


class FairshareError(Exception):
    """Базовая ошибка. category: машиночитаемая метка для CLI."""
    category = "error"


class ConfigError(FairshareError, ValueError):
    category = "config"


class ScenarioError(FairshareError, ValueError):
    category = "scenario"

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"строка {line}: {message}"
        super().__init__(message)


class DomainError(FairshareError, ValueError):
    category = "domain"


class InsufficientDataError(FairshareError, ValueError):
    category = "fit"


class DegenerateFitError(FairshareError, ValueError):
    category = "fit"


class CalibrationError(FairshareError, RuntimeError):
    category = "calibration"


class SimulationError(FairshareError, RuntimeError):
    """Логическая ошибка ядра (событие в прошлом, вызов не в том режиме и т.п.)."""
    category = "logic"


class UndefinedImpactError(FairshareError, ValueError):
    category = "metrics"
