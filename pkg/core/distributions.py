# core/distributions.py
"""
Распределения гостевого трафика: Weibull (интервалы между потоками),
Generalized Pareto (размеры потоков), Lognormal (длительности).

Сэмплирование обратным преобразованием, аналитическая CDF, подгонка
(MLE / моменты логарифмов) и статистики согласия KS / AD / χ².
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.optimize import brentq
from scipy.special import gamma as _gamma, ndtr, ndtri

from core.errors import DegenerateFitError, DomainError, InsufficientDataError

MIN_FIT_SAMPLES = 30


class Family(str, Enum):
    WEIBULL = "weibull"
    GENPARETO = "genpareto"
    LOGNORMAL = "lognormal"


@dataclass(frozen=True)
class DistSpec:
    """
    Weibull: alpha (форма), beta (масштаб).
    GenPareto: kappa (форма), sigma (масштаб), mu (сдвиг).
    Lognormal: mu, sigma: среднее и ст. отклонение логарифма.
    """
    family: Family
    alpha: Optional[float] = None
    beta: Optional[float] = None
    kappa: Optional[float] = None
    sigma: Optional[float] = None
    mu: Optional[float] = None

    def __post_init__(self):
        f = Family(self.family)
        object.__setattr__(self, "family", f)
        if f is Family.WEIBULL:
            if not (_pos(self.alpha) and _pos(self.beta)):
                raise DomainError(f"Weibull: нужны alpha > 0 и beta > 0 (alpha={self.alpha}, beta={self.beta})")
        elif f is Family.GENPARETO:
            if self.kappa is None or self.mu is None or not _pos(self.sigma):
                raise DomainError(f"GenPareto: нужны kappa, sigma > 0 и mu (получено {self.params()})")
        else:
            if self.mu is None or self.sigma is None or self.sigma < 0 or not math.isfinite(self.sigma):
                raise DomainError(f"Lognormal: нужны mu и sigma >= 0 (получено {self.params()})")

    @classmethod
    def weibull(cls, alpha: float, beta: float) -> "DistSpec":
        return cls(Family.WEIBULL, alpha=float(alpha), beta=float(beta))

    @classmethod
    def genpareto(cls, kappa: float, sigma: float, mu: float) -> "DistSpec":
        return cls(Family.GENPARETO, kappa=float(kappa), sigma=float(sigma), mu=float(mu))

    @classmethod
    def lognormal(cls, mu: float, sigma: float) -> "DistSpec":
        return cls(Family.LOGNORMAL, mu=float(mu), sigma=float(sigma))

    def params(self) -> Dict[str, float]:
        names = {
            Family.WEIBULL: ("alpha", "beta"),
            Family.GENPARETO: ("kappa", "sigma", "mu"),
            Family.LOGNORMAL: ("mu", "sigma"),
        }[Family(self.family)]
        return {n: getattr(self, n) for n in names}

    def scaled_rate(self, gamma: float) -> "DistSpec":
        """Weibull с масштабом beta/gamma, частота прихода умножается на gamma."""
        if self.family is not Family.WEIBULL:
            raise DomainError("Масштабирование частоты определено только для Weibull")
        return DistSpec.weibull(self.alpha, self.beta / gamma)


def _pos(v: Optional[float]) -> bool:
    return v is not None and math.isfinite(v) and v > 0


# Профили гостей: интервал Weibull, размер GenPareto в байтах, длительность Lognormal в с
GUEST_PROFILES: Dict[int, Dict[str, DistSpec]] = {
    1: {
        "inter_arrival": DistSpec.weibull(0.27, 0.4),
        "size": DistSpec.genpareto(0.59, 544, 353),
        "duration": DistSpec.lognormal(1.03, 2.62),
    },
    2: {
        "inter_arrival": DistSpec.weibull(0.31, 0.53),
        "size": DistSpec.genpareto(0.77, 1108, 203),
        "duration": DistSpec.lognormal(1.0, 1.83),
    },
    3: {
        "inter_arrival": DistSpec.weibull(0.4, 0.19),
        "size": DistSpec.genpareto(0.12, 1473, 471),
        "duration": DistSpec.lognormal(0.9, 1.18),
    },
    4: {
        "inter_arrival": DistSpec.weibull(0.38, 9.58),
        "size": DistSpec.genpareto(0.59, 620, 42),
        "duration": DistSpec.lognormal(1.97, 2.45),
    },
}

# Выбор семейства по характеристике потока
AUTO_FAMILY: Dict[str, Family] = {
    "inter_arrival": Family.WEIBULL,
    "size": Family.GENPARETO,
    "duration": Family.LOGNORMAL,
}


# -------------------- quantile / cdf --------------------

def quantile_array(spec: DistSpec, u: np.ndarray) -> np.ndarray:
    f = spec.family
    if f is Family.WEIBULL:
        return spec.beta * np.power(-np.log1p(-u), 1.0 / spec.alpha)
    if f is Family.GENPARETO:
        if spec.kappa == 0.0:
            return spec.mu - spec.sigma * np.log1p(-u)
        return spec.mu + spec.sigma * np.expm1(-spec.kappa * np.log1p(-u)) / spec.kappa
    return np.exp(spec.mu + spec.sigma * ndtri(u))


def quantile(spec: DistSpec, u: float) -> float:
    """Обратная CDF. u должен лежать в [0, 1)."""
    if not (0.0 <= u < 1.0):
        raise DomainError(f"u={u} вне [0, 1)")
    return float(quantile_array(spec, np.asarray(u, dtype=float)))


def sample(spec: DistSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    return quantile_array(spec, rng.random(n))


def cdf_array(spec: DistSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    f = spec.family
    if f is Family.WEIBULL:
        z = np.clip(x, 0.0, None) / spec.beta
        return -np.expm1(-np.power(z, spec.alpha))
    if f is Family.GENPARETO:
        z = np.clip((x - spec.mu) / spec.sigma, 0.0, None)
        if spec.kappa == 0.0:
            return -np.expm1(-z)
        base = 1.0 + spec.kappa * z
        with np.errstate(divide="ignore", invalid="ignore"):
            out = -np.expm1(-np.log(np.clip(base, 0.0, None)) / spec.kappa)
        # kappa < 0: за верхней границей носителя
        return np.where(base <= 0.0, 1.0, out)
    with np.errstate(divide="ignore"):
        logx = np.log(np.clip(x, 0.0, None))
    if spec.sigma == 0.0:
        return np.where(logx >= spec.mu, 1.0, 0.0)
    return ndtr((logx - spec.mu) / spec.sigma)


def cdf(spec: DistSpec, x: float) -> float:
    return float(cdf_array(spec, x))


def mean(spec: DistSpec) -> float:
    """Аналитическое среднее (inf, если не существует)."""
    f = spec.family
    if f is Family.WEIBULL:
        return spec.beta * float(_gamma(1.0 + 1.0 / spec.alpha))
    if f is Family.GENPARETO:
        if spec.kappa >= 1.0:
            return math.inf
        return spec.mu + spec.sigma / (1.0 - spec.kappa)
    return math.exp(spec.mu + spec.sigma ** 2 / 2.0)


# -------------------- fit --------------------

def _check_samples(samples: Sequence[float], need: int = MIN_FIT_SAMPLES) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    if x.size < need:
        raise InsufficientDataError(f"Нужно минимум {need} значений, получено {x.size}")
    if not np.all(np.isfinite(x)):
        raise DomainError("В выборке есть нечисловые значения")
    if np.all(x == x[0]):
        raise DegenerateFitError("Все значения выборки одинаковы, подгонка вырождена")
    return x


def _fit_weibull(x: np.ndarray) -> DistSpec:
    if np.any(x <= 0):
        raise DomainError("Weibull: значения должны быть > 0")
    logx = np.log(x)
    mean_log = logx.mean()

    def score(a: float) -> float:
        # sum(x^a ln x)/sum(x^a) - 1/a - mean(ln x), через сдвиг показателя
        w = a * logx
        e = np.exp(w - w.max())
        return float(np.sum(e * logx) / np.sum(e) - 1.0 / a - mean_log)

    lo, hi = 1e-3, 1.0
    while score(hi) < 0.0 and hi < 1e4:
        hi *= 2.0
    alpha = brentq(score, lo, hi, xtol=1e-12, maxiter=500)
    w = alpha * logx
    wmax = w.max()
    beta = math.exp((wmax + math.log(np.mean(np.exp(w - wmax)))) / alpha)
    return DistSpec.weibull(alpha, beta)


def _fit_genpareto(x: np.ndarray) -> DistSpec:
    loc = float(x.min())
    excess = x - loc
    kappa, _, sigma = stats.genpareto.fit(excess, floc=0.0)
    return DistSpec.genpareto(kappa, sigma, loc)


def _fit_lognormal(x: np.ndarray) -> DistSpec:
    if np.any(x <= 0):
        raise DomainError("Lognormal: значения должны быть > 0")
    logx = np.log(x)
    mu = float(logx.mean())
    sigma = float(np.sqrt(np.mean((logx - mu) ** 2)))
    return DistSpec.lognormal(mu, sigma)


def fit(family: Family | str, samples: Sequence[float]) -> DistSpec:
    """
    Lognormal: моменты логарифмов (знаменатель n). Weibull: MLE с численным
    решением для alpha; GenPareto: mu = минимум выборки, (kappa, sigma) по MLE на превышениях.
    """
    fam = Family(family)
    x = _check_samples(samples)
    if fam is Family.WEIBULL:
        return _fit_weibull(x)
    if fam is Family.GENPARETO:
        return _fit_genpareto(x)
    return _fit_lognormal(x)


# -------------------- согласие --------------------

@dataclass(frozen=True)
class GofReport:
    ks: float
    ad: float
    chi2: float
    chi2_bins: int


def chi2_bin_count(n: int) -> int:
    return int(math.ceil(2.0 * n ** 0.4))


def gof(samples: Sequence[float], spec: DistSpec) -> GofReport:
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < MIN_FIT_SAMPLES:
        raise InsufficientDataError(f"Нужно минимум {MIN_FIT_SAMPLES} значений, получено {n}")

    ks = float(stats.kstest(x, lambda v: cdf_array(spec, v)).statistic)

    F = np.clip(cdf_array(spec, x), 1e-12, 1.0 - 1e-12)
    i = np.arange(1, n + 1)
    ad = float(-n - np.sum((2 * i - 1) * (np.log(F) + np.log1p(-F[::-1]))) / n)

    k = chi2_bin_count(n)
    idx = np.minimum((cdf_array(spec, x) * k).astype(int), k - 1)
    observed = np.bincount(idx, minlength=k)
    expected = np.full(k, n / k)
    chi2 = float(stats.chisquare(observed, expected).statistic)

    return GofReport(ks=ks, ad=max(ad, 0.0), chi2=chi2, chi2_bins=k)


def pp_points(samples: Sequence[float], spec: DistSpec) -> List[Tuple[float, float]]:
    """Точки P-P графика: ((i - 0.5)/n, F(x_(i)))."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n == 0:
        raise InsufficientDataError("Пустая выборка для P-P графика")
    emp = (np.arange(1, n + 1) - 0.5) / n
    model = cdf_array(spec, x)
    return [(float(a), float(b)) for a, b in zip(emp, model)]
