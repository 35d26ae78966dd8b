"""
Базовые типы модели: параметры интенсивности, фирмы, портфель, транши,
настройки оценки, а также проверка инвариантов и пересчёт единиц времени
"""
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np
from loguru import logger

from errors import ModelValidationError
from model_enums import TimeUnit

INTERNAL_TIME_UNIT = TimeUnit.QUARTER
"""Единица времени, в которой работают все вычисления движка"""


@dataclass(frozen=True)
class ContagionParams:
    """Параметры интенсивности одного процесса событий

    Parameters
    ----------
    lambda0 : float
        Начальная интенсивность, событий за единицу времени

    delta : float
        Скорость возврата к среднему

    eta : float
        Уровень возврата к среднему

    sigma : float
        Волатильность диффузии

    beta : float
        Параметр экспоненциального размера самовозбуждающих скачков
    """
    lambda0: float
    delta: float
    eta: float
    sigma: float
    beta: float

    @property
    def stationarity(self) -> float:
        """Произведение beta*delta, обязано быть больше 1"""
        return self.beta * self.delta

    @property
    def mean_reversion_net(self) -> float:
        """Эффективная скорость возврата среднего: delta - 1/beta"""
        return self.delta - 1.0 / self.beta

    @property
    def mean_intensity(self) -> float:
        """Стационарная средняя интенсивность delta*eta/(delta - 1/beta)"""
        return self.delta * self.eta / self.mean_reversion_net

    def expected_intensity(self, t: float|np.ndarray) -> float|np.ndarray:
        """E[lambda(t)] = lambda_bar + (lambda0 - lambda_bar) exp(-(delta - 1/beta) t)"""
        kappa = self.mean_reversion_net
        lambda_bar = self.mean_intensity
        return lambda_bar + (self.lambda0 - lambda_bar) * np.exp(-kappa * np.asarray(t))

    def expected_count(self, t: float|np.ndarray) -> float|np.ndarray:
        """E[N(t)], интеграл E[lambda(s)] по [0, t]"""
        kappa = self.mean_reversion_net
        lambda_bar = self.mean_intensity
        t = np.asarray(t, dtype=float)
        return lambda_bar * t + (self.lambda0 - lambda_bar) * (-np.expm1(-kappa * t)) / kappa

    def errors(self, prefix: str) -> list[str]:
        """Список нарушенных инвариантов, каждый с полным именем поля"""
        found: list[str] = []
        for name in ("lambda0", "delta", "eta", "sigma", "beta"):
            value = getattr(self, name)
            if not math.isfinite(value):
                found.append(f"{prefix}.{name}: значение {value} не является конечным числом")
        if found:
            return found
        for name in ("lambda0", "eta", "sigma"):
            if getattr(self, name) < 0:
                found.append(f"{prefix}.{name}: должно быть >= 0, получено {getattr(self, name)}")
        for name in ("delta", "beta"):
            if getattr(self, name) <= 0:
                found.append(f"{prefix}.{name}: должно быть > 0, получено {getattr(self, name)}")
        if not found and self.stationarity <= 1:
            found.append(
                f"{prefix}.beta: βδ={self.stationarity:.6g} ≤ 1, "
                "нарушено условие стационарности βδ > 1"
            )
        return found


@dataclass(frozen=True)
class FirmParams:
    """Параметры однородной фирмы пула

    Parameters
    ----------
    d : float
        Вероятность дефолта при одном неблагоприятном событии, 0 < d <= 1

    ell : float
        Нагрузка на общий процесс событий, >= 0
    """
    d: float
    ell: float

    @classmethod
    def from_theta(cls, theta: float, ell: float) -> "FirmParams":
        """Построение по theta = 1 - d"""
        return cls(d=1.0 - theta, ell=ell)

    @property
    def theta(self) -> float:
        return 1.0 - self.d

    @property
    def dtilde(self) -> float:
        # 0**0 == 1
        return self.theta ** self.ell

    def errors(self, prefix: str) -> list[str]:
        found: list[str] = []
        if not (0.0 < self.d <= 1.0):
            found.append(f"{prefix}.d: должно лежать в (0, 1], получено {self.d}")
        if not (self.ell >= 0.0 and math.isfinite(self.ell)):
            found.append(f"{prefix}.ell: должно быть >= 0, получено {self.ell}")
        return found


@dataclass(frozen=True)
class PortfolioSpec:
    """Однородный портфель

    Parameters
    ----------
    n_firms : int
        Число фирм N

    recovery : float
        Доля возмещения w, 0 <= w < 1

    firm : FirmParams
        Параметры фирмы, одни на весь пул

    idio : ContagionParams
        Параметры собственного процесса каждой фирмы N_i

    common : ContagionParams
        Параметры общего процесса N
    """
    n_firms: int
    recovery: float
    firm: FirmParams
    idio: ContagionParams
    common: ContagionParams

    @property
    def loss_given_default(self) -> float:
        return 1.0 - self.recovery


@dataclass(frozen=True)
class TrancheSpec:
    """Транш [attach, detach] в долях номинала портфеля"""
    attach: float
    detach: float

    @property
    def width(self) -> float:
        return self.detach - self.attach

    def __str__(self) -> str:
        return f"[{self.attach:g}, {self.detach:g}]"


@dataclass(frozen=True)
class PricingConfig:
    """Настройки оценки

    Parameters
    ----------
    r : float
        Безрисковая ставка

    horizon : float
        Срок T в годах

    payments_per_year : int
        Число купонных дат в году, 4 для ежеквартальных

    time_unit : TimeUnit
        Единица времени, в которой заданы ContagionParams

    rate_basis : TimeUnit
        Годовая или квартальная ставка r
    """
    r: float
    horizon: float
    payments_per_year: int = 4
    time_unit: TimeUnit = TimeUnit.QUARTER
    rate_basis: TimeUnit = TimeUnit.YEAR

    @property
    def annual_rate(self) -> float:
        """Ставка на год, используется в дисконт-факторах exp(-r t), t в годах"""
        return self.r * self.rate_basis.per_year

    @property
    def n_payments(self) -> int:
        return round(self.horizon * self.payments_per_year)

    @property
    def payment_times(self) -> np.ndarray:
        """Купонные даты t_j = j/payments_per_year, j = 1..n, в годах"""
        return np.arange(1, self.n_payments + 1) / self.payments_per_year

    @property
    def accrual(self) -> float:
        """Длина купонного периода в годах"""
        return 1.0 / self.payments_per_year

    def errors(self) -> list[str]:
        found: list[str] = []
        if not (self.r >= 0 and math.isfinite(self.r)):
            found.append(f"pricing.r: должно быть >= 0, получено {self.r}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            found.append(f"pricing.horizon: должно быть > 0, получено {self.horizon}")
        if self.payments_per_year < 1:
            found.append(
                f"pricing.payments_per_year: должно быть >= 1, получено {self.payments_per_year}"
            )
        elif self.horizon > 0 and not math.isclose(
            self.horizon * self.payments_per_year, self.n_payments, abs_tol=1e-9
        ):
            found.append(
                f"pricing.horizon: срок {self.horizon} не кратен купонному периоду "
                f"1/{self.payments_per_year}"
            )
        return found


@dataclass(frozen=True)
class ValidatedModel:
    """Проверенная модель: параметры процессов переведены во внутреннюю единицу (квартал)"""
    spec: PortfolioSpec
    cfg: PricingConfig
    source_unit: TimeUnit = field(default=INTERNAL_TIME_UNIT)

    @property
    def units_per_year(self) -> int:
        return INTERNAL_TIME_UNIT.per_year

    def internal_time(self, t_years: float|np.ndarray) -> float|np.ndarray:
        """Пересчёт времени из лет во внутренние единицы"""
        return np.asarray(t_years, dtype=float) * self.units_per_year

    @property
    def horizon_internal(self) -> float:
        return self.cfg.horizon * self.units_per_year

    def with_horizon(self, horizon: float) -> "ValidatedModel":
        """Та же модель с другим сроком T в годах"""
        return replace(self, cfg=replace(self.cfg, horizon=horizon))


def unit_convert(
        params: ContagionParams,
        from_unit: TimeUnit,
        to_unit: TimeUnit
    ) -> ContagionParams:
    """Пересчёт параметров интенсивности в другую единицу времени

    При отношении rho = (единиц from в единице to) интенсивности lambda0, eta
    и скорость delta умножаются на rho, sigma на rho**1.5, beta делится на rho.
    Произведение beta*delta не меняется.
    """
    rho = from_unit.per_year / to_unit.per_year
    if rho == 1:
        return params
    return ContagionParams(
        lambda0=params.lambda0 * rho,
        delta=params.delta * rho,
        eta=params.eta * rho,
        sigma=params.sigma * rho ** 1.5,
        beta=params.beta / rho,
    )


def tranche_errors(tranches: Sequence[TrancheSpec]) -> list[str]:
    """Проверка, что транши разбивают [0, 1] без пропусков и наложений"""
    found: list[str] = []
    if not tranches:
        return ["tranches: список траншей пуст"]
    for i, tranche in enumerate(tranches):
        if not (0.0 <= tranche.attach < tranche.detach <= 1.0):
            found.append(
                f"tranches[{i}]: требуется 0 <= attach < detach <= 1, получено {tranche}"
            )
    if found:
        return found
    if tranches[0].attach != 0.0:
        found.append(f"tranches[0].attach: первый транш должен начинаться с 0, получено {tranches[0].attach}")
    if tranches[-1].detach != 1.0:
        found.append(
            f"tranches[{len(tranches)-1}].detach: последний транш должен заканчиваться на 1, "
            f"получено {tranches[-1].detach}"
        )
    for i, (lower, upper) in enumerate(zip(tranches, tranches[1:])):
        if not math.isclose(lower.detach, upper.attach, abs_tol=1e-12):
            found.append(
                f"tranches[{i+1}].attach: должно совпадать с detach предыдущего транша "
                f"({lower.detach}), получено {upper.attach}"
            )
    return found


def validate(
        spec: PortfolioSpec,
        cfg: PricingConfig,
        tranches: Iterable[TrancheSpec]|None = None
    ) -> ValidatedModel:
    """Проверка всех инвариантов модели

    Returns
    -------
    ValidatedModel
        Модель с параметрами процессов во внутренней единице времени

    Raises
    ------
    ModelValidationError
        Со списком всех нарушений, каждое с именем поля
    """
    found: list[str] = []
    if spec.n_firms < 1:
        found.append(f"model.n_firms: должно быть >= 1, получено {spec.n_firms}")
    if not (0.0 <= spec.recovery < 1.0):
        found.append(f"model.recovery: должно лежать в [0, 1), получено {spec.recovery}")
    found.extend(spec.firm.errors("model"))
    found.extend(spec.idio.errors("model.idio"))
    found.extend(spec.common.errors("model.common"))
    found.extend(cfg.errors())
    if tranches is not None:
        found.extend(tranche_errors(list(tranches)))
    if found:
        for error in found:
            logger.debug(f"Нарушение: {error}")
        raise ModelValidationError(found)

    internal = replace(
        spec,
        idio=unit_convert(spec.idio, cfg.time_unit, INTERNAL_TIME_UNIT),
        common=unit_convert(spec.common, cfg.time_unit, INTERNAL_TIME_UNIT),
    )
    return ValidatedModel(spec=internal, cfg=cfg, source_unit=cfg.time_unit)


def base_case_spec() -> PortfolioSpec:
    """Базовый сценарий: N=50, w=0.4, theta_i=0.97, l_i=0.5, параметры поквартальные"""
    params = ContagionParams(lambda0=1.5, delta=2.0, eta=1.5, sigma=0.4, beta=1.5)
    return PortfolioSpec(
        n_firms=50,
        recovery=0.4,
        firm=FirmParams.from_theta(0.97, 0.5),
        idio=params,
        common=params,
    )


def base_case_tranches() -> list[TrancheSpec]:
    """Транши 0-7%, 7-12%, 12-100%"""
    return [TrancheSpec(0.0, 0.07), TrancheSpec(0.07, 0.12), TrancheSpec(0.12, 1.0)]
