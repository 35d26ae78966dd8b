"""
Оценка траншей синтетического CDO: ожидаемые потери траншей,
защитная и премиальная ноги, спред
"""
import math
from dataclasses import dataclass, replace
from typing import Callable, Sequence

import numpy as np
from loguru import logger
from scipy.integrate import simpson

from errors import DeadTrancheError, ModelValidationError, QuadratureError
from model_core import PricingConfig, TrancheSpec, ValidatedModel
from model_enums import ComparisonMode
from portfolio_loss import DefaultCountDistribution, defaults_distribution_curve

SPREAD_TABLE_SCALE = 100.0
"""Спред в единицах по 100 б.п.: доля номинала в год, умноженная на 100"""
DEAD_ANNUITY = 1e-12
LEG_TOL = 1e-9

Curve = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class TrancheQuote:
    """Котировка транша

    expected_loss: E[L_i(t_j)] на купонных датах, grid_*: сетка квадратуры защитной ноги
    """
    tranche: TrancheSpec
    horizon: float
    mode: ComparisonMode
    payment_times: np.ndarray
    expected_loss: np.ndarray
    grid_times: np.ndarray
    grid_expected_loss: np.ndarray
    protection_leg: float
    annuity: float
    spread: float

    @property
    def spread_table_units(self) -> float:
        return spread_table_units(self.spread)


def expected_tranche_loss(dist: DefaultCountDistribution, tranche: TrancheSpec, recovery: float) -> float:
    """E[L_i(t)] = сумма min(max(L_j - k_{i-1}, 0), dk_i) P(D(t) = j), L_j = (1 - w) j / N"""
    losses = dist.loss_atoms(recovery)
    clipped = np.clip(losses - tranche.attach, 0.0, tranche.width)
    return float(np.dot(clipped, dist.pmf))


def expected_tranche_loss_cdf_form(dist: DefaultCountDistribution, tranche: TrancheSpec, recovery: float) -> float:
    """Та же величина через функцию распределения потерь:

    dk_i - k_i F(k_i) + k_{i-1} F(k_{i-1}) + сумма L_j P(D = j) по k_{i-1} < L_j <= k_i,
    где F(x) = P(L(t) <= x). Значения F берутся по массе, без деления на сумму вероятностей
    """
    losses = dist.loss_atoms(recovery)
    pmf = dist.pmf
    total = float(pmf.sum())

    def cdf(x: float) -> float:
        return float(pmf[losses <= x].sum())

    inside = (losses > tranche.attach) & (losses <= tranche.detach)
    return (
        tranche.width * total
        - tranche.detach * cdf(tranche.detach)
        + tranche.attach * cdf(tranche.attach)
        + float(np.dot(losses[inside], pmf[inside]))
    )


class LossCurve:
    """Кривые E[L_i(t)] для всех траншей модели, t в годах

    Распределения D(t) кэшируются по сроку и считаются пачками
    """
    def __init__(
            self,
            model: ValidatedModel,
            mode: ComparisonMode = ComparisonMode.DYNAMIC_CONTAGION,
            tail_tol: float = 1e-8
        ):
        self.model = model
        self.mode = ComparisonMode.parse(mode)
        self.tail_tol = tail_tol
        self._cache: dict[float, DefaultCountDistribution] = {}

    @staticmethod
    def _key(t: float) -> float:
        return round(float(t), 12)

    def distributions(self, t_years: np.ndarray) -> list[DefaultCountDistribution]:
        t_years = np.atleast_1d(np.asarray(t_years, dtype=float))
        missing = sorted({self._key(t) for t in t_years} - self._cache.keys())
        if missing:
            logger.debug(f"Распределения D(t): новых сроков {len(missing)}, режим {self.mode}")
            computed = defaults_distribution_curve(
                self.model.spec,
                self.model.internal_time(np.array(missing)),
                self.tail_tol,
                mode=self.mode,
            )
            self._cache.update(zip(missing, computed))
        return [self._cache[self._key(t)] for t in t_years]

    def tranche_loss(self, tranche: TrancheSpec, t_years: np.ndarray) -> np.ndarray:
        recovery = self.model.spec.recovery
        return np.array([expected_tranche_loss(dist, tranche, recovery) for dist in self.distributions(t_years)])

    def portfolio_loss(self, t_years: np.ndarray) -> np.ndarray:
        """E[L(t)] = (1 - w) E[D(t)] / N"""
        recovery = self.model.spec.recovery
        return np.array([dist.expected_loss(recovery) for dist in self.distributions(t_years)])

    def for_tranche(self, tranche: TrancheSpec) -> Curve:
        return lambda t_years: self.tranche_loss(tranche, t_years)


def protection_leg(
        curve: Curve,
        r: float,
        horizon: float,
        *,
        payments_per_year: int = 4,
        points_per_period: int = 8,
        tol: float = LEG_TOL,
        max_levels: int = 8
    ) -> float:
    """V_i(T) = exp(-r T) E[L_i(T)] + r * интеграл exp(-r t) E[L_i(t)] по [0, T]

    Интеграл: составная формула Симпсона, сетка удваивается, пока соседние
    оценки не совпадут с точностью tol
    """
    terminal = float(curve(np.array([horizon]))[0])
    if r == 0.0:
        return terminal
    intervals = max(2, int(math.ceil(horizon * payments_per_year)) * points_per_period)
    intervals += intervals % 2
    previous = math.nan
    for level in range(max_levels + 1):
        grid = np.linspace(0.0, horizon, intervals + 1)
        integral = simpson(np.exp(-r * grid) * curve(grid), x=grid)
        value = math.exp(-r * horizon) * terminal + r * integral
        logger.debug(f"Защитная нога: уровень {level}, интервалов {intervals}, V={value:.12g}")
        if abs(value - previous) < tol:
            return value
        previous = value
        intervals *= 2
    raise QuadratureError(
        f"Защитная нога не сошлась за {max_levels} удвоений сетки: последнее значение {previous:.12g}"
    )


def premium_annuity(
        curve: Curve,
        tranche: TrancheSpec,
        r: float,
        payment_times: np.ndarray,
        accrual: float
    ) -> float:
    """A_i = сумма exp(-r t_j) (dk_i - E[L_i(t_j)]) dt_j, без начисления при дефолте"""
    outstanding = tranche.width - curve(payment_times)
    return float(np.sum(np.exp(-r * payment_times) * outstanding * accrual))


def spread(protection: float, annuity: float) -> float:
    """c_i = V_i / A_i"""
    if annuity <= DEAD_ANNUITY:
        raise DeadTrancheError(f"Аннуитет {annuity:.3g} <= {DEAD_ANNUITY:g}: транш гарантированно списан")
    return protection / annuity


def spread_table_units(value: float) -> float:
    """Перевод спреда из доли в год в единицы по 100 б.п."""
    return value * SPREAD_TABLE_SCALE


def quote_tranche(curves: LossCurve, tranche: TrancheSpec, cfg: PricingConfig|None = None) -> TrancheQuote:
    """Котировка одного транша по общей кривой потерь; cfg задаёт срок, по умолчанию срок модели"""
    cfg = cfg or curves.model.cfg
    r = cfg.annual_rate
    curve = curves.for_tranche(tranche)
    payment_times = cfg.payment_times
    protection = protection_leg(curve, r, cfg.horizon, payments_per_year=cfg.payments_per_year)
    annuity = premium_annuity(curve, tranche, r, payment_times, cfg.accrual)
    grid = np.linspace(0.0, cfg.horizon, 8 * cfg.n_payments + 1)
    return TrancheQuote(
        tranche=tranche,
        horizon=cfg.horizon,
        mode=curves.mode,
        payment_times=payment_times,
        expected_loss=curve(payment_times),
        grid_times=grid,
        grid_expected_loss=curve(grid),
        protection_leg=protection,
        annuity=annuity,
        spread=spread(protection, annuity),
    )


def price_maturities(
        model: ValidatedModel,
        tranches: Sequence[TrancheSpec],
        maturities: Sequence[float],
        mode: ComparisonMode = ComparisonMode.DYNAMIC_CONTAGION,
        *,
        tail_tol: float = 1e-8,
        curves: LossCurve|None = None
    ) -> list[TrancheQuote]:
    """Котировки всех траншей на несколько сроков (в годах) по одной кривой потерь

    Порядок по сроку, внутри срока по траншам. Готовую кривую curves можно передать
    для повторного использования кэша распределений
    """
    curves = curves or LossCurve(model, mode, tail_tol)
    quotes = []
    for horizon in maturities:
        cfg = replace(model.cfg, horizon=float(horizon))
        errors = cfg.errors()
        if errors:
            raise ModelValidationError(errors)
        quotes.extend(quote_tranche(curves, tranche, cfg) for tranche in tranches)
    for quote in quotes:
        logger.info(
            f"{quote.mode} T={quote.horizon:g} транш {quote.tranche}: "
            f"спред {quote.spread_table_units:.6g} (по 100 б.п.), V={quote.protection_leg:.6g}, A={quote.annuity:.6g}"
        )
    return quotes


def price_cdo(
        model: ValidatedModel,
        tranches: Sequence[TrancheSpec],
        mode: ComparisonMode = ComparisonMode.DYNAMIC_CONTAGION,
        *,
        tail_tol: float = 1e-8
    ) -> list[TrancheQuote]:
    """Котировки всех траншей на срок model.cfg.horizon"""
    return price_maturities(model, tranches, [model.cfg.horizon], mode, tail_tol=tail_tol)


def comparison_spreads(
        mode: ComparisonMode,
        model: ValidatedModel,
        tranches: Sequence[TrancheSpec],
        horizon: float,
        *,
        tail_tol: float = 1e-8
    ) -> list[TrancheQuote]:
    """Котировки в модели сравнения с интенсивностью, подобранной под базовую модель"""
    mode = ComparisonMode.parse(mode)
    if mode is ComparisonMode.DYNAMIC_CONTAGION:
        raise ValueError("Для модели заражения используйте price_cdo")
    return price_cdo(model.with_horizon(horizon), tranches, mode, tail_tol=tail_tol)
