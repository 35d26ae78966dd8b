"""
Распределение числа дефолтов D(t) и потерь портфеля L(t)

Дефолты фирм независимы при условии числа событий общего процесса N(t) = n,
поэтому D(t): смесь биномиальных распределений по P(N(t) = n)
"""
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from loguru import logger
from scipy.special import gammaln, xlog1py, xlogy

from comparison_models import event_process
from model_core import ContagionParams, FirmParams, PortfolioSpec
from model_enums import ComparisonMode
from pgf_engine import EventProcess, count_distribution_curve, joint_transform, transform_surface


@dataclass(frozen=True)
class DefaultCountDistribution:
    """Распределение P(D(t) = j), j = 0..N

    n_max и captured_mass описывают усечение суммы по числу событий общего процесса;
    tower_mean: N * сумма P_i(t, n) P(N = n) по тому же усечённому распределению N
    """
    horizon: float
    pmf: np.ndarray
    n_max: int
    captured_mass: float
    tower_mean: float = math.nan

    @property
    def n_firms(self) -> int:
        return self.pmf.size - 1

    @property
    def deficit(self) -> float:
        """Недобранная масса; перенормировка не делается"""
        return max(0.0, 1.0 - float(self.pmf.sum()))

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    @property
    def tower_gap(self) -> float:
        """|E[D(t)] - tower_mean|, ноль с точностью округления"""
        return abs(self.mean() - self.tower_mean)

    def survival(self) -> np.ndarray:
        """P(D(t) >= j), j = 0..N"""
        return np.cumsum(self.pmf[::-1])[::-1]

    def loss_atoms(self, recovery: float) -> np.ndarray:
        """Значения потерь (1 - w) j / N"""
        return (1.0 - recovery) * np.arange(self.pmf.size) / self.n_firms

    def expected_loss(self, recovery: float) -> float:
        """E[L(t)] = (1 - w) E[D(t)] / N"""
        return (1.0 - recovery) * self.mean() / self.n_firms

    def loss_pgf(self, recovery: float, u: float) -> float:
        """E[u^L(t)] = сумма u^((1 - w) j / N) P(D(t) = j)"""
        return float(np.dot(np.power(u, self.loss_atoms(recovery)), self.pmf))


@dataclass(frozen=True)
class FirmExposure:
    """Фирма неоднородного пула для диагностической производящей функции потерь"""
    firm: FirmParams
    idio: ContagionParams
    recovery: float


def marginal_default_prob(
        firm: FirmParams,
        idio: "ContagionParams|EventProcess",
        t: float,
        n: int|np.ndarray,
        *,
        idio_transform: float|None = None
    ) -> float|np.ndarray:
    """P_i(t, n) = 1 - dtilde^n E[theta^N_i(t)]

    idio_transform позволяет передать уже посчитанное E[theta^N_i(t)]
    """
    if idio_transform is None:
        idio_transform = joint_transform(idio, firm.theta, 0.0, t).value
    survival = np.power(firm.dtilde, np.asarray(n, dtype=float)) * idio_transform
    result = np.clip(1.0 - survival, 0.0, 1.0)
    return float(result) if np.ndim(result) == 0 else result


def firm_default_probability(
        firm: FirmParams,
        idio: "ContagionParams|EventProcess",
        common: "ContagionParams|EventProcess",
        t: float
    ) -> float:
    """Безусловная вероятность дефолта фирмы к моменту t

    1 - E[theta^N_i(t)] E[dtilde^N(t)], компоненты независимы
    """
    idio_part = joint_transform(idio, firm.theta, 0.0, t).value
    common_part = joint_transform(common, firm.dtilde, 0.0, t).value
    return float(np.clip(1.0 - idio_part * common_part, 0.0, 1.0))


def conditional_count_pmf(p: float|np.ndarray, n_firms: int) -> np.ndarray:
    """Биномиальное распределение Bin(N, p), вычисленное в логарифмах

    Для массива p возвращается матрица (len(p), N + 1)
    """
    p = np.asarray(p, dtype=float)[..., np.newaxis]
    j = np.arange(n_firms + 1)
    log_comb = gammaln(n_firms + 1) - gammaln(j + 1) - gammaln(n_firms - j + 1)
    with np.errstate(divide="ignore"):
        log_pmf = log_comb + xlogy(j, p) + xlog1py(n_firms - j, -p)
    return np.exp(log_pmf)


def mix_conditional_binomials(
        common_pmf: np.ndarray,
        marginal_probs: np.ndarray,
        n_firms: int
    ) -> np.ndarray:
    """Сумма по n: P(N = n) Bin(N, P_i(t, n)), порядок суммирования фиксирован"""
    matrix = conditional_count_pmf(np.asarray(marginal_probs, dtype=float).reshape(-1), n_firms)
    return np.asarray(common_pmf, dtype=float) @ matrix


def defaults_distribution_curve(
        spec: PortfolioSpec,
        horizons: np.ndarray,
        tail_tol: float = 1e-8,
        *,
        mode: ComparisonMode = ComparisonMode.DYNAMIC_CONTAGION
    ) -> list[DefaultCountDistribution]:
    """Распределения D(t) для набора сроков (во внутренних единицах времени)"""
    horizons = np.atleast_1d(np.asarray(horizons, dtype=float))
    common = event_process(spec.common, mode, "model.common")
    idio = event_process(spec.idio, mode, "model.idio")
    counts = count_distribution_curve(common, horizons, tail_tol=tail_tol)
    idio_values = transform_surface(idio, np.array([spec.firm.theta]), horizons)[:, 0].real

    result = []
    for count, idio_value in zip(counts, idio_values):
        n = np.arange(count.pmf.size)
        marginal = marginal_default_prob(spec.firm, idio, count.horizon, n, idio_transform=float(idio_value))
        pmf = mix_conditional_binomials(count.pmf, marginal, spec.n_firms)
        if count.deficit > 2 * tail_tol:
            logger.warning(f"Недобор массы {count.deficit:.3g} при t={count.horizon:g}")
        result.append(DefaultCountDistribution(
            horizon=count.horizon,
            pmf=pmf,
            n_max=count.n_max,
            captured_mass=count.captured_mass,
            tower_mean=spec.n_firms * float(np.dot(count.pmf, marginal)),
        ))
    return result


def defaults_distribution(
        spec: PortfolioSpec,
        t: float,
        tail_tol: float = 1e-8,
        *,
        mode: ComparisonMode = ComparisonMode.DYNAMIC_CONTAGION
    ) -> DefaultCountDistribution:
    """P(D(t) = j) смешиванием условных биномиальных распределений"""
    return defaults_distribution_curve(spec, np.array([t]), tail_tol, mode=mode)[0]


def loss_pgf_general(
        exposures: Sequence[FirmExposure],
        common: ContagionParams,
        u: float,
        t: float,
        *,
        common_pmf: np.ndarray|None = None,
        tail_tol: float = 1e-8
    ) -> float:
    """E[u^L(t)] для неоднородного пула, только для диагностики

    Вес фирмы в показателе степени: доля потерь при дефолте 1 - w_i
    """
    n_firms = len(exposures)
    if common_pmf is None:
        common_pmf = count_distribution_curve(common, np.array([t]), tail_tol=tail_tol)[0].pmf
    common_pmf = np.asarray(common_pmf, dtype=float)
    n = np.arange(common_pmf.size)
    factors = np.ones(common_pmf.size)
    for exposure in exposures:
        marginal = marginal_default_prob(exposure.firm, exposure.idio, t, n)
        weight = np.power(u, (1.0 - exposure.recovery) / n_firms)
        factors *= 1.0 - marginal + marginal * weight
    return float(np.dot(common_pmf, factors))
