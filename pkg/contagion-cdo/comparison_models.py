"""
Модели сравнения: пуассоновский процесс с постоянной интенсивностью и
процесс Кокса с аффинной скачкообразной интенсивностью без самовозбуждения

Параметры подбираются так, чтобы стационарная средняя интенсивность совпадала
с интенсивностью модели заражения: delta eta / (delta - 1/beta)
"""
from dataclasses import dataclass

import numpy as np

from errors import ModelValidationError
from model_core import ContagionParams
from model_enums import ComparisonMode
from pgf_engine import DynamicContagionProcess, EventProcess


class PoissonProcess(EventProcess):
    """Однородный пуассоновский процесс, E[theta^N(t)] = exp(rate t (theta - 1))"""
    def __init__(self, rate: float):
        self.rate = rate
        # интенсивность постоянна, lambda(T) = rate
        self.lambda0 = rate
        self.drift_level = 0.0
        self.sigma = 0.0
        self.pole = None

    def b_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.zeros_like(b)

    def extra_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self.rate * (1.0 - theta) + np.zeros_like(b)

    def expected_count(self, t: float) -> float:
        return self.rate * t

    def __repr__(self) -> str:
        return f"PoissonProcess(rate={self.rate:g})"


class AffineNoSelfProcess(EventProcess):
    """Процесс Кокса: интенсивность с возвратом к среднему, диффузией и скачками Exp(beta),
    приходящими с постоянной внешней частотой jump_rate, а не в моменты событий

    B'(t) = delta B + theta - 1,
    c'(t) = delta eta B - sigma^2 B^2 / 2 + jump_rate (1 - beta / (beta + B))
    """
    def __init__(self, params: ContagionParams, jump_rate: float):
        self.params = params
        self.jump_rate = jump_rate
        self.lambda0 = params.lambda0
        self.drift_level = params.delta * params.eta
        self.sigma = params.sigma
        self.pole = params.beta

    def b_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return self.params.delta * b + theta - 1.0

    def extra_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        beta = self.params.beta
        return self.jump_rate * (1.0 - beta / (beta + b))

    @property
    def mean_intensity(self) -> float:
        """eta + jump_rate / (beta delta)"""
        return self.params.eta + self.jump_rate / (self.params.beta * self.params.delta)

    def expected_count(self, t: float) -> float:
        delta = self.params.delta
        level = self.mean_intensity
        return level * t + (self.lambda0 - level) * (-np.expm1(-delta * t)) / delta

    def __repr__(self) -> str:
        return f"AffineNoSelfProcess({self.params}, jump_rate={self.jump_rate:g})"


def matched_poisson_rate(params: ContagionParams) -> float:
    """Стационарная средняя интенсивность модели заражения"""
    return params.mean_intensity


def matched_jump_rate(params: ContagionParams) -> float:
    """Частота внешних скачков rho, при которой eta + rho/(beta delta) = delta eta/(delta - 1/beta)"""
    return params.beta * params.delta * (params.mean_intensity - params.eta)


@dataclass(frozen=True)
class ComparisonModel:
    """Режим процесса событий с подобранными параметрами

    Parameters
    ----------
    mode : ComparisonMode
        Режим

    rate : float
        Интенсивность пуассоновского процесса (только для poisson)

    jump_rate : float
        Частота внешних скачков (только для ajd_no_self)
    """
    mode: ComparisonMode
    rate: float = 0.0
    jump_rate: float = 0.0

    @classmethod
    def matched(cls, mode: ComparisonMode, params: ContagionParams, prefix: str = "model") -> "ComparisonModel":
        """Подбор параметров режима под процесс заражения с параметрами params"""
        mode = ComparisonMode.parse(mode)
        if mode is ComparisonMode.POISSON:
            rate = matched_poisson_rate(params)
            if not rate > 0:
                raise ModelValidationError([f"{prefix}: интенсивность пуассоновского процесса {rate} должна быть > 0"])
            return cls(mode=mode, rate=rate)
        if mode is ComparisonMode.AJD_NO_SELF:
            return cls(mode=mode, jump_rate=matched_jump_rate(params))
        return cls(mode=mode)

    def process(self, params: ContagionParams) -> EventProcess:
        if self.mode is ComparisonMode.POISSON:
            return PoissonProcess(self.rate)
        if self.mode is ComparisonMode.AJD_NO_SELF:
            return AffineNoSelfProcess(params, self.jump_rate)
        return DynamicContagionProcess(params)


def event_process(params: ContagionParams, mode: ComparisonMode = ComparisonMode.DYNAMIC_CONTAGION, prefix: str = "model") -> EventProcess:
    """Процесс событий для заданного режима с подбором параметров под params"""
    return ComparisonModel.matched(mode, params, prefix).process(params)
