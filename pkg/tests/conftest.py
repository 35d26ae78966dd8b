"""
Общие данные тестов: путь к модулям программы и базовый сценарий
"""
import os
import sys

_APP = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "contagion-cdo")
sys.path.insert(0, _APP)

import pytest
from loguru import logger

from model_core import (
    ContagionParams, PortfolioSpec, PricingConfig, ValidatedModel,
    base_case_spec, base_case_tranches, validate,
)


@pytest.fixture(autouse=True)
def _quiet_logger():
    """Только предупреждения и ошибки в выводе тестов"""
    logger.remove()
    logger.add(sys.stderr, level="WARNING")
    yield


@pytest.fixture
def base_spec() -> PortfolioSpec:
    return base_case_spec()


@pytest.fixture
def base_params() -> ContagionParams:
    return base_case_spec().common


@pytest.fixture
def base_model() -> ValidatedModel:
    return validate(base_case_spec(), PricingConfig(r=0.03, horizon=3.0), base_case_tranches())


@pytest.fixture
def small_spec() -> PortfolioSpec:
    """Базовый сценарий на 10 фирмах"""
    spec = base_case_spec()
    return PortfolioSpec(n_firms=10, recovery=spec.recovery, firm=spec.firm, idio=spec.idio, common=spec.common)
