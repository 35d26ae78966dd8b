"""
Тесты качественных проверок спредов: направления по параметрам и по сроку
"""
import numpy as np
import pytest

from cdo_pricer import LossCurve, TrancheQuote, price_maturities
from model_core import TrancheSpec, base_case_tranches
from model_enums import ComparisonMode
from validation_suite import check_sweep_properties, check_term_structure

EQUITY = TrancheSpec(0.0, 0.07)
SENIOR = TrancheSpec(0.12, 0.3)


def _quote(tranche: TrancheSpec, spread: float, horizon: float = 3.0) -> TrancheQuote:
    empty = np.zeros(1)
    return TrancheQuote(
        tranche=tranche,
        horizon=horizon,
        mode=ComparisonMode.DYNAMIC_CONTAGION,
        payment_times=empty,
        expected_loss=empty,
        grid_times=empty,
        grid_expected_loss=empty,
        protection_leg=0.0,
        annuity=1.0,
        spread=spread,
    )


def _grid(*rows: tuple[float, float]) -> list[list[TrancheQuote]]:
    """Точки сетки: спреды (младший, старший) в каждой точке"""
    return [[_quote(EQUITY, junior), _quote(SENIOR, senior)] for junior, senior in rows]


def test_beta_direction():
    checks = check_sweep_properties("beta", [1.0, 1.5, 2.5], _grid((0.3, 0.01), (0.2, 0.008), (0.1, 0.005)), 1.5)
    assert len(checks) == 2
    assert all(check.passed and check.soft for check in checks)
    assert checks[0].name == "sweep beta [0, 0.07] T=3"

    rising = check_sweep_properties("beta", [1.0, 1.5, 2.5], _grid((0.3, 0.01), (0.2, 0.012), (0.1, 0.005)), 1.5)
    assert [check.passed for check in rising] == [True, False]
    assert rising[1].measured == pytest.approx(0.002 / 0.009)


def test_lambda0_and_recovery_directions():
    growing = _grid((0.1, 0.001), (0.2, 0.002))
    assert all(check.passed for check in check_sweep_properties("lambda0", [0.5, 2.5], growing, 1.5))
    assert not any(check.passed for check in check_sweep_properties("w", [0.2, 0.4], growing, 1.5))


def test_eta_flatness_below_lambda0():
    """Сравниваются только точки eta < lambda0, точка выше lambda0 в размах не входит"""
    flat = _grid((0.2, 0.01), (0.2001, 0.01), (0.5, 0.03))
    checks = check_sweep_properties("eta", [0.5, 1.0, 2.0], flat, 1.5)
    assert len(checks) == 2
    assert all(check.passed and check.soft for check in checks)
    assert checks[0].name.startswith("sweep eta<lambda0 flatness")

    steep = _grid((0.2, 0.01), (0.25, 0.01), (0.5, 0.03))
    checks = check_sweep_properties("eta", [0.5, 1.0, 2.0], steep, 1.5)
    assert [check.passed for check in checks] == [False, True]


def test_eta_flatness_needs_two_points_below_lambda0():
    assert check_sweep_properties("eta", [1.0, 2.0], _grid((0.2, 0.01), (0.5, 0.03)), 1.5) == []


def test_sigma_senior_is_most_robust():
    robust = _grid((0.2, 0.010), (0.3, 0.0101))
    checks = check_sweep_properties("sigma", [0.2, 0.8], robust, 1.5)
    assert len(checks) == 1
    assert checks[0].passed and checks[0].soft
    assert checks[0].name == "sweep sigma senior robustness T=3"

    fragile = _grid((0.2, 0.01), (0.2001, 0.02))
    assert not check_sweep_properties("sigma", [0.2, 0.8], fragile, 1.5)[0].passed


def test_unknown_parameter_has_no_checks():
    assert check_sweep_properties("delta", [1.0, 2.0], _grid((0.2, 0.01), (0.3, 0.02)), 1.5) == []


def test_term_structure_nondecreasing():
    quotes = [_quote(EQUITY, spread, horizon) for horizon, spread in ((5.0, 0.3), (3.0, 0.2), (7.0, 0.35))]
    quotes.append(_quote(SENIOR, 0.01, 3.0))
    checks = check_term_structure(quotes)
    # у старшего транша один срок: проверки нет
    assert len(checks) == 1
    assert checks[0].passed and checks[0].soft
    assert checks[0].name == "term structure dynamic_contagion [0, 0.07]"


def test_term_structure_decreasing_fails():
    quotes = [_quote(SENIOR, spread, horizon) for horizon, spread in ((3.0, 0.0134), (5.0, 0.0116))]
    check = check_term_structure(quotes)[0]
    assert not check.passed
    assert check.soft
    assert check.measured > 0.0


def test_term_structure_on_engine_quotes(base_model):
    quotes = price_maturities(base_model, base_case_tranches(), [3.0, 6.0], curves=LossCurve(base_model))
    checks = check_term_structure(quotes)
    assert len(checks) == len(base_case_tranches())
    assert all(check.soft for check in checks)
    assert all(check.measured >= 0.0 for check in checks)
