"""
Тесты аналитического преобразования и обращения производящей функции
"""
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import poisson

from comparison_models import PoissonProcess
from errors import BracketError, PoleError
from model_core import ContagionParams
from model_enums import BMethod
from pgf_engine import (
    DIFFUSION_SIGN, AbelConstants, abel_constants, antiderivative_I, count_distribution,
    count_distribution_curve, inversion_points, joint_transform, parameter_jacobian, solve_b0_closed_form,
    time_of_parameter, transform_surface,
)
from validation_suite import check_diffusion_sign, check_parameter_time

CROSS_METHOD_TOL = 1e-8
"""Допуск между параметрическим решением и ОДУ, относительный"""


def _integral(constants: AbelConstants, lower: float, upper: float) -> float:
    return quad(lambda s: s / (s * s - s - constants.alpha1), lower, upper, epsabs=1e-13, epsrel=1e-13, limit=200)[0]


def test_base_case_discriminant(base_params):
    constants = abel_constants(base_params, 0.97)
    assert constants.discriminant == pytest.approx(0.2725, rel=1e-12)
    assert constants.discriminant == pytest.approx(1.0 + 4.0 * constants.alpha1, rel=1e-12)
    r_lo, r_hi = constants.roots
    assert r_lo * r_lo - r_lo - constants.alpha1 == pytest.approx(0.0, abs=1e-14)
    assert r_hi * r_hi - r_hi - constants.alpha1 == pytest.approx(0.0, abs=1e-14)


@pytest.mark.parametrize("constants, lower, upper", [
    (AbelConstants(alpha1=-0.181875, alpha2=0.0, u0=0.75, discriminant=0.2725), 0.3, 0.7),
    (AbelConstants(alpha1=-0.181875, alpha2=0.0, u0=0.75, discriminant=0.2725), 0.8, 2.0),
    (AbelConstants(alpha1=-0.5, alpha2=0.0, u0=1.0, discriminant=-1.0), -1.0, 2.0),
    (AbelConstants(alpha1=-0.25, alpha2=0.0, u0=1.0, discriminant=0.0), 1.0, 3.0),
], ids=["positive-between-roots", "positive-above-roots", "negative", "double-root"])
def test_antiderivative_branches(constants, lower, upper):
    """Разность первообразной совпадает с квадратурой на каждой ветви дискриминанта"""
    measured = antiderivative_I(upper, constants) - antiderivative_I(lower, constants)
    assert measured == pytest.approx(_integral(constants, lower, upper), abs=1e-10)


def test_antiderivative_pole(base_params):
    constants = abel_constants(base_params, 0.97)
    with pytest.raises(PoleError):
        antiderivative_I(constants.roots[1], constants)
    with pytest.raises(PoleError):
        antiderivative_I(0.5, AbelConstants(alpha1=-0.25, alpha2=0.0, u0=1.0, discriminant=0.0))


def test_time_of_parameter(base_params):
    """t(u0) = T, t(u) = T + интеграл dt/du от u0 до u"""
    constants = abel_constants(base_params, 0.97)
    assert constants.u0 == pytest.approx(0.75, rel=1e-15)
    assert time_of_parameter(constants.u0, constants, base_params, 12.0) == 12.0
    reference = 12.0 + quad(
        parameter_jacobian, constants.u0, 0.755, args=(constants, base_params), epsabs=1e-13, epsrel=1e-13
    )[0]
    assert time_of_parameter(0.755, constants, base_params, 12.0) == pytest.approx(reference, abs=1e-10)
    assert reference == pytest.approx(11.556373436138, abs=1e-9)


def test_parameter_jacobian_is_derivative_of_time(base_params):
    constants = abel_constants(base_params, 0.97)
    h = 1e-5
    for u in np.linspace(0.35, 0.7, 50):
        difference = (
            time_of_parameter(u + h, constants, base_params, 12.0)
            - time_of_parameter(u - h, constants, base_params, 12.0)
        ) / (2.0 * h)
        assert parameter_jacobian(u, constants, base_params) == pytest.approx(difference, rel=1e-6), f"u={u}"


def test_parameter_time_checks_pass(base_params):
    """Корень u* параметрического пути даёт t(u*) = 0 и через первообразную"""
    checks = check_parameter_time(base_params)
    assert len(checks) == 5
    failed = [check for check in checks if not check.passed]
    assert not failed, failed


@pytest.mark.parametrize("theta", [0.0, 0.5, 0.9, 0.97, 0.99])
@pytest.mark.parametrize("v", [0.0, 0.5])
@pytest.mark.parametrize("horizon", [1.0, 4.0, 12.0])
def test_closed_form_matches_ode(base_params, theta, v, horizon):
    """Параметрическое решение и ОДУ дают одно и то же преобразование"""
    closed = joint_transform(base_params, theta, v, horizon, method=BMethod.CLOSED_FORM).value
    ode = joint_transform(base_params, theta, v, horizon, method=BMethod.ODE).value
    assert closed == pytest.approx(ode, rel=CROSS_METHOD_TOL), f"theta={theta}, v={v}, T={horizon}"


@pytest.mark.parametrize("beta", [0.55, 1.5, 6.0], ids=["beta*delta=1.1", "beta*delta=3", "beta*delta=12"])
@pytest.mark.parametrize("theta", [0.5, 0.9, 0.97, 0.99])
@pytest.mark.parametrize("horizon", [1.0, 4.0, 12.0])
def test_closed_form_matches_ode_across_beta(base_params, beta, theta, horizon):
    """Совпадение методов и при beta * delta около 1, где корни r_lo и r_hi сближаются"""
    params = replace(base_params, beta=beta)
    assert not params.errors("model.common")
    closed = joint_transform(params, theta, 0.0, horizon, method=BMethod.CLOSED_FORM).value
    ode = joint_transform(params, theta, 0.0, horizon, method=BMethod.ODE).value
    assert closed == pytest.approx(ode, rel=CROSS_METHOD_TOL), f"beta={beta}, theta={theta}, T={horizon}"


def test_closed_form_path_meets_terminal_condition(base_params):
    bpath = solve_b0_closed_form(base_params, 0.97, 0.3, 4.0)
    assert bpath(4.0)[0] == pytest.approx(0.3, abs=1e-12)
    ode = joint_transform(base_params, 0.97, 0.3, 4.0, method=BMethod.ODE)
    assert bpath.b0 == pytest.approx(ode.b0, rel=1e-8)
    # B монотонна на [0, T]
    values = bpath(np.linspace(0.0, 4.0, 9))
    steps = np.diff(values)
    assert np.all(steps <= 1e-12) or np.all(steps >= -1e-12), values


def test_equilibrium_transform_is_one(base_params):
    """theta = 1, v = 0: B тождественно равна нулю"""
    result = joint_transform(base_params, 1.0, 0.0, 12.0)
    assert result.method is BMethod.CLOSED_FORM
    assert result.value == 1.0


def test_zero_horizon(base_params):
    result = joint_transform(base_params, 0.5, 0.7, 0.0, method=BMethod.ODE)
    assert result.value == pytest.approx(math.exp(-0.7 * base_params.lambda0), rel=1e-14)


def test_closed_form_needs_attracting_root():
    """При theta > 1 дискриминант может стать отрицательным: параметрический путь не применим"""
    params = ContagionParams(lambda0=1.5, delta=2.0, eta=1.5, sigma=0.4, beta=1.5)
    with pytest.raises(BracketError):
        solve_b0_closed_form(params, 1.5, 0.0, 4.0)


def test_diffusion_sign_against_ornstein_uhlenbeck(base_params):
    """Без скачков преобразование совпадает с формулой для процесса Орнштейна-Уленбека"""
    result = check_diffusion_sign(base_params, 12.0, DIFFUSION_SIGN)
    assert result.passed, result
    flipped = check_diffusion_sign(base_params, 12.0, -DIFFUSION_SIGN)
    assert not flipped.passed, "Перевёрнутый знак sigma^2 обязан ломать сверку"


def test_transform_surface_matches_pointwise(base_params):
    thetas = np.array([0.3, 0.97])
    horizons = np.array([2.0, 12.0])
    surface = transform_surface(base_params, thetas, horizons)
    assert surface.shape == (2, 2)
    for i, horizon in enumerate(horizons):
        for k, theta in enumerate(thetas):
            expected = joint_transform(base_params, float(theta), 0.0, float(horizon)).value
            assert surface[i, k].real == pytest.approx(expected, rel=1e-8)


def test_count_distribution_mass_and_pgf(base_params):
    dist = count_distribution(base_params, 12.0)
    assert dist.captured_mass >= 1.0 - 1e-6, dist.captured_mass
    assert np.all(dist.pmf >= 0.0)
    for theta in (0.5, 0.9, 0.99):
        assert dist.pgf(theta) == pytest.approx(joint_transform(base_params, theta, 0.0, 12.0).value, abs=1e-7)
    assert dist.mean() == pytest.approx(base_params.expected_count(12.0), rel=1e-5)


def test_count_distribution_curve_grows_n_max(base_params):
    """n_max расширяется, пока не набрана масса"""
    curve = count_distribution_curve(base_params, np.array([1.0, 12.0]), n_max=4)
    assert curve[0].n_max == curve[1].n_max > 4
    assert curve[1].captured_mass >= 1.0 - 1e-8
    assert curve[0].mean() < curve[1].mean()


def test_poisson_counts_match_scipy():
    process = PoissonProcess(2.25)
    dist = count_distribution(process, 4.0)
    n = np.arange(dist.pmf.size)
    np.testing.assert_allclose(dist.pmf, poisson.pmf(n, 9.0), atol=1e-9)
    assert joint_transform(process, 0.8, 0.0, 4.0).value == pytest.approx(math.exp(9.0 * (0.8 - 1.0)), rel=1e-9)


def test_dead_process_has_no_events(base_params):
    """Нулевые lambda0, eta и sigma: событий нет"""
    dead = replace(base_params, lambda0=0.0, eta=0.0, sigma=0.0)
    dist = count_distribution(dead, 12.0)
    assert dist.pmf[0] == pytest.approx(1.0, abs=1e-12)
    assert dist.pmf[1:].sum() == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("n_max, points", [(10, 64), (16, 64), (20, 128), (100, 512)])
def test_inversion_points(n_max, points):
    assert inversion_points(n_max) == points


def test_complex_theta_inside_unit_disk(base_params):
    """Производящая функция распределения ограничена по модулю единицей внутри круга"""
    theta = 0.9 * complex(math.cos(math.pi / 4), math.sin(math.pi / 4))
    result = joint_transform(base_params, theta, 0.0, 4.0)
    assert result.method is BMethod.ODE
    assert isinstance(result.value, complex)
    assert abs(result.value) <= 1.0


def test_transform_decreases_in_v(base_params):
    values = [joint_transform(base_params, 1.0, v, 12.0).value for v in (0.0, 1.0, 5.0, 50.0)]
    assert values[0] == 1.0
    assert all(left > right for left, right in zip(values, values[1:])), values
