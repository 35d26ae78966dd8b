"""
Совместное преобразование E[theta^N(T) exp(-v lambda(T)) | lambda0] процесса
динамического заражения и обращение производящей функции

Два способа вычисления B(t):
    closed_form: параметрическое решение уравнения Абеля второго рода,
    ode: численное интегрирование уравнения Риккати (в том числе при комплексном theta)
"""
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from loguru import logger
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from errors import BracketError, InversionError, PoleError, QuadratureError, SingularPathError
from model_core import ContagionParams
from model_enums import BMethod

POLE_TOL = 1e-12
"""Минимальное расстояние до полюса подынтегральной функции"""
DISCRIMINANT_TOL = 1e-12
"""Дискриминант меньше этого по модулю считается нулевым"""
EQUILIBRIUM_TOL = 1e-13
"""u0 ближе этого к корню: B(t) постоянна"""
ODE_RTOL = 1e-10
ODE_ATOL = 1e-12
QUAD_TOL = 1e-10
INVERSION_N_MAX_CAP = 4096
IMAG_RESIDUE_TOL = 1e-9
DIFFUSION_SIGN = -1.0
"""Знак члена sigma^2 B^2 / 2 в c'(t): c' = delta eta B - sigma^2 B^2 / 2"""


@dataclass(frozen=True)
class AbelConstants:
    """Константы параметрического решения

    alpha1 = -beta theta delta / (1 + beta delta)^2
    alpha2 = -beta theta / (1 + beta delta)
    u0 = (beta + v) delta / (1 + beta delta)
    discriminant = 1 + 4 alpha1
    """
    alpha1: float
    alpha2: float
    u0: float
    discriminant: float

    @property
    def sqrt_discriminant(self) -> float:
        return math.sqrt(abs(self.discriminant))

    @property
    def roots(self) -> tuple[float, float]:
        """Действительные корни s^2 - s - alpha1 (r_lo, r_hi), только при D > 0"""
        r_hi = 0.5 * (1.0 + self.sqrt_discriminant)
        # r_lo * r_hi = -alpha1, без вычитания близких чисел
        return -self.alpha1 / r_hi, r_hi


@dataclass(frozen=True)
class BPath:
    """Решение B(t) на [0, T]

    evaluator принимает массив моментов t и возвращает B(t)
    """
    b0: complex|float
    evaluator: Callable[[np.ndarray], np.ndarray]
    method: BMethod
    theta: complex|float
    v: float
    horizon: float
    integral_b: complex|float|None = None
    integral_b2: complex|float|None = None
    integral_extra: complex|float = 0.0
    parametric: "_ParametricRoute|None" = field(default=None, repr=False)

    def __call__(self, t: float|np.ndarray) -> np.ndarray:
        return self.evaluator(np.atleast_1d(np.asarray(t, dtype=float)))


@dataclass(frozen=True)
class TransformResult:
    """Значение exp(-B(0) lambda0 - (c(T) - c(0)))"""
    value: complex|float
    b0: complex|float
    c_delta: complex|float
    theta: complex|float
    v: float
    horizon: float
    method: BMethod


def abel_constants(params: ContagionParams, theta: float, v: float = 0.0) -> AbelConstants:
    """Константы alpha1, alpha2, u0 и дискриминант для заданных theta и v"""
    bd = params.beta * params.delta
    alpha1 = -params.beta * theta * params.delta / (1.0 + bd) ** 2
    alpha2 = -params.beta * theta / (1.0 + bd)
    u0 = (params.beta + v) * params.delta / (1.0 + bd)
    # 1 + 4 alpha1 без сокращения: ((1 - bd)^2 + 4 bd (1 - theta)) / (1 + bd)^2
    discriminant = ((1.0 - bd) ** 2 + 4.0 * bd * (1.0 - theta)) / (1.0 + bd) ** 2
    return AbelConstants(alpha1=alpha1, alpha2=alpha2, u0=u0, discriminant=discriminant)


def antiderivative_I(s: float, constants: AbelConstants) -> float:
    """Первообразная s / (s^2 - s - alpha1)

    I(s) = ln|s^2 - s - alpha1| / 2 + J(s) / 2, где J зависит от знака дискриминанта D:
        D < 0:  J = 2 / sqrt(-D) * arctan((2s - 1) / sqrt(-D))
        D > 0:  J = ln|(2s - 1 - sqrt(D)) / (2s - 1 + sqrt(D))| / sqrt(D)
        D = 0:  J = -2 / (2s - 1)

    Raises
    ------
    PoleError
        s ближе POLE_TOL к действительному корню знаменателя
    """
    disc = constants.discriminant
    quadratic = s * s - s - constants.alpha1
    if abs(disc) <= DISCRIMINANT_TOL:
        if abs(2.0 * s - 1.0) <= POLE_TOL:
            raise PoleError(f"s={s} совпадает с двойным корнем 1/2")
        j_term = -2.0 / (2.0 * s - 1.0)
    elif disc < 0:
        sq = math.sqrt(-disc)
        j_term = 2.0 / sq * math.atan((2.0 * s - 1.0) / sq)
    else:
        sq = math.sqrt(disc)
        r_lo, r_hi = constants.roots
        if min(abs(s - r_lo), abs(s - r_hi)) <= POLE_TOL:
            raise PoleError(f"s={s} в пределах {POLE_TOL} от корня ({r_lo}, {r_hi})")
        j_term = math.log(abs((2.0 * s - 1.0 - sq) / (2.0 * s - 1.0 + sq))) / sq
    return 0.5 * math.log(abs(quadratic)) + 0.5 * j_term


def parameter_jacobian(u: float, constants: AbelConstants, params: ContagionParams) -> float:
    """dt/du = u / (delta (u^2 - u - alpha1))"""
    return u / (params.delta * (u * u - u - constants.alpha1))


def time_of_parameter(
        u: float,
        constants: AbelConstants,
        params: ContagionParams,
        horizon: float
    ) -> float:
    """t(u) = T - (I(u0) - I(u)) / delta; t(u0) = T"""
    if u == constants.u0:
        return horizon
    return horizon - (antiderivative_I(constants.u0, constants) - antiderivative_I(u, constants)) / params.delta


@dataclass(frozen=True)
class _ParametricRoute:
    """Параметрический путь в координате x = -ln|u - r_hi|

    u(x) = r_hi + direction exp(-x); при x -> бесконечности t -> минус бесконечность,
    а dt/dx = -u / (delta (u - r_lo)) остаётся ограниченной
    """
    params: ContagionParams
    constants: AbelConstants
    horizon: float
    r_lo: float
    r_hi: float
    direction: float
    x0: float
    x_star: float = math.nan

    @property
    def kappa(self) -> float:
        return (1.0 + self.params.delta * self.params.beta) / self.params.delta

    @property
    def sq(self) -> float:
        return self.r_hi - self.r_lo

    def gap(self, x: float|np.ndarray) -> float|np.ndarray:
        """u(x) - r_lo, всегда положительна"""
        return self.sq + self.direction * np.exp(-x)

    def u_of(self, x: float|np.ndarray) -> float|np.ndarray:
        return self.r_hi + self.direction * np.exp(-x)

    def b_of(self, x: float|np.ndarray) -> float|np.ndarray:
        """B = kappa u - beta"""
        return (self.kappa * self.r_hi - self.params.beta) + self.kappa * self.direction * np.exp(-x)

    def t_of(self, x: float|np.ndarray) -> float|np.ndarray:
        a_hi = self.r_hi / self.sq
        a_lo = self.r_lo / self.sq
        # I(u0) - I(u(x)) через ln|u - r_hi| = -x
        diff = a_hi * (x - self.x0) - a_lo * (np.log(self.gap(self.x0)) - np.log(self.gap(x)))
        return self.horizon - diff / self.params.delta

    def dt_dx_abs(self, x: float|np.ndarray) -> float|np.ndarray:
        return self.u_of(x) / (self.params.delta * self.gap(x))

    def x_of_t(self, t: float) -> float:
        """Обратное отображение t -> x на [0, T]"""
        if t >= self.horizon:
            return self.x0
        if t <= 0.0:
            return self.x_star
        return brentq(lambda x: self.t_of(x) - t, self.x0, self.x_star, xtol=1e-14, maxiter=200)


def _parametric_route(params: ContagionParams, theta: float, v: float, horizon: float) -> _ParametricRoute|None:
    """Построение параметрического пути и поиск x* с t(x*) = 0

    Возвращает None, если u0: положение равновесия (B постоянна)
    """
    constants = abel_constants(params, theta, v)
    if constants.discriminant <= DISCRIMINANT_TOL:
        raise BracketError(
            f"Дискриминант {constants.discriminant:.3g} <= 0: нет притягивающего корня, "
            f"параметрическое решение для theta={theta} не применимо"
        )
    r_lo, r_hi = constants.roots
    offset = constants.u0 - r_hi
    if abs(offset) <= EQUILIBRIUM_TOL:
        return None
    route = _ParametricRoute(
        params=params,
        constants=constants,
        horizon=horizon,
        r_lo=r_lo,
        r_hi=r_hi,
        direction=math.copysign(1.0, offset),
        x0=-math.log(abs(offset)),
    )
    # Двигаемся от u0 в сторону убывания t, шаг растёт геометрически
    lower, step = route.x0, 1.0
    upper = route.x0 + step
    while route.t_of(upper) > 0.0:
        lower = upper
        step *= 2.0
        upper = route.x0 + step
        if step > 2.0 ** 60:
            raise BracketError(
                f"Смена знака t(u) не найдена на интервале x в [{route.x0}, {upper}]"
            )
    x_star = brentq(route.t_of, lower, upper, xtol=1e-14, maxiter=200)
    logger.debug(f"Параметрический путь: x0={route.x0:.6g}, x*={x_star:.6g}, t(x*)={route.t_of(x_star):.3g}")
    return replace(route, x_star=x_star)


def solve_b0_closed_form(
        params: ContagionParams,
        theta: float,
        v: float,
        horizon: float
    ) -> BPath:
    """B(0) из параметрического решения B(t(u)) = (1 + delta beta) u / delta - beta

    Корень u* уравнения t(u*) = 0 ищется вилкой от u0 в сторону убывания t
    """
    route = _parametric_route(params, theta, v, horizon)
    if route is None:
        # u0: корень квадратного трёхчлена: B(t) == v
        return BPath(
            b0=v,
            evaluator=lambda t: np.full(t.shape, float(v)),
            method=BMethod.CLOSED_FORM,
            theta=theta,
            v=v,
            horizon=horizon,
            integral_b=v * horizon,
            integral_b2=v * v * horizon,
        )

    def evaluator(t: np.ndarray) -> np.ndarray:
        return np.array([route.b_of(route.x_of_t(float(t_item))) for t_item in t])

    return BPath(
        b0=float(route.b_of(route.x_star)),
        evaluator=evaluator,
        method=BMethod.CLOSED_FORM,
        theta=theta,
        v=v,
        horizon=horizon,
        parametric=route,
    )


class EventProcess(ABC):
    """Процесс событий с аффинным преобразованием

    Преобразование имеет вид exp(-B(0) lambda0 - (c(T) - c(0))), где
        B'(t) = b_rate(B, theta), B(T) = v,
        c'(t) = drift_level B + sign sigma^2 B^2 / 2 + extra_rate(B, theta)
    """
    lambda0: float
    drift_level: float
    sigma: float
    pole: float|None = None
    """Значение -pole недопустимо для B (полюс beta / (beta + B))"""

    @abstractmethod
    def b_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        ...

    def extra_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        return np.zeros_like(b)

    @abstractmethod
    def expected_count(self, t: float) -> float:
        ...


class DynamicContagionProcess(EventProcess):
    """Процесс динамического заражения с экспоненциальными скачками"""
    def __init__(self, params: ContagionParams):
        self.params = params
        self.lambda0 = params.lambda0
        self.drift_level = params.delta * params.eta
        self.sigma = params.sigma
        self.pole = params.beta

    def b_rate(self, b: np.ndarray, theta: np.ndarray) -> np.ndarray:
        beta = self.params.beta
        return self.params.delta * b + theta * beta / (beta + b) - 1.0

    def expected_count(self, t: float) -> float:
        return float(self.params.expected_count(t))

    def __repr__(self) -> str:
        return f"DynamicContagionProcess({self.params})"


def as_process(process: "EventProcess|ContagionParams") -> EventProcess:
    if isinstance(process, EventProcess):
        return process
    return DynamicContagionProcess(process)


@dataclass(frozen=True)
class _RiccatiSolution:
    """Решение во времени до погашения tau

    Либо раздельные интегралы B, B^2 и extra (integrals), либо сразу c(T) - c(0) (c)
    """
    horizons: np.ndarray
    b: np.ndarray
    c: np.ndarray|None = None
    integrals: tuple[np.ndarray, np.ndarray, np.ndarray]|None = None
    dense: object|None = None

    def c_delta(self, process: EventProcess, diffusion_sign: float) -> np.ndarray:
        if self.c is not None:
            return self.c
        integral_b, integral_b2, integral_extra = self.integrals
        return (
            process.drift_level * integral_b
            + diffusion_sign * 0.5 * process.sigma ** 2 * integral_b2
            + integral_extra
        )


def _integrate_riccati(
        process: EventProcess,
        thetas: np.ndarray,
        horizons: np.ndarray,
        v: float = 0.0,
        *,
        diffusion_sign: float|None = None,
        dense_output: bool = False
    ) -> _RiccatiSolution:
    """Интегрирование системы для всех theta сразу по времени до погашения tau

    Модель однородна по времени, поэтому B в момент 0 при сроке h есть решение
    в tau = h, и одно интегрирование даёт ответ для всех сроков.
    При заданном diffusion_sign копится сразу c, иначе три интеграла по отдельности.
    """
    thetas = np.asarray(thetas, dtype=complex)
    horizons = np.asarray(horizons, dtype=float)
    size = thetas.size
    blocks = 4 if diffusion_sign is None else 2
    t_max = float(horizons.max()) if horizons.size else 0.0
    y0 = np.zeros(blocks * size, dtype=complex)
    y0[:size] = v

    if t_max <= 0.0:
        zeros = np.zeros((horizons.size, size), dtype=complex)
        if blocks == 2:
            return _RiccatiSolution(horizons, zeros + v, c=zeros)
        return _RiccatiSolution(horizons, zeros + v, integrals=(zeros, zeros, zeros))

    half_var = 0.5 * process.sigma ** 2

    def rhs(_tau: float, y: np.ndarray) -> np.ndarray:
        b = y[:size]
        if blocks == 2:
            c_rate = process.drift_level * b + diffusion_sign * half_var * b * b + process.extra_rate(b, thetas)
            return np.concatenate((-process.b_rate(b, thetas), c_rate))
        return np.concatenate((
            -process.b_rate(b, thetas),
            b,
            b * b,
            process.extra_rate(b, thetas),
        ))

    events = None
    if process.pole is not None:
        pole = process.pole

        def near_pole(_tau: float, y: np.ndarray) -> float:
            return float(np.min(np.abs(pole + y[:size]))) - 1e-8 * pole
        near_pole.terminal = True
        events = near_pole

    eval_points = np.unique(horizons)
    sol = solve_ivp(
        rhs,
        (0.0, t_max),
        y0,
        method="DOP853",
        t_eval=eval_points,
        rtol=ODE_RTOL,
        atol=ODE_ATOL,
        events=events,
        dense_output=dense_output,
    )
    if sol.status == 1:
        raise SingularPathError(
            f"B(t) подошла к полюсу -beta={-process.pole} при tau={sol.t_events[0][0]:.6g}"
        )
    if sol.status != 0:
        raise SingularPathError(f"Интегрирование B(t) не завершено: {sol.message}")

    # Сроки могут повторяться, раскладываем обратно
    index = np.searchsorted(eval_points, horizons)
    values = sol.y[:, index].T
    if blocks == 2:
        return _RiccatiSolution(horizons, values[:, :size], c=values[:, size:], dense=sol.sol)
    return _RiccatiSolution(
        horizons,
        values[:, :size],
        integrals=(values[:, size:2 * size], values[:, 2 * size:3 * size], values[:, 3 * size:]),
        dense=sol.sol,
    )


def solve_b_ode(
        params: "ContagionParams|EventProcess",
        theta: complex|float,
        v: float,
        horizon: float
    ) -> BPath:
    """B(t) численным интегрированием от t = T к t = 0

    Поддерживает комплексное theta, что нужно для обращения производящей функции
    """
    process = as_process(params)
    is_complex = isinstance(theta, complex)
    solution = _integrate_riccati(process, np.array([theta]), np.array([horizon]), v, dense_output=True)
    dense = solution.dense

    def evaluator(t: np.ndarray) -> np.ndarray:
        if dense is None:
            values = np.full(t.shape, v, dtype=complex)
        else:
            values = np.asarray(dense(horizon - t))[0]
        return values if is_complex else values.real

    b0 = complex(solution.b[0, 0])
    integral_b, integral_b2, integral_extra = (complex(item[0, 0]) for item in solution.integrals)
    return BPath(
        b0=b0 if is_complex else b0.real,
        evaluator=evaluator,
        method=BMethod.ODE,
        theta=theta,
        v=v,
        horizon=horizon,
        integral_b=integral_b,
        integral_b2=integral_b2,
        integral_extra=integral_extra,
    )




def _quad_checked(func: Callable[[float], float], lower: float, upper: float) -> float:
    value, abserr, info = quad(func, lower, upper, epsabs=QUAD_TOL * 1e-2, epsrel=1e-12, limit=400, full_output=True)[:3]
    if abserr > QUAD_TOL:
        raise QuadratureError(
            f"Квадратура на [{lower:.6g}, {upper:.6g}] не сошлась: оценка ошибки {abserr:.3g}, "
            f"вычислений {info.get('neval')}"
        )
    return value


def c_delta(
        bpath: BPath,
        params: "ContagionParams|EventProcess",
        *,
        diffusion_sign: float = DIFFUSION_SIGN
    ) -> complex|float:
    """c(T) - c(0) = интеграл по [0, T] от (delta eta B - sigma^2 B^2 / 2)

    Для параметрического пути интеграл берётся в координате x с ограниченным якобианом,
    для ОДУ: из дополнительных переменных состояния
    """
    process = as_process(params)
    route = bpath.parametric
    if route is not None:
        integral_b = _quad_checked(lambda x: route.b_of(x) * route.dt_dx_abs(x), route.x0, route.x_star)
        integral_b2 = _quad_checked(lambda x: route.b_of(x) ** 2 * route.dt_dx_abs(x), route.x0, route.x_star)
        extra = 0.0
    else:
        integral_b, integral_b2 = bpath.integral_b, bpath.integral_b2
        extra = bpath.integral_extra
    value = (
        process.drift_level * integral_b
        + diffusion_sign * 0.5 * process.sigma ** 2 * integral_b2
        + extra
    )
    if bpath.method is BMethod.ODE and not isinstance(bpath.theta, complex):
        return complex(value).real
    return value


def joint_transform(
        params: "ContagionParams|EventProcess",
        theta: complex|float,
        v: float,
        horizon: float,
        *,
        method: BMethod|None = None,
        diffusion_sign: float = DIFFUSION_SIGN
    ) -> TransformResult:
    """E[theta^N(T) exp(-v lambda(T)) | lambda0] = exp(-B(0) lambda0 - (c(T) - c(0)))

    Без явного method: параметрическое решение для действительного theta из [0, 1],
    ОДУ для комплексного
    """
    process = as_process(params)
    is_real = not isinstance(theta, complex) or theta.imag == 0.0
    if method is None:
        real_in_range = is_real and 0.0 <= complex(theta).real <= 1.0
        method = BMethod.CLOSED_FORM if real_in_range and isinstance(process, DynamicContagionProcess) else BMethod.ODE
    if method is BMethod.CLOSED_FORM:
        bpath = solve_b0_closed_form(process.params, float(complex(theta).real), v, horizon)
    else:
        bpath = solve_b_ode(process, theta, v, horizon)
    c_value = c_delta(bpath, process, diffusion_sign=diffusion_sign)
    value = np.exp(-bpath.b0 * process.lambda0 - c_value)
    if is_real:
        value = float(np.real(value))
    return TransformResult(
        value=value,
        b0=bpath.b0,
        c_delta=c_value,
        theta=theta,
        v=v,
        horizon=horizon,
        method=method,
    )


def transform_surface(
        process: "EventProcess|ContagionParams",
        thetas: np.ndarray,
        horizons: np.ndarray,
        v: float = 0.0,
        *,
        diffusion_sign: float = DIFFUSION_SIGN
    ) -> np.ndarray:
    """Преобразование на сетке сроков x значений theta, форма (len(horizons), len(thetas))"""
    process = as_process(process)
    solution = _integrate_riccati(process, thetas, horizons, v, diffusion_sign=diffusion_sign)
    exponent = -solution.b * process.lambda0 - solution.c_delta(process, diffusion_sign)
    return np.exp(exponent)


@dataclass(frozen=True)
class CountDistribution:
    """Распределение P(N(t) = n), n = 0..n_max"""
    horizon: float
    pmf: np.ndarray
    captured_mass: float
    imag_residue: float
    points: int

    @property
    def n_max(self) -> int:
        return self.pmf.size - 1

    @property
    def deficit(self) -> float:
        return max(0.0, 1.0 - self.captured_mass)

    def mean(self) -> float:
        return float(np.dot(np.arange(self.pmf.size), self.pmf))

    def pgf(self, theta: float) -> float:
        return float(np.polynomial.polynomial.polyval(theta, self.pmf))


def inversion_points(n_max: int) -> int:
    """Наименьшая степень двойки не меньше max(64, 4 n_max)"""
    need = max(64, 4 * n_max)
    return 1 << (need - 1).bit_length()


def count_distribution_curve(
        process: "EventProcess|ContagionParams",
        horizons: np.ndarray,
        n_max: int|None = None,
        tail_tol: float = 1e-8,
        *,
        diffusion_sign: float = DIFFUSION_SIGN
    ) -> list[CountDistribution]:
    """Распределения числа событий на нескольких сроках

    Обращение Фурье на единичной окружности; n_max подбирается по наибольшему сроку,
    так как число событий не убывает со временем
    """
    process = as_process(process)
    horizons = np.atleast_1d(np.asarray(horizons, dtype=float))
    t_max = float(horizons.max())
    if n_max is None:
        mean = process.expected_count(t_max)
        n_max = max(16, int(math.ceil(2.0 * mean + 10.0 * math.sqrt(mean + 1.0))))
    last = int(np.argmax(horizons))
    while True:
        points = inversion_points(n_max)
        roots = np.exp(2j * np.pi * np.arange(points) / points)
        surface = transform_surface(process, roots, horizons, diffusion_sign=diffusion_sign)
        coefficients = np.fft.fft(surface, axis=1) / points
        head = coefficients[:, :n_max + 1]
        captured = float(np.sum(np.clip(head[last].real, 0.0, 1.0)))
        logger.debug(f"Обращение: n_max={n_max}, точек={points}, масса={captured:.12f} при t={t_max:g}")
        if captured >= 1.0 - tail_tol:
            break
        if n_max >= INVERSION_N_MAX_CAP:
            raise InversionError(
                f"Масса {captured:.10f} < 1 - {tail_tol:g} при n_max={n_max} (предел {INVERSION_N_MAX_CAP})"
            )
        n_max = min(2 * n_max, INVERSION_N_MAX_CAP)

    result = []
    for row, horizon in zip(head, horizons):
        residue = float(np.max(np.abs(row.imag)))
        if residue > IMAG_RESIDUE_TOL:
            logger.warning(f"Мнимый остаток обращения {residue:.3g} при t={horizon:g}")
        pmf = np.clip(row.real, 0.0, 1.0)
        result.append(CountDistribution(
            horizon=float(horizon),
            pmf=pmf,
            captured_mass=float(pmf.sum()),
            imag_residue=residue,
            points=points,
        ))
    return result


def count_distribution(
        process: "EventProcess|ContagionParams",
        horizon: float,
        n_max: int = 64,
        tail_tol: float = 1e-8,
        *,
        diffusion_sign: float = DIFFUSION_SIGN
    ) -> CountDistribution:
    """P(N(T) = n), n = 0..n_max, с автоматическим расширением n_max"""
    return count_distribution_curve(
        process, np.array([horizon]), n_max, tail_tol, diffusion_sign=diffusion_sign
    )[0]
